//! Runs one path: the trampoline between native transactions and the
//! interpreter, with abort recovery.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::expr::SymExpr;
use crate::interp::{apply_pins, ctx_switch_in, ctx_switch_out, interp_block, live_at, BranchTarget, InterpOutcome};
use crate::isa::Program;
use crate::machine::MachineState;
use crate::path::{PathId, PathState, PathStats, PathStatus};
use crate::shadow::{ShadowState, DEFAULT_SENTINEL};
use crate::solver::{ConstraintSet, Solver, DEFAULT_ENUM_LIMIT};
use crate::txn::{stride_recover, AbortReason, Attempt, BlockOutcome, RecoveryDriver, StrideConfig, Transaction};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Native transactions wherever possible.
    Speculative,
    /// Every block through the interpreter.
    InterpretAll,
}

/// Abort the `block`-th block (1-based) of the `txn`-th transaction (1-based,
/// counted per path).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InjectAt {
    pub txn: u64,
    pub block: u32,
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub mode: Mode,
    pub stride: StrideConfig,
    pub sentinel: u16,
    pub enum_limit: usize,
    pub inject: Vec<InjectAt>,
    /// A path that executes more blocks than this is stopped with an error.
    pub max_blocks_per_path: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            mode: Mode::Speculative,
            stride: StrideConfig::default(),
            sentinel: DEFAULT_SENTINEL,
            enum_limit: DEFAULT_ENUM_LIMIT,
            inject: Vec::new(),
            max_blocks_per_path: 50_000_000,
        }
    }
}

/// Hooks for checking transactions from the outside. Snapshots are only
/// taken when `wants_snapshots` is true.
pub trait Observer {
    fn wants_snapshots(&self) -> bool {
        false
    }
    /// `entry` is the state when the transaction began, `exit` the state
    /// it committed.
    fn txn_committed(&mut self, _entry: &MachineState, _exit: &MachineState, _blocks: u32, _shadow: &ShadowState) {}
    fn txn_aborted(&mut self, _entry: &MachineState, _restored: &MachineState, _reason: AbortReason) {}
}

pub struct NoObserver;

impl Observer for NoObserver {}

/// Why `Engine::run` returned.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PathEvent {
    Halted,
    Branch(Vec<(SymExpr, BranchTarget)>),
    Infeasible,
    Errored(String),
    /// `max_blocks_per_path` reached.
    OutOfBudget,
}

pub struct Engine<'p> {
    pub prog: &'p Program,
    pub cfg: EngineConfig,
}

enum Stop {
    Event(PathEvent),
    /// Native execution is not possible here; let the main loop decide.
    Yield,
}

struct Driver<'e, 'p, 'x, 's> {
    engine: &'e Engine<'p>,
    path: &'x mut PathState,
    solver: &'x mut Solver<'s>,
    obs: &'x mut dyn Observer,
}

impl RecoveryDriver for Driver<'_, '_, '_, '_> {
    type Stop = Stop;

    fn attempt(&mut self, stride: u32) -> Result<Attempt, Stop> {
        self.engine.settle(self.path);
        if !self.engine.native_ok(self.path) {
            return Err(Stop::Yield);
        }
        self.path.stats.retry_txns += 1;
        self.path.stats.retry_strides.push(stride);
        Ok(self.engine.transaction(self.path, stride, self.obs))
    }

    fn interpret(&mut self, blocks: u32) -> Result<(), Stop> {
        for _ in 0..blocks {
            self.engine.settle(self.path);
            if self.path.machine.halted {
                return Err(Stop::Yield);
            }
            if let Some(ev) = self.engine.interpret(self.path, self.solver) {
                return Err(Stop::Event(ev));
            }
        }
        Ok(())
    }
}

impl<'p> Engine<'p> {
    pub fn new(prog: &'p Program, cfg: EngineConfig) -> Engine<'p> {
        Engine { prog, cfg }
    }

    /// The root path, with `.symbolic` regions already made symbolic.
    pub fn root(&self) -> PathState {
        let mut machine = self.prog.initial_state();
        let mut shadow = ShadowState::new(self.cfg.sentinel);
        let mut constraints = ConstraintSet::new();
        for (a, l) in &self.prog.symbolic {
            shadow.make_symbolic_range(&mut machine.mem, *a, *l).expect("symbolic region is mapped");
        }
        for (v, k) in shadow.drain_sibling_constraints() {
            constraints.pin_sibling(v, k);
        }
        PathState {
            id: PathId::root(),
            parent: None,
            machine,
            ctx: None,
            shadow,
            constraints,
            status: PathStatus::Runnable,
            depth: 0,
            stats: PathStats::default(),
            txn_count: 0,
            blocks_executed: 0,
        }
    }

    /// Normalizes the pc, kills dead flags, applies new pins and leaves the
    /// interpreter when nothing symbolic is live. The same in every mode.
    fn settle(&self, path: &mut PathState) {
        let m = &mut path.machine;
        m.normalize(self.prog);
        let live = live_at(m, self.prog);
        m.flags.kill_except(live);
        if let Some(ctx) = path.ctx.as_mut() {
            apply_pins(ctx, m, &path.constraints);
            if ctx_switch_out(ctx, m, self.prog).is_ok() {
                path.ctx = None;
            }
        }
    }

    fn native_ok(&self, path: &PathState) -> bool {
        self.cfg.mode == Mode::Speculative
            && path.ctx.is_none()
            && !path.machine.halted
            && !self.prog.block(path.machine.pc.block).interp_only
    }

    /// Opens a transaction of `stride` blocks at the current block start.
    fn transaction(&self, path: &mut PathState, stride: u32, obs: &mut dyn Observer) -> Attempt {
        path.txn_count += 1;
        let index = path.txn_count;
        let inject = self.cfg.inject.iter().find(|i| i.txn == index).map(|i| i.block);
        let entry = obs.wants_snapshots().then(|| path.machine.clone());
        let mut txn = Transaction::begin(&path.machine, stride, &self.cfg.stride, self.cfg.sentinel, index, inject)
            .expect("transactions begin at a block start");
        loop {
            match txn.run_block(&mut path.machine, self.prog) {
                BlockOutcome::BlockDone => {
                    let m = &mut path.machine;
                    m.normalize(self.prog);
                    let live = live_at(m, self.prog);
                    m.flags.kill_except(live);
                    if txn.is_full() {
                        break;
                    }
                    if m.halted || self.prog.block(m.pc.block).interp_only {
                        txn.close_early();
                        break;
                    }
                }
                BlockOutcome::Abort(reason) => {
                    path.stats.blocks_rolled_back += txn.completed_blocks() as u64;
                    txn.abort(&mut path.machine);
                    path.stats.txn_aborts.count(&reason);
                    if let Some(e) = &entry {
                        obs.txn_aborted(e, &path.machine, reason);
                    }
                    return Attempt::Aborted(reason);
                }
            }
        }
        let blocks = txn.commit().expect("commit after a clean final check");
        path.stats.txn_commits += 1;
        path.stats.blocks_native += blocks as u64;
        path.blocks_executed += blocks as u64;
        if let Some(e) = &entry {
            obs.txn_committed(e, &path.machine, blocks, &path.shadow);
        }
        Attempt::Committed
    }

    /// Interprets the block at pc. `None` means execution continues.
    fn interpret(&self, path: &mut PathState, solver: &mut Solver<'_>) -> Option<PathEvent> {
        let cs = &mut path.constraints;
        let ctx = path.ctx.get_or_insert_with(|| ctx_switch_in(&path.machine, cs));
        path.stats.blocks_interpreted += 1;
        path.blocks_executed += 1;
        match interp_block(self.prog, &mut path.machine, ctx, &mut path.shadow, cs, solver) {
            Ok(InterpOutcome::Continue) | Ok(InterpOutcome::Halt) => None,
            Ok(InterpOutcome::SymbolicBranch(t)) => Some(PathEvent::Branch(t)),
            Ok(InterpOutcome::Infeasible) => Some(PathEvent::Infeasible),
            Err(e) => Some(PathEvent::Errored(e.to_string())),
        }
    }

    /// Runs `path` until it halts, errors, becomes infeasible or reaches a
    /// symbolic branch.
    pub fn run(&self, path: &mut PathState, solver: &mut Solver<'_>, obs: &mut dyn Observer) -> PathEvent {
        let before = solver.stats;
        let ev = self.run_inner(path, solver, obs);
        path.stats.solver_queries += solver.stats.queries - before.queries;
        path.stats.enum_assignments += solver.stats.enum_assignments - before.enum_assignments;
        ev
    }

    fn run_inner(&self, path: &mut PathState, solver: &mut Solver<'_>, obs: &mut dyn Observer) -> PathEvent {
        loop {
            self.settle(path);
            if path.machine.halted {
                return PathEvent::Halted;
            }
            if path.blocks_executed >= self.cfg.max_blocks_per_path {
                return PathEvent::OutOfBudget;
            }
            if !self.native_ok(path) {
                if let Some(ev) = self.interpret(path, solver) {
                    return ev;
                }
                continue;
            }
            if let Attempt::Aborted(reason) = self.transaction(path, self.cfg.stride.stride_max, obs) {
                let mut d = Driver { engine: self, path: &mut *path, solver: &mut *solver, obs: &mut *obs };
                match stride_recover(reason, &self.cfg.stride, &mut d) {
                    Ok(()) | Err(Stop::Yield) => {}
                    Err(Stop::Event(ev)) => return ev,
                }
            }
        }
    }
}
