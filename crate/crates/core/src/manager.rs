//! Forking on symbolic branches and scheduling of suspended paths.

use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::engine::{Engine, EngineConfig, NoObserver, Observer, PathEvent};
use crate::expr::SymExpr;
use crate::interp::BranchTarget;
use crate::isa::Program;
use crate::machine::Pc;
use crate::path::{PathId, PathState, PathStats, PathStatus};
use crate::report::Exploration;
use crate::solver::{SatResult, Solver};

pub const FORK_BUDGET_MSG: &str = "fork budget exhausted";
pub const BLOCK_BUDGET_MSG: &str = "block budget exhausted";
pub const INVALID_TARGET_MSG: &str = "invalid control transfer";

pub type PriorityFn = Arc<dyn Fn(&PathState) -> i64 + Send + Sync>;

#[derive(Clone)]
pub enum Strategy {
    Dfs,
    Bfs,
    /// Highest value first, ties by lowest id.
    Priority(PriorityFn),
}

impl fmt::Debug for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Dfs => f.write_str("Dfs"),
            Strategy::Bfs => f.write_str("Bfs"),
            Strategy::Priority(_) => f.write_str("Priority(..)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ManagerConfig {
    pub strategy: Strategy,
    /// Paths released at once.
    pub max_live_states: usize,
    /// Branch points that may fork before the run is cut short.
    pub max_total_forks: u64,
    pub worker_count: usize,
}

impl Default for ManagerConfig {
    fn default() -> Self {
        ManagerConfig { strategy: Strategy::Dfs, max_live_states: 64, max_total_forks: 1_000_000, worker_count: 1 }
    }
}

impl ManagerConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.worker_count == 0 {
            return Err("worker count must be at least 1");
        }
        if self.max_live_states == 0 || self.max_total_forks == 0 {
            return Err("caps must be positive");
        }
        Ok(())
    }
}

/// What a worker hands back for a path it ran.
#[derive(Debug)]
pub enum Submission {
    Terminal(PathState),
    Forked { parent: PathState, children: Vec<PathState> },
}

/// Turns the event a path stopped on into a submission. Runs on the worker.
pub fn resolve(mut path: PathState, ev: PathEvent, solver: &mut Solver<'_>) -> Submission {
    match ev {
        PathEvent::Halted => path.status = PathStatus::Completed,
        PathEvent::Infeasible => path.status = PathStatus::Infeasible,
        PathEvent::Errored(m) => path.status = PathStatus::Errored(m),
        PathEvent::OutOfBudget => path.status = PathStatus::Errored(BLOCK_BUDGET_MSG.to_string()),
        PathEvent::Branch(targets) => {
            let children = fork_on_branch(&mut path, &targets, solver);
            return Submission::Forked { parent: path, children };
        }
    }
    Submission::Terminal(path)
}

/// One child per target with its condition conjoined. Unsatisfiable
/// children are `Infeasible`, satisfiable ones with an invalid target are
/// `Errored`, the rest `Suspended`. Solver work is charged to the parent.
pub fn fork_on_branch(parent: &mut PathState, targets: &[(SymExpr, BranchTarget)], solver: &mut Solver<'_>) -> Vec<PathState> {
    let before = solver.stats;
    let mut out = Vec::with_capacity(targets.len());
    for (i, (cond, target)) in targets.iter().enumerate() {
        let mut c = parent.clone();
        c.id = parent.id.child(i as u32);
        c.parent = Some(parent.id.clone());
        c.depth = parent.depth + 1;
        c.stats = PathStats::default();
        c.constraints.assert(cond.clone());
        let feasible = !matches!(solver.check_sat(&c.constraints), SatResult::Unsat);
        c.status = match (feasible, target) {
            (false, _) => PathStatus::Infeasible,
            (true, BranchTarget::Invalid) => PathStatus::Errored(INVALID_TARGET_MSG.to_string()),
            (true, BranchTarget::Block(b)) => {
                c.machine.pc = Pc { block: *b, index: 0 };
                PathStatus::Suspended
            }
        };
        out.push(c);
    }
    parent.stats.solver_queries += solver.stats.queries - before.queries;
    parent.stats.enum_assignments += solver.stats.enum_assignments - before.enum_assignments;
    out
}

#[derive(Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Schedule {
    Run(PathState),
    /// Nothing releasable until a running path is submitted.
    Wait,
    Done,
}

/// The single scheduling authority. Released paths are owned by workers
/// until they are submitted back.
pub struct Manager {
    cfg: ManagerConfig,
    suspended: Vec<PathState>,
    running: usize,
    terminal: Vec<PathState>,
    totals: PathStats,
    forks: u64,
    partial: bool,
    peak_live: usize,
    /// `blocks_executed` of each running path when it was released.
    released: BTreeMap<PathId, u64>,
    blocks_executed: u64,
}

impl Manager {
    pub fn new(cfg: ManagerConfig, root: PathState) -> Manager {
        Manager {
            cfg,
            suspended: alloc::vec![root],
            running: 0,
            terminal: Vec::new(),
            totals: PathStats::default(),
            forks: 0,
            partial: false,
            peak_live: 0,
            released: BTreeMap::new(),
            blocks_executed: 0,
        }
    }

    pub fn running(&self) -> usize {
        self.running
    }

    pub fn suspended(&self) -> usize {
        self.suspended.len()
    }

    pub fn peak_live(&self) -> usize {
        self.peak_live
    }

    fn pick(&self) -> usize {
        let s = &self.suspended;
        let better = |a: &PathState, b: &PathState| -> bool {
            match &self.cfg.strategy {
                Strategy::Dfs => a.depth > b.depth || (a.depth == b.depth && a.id < b.id),
                Strategy::Bfs => a.depth < b.depth || (a.depth == b.depth && a.id < b.id),
                Strategy::Priority(f) => {
                    let (pa, pb) = (f(a), f(b));
                    pa > pb || (pa == pb && a.id < b.id)
                }
            }
        };
        let mut best = 0;
        for i in 1..s.len() {
            if better(&s[i], &s[best]) {
                best = i;
            }
        }
        best
    }

    pub fn schedule(&mut self) -> Schedule {
        if self.suspended.is_empty() {
            return if self.running == 0 { Schedule::Done } else { Schedule::Wait };
        }
        if self.running >= self.cfg.max_live_states {
            return Schedule::Wait;
        }
        let i = self.pick();
        let mut p = self.suspended.swap_remove(i);
        p.status = PathStatus::Runnable;
        self.running += 1;
        self.released.insert(p.id.clone(), p.blocks_executed);
        self.peak_live = self.peak_live.max(self.running);
        Schedule::Run(p)
    }

    fn finish_path(&mut self, p: PathState) {
        debug_assert!(p.status.is_terminal());
        self.totals.add(&p.stats);
        self.terminal.push(p);
    }

    pub fn submit(&mut self, s: Submission) {
        debug_assert!(self.running > 0);
        self.running -= 1;
        let p = match &s {
            Submission::Terminal(p) => p,
            Submission::Forked { parent, .. } => parent,
        };
        let start = self.released.remove(&p.id).expect("submitted path was released");
        self.blocks_executed += p.blocks_executed - start;
        match s {
            Submission::Terminal(p) => {
                if matches!(&p.status, PathStatus::Errored(m) if m == BLOCK_BUDGET_MSG) {
                    self.partial = true;
                }
                self.finish_path(p);
            }
            Submission::Forked { mut parent, children } => {
                if self.forks >= self.cfg.max_total_forks {
                    self.partial = true;
                    parent.status = PathStatus::Errored(FORK_BUDGET_MSG.to_string());
                    self.finish_path(parent);
                    return;
                }
                self.forks += 1;
                self.totals.add(&parent.stats);
                for c in children {
                    if c.status.is_terminal() {
                        self.finish_path(c);
                    } else {
                        self.suspended.push(c);
                    }
                }
            }
        }
    }

    pub fn finish(mut self) -> Exploration {
        debug_assert_eq!(self.running, 0);
        self.terminal.sort_by(|a, b| a.id.cmp(&b.id));
        Exploration {
            paths: self.terminal,
            partial: self.partial,
            totals: self.totals,
            forks: self.forks,
            peak_live: self.peak_live,
            blocks_executed: self.blocks_executed,
        }
    }
}

/// Explores every path of `prog` on the calling thread.
pub fn explore(prog: &Program, ecfg: EngineConfig, mcfg: ManagerConfig) -> Exploration {
    explore_observed(prog, ecfg, mcfg, &mut NoObserver)
}

pub fn explore_observed(prog: &Program, ecfg: EngineConfig, mcfg: ManagerConfig, obs: &mut dyn Observer) -> Exploration {
    let mut solver = Solver::new(ecfg.enum_limit);
    let engine = Engine::new(prog, ecfg);
    let mut m = Manager::new(mcfg, engine.root());
    loop {
        match m.schedule() {
            Schedule::Run(mut p) => {
                let ev = engine.run(&mut p, &mut solver, obs);
                let s = resolve(p, ev, &mut solver);
                m.submit(s);
            }
            Schedule::Wait => unreachable!("nothing runs concurrently"),
            Schedule::Done => break,
        }
    }
    m.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;
    use crate::expr::{SymExpr, VarId};
    use crate::path::PathId;

    fn path(id: &[u32], depth: u32) -> PathState {
        let prog = assemble("halt").unwrap();
        let mut p = Engine::new(&prog, EngineConfig::default()).root();
        p.id = PathId(id.to_vec());
        p.depth = depth;
        p.status = PathStatus::Suspended;
        p
    }

    fn mgr(strategy: Strategy, paths: Vec<PathState>) -> Manager {
        let mut m = Manager::new(ManagerConfig { strategy, ..ManagerConfig::default() }, paths[0].clone());
        m.suspended = paths;
        m
    }

    fn picked(m: &mut Manager) -> PathId {
        match m.schedule() {
            Schedule::Run(p) => p.id,
            s => panic!("{s:?}"),
        }
    }

    #[test]
    fn dfs_picks_deepest() {
        let mut m = mgr(Strategy::Dfs, alloc::vec![path(&[0, 1], 2), path(&[0, 0, 1], 3), path(&[0, 0], 2)]);
        assert_eq!(picked(&mut m), PathId(alloc::vec![0, 0, 1]));
        assert_eq!(picked(&mut m), PathId(alloc::vec![0, 0]));
    }

    #[test]
    fn bfs_picks_shallowest_lowest_id() {
        let mut m = mgr(Strategy::Bfs, alloc::vec![path(&[0, 1], 2), path(&[0, 0, 1], 3), path(&[0, 0], 2)]);
        assert_eq!(picked(&mut m), PathId(alloc::vec![0, 0]));
        assert_eq!(picked(&mut m), PathId(alloc::vec![0, 1]));
    }

    #[test]
    fn priority_callback() {
        let f: PriorityFn = Arc::new(|p: &PathState| -(p.id.0.iter().sum::<u32>() as i64));
        let mut m = mgr(Strategy::Priority(f), alloc::vec![path(&[0, 1], 2), path(&[0, 0, 1], 3), path(&[0, 0], 2)]);
        assert_eq!(picked(&mut m), PathId(alloc::vec![0, 0]));
    }

    #[test]
    fn live_cap_and_done() {
        let mut m = Manager::new(
            ManagerConfig { max_live_states: 1, ..ManagerConfig::default() },
            path(&[0], 0),
        );
        m.suspended.push(path(&[1], 0));
        let mut a = match m.schedule() {
            Schedule::Run(p) => p,
            s => panic!("{s:?}"),
        };
        assert!(matches!(m.schedule(), Schedule::Wait));
        a.status = PathStatus::Completed;
        m.submit(Submission::Terminal(a));
        let mut b = match m.schedule() {
            Schedule::Run(p) => p,
            s => panic!("{s:?}"),
        };
        b.status = PathStatus::Completed;
        m.submit(Submission::Terminal(b));
        assert!(matches!(m.schedule(), Schedule::Done));
        assert_eq!(m.peak_live(), 1);
    }

    #[test]
    fn contradicting_child_is_infeasible() {
        let mut p = path(&[0], 0);
        let v = SymExpr::var(VarId(0));
        p.constraints.assert(SymExpr::eq(v.clone(), SymExpr::constant(8, 7)));
        let t = alloc::vec![
            (SymExpr::eq(v.clone(), SymExpr::constant(8, 5)), BranchTarget::Block(crate::isa::BlockId(0))),
            (SymExpr::ne(v.clone(), SymExpr::constant(8, 5)), BranchTarget::Block(crate::isa::BlockId(0))),
        ];
        let kids = fork_on_branch(&mut p, &t, &mut Solver::default());
        assert_eq!(kids[0].status, PathStatus::Infeasible);
        assert_eq!(kids[1].status, PathStatus::Suspended);
        assert_eq!(kids[1].depth, 1);
        assert_eq!(kids[1].id, PathId(alloc::vec![0, 1]));
    }

    #[test]
    fn three_way_branch_partitions_inputs() {
        let prog = assemble(
            ".symbolic 0x1000 1
             mov r1, 0x1000
             load r0, [r1].b
             cmp r0, 10
             jb low
             cmp r0, 200
             jb mid
             mov r2, 3
             halt
             low: mov r2, 1
             halt
             mid: mov r2, 2
             halt",
        )
        .unwrap();
        let ex = explore(&prog, EngineConfig::default(), ManagerConfig::default());
        let done: Vec<_> = ex.paths.iter().filter(|p| p.status == PathStatus::Completed).collect();
        assert_eq!(done.len(), 3);
        assert!(!ex.partial);
        assert_eq!(ex.forks, 2);
    }

    #[test]
    fn concrete_program_one_path() {
        let prog = assemble("mov r0, 1\nadd r0, 2\nhalt").unwrap();
        let ex = explore(&prog, EngineConfig::default(), ManagerConfig::default());
        assert_eq!(ex.paths.len(), 1);
        assert_eq!(ex.forks, 0);
        assert_eq!(ex.totals.blocks_interpreted, 0);
    }

    #[test]
    fn fork_budget_marks_partial() {
        let prog = assemble(
            ".symbolic 0x1000 1
             mov r1, 0x1000
             load r0, [r1].b
             cmp r0, 10
             jb low
             cmp r0, 200
             jb low
             halt
             low: halt",
        )
        .unwrap();
        let ex = explore(&prog, EngineConfig::default(), ManagerConfig { max_total_forks: 1, ..ManagerConfig::default() });
        assert!(ex.partial);
        assert!(ex.paths.iter().any(|p| p.status == PathStatus::Errored(FORK_BUDGET_MSG.to_string())));
    }
}
