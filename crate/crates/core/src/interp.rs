//! The symbolic interpreter: executes one basic block at a time over
//! simulated registers, shared memory and the shadow state.
//!
//! Every value goes through the expression constructors, concrete or not, so
//! folding is what turns concrete inputs back into concrete results.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::expr::SymExpr;
use crate::isa::{AluOp, BlockId, Cond, Flag, FlagSet, Instr, MemRef, Operand, Program, Reg, NUM_REGS};
use crate::machine::{Fault, FlagValue, MachineState, Pc};
use crate::shadow::ShadowState;
use crate::solver::{substitute_pins, ConstraintSet, SatResult, Solver};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RegValue {
    Concrete(u64),
    /// Never a constant.
    Symbolic(SymExpr),
}

impl RegValue {
    pub fn from_expr(e: SymExpr) -> RegValue {
        debug_assert_eq!(e.width(), 64);
        match e.as_const() {
            Some(v) => RegValue::Concrete(v),
            None => RegValue::Symbolic(e),
        }
    }

    pub fn expr(&self) -> SymExpr {
        match self {
            RegValue::Concrete(v) => SymExpr::constant(64, *v),
            RegValue::Symbolic(e) => e.clone(),
        }
    }

    pub fn as_concrete(&self) -> Option<u64> {
        match self {
            RegValue::Concrete(v) => Some(*v),
            RegValue::Symbolic(_) => None,
        }
    }

    pub fn is_symbolic(&self) -> bool {
        matches!(self, RegValue::Symbolic(_))
    }
}

fn flag_value(e: SymExpr) -> FlagValue {
    match e.as_const() {
        Some(v) => FlagValue::Concrete(v != 0),
        None => FlagValue::Symbolic(e),
    }
}

/// Simulated registers. `epoch` is the constraint-set pin epoch last
/// substituted into them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterpCtx {
    pub regs: [RegValue; NUM_REGS],
    pub epoch: u64,
}

impl InterpCtx {
    pub fn any_symbolic(&self) -> bool {
        self.regs.iter().any(RegValue::is_symbolic)
    }
}

/// Copies the native registers into a fresh interpreter context. Memory is
/// shared, not copied.
pub fn ctx_switch_in(native: &MachineState, cs: &ConstraintSet) -> InterpCtx {
    InterpCtx { regs: native.regs.map(RegValue::Concrete), epoch: cs.epoch() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StillSymbolic;

/// Hands control back to native execution if no register and no live flag
/// is symbolic. Dead flags are killed first.
pub fn ctx_switch_out(ctx: &InterpCtx, state: &mut MachineState, prog: &Program) -> Result<(), StillSymbolic> {
    let live = live_at(state, prog);
    state.flags.kill_except(live);
    if ctx.any_symbolic() || !state.flags.concrete_on(FlagSet::ALL) {
        return Err(StillSymbolic);
    }
    for (dst, v) in state.regs.iter_mut().zip(&ctx.regs) {
        *dst = v.as_concrete().expect("checked concrete");
    }
    Ok(())
}

/// Flags live on entry to the block at `state.pc` (none once halted).
pub fn live_at(state: &MachineState, prog: &Program) -> FlagSet {
    if state.halted {
        FlagSet::EMPTY
    } else if state.pc.index == 0 {
        prog.block(state.pc.block).live_in
    } else {
        prog.block(state.pc.block).live_out
    }
}

/// Substitutes newly pinned variables into symbolic registers and flags.
pub fn apply_pins(ctx: &mut InterpCtx, state: &mut MachineState, cs: &ConstraintSet) {
    if ctx.epoch == cs.epoch() {
        return;
    }
    ctx.epoch = cs.epoch();
    for r in ctx.regs.iter_mut() {
        if let RegValue::Symbolic(e) = r {
            *r = RegValue::from_expr(substitute_pins(e, cs.pins()));
        }
    }
    for f in state.flags.0.iter_mut() {
        if let FlagValue::Symbolic(e) = f {
            *f = flag_value(substitute_pins(e, cs.pins()));
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BranchTarget {
    Block(BlockId),
    /// A computed target that is not a block address.
    Invalid,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InterpOutcome {
    /// The pc is at the start of the next block.
    Continue,
    Halt,
    /// The terminator's destination depends on symbolic data. Conditions
    /// are mutually exclusive and cover every case.
    SymbolicBranch(Vec<(SymExpr, BranchTarget)>),
    /// An `assume` contradicted the path constraints.
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InterpError {
    Fault(Fault),
    SymbolicAddress { pc: Pc },
    SymbolicLength { pc: Pc },
}

impl From<Fault> for InterpError {
    fn from(f: Fault) -> Self {
        InterpError::Fault(f)
    }
}

impl fmt::Display for InterpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InterpError::Fault(x) => write!(f, "{x}"),
            InterpError::SymbolicAddress { pc } => {
                write!(f, "symbolic memory address at b{}:{}", pc.block.0, pc.index)
            }
            InterpError::SymbolicLength { pc } => write!(f, "symbolic make_symbolic length at b{}:{}", pc.block.0, pc.index),
        }
    }
}

impl InterpError {
    pub fn message(&self) -> String {
        self.to_string()
    }
}

struct Exec<'x, 's> {
    prog: &'x Program,
    state: &'x mut MachineState,
    ctx: &'x mut InterpCtx,
    shadow: &'x mut ShadowState,
    cs: &'x mut ConstraintSet,
    solver: &'x mut Solver<'s>,
    /// Flags read after each instruction of the block, before being
    /// overwritten or at the block exit.
    live_after: Vec<FlagSet>,
}

impl Exec<'_, '_> {
    fn reg(&self, r: Reg) -> SymExpr {
        self.ctx.regs[r.index()].expr()
    }

    fn set_reg(&mut self, r: Reg, e: SymExpr) {
        self.ctx.regs[r.index()] = RegValue::from_expr(e);
    }

    fn operand(&self, o: &Operand) -> SymExpr {
        match o {
            Operand::Reg(r) => self.reg(*r),
            Operand::Imm(v) => SymExpr::constant(64, *v),
        }
    }

    /// Concrete value of an expression after pin substitution.
    fn resolve(&self, e: &SymExpr) -> Option<u64> {
        e.as_const().or_else(|| substitute_pins(e, self.cs.pins()).as_const())
    }

    fn address(&self, base: SymExpr, disp: i64) -> Result<u64, InterpError> {
        let a = SymExpr::add(base, SymExpr::constant(64, disp as u64));
        self.resolve(&a).ok_or(InterpError::SymbolicAddress { pc: self.state.pc })
    }

    fn mem_addr(&self, m: &MemRef) -> Result<u64, InterpError> {
        self.address(self.reg(m.base), m.disp)
    }

    fn load(&self, addr: u64, len: u8) -> Result<SymExpr, InterpError> {
        let mut acc: Option<SymExpr> = None;
        for i in (0..len as u64).rev() {
            let a = addr.wrapping_add(i);
            let byte = if self.shadow.is_symbolic(a) {
                let e = self.shadow.expr_at(a).expect("bitmap and expression map agree");
                match e.as_var().and_then(|v| self.cs.pin(v)) {
                    Some(k) => SymExpr::constant(8, k as u64),
                    None => e.clone(),
                }
            } else {
                SymExpr::constant(8, self.state.mem.read_u8(a)? as u64)
            };
            acc = Some(match acc {
                Some(hi) => SymExpr::concat(hi, byte),
                None => byte,
            });
        }
        Ok(SymExpr::zext(acc.expect("len >= 1"), 64))
    }

    fn store(&mut self, addr: u64, len: u8, v: SymExpr) -> Result<(), InterpError> {
        for i in 0..len as u64 {
            let a = addr.wrapping_add(i);
            if !self.state.mem.is_mapped(a) {
                return Err(Fault::Unmapped { addr: a }.into());
            }
        }
        for i in 0..len {
            let a = addr.wrapping_add(i as u64);
            let b = SymExpr::extract(v.clone(), 8 * i, 8);
            match b.as_const() {
                Some(c) => self.shadow.unpoison_byte(&mut self.state.mem, a, c as u8)?,
                None => self.shadow.poison_byte(&mut self.state.mem, a, b)?,
            }
        }
        self.drain_siblings();
        Ok(())
    }

    fn drain_siblings(&mut self) {
        if self.shadow.has_pending() {
            for (v, k) in self.shadow.drain_sibling_constraints() {
                self.cs.pin_sibling(v, k);
            }
        }
    }

    /// Builds only the flags something reads later; the rest are killed
    /// here rather than at the block exit.
    fn alu(&mut self, op: AluOp, a: SymExpr, b: SymExpr) -> SymExpr {
        let live = self.live_after[self.state.pc.index];
        let msb = |e: SymExpr| SymExpr::extract(e, 63, 1);
        let r = match op {
            AluOp::Add => SymExpr::add(a.clone(), b.clone()),
            AluOp::Sub => SymExpr::sub(a.clone(), b.clone()),
            AluOp::Mul => SymExpr::mul(a.clone(), b.clone()),
            AluOp::And => SymExpr::and(a.clone(), b.clone()),
            AluOp::Or => SymExpr::or(a.clone(), b.clone()),
            AluOp::Xor => SymExpr::xor(a.clone(), b.clone()),
            AluOp::Shl | AluOp::Shr => {
                let amount = SymExpr::and(b.clone(), SymExpr::constant(64, 63));
                if op == AluOp::Shl {
                    SymExpr::shl(a.clone(), amount)
                } else {
                    SymExpr::shr(a.clone(), amount)
                }
            }
        };
        for f in Flag::ALL {
            let v = if !live.contains(f) {
                FlagValue::Dead
            } else {
                flag_value(match f {
                    Flag::Z => SymExpr::eq(r.clone(), SymExpr::constant(64, 0)),
                    Flag::S => msb(r.clone()),
                    Flag::C => match op {
                        AluOp::Add => SymExpr::ult(r.clone(), a.clone()),
                        AluOp::Sub => SymExpr::ult(a.clone(), b.clone()),
                        _ => SymExpr::bit(false),
                    },
                    Flag::O => match op {
                        AluOp::Add => msb(SymExpr::and(SymExpr::xor(a.clone(), r.clone()), SymExpr::xor(b.clone(), r.clone()))),
                        AluOp::Sub => msb(SymExpr::and(SymExpr::xor(a.clone(), b.clone()), SymExpr::xor(a.clone(), r.clone()))),
                        _ => SymExpr::bit(false),
                    },
                })
            };
            self.state.flags.set(f, v);
        }
        r
    }

    fn flag(&self, f: Flag) -> Result<SymExpr, InterpError> {
        match self.state.flags.get(f) {
            FlagValue::Concrete(b) => Ok(SymExpr::bit(*b)),
            FlagValue::Symbolic(e) => Ok(e.clone()),
            FlagValue::Dead => Err(Fault::FlagUnavailable.into()),
        }
    }

    fn condition(&self, cond: Cond) -> Result<SymExpr, InterpError> {
        use SymExpr as E;
        let f = |x: Flag| self.flag(x);
        let lt = || -> Result<SymExpr, InterpError> { Ok(E::xor(f(Flag::S)?, f(Flag::O)?)) };
        Ok(match cond {
            Cond::Z => f(Flag::Z)?,
            Cond::Nz => E::not(f(Flag::Z)?),
            Cond::C => f(Flag::C)?,
            Cond::Nc => E::not(f(Flag::C)?),
            Cond::S => f(Flag::S)?,
            Cond::Ns => E::not(f(Flag::S)?),
            Cond::O => f(Flag::O)?,
            Cond::No => E::not(f(Flag::O)?),
            Cond::L => lt()?,
            Cond::Ge => E::not(lt()?),
            Cond::Le => E::or(f(Flag::Z)?, lt()?),
            Cond::G => E::and(E::not(f(Flag::Z)?), E::not(lt()?)),
            Cond::A => E::and(E::not(f(Flag::C)?), E::not(f(Flag::Z)?)),
            Cond::Be => E::or(f(Flag::C)?, f(Flag::Z)?),
        })
    }

    fn push(&mut self, v: SymExpr) -> Result<(), InterpError> {
        let sp = self.address(self.reg(Reg::SP), -8)?;
        self.store(sp, 8, v)?;
        self.set_reg(Reg::SP, SymExpr::constant(64, sp));
        Ok(())
    }

    /// Destination of a computed transfer: a single block, or one symbolic
    /// branch candidate per block plus an invalid-target case.
    fn computed(&self, target: SymExpr) -> Result<Result<BlockId, Vec<(SymExpr, BranchTarget)>>, InterpError> {
        if let Some(v) = self.resolve(&target) {
            return self.prog.target(v).map(Ok).ok_or(InterpError::Fault(Fault::InvalidTarget { value: v }));
        }
        let n = self.prog.blocks.len() as u64;
        let mut out = Vec::new();
        for b in 0..n {
            let c = SymExpr::eq(target.clone(), SymExpr::constant(64, b));
            if c.as_const() != Some(0) {
                out.push((c, BranchTarget::Block(BlockId(b as u32))));
            }
        }
        let invalid = SymExpr::not(SymExpr::ult(target, SymExpr::constant(64, n)));
        if invalid.as_const() != Some(0) {
            out.push((invalid, BranchTarget::Invalid));
        }
        Ok(Err(out))
    }

    fn transfer(&mut self, target: SymExpr) -> Result<Option<InterpOutcome>, InterpError> {
        match self.computed(target)? {
            Ok(b) => {
                self.state.pc = Pc::start(b);
                Ok(None)
            }
            Err(cands) => Ok(Some(InterpOutcome::SymbolicBranch(cands))),
        }
    }

    /// Executes the instruction at pc. `Some` ends the block.
    fn step(&mut self) -> Result<Option<InterpOutcome>, InterpError> {
        let pc = self.state.pc;
        let instr = &self.prog.block(pc.block).instrs[pc.index];
        match instr {
            Instr::Mov { dst, src } => {
                let v = self.operand(src);
                self.set_reg(*dst, v);
            }
            Instr::Load { dst, mem } => {
                let a = self.mem_addr(mem)?;
                let v = self.load(a, mem.width.bytes())?;
                self.set_reg(*dst, v);
            }
            Instr::Store { mem, src } => {
                let a = self.mem_addr(mem)?;
                let v = self.operand(src);
                self.store(a, mem.width.bytes(), v)?;
            }
            Instr::Alu { op, dst, src } => {
                let r = self.alu(*op, self.reg(*dst), self.operand(src));
                self.set_reg(*dst, r);
            }
            Instr::Cmp { lhs, rhs } => {
                self.alu(AluOp::Sub, self.reg(*lhs), self.operand(rhs));
            }
            Instr::Test { lhs, rhs } => {
                self.alu(AluOp::And, self.reg(*lhs), self.operand(rhs));
            }
            Instr::Push { src } => {
                let v = self.operand(src);
                self.push(v)?;
            }
            Instr::Pop { dst } => {
                let sp = self.address(self.reg(Reg::SP), 0)?;
                let v = self.load(sp, 8)?;
                self.set_reg(Reg::SP, SymExpr::constant(64, sp.wrapping_add(8)));
                self.set_reg(*dst, v);
            }
            Instr::MakeSymbolic { addr, len } => {
                let a = self.address(self.reg(*addr), 0)?;
                let n = self.resolve(&self.operand(len)).ok_or(InterpError::SymbolicLength { pc })?;
                self.shadow.make_symbolic_range(&mut self.state.mem, a, n)?;
                self.drain_siblings();
            }
            Instr::Assume { cond } => {
                let c = SymExpr::ne(self.reg(*cond), SymExpr::constant(64, 0));
                let c = substitute_pins(&c, self.cs.pins());
                let constant = c.as_const().is_some();
                // a false assumption stays on record so the path's constraints
                // admit no input
                if !self.cs.assert(c) || (!constant && self.solver.check_sat(self.cs) == SatResult::Unsat) {
                    return Ok(Some(InterpOutcome::Infeasible));
                }
            }
            Instr::Jmp { target } => {
                self.state.pc = Pc::start(*target);
                return Ok(Some(InterpOutcome::Continue));
            }
            Instr::Jcc { cond, target, fallthrough } => {
                let c = self.condition(*cond)?;
                let c = substitute_pins(&c, self.cs.pins());
                return Ok(Some(match c.as_const() {
                    Some(v) => {
                        self.state.pc = Pc::start(if v != 0 { *target } else { *fallthrough });
                        InterpOutcome::Continue
                    }
                    None => InterpOutcome::SymbolicBranch(alloc::vec![
                        (c.clone(), BranchTarget::Block(*target)),
                        (SymExpr::not(c), BranchTarget::Block(*fallthrough)),
                    ]),
                }));
            }
            Instr::Jmpi { target } => {
                let t = self.reg(*target);
                return Ok(Some(self.transfer(t)?.unwrap_or(InterpOutcome::Continue)));
            }
            Instr::Call { target, ret } => {
                self.push(SymExpr::constant(64, ret.0 as u64))?;
                self.state.pc = Pc::start(*target);
                return Ok(Some(InterpOutcome::Continue));
            }
            Instr::Calli { target, ret } => {
                let t = self.reg(*target);
                let dest = self.computed(t)?;
                self.push(SymExpr::constant(64, ret.0 as u64))?;
                return Ok(Some(match dest {
                    Ok(b) => {
                        self.state.pc = Pc::start(b);
                        InterpOutcome::Continue
                    }
                    Err(cands) => InterpOutcome::SymbolicBranch(cands),
                }));
            }
            Instr::Ret => {
                let sp = self.address(self.reg(Reg::SP), 0)?;
                let t = self.load(sp, 8)?;
                self.set_reg(Reg::SP, SymExpr::constant(64, sp.wrapping_add(8)));
                return Ok(Some(self.transfer(t)?.unwrap_or(InterpOutcome::Continue)));
            }
            Instr::Halt => {
                self.state.halted = true;
                self.state.pc.index += 1;
                return Ok(Some(InterpOutcome::Halt));
            }
        }
        self.state.pc.index += 1;
        Ok(None)
    }
}

/// Interprets the whole block at `state.pc`.
///
/// On `SymbolicBranch` the pc is left at the block's exit; the caller sets
/// it per destination. Flags not live out of the block are killed on every
/// outcome except errors.
pub fn interp_block(
    prog: &Program,
    state: &mut MachineState,
    ctx: &mut InterpCtx,
    shadow: &mut ShadowState,
    cs: &mut ConstraintSet,
    solver: &mut Solver<'_>,
) -> Result<InterpOutcome, InterpError> {
    debug_assert_eq!(state.pc.index, 0);
    let block = prog.block(state.pc.block);
    let mut live_after = alloc::vec![FlagSet::EMPTY; block.len()];
    let mut live = block.live_out;
    for (i, instr) in block.instrs.iter().enumerate().rev() {
        live_after[i] = live;
        live = instr.flags_read().union(live.minus(instr.flags_written()));
    }
    let mut ex = Exec { prog, state, ctx, shadow, cs, solver, live_after };
    let outcome = loop {
        if ex.state.pc.index == block.len() {
            ex.state.normalize(prog);
            break InterpOutcome::Continue;
        }
        if let Some(out) = ex.step()? {
            break out;
        }
    };
    if let InterpOutcome::SymbolicBranch(_) = outcome {
        ex.state.pc = Pc { block: block.id, index: block.len() };
    }
    ex.state.flags.kill_except(block.live_out);
    Ok(outcome)
}
