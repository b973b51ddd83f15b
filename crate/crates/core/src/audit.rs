//! Checks transactions from the outside: aborts must restore the entry
//! image exactly, and committed transactions must survive a replay that
//! checks every access eagerly.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::engine::Observer;
use crate::interp::live_at;
use crate::isa::{Instr, Operand, Program, NUM_REGS};
use crate::machine::{step_concrete, AccessHook, Fault, MachineState, Memory};
use crate::shadow::ShadowState;
use crate::txn::AbortReason;

#[derive(Clone, Debug, Default)]
pub struct AuditCounts {
    pub commits: u64,
    pub replayed_blocks: u64,
    pub aborts: u64,
}

/// An [`Observer`] that audits every transaction of a run.
pub struct TxnAudit<'p> {
    prog: &'p Program,
    pub counts: AuditCounts,
    /// Aborted transactions whose restored state differs from the entry.
    pub rollback_diffs: Vec<String>,
    /// Accesses or transfers that touched symbolic data.
    pub violations: Vec<String>,
}

impl<'p> TxnAudit<'p> {
    pub fn new(prog: &'p Program) -> TxnAudit<'p> {
        TxnAudit { prog, counts: AuditCounts::default(), rollback_diffs: Vec::new(), violations: Vec::new() }
    }

    pub fn clean(&self) -> bool {
        self.rollback_diffs.is_empty() && self.violations.is_empty()
    }
}

impl Observer for TxnAudit<'_> {
    fn wants_snapshots(&self) -> bool {
        true
    }

    fn txn_committed(&mut self, entry: &MachineState, exit: &MachineState, blocks: u32, shadow: &ShadowState) {
        self.counts.commits += 1;
        self.counts.replayed_blocks += blocks as u64;
        let mut r = Replay::new(entry.clone(), shadow);
        for _ in 0..blocks {
            if let Err(e) = r.block(self.prog) {
                self.violations.push(format!("replay fault at {:?}: {e}", r.state.pc));
                return;
            }
        }
        self.violations.extend(r.violations);
        if r.state != *exit {
            self.violations.push(format!("replay of {blocks} blocks from {:?} ends elsewhere", entry.pc));
        }
    }

    fn txn_aborted(&mut self, entry: &MachineState, restored: &MachineState, reason: AbortReason) {
        self.counts.aborts += 1;
        if entry != restored {
            self.rollback_diffs.push(format!("abort {reason} at {:?}: {}", entry.pc, state_diff(entry, restored)));
        }
    }
}

fn state_diff(a: &MachineState, b: &MachineState) -> String {
    let mut parts = Vec::new();
    if a.regs != b.regs {
        parts.push(String::from("registers"));
    }
    if a.flags != b.flags {
        parts.push(String::from("flags"));
    }
    if a.pc != b.pc || a.halted != b.halted {
        parts.push(String::from("pc"));
    }
    if a.mem != b.mem {
        let mut bytes = 0;
        for (base, page) in a.mem.pages() {
            for (i, x) in page.iter().enumerate() {
                if b.mem.read_u8(base + i as u64).ok() != Some(*x) {
                    bytes += 1;
                }
            }
        }
        parts.push(format!("{bytes} memory bytes"));
    }
    parts.join(", ")
}

/// Per-access checks plus register, flag and memory taint from bytes of
/// poisoned pairs.
struct EagerHook<'a> {
    shadow: &'a ShadowState,
    tainted_mem: &'a BTreeSet<u64>,
    read_taint: bool,
    violations: &'a mut Vec<String>,
}

impl AccessHook for EagerHook<'_> {
    type Error = Fault;

    fn read(&mut self, _: &Memory, addr: u64, len: u8) -> Result<(), Fault> {
        for a in addr..addr.wrapping_add(len as u64) {
            if self.shadow.is_symbolic(a) {
                self.violations.push(format!("read of symbolic byte {a:#x}"));
                self.read_taint = true;
            }
            if self.tainted_mem.contains(&a) {
                self.read_taint = true;
            }
        }
        Ok(())
    }

    fn write(&mut self, _: &Memory, addr: u64, len: u8) -> Result<(), Fault> {
        for a in addr..addr.wrapping_add(len as u64) {
            if self.shadow.is_symbolic(a) {
                self.violations.push(format!("overwrite of symbolic byte {a:#x}"));
            }
        }
        Ok(())
    }

    fn guard(&mut self) -> Result<(), Fault> {
        Ok(())
    }
}

struct Replay<'a> {
    state: MachineState,
    shadow: &'a ShadowState,
    regs: [bool; NUM_REGS],
    flags: bool,
    mem: BTreeSet<u64>,
    violations: Vec<String>,
}

impl<'a> Replay<'a> {
    fn new(state: MachineState, shadow: &'a ShadowState) -> Replay<'a> {
        Replay { state, shadow, regs: [false; NUM_REGS], flags: false, mem: BTreeSet::new(), violations: Vec::new() }
    }

    fn op(&self, o: &Operand) -> bool {
        match o {
            Operand::Reg(r) => self.regs[r.index()],
            Operand::Imm(_) => false,
        }
    }

    fn block(&mut self, prog: &Program) -> Result<(), Fault> {
        let block = self.state.pc.block;
        let len = prog.block(block).len();
        while !self.state.halted && self.state.pc.block == block && self.state.pc.index < len {
            let instr = prog.block(block).instrs[self.state.pc.index].clone();
            let sp = crate::isa::Reg::SP.index();
            let addr_taint = match &instr {
                Instr::Load { mem, .. } | Instr::Store { mem, .. } => self.regs[mem.base.index()],
                Instr::Push { .. } | Instr::Pop { .. } | Instr::Call { .. } | Instr::Calli { .. } | Instr::Ret => self.regs[sp],
                _ => false,
            };
            if addr_taint {
                self.violations.push(format!("address derived from symbolic data at {:?}", self.state.pc));
            }
            let mut hook = EagerHook { shadow: self.shadow, tainted_mem: &self.mem, read_taint: false, violations: &mut self.violations };
            let sp_before = self.state.regs[sp];
            let pc = self.state.pc;
            step_concrete(&mut self.state, prog, &mut hook)?;
            let read = hook.read_taint;
            match &instr {
                Instr::Mov { dst, src } => self.regs[dst.index()] = self.op(src),
                Instr::Load { dst, .. } | Instr::Pop { dst } => self.regs[dst.index()] = read,
                Instr::Alu { dst, src, .. } => {
                    let t = self.regs[dst.index()] || self.op(src);
                    self.regs[dst.index()] = t;
                    self.flags = t;
                }
                Instr::Cmp { lhs, rhs } | Instr::Test { lhs, rhs } => self.flags = self.regs[lhs.index()] || self.op(rhs),
                Instr::Store { mem, src } => {
                    let a = self.state.reg(mem.base).wrapping_add(mem.disp as u64);
                    self.taint_mem(a, mem.width.bytes() as u64, self.op(src));
                }
                Instr::Push { src } => self.taint_mem(sp_before.wrapping_sub(8), 8, self.op(src)),
                Instr::Call { .. } | Instr::Calli { .. } => self.taint_mem(sp_before.wrapping_sub(8), 8, false),
                Instr::Jcc { .. } if self.flags => {
                    self.violations.push(format!("branch on flags derived from symbolic data at {pc:?}"))
                }
                _ => {}
            }
            match &instr {
                Instr::Jmpi { target } | Instr::Calli { target, .. } if self.regs[target.index()] => {
                    self.violations.push(format!("indirect transfer through symbolic data at {pc:?}"))
                }
                Instr::Ret if read => self.violations.push(format!("return through symbolic data at {pc:?}")),
                _ => {}
            }
            if self.state.pc.index == 0 {
                break;
            }
        }
        self.state.normalize(prog);
        let live = live_at(&self.state, prog);
        self.state.flags.kill_except(live);
        Ok(())
    }

    fn taint_mem(&mut self, addr: u64, len: u64, t: bool) {
        for a in addr..addr.wrapping_add(len) {
            if t {
                self.mem.insert(a);
            } else {
                self.mem.remove(&a);
            }
        }
    }
}
