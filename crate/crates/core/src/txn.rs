//! Software transactions over the native machine and the stride controller.
//!
//! A transaction snapshots registers, flags and pc, and keeps a first-write
//! undo log for memory. Every native read and every to-be-overwritten value
//! is recorded as aligned 16-bit lanes and compared against the sentinel at
//! block end (or earlier, when the buffer fills or before an indirect jump).

use alloc::collections::BTreeMap;
use core::fmt;

use crate::isa::{Program, DEFAULT_BLOCK_MAX_INSTR, NUM_REGS};
use crate::machine::{run_block_concrete, AccessHook, Fault, Flags, MachineState, Memory, Pc};
use crate::shadow::{covering_pairs, CheckBuffer, CheckResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StrideConfig {
    pub stride_max: u32,
    pub stride_min: u32,
    pub block_max_instr: usize,
    /// Undo-log bytes a transaction may hold before a capacity abort.
    pub write_log_capacity: usize,
}

impl Default for StrideConfig {
    fn default() -> Self {
        StrideConfig { stride_max: 16, stride_min: 1, block_max_instr: DEFAULT_BLOCK_MAX_INSTR, write_log_capacity: 4096 }
    }
}

impl StrideConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.stride_min == 0 {
            return Err("stride_min must be at least 1");
        }
        if self.stride_min > self.stride_max {
            return Err("stride_min must not exceed stride_max");
        }
        if self.block_max_instr == 0 {
            return Err("block_max_instr must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FaultKind {
    Unmapped,
    GuardPoison,
    InvalidTarget,
    /// Something only the interpreter can handle (dead flag read,
    /// interpreter-only instruction).
    Unsupported,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbortReason {
    /// Poison detected in the block after `completed_blocks` clean ones.
    Poison { completed_blocks: u32 },
    Fault { kind: FaultKind },
    Capacity,
    Injected { txn: u64, block: u32 },
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbortReason::Poison { completed_blocks } => write!(f, "poison(c={completed_blocks})"),
            AbortReason::Fault { kind } => write!(f, "fault({kind:?})"),
            AbortReason::Capacity => f.write_str("capacity"),
            AbortReason::Injected { txn, block } => write!(f, "injected(txn={txn},block={block})"),
        }
    }
}

impl From<Fault> for AbortReason {
    fn from(f: Fault) -> Self {
        let kind = match f {
            Fault::Unmapped { .. } => FaultKind::Unmapped,
            Fault::InvalidTarget { .. } => FaultKind::InvalidTarget,
            Fault::FlagUnavailable | Fault::NeedsInterpreter => FaultKind::Unsupported,
        };
        AbortReason::Fault { kind }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxnError {
    NotAtBlockStart,
    Halted,
    PendingLanes,
    StrideNotReached,
}

impl fmt::Display for TxnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TxnError::NotAtBlockStart => "transaction must begin at a block start",
            TxnError::Halted => "machine is halted",
            TxnError::PendingLanes => "commit with unchecked lanes",
            TxnError::StrideNotReached => "commit before reaching the stride target",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockOutcome {
    BlockDone,
    Abort(AbortReason),
}

#[derive(Clone, Debug)]
struct Snapshot {
    regs: [u64; NUM_REGS],
    flags: Flags,
    pc: Pc,
    halted: bool,
}

#[derive(Debug)]
pub struct Transaction {
    snapshot: Snapshot,
    undo: BTreeMap<u64, u8>,
    check_buf: CheckBuffer,
    completed_blocks: u32,
    stride_target: u32,
    closed_early: bool,
    sentinel: u16,
    write_log_capacity: usize,
    index: u64,
    inject_block: Option<u32>,
}

struct Hook<'a> {
    buf: &'a mut CheckBuffer,
    undo: &'a mut BTreeMap<u64, u8>,
    sentinel: u16,
    completed: u32,
    capacity: usize,
}

impl Hook<'_> {
    fn record(&mut self, mem: &Memory, addr: u64, len: u8) -> Result<(), AbortReason> {
        for pair in covering_pairs(addr, len as u64) {
            let lane = mem.read(pair, 2)? as u16;
            if self.buf.record_lane(lane).is_err() && self.buf.bulk_check(self.sentinel) == CheckResult::PoisonFound {
                return Err(AbortReason::Poison { completed_blocks: self.completed });
            }
        }
        Ok(())
    }
}

impl AccessHook for Hook<'_> {
    type Error = AbortReason;

    fn read(&mut self, mem: &Memory, addr: u64, len: u8) -> Result<(), AbortReason> {
        self.record(mem, addr, len)
    }

    fn write(&mut self, mem: &Memory, addr: u64, len: u8) -> Result<(), AbortReason> {
        self.record(mem, addr, len)?;
        for i in 0..len as u64 {
            let a = addr.wrapping_add(i);
            if let alloc::collections::btree_map::Entry::Vacant(e) = self.undo.entry(a) {
                e.insert(mem.read_u8(a)?);
            }
        }
        if self.undo.len() > self.capacity {
            return Err(AbortReason::Capacity);
        }
        Ok(())
    }

    fn guard(&mut self) -> Result<(), AbortReason> {
        match self.buf.bulk_check(self.sentinel) {
            CheckResult::Clean => Ok(()),
            CheckResult::PoisonFound => Err(AbortReason::Fault { kind: FaultKind::GuardPoison }),
        }
    }
}

impl Transaction {
    /// Opens a transaction of `stride` blocks. `index` numbers transactions
    /// on the path from 1; `inject_block` makes the transaction abort at the
    /// end of that (1-based) block.
    pub fn begin(
        state: &MachineState,
        stride: u32,
        cfg: &StrideConfig,
        sentinel: u16,
        index: u64,
        inject_block: Option<u32>,
    ) -> Result<Transaction, TxnError> {
        if state.halted {
            return Err(TxnError::Halted);
        }
        if state.pc.index != 0 {
            return Err(TxnError::NotAtBlockStart);
        }
        Ok(Transaction {
            snapshot: Snapshot { regs: state.regs, flags: state.flags.clone(), pc: state.pc, halted: state.halted },
            undo: BTreeMap::new(),
            check_buf: CheckBuffer::new(),
            completed_blocks: 0,
            stride_target: stride,
            closed_early: false,
            sentinel,
            write_log_capacity: cfg.write_log_capacity,
            index,
            inject_block,
        })
    }

    pub fn completed_blocks(&self) -> u32 {
        self.completed_blocks
    }

    pub fn stride_target(&self) -> u32 {
        self.stride_target
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn is_full(&self) -> bool {
        self.completed_blocks >= self.stride_target
    }

    pub fn undo_len(&self) -> usize {
        self.undo.len()
    }

    pub fn entry_pc(&self) -> Pc {
        self.snapshot.pc
    }

    /// Runs the block at `state.pc` natively, then bulk-checks its lanes.
    pub fn run_block(&mut self, state: &mut MachineState, prog: &Program) -> BlockOutcome {
        debug_assert_eq!(state.pc.index, 0);
        let mut hook = Hook {
            buf: &mut self.check_buf,
            undo: &mut self.undo,
            sentinel: self.sentinel,
            completed: self.completed_blocks,
            capacity: self.write_log_capacity,
        };
        if let Err(reason) = run_block_concrete(state, prog, &mut hook) {
            self.check_buf.bulk_check(self.sentinel);
            return BlockOutcome::Abort(reason);
        }
        if self.check_buf.bulk_check(self.sentinel) == CheckResult::PoisonFound {
            return BlockOutcome::Abort(AbortReason::Poison { completed_blocks: self.completed_blocks });
        }
        self.completed_blocks += 1;
        if self.inject_block == Some(self.completed_blocks) {
            return BlockOutcome::Abort(AbortReason::Injected { txn: self.index, block: self.completed_blocks });
        }
        BlockOutcome::BlockDone
    }

    /// Marks the transaction as ending before its stride target (halt, or
    /// the next block cannot run natively).
    pub fn close_early(&mut self) {
        self.closed_early = true;
    }

    pub fn commit(self) -> Result<u32, TxnError> {
        if !self.check_buf.is_empty() {
            return Err(TxnError::PendingLanes);
        }
        if self.completed_blocks != self.stride_target && !self.closed_early {
            return Err(TxnError::StrideNotReached);
        }
        Ok(self.completed_blocks)
    }

    /// Restores registers, flags, pc and every logged memory byte.
    pub fn abort(self, state: &mut MachineState) {
        state.regs = self.snapshot.regs;
        state.flags = self.snapshot.flags;
        state.pc = self.snapshot.pc;
        state.halted = self.snapshot.halted;
        for (a, old) in self.undo {
            state.mem.write_u8(a, old).expect("logged address is mapped");
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Attempt {
    Committed,
    Aborted(AbortReason),
}

/// What the stride controller drives. Either callback may stop recovery,
/// e.g. when the path halts or forks.
pub trait RecoveryDriver {
    type Stop;
    fn attempt(&mut self, stride: u32) -> Result<Attempt, Self::Stop>;
    fn interpret(&mut self, blocks: u32) -> Result<(), Self::Stop>;
}

/// Recovery after a transaction of stride `stride_max` aborted.
///
/// Poison with `c > 0` retries with stride `c` and interprets the poisoned
/// block; if that retry aborts, or for any other abort, strides are halved
/// from the start value down to `stride_min` regardless of each attempt's
/// outcome, then `stride_min` blocks are interpreted.
pub fn stride_recover<D: RecoveryDriver>(reason: AbortReason, cfg: &StrideConfig, d: &mut D) -> Result<(), D::Stop> {
    let start = match reason {
        AbortReason::Poison { completed_blocks: 0 } => return d.interpret(1),
        AbortReason::Poison { completed_blocks: c } => match d.attempt(c)? {
            Attempt::Committed => return d.interpret(1),
            Attempt::Aborted(_) => (c / 2).max(cfg.stride_min),
        },
        _ => cfg.stride_max / 2,
    };
    let mut s = start;
    while s >= cfg.stride_min && s > 0 {
        d.attempt(s)?;
        s /= 2;
    }
    d.interpret(cfg.stride_min)
}
