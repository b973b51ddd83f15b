//! Execution paths and their counters.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::interp::InterpCtx;
use crate::machine::MachineState;
use crate::shadow::ShadowState;
use crate::solver::ConstraintSet;
use crate::txn::AbortReason;

/// Branch trail from the root; the root is `p0` and the `i`-th child of
/// `p` is `p.i`. Ordered lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathId(pub Vec<u32>);

impl PathId {
    pub fn root() -> PathId {
        PathId(alloc::vec![0])
    }

    pub fn child(&self, i: u32) -> PathId {
        let mut t = self.0.clone();
        t.push(i);
        PathId(t)
    }
}

impl fmt::Display for PathId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("p")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for PathId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PathStatus {
    Runnable,
    Suspended,
    Completed,
    Infeasible,
    Errored(String),
}

impl PathStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(self, PathStatus::Completed | PathStatus::Infeasible | PathStatus::Errored(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            PathStatus::Runnable => "runnable",
            PathStatus::Suspended => "suspended",
            PathStatus::Completed => "completed",
            PathStatus::Infeasible => "infeasible",
            PathStatus::Errored(_) => "errored",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct AbortCounts {
    pub poison: u64,
    pub fault: u64,
    pub capacity: u64,
    pub injected: u64,
}

impl AbortCounts {
    pub fn total(&self) -> u64 {
        self.poison + self.fault + self.capacity + self.injected
    }

    pub fn count(&mut self, r: &AbortReason) {
        match r {
            AbortReason::Poison { .. } => self.poison += 1,
            AbortReason::Fault { .. } => self.fault += 1,
            AbortReason::Capacity => self.capacity += 1,
            AbortReason::Injected { .. } => self.injected += 1,
        }
    }

    pub fn add(&mut self, o: &AbortCounts) {
        self.poison += o.poison;
        self.fault += o.fault;
        self.capacity += o.capacity;
        self.injected += o.injected;
    }
}

/// Work done by one path since it was created or forked.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PathStats {
    pub blocks_native: u64,
    pub blocks_interpreted: u64,
    pub blocks_rolled_back: u64,
    pub txn_commits: u64,
    pub txn_aborts: AbortCounts,
    /// Transactions opened by abort recovery.
    pub retry_txns: u64,
    /// Their strides, in order.
    pub retry_strides: Vec<u32>,
    pub solver_queries: u64,
    pub enum_assignments: u64,
}

impl PathStats {
    pub fn add(&mut self, o: &PathStats) {
        self.blocks_native += o.blocks_native;
        self.blocks_interpreted += o.blocks_interpreted;
        self.blocks_rolled_back += o.blocks_rolled_back;
        self.txn_commits += o.txn_commits;
        self.txn_aborts.add(&o.txn_aborts);
        self.retry_txns += o.retry_txns;
        self.retry_strides.extend_from_slice(&o.retry_strides);
        self.solver_queries += o.solver_queries;
        self.enum_assignments += o.enum_assignments;
    }
}

#[derive(Clone, Debug)]
pub struct PathState {
    pub id: PathId,
    pub parent: Option<PathId>,
    pub machine: MachineState,
    /// Present while the interpreter holds symbolic registers.
    pub ctx: Option<InterpCtx>,
    pub shadow: ShadowState,
    pub constraints: ConstraintSet,
    pub status: PathStatus,
    /// Forks from the root.
    pub depth: u32,
    pub stats: PathStats,
    /// Transactions opened so far, inherited across forks.
    pub txn_count: u64,
    /// Blocks executed so far (native or interpreted), inherited across forks.
    pub blocks_executed: u64,
}
