//! Machine-readable run statistics.

use serde::Serialize;
use txsym_core::path::{AbortCounts, PathStats};
use txsym_core::report::{Exploration, PathCounts, PathReport};

pub const SCHEMA: u32 = 1;

#[derive(Clone, Debug, Serialize)]
pub struct RunStats {
    pub schema: u32,
    pub mode: &'static str,
    pub partial: bool,
    pub blocks_native: u64,
    pub blocks_interpreted: u64,
    pub blocks_rolled_back: u64,
    /// Counted independently of the two fields above.
    pub blocks_executed: u64,
    pub txn_commits: u64,
    pub txn_aborts: AbortCounts,
    pub retry_txns: u64,
    pub retry_strides: Vec<u32>,
    pub forks: u64,
    pub paths: PathCounts,
    pub solver_queries: u64,
    pub enum_assignments: u64,
    pub wall_time_ns: u64,
    pub per_path: Vec<PathReport>,
}

impl RunStats {
    pub fn from_exploration(mode: &'static str, ex: &Exploration, per_path: Vec<PathReport>, wall_time_ns: u64) -> RunStats {
        let t: &PathStats = &ex.totals;
        RunStats {
            schema: SCHEMA,
            mode,
            partial: ex.partial,
            blocks_native: t.blocks_native,
            blocks_interpreted: t.blocks_interpreted,
            blocks_rolled_back: t.blocks_rolled_back,
            blocks_executed: ex.blocks_executed,
            txn_commits: t.txn_commits,
            txn_aborts: t.txn_aborts,
            retry_txns: t.retry_txns,
            retry_strides: t.retry_strides.clone(),
            forks: ex.forks,
            paths: ex.counts(),
            solver_queries: t.solver_queries,
            enum_assignments: t.enum_assignments,
            wall_time_ns,
            per_path,
        }
    }

    /// Blocks executed across all paths.
    pub fn total_blocks(&self) -> u64 {
        self.blocks_native + self.blocks_interpreted
    }

    pub fn native_fraction(&self) -> f64 {
        match self.total_blocks() {
            0 => 1.0,
            n => self.blocks_native as f64 / n as f64,
        }
    }

    /// The identities every run must satisfy.
    pub fn check_conservation(&self) -> Result<(), String> {
        if self.total_blocks() != self.blocks_executed {
            return Err(format!(
                "native {} + interpreted {} != executed {}",
                self.blocks_native, self.blocks_interpreted, self.blocks_executed
            ));
        }
        if self.retry_strides.len() as u64 != self.retry_txns {
            return Err("retry strides and retry count disagree".into());
        }
        if self.paths.completed + self.paths.infeasible + self.paths.errored != self.per_path.len() as u64 {
            return Err("path counts do not sum".into());
        }
        Ok(())
    }
}
