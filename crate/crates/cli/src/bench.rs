//! Speculative against interpret-all on fully concrete workloads.

use std::time::Instant;

use serde::Serialize;
use txsym_core::asm::assemble;
use txsym_core::engine::{EngineConfig, Mode};
use txsym_core::manager::{explore, ManagerConfig};
use txsym_core::path::AbortCounts;

use crate::sweep::mode_name;
use crate::workloads::{bignum_operands, bignum_source, checksum_source, random_bytes};

#[derive(Clone, Debug, Serialize)]
pub struct ModeRun {
    pub mode: &'static str,
    pub wall_time_ns: u64,
    pub blocks_native: u64,
    pub blocks_interpreted: u64,
    pub txn_commits: u64,
    pub txn_aborts: AbortCounts,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchResult {
    pub workload: &'static str,
    pub bytes: usize,
    pub speculative: ModeRun,
    pub interpret_all: ModeRun,
    /// Interpret-all time over speculative time; `None` when either is too
    /// small to compare.
    pub speedup: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Workload {
    Bignum,
    Checksum,
}

impl Workload {
    pub fn name(self) -> &'static str {
        match self {
            Workload::Bignum => "bignum",
            Workload::Checksum => "checksum",
        }
    }

    pub fn source(self, bytes: usize, seed: u64) -> String {
        match self {
            Workload::Bignum => {
                let (a, b) = bignum_operands(bytes, seed);
                bignum_source(&a, &b, None)
            }
            Workload::Checksum => checksum_source(&random_bytes(bytes, seed)),
        }
    }
}

/// Below this a time is noise.
const MIN_NS: u64 = 10_000;

pub fn bench(w: Workload, bytes: usize, seed: u64, reps: usize, base: &EngineConfig) -> Result<BenchResult, String> {
    let prog = assemble(&w.source(bytes, seed)).map_err(|e| e.to_string())?;
    let run = |mode: Mode| {
        let cfg = EngineConfig { mode, ..base.clone() };
        let mut best = u64::MAX;
        let mut ex = None;
        for _ in 0..reps.max(1) {
            let t = Instant::now();
            let e = explore(&prog, cfg.clone(), ManagerConfig::default());
            best = best.min(t.elapsed().as_nanos() as u64);
            ex = Some(e);
        }
        let t = ex.unwrap().totals;
        ModeRun {
            mode: mode_name(mode),
            wall_time_ns: best,
            blocks_native: t.blocks_native,
            blocks_interpreted: t.blocks_interpreted,
            txn_commits: t.txn_commits,
            txn_aborts: t.txn_aborts,
        }
    };
    let speculative = run(Mode::Speculative);
    let interpret_all = run(Mode::InterpretAll);
    let speedup = (bytes > 0 && speculative.wall_time_ns >= MIN_NS)
        .then(|| interpret_all.wall_time_ns as f64 / speculative.wall_time_ns as f64);
    Ok(BenchResult { workload: w.name(), bytes, speculative, interpret_all, speedup })
}
