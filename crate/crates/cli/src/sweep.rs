//! Run time against the position of the first symbolic byte of a bignum
//! addition.

use std::time::Instant;

use serde::Serialize;
use txsym_core::asm::assemble;
use txsym_core::engine::{EngineConfig, Mode};
use txsym_core::isa::Program;
use txsym_core::manager::{explore, ManagerConfig};
use txsym_core::report::Exploration;
use txsym_core::solver::{SatResult, Solver};

use crate::workloads::{bignum_operands, bignum_source};

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    /// Index of the symbolic byte; equal to the operand size when none is.
    pub index: usize,
    pub mode: &'static str,
    pub wall_time_ns: u64,
    pub native_fraction: f64,
    pub blocks_native: u64,
    pub blocks_interpreted: u64,
    /// Some path's constraints were too large to enumerate.
    pub feasibility_unknown: bool,
}

pub fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Speculative => "speculative",
        Mode::InterpretAll => "interpret-all",
    }
}

/// `0, step, 2 * step, ...` up to and including `bytes`.
pub fn sample_indices(bytes: usize, step: usize) -> Vec<usize> {
    let step = step.max(1);
    let mut v: Vec<usize> = (0..bytes).step_by(step).collect();
    v.push(bytes);
    v
}

fn feasibility_unknown(ex: &Exploration, enum_limit: usize) -> bool {
    let mut solver = Solver::new(enum_limit);
    ex.paths.iter().any(|p| solver.check_sat(&p.constraints) == SatResult::BudgetExceeded)
}

/// One row per index and mode. A first untimed run per cell collects the
/// counts; each time is then the minimum over `reps` runs, interleaved
/// across indices so a transient slowdown of the host does not land on all
/// repetitions of one index.
pub fn sweep(bytes: usize, step: usize, reps: usize, seed: u64, base: &EngineConfig) -> Result<Vec<SweepRow>, String> {
    let (a, b) = bignum_operands(bytes, seed);
    let mut cells: Vec<(Program, EngineConfig, SweepRow)> = Vec::new();
    for index in sample_indices(bytes, step) {
        let src = bignum_source(&a, &b, (index < bytes).then_some(index));
        let prog = assemble(&src).map_err(|e| e.to_string())?;
        for mode in [Mode::Speculative, Mode::InterpretAll] {
            let cfg = EngineConfig { mode, ..base.clone() };
            let ex = explore(&prog, cfg.clone(), ManagerConfig::default());
            let t = &ex.totals;
            let total = t.blocks_native + t.blocks_interpreted;
            let row = SweepRow {
                index,
                mode: mode_name(mode),
                wall_time_ns: u64::MAX,
                native_fraction: if total == 0 { 1.0 } else { t.blocks_native as f64 / total as f64 },
                blocks_native: t.blocks_native,
                blocks_interpreted: t.blocks_interpreted,
                feasibility_unknown: feasibility_unknown(&ex, cfg.enum_limit),
            };
            cells.push((prog.clone(), cfg, row));
        }
    }
    for _ in 0..reps.max(1) {
        for (prog, cfg, row) in cells.iter_mut() {
            let t = Instant::now();
            let ex = explore(prog, cfg.clone(), ManagerConfig::default());
            let ns = t.elapsed().as_nanos() as u64;
            drop(ex);
            row.wall_time_ns = row.wall_time_ns.min(ns);
        }
    }
    Ok(cells.into_iter().map(|(_, _, row)| row).collect())
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("index,mode,wall_time_ns,native_fraction,blocks_native,blocks_interpreted,feasibility_unknown\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{:.6},{},{},{}\n",
            r.index, r.mode, r.wall_time_ns, r.native_fraction, r.blocks_native, r.blocks_interpreted, r.feasibility_unknown
        ));
    }
    s
}
