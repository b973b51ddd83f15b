//! Results of an exploration.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use sha2::{Digest, Sha256};

use crate::expr::VarId;
use crate::interp::RegValue;
use crate::machine::Memory;
use crate::path::{PathState, PathStats, PathStatus};
use crate::shadow::VarKind;
use crate::solver::{Model, SatResult, Solver};

/// Budget for rendering one constraint as SMT-LIB text.
const SMT_BUDGET: usize = 1 << 20;

/// Terminal paths of a run, sorted by id.
#[derive(Debug)]
pub struct Exploration {
    pub paths: Vec<PathState>,
    /// A cap cut the run short.
    pub partial: bool,
    pub totals: PathStats,
    pub forks: u64,
    pub peak_live: usize,
    /// Blocks run to completion across all paths, counted by the manager.
    pub blocks_executed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PathCounts {
    pub completed: u64,
    pub infeasible: u64,
    pub errored: u64,
}

impl Exploration {
    pub fn counts(&self) -> PathCounts {
        let mut c = PathCounts::default();
        for p in &self.paths {
            match p.status {
                PathStatus::Completed => c.completed += 1,
                PathStatus::Infeasible => c.infeasible += 1,
                PathStatus::Errored(_) => c.errored += 1,
                _ => {}
            }
        }
        c
    }

    pub fn report(&self, solver: &mut Solver<'_>) -> ExplorationReport {
        ExplorationReport {
            partial: self.partial,
            forks: self.forks,
            counts: self.counts(),
            paths: self.paths.iter().map(|p| PathReport::new(p, solver)).collect(),
        }
    }
}

/// SHA-256 over every mapped page. A concrete byte hashes as `0x00, byte`,
/// a symbolic one as `0x01` followed by its expression hash.
pub fn memory_digest(path: &PathState) -> String {
    let mut h = Sha256::new();
    for (base, page) in path.machine.mem.pages() {
        h.update(base.to_le_bytes());
        for (i, b) in page.iter().enumerate() {
            match path.shadow.expr_at(base + i as u64) {
                Some(e) => {
                    h.update([1u8]);
                    h.update(e.hash().to_le_bytes());
                }
                None => h.update([0u8, *b]),
            }
        }
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Memory with every symbolic byte evaluated under `value_of`.
pub fn materialize(path: &PathState, value_of: &dyn Fn(VarId) -> u8) -> Memory {
    let mut mem = path.machine.mem.clone();
    for (addr, e) in path.shadow.symbolic_bytes() {
        mem.write_u8(addr, e.eval(value_of) as u8).expect("symbolic bytes are mapped");
    }
    mem
}

/// Input bytes of a model, by input ordinal.
pub fn input_model(path: &PathState, model: &Model) -> BTreeMap<u32, u8> {
    let mut out = BTreeMap::new();
    for (i, o) in path.shadow.vars().iter().enumerate() {
        if let VarKind::Input { ordinal } = o.kind {
            out.insert(ordinal, model.get(VarId(i as u32)));
        }
    }
    out
}

/// Final `r0`, when concrete.
pub fn exit_value(path: &PathState) -> Option<u64> {
    match &path.ctx {
        Some(ctx) => match &ctx.regs[0] {
            RegValue::Concrete(v) => Some(*v),
            RegValue::Symbolic(e) => e.as_const(),
        },
        None => Some(path.machine.regs[0]),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PathReport {
    pub id: crate::path::PathId,
    pub status: &'static str,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub message: Option<String>,
    pub depth: u32,
    pub exit: Option<u64>,
    /// SMT-LIB rendering of every assertion.
    pub constraints: Vec<String>,
    /// Input ordinal to byte; absent when the model could not be enumerated.
    pub model: Option<BTreeMap<u32, u8>>,
    pub digest: String,
    pub stats: PathStats,
}

impl PathReport {
    pub fn new(p: &PathState, solver: &mut Solver<'_>) -> PathReport {
        let model = match p.status {
            PathStatus::Infeasible => None,
            _ => match solver.check_sat(&p.constraints) {
                SatResult::Sat(m) => Some(input_model(p, &m)),
                _ => None,
            },
        };
        PathReport {
            id: p.id.clone(),
            status: p.status.name(),
            message: match &p.status {
                PathStatus::Errored(m) => Some(m.clone()),
                _ => None,
            },
            depth: p.depth,
            exit: exit_value(p),
            constraints: p.constraints.assertions().iter().map(|c| c.to_smt(SMT_BUDGET)).collect(),
            model,
            digest: memory_digest(p),
            stats: p.stats.clone(),
        }
    }

    /// The fields that do not depend on how blocks were executed.
    pub fn semantic_eq(&self, o: &PathReport) -> bool {
        self.id == o.id
            && self.status == o.status
            && self.message == o.message
            && self.exit == o.exit
            && self.constraints == o.constraints
            && self.model == o.model
            && self.digest == o.digest
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ExplorationReport {
    pub partial: bool,
    pub forks: u64,
    pub counts: PathCounts,
    pub paths: Vec<PathReport>,
}

impl ExplorationReport {
    /// Equal up to execution statistics.
    pub fn semantic_eq(&self, o: &ExplorationReport) -> bool {
        self.partial == o.partial
            && self.forks == o.forks
            && self.counts == o.counts
            && self.paths.len() == o.paths.len()
            && self.paths.iter().zip(&o.paths).all(|(a, b)| a.semantic_eq(b))
    }

    /// Paths whose fields differ, by id.
    pub fn diff(&self, o: &ExplorationReport) -> Vec<String> {
        let mut out = Vec::new();
        if self.paths.len() != o.paths.len() {
            out.push(alloc::format!("path count {} vs {}", self.paths.len(), o.paths.len()));
        }
        for (a, b) in self.paths.iter().zip(&o.paths) {
            if !a.semantic_eq(b) {
                out.push(alloc::format!("{}", a.id));
            }
        }
        out
    }
}
