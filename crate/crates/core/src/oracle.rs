//! Brute-force comparison of an exploration against concrete runs over
//! every input.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::expr::{Compiled, SymExpr, VarId};
use crate::interp::RegValue;
use crate::isa::Program;
use crate::path::{PathState, PathStatus};
use crate::reference::{run_reference, RefOutcome};
use crate::report::{materialize, Exploration};
use crate::shadow::VarKind;

/// Mismatch messages kept in the result; the count covers all of them.
const KEEP: usize = 16;

#[derive(Clone, Debug, Default)]
pub struct OracleResult {
    pub input_bytes: u32,
    pub inputs_checked: u64,
    pub mismatch_count: u64,
    pub mismatches: Vec<String>,
}

impl OracleResult {
    pub fn ok(&self) -> bool {
        self.mismatch_count == 0
    }

    fn miss(&mut self, m: String) {
        self.mismatch_count += 1;
        if self.mismatches.len() < KEEP {
            self.mismatches.push(m);
        }
    }
}

struct Candidate<'a> {
    path: &'a PathState,
    compiled: Compiled,
    r0: SymExpr,
}

fn value_of<'a>(path: &'a PathState, inputs: &'a [u8]) -> impl Fn(VarId) -> u8 + 'a {
    move |v: VarId| match path.shadow.origin(v).map(|o| o.kind) {
        Some(VarKind::Input { ordinal }) => inputs.get(ordinal as usize).copied().unwrap_or(0),
        Some(VarKind::Pinned { value }) => value,
        None => 0,
    }
}

/// Checks that every input reaching a final state on the concrete machine
/// satisfies exactly one terminal path, with the same status, final
/// memory and `r0`, and that inputs rejected by an `assume` satisfy none.
/// `input_bytes` is the largest number of input bytes any path created.
pub fn check(prog: &Program, ex: &Exploration, max_steps: u64) -> OracleResult {
    let k = ex.paths.iter().map(|p| p.shadow.input_count()).max().unwrap_or(0);
    assert!(k <= 3, "brute force over {k} input bytes");
    let cands: Vec<Candidate<'_>> = ex
        .paths
        .iter()
        .map(|p| Candidate {
            path: p,
            compiled: Compiled::new(&p.constraints.assertions()),
            r0: match &p.ctx {
                Some(c) => match &c.regs[0] {
                    RegValue::Concrete(v) => SymExpr::constant(64, *v),
                    RegValue::Symbolic(e) => e.clone(),
                },
                None => SymExpr::constant(64, p.machine.regs[0]),
            },
        })
        .collect();
    let mut res = OracleResult { input_bytes: k, ..OracleResult::default() };
    let total = 1u64 << (8 * k);
    let mut scratch = Vec::new();
    let mut inputs = alloc::vec![0u8; k as usize];
    for n in 0..total {
        for (i, b) in inputs.iter_mut().enumerate() {
            *b = (n >> (8 * i)) as u8;
        }
        res.inputs_checked += 1;
        let concrete = run_reference(prog, &inputs, max_steps);
        let hits: Vec<&Candidate<'_>> =
            cands.iter().filter(|c| c.compiled.all_true(&value_of(c.path, &inputs), &mut scratch)).collect();
        match (&concrete, hits.as_slice()) {
            (RefOutcome::Infeasible, []) => {}
            (RefOutcome::Infeasible, hs) => {
                res.miss(format!("inputs {inputs:02x?}: infeasible concretely but matched {}", hs[0].path.id))
            }
            (_, []) => res.miss(format!("inputs {inputs:02x?}: {} concretely, no path", concrete.name())),
            (_, [c]) => {
                let status = c.path.status.name();
                if status != concrete.name() {
                    res.miss(format!("inputs {inputs:02x?}: {} concretely, path {} {status}", concrete.name(), c.path.id));
                    continue;
                }
                if let (RefOutcome::Completed(s), PathStatus::Completed) = (&concrete, &c.path.status) {
                    let f = value_of(c.path, &inputs);
                    if materialize(c.path, &f) != s.mem {
                        res.miss(format!("inputs {inputs:02x?}: final memory differs on {}", c.path.id));
                    } else if c.r0.eval(&f) != s.regs[0] {
                        res.miss(format!("inputs {inputs:02x?}: r0 differs on {}", c.path.id));
                    }
                }
            }
            (_, hs) => res.miss(format!("inputs {inputs:02x?}: matched {} paths", hs.len())),
        }
    }
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;
    use crate::engine::EngineConfig;
    use crate::manager::{explore, ManagerConfig};

    #[test]
    fn branchy_program_matches() {
        let p = assemble(
            ".symbolic 0x1000 1
             .zero 0x2000 8
             mov r1, 0x1000
             load r0, [r1].b
             cmp r0, 100
             jb small
             mov r2, 0x2000
             store [r2].b, r0
             halt
             small: assume r0
             add r0, 7
             halt",
        )
        .unwrap();
        let ex = explore(&p, EngineConfig::default(), ManagerConfig::default());
        let r = check(&p, &ex, 10_000);
        assert!(r.ok(), "{:?}", r.mismatches);
        assert_eq!(r.inputs_checked, 256);
    }
}
