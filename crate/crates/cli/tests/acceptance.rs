//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Built with `harness = false` so the lines come out in order.

mod common;
#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::exprgen::{gen, oracle as expr_oracle};
use support::progen::{program, Shape};
use support::Stream;
use txsym::bench::{bench, Workload};
use txsym::sweep::sweep;
use txsym_core::asm::assemble;
use txsym_core::audit::TxnAudit;
use txsym_core::engine::{EngineConfig, InjectAt, Mode};
use txsym_core::expr::{Compiled, SymExpr, VarId};
use txsym_core::isa::Program;
use txsym_core::manager::{explore, explore_observed, ManagerConfig};
use txsym_core::oracle;
use txsym_core::path::PathStatus;
use txsym_core::solver::{ConstraintSet, SatResult, Solver};
use txsym_core::txn::StrideConfig;

const ORACLE_MAX_STEPS: u64 = 100_000;
const ORACLE_MIN_PROGRAMS: usize = 20;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const ROLLBACK_PROGRAMS: u32 = 1000;
const SWEEP_BYTES: usize = 50 * 1024;
const SWEEP_STEP: usize = 5 * 1024;
const SWEEP_MIN_INDICES: usize = 10;
const SWEEP_REPS: usize = 7;
const SWEEP_FLAT_TOLERANCE: f64 = 0.10;
const SWEEP_BUDGET: Duration = Duration::from_secs(300);
const BENCH_BYTES: usize = 100 * 1024;
const BENCH_REPS: usize = 3;
const BENCH_MIN_SPEEDUP: f64 = 5.0;
const SIMPLIFY_EXPRS: u32 = 10_000;
const SIMPLIFY_ASSIGNMENTS: u32 = 8;
const PARTITION_SETS: u32 = 500;
const SEED: u64 = 0x7873_796d;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn words(rng: &mut ChaCha8Rng, n: usize) -> Vec<u32> {
    (0..n).map(|_| rng.gen()).collect()
}

fn oracle_equivalence(corpus: &[(String, Program)]) -> Outcome {
    let t = Instant::now();
    let mut checked = 0;
    let mut inputs = 0;
    let mut bad = Vec::new();
    for (name, p) in corpus {
        let ex = explore(p, EngineConfig::default(), ManagerConfig::default());
        let r = oracle::check(p, &ex, ORACLE_MAX_STEPS);
        if matches!(r.input_bytes, 1 | 2) {
            checked += 1;
        }
        inputs += r.inputs_checked;
        if !r.ok() {
            bad.push(format!("{name}: {}", r.mismatches.join("; ")));
        }
    }
    let el = t.elapsed();
    outcome(
        bad.is_empty() && checked >= ORACLE_MIN_PROGRAMS && el < ORACLE_BUDGET,
        format!("{checked} programs with 1-2 input bytes, {inputs} inputs, {} mismatching, {el:.1?} {bad:?}", bad.len()),
    )
}

fn mode_equivalence(corpus: &[(String, Program)]) -> Outcome {
    let mut diffs = Vec::new();
    for (name, p) in corpus {
        let run = |mode| explore(p, EngineConfig { mode, ..EngineConfig::default() }, ManagerConfig::default()).report(&mut Solver::default());
        let (a, b) = (run(Mode::Speculative), run(Mode::InterpretAll));
        if !a.semantic_eq(&b) {
            diffs.push(format!("{name}: {:?}", a.diff(&b)));
        }
    }
    outcome(diffs.is_empty(), format!("{} programs, {} with diffs {diffs:?}", corpus.len(), diffs.len()))
}

fn rollback_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut aborts = 0;
    let mut diffs = Vec::new();
    for i in 0..ROLLBACK_PROGRAMS {
        let shape = Shape { segments: rng.gen_range(2..10), symbolic: rng.gen_range(0..3), ..Shape::default() };
        let src = program(&mut Stream::new(words(&mut rng, 96)), shape);
        let p = assemble(&src).expect("generated program assembles");
        let inject = (0..rng.gen_range(1..6)).map(|_| InjectAt { txn: rng.gen_range(1..10), block: rng.gen_range(1..17) }).collect();
        let mut audit = TxnAudit::new(&p);
        explore_observed(&p, EngineConfig { inject, ..EngineConfig::default() }, ManagerConfig::default(), &mut audit);
        aborts += audit.counts.aborts;
        if !audit.rollback_diffs.is_empty() {
            diffs.push(format!("program {i}: {:?}", audit.rollback_diffs));
        }
    }
    outcome(
        diffs.is_empty() && aborts > 0,
        format!("{ROLLBACK_PROGRAMS} programs, {aborts} aborted transactions, {} images differ {diffs:?}", diffs.len()),
    )
}

fn deferred_soundness(corpus: &[(String, Program)]) -> Outcome {
    let mut commits = 0;
    let mut blocks = 0;
    let mut violations = Vec::new();
    let mut audit_one = |name: &str, p: &Program| {
        let mut audit = TxnAudit::new(p);
        explore_observed(p, EngineConfig::default(), ManagerConfig::default(), &mut audit);
        commits += audit.counts.commits;
        blocks += audit.counts.replayed_blocks;
        if !audit.violations.is_empty() {
            violations.push(format!("{name}: {:?}", audit.violations));
        }
    };
    for (name, p) in corpus {
        audit_one(name, p);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 1);
    for i in 0..200 {
        let shape = Shape { segments: rng.gen_range(2..10), symbolic: rng.gen_range(1..3), ..Shape::default() };
        let p = assemble(&program(&mut Stream::new(words(&mut rng, 96)), shape)).expect("generated program assembles");
        audit_one(&format!("random {i}"), &p);
    }
    outcome(
        violations.is_empty() && commits > 0,
        format!("{commits} commits, {blocks} blocks replayed, {} violations {violations:?}", violations.len()),
    )
}

#[derive(Clone, Copy, Debug)]
enum Pattern {
    Poison(u32),
    Fault(u32),
    Capacity(u32),
    Injected(u32),
}

/// Straight-line blocks with the abort trigger in block `pos` (1-based) of
/// the first transaction. Each trigger aborts every transaction containing
/// it but runs fine in the interpreter, except the fault, which also ends
/// the path there.
fn stride_program(pattern: Pattern) -> (String, Vec<InjectAt>, usize) {
    let mut src = String::from(".zero 0x5000 16\n.symbolic 0x5000 1\n.zero 0x6000 16\n");
    let (pos, trigger, inject, cap) = match pattern {
        Pattern::Poison(c) => (c + 1, "    mov r1, 0x5000\n    load r2, [r1].b\n    mov r2, 0\n", vec![], 4096),
        Pattern::Fault(p) => (p, "    mov r1, 0x900000\n    load r2, [r1].b\n", vec![], 4096),
        Pattern::Capacity(p) => (p, "    mov r1, 0x6000\n    store [r1].q, 1\n", vec![], 4),
        Pattern::Injected(p) => (p, "", vec![InjectAt { txn: 1, block: p }], 4096),
    };
    for b in 1..=40 {
        src.push_str(&format!("b{b}:\n    add r3, 1\n"));
        if b == pos {
            src.push_str(trigger);
        }
    }
    src.push_str("    halt\n");
    (src, inject, cap)
}

/// Retry strides the recovery rule prescribes for the first abort.
fn prescribed(pattern: Pattern, smax: u32) -> Vec<u32> {
    match pattern {
        Pattern::Poison(0) => vec![],
        Pattern::Poison(c) => vec![c],
        _ => std::iter::successors(Some(smax / 2), |s| Some(s / 2)).take_while(|s| *s >= 1).collect(),
    }
}

fn stride_conformance() -> Outcome {
    let mut rows = 0;
    let mut wrong = Vec::new();
    for smax in [4u32, 8, 16] {
        let mut patterns: Vec<Pattern> = (0..16).filter(|c| *c < smax).map(Pattern::Poison).collect();
        for p in 1..=smax {
            patterns.extend([Pattern::Fault(p), Pattern::Capacity(p), Pattern::Injected(p)]);
        }
        for pat in patterns {
            rows += 1;
            let (src, inject, cap) = stride_program(pat);
            let p = assemble(&src).expect("stride program assembles");
            let cfg = EngineConfig {
                stride: StrideConfig { stride_max: smax, stride_min: 1, write_log_capacity: cap, ..StrideConfig::default() },
                inject,
                ..EngineConfig::default()
            };
            let ex = explore(&p, cfg, ManagerConfig::default());
            let path = &ex.paths[0];
            let want_status = matches!(pat, Pattern::Fault(_));
            let got = &path.stats.retry_strides;
            if ex.paths.len() != 1 || *got != prescribed(pat, smax) || matches!(path.status, PathStatus::Errored(_)) != want_status {
                wrong.push(format!("smax {smax} {pat:?}: {got:?} {}", path.status.name()));
            }
        }
    }
    outcome(wrong.is_empty(), format!("{rows} patterns, {} mismatching {wrong:?}", wrong.len()))
}

fn sweep_trend() -> Outcome {
    let t = Instant::now();
    let rows = match sweep(SWEEP_BYTES, SWEEP_STEP, SWEEP_REPS, SEED, &EngineConfig::default()) {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let el = t.elapsed();
    let series = |mode: &str| -> Vec<(usize, f64)> {
        rows.iter().filter(|r| r.mode == mode).map(|r| (r.index, r.wall_time_ns as f64 / 1e6)).collect()
    };
    let speculative_ms = series("speculative");
    let all = series("interpret-all");
    let non_increasing = speculative_ms.windows(2).all(|w| w[1].1 <= w[0].1);
    let mean = all.iter().map(|x| x.1).sum::<f64>() / all.len() as f64;
    let spread = all.iter().map(|x| (x.1 - mean).abs() / mean).fold(0.0, f64::max);
    // Both modes interpret everything when the first byte is symbolic, so
    // the curves must start together (or speculative above) and cross.
    let starts_together = speculative_ms[0].1 >= all[0].1 * (1.0 - SWEEP_FLAT_TOLERANCE);
    let crossover = (0..speculative_ms.len())
        .find(|&i| speculative_ms[i..].iter().zip(&all[i..]).all(|(s, a)| s.1 < a.1))
        .filter(|_| starts_together);
    let fmt = |v: &[(usize, f64)]| v.iter().map(|(i, ms)| format!("{i}:{ms:.1}")).collect::<Vec<_>>().join(" ");
    outcome(
        speculative_ms.len() >= SWEEP_MIN_INDICES && non_increasing && spread <= SWEEP_FLAT_TOLERANCE && crossover.is_some() && el < SWEEP_BUDGET,
        format!(
            "(a) non-increasing {non_increasing} (b) interpret-all spread {:.1}% (c) crossover at index {:?}, {el:.1?}; speculative ms [{}] interpret-all ms [{}]",
            spread * 100.0,
            crossover.map(|i| speculative_ms[i].0),
            fmt(&speculative_ms),
            fmt(&all)
        ),
    )
}

fn bignum_speedup() -> Outcome {
    match bench(Workload::Bignum, BENCH_BYTES, SEED, BENCH_REPS, &EngineConfig::default()) {
        Ok(r) => {
            let s = r.speedup.unwrap_or(0.0);
            outcome(
                s >= BENCH_MIN_SPEEDUP && r.speculative.blocks_interpreted == 0,
                format!(
                    "speedup {s:.1}x ({:.1} ms vs {:.1} ms), blocks_interpreted {}",
                    r.speculative.wall_time_ns as f64 / 1e6,
                    r.interpret_all.wall_time_ns as f64 / 1e6,
                    r.speculative.blocks_interpreted
                ),
            )
        }
        Err(e) => outcome(false, e),
    }
}

fn two_var_set(s: &mut Stream) -> Vec<SymExpr> {
    let n = 1 + s.below(4) as usize;
    (0..n)
        .map(|_| {
            if s.chance(25) {
                SymExpr::eq(SymExpr::var(VarId(s.below(2))), SymExpr::constant(8, s.below(256) as u64))
            } else {
                gen(s, 1, 4, 2)
            }
        })
        .collect()
}

fn solver_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 2);
    let widths = [1u8, 8, 16, 32, 33, 64];
    let mut simplify_bad = 0;
    for _ in 0..SIMPLIFY_EXPRS {
        let mut s = Stream::new(words(&mut rng, 48));
        let w = *s.pick(&widths);
        let e = gen(&mut s, w, 5, 3);
        let simple = e.simplify();
        for _ in 0..SIMPLIFY_ASSIGNMENTS {
            let a: [u8; 3] = rng.gen();
            let f = |v: VarId| a[v.0 as usize % 3];
            if simple.width() != w || simple.eval(&f) as u128 != expr_oracle(&e, &f) {
                simplify_bad += 1;
            }
        }
    }
    let mut partition_bad = 0;
    let mut scratch = Vec::new();
    for _ in 0..PARTITION_SETS {
        let cs = two_var_set(&mut Stream::new(words(&mut rng, 64)));
        let whole = Compiled::new(&cs);
        let want = (0..=u16::MAX).any(|n| {
            let a = n.to_le_bytes();
            whole.all_true(&|v: VarId| a[v.0 as usize], &mut scratch)
        });
        let mut set = ConstraintSet::new();
        for c in &cs {
            set.assert(c.clone());
        }
        let ok = match Solver::default().check_sat(&set) {
            SatResult::Sat(m) => want && cs.iter().all(|c| c.eval(&|v| m.get(v)) == 1),
            SatResult::Unsat => !want,
            SatResult::BudgetExceeded => false,
        };
        if !ok {
            partition_bad += 1;
        }
    }
    outcome(
        simplify_bad == 0 && partition_bad == 0,
        format!(
            "simplify {SIMPLIFY_EXPRS}x{SIMPLIFY_ASSIGNMENTS} evaluations, {simplify_bad} mismatching; {PARTITION_SETS} constraint sets, {partition_bad} disagreeing with whole-set enumeration"
        ),
    )
}

fn main() -> ExitCode {
    let corpus = common::corpus();
    let criteria: [(&str, &dyn Fn() -> Outcome); 8] = [
        ("1 oracle equivalence", &|| oracle_equivalence(&corpus)),
        ("2 mode equivalence", &|| mode_equivalence(&corpus)),
        ("3 rollback exactness", &rollback_exactness),
        ("4 deferred-check soundness", &|| deferred_soundness(&corpus)),
        ("5 stride policy", &stride_conformance),
        ("6 sweep trend", &sweep_trend),
        ("7 concrete bignum speedup", &bignum_speedup),
        ("8 solver properties", &solver_properties),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
