//! Library side of the `txsym` command: workloads, parallel exploration,
//! statistics, sweeps and benchmarks.

pub mod bench;
pub mod parallel;
pub mod stats;
pub mod sweep;
pub mod workloads;

use std::path::Path;

use anyhow::{bail, Context};
use txsym_core::engine::InjectAt;
use txsym_core::isa::Program;
use txsym_core::machine::{run_block_concrete, Fault, MachineState, NoHook};
use txsym_core::report::Exploration;
use txsym_core::smt;

/// Parses `txn=M,block=N`.
pub fn parse_inject(s: &str) -> anyhow::Result<InjectAt> {
    let (mut txn, mut block) = (None, None);
    for part in s.split(',') {
        let (k, v) = part.split_once('=').with_context(|| format!("expected key=value in `{part}`"))?;
        let v: u64 = v.trim().parse().with_context(|| format!("bad number in `{part}`"))?;
        match k.trim() {
            "txn" => txn = Some(v),
            "block" => block = Some(u32::try_from(v)?),
            other => bail!("unknown key `{other}`"),
        }
    }
    match (txn, block) {
        (Some(txn), Some(block)) if txn >= 1 && block >= 1 => Ok(InjectAt { txn, block }),
        _ => bail!("expected txn=M,block=N with both at least 1"),
    }
}

pub struct ConcreteRun {
    pub state: MachineState,
    pub blocks: u64,
    pub result: Result<(), Fault>,
}

/// Runs a program without any symbolic machinery.
pub fn run_concrete(prog: &Program, max_blocks: u64) -> anyhow::Result<ConcreteRun> {
    if prog.uses_symbolic() {
        bail!("concrete-only mode cannot run a program with symbolic inputs");
    }
    let mut state = prog.initial_state();
    let mut blocks = 0;
    while !state.halted {
        if blocks >= max_blocks {
            bail!("block budget of {max_blocks} exhausted");
        }
        if let Err(f) = run_block_concrete(&mut state, prog, &mut NoHook) {
            return Ok(ConcreteRun { state, blocks, result: Err(f) });
        }
        blocks += 1;
    }
    Ok(ConcreteRun { state, blocks, result: Ok(()) })
}

/// Writes one SMT-LIB file per terminal path, named after its id.
pub fn dump_paths(dir: &Path, ex: &Exploration) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    for p in &ex.paths {
        let q = smt::query(&p.constraints.assertions());
        std::fs::write(dir.join(format!("path-{}.smt2", p.id)), q)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use txsym_core::asm::assemble;

    #[test]
    fn inject_syntax() {
        assert_eq!(parse_inject("txn=2,block=4").unwrap(), InjectAt { txn: 2, block: 4 });
        assert_eq!(parse_inject(" block=1 , txn=3").unwrap(), InjectAt { txn: 3, block: 1 });
        assert!(parse_inject("txn=0,block=1").is_err());
        assert!(parse_inject("txn=1").is_err());
        assert!(parse_inject("txn=1,blk=2").is_err());
    }

    #[test]
    fn concrete_only_rejects_symbolic() {
        let p = assemble(".symbolic 0x1000 1\nhalt").unwrap();
        assert!(run_concrete(&p, 10).is_err());
        let p = assemble("mov r0, 3\nhalt").unwrap();
        let r = run_concrete(&p, 10).unwrap();
        assert_eq!(r.state.regs[0], 3);
        assert_eq!(r.blocks, 1);
    }
}
