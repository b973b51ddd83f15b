//! Plain concrete execution with symbolic inputs replaced by given bytes.
//! Used as the oracle for exploration results.

use crate::isa::{Instr, Program};
use crate::machine::{step_concrete, Fault, MachineState, NoHook};

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum RefOutcome {
    Completed(MachineState),
    /// An `assume` saw zero.
    Infeasible,
    Errored(Fault),
    /// More input bytes were requested than supplied.
    OutOfInputs,
    OutOfSteps,
}

impl RefOutcome {
    pub fn name(&self) -> &'static str {
        match self {
            RefOutcome::Completed(_) => "completed",
            RefOutcome::Infeasible => "infeasible",
            RefOutcome::Errored(_) => "errored",
            RefOutcome::OutOfInputs => "out_of_inputs",
            RefOutcome::OutOfSteps => "out_of_steps",
        }
    }
}

/// Runs `prog` to completion. Input bytes are consumed in the order the
/// symbolic engine creates input variables: `.symbolic` regions first, then
/// each `make_symbolic` as it executes.
#[allow(clippy::result_large_err)]
pub fn run_reference(prog: &Program, inputs: &[u8], max_steps: u64) -> RefOutcome {
    let mut s = prog.initial_state();
    let mut next = 0usize;
    let mut feed = |s: &mut MachineState, addr: u64, len: u64| -> Result<(), RefOutcome> {
        for i in 0..len {
            let b = *inputs.get(next).ok_or(RefOutcome::OutOfInputs)?;
            next += 1;
            s.mem.write_u8(addr.wrapping_add(i), b).map_err(RefOutcome::Errored)?;
        }
        Ok(())
    };
    for (a, l) in &prog.symbolic {
        if let Err(o) = feed(&mut s, *a, *l) {
            return o;
        }
    }
    let mut steps = 0u64;
    while !s.halted {
        if steps >= max_steps {
            return RefOutcome::OutOfSteps;
        }
        steps += 1;
        s.normalize(prog);
        let instr = &prog.block(s.pc.block).instrs[s.pc.index];
        match instr {
            Instr::MakeSymbolic { addr, len } => {
                let (a, l) = (s.reg(*addr), s.operand(len));
                if let Err(o) = feed(&mut s, a, l) {
                    return o;
                }
                s.pc.index += 1;
            }
            Instr::Assume { cond } => {
                if s.reg(*cond) == 0 {
                    return RefOutcome::Infeasible;
                }
                s.pc.index += 1;
            }
            _ => {
                if let Err(f) = step_concrete(&mut s, prog, &mut NoHook) {
                    return RefOutcome::Errored(f);
                }
            }
        }
    }
    RefOutcome::Completed(s)
}
