//! Random terminating programs in `.tasm` text.
//!
//! Layout: a chain of segments with forward conditional jumps, counted
//! loops and calls into leaf functions. `r8` holds the data base, `r13`
//! counts loop iterations; the body uses `r0`..`r7` only.

use std::fmt::Write;

use super::Stream;

pub const DATA: u64 = 0x4000;
pub const DATA_LEN: u64 = 256;

#[derive(Clone, Copy, Debug)]
pub struct Shape {
    pub segments: u32,
    /// Input bytes at the start of the data area.
    pub symbolic: u32,
    pub functions: u32,
    /// Allow `jmpi`/`calli` on concrete targets.
    pub indirect: bool,
}

impl Default for Shape {
    fn default() -> Self {
        Shape { segments: 6, symbolic: 0, functions: 2, indirect: true }
    }
}

fn reg(s: &mut Stream) -> String {
    format!("r{}", s.below(8))
}

fn operand(s: &mut Stream) -> String {
    if s.chance(50) {
        reg(s)
    } else {
        match s.below(4) {
            0 => format!("{}", s.below(16)),
            1 => format!("{:#x}", s.u64()),
            2 => format!("-{}", 1 + s.below(100)),
            _ => format!("{:#x}", s.below(0x10000)),
        }
    }
}

fn mem(s: &mut Stream) -> String {
    let w = *s.pick(&[("b", 1u64), ("w", 2), ("d", 4), ("q", 8)]);
    let disp = s.below((DATA_LEN - w.1 + 1) as u32);
    format!("[r8+{disp}].{}", w.0)
}

/// Straight-line instructions. `stack` allows balanced push/pop.
fn straight(s: &mut Stream, out: &mut String, n: u32, stack: bool) {
    let mut pushed = 0;
    for _ in 0..n {
        let line = match s.below(12) {
            0 | 1 => format!("mov {}, {}", reg(s), operand(s)),
            2..=5 => {
                let op = *s.pick(&["add", "sub", "mul", "and", "or", "xor", "shl", "shr"]);
                format!("{op} {}, {}", reg(s), operand(s))
            }
            6 | 7 => format!("load {}, {}", reg(s), mem(s)),
            8 | 9 => format!("store {}, {}", mem(s), operand(s)),
            10 => format!("{} {}, {}", s.pick(&["cmp", "test"]), reg(s), operand(s)),
            _ if stack && pushed < 4 && s.chance(50) => {
                pushed += 1;
                format!("push {}", operand(s))
            }
            _ if stack && pushed > 0 => {
                pushed -= 1;
                format!("pop {}", reg(s))
            }
            _ => format!("mov {}, {}", reg(s), operand(s)),
        };
        out.push_str("    ");
        out.push_str(&line);
        out.push('\n');
    }
    for _ in 0..pushed {
        writeln!(out, "    pop {}", reg(s)).unwrap();
    }
}

pub fn program(s: &mut Stream, shape: Shape) -> String {
    let mut out = String::new();
    writeln!(out, ".zero {DATA:#x} {DATA_LEN}").unwrap();
    writeln!(out, ".stack 0x8000 0x400").unwrap();
    if shape.symbolic > 0 {
        writeln!(out, ".symbolic {DATA:#x} {}", shape.symbolic).unwrap();
    }
    writeln!(out, "    mov r8, {DATA:#x}").unwrap();
    for i in 0..shape.symbolic {
        writeln!(out, "    load r{i}, [r8+{i}].b").unwrap();
    }
    let jccs = ["jz", "jnz", "jc", "jnc", "js", "jns", "jo", "jno", "jl", "jge", "jle", "jg", "ja", "jbe"];
    for i in 0..shape.segments {
        writeln!(out, "seg{i}:").unwrap();
        let n = 1 + s.below(8);
        straight(s, &mut out, n, true);
        let last = i + 1 == shape.segments;
        match s.below(6) {
            0 | 4 if !last => {
                let to = i + 1 + s.below(shape.segments - i - 1);
                if s.chance(60) {
                    writeln!(out, "    cmp r{}, {}", s.below(3), s.below(256)).unwrap();
                } else {
                    writeln!(out, "    cmp {}, {}", reg(s), operand(s)).unwrap();
                }
                writeln!(out, "    {} seg{to}", s.pick(&jccs)).unwrap();
            }
            1 => {
                writeln!(out, "    mov r13, {}", 1 + s.below(12)).unwrap();
                writeln!(out, "loop{i}:").unwrap();
                let n = 1 + s.below(6);
                straight(s, &mut out, n, true);
                writeln!(out, "    sub r13, 1\n    jnz loop{i}").unwrap();
            }
            2 if shape.functions > 0 => {
                let f = s.below(shape.functions);
                if shape.indirect && s.chance(40) {
                    writeln!(out, "    mov r9, @fn{f}\n    calli r9").unwrap();
                } else {
                    writeln!(out, "    call fn{f}").unwrap();
                }
            }
            3 if shape.indirect && !last => {
                writeln!(out, "    mov r9, @seg{}\n    jmpi r9", i + 1).unwrap();
            }
            _ => {}
        }
    }
    writeln!(out, "    halt").unwrap();
    for f in 0..shape.functions {
        writeln!(out, "fn{f}:").unwrap();
        let n = 1 + s.below(6);
        straight(s, &mut out, n, true);
        writeln!(out, "    ret").unwrap();
    }
    out
}
