//! Assembler and disassembler for the `.tasm` text format.
//!
//! Grammar (one item per line, `;` starts a comment):
//!
//! ```text
//! .entry <label>
//! .data <addr> "<hex bytes>"      ; whitespace inside the quotes is ignored
//! .zero <addr> <len>
//! .symbolic <addr> <len>
//! .stack <addr> <len>             ; sp = addr + len
//! <label>:  [instruction]
//! <mnemonic> <operand>, <operand>
//! ```
//!
//! Operands are registers (`r0`..`r15`, `sp`), immediates (decimal or `0x`
//! hex, optionally negative, or `@label` for a code address) and memory
//! references `[rN]`, `[rN+disp]`, `[rN-disp]` with a mandatory width suffix
//! `.b`, `.w`, `.d` or `.q`.
//!
//! Blocks end at terminators and at labels, and straight-line runs longer
//! than the block cap are split with a synthetic fallthrough.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write};

use crate::isa::{
    AluOp, BasicBlock, BlockId, Cond, DataRegion, FlagSet, Instr, MemRef, Operand, Program, Reg, Width,
    DEFAULT_BLOCK_MAX_INSTR,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AsmError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for AsmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// All diagnostics produced by one assembly attempt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AsmErrors(pub Vec<AsmError>);

impl fmt::Display for AsmErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

const UNRESOLVED: BlockId = BlockId(u32::MAX);

struct Parsed {
    instr: Instr,
    label_ref: Option<String>,
    line: usize,
}

fn err(line: usize, message: impl Into<String>) -> AsmError {
    AsmError { line, message: message.into() }
}

fn parse_int(s: &str) -> Option<i128> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let body = body.replace('_', "");
    let v = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i128::from_str_radix(hex, 16).ok()?
    } else {
        body.parse::<i128>().ok()?
    };
    Some(if neg { -v } else { v })
}

fn parse_u64(s: &str) -> Option<u64> {
    let v = parse_int(s)?;
    if v < -(1i128 << 63) || v > u64::MAX as i128 {
        return None;
    }
    Some(v as u64)
}

fn parse_reg(s: &str) -> Option<Reg> {
    let s = s.trim();
    if s == "sp" {
        return Some(Reg::SP);
    }
    let n = s.strip_prefix('r')?;
    if n.is_empty() || !n.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Reg::new(n.parse().ok()?)
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

enum Opnd {
    Reg(Reg),
    Imm(u64),
    Label(String),
    Mem(MemRef),
}

fn parse_operand(s: &str) -> Result<Opnd, String> {
    let s = s.trim();
    if let Some(r) = parse_reg(s) {
        return Ok(Opnd::Reg(r));
    }
    if let Some(label) = s.strip_prefix('@') {
        if is_ident(label) {
            return Ok(Opnd::Label(label.to_string()));
        }
        return Err(format!("bad label reference `{s}`"));
    }
    if let Some(rest) = s.strip_prefix('[') {
        let (inner, suffix) = rest.split_once(']').ok_or_else(|| format!("unterminated memory operand `{s}`"))?;
        let width = match suffix.trim() {
            ".b" => Width::B,
            ".w" => Width::W,
            ".d" => Width::D,
            ".q" => Width::Q,
            "" => return Err(format!("memory operand `{s}` needs a width suffix (.b/.w/.d/.q)")),
            other => return Err(format!("unknown width suffix `{other}`")),
        };
        let inner = inner.trim();
        let split = inner.find(['+', '-']);
        let (base, disp) = match split {
            Some(i) => {
                let disp = parse_int(&inner[i..]).ok_or_else(|| format!("bad displacement in `{s}`"))?;
                (&inner[..i], disp)
            }
            None => (inner, 0),
        };
        let base = parse_reg(base).ok_or_else(|| format!("bad base register in `{s}`"))?;
        let disp = i64::try_from(disp).map_err(|_| format!("displacement out of range in `{s}`"))?;
        return Ok(Opnd::Mem(MemRef { base, disp, width }));
    }
    parse_u64(s).map(Opnd::Imm).ok_or_else(|| format!("cannot parse operand `{s}`"))
}

fn split_operands(s: &str) -> Vec<&str> {
    if s.trim().is_empty() {
        return Vec::new();
    }
    s.split(',').map(str::trim).collect()
}

fn parse_instr(mnemonic: &str, args: &str, line: usize) -> Result<Parsed, AsmError> {
    let ops = split_operands(args);
    let mut label_ref = None;
    let direct = matches!(mnemonic, "jmp" | "call") || Cond::from_mnemonic(mnemonic).is_some();
    let mut opnds = Vec::with_capacity(ops.len());
    if !direct {
        for o in &ops {
            opnds.push(parse_operand(o).map_err(|m| err(line, m))?);
        }
    }
    let arity = |n: usize| -> Result<(), AsmError> {
        if opnds.len() == n {
            Ok(())
        } else {
            Err(err(line, format!("`{mnemonic}` takes {n} operand(s), got {}", opnds.len())))
        }
    };
    let value = |o: &Opnd, label_ref: &mut Option<String>| -> Result<Operand, AsmError> {
        match o {
            Opnd::Reg(r) => Ok(Operand::Reg(*r)),
            Opnd::Imm(v) => Ok(Operand::Imm(*v)),
            Opnd::Label(l) => {
                *label_ref = Some(l.clone());
                Ok(Operand::Imm(u64::MAX))
            }
            Opnd::Mem(_) => Err(err(line, format!("`{mnemonic}` does not take a memory operand here"))),
        }
    };
    let reg = |o: &Opnd| -> Result<Reg, AsmError> {
        match o {
            Opnd::Reg(r) => Ok(*r),
            _ => Err(err(line, format!("`{mnemonic}` expects a register"))),
        }
    };
    let mem = |o: &Opnd| -> Result<MemRef, AsmError> {
        match o {
            Opnd::Mem(m) => Ok(*m),
            _ => Err(err(line, format!("`{mnemonic}` expects a memory operand"))),
        }
    };
    let target = |o: &Opnd, label_ref: &mut Option<String>| -> Result<(), AsmError> {
        match o {
            Opnd::Reg(_) | Opnd::Mem(_) | Opnd::Imm(_) => {
                // bare identifiers are parsed as labels below
                Err(err(line, format!("`{mnemonic}` expects a label")))
            }
            Opnd::Label(l) => {
                *label_ref = Some(l.clone());
                Ok(())
            }
        }
    };
    // Direct jumps take bare label names.
    let bare_label = |s: &str| -> Option<Opnd> { is_ident(s).then(|| Opnd::Label(s.to_string())) };

    let alu = |m: &str| -> Option<AluOp> {
        Some(match m {
            "add" => AluOp::Add,
            "sub" => AluOp::Sub,
            "mul" => AluOp::Mul,
            "and" => AluOp::And,
            "or" => AluOp::Or,
            "xor" => AluOp::Xor,
            "shl" => AluOp::Shl,
            "shr" => AluOp::Shr,
            _ => return None,
        })
    };

    let instr = match mnemonic {
        "mov" => {
            arity(2)?;
            Instr::Mov { dst: reg(&opnds[0])?, src: value(&opnds[1], &mut label_ref)? }
        }
        "load" => {
            arity(2)?;
            Instr::Load { dst: reg(&opnds[0])?, mem: mem(&opnds[1])? }
        }
        "store" => {
            arity(2)?;
            Instr::Store { mem: mem(&opnds[0])?, src: value(&opnds[1], &mut label_ref)? }
        }
        "cmp" | "test" => {
            arity(2)?;
            let lhs = reg(&opnds[0])?;
            let rhs = value(&opnds[1], &mut label_ref)?;
            if mnemonic == "cmp" {
                Instr::Cmp { lhs, rhs }
            } else {
                Instr::Test { lhs, rhs }
            }
        }
        "push" => {
            arity(1)?;
            Instr::Push { src: value(&opnds[0], &mut label_ref)? }
        }
        "pop" => {
            arity(1)?;
            Instr::Pop { dst: reg(&opnds[0])? }
        }
        "make_symbolic" => {
            arity(2)?;
            Instr::MakeSymbolic { addr: reg(&opnds[0])?, len: value(&opnds[1], &mut label_ref)? }
        }
        "assume" => {
            arity(1)?;
            Instr::Assume { cond: reg(&opnds[0])? }
        }
        "jmpi" => {
            arity(1)?;
            Instr::Jmpi { target: reg(&opnds[0])? }
        }
        "calli" => {
            arity(1)?;
            Instr::Calli { target: reg(&opnds[0])?, ret: UNRESOLVED }
        }
        "ret" => {
            arity(0)?;
            Instr::Ret
        }
        "halt" => {
            arity(0)?;
            Instr::Halt
        }
        "jmp" | "call" => {
            if ops.len() != 1 {
                return Err(err(line, format!("`{mnemonic}` takes 1 operand(s), got {}", ops.len())));
            }
            let o = bare_label(ops[0]).ok_or_else(|| err(line, format!("`{mnemonic}` expects a label")))?;
            target(&o, &mut label_ref)?;
            if mnemonic == "jmp" {
                Instr::Jmp { target: UNRESOLVED }
            } else {
                Instr::Call { target: UNRESOLVED, ret: UNRESOLVED }
            }
        }
        m => {
            if let Some(op) = alu(m) {
                arity(2)?;
                Instr::Alu { op, dst: reg(&opnds[0])?, src: value(&opnds[1], &mut label_ref)? }
            } else if let Some(cond) = Cond::from_mnemonic(m) {
                if ops.len() != 1 {
                    return Err(err(line, format!("`{m}` takes 1 operand(s), got {}", ops.len())));
                }
                let o = bare_label(ops[0]).ok_or_else(|| err(line, format!("`{m}` expects a label")))?;
                target(&o, &mut label_ref)?;
                Instr::Jcc { cond, target: UNRESOLVED, fallthrough: UNRESOLVED }
            } else {
                return Err(err(line, format!("unknown mnemonic `{m}`")));
            }
        }
    };
    Ok(Parsed { instr, label_ref, line })
}

fn parse_hex_bytes(s: &str) -> Option<Vec<u8>> {
    let digits: Vec<u8> = s.bytes().filter(|b| !b.is_ascii_whitespace()).collect();
    if !digits.len().is_multiple_of(2) {
        return None;
    }
    digits
        .chunks(2)
        .map(|pair| {
            let text = core::str::from_utf8(pair).ok()?;
            u8::from_str_radix(text, 16).ok()
        })
        .collect()
}

struct Builder {
    blocks: Vec<(Option<String>, Vec<Parsed>, usize)>,
    labels: BTreeMap<String, (usize, usize)>,
    max: usize,
    /// Labels seen since the last instruction; they name the next block.
    pending: Vec<(String, usize)>,
    open: bool,
}

impl Builder {
    fn start_block(&mut self, line: usize) {
        let name = self.pending.first().map(|(n, _)| n.clone());
        let idx = self.blocks.len();
        for (label, l) in self.pending.drain(..) {
            self.labels.insert(label, (idx, l));
        }
        self.blocks.push((name, Vec::new(), line));
        self.open = true;
    }

    fn push(&mut self, p: Parsed) {
        if !self.pending.is_empty() || !self.open || self.blocks.last().is_none_or(|b| b.1.len() >= self.max) {
            self.start_block(p.line);
        }
        let term = p.instr.is_terminator();
        self.blocks.last_mut().expect("open block").1.push(p);
        if term {
            self.open = false;
        }
    }
}

/// Assembles with the default 50-instruction block cap.
pub fn assemble(source: &str) -> Result<Program, AsmErrors> {
    assemble_with_limit(source, DEFAULT_BLOCK_MAX_INSTR)
}

pub fn assemble_with_limit(source: &str, block_max_instr: usize) -> Result<Program, AsmErrors> {
    assert!(block_max_instr >= 1);
    let mut errors = Vec::new();
    let mut b = Builder { blocks: Vec::new(), labels: BTreeMap::new(), max: block_max_instr, pending: Vec::new(), open: false };
    let mut entry: Option<(String, usize)> = None;
    let mut data = Vec::new();
    let mut zero = Vec::new();
    let mut symbolic = Vec::new();
    let mut stack = None;
    let mut seen_labels: BTreeMap<String, usize> = BTreeMap::new();

    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let text = raw.split(';').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        if let Some(directive) = text.strip_prefix('.') {
            let (name, rest) = directive.split_once(char::is_whitespace).unwrap_or((directive, ""));
            let rest = rest.trim();
            let two_nums = |rest: &str| -> Option<(u64, u64)> {
                let mut it = rest.split_whitespace();
                let a = parse_u64(it.next()?)?;
                let l = parse_u64(it.next()?)?;
                it.next().is_none().then_some((a, l))
            };
            match name {
                "entry" => {
                    if is_ident(rest) {
                        entry = Some((rest.to_string(), line));
                    } else {
                        errors.push(err(line, "`.entry` expects a label"));
                    }
                }
                "data" => {
                    let parsed = rest.split_once(char::is_whitespace).and_then(|(addr, bytes)| {
                        let addr = parse_u64(addr)?;
                        let bytes = bytes.trim().strip_prefix('"')?.strip_suffix('"')?;
                        Some((addr, parse_hex_bytes(bytes)?))
                    });
                    match parsed {
                        Some((addr, bytes)) => data.push((DataRegion { addr, bytes }, line)),
                        None => errors.push(err(line, "`.data` expects <addr> \"<hex bytes>\"")),
                    }
                }
                "zero" | "symbolic" | "stack" => match two_nums(rest) {
                    Some((addr, len)) if addr.checked_add(len).is_some() => match name {
                        "zero" => zero.push((addr, len, line)),
                        "symbolic" => symbolic.push((addr, len)),
                        _ => stack = Some((addr, len)),
                    },
                    _ => errors.push(err(line, format!("`.{name}` expects <addr> <len>"))),
                },
                other => errors.push(err(line, format!("unknown directive `.{other}`"))),
            }
            continue;
        }
        let mut text = text;
        if let Some((label, rest)) = text.split_once(':') {
            let label = label.trim();
            if is_ident(label) && !label.contains(char::is_whitespace) {
                if let Some(prev) = seen_labels.insert(label.to_string(), line) {
                    errors.push(err(line, format!("label `{label}` already defined on line {prev}")));
                }
                b.pending.push((label.to_string(), line));
                text = rest.trim();
                if text.is_empty() {
                    continue;
                }
            }
        }
        let (mnemonic, args) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
        match parse_instr(&mnemonic.to_ascii_lowercase(), args, line) {
            Ok(p) => b.push(p),
            Err(e) => errors.push(e),
        }
    }
    if !b.pending.is_empty() {
        let (label, line) = b.pending[0].clone();
        errors.push(err(line, format!("label `{label}` has no instructions after it")));
    }
    if b.blocks.is_empty() && errors.is_empty() {
        errors.push(err(0, "program has no instructions"));
    }

    let resolve = |label: &str, line: usize, errors: &mut Vec<AsmError>| -> BlockId {
        match b.labels.get(label) {
            Some((idx, _)) => BlockId(*idx as u32),
            None => {
                errors.push(err(line, format!("undefined label `{label}`")));
                UNRESOLVED
            }
        }
    };

    let n = b.blocks.len();
    let mut blocks = Vec::with_capacity(n);
    for (idx, (label, parsed, start_line)) in b.blocks.iter().enumerate() {
        let next = (idx + 1 < n).then(|| BlockId(idx as u32 + 1));
        let mut instrs = Vec::with_capacity(parsed.len());
        for p in parsed {
            let mut instr = p.instr.clone();
            let needs_next = matches!(instr, Instr::Jcc { .. } | Instr::Call { .. } | Instr::Calli { .. });
            if needs_next && next.is_none() {
                errors.push(err(p.line, "control falls off the end of the program after this instruction"));
            }
            let follow = next.unwrap_or(UNRESOLVED);
            let target = p.label_ref.as_deref().map(|l| resolve(l, p.line, &mut errors));
            match &mut instr {
                Instr::Jmp { target: t } => *t = target.unwrap_or(UNRESOLVED),
                Instr::Jcc { target: t, fallthrough, .. } => {
                    *t = target.unwrap_or(UNRESOLVED);
                    *fallthrough = follow;
                }
                Instr::Call { target: t, ret } => {
                    *t = target.unwrap_or(UNRESOLVED);
                    *ret = follow;
                }
                Instr::Calli { ret, .. } => *ret = follow,
                Instr::Mov { src, .. }
                | Instr::Store { src, .. }
                | Instr::Alu { src, .. }
                | Instr::Push { src }
                | Instr::Cmp { rhs: src, .. }
                | Instr::Test { rhs: src, .. }
                | Instr::MakeSymbolic { len: src, .. } => {
                    if let Some(t) = target {
                        *src = Operand::Imm(t.0 as u64);
                    }
                }
                _ => {}
            }
            instrs.push(instr);
        }
        let terminated = instrs.last().is_some_and(Instr::is_terminator);
        if !terminated && next.is_none() {
            let line = parsed.last().map_or(*start_line, |p| p.line);
            errors.push(err(line, "control falls off the end of the program"));
        }
        let interp_only = instrs.iter().any(Instr::needs_interpreter);
        blocks.push(BasicBlock {
            id: BlockId(idx as u32),
            label: label.clone(),
            instrs,
            next,
            live_in: FlagSet::EMPTY,
            live_out: FlagSet::EMPTY,
            interp_only,
        });
    }

    let entry = match entry {
        Some((label, line)) => resolve(&label, line, &mut errors),
        None => BlockId(0),
    };

    let mut regions: Vec<(u64, u64, usize)> = data.iter().map(|(d, l)| (d.addr, d.bytes.len() as u64, *l)).collect();
    regions.extend(zero.iter().copied());
    regions.sort();
    for w in regions.windows(2) {
        let (a0, l0, _) = w[0];
        let (a1, _, line) = w[1];
        if a0 + l0 > a1 {
            errors.push(err(line, format!("data region at {a1:#x} overlaps region at {a0:#x}")));
        }
    }

    if !errors.is_empty() {
        errors.sort_by_key(|e| e.line);
        return Err(AsmErrors(errors));
    }

    compute_liveness(&mut blocks);
    let labels = b.labels.iter().map(|(k, (idx, _))| (k.clone(), BlockId(*idx as u32))).collect();
    Ok(Program {
        blocks,
        entry,
        labels,
        data: data.into_iter().map(|(d, _)| d).collect(),
        zero: zero.into_iter().map(|(a, l, _)| (a, l)).collect(),
        symbolic,
        stack,
        block_max_instr,
    })
}

/// Backward dataflow over the flag registers.
///
/// Indirect transfers may reach any block, so their live-out set is the union
/// of every block's live-in set.
pub fn compute_liveness(blocks: &mut [BasicBlock]) {
    // (upward-exposed uses, defs) per block
    let summary: Vec<(FlagSet, FlagSet)> = blocks
        .iter()
        .map(|b| {
            let mut uses = FlagSet::EMPTY;
            let mut defs = FlagSet::EMPTY;
            for i in &b.instrs {
                uses = uses.union(i.flags_read().minus(defs));
                defs = defs.union(i.flags_written());
            }
            (uses, defs)
        })
        .collect();
    let succs: Vec<Option<Vec<BlockId>>> = blocks.iter().map(BasicBlock::successors).collect();
    let mut live_in = alloc::vec![FlagSet::EMPTY; blocks.len()];
    let mut live_out = alloc::vec![FlagSet::EMPTY; blocks.len()];
    loop {
        let mut changed = false;
        let any = live_in.iter().fold(FlagSet::EMPTY, |acc, s| acc.union(*s));
        for i in (0..blocks.len()).rev() {
            let out = match &succs[i] {
                Some(s) => s.iter().fold(FlagSet::EMPTY, |acc, b| acc.union(live_in[b.0 as usize])),
                None => any,
            };
            let (uses, defs) = summary[i];
            let inn = uses.union(out.minus(defs));
            if out != live_out[i] || inn != live_in[i] {
                live_out[i] = out;
                live_in[i] = inn;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    for (i, b) in blocks.iter_mut().enumerate() {
        b.live_in = live_in[i];
        b.live_out = live_out[i];
    }
}

fn fmt_operand(o: &Operand) -> String {
    match o {
        Operand::Reg(r) => r.to_string(),
        Operand::Imm(v) => format!("{v:#x}"),
    }
}

fn fmt_mem(m: &MemRef) -> String {
    let disp = if m.disp < 0 { format!("-{:#x}", m.disp.unsigned_abs()) } else { format!("+{:#x}", m.disp) };
    format!("[{}{}].{}", m.base, disp, m.width.suffix())
}

fn block_label(p: &Program, id: BlockId) -> String {
    match &p.block(id).label {
        Some(l) => l.clone(),
        None => format!("__b{}", id.0),
    }
}

/// Renders a program back to `.tasm` text. Every block gets a label so that
/// re-assembly reproduces the same block boundaries.
pub fn disassemble(p: &Program) -> String {
    let mut out = String::new();
    let _ = writeln!(out, ".entry {}", block_label(p, p.entry));
    for d in &p.data {
        let hex: String = d.bytes.iter().map(|b| format!("{b:02x}")).collect();
        let _ = writeln!(out, ".data {:#x} \"{}\"", d.addr, hex);
    }
    for (a, l) in &p.zero {
        let _ = writeln!(out, ".zero {a:#x} {l}");
    }
    for (a, l) in &p.symbolic {
        let _ = writeln!(out, ".symbolic {a:#x} {l}");
    }
    if let Some((a, l)) = p.stack {
        let _ = writeln!(out, ".stack {a:#x} {l:#x}");
    }
    for b in &p.blocks {
        let _ = writeln!(out, "{}:", block_label(p, b.id));
        for i in &b.instrs {
            let text = match i {
                Instr::Mov { dst, src } => format!("mov {dst}, {}", fmt_operand(src)),
                Instr::Load { dst, mem } => format!("load {dst}, {}", fmt_mem(mem)),
                Instr::Store { mem, src } => format!("store {}, {}", fmt_mem(mem), fmt_operand(src)),
                Instr::Alu { op, dst, src } => format!("{} {dst}, {}", op.mnemonic(), fmt_operand(src)),
                Instr::Cmp { lhs, rhs } => format!("cmp {lhs}, {}", fmt_operand(rhs)),
                Instr::Test { lhs, rhs } => format!("test {lhs}, {}", fmt_operand(rhs)),
                Instr::Push { src } => format!("push {}", fmt_operand(src)),
                Instr::Pop { dst } => format!("pop {dst}"),
                Instr::MakeSymbolic { addr, len } => format!("make_symbolic {addr}, {}", fmt_operand(len)),
                Instr::Assume { cond } => format!("assume {cond}"),
                Instr::Jmp { target } => format!("jmp {}", block_label(p, *target)),
                Instr::Jcc { cond, target, .. } => format!("{} {}", cond.mnemonic(), block_label(p, *target)),
                Instr::Jmpi { target } => format!("jmpi {target}"),
                Instr::Call { target, .. } => format!("call {}", block_label(p, *target)),
                Instr::Calli { target, .. } => format!("calli {target}"),
                Instr::Ret => "ret".to_string(),
                Instr::Halt => "halt".to_string(),
            };
            let _ = writeln!(out, "    {text}");
        }
    }
    out
}
