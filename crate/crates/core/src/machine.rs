//! Concrete machine state, sparse paged memory, and the native stepper.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use core::fmt;

use crate::expr::SymExpr;
use crate::isa::{AluOp, BlockId, Cond, Flag, FlagSet, Instr, Operand, Program, Reg, NUM_REGS};

pub const PAGE_BITS: u32 = 12;
pub const PAGE_SIZE: u64 = 1 << PAGE_BITS;

type Page = [u8; PAGE_SIZE as usize];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    Unmapped { addr: u64 },
    InvalidTarget { value: u64 },
    /// A jump read a flag that is dead or symbolic.
    FlagUnavailable,
    /// `make_symbolic`/`assume` reached the native stepper.
    NeedsInterpreter,
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fault::Unmapped { addr } => write!(f, "unmapped access at {addr:#x}"),
            Fault::InvalidTarget { value } => write!(f, "invalid control transfer to {value:#x}"),
            Fault::FlagUnavailable => f.write_str("read of an unavailable flag"),
            Fault::NeedsInterpreter => f.write_str("instruction requires the interpreter"),
        }
    }
}

/// Byte-addressed little-endian memory made of 4 KiB pages. Pages are shared
/// between clones and copied on first write.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct Memory {
    pages: BTreeMap<u64, Arc<Page>>,
}

impl fmt::Debug for Memory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Memory({} pages)", self.pages.len())
    }
}

impl Memory {
    pub fn new() -> Memory {
        Memory::default()
    }

    /// Maps zero-filled pages covering `[addr, addr+len)`.
    pub fn map(&mut self, addr: u64, len: u64) {
        if len == 0 {
            return;
        }
        let first = addr >> PAGE_BITS;
        let last = (addr + (len - 1)) >> PAGE_BITS;
        for p in first..=last {
            self.pages.entry(p).or_insert_with(|| Arc::new([0; PAGE_SIZE as usize]));
        }
    }

    #[inline]
    pub fn is_mapped(&self, addr: u64) -> bool {
        self.pages.contains_key(&(addr >> PAGE_BITS))
    }

    #[inline]
    pub fn read_u8(&self, addr: u64) -> Result<u8, Fault> {
        match self.pages.get(&(addr >> PAGE_BITS)) {
            Some(p) => Ok(p[(addr & (PAGE_SIZE - 1)) as usize]),
            None => Err(Fault::Unmapped { addr }),
        }
    }

    #[inline]
    pub fn write_u8(&mut self, addr: u64, value: u8) -> Result<(), Fault> {
        match self.pages.get_mut(&(addr >> PAGE_BITS)) {
            Some(p) => {
                Arc::make_mut(p)[(addr & (PAGE_SIZE - 1)) as usize] = value;
                Ok(())
            }
            None => Err(Fault::Unmapped { addr }),
        }
    }

    /// Little-endian read of `len` ≤ 8 bytes.
    pub fn read(&self, addr: u64, len: u8) -> Result<u64, Fault> {
        let off = (addr & (PAGE_SIZE - 1)) as usize;
        if off + len as usize <= PAGE_SIZE as usize {
            let page = self.pages.get(&(addr >> PAGE_BITS)).ok_or(Fault::Unmapped { addr })?;
            let mut buf = [0u8; 8];
            buf[..len as usize].copy_from_slice(&page[off..off + len as usize]);
            return Ok(u64::from_le_bytes(buf));
        }
        let mut v = 0u64;
        for i in 0..len as u64 {
            v |= (self.read_u8(addr.wrapping_add(i))? as u64) << (8 * i);
        }
        Ok(v)
    }

    /// Little-endian write of the low `len` ≤ 8 bytes of `value`. Nothing is
    /// written if any byte is unmapped.
    pub fn write(&mut self, addr: u64, len: u8, value: u64) -> Result<(), Fault> {
        for i in 0..len as u64 {
            let a = addr.wrapping_add(i);
            if !self.is_mapped(a) {
                return Err(Fault::Unmapped { addr: a });
            }
        }
        let bytes = value.to_le_bytes();
        for i in 0..len as u64 {
            self.write_u8(addr.wrapping_add(i), bytes[i as usize])?;
        }
        Ok(())
    }

    pub fn write_bytes(&mut self, addr: u64, bytes: &[u8]) -> Result<(), Fault> {
        for (i, b) in bytes.iter().enumerate() {
            self.write_u8(addr.wrapping_add(i as u64), *b)?;
        }
        Ok(())
    }

    /// Mapped pages in address order, as `(base address, contents)`.
    pub fn pages(&self) -> impl Iterator<Item = (u64, &[u8])> + '_ {
        self.pages.iter().map(|(k, p)| (k << PAGE_BITS, &p[..]))
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FlagValue {
    Concrete(bool),
    Symbolic(SymExpr),
    Dead,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Flags(pub [FlagValue; 4]);

impl Flags {
    pub fn concrete(zf: bool, sf: bool, cf: bool, of: bool) -> Flags {
        Flags([FlagValue::Concrete(zf), FlagValue::Concrete(sf), FlagValue::Concrete(cf), FlagValue::Concrete(of)])
    }

    #[inline]
    pub fn get(&self, f: Flag) -> &FlagValue {
        &self.0[f as usize]
    }

    #[inline]
    pub fn set(&mut self, f: Flag, v: FlagValue) {
        self.0[f as usize] = v;
    }

    /// Sets every flag outside `keep` to `Dead`.
    pub fn kill_except(&mut self, keep: FlagSet) {
        for f in Flag::ALL {
            if !keep.contains(f) {
                self.0[f as usize] = FlagValue::Dead;
            }
        }
    }

    /// True if no flag in `live` is symbolic.
    pub fn concrete_on(&self, live: FlagSet) -> bool {
        Flag::ALL.iter().all(|f| !live.contains(*f) || !matches!(self.0[*f as usize], FlagValue::Symbolic(_)))
    }

    fn bit(&self, f: Flag) -> Result<bool, Fault> {
        match self.get(f) {
            FlagValue::Concrete(b) => Ok(*b),
            _ => Err(Fault::FlagUnavailable),
        }
    }

    /// Evaluates a condition over concrete flags.
    pub fn eval(&self, cond: Cond) -> Result<bool, Fault> {
        let reads = cond.reads();
        let get = |f: Flag| if reads.contains(f) { self.bit(f) } else { Ok(false) };
        Ok(cond.holds(get(Flag::Z)?, get(Flag::S)?, get(Flag::C)?, get(Flag::O)?))
    }
}

/// `(block, index)`; `index == len` is the block's exit boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pc {
    pub block: BlockId,
    pub index: usize,
}

impl Pc {
    pub fn start(block: BlockId) -> Pc {
        Pc { block, index: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MachineState {
    pub regs: [u64; NUM_REGS],
    pub flags: Flags,
    pub pc: Pc,
    pub mem: Memory,
    pub halted: bool,
}

impl MachineState {
    #[inline]
    pub fn reg(&self, r: Reg) -> u64 {
        self.regs[r.index()]
    }

    #[inline]
    pub fn operand(&self, o: &Operand) -> u64 {
        match o {
            Operand::Reg(r) => self.regs[r.index()],
            Operand::Imm(v) => *v,
        }
    }

    /// True at a block's first instruction or at its exit.
    pub fn block_boundary(&self, prog: &Program) -> bool {
        self.pc.index == 0 || self.pc.index == prog.block(self.pc.block).len()
    }

    /// Moves a pc sitting at the exit of a fallthrough block to the start of
    /// the next block.
    pub fn normalize(&mut self, prog: &Program) {
        let b = prog.block(self.pc.block);
        if !self.halted && self.pc.index == b.len() {
            if let Some(next) = b.next.filter(|_| !b.instrs.last().is_some_and(Instr::is_terminator)) {
                self.pc = Pc::start(next);
            }
        }
    }
}

impl Program {
    /// The state before the first instruction: data, zero, symbolic and
    /// stack regions mapped; registers zero except `sp`; flags clear.
    pub fn initial_state(&self) -> MachineState {
        let mut mem = Memory::new();
        for d in &self.data {
            mem.map(d.addr, d.bytes.len() as u64);
        }
        for (a, l) in self.zero.iter().chain(&self.symbolic) {
            mem.map(*a, *l);
        }
        let mut regs = [0u64; NUM_REGS];
        if let Some((base, len)) = self.stack {
            mem.map(base, len);
            regs[Reg::SP.index()] = base + len;
        }
        for d in &self.data {
            mem.write_bytes(d.addr, &d.bytes).expect("data region mapped");
        }
        MachineState {
            regs,
            flags: Flags::concrete(false, false, false, false),
            pc: Pc::start(self.entry),
            mem,
            halted: false,
        }
    }
}

/// Observes native memory traffic. `read` and `write` run before the access
/// with memory still holding the old value; `guard` runs before an indirect
/// control transfer.
pub trait AccessHook {
    type Error: From<Fault>;
    fn read(&mut self, mem: &Memory, addr: u64, len: u8) -> Result<(), Self::Error>;
    fn write(&mut self, mem: &Memory, addr: u64, len: u8) -> Result<(), Self::Error>;
    fn guard(&mut self) -> Result<(), Self::Error>;
}

/// A hook that observes nothing.
pub struct NoHook;

impl AccessHook for NoHook {
    type Error = Fault;
    #[inline]
    fn read(&mut self, _: &Memory, _: u64, _: u8) -> Result<(), Fault> {
        Ok(())
    }
    #[inline]
    fn write(&mut self, _: &Memory, _: u64, _: u8) -> Result<(), Fault> {
        Ok(())
    }
    #[inline]
    fn guard(&mut self) -> Result<(), Fault> {
        Ok(())
    }
}

/// Result value and `(zf, sf, cf, of)` of a 64-bit ALU operation.
pub fn alu(op: AluOp, a: u64, b: u64) -> (u64, [bool; 4]) {
    let (r, cf, of) = match op {
        AluOp::Add => {
            let (r, c) = a.overflowing_add(b);
            (r, c, ((a ^ r) & (b ^ r)) >> 63 == 1)
        }
        AluOp::Sub => {
            let r = a.wrapping_sub(b);
            (r, a < b, ((a ^ b) & (a ^ r)) >> 63 == 1)
        }
        AluOp::Mul => (a.wrapping_mul(b), false, false),
        AluOp::And => (a & b, false, false),
        AluOp::Or => (a | b, false, false),
        AluOp::Xor => (a ^ b, false, false),
        AluOp::Shl => (a << (b & 63), false, false),
        AluOp::Shr => (a >> (b & 63), false, false),
    };
    (r, [r == 0, r >> 63 == 1, cf, of])
}

fn set_flags(state: &mut MachineState, f: [bool; 4]) {
    state.flags = Flags::concrete(f[0], f[1], f[2], f[3]);
}

fn load<H: AccessHook>(state: &MachineState, hook: &mut H, addr: u64, len: u8) -> Result<u64, H::Error> {
    hook.read(&state.mem, addr, len)?;
    Ok(state.mem.read(addr, len)?)
}

fn store<H: AccessHook>(state: &mut MachineState, hook: &mut H, addr: u64, len: u8, v: u64) -> Result<(), H::Error> {
    // Fault before the hook so that the hook sees only mapped writes.
    for i in 0..len as u64 {
        let a = addr.wrapping_add(i);
        if !state.mem.is_mapped(a) {
            return Err(Fault::Unmapped { addr: a }.into());
        }
    }
    hook.write(&state.mem, addr, len)?;
    Ok(state.mem.write(addr, len, v)?)
}

fn jump(state: &mut MachineState, prog: &Program, value: u64) -> Result<(), Fault> {
    let b = prog.target(value).ok_or(Fault::InvalidTarget { value })?;
    state.pc = Pc::start(b);
    Ok(())
}

/// Executes the instruction at `state.pc` natively. Operands are taken as
/// concrete; shadow state is never consulted here.
///
/// On error the state may be partially updated; transactions undo it.
pub fn step_concrete<H: AccessHook>(state: &mut MachineState, prog: &Program, hook: &mut H) -> Result<(), H::Error> {
    let pc = state.pc;
    let instr = &prog.block(pc.block).instrs[pc.index];
    let sp = Reg::SP.index();
    match instr {
        Instr::Mov { dst, src } => state.regs[dst.index()] = state.operand(src),
        Instr::Load { dst, mem } => {
            let addr = mem.address(state.reg(mem.base));
            state.regs[dst.index()] = load(state, hook, addr, mem.width.bytes())?;
        }
        Instr::Store { mem, src } => {
            let addr = mem.address(state.reg(mem.base));
            let v = state.operand(src);
            store(state, hook, addr, mem.width.bytes(), v)?;
        }
        Instr::Alu { op, dst, src } => {
            let (r, f) = alu(*op, state.reg(*dst), state.operand(src));
            state.regs[dst.index()] = r;
            set_flags(state, f);
        }
        Instr::Cmp { lhs, rhs } => {
            let (_, f) = alu(AluOp::Sub, state.reg(*lhs), state.operand(rhs));
            set_flags(state, f);
        }
        Instr::Test { lhs, rhs } => {
            let (_, f) = alu(AluOp::And, state.reg(*lhs), state.operand(rhs));
            set_flags(state, f);
        }
        Instr::Push { src } => {
            let v = state.operand(src);
            let nsp = state.regs[sp].wrapping_sub(8);
            store(state, hook, nsp, 8, v)?;
            state.regs[sp] = nsp;
        }
        Instr::Pop { dst } => {
            let v = load(state, hook, state.regs[sp], 8)?;
            state.regs[sp] = state.regs[sp].wrapping_add(8);
            state.regs[dst.index()] = v;
        }
        Instr::MakeSymbolic { .. } | Instr::Assume { .. } => return Err(Fault::NeedsInterpreter.into()),
        Instr::Jmp { target } => {
            state.pc = Pc::start(*target);
            return Ok(());
        }
        Instr::Jcc { cond, target, fallthrough } => {
            let taken = state.flags.eval(*cond)?;
            state.pc = Pc::start(if taken { *target } else { *fallthrough });
            return Ok(());
        }
        Instr::Jmpi { target } => {
            hook.guard()?;
            let v = state.reg(*target);
            jump(state, prog, v)?;
            return Ok(());
        }
        Instr::Call { target, ret } => {
            let nsp = state.regs[sp].wrapping_sub(8);
            store(state, hook, nsp, 8, ret.0 as u64)?;
            state.regs[sp] = nsp;
            state.pc = Pc::start(*target);
            return Ok(());
        }
        Instr::Calli { target, ret } => {
            hook.guard()?;
            let v = state.reg(*target);
            prog.target(v).ok_or(Fault::InvalidTarget { value: v })?;
            let nsp = state.regs[sp].wrapping_sub(8);
            store(state, hook, nsp, 8, ret.0 as u64)?;
            state.regs[sp] = nsp;
            jump(state, prog, v)?;
            return Ok(());
        }
        Instr::Ret => {
            let v = load(state, hook, state.regs[sp], 8)?;
            hook.guard()?;
            state.regs[sp] = state.regs[sp].wrapping_add(8);
            jump(state, prog, v)?;
            return Ok(());
        }
        Instr::Halt => {
            state.halted = true;
            state.pc.index += 1;
            return Ok(());
        }
    }
    state.pc.index += 1;
    Ok(())
}

/// Runs the rest of the current block natively and stops at its exit
/// boundary (normalized to the next block start) or at halt.
pub fn run_block_concrete<H: AccessHook>(state: &mut MachineState, prog: &Program, hook: &mut H) -> Result<(), H::Error> {
    let block = state.pc.block;
    let len = prog.block(block).len();
    while !state.halted && state.pc.block == block && state.pc.index < len {
        step_concrete(state, prog, hook)?;
        if state.pc.index == 0 {
            // control transferred, possibly to this same block
            return Ok(());
        }
    }
    state.normalize(prog);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;

    fn run(src: &str) -> MachineState {
        let p = assemble(src).unwrap();
        let mut s = p.initial_state();
        let mut steps = 0;
        while !s.halted {
            run_block_concrete(&mut s, &p, &mut NoHook).unwrap();
            steps += 1;
            assert!(steps < 10_000);
        }
        s
    }

    #[test]
    fn add_small() {
        let s = run("main:\n mov r1, 5\n mov r2, 7\n add r1, r2\n halt\n");
        assert_eq!(s.regs[1], 12);
        assert_eq!(s.flags, Flags::concrete(false, false, false, false));
    }

    #[test]
    fn cmp_self_sets_zf() {
        let s = run("main:\n mov r1, 9\n cmp r1, r1\n halt\n");
        assert_eq!(s.flags, Flags::concrete(true, false, false, false));
    }

    #[test]
    fn byte_load_then_add_does_not_wrap_at_eight_bits() {
        let s = run(".data 0x1000 \"ff\"\nmain:\n mov r2, 0x1000\n load r1, [r2].b\n add r1, 1\n halt\n");
        assert_eq!(s.regs[1], 0x100);
    }

    #[test]
    fn boundary_positions() {
        let p = assemble("main:\n mov r1, 1\n mov r1, 2\n mov r1, 3\nb:\n halt\n").unwrap();
        let mut s = p.initial_state();
        assert!(s.block_boundary(&p));
        step_concrete(&mut s, &p, &mut NoHook).unwrap();
        step_concrete(&mut s, &p, &mut NoHook).unwrap();
        assert!(!s.block_boundary(&p));
        step_concrete(&mut s, &p, &mut NoHook).unwrap();
        assert_eq!(s.pc, Pc { block: BlockId(0), index: 3 });
        assert!(s.block_boundary(&p));
        s.normalize(&p);
        assert_eq!(s.pc, Pc::start(BlockId(1)));
    }

    #[test]
    fn unmapped_access_faults() {
        let p = assemble("main:\n mov r2, 0x9000\n load r1, [r2].q\n halt\n").unwrap();
        let mut s = p.initial_state();
        assert_eq!(run_block_concrete(&mut s, &p, &mut NoHook), Err(Fault::Unmapped { addr: 0x9000 }));
    }

    #[test]
    fn call_and_ret() {
        let s = run(".stack 0x8000 0x100\n.entry main\nf:\n mov r1, 42\n ret\nmain:\n call f\n add r1, 1\n halt\n");
        assert_eq!(s.regs[1], 43);
        assert_eq!(s.regs[15], 0x8100);
    }

    #[test]
    fn subtraction_flags() {
        let (r, f) = alu(AluOp::Sub, 1, 2);
        assert_eq!(r, u64::MAX);
        assert_eq!(f, [false, true, true, false]);
        let (_, f) = alu(AluOp::Add, i64::MAX as u64, 1);
        assert_eq!(f, [false, true, false, true]);
        let (_, f) = alu(AluOp::Sub, i64::MIN as u64, 1);
        assert_eq!(f, [false, false, false, true]);
    }

    #[test]
    fn clones_share_pages_until_written() {
        let mut m = Memory::new();
        m.map(0x1000, 16);
        let c = m.clone();
        m.write_u8(0x1000, 7).unwrap();
        assert_eq!(c.read_u8(0x1000), Ok(0));
        assert_eq!(m.read(0x1000, 2), Ok(7));
    }
}
