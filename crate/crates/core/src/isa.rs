//! The register-machine ISA: registers, operands, instructions, basic blocks
//! and the assembled program.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub const NUM_REGS: usize = 16;
pub const DEFAULT_BLOCK_MAX_INSTR: usize = 50;

/// One of the sixteen 64-bit general purpose registers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reg(u8);

impl Reg {
    /// The stack pointer, `r15`.
    pub const SP: Reg = Reg(15);

    pub fn new(index: u8) -> Option<Reg> {
        ((index as usize) < NUM_REGS).then_some(Reg(index))
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Memory access width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Width {
    B,
    W,
    D,
    Q,
}

impl Width {
    #[inline]
    pub fn bytes(self) -> u8 {
        match self {
            Width::B => 1,
            Width::W => 2,
            Width::D => 4,
            Width::Q => 8,
        }
    }

    pub fn suffix(self) -> char {
        match self {
            Width::B => 'b',
            Width::W => 'w',
            Width::D => 'd',
            Width::Q => 'q',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BlockId(pub u32);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    Reg(Reg),
    Imm(u64),
}

/// `[base+disp].width`
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MemRef {
    pub base: Reg,
    pub disp: i64,
    pub width: Width,
}

impl MemRef {
    #[inline]
    pub fn address(&self, base: u64) -> u64 {
        base.wrapping_add(self.disp as u64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AluOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
    Shl,
    Shr,
}

impl AluOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            AluOp::Add => "add",
            AluOp::Sub => "sub",
            AluOp::Mul => "mul",
            AluOp::And => "and",
            AluOp::Or => "or",
            AluOp::Xor => "xor",
            AluOp::Shl => "shl",
            AluOp::Shr => "shr",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Flag {
    Z = 0,
    S = 1,
    C = 2,
    O = 3,
}

impl Flag {
    pub const ALL: [Flag; 4] = [Flag::Z, Flag::S, Flag::C, Flag::O];

    pub fn name(self) -> &'static str {
        match self {
            Flag::Z => "zf",
            Flag::S => "sf",
            Flag::C => "cf",
            Flag::O => "of",
        }
    }
}

/// A set of condition flags, as a 4-bit mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct FlagSet(u8);

impl FlagSet {
    pub const EMPTY: FlagSet = FlagSet(0);
    pub const ALL: FlagSet = FlagSet(0b1111);

    pub fn of(flags: &[Flag]) -> FlagSet {
        FlagSet(flags.iter().fold(0, |m, f| m | 1 << *f as u8))
    }

    #[inline]
    pub fn contains(self, f: Flag) -> bool {
        self.0 & (1 << f as u8) != 0
    }

    pub fn union(self, o: FlagSet) -> FlagSet {
        FlagSet(self.0 | o.0)
    }

    pub fn minus(self, o: FlagSet) -> FlagSet {
        FlagSet(self.0 & !o.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

/// Conditional-jump predicates over the flags, using the usual two's
/// complement conventions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cond {
    Z,
    Nz,
    C,
    Nc,
    S,
    Ns,
    O,
    No,
    /// signed <
    L,
    /// signed >=
    Ge,
    /// signed <=
    Le,
    /// signed >
    G,
    /// unsigned >
    A,
    /// unsigned <=
    Be,
}

impl Cond {
    pub const ALL: [Cond; 14] = [
        Cond::Z,
        Cond::Nz,
        Cond::C,
        Cond::Nc,
        Cond::S,
        Cond::Ns,
        Cond::O,
        Cond::No,
        Cond::L,
        Cond::Ge,
        Cond::Le,
        Cond::G,
        Cond::A,
        Cond::Be,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Cond::Z => "jz",
            Cond::Nz => "jnz",
            Cond::C => "jc",
            Cond::Nc => "jnc",
            Cond::S => "js",
            Cond::Ns => "jns",
            Cond::O => "jo",
            Cond::No => "jno",
            Cond::L => "jl",
            Cond::Ge => "jge",
            Cond::Le => "jle",
            Cond::G => "jg",
            Cond::A => "ja",
            Cond::Be => "jbe",
        }
    }

    pub fn from_mnemonic(m: &str) -> Option<Cond> {
        let alias = match m {
            "je" => "jz",
            "jne" => "jnz",
            "jb" => "jc",
            "jae" => "jnc",
            other => other,
        };
        Cond::ALL.into_iter().find(|c| c.mnemonic() == alias)
    }

    pub fn reads(self) -> FlagSet {
        use Flag::*;
        match self {
            Cond::Z | Cond::Nz => FlagSet::of(&[Z]),
            Cond::C | Cond::Nc => FlagSet::of(&[C]),
            Cond::S | Cond::Ns => FlagSet::of(&[S]),
            Cond::O | Cond::No => FlagSet::of(&[O]),
            Cond::L | Cond::Ge => FlagSet::of(&[S, O]),
            Cond::Le | Cond::G => FlagSet::of(&[Z, S, O]),
            Cond::A | Cond::Be => FlagSet::of(&[Z, C]),
        }
    }

    pub fn holds(self, zf: bool, sf: bool, cf: bool, of: bool) -> bool {
        match self {
            Cond::Z => zf,
            Cond::Nz => !zf,
            Cond::C => cf,
            Cond::Nc => !cf,
            Cond::S => sf,
            Cond::Ns => !sf,
            Cond::O => of,
            Cond::No => !of,
            Cond::L => sf != of,
            Cond::Ge => sf == of,
            Cond::Le => zf || sf != of,
            Cond::G => !zf && sf == of,
            Cond::A => !cf && !zf,
            Cond::Be => cf || zf,
        }
    }
}

/// An instruction with every label already resolved to a block id.
///
/// `Jcc`, `Call` and `Calli` carry the block that follows them (fallthrough
/// or return site) so that each instruction is executable on its own.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Instr {
    Mov { dst: Reg, src: Operand },
    Load { dst: Reg, mem: MemRef },
    Store { mem: MemRef, src: Operand },
    Alu { op: AluOp, dst: Reg, src: Operand },
    Cmp { lhs: Reg, rhs: Operand },
    Test { lhs: Reg, rhs: Operand },
    Push { src: Operand },
    Pop { dst: Reg },
    MakeSymbolic { addr: Reg, len: Operand },
    Assume { cond: Reg },
    Jmp { target: BlockId },
    Jcc { cond: Cond, target: BlockId, fallthrough: BlockId },
    Jmpi { target: Reg },
    Call { target: BlockId, ret: BlockId },
    Calli { target: Reg, ret: BlockId },
    Ret,
    Halt,
}

impl Instr {
    pub fn is_terminator(&self) -> bool {
        matches!(
            self,
            Instr::Jmp { .. }
                | Instr::Jcc { .. }
                | Instr::Jmpi { .. }
                | Instr::Call { .. }
                | Instr::Calli { .. }
                | Instr::Ret
                | Instr::Halt
        )
    }

    /// Only these may transfer control to a computed address.
    pub fn is_indirect(&self) -> bool {
        matches!(self, Instr::Jmpi { .. } | Instr::Calli { .. } | Instr::Ret)
    }

    pub fn flags_read(&self) -> FlagSet {
        match self {
            Instr::Jcc { cond, .. } => cond.reads(),
            _ => FlagSet::EMPTY,
        }
    }

    pub fn flags_written(&self) -> FlagSet {
        match self {
            Instr::Alu { .. } | Instr::Cmp { .. } | Instr::Test { .. } => FlagSet::ALL,
            _ => FlagSet::EMPTY,
        }
    }

    /// Instructions that always run in the interpreter.
    pub fn needs_interpreter(&self) -> bool {
        matches!(self, Instr::MakeSymbolic { .. } | Instr::Assume { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Terminator {
    Fallthrough(BlockId),
    Jump(BlockId),
    Branch { cond: Cond, taken: BlockId, fallthrough: BlockId },
    Call { target: BlockId, ret: BlockId },
    Indirect,
    Halt,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasicBlock {
    pub id: BlockId,
    pub label: Option<String>,
    pub instrs: Vec<Instr>,
    /// The physically following block, if any.
    pub next: Option<BlockId>,
    pub live_in: FlagSet,
    pub live_out: FlagSet,
    /// Contains an instruction that is never executed natively.
    pub interp_only: bool,
}

impl BasicBlock {
    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    pub fn terminator(&self) -> Terminator {
        match self.instrs.last() {
            Some(Instr::Jmp { target }) => Terminator::Jump(*target),
            Some(Instr::Jcc { cond, target, fallthrough }) => {
                Terminator::Branch { cond: *cond, taken: *target, fallthrough: *fallthrough }
            }
            Some(Instr::Call { target, ret }) => Terminator::Call { target: *target, ret: *ret },
            Some(Instr::Jmpi { .. } | Instr::Calli { .. } | Instr::Ret) => Terminator::Indirect,
            Some(Instr::Halt) => Terminator::Halt,
            _ => Terminator::Fallthrough(self.next.expect("non-terminated block without successor")),
        }
    }

    /// Statically known successors; `None` for indirect transfers.
    pub fn successors(&self) -> Option<Vec<BlockId>> {
        Some(match self.terminator() {
            Terminator::Fallthrough(b) | Terminator::Jump(b) => alloc::vec![b],
            Terminator::Branch { taken, fallthrough, .. } => alloc::vec![taken, fallthrough],
            Terminator::Call { target, .. } => alloc::vec![target],
            Terminator::Halt => Vec::new(),
            Terminator::Indirect => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataRegion {
    pub addr: u64,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub blocks: Vec<BasicBlock>,
    pub entry: BlockId,
    pub labels: BTreeMap<String, BlockId>,
    pub data: Vec<DataRegion>,
    /// Zero-filled regions: `(addr, len)`.
    pub zero: Vec<(u64, u64)>,
    /// Bytes made symbolic before execution starts: `(addr, len)`.
    pub symbolic: Vec<(u64, u64)>,
    /// `(base, len)`; the stack pointer starts at `base + len`.
    pub stack: Option<(u64, u64)>,
    pub block_max_instr: usize,
}

impl Program {
    #[inline]
    pub fn block(&self, id: BlockId) -> &BasicBlock {
        &self.blocks[id.0 as usize]
    }

    /// Resolves a code address held in a register.
    pub fn target(&self, value: u64) -> Option<BlockId> {
        (value < self.blocks.len() as u64).then_some(BlockId(value as u32))
    }

    /// True if any instruction or directive introduces symbolic data.
    pub fn uses_symbolic(&self) -> bool {
        !self.symbolic.is_empty()
            || self.blocks.iter().any(|b| b.instrs.iter().any(|i| matches!(i, Instr::MakeSymbolic { .. })))
    }

    pub fn instr_count(&self) -> usize {
        self.blocks.iter().map(BasicBlock::len).sum()
    }
}
