//! Per-byte symbolic bookkeeping and poison sentinels.
//!
//! Symbolic bytes are tracked on aligned two-byte pairs: any pair holding a
//! symbolic byte contains the sentinel in memory, and both of its bytes are
//! marked symbolic. A byte that was concrete when its sibling got poisoned is
//! represented by a fresh variable pinned to its old value.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::expr::{SymExpr, VarId};
use crate::machine::{Fault, Memory, PAGE_BITS, PAGE_SIZE};

pub const DEFAULT_SENTINEL: u16 = 0xDEAD;
pub const CHECK_LANES: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum VarKind {
    /// The `ordinal`-th input byte of the path.
    Input { ordinal: u32 },
    /// A formerly concrete byte sharing a pair with a symbolic one.
    Pinned { value: u8 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct VarOrigin {
    pub addr: u64,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub kind: VarKind,
}

const WORDS: usize = (PAGE_SIZE / 64) as usize;

#[derive(Clone, Debug)]
pub struct ShadowState {
    bitmap: BTreeMap<u64, Arc<[u64; WORDS]>>,
    expr_map: BTreeMap<u64, SymExpr>,
    sentinel: u16,
    pending: Vec<(VarId, u8)>,
    vars: Vec<VarOrigin>,
    inputs: u32,
}

impl Default for ShadowState {
    fn default() -> Self {
        ShadowState::new(DEFAULT_SENTINEL)
    }
}

impl ShadowState {
    pub fn new(sentinel: u16) -> ShadowState {
        ShadowState {
            bitmap: BTreeMap::new(),
            expr_map: BTreeMap::new(),
            sentinel,
            pending: Vec::new(),
            vars: Vec::new(),
            inputs: 0,
        }
    }

    #[inline]
    pub fn sentinel(&self) -> u16 {
        self.sentinel
    }

    #[inline]
    pub fn is_symbolic(&self, addr: u64) -> bool {
        match self.bitmap.get(&(addr >> PAGE_BITS)) {
            Some(p) => {
                let bit = addr & (PAGE_SIZE - 1);
                p[(bit / 64) as usize] >> (bit % 64) & 1 == 1
            }
            None => false,
        }
    }

    /// True if any byte in `[addr, addr+len)` is symbolic.
    pub fn any_symbolic(&self, addr: u64, len: u64) -> bool {
        if self.expr_map.is_empty() {
            return false;
        }
        (0..len).any(|i| self.is_symbolic(addr.wrapping_add(i)))
    }

    fn set_bit(&mut self, addr: u64, on: bool) {
        let bit = addr & (PAGE_SIZE - 1);
        let page = self.bitmap.entry(addr >> PAGE_BITS).or_insert_with(|| Arc::new([0; WORDS]));
        let w = &mut Arc::make_mut(page)[(bit / 64) as usize];
        if on {
            *w |= 1 << (bit % 64);
        } else {
            *w &= !(1 << (bit % 64));
        }
    }

    fn mark(&mut self, addr: u64, e: SymExpr) {
        self.set_bit(addr, true);
        self.expr_map.insert(addr, e);
    }

    fn clear(&mut self, addr: u64) {
        self.set_bit(addr, false);
        self.expr_map.remove(&addr);
    }

    pub fn expr_at(&self, addr: u64) -> Option<&SymExpr> {
        self.expr_map.get(&addr)
    }

    /// Symbolic bytes in address order.
    pub fn symbolic_bytes(&self) -> impl Iterator<Item = (u64, &SymExpr)> + '_ {
        self.expr_map.iter().map(|(a, e)| (*a, e))
    }

    pub fn symbolic_count(&self) -> usize {
        self.expr_map.len()
    }

    pub fn vars(&self) -> &[VarOrigin] {
        &self.vars
    }

    pub fn origin(&self, v: VarId) -> Option<VarOrigin> {
        self.vars.get(v.0 as usize).copied()
    }

    pub fn input_count(&self) -> u32 {
        self.inputs
    }

    fn fresh(&mut self, origin: VarOrigin) -> VarId {
        let id = VarId(self.vars.len() as u32);
        self.vars.push(origin);
        id
    }

    fn fresh_input(&mut self, addr: u64) -> VarId {
        let ordinal = self.inputs;
        self.inputs += 1;
        self.fresh(VarOrigin { addr, kind: VarKind::Input { ordinal } })
    }

    fn pin(&mut self, addr: u64, value: u8) {
        let id = self.fresh(VarOrigin { addr, kind: VarKind::Pinned { value } });
        self.mark(addr, SymExpr::var(id));
        self.pending.push((id, value));
    }

    fn pinned_value(&self, addr: u64) -> Option<u8> {
        let v = self.expr_map.get(&addr)?.as_var()?;
        match self.origin(v)?.kind {
            VarKind::Pinned { value } => Some(value),
            VarKind::Input { .. } => None,
        }
    }

    fn write_sentinel(&self, mem: &mut Memory, base: u64) -> Result<(), Fault> {
        mem.write(base, 2, self.sentinel as u64)
    }

    /// Marks `addr` symbolic with `expr` and writes the sentinel over its
    /// pair. A concrete sibling becomes a pinned variable.
    pub fn poison_byte(&mut self, mem: &mut Memory, addr: u64, expr: SymExpr) -> Result<(), Fault> {
        debug_assert_eq!(expr.width(), 8);
        let base = addr & !1;
        let sib = addr ^ 1;
        mem.read(base, 2)?;
        if !self.is_symbolic(sib) {
            let v = mem.read_u8(sib)?;
            self.pin(sib, v);
        }
        self.mark(addr, expr);
        self.write_sentinel(mem, base)
    }

    /// Stores a concrete byte. If the sibling is still genuinely symbolic the
    /// pair keeps its sentinel and `addr` becomes a pinned variable.
    pub fn unpoison_byte(&mut self, mem: &mut Memory, addr: u64, value: u8) -> Result<(), Fault> {
        if !self.is_symbolic(addr) {
            return mem.write_u8(addr, value);
        }
        let sib = addr ^ 1;
        if !self.is_symbolic(sib) {
            // Unreachable while pairs are coherent.
            self.clear(addr);
            return mem.write_u8(addr, value);
        }
        if let Some(sv) = self.pinned_value(sib) {
            self.clear(addr);
            self.clear(sib);
            mem.write_u8(addr, value)?;
            return mem.write_u8(sib, sv);
        }
        if self.pinned_value(addr) != Some(value) {
            self.pin(addr, value);
        }
        Ok(())
    }

    /// Gives each byte of the range a fresh input variable, then poisons the
    /// covering pairs. Siblings inside the range never get pinned.
    pub fn make_symbolic_range(&mut self, mem: &mut Memory, addr: u64, len: u64) -> Result<Vec<VarId>, Fault> {
        for i in 0..len {
            mem.read_u8(addr.wrapping_add(i))?;
            mem.read_u8(addr.wrapping_add(i) ^ 1)?;
        }
        let mut ids = Vec::with_capacity(len as usize);
        for i in 0..len {
            let a = addr.wrapping_add(i);
            let id = self.fresh_input(a);
            self.mark(a, SymExpr::var(id));
            ids.push(id);
        }
        for pair in covering_pairs(addr, len) {
            for b in [pair, pair + 1] {
                if !self.is_symbolic(b) {
                    let v = mem.read_u8(b)?;
                    self.pin(b, v);
                }
            }
            self.write_sentinel(mem, pair)?;
        }
        Ok(ids)
    }

    /// Takes the sibling constraints recorded since the last call.
    pub fn drain_sibling_constraints(&mut self) -> Vec<(VarId, u8)> {
        core::mem::take(&mut self.pending)
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    /// Scans every mapped aligned pair and returns the first address where
    /// "holds the sentinel" and "contains a symbolic byte" disagree.
    pub fn coherence_violation(&self, mem: &Memory) -> Option<u64> {
        for (base, page) in mem.pages() {
            for off in (0..page.len()).step_by(2) {
                let a = base + off as u64;
                let sentinel = u16::from_le_bytes([page[off], page[off + 1]]) == self.sentinel;
                let sym = self.is_symbolic(a) || self.is_symbolic(a + 1);
                if sentinel != sym {
                    return Some(a);
                }
            }
        }
        None
    }
}

/// Aligned pair addresses touched by `[addr, addr+len)`.
pub fn covering_pairs(addr: u64, len: u64) -> impl Iterator<Item = u64> {
    let first = addr & !1;
    let last = if len == 0 { first } else { addr.wrapping_add(len - 1) & !1 };
    let n = if len == 0 { 0 } else { (last.wrapping_sub(first) >> 1) + 1 };
    (0..n).map(move |i| first.wrapping_add(2 * i))
}

/// The buffer has just become full; bulk-check it before recording more.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlushNeeded;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckResult {
    Clean,
    PoisonFound,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckBuffer {
    lanes: [u16; CHECK_LANES],
    count: usize,
}

impl Default for CheckBuffer {
    fn default() -> Self {
        CheckBuffer { lanes: [0; CHECK_LANES], count: 0 }
    }
}

impl CheckBuffer {
    pub fn new() -> CheckBuffer {
        CheckBuffer::default()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn lanes(&self) -> &[u16] {
        &self.lanes[..self.count]
    }

    #[inline]
    pub fn record_lane(&mut self, value: u16) -> Result<(), FlushNeeded> {
        assert!(self.count < CHECK_LANES, "check buffer overflow; flush on FlushNeeded");
        self.lanes[self.count] = value;
        self.count += 1;
        if self.count == CHECK_LANES {
            Err(FlushNeeded)
        } else {
            Ok(())
        }
    }

    pub fn bulk_check(&mut self, sentinel: u16) -> CheckResult {
        let hit = self.lanes[..self.count].iter().fold(false, |acc, l| acc | (*l == sentinel));
        self.count = 0;
        if hit {
            CheckResult::PoisonFound
        } else {
            CheckResult::Clean
        }
    }
}
