//! Bit-vector expressions over symbolic input bytes.
//!
//! Expressions are immutable DAGs behind [`Arc`]. Every node caches its width
//! and a structural hash, so equality checks, digests and hashing never walk
//! the tree. The public constructors (`add`, `eq`, `extract`, ...) simplify
//! locally as they build: constant subtrees fold, identities collapse and
//! constant-xor patterns inside equalities are rewritten. [`SymExpr::simplify`]
//! re-runs those rules bottom-up over an arbitrary tree.
//!
//! Long dependency chains are normal here (a symbolic carry threaded through
//! a 50KB addition is ~150k nodes deep), so nothing in this module recurses
//! on expression depth: traversal, evaluation, equality, printing and even
//! `Drop` use explicit stacks.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

/// Identifier of a symbolic byte variable (always 8 bits wide).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VarId(pub u32);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
    Shl,
    Shr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ult,
    Slt,
}

#[derive(Debug)]
pub enum Node {
    Const { width: u8, value: u64 },
    Var(VarId),
    Bin { op: BinOp, lhs: SymExpr, rhs: SymExpr },
    /// Produces a 1-bit result.
    Cmp { op: CmpOp, lhs: SymExpr, rhs: SymExpr },
    Extract { expr: SymExpr, lo: u8, width: u8 },
    Concat { hi: SymExpr, lo: SymExpr },
    Ite { cond: SymExpr, then: SymExpr, els: SymExpr },
    ZExt { expr: SymExpr, width: u8 },
    SExt { expr: SymExpr, width: u8 },
}

struct Inner {
    node: Node,
    width: u8,
    hash: u64,
}

impl Drop for Inner {
    fn drop(&mut self) {
        if matches!(self.node, Node::Const { .. } | Node::Var(_)) {
            return;
        }
        let mut stack = Vec::new();
        take_children(&mut self.node, &mut stack);
        while let Some(SymExpr(arc)) = stack.pop() {
            if let Some(mut inner) = Arc::into_inner(arc) {
                take_children(&mut inner.node, &mut stack);
            }
        }
    }
}

fn take_children(node: &mut Node, out: &mut Vec<SymExpr>) {
    let old = core::mem::replace(node, Node::Const { width: 1, value: 0 });
    match old {
        Node::Const { .. } | Node::Var(_) => {}
        Node::Bin { lhs, rhs, .. } | Node::Cmp { lhs, rhs, .. } => {
            out.push(lhs);
            out.push(rhs);
        }
        Node::Extract { expr, .. } | Node::ZExt { expr, .. } | Node::SExt { expr, .. } => {
            out.push(expr)
        }
        Node::Concat { hi, lo } => {
            out.push(hi);
            out.push(lo);
        }
        Node::Ite { cond, then, els } => {
            out.push(cond);
            out.push(then);
            out.push(els);
        }
    }
}

/// A shared, immutable bit-vector expression of width 1..=64.
#[derive(Clone)]
pub struct SymExpr(Arc<Inner>);

#[inline]
pub fn mask(width: u8) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

fn mix(h: u64, v: u64) -> u64 {
    let mut x = h ^ v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^ (x >> 31)
}

fn bin_tag(op: BinOp) -> u64 {
    match op {
        BinOp::Add => 10,
        BinOp::Sub => 11,
        BinOp::Mul => 12,
        BinOp::And => 13,
        BinOp::Or => 14,
        BinOp::Xor => 15,
        BinOp::Shl => 16,
        BinOp::Shr => 17,
    }
}

fn cmp_tag(op: CmpOp) -> u64 {
    match op {
        CmpOp::Eq => 20,
        CmpOp::Ult => 21,
        CmpOp::Slt => 22,
    }
}

fn sign_extend(value: u64, from: u8, to: u8) -> u64 {
    let v = value & mask(from);
    let signed = if from < 64 && (v >> (from - 1)) & 1 == 1 { v | !mask(from) } else { v };
    signed & mask(to)
}

pub(crate) fn fold_bin(op: BinOp, width: u8, a: u64, b: u64) -> u64 {
    let r = match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::And => a & b,
        BinOp::Or => a | b,
        BinOp::Xor => a ^ b,
        BinOp::Shl => {
            if b >= width as u64 {
                0
            } else {
                a << b
            }
        }
        BinOp::Shr => {
            if b >= width as u64 {
                0
            } else {
                (a & mask(width)) >> b
            }
        }
    };
    r & mask(width)
}

pub(crate) fn fold_cmp(op: CmpOp, width: u8, a: u64, b: u64) -> u64 {
    let (a, b) = (a & mask(width), b & mask(width));
    let r = match op {
        CmpOp::Eq => a == b,
        CmpOp::Ult => a < b,
        CmpOp::Slt => {
            let sa = sign_extend(a, width, 64) as i64;
            let sb = sign_extend(b, width, 64) as i64;
            sa < sb
        }
    };
    r as u64
}

#[allow(clippy::should_implement_trait)]
impl SymExpr {
    fn build(node: Node) -> SymExpr {
        let (width, hash) = match &node {
            Node::Const { width, value } => (*width, mix(mix(1, *width as u64), *value)),
            Node::Var(v) => (8, mix(2, v.0 as u64)),
            Node::Bin { op, lhs, rhs } => {
                assert_eq!(lhs.width(), rhs.width(), "{op:?} operand widths differ");
                (lhs.width(), mix(mix(mix(bin_tag(*op), lhs.width() as u64), lhs.hash()), rhs.hash()))
            }
            Node::Cmp { op, lhs, rhs } => {
                assert_eq!(lhs.width(), rhs.width(), "{op:?} operand widths differ");
                (1, mix(mix(cmp_tag(*op), lhs.hash()), rhs.hash()))
            }
            Node::Extract { expr, lo, width } => {
                assert!(*width >= 1 && *lo as u32 + *width as u32 <= expr.width() as u32);
                (*width, mix(mix(mix(30, *lo as u64), *width as u64), expr.hash()))
            }
            Node::Concat { hi, lo } => {
                let w = hi.width() as u32 + lo.width() as u32;
                assert!(w <= 64, "concat wider than 64 bits");
                (w as u8, mix(mix(31, hi.hash()), lo.hash()))
            }
            Node::Ite { cond, then, els } => {
                assert_eq!(cond.width(), 1);
                assert_eq!(then.width(), els.width());
                (then.width(), mix(mix(mix(32, cond.hash()), then.hash()), els.hash()))
            }
            Node::ZExt { expr, width } => {
                assert!(*width >= expr.width() && *width <= 64);
                (*width, mix(mix(33, *width as u64), expr.hash()))
            }
            Node::SExt { expr, width } => {
                assert!(*width >= expr.width() && *width <= 64);
                (*width, mix(mix(34, *width as u64), expr.hash()))
            }
        };
        SymExpr(Arc::new(Inner { node, width, hash }))
    }

    /// Builds a node exactly as given, with no simplification.
    pub fn from_node(node: Node) -> SymExpr {
        SymExpr::build(node)
    }

    pub fn constant(width: u8, value: u64) -> SymExpr {
        assert!((1..=64).contains(&width));
        SymExpr::build(Node::Const { width, value: value & mask(width) })
    }

    pub fn var(id: VarId) -> SymExpr {
        SymExpr::build(Node::Var(id))
    }

    pub fn bit(b: bool) -> SymExpr {
        SymExpr::constant(1, b as u64)
    }

    #[inline]
    pub fn width(&self) -> u8 {
        self.0.width
    }

    #[inline]
    pub fn node(&self) -> &Node {
        &self.0.node
    }

    /// Structural hash; equal expressions always have equal hashes.
    #[inline]
    pub fn hash(&self) -> u64 {
        self.0.hash
    }

    #[inline]
    pub fn as_const(&self) -> Option<u64> {
        match self.0.node {
            Node::Const { value, .. } => Some(value),
            _ => None,
        }
    }

    #[inline]
    pub fn as_var(&self) -> Option<VarId> {
        match self.0.node {
            Node::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn ptr_eq(&self, other: &SymExpr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    fn is_const_value(&self, v: u64) -> bool {
        self.as_const() == Some(v & mask(self.width()))
    }

    fn key(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    fn children(&self) -> ChildIter<'_> {
        ChildIter { node: &self.0.node, pos: 0 }
    }

    // ---- smart constructors -------------------------------------------------

    pub fn binary(op: BinOp, lhs: SymExpr, rhs: SymExpr) -> SymExpr {
        match op {
            BinOp::Add => SymExpr::add(lhs, rhs),
            BinOp::Sub => SymExpr::sub(lhs, rhs),
            BinOp::Mul => SymExpr::mul(lhs, rhs),
            BinOp::And => SymExpr::and(lhs, rhs),
            BinOp::Or => SymExpr::or(lhs, rhs),
            BinOp::Xor => SymExpr::xor(lhs, rhs),
            BinOp::Shl => SymExpr::shl(lhs, rhs),
            BinOp::Shr => SymExpr::shr(lhs, rhs),
        }
    }

    pub fn compare(op: CmpOp, lhs: SymExpr, rhs: SymExpr) -> SymExpr {
        match op {
            CmpOp::Eq => SymExpr::eq(lhs, rhs),
            CmpOp::Ult => SymExpr::ult(lhs, rhs),
            CmpOp::Slt => SymExpr::slt(lhs, rhs),
        }
    }

    fn fold2(op: BinOp, lhs: &SymExpr, rhs: &SymExpr) -> Option<SymExpr> {
        match (lhs.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Some(SymExpr::constant(lhs.width(), fold_bin(op, lhs.width(), a, b))),
            _ => None,
        }
    }

    /// Puts the constant operand of a commutative op on the right.
    fn canonical(lhs: SymExpr, rhs: SymExpr) -> (SymExpr, SymExpr) {
        if lhs.as_const().is_some() && rhs.as_const().is_none() {
            (rhs, lhs)
        } else {
            (lhs, rhs)
        }
    }

    pub fn add(lhs: SymExpr, rhs: SymExpr) -> SymExpr {
        if let Some(c) = SymExpr::fold2(BinOp::Add, &lhs, &rhs) {
            return c;
        }
        let (lhs, rhs) = SymExpr::canonical(lhs, rhs);
        if rhs.is_const_value(0) {
            return lhs;
        }
        if let (Some(c2), Node::Bin { op: BinOp::Add, lhs: x, rhs: c1 }) = (rhs.as_const(), lhs.node()) {
            if let Some(c1) = c1.as_const() {
                let sum = c1.wrapping_add(c2) & mask(lhs.width());
                return SymExpr::add(x.clone(), SymExpr::constant(lhs.width(), sum));
            }
        }
        SymExpr::build(Node::Bin { op: BinOp::Add, lhs, rhs })
    }

    pub fn sub(lhs: SymExpr, rhs: SymExpr) -> SymExpr {
        if let Some(c) = SymExpr::fold2(BinOp::Sub, &lhs, &rhs) {
            return c;
        }
        if lhs == rhs {
            return SymExpr::constant(lhs.width(), 0);
        }
        if let Some(c) = rhs.as_const() {
            let w = lhs.width();
            return SymExpr::add(lhs, SymExpr::constant(w, c.wrapping_neg()));
        }
        SymExpr::build(Node::Bin { op: BinOp::Sub, lhs, rhs })
    }

    pub fn mul(lhs: SymExpr, rhs: SymExpr) -> SymExpr {
        if let Some(c) = SymExpr::fold2(BinOp::Mul, &lhs, &rhs) {
            return c;
        }
        let (lhs, rhs) = SymExpr::canonical(lhs, rhs);
        if rhs.is_const_value(0) {
            return rhs;
        }
        if rhs.is_const_value(1) {
            return lhs;
        }
        SymExpr::build(Node::Bin { op: BinOp::Mul, lhs, rhs })
    }

    pub fn and(lhs: SymExpr, rhs: SymExpr) -> SymExpr {
        if let Some(c) = SymExpr::fold2(BinOp::And, &lhs, &rhs) {
            return c;
        }
        let (lhs, rhs) = SymExpr::canonical(lhs, rhs);
        if rhs.is_const_value(0) {
            return rhs;
        }
        if rhs.is_const_value(u64::MAX) || lhs == rhs {
            return lhs;
        }
        SymExpr::build(Node::Bin { op: BinOp::And, lhs, rhs })
    }

    pub fn or(lhs: SymExpr, rhs: SymExpr) -> SymExpr {
        if let Some(c) = SymExpr::fold2(BinOp::Or, &lhs, &rhs) {
            return c;
        }
        let (lhs, rhs) = SymExpr::canonical(lhs, rhs);
        if rhs.is_const_value(u64::MAX) {
            return rhs;
        }
        if rhs.is_const_value(0) || lhs == rhs {
            return lhs;
        }
        SymExpr::build(Node::Bin { op: BinOp::Or, lhs, rhs })
    }

    pub fn xor(lhs: SymExpr, rhs: SymExpr) -> SymExpr {
        if let Some(c) = SymExpr::fold2(BinOp::Xor, &lhs, &rhs) {
            return c;
        }
        let (lhs, rhs) = SymExpr::canonical(lhs, rhs);
        if rhs.is_const_value(0) {
            return lhs;
        }
        if lhs == rhs {
            return SymExpr::constant(lhs.width(), 0);
        }
        if let (Some(c2), Node::Bin { op: BinOp::Xor, lhs: x, rhs: c1 }) = (rhs.as_const(), lhs.node()) {
            if let Some(c1) = c1.as_const() {
                return SymExpr::xor(x.clone(), SymExpr::constant(lhs.width(), c1 ^ c2));
            }
        }
        SymExpr::build(Node::Bin { op: BinOp::Xor, lhs, rhs })
    }

    pub fn not(e: SymExpr) -> SymExpr {
        let w = e.width();
        SymExpr::xor(e, SymExpr::constant(w, u64::MAX))
    }

    fn shift(op: BinOp, lhs: SymExpr, rhs: SymExpr) -> SymExpr {
        if let Some(c) = SymExpr::fold2(op, &lhs, &rhs) {
            return c;
        }
        if rhs.is_const_value(0) {
            return lhs;
        }
        if lhs.is_const_value(0) {
            return lhs;
        }
        if let Some(c) = rhs.as_const() {
            if c >= lhs.width() as u64 {
                return SymExpr::constant(lhs.width(), 0);
            }
        }
        SymExpr::build(Node::Bin { op, lhs, rhs })
    }

    pub fn shl(lhs: SymExpr, rhs: SymExpr) -> SymExpr {
        SymExpr::shift(BinOp::Shl, lhs, rhs)
    }

    pub fn shr(lhs: SymExpr, rhs: SymExpr) -> SymExpr {
        SymExpr::shift(BinOp::Shr, lhs, rhs)
    }

    pub fn eq(lhs: SymExpr, rhs: SymExpr) -> SymExpr {
        let w = lhs.width();
        if let (Some(a), Some(b)) = (lhs.as_const(), rhs.as_const()) {
            return SymExpr::constant(1, fold_cmp(CmpOp::Eq, w, a, b));
        }
        if lhs == rhs {
            return SymExpr::bit(true);
        }
        let (lhs, rhs) = SymExpr::canonical(lhs, rhs);
        if let Some(c2) = rhs.as_const() {
            match lhs.node() {
                // (e ^ c1) == c2  <=>  e == c1 ^ c2
                Node::Bin { op: BinOp::Xor, lhs: e, rhs: c1 } if c1.as_const().is_some() => {
                    let c1 = c1.as_const().unwrap_or(0);
                    return SymExpr::eq(e.clone(), SymExpr::constant(w, c1 ^ c2));
                }
                Node::Bin { op: BinOp::Add, lhs: e, rhs: c1 } if c1.as_const().is_some() => {
                    let c1 = c1.as_const().unwrap_or(0);
                    return SymExpr::eq(e.clone(), SymExpr::constant(w, c2.wrapping_sub(c1)));
                }
                Node::Bin { op: BinOp::Sub, lhs: a, rhs: b } if c2 == 0 => {
                    return SymExpr::eq(a.clone(), b.clone());
                }
                Node::ZExt { expr: e, .. } => {
                    return if c2 <= mask(e.width()) {
                        SymExpr::eq(e.clone(), SymExpr::constant(e.width(), c2))
                    } else {
                        SymExpr::bit(false)
                    };
                }
                Node::Concat { hi, lo } => {
                    let lw = lo.width();
                    let hi_eq = SymExpr::eq(hi.clone(), SymExpr::constant(hi.width(), c2 >> lw));
                    let lo_eq = SymExpr::eq(lo.clone(), SymExpr::constant(lw, c2));
                    return SymExpr::and(hi_eq, lo_eq);
                }
                _ if w == 1 => {
                    return if c2 == 1 { lhs } else { SymExpr::not(lhs) };
                }
                _ => {}
            }
        }
        SymExpr::build(Node::Cmp { op: CmpOp::Eq, lhs, rhs })
    }

    pub fn ne(lhs: SymExpr, rhs: SymExpr) -> SymExpr {
        SymExpr::not(SymExpr::eq(lhs, rhs))
    }

    pub fn ult(lhs: SymExpr, rhs: SymExpr) -> SymExpr {
        let w = lhs.width();
        if let (Some(a), Some(b)) = (lhs.as_const(), rhs.as_const()) {
            return SymExpr::constant(1, fold_cmp(CmpOp::Ult, w, a, b));
        }
        if lhs == rhs || rhs.is_const_value(0) {
            return SymExpr::bit(false);
        }
        match (lhs.node(), rhs.node()) {
            (Node::ZExt { expr: a, .. }, Node::ZExt { expr: b, .. }) if a.width() == b.width() => {
                return SymExpr::ult(a.clone(), b.clone());
            }
            (Node::ZExt { expr: a, .. }, Node::Const { value, .. }) => {
                return if *value > mask(a.width()) {
                    SymExpr::bit(true)
                } else {
                    SymExpr::ult(a.clone(), SymExpr::constant(a.width(), *value))
                };
            }
            (Node::Const { value, .. }, Node::ZExt { expr: b, .. }) => {
                return if *value >= mask(b.width()) {
                    SymExpr::bit(false)
                } else {
                    SymExpr::ult(SymExpr::constant(b.width(), *value), b.clone())
                };
            }
            _ => {}
        }
        SymExpr::build(Node::Cmp { op: CmpOp::Ult, lhs, rhs })
    }

    pub fn slt(lhs: SymExpr, rhs: SymExpr) -> SymExpr {
        if let (Some(a), Some(b)) = (lhs.as_const(), rhs.as_const()) {
            return SymExpr::constant(1, fold_cmp(CmpOp::Slt, lhs.width(), a, b));
        }
        if lhs == rhs {
            return SymExpr::bit(false);
        }
        SymExpr::build(Node::Cmp { op: CmpOp::Slt, lhs, rhs })
    }

    pub fn extract(e: SymExpr, lo: u8, width: u8) -> SymExpr {
        assert!(width >= 1 && lo as u32 + width as u32 <= e.width() as u32, "extract out of range");
        if lo == 0 && width == e.width() {
            return e;
        }
        match e.node() {
            Node::Const { value, .. } => return SymExpr::constant(width, value >> lo),
            Node::Extract { expr, lo: lo1, .. } => return SymExpr::extract(expr.clone(), lo1 + lo, width),
            Node::Concat { hi, lo: low } => {
                let lw = low.width();
                if lo + width <= lw {
                    return SymExpr::extract(low.clone(), lo, width);
                }
                if lo >= lw {
                    return SymExpr::extract(hi.clone(), lo - lw, width);
                }
            }
            Node::ZExt { expr, .. } => {
                let iw = expr.width();
                if lo + width <= iw {
                    return SymExpr::extract(expr.clone(), lo, width);
                }
                if lo >= iw {
                    return SymExpr::constant(width, 0);
                }
                if lo == 0 {
                    return SymExpr::zext(expr.clone(), width);
                }
            }
            _ => {}
        }
        SymExpr::build(Node::Extract { expr: e, lo, width })
    }

    pub fn concat(hi: SymExpr, lo: SymExpr) -> SymExpr {
        let lw = lo.width();
        let total = hi.width() + lw;
        if let (Some(h), Some(l)) = (hi.as_const(), lo.as_const()) {
            let v = if lw >= 64 { l } else { (h << lw) | l };
            return SymExpr::constant(total, v);
        }
        if hi.is_const_value(0) {
            return SymExpr::zext(lo, total);
        }
        // Adjacent slices of the same value re-join.
        if let (
            Node::Extract { expr: a, lo: alo, width: aw },
            Node::Extract { expr: b, lo: blo, width: bw },
        ) = (hi.node(), lo.node())
        {
            if a == b && *blo + *bw == *alo {
                return SymExpr::extract(a.clone(), *blo, aw + bw);
            }
        }
        SymExpr::build(Node::Concat { hi, lo })
    }

    pub fn ite(cond: SymExpr, then: SymExpr, els: SymExpr) -> SymExpr {
        if let Some(c) = cond.as_const() {
            return if c != 0 { then } else { els };
        }
        if then == els {
            return then;
        }
        SymExpr::build(Node::Ite { cond, then, els })
    }

    pub fn zext(e: SymExpr, width: u8) -> SymExpr {
        if width == e.width() {
            return e;
        }
        match e.node() {
            Node::Const { value, .. } => return SymExpr::constant(width, *value),
            Node::ZExt { expr, .. } => return SymExpr::zext(expr.clone(), width),
            _ => {}
        }
        SymExpr::build(Node::ZExt { expr: e, width })
    }

    pub fn sext(e: SymExpr, width: u8) -> SymExpr {
        if width == e.width() {
            return e;
        }
        if let Some(v) = e.as_const() {
            return SymExpr::constant(width, sign_extend(v, e.width(), width));
        }
        SymExpr::build(Node::SExt { expr: e, width })
    }

    // ---- traversal ------------------------------------------------------------

    /// Unique nodes of the DAGs rooted at `roots`, children before parents.
    fn postorder<'a>(roots: impl IntoIterator<Item = &'a SymExpr>) -> Vec<&'a SymExpr> {
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        let mut order = Vec::new();
        let mut stack: Vec<(&'a SymExpr, bool)> = Vec::new();
        for root in roots {
            stack.push((root, false));
            while let Some((e, expanded)) = stack.pop() {
                if expanded {
                    order.push(e);
                    continue;
                }
                if !seen.insert(e.key()) {
                    continue;
                }
                stack.push((e, true));
                for c in e.children() {
                    if !seen.contains(&c.key()) {
                        stack.push((c, false));
                    }
                }
            }
        }
        order
    }

    /// Set of variables the expression mentions.
    pub fn vars(&self) -> BTreeSet<VarId> {
        let mut out = BTreeSet::new();
        for e in SymExpr::postorder([self]) {
            if let Some(v) = e.as_var() {
                out.insert(v);
            }
        }
        out
    }

    /// Rebuilds the expression bottom-up, replacing variables for which
    /// `value_of` returns a value and re-simplifying every node.
    pub fn substitute(&self, value_of: &dyn Fn(VarId) -> Option<u8>) -> SymExpr {
        let order = SymExpr::postorder([self]);
        let mut built: BTreeMap<usize, SymExpr> = BTreeMap::new();
        for e in order {
            let get = |c: &SymExpr| built[&c.key()].clone();
            let new = match e.node() {
                Node::Const { .. } => e.clone(),
                Node::Var(v) => match value_of(*v) {
                    Some(b) => SymExpr::constant(8, b as u64),
                    None => e.clone(),
                },
                Node::Bin { op, lhs, rhs } => SymExpr::binary(*op, get(lhs), get(rhs)),
                Node::Cmp { op, lhs, rhs } => SymExpr::compare(*op, get(lhs), get(rhs)),
                Node::Extract { expr, lo, width } => SymExpr::extract(get(expr), *lo, *width),
                Node::Concat { hi, lo } => SymExpr::concat(get(hi), get(lo)),
                Node::Ite { cond, then, els } => SymExpr::ite(get(cond), get(then), get(els)),
                Node::ZExt { expr, width } => SymExpr::zext(get(expr), *width),
                Node::SExt { expr, width } => SymExpr::sext(get(expr), *width),
            };
            built.insert(e.key(), new);
        }
        built.remove(&self.key()).unwrap_or_else(|| self.clone())
    }

    /// Constant folding and algebraic rewriting over the whole tree.
    pub fn simplify(&self) -> SymExpr {
        self.substitute(&|_| None)
    }

    /// Evaluates under a full assignment of byte variables.
    pub fn eval(&self, assignment: &dyn Fn(VarId) -> u8) -> u64 {
        Compiled::new(core::slice::from_ref(self)).eval(assignment)[0]
    }

    /// Renders as an SMT-LIB2 bit-vector term, truncated with `...` after
    /// roughly `budget` characters.
    pub fn to_smt(&self, budget: usize) -> String {
        crate::smt::term(self, budget)
    }
}

struct ChildIter<'a> {
    node: &'a Node,
    pos: u8,
}

impl<'a> Iterator for ChildIter<'a> {
    type Item = &'a SymExpr;

    fn next(&mut self) -> Option<&'a SymExpr> {
        let i = self.pos;
        self.pos += 1;
        match (self.node, i) {
            (Node::Bin { lhs, .. } | Node::Cmp { lhs, .. }, 0) => Some(lhs),
            (Node::Bin { rhs, .. } | Node::Cmp { rhs, .. }, 1) => Some(rhs),
            (Node::Extract { expr, .. } | Node::ZExt { expr, .. } | Node::SExt { expr, .. }, 0) => Some(expr),
            (Node::Concat { hi, .. }, 0) => Some(hi),
            (Node::Concat { lo, .. }, 1) => Some(lo),
            (Node::Ite { cond, .. }, 0) => Some(cond),
            (Node::Ite { then, .. }, 1) => Some(then),
            (Node::Ite { els, .. }, 2) => Some(els),
            _ => None,
        }
    }
}

fn shallow_eq(a: &Node, b: &Node) -> bool {
    match (a, b) {
        (Node::Const { width: wa, value: va }, Node::Const { width: wb, value: vb }) => wa == wb && va == vb,
        (Node::Var(x), Node::Var(y)) => x == y,
        (Node::Bin { op: x, .. }, Node::Bin { op: y, .. }) => x == y,
        (Node::Cmp { op: x, .. }, Node::Cmp { op: y, .. }) => x == y,
        (Node::Extract { lo: la, width: wa, .. }, Node::Extract { lo: lb, width: wb, .. }) => la == lb && wa == wb,
        (Node::Concat { .. }, Node::Concat { .. }) | (Node::Ite { .. }, Node::Ite { .. }) => true,
        (Node::ZExt { width: wa, .. }, Node::ZExt { width: wb, .. }) => wa == wb,
        (Node::SExt { width: wa, .. }, Node::SExt { width: wb, .. }) => wa == wb,
        _ => false,
    }
}

impl PartialEq for SymExpr {
    fn eq(&self, other: &SymExpr) -> bool {
        let mut stack = alloc::vec![(self, other)];
        while let Some((a, b)) = stack.pop() {
            if a.ptr_eq(b) {
                continue;
            }
            if a.hash() != b.hash() || a.width() != b.width() || !shallow_eq(a.node(), b.node()) {
                return false;
            }
            stack.extend(a.children().zip(b.children()));
        }
        true
    }
}

impl Eq for SymExpr {}

impl core::hash::Hash for SymExpr {
    fn hash<H: core::hash::Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl fmt::Debug for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_smt(512))
    }
}

impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_smt(1 << 16))
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Const(u64),
    Var(VarId),
    Bin(BinOp, u8, u32, u32),
    Cmp(CmpOp, u8, u32, u32),
    Extract(u32, u8, u8),
    Concat(u32, u32, u8),
    Ite(u32, u32, u32),
    Copy(u32),
    SExt(u32, u8, u8),
}

/// A set of expressions flattened into a straight-line program, for
/// evaluating the same constraints under many assignments.
#[derive(Clone, Debug)]
pub struct Compiled {
    ops: Vec<Op>,
    roots: Vec<u32>,
    vars: Vec<VarId>,
}

impl Compiled {
    pub fn new(roots: &[SymExpr]) -> Compiled {
        let order = SymExpr::postorder(roots.iter());
        let mut index: BTreeMap<usize, u32> = BTreeMap::new();
        let mut ops = Vec::with_capacity(order.len());
        let mut vars = BTreeSet::new();
        for e in order {
            let at = |c: &SymExpr| index[&c.key()];
            let op = match e.node() {
                Node::Const { value, .. } => Op::Const(*value),
                Node::Var(v) => {
                    vars.insert(*v);
                    Op::Var(*v)
                }
                Node::Bin { op, lhs, rhs } => Op::Bin(*op, lhs.width(), at(lhs), at(rhs)),
                Node::Cmp { op, lhs, rhs } => Op::Cmp(*op, lhs.width(), at(lhs), at(rhs)),
                Node::Extract { expr, lo, width } => Op::Extract(at(expr), *lo, *width),
                Node::Concat { hi, lo } => Op::Concat(at(hi), at(lo), lo.width()),
                Node::Ite { cond, then, els } => Op::Ite(at(cond), at(then), at(els)),
                Node::ZExt { expr, .. } => Op::Copy(at(expr)),
                Node::SExt { expr, width } => Op::SExt(at(expr), expr.width(), *width),
            };
            index.insert(e.key(), ops.len() as u32);
            ops.push(op);
        }
        let roots = roots.iter().map(|r| index[&r.key()]).collect();
        Compiled { ops, roots, vars: vars.into_iter().collect() }
    }

    /// Variables mentioned, ascending.
    pub fn vars(&self) -> &[VarId] {
        &self.vars
    }

    pub fn eval(&self, assignment: &dyn Fn(VarId) -> u8) -> Vec<u64> {
        let mut scratch = Vec::new();
        self.eval_into(assignment, &mut scratch);
        self.roots.iter().map(|&r| scratch[r as usize]).collect()
    }

    /// True iff every root evaluates to a non-zero value.
    pub fn all_true(&self, assignment: &dyn Fn(VarId) -> u8, scratch: &mut Vec<u64>) -> bool {
        self.eval_into(assignment, scratch);
        self.roots.iter().all(|&r| scratch[r as usize] != 0)
    }

    fn eval_into(&self, assignment: &dyn Fn(VarId) -> u8, vals: &mut Vec<u64>) {
        vals.clear();
        vals.reserve(self.ops.len());
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => c,
                Op::Var(v) => assignment(v) as u64,
                Op::Bin(op, w, a, b) => fold_bin(op, w, vals[a as usize], vals[b as usize]),
                Op::Cmp(op, w, a, b) => fold_cmp(op, w, vals[a as usize], vals[b as usize]),
                Op::Extract(e, lo, w) => (vals[e as usize] >> lo) & mask(w),
                Op::Concat(h, l, lw) => (vals[h as usize] << lw) | vals[l as usize],
                Op::Ite(c, t, e) => {
                    if vals[c as usize] != 0 {
                        vals[t as usize]
                    } else {
                        vals[e as usize]
                    }
                }
                Op::Copy(e) => vals[e as usize],
                Op::SExt(e, from, to) => sign_extend(vals[e as usize], from, to),
            };
            vals.push(v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(i: u32) -> SymExpr {
        SymExpr::var(VarId(i))
    }
    fn c(w: u8, x: u64) -> SymExpr {
        SymExpr::constant(w, x)
    }

    #[test]
    fn xor_inside_equality_is_eliminated() {
        let e = SymExpr::eq(SymExpr::xor(v(0), c(8, 0x5a)), c(8, 0x3c));
        assert_eq!(e, SymExpr::eq(v(0), c(8, 0x66)));
    }

    #[test]
    fn xor_self_is_zero() {
        assert_eq!(SymExpr::xor(v(3), v(3)).as_const(), Some(0));
    }

    #[test]
    fn constants_fold_with_wraparound() {
        assert_eq!(SymExpr::add(c(8, 2), c(8, 3)).as_const(), Some(5));
        assert_eq!(SymExpr::add(c(8, 0xff), c(8, 1)).as_const(), Some(0));
    }

    #[test]
    fn double_negation_collapses() {
        let e = SymExpr::not(SymExpr::not(v(1)));
        assert_eq!(e, v(1));
    }

    #[test]
    fn ite_with_constant_condition() {
        assert_eq!(SymExpr::ite(SymExpr::bit(true), v(0), v(1)), v(0));
        assert_eq!(SymExpr::ite(SymExpr::bit(false), v(0), v(1)), v(1));
    }

    #[test]
    fn byte_slices_rejoin() {
        let wide = SymExpr::zext(SymExpr::concat(v(1), v(0)), 64);
        let lo = SymExpr::extract(wide.clone(), 0, 8);
        let hi = SymExpr::extract(wide, 8, 8);
        assert_eq!(lo, v(0));
        assert_eq!(hi, v(1));
    }

    #[test]
    fn comparison_through_zero_extension() {
        let e = SymExpr::eq(SymExpr::zext(v(0), 64), c(64, 5));
        assert_eq!(e, SymExpr::eq(v(0), c(8, 5)));
        let never = SymExpr::eq(SymExpr::zext(v(0), 64), c(64, 300));
        assert_eq!(never.as_const(), Some(0));
    }

    #[test]
    fn signed_compare_folds() {
        assert_eq!(SymExpr::slt(c(8, 0xff), c(8, 0)).as_const(), Some(1));
        assert_eq!(SymExpr::slt(c(8, 0), c(8, 0xff)).as_const(), Some(0));
    }

    #[test]
    fn deep_chain_survives_traversal_and_drop() {
        let mut e = v(0);
        for i in 0..200_000u64 {
            e = SymExpr::add(SymExpr::shr(e, c(8, 1)), SymExpr::zext(v((i % 7) as u32), 8));
        }
        let vars = e.vars();
        assert_eq!(vars.len(), 7);
        let val = e.eval(&|_| 1);
        assert!(val <= 0xff);
        let copy = e.simplify();
        assert_eq!(copy, e);
        drop(copy);
        drop(e);
    }

    #[test]
    fn compiled_eval_matches_fold() {
        let e = SymExpr::from_node(Node::Bin {
            op: BinOp::Mul,
            lhs: SymExpr::from_node(Node::ZExt { expr: v(0), width: 16 }),
            rhs: c(16, 300),
        });
        assert_eq!(e.eval(&|_| 200), (200u64 * 300) & 0xffff);
    }
}
