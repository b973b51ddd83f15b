//! Random raw expressions and an independent evaluator over `u128`.

use txsym_core::expr::{BinOp, CmpOp, Node, SymExpr, VarId};

use super::Stream;

const WIDTHS: [u8; 6] = [1, 8, 16, 32, 33, 64];

fn mask(w: u8) -> u128 {
    (1u128 << w) - 1
}

/// An interesting constant of width `w`.
fn constant(s: &mut Stream, w: u8) -> SymExpr {
    let v = match s.below(6) {
        0 => 0,
        1 => 1,
        2 => u64::MAX,
        3 => 1u64 << (w - 1),
        4 => s.below(8) as u64,
        _ => s.u64(),
    };
    SymExpr::constant(w, (v as u128 & mask(w)) as u64)
}

/// Builds a raw expression of width `w` over `vars` variables. `depth` bounds
/// nesting.
pub fn gen(s: &mut Stream, w: u8, depth: u32, vars: u32) -> SymExpr {
    if depth == 0 || s.chance(15) {
        return leaf(s, w, vars);
    }
    let d = depth - 1;
    let raw = SymExpr::from_node;
    match s.below(10) {
        0..=3 => {
            let op = *s.pick(&[BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::And, BinOp::Or, BinOp::Xor, BinOp::Shl, BinOp::Shr]);
            raw(Node::Bin { op, lhs: gen(s, w, d, vars), rhs: gen(s, w, d, vars) })
        }
        4 if w == 1 => {
            let cw = *s.pick(&WIDTHS);
            let op = *s.pick(&[CmpOp::Eq, CmpOp::Ult, CmpOp::Slt]);
            raw(Node::Cmp { op, lhs: gen(s, cw, d, vars), rhs: gen(s, cw, d, vars) })
        }
        5 if w < 64 => {
            let from = w + 1 + s.below((64 - w) as u32) as u8;
            let lo = s.below((from - w + 1) as u32) as u8;
            raw(Node::Extract { expr: gen(s, from, d, vars), lo, width: w })
        }
        6 if w >= 2 => {
            let lw = 1 + s.below((w - 1) as u32) as u8;
            raw(Node::Concat { hi: gen(s, w - lw, d, vars), lo: gen(s, lw, d, vars) })
        }
        7 => raw(Node::Ite { cond: gen(s, 1, d, vars), then: gen(s, w, d, vars), els: gen(s, w, d, vars) }),
        8 if w > 1 => {
            let from = 1 + s.below((w - 1) as u32) as u8;
            let e = gen(s, from, d, vars);
            if s.chance(50) {
                raw(Node::ZExt { expr: e, width: w })
            } else {
                raw(Node::SExt { expr: e, width: w })
            }
        }
        _ => {
            let op = *s.pick(&[BinOp::Add, BinOp::Xor, BinOp::And]);
            raw(Node::Bin { op, lhs: gen(s, w, d, vars), rhs: leaf(s, w, vars) })
        }
    }
}

fn leaf(s: &mut Stream, w: u8, vars: u32) -> SymExpr {
    if vars > 0 && s.chance(60) {
        let v = SymExpr::var(VarId(s.below(vars)));
        return match w {
            8 => v,
            1 => SymExpr::from_node(Node::Extract { expr: v, lo: s.below(8) as u8, width: 1 }),
            w if w < 8 => SymExpr::from_node(Node::Extract { expr: v, lo: 0, width: w }),
            w => SymExpr::from_node(Node::ZExt { expr: v, width: w }),
        };
    }
    constant(s, w)
}

/// Reference semantics, written against `u128` with explicit masking.
pub fn oracle(e: &SymExpr, a: &dyn Fn(VarId) -> u8) -> u128 {
    let w = e.width();
    let r = match e.node() {
        Node::Const { value, .. } => *value as u128,
        Node::Var(v) => a(*v) as u128,
        Node::Bin { op, lhs, rhs } => {
            let (x, y) = (oracle(lhs, a), oracle(rhs, a));
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x + (1u128 << w) - y,
                BinOp::Mul => x * y,
                BinOp::And => x & y,
                BinOp::Or => x | y,
                BinOp::Xor => x ^ y,
                BinOp::Shl => {
                    if y >= w as u128 {
                        0
                    } else {
                        x << y
                    }
                }
                BinOp::Shr => {
                    if y >= w as u128 {
                        0
                    } else {
                        x >> y
                    }
                }
            }
        }
        Node::Cmp { op, lhs, rhs } => {
            let cw = lhs.width();
            let (x, y) = (oracle(lhs, a), oracle(rhs, a));
            let signed = |v: u128| -> i128 {
                if v >> (cw - 1) & 1 == 1 {
                    v as i128 - (1i128 << cw)
                } else {
                    v as i128
                }
            };
            (match op {
                CmpOp::Eq => x == y,
                CmpOp::Ult => x < y,
                CmpOp::Slt => signed(x) < signed(y),
            }) as u128
        }
        Node::Extract { expr, lo, .. } => oracle(expr, a) >> lo,
        Node::Concat { hi, lo } => (oracle(hi, a) << lo.width()) | oracle(lo, a),
        Node::Ite { cond, then, els } => {
            if oracle(cond, a) != 0 {
                oracle(then, a)
            } else {
                oracle(els, a)
            }
        }
        Node::ZExt { expr, .. } => oracle(expr, a),
        Node::SExt { expr, .. } => {
            let ew = expr.width();
            let v = oracle(expr, a);
            if v >> (ew - 1) & 1 == 1 {
                v | (mask(w) & !mask(ew))
            } else {
                v
            }
        }
    };
    r & mask(w)
}

/// Rebuilds `e` bottom-up through the simplifying constructors.
pub fn rebuild(e: &SymExpr) -> SymExpr {
    match e.node() {
        Node::Const { .. } | Node::Var(_) => e.clone(),
        Node::Bin { op, lhs, rhs } => SymExpr::binary(*op, rebuild(lhs), rebuild(rhs)),
        Node::Cmp { op, lhs, rhs } => SymExpr::compare(*op, rebuild(lhs), rebuild(rhs)),
        Node::Extract { expr, lo, width } => SymExpr::extract(rebuild(expr), *lo, *width),
        Node::Concat { hi, lo } => SymExpr::concat(rebuild(hi), rebuild(lo)),
        Node::Ite { cond, then, els } => SymExpr::ite(rebuild(cond), rebuild(then), rebuild(els)),
        Node::ZExt { expr, width } => SymExpr::zext(rebuild(expr), *width),
        Node::SExt { expr, width } => SymExpr::sext(rebuild(expr), *width),
    }
}
