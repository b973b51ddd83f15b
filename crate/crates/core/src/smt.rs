//! SMT-LIB2 rendering.
//!
//! One-bit comparison results are kept as `(_ BitVec 1)` terms so that every
//! node maps onto a single QF_BV term; assertions compare against `#b1`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::expr::{BinOp, CmpOp, Node, SymExpr, VarId};

enum Piece<'a> {
    Expr(&'a SymExpr),
    Text(&'static str),
    Owned(String),
}

fn literal(width: u8, value: u64) -> String {
    if width.is_multiple_of(4) {
        format!("#x{:0w$x}", value, w = (width / 4) as usize)
    } else {
        format!("#b{:0w$b}", value, w = width as usize)
    }
}

/// Renders `e` as an SMT-LIB2 term, stopping after about `budget` bytes.
pub fn term(e: &SymExpr, budget: usize) -> String {
    let mut out = String::new();
    let mut stack = alloc::vec![Piece::Expr(e)];
    while let Some(piece) = stack.pop() {
        if out.len() > budget {
            out.push_str("...");
            break;
        }
        let e = match piece {
            Piece::Text(t) => {
                out.push_str(t);
                continue;
            }
            Piece::Owned(t) => {
                out.push_str(&t);
                continue;
            }
            Piece::Expr(e) => e,
        };
        // Pieces are pushed in reverse order of appearance.
        match e.node() {
            Node::Const { width, value } => out.push_str(&literal(*width, *value)),
            Node::Var(v) => {
                let _ = write!(out, "{v}");
            }
            Node::Bin { op, lhs, rhs } => {
                let name = match op {
                    BinOp::Add => "(bvadd ",
                    BinOp::Sub => "(bvsub ",
                    BinOp::Mul => "(bvmul ",
                    BinOp::And => "(bvand ",
                    BinOp::Or => "(bvor ",
                    BinOp::Xor => "(bvxor ",
                    BinOp::Shl => "(bvshl ",
                    BinOp::Shr => "(bvlshr ",
                };
                stack.extend([Piece::Text(")"), Piece::Expr(rhs), Piece::Text(" "), Piece::Expr(lhs), Piece::Text(name)]);
            }
            Node::Cmp { op, lhs, rhs } => {
                let name = match op {
                    CmpOp::Eq => "(ite (= ",
                    CmpOp::Ult => "(ite (bvult ",
                    CmpOp::Slt => "(ite (bvslt ",
                };
                stack.extend([
                    Piece::Text(") #b1 #b0)"),
                    Piece::Expr(rhs),
                    Piece::Text(" "),
                    Piece::Expr(lhs),
                    Piece::Text(name),
                ]);
            }
            Node::Extract { expr, lo, width } => {
                let head = format!("((_ extract {} {}) ", lo + width - 1, lo);
                stack.extend([Piece::Text(")"), Piece::Expr(expr), Piece::Owned(head)]);
            }
            Node::Concat { hi, lo } => {
                stack.extend([Piece::Text(")"), Piece::Expr(lo), Piece::Text(" "), Piece::Expr(hi), Piece::Text("(concat ")]);
            }
            Node::Ite { cond, then, els } => {
                stack.extend([
                    Piece::Text(")"),
                    Piece::Expr(els),
                    Piece::Text(" "),
                    Piece::Expr(then),
                    Piece::Text(" #b1) "),
                    Piece::Expr(cond),
                    Piece::Text("(ite (= "),
                ]);
            }
            Node::ZExt { expr, width } => {
                let head = format!("((_ zero_extend {}) ", width - expr.width());
                stack.extend([Piece::Text(")"), Piece::Expr(expr), Piece::Owned(head)]);
            }
            Node::SExt { expr, width } => {
                let head = format!("((_ sign_extend {}) ", width - expr.width());
                stack.extend([Piece::Text(")"), Piece::Expr(expr), Piece::Owned(head)]);
            }
        }
    }
    out
}

/// A complete QF_BV query: one 8-bit constant per variable, one assertion per
/// constraint, `check-sat`.
pub fn query(constraints: &[SymExpr]) -> String {
    let mut vars = BTreeSet::<VarId>::new();
    for c in constraints {
        vars.extend(c.vars());
    }
    let mut out = String::from("(set-logic QF_BV)\n");
    for v in &vars {
        let _ = writeln!(out, "(declare-const {v} (_ BitVec 8))");
    }
    for c in constraints {
        let _ = writeln!(out, "(assert (= {} #b1))", term(c, usize::MAX));
    }
    out.push_str("(check-sat)\n(get-model)\n");
    out
}

/// Variables of all constraints, ascending.
pub fn declared_vars(constraints: &[SymExpr]) -> Vec<VarId> {
    let mut vars = BTreeSet::new();
    for c in constraints {
        vars.extend(c.vars());
    }
    vars.into_iter().collect()
}
