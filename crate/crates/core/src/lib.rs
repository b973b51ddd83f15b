//! Core of the `txsym` engine: the toy ISA and its machine, shadow memory,
//! software transactions, the symbolic interpreter, the constraint solver and
//! the path manager. `no_std` with `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod asm;
pub mod expr;
pub mod isa;
pub mod smt;
pub mod machine;
pub mod shadow;
pub mod solver;
pub mod txn;
pub mod interp;
pub mod path;
pub mod engine;
pub mod manager;
pub mod report;
pub mod reference;
pub mod oracle;
pub mod audit;
