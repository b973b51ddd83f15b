//! Generated benchmark programs.

use std::fmt::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BIGNUM_A: u64 = 0x10_0000;
pub const BIGNUM_B: u64 = 0x20_0000;
pub const BIGNUM_SUM: u64 = 0x30_0000;
pub const CHECKSUM_BUF: u64 = 0x10_0000;

pub fn random_bytes(n: usize, seed: u64) -> Vec<u8> {
    let mut v = vec![0u8; n];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut v);
    v
}

/// Two `n`-byte operands; `b` uses the next seed.
pub fn bignum_operands(n: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    (random_bytes(n, seed), random_bytes(n, seed.wrapping_add(1)))
}

fn data_directive(out: &mut String, addr: u64, bytes: &[u8]) {
    write!(out, ".data {addr:#x} \"").unwrap();
    for b in bytes {
        write!(out, "{b:02x}").unwrap();
    }
    out.push_str("\"\n");
}

/// Little-endian byte-by-byte addition with a one-byte carry. The sum is
/// `n + 1` bytes at `BIGNUM_SUM`. With `symbolic`, byte `i` of the first
/// operand is made symbolic by the prologue.
pub fn bignum_source(a: &[u8], b: &[u8], symbolic: Option<usize>) -> String {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut s = String::with_capacity(4 * n + 512);
    if n > 0 {
        data_directive(&mut s, BIGNUM_A, a);
        data_directive(&mut s, BIGNUM_B, b);
    }
    writeln!(s, ".zero {BIGNUM_SUM:#x} {}", (n + 2) & !1).unwrap();
    if let Some(i) = symbolic {
        assert!(i < n);
        writeln!(s, "mov r1, {:#x}", BIGNUM_A + i as u64).unwrap();
        s.push_str("make_symbolic r1, 1\n");
    }
    writeln!(
        s,
        "mov r1, {BIGNUM_A:#x}
mov r2, {BIGNUM_B:#x}
mov r3, {BIGNUM_SUM:#x}
mov r4, {n}
mov r5, 0
cmp r4, 0
jz done
loop:
load r6, [r1].b
load r7, [r2].b
add r6, r7
add r6, r5
mov r5, r6
shr r5, 8
store [r3].b, r6
add r1, 1
add r2, 1
add r3, 1
sub r4, 1
jnz loop
done:
store [r3].b, r5
halt"
    )
    .unwrap();
    s
}

/// Sum of every byte of the buffer into `r0`, also stored after the buffer.
pub fn checksum_source(buf: &[u8]) -> String {
    let n = buf.len();
    let mut s = String::with_capacity(2 * n + 256);
    if n > 0 {
        data_directive(&mut s, CHECKSUM_BUF, buf);
    }
    let out = CHECKSUM_BUF + ((n as u64 + 7) & !7);
    writeln!(
        s,
        ".zero {out:#x} 8
mov r0, 0
mov r1, {CHECKSUM_BUF:#x}
mov r2, {n}
cmp r2, 0
jz done
loop:
load r3, [r1].b
add r0, r3
add r1, 1
sub r2, 1
jnz loop
done:
mov r1, {out:#x}
store [r1].q, r0
halt"
    )
    .unwrap();
    s
}

/// Expected sum bytes for `bignum_source`.
pub fn bignum_expected(a: &[u8], b: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(a.len() + 1);
    let mut carry = 0u16;
    for (x, y) in a.iter().zip(b) {
        let t = *x as u16 + *y as u16 + carry;
        out.push(t as u8);
        carry = t >> 8;
    }
    out.push(carry as u8);
    out
}
