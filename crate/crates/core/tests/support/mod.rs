#![allow(dead_code)]

pub mod exprgen;
pub mod progen;

/// Deterministic choices drawn from a proptest-generated vector. Runs past
/// the end wrap around with a twist so long builds stay varied.
pub struct Stream {
    words: Vec<u32>,
    pos: usize,
}

impl Stream {
    pub fn new(words: Vec<u32>) -> Stream {
        assert!(!words.is_empty());
        Stream { words, pos: 0 }
    }

    pub fn next(&mut self) -> u32 {
        let i = self.pos % self.words.len();
        let lap = (self.pos / self.words.len()) as u32;
        self.pos += 1;
        self.words[i].rotate_left(lap.wrapping_mul(7)) ^ lap.wrapping_mul(0x9e37_79b9)
    }

    /// Uniform-ish in `0..n`.
    pub fn below(&mut self, n: u32) -> u32 {
        self.next() % n.max(1)
    }

    pub fn chance(&mut self, percent: u32) -> bool {
        self.below(100) < percent
    }

    pub fn pick<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        &xs[self.below(xs.len() as u32) as usize]
    }

    pub fn u64(&mut self) -> u64 {
        (self.next() as u64) << 32 | self.next() as u64
    }
}
