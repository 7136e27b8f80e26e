//! Reed-Solomon–Hadamard one-bit extractor.
//!
//! The seed of `2s` bits splits into `α` (first `s` bits) and `β` (next `s`),
//! both read most significant bit first as elements of GF(2^s). The source is
//! cut into `s`-bit coefficients `c_0, c_1, …` (last one zero padded) and the
//! output is the inner product mod 2 of `y = Σ_i c_i α^i` with `β`.

use super::gf::Field;
use crate::bits::BitString;

/// Source coefficients prepared once and shared by every output bit.
#[derive(Debug, Clone)]
pub struct Coefficients {
    field: Field,
    c: Vec<u64>,
}

impl Coefficients {
    pub fn new(source: &BitString, field: Field) -> Coefficients {
        let s = field.bits() as usize;
        let c = (0..source.len().div_ceil(s)).map(|i| source.read_uint(i * s, s) as u64).collect();
        Coefficients { field, c }
    }

    /// Evaluates at `α` by Horner's rule from the highest coefficient.
    pub fn evaluate(&self, alpha: u64) -> u64 {
        self.c.iter().rev().fold(0u64, |acc, &ci| self.field.mul(acc, alpha) ^ ci)
    }

    pub fn bit(&self, alpha: u64, beta: u64) -> bool {
        (self.evaluate(alpha) & beta).count_ones() % 2 == 1
    }
}

/// One output bit from `source` and a `2s`-bit seed.
pub fn rsh_bit(source: &BitString, seed: &BitString, field: Field) -> bool {
    let s = field.bits() as usize;
    assert_eq!(seed.len(), 2 * s, "seed must have 2s bits");
    let alpha = seed.read_uint(0, s) as u64;
    let beta = seed.read_uint(s, s) as u64;
    Coefficients::new(source, field).bit(alpha, beta)
}
