//! Trevisan's extractor with a block weak design (r = 1) and the
//! Reed-Solomon–Hadamard one-bit extractor.
//!
//! Output length: `m = ⌊(h·n − 4·log₂(1/ε) − 6) / r⌋`, clamped at 0.
//!
//! Field width: `s` is the smallest power of two with
//! `s ≥ ⌈log₂ n + log₂(2m/ε)⌉`; the one-bit seed length is `t = 2s`.

mod design;
mod gf;
mod rsh;

use std::fmt::Write as _;

use thiserror::Error;

pub use design::{max_overlap_weight, WeakDesign};
pub use gf::{Field, IRREDUCIBLE};

use crate::bits::BitString;
use crate::par::Execution;
use rsh::Coefficients;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractorError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported parameters: {0}")]
    Unsupported(String),
    #[error("{what} has {found} bits, expected {expected}")]
    Length { what: &'static str, expected: usize, found: usize },
    #[error("output length m = 0: the entropy does not cover the extraction losses")]
    NoOutput,
    #[error("raw string of {raw} bits holds no full block of {block_bits} bits")]
    NoFullBlocks { raw: usize, block_bits: usize },
}

pub type Result<T> = std::result::Result<T, ExtractorError>;

/// Block length used when none is configured.
pub const DEFAULT_BLOCK_BITS: usize = 20_000;

/// Number of extractable bits; 0 when the losses exceed the entropy.
pub fn output_length(n: usize, h_min: f64, epsilon: f64, r: f64) -> Result<usize> {
    if n == 0 {
        return Err(ExtractorError::Domain("n must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&h_min) {
        return Err(ExtractorError::Domain(format!("h_min = {h_min} outside [0, 1]")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(ExtractorError::Domain(format!("epsilon = {epsilon} outside (0, 1)")));
    }
    if !(r >= 1.0 && r.is_finite()) {
        return Err(ExtractorError::Domain(format!("r = {r} must be ≥ 1")));
    }
    let m = ((h_min * n as f64 - 4.0 * (1.0 / epsilon).log2() - 6.0) / r).floor();
    Ok(if m > 0.0 { m as usize } else { 0 })
}

/// Field width `s` for a source of `n` bits and `m` outputs.
pub fn field_width(n: usize, m: usize, epsilon: f64) -> u32 {
    let need = ((n as f64).log2() + (2.0 * m as f64 / epsilon).log2()).ceil().max(1.0) as u32;
    need.next_power_of_two()
}

/// A concrete extractor: source length, output length, field and design.
#[derive(Debug, Clone, PartialEq)]
pub struct Trevisan {
    n: usize,
    field: Field,
    design: WeakDesign,
}

impl Trevisan {
    /// `s` must be a tabulated field width and `2s` a design set size.
    pub fn new(n: usize, m: usize, s: u32) -> Result<Trevisan> {
        if n == 0 {
            return Err(ExtractorError::Domain("n must be at least 1".into()));
        }
        if m == 0 {
            return Err(ExtractorError::NoOutput);
        }
        let field = Field::new(s).ok_or_else(|| ExtractorError::Unsupported(format!("no field GF(2^{s})")))?;
        let design = WeakDesign::new(m, 2 * s as usize)?;
        Ok(Trevisan { n, field, design })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.design.m()
    }

    pub fn s(&self) -> u32 {
        self.field.bits()
    }

    pub fn t(&self) -> usize {
        self.design.t()
    }

    pub fn d(&self) -> usize {
        self.design.d()
    }

    pub fn design(&self) -> &WeakDesign {
        &self.design
    }

    /// Output bit `i` is the one-bit extractor applied with the seed bits at
    /// the positions of design set `S_i`.
    pub fn extract(&self, source: &BitString, seed: &BitString, exec: Execution) -> Result<BitString> {
        if source.len() != self.n {
            return Err(ExtractorError::Length { what: "source", expected: self.n, found: source.len() });
        }
        if seed.len() != self.d() {
            return Err(ExtractorError::Length { what: "seed", expected: self.d(), found: seed.len() });
        }
        let coeffs = Coefficients::new(source, self.field);
        let s = self.s() as usize;
        let bits = exec.map_range(self.m(), |i| {
            let set = self.design.set(i);
            let read = |range: std::ops::Range<usize>| set[range].iter().fold(0u64, |v, &p| (v << 1) | u64::from(seed.get(p)));
            coeffs.bit(read(0..s), read(s..2 * s))
        });
        Ok(BitString::from_bools(&bits))
    }
}

/// One output bit from `source` and a seed of `2s` bits, `s` a tabulated
/// field width.
pub fn rsh_bit(source: &BitString, seed: &BitString) -> Result<bool> {
    if seed.len() % 2 != 0 {
        return Err(ExtractorError::Length { what: "seed", expected: seed.len() + 1, found: seed.len() });
    }
    let s = (seed.len() / 2) as u32;
    let field = Field::new(s).ok_or_else(|| ExtractorError::Unsupported(format!("no field GF(2^{s})")))?;
    Ok(rsh::rsh_bit(source, seed, field))
}

/// Entropy and length bookkeeping for one extraction with r = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorParams {
    pub n: usize,
    pub h_min: f64,
    /// `h_min·n`
    pub k: f64,
    pub epsilon: f64,
    pub r: f64,
    pub m: usize,
    /// Zero when `m = 0`, like `t` and `d`.
    pub s: u32,
    pub t: usize,
    pub d: usize,
}

impl ExtractorParams {
    pub fn new(n: usize, h_min: f64, epsilon: f64) -> Result<ExtractorParams> {
        let r = 1.0;
        let m = output_length(n, h_min, epsilon, r)?;
        let (s, t, d) = if m == 0 {
            (0, 0, 0)
        } else {
            let tr = Trevisan::new(n, m, field_width(n, m, epsilon))?;
            (tr.s(), tr.t(), tr.d())
        };
        Ok(ExtractorParams { n, h_min, k: h_min * n as f64, epsilon, r, m, s, t, d })
    }

    pub fn passes(&self) -> bool {
        self.m >= 1
    }

    pub fn trevisan(&self) -> Result<Trevisan> {
        if !self.passes() {
            return Err(ExtractorError::NoOutput);
        }
        Trevisan::new(self.n, self.m, self.s)
    }

    /// `key = value` lines.
    pub fn report(&self) -> String {
        format!(
            "n = {}\nh_min = {}\nk = {}\nepsilon = {:e}\nr = {}\ns = {}\nt = {}\nd = {}\nm = {}\n",
            self.n, self.h_min, self.k, self.epsilon, self.r, self.s, self.t, self.d, self.m
        )
    }
}

pub fn extract(source: &BitString, seed: &BitString, p: &ExtractorParams, exec: Execution) -> Result<BitString> {
    p.trevisan()?.extract(source, seed, exec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockExtraction {
    pub bits: BitString,
    /// Parameters shared by every block.
    pub params: ExtractorParams,
    pub blocks: usize,
    /// Raw bits dropped after the last full block.
    pub discarded: usize,
}

impl BlockExtraction {
    pub fn report(&self) -> String {
        let mut out = self.params.report();
        let _ = write!(out, "blocks = {}\ndiscarded_raw_bits = {}\ntotal_output_bits = {}\n", self.blocks, self.discarded, self.bits.len());
        out
    }
}

/// Splits `raw` into full blocks of `block_bits` and extracts each with the
/// same seed; the extractor is strong, so the seed is not consumed. Only the
/// first `d` seed bits are used.
pub fn block_extract(
    raw: &BitString,
    seed: &BitString,
    block_bits: usize,
    h_min: f64,
    epsilon: f64,
    exec: Execution,
) -> Result<BlockExtraction> {
    if block_bits == 0 {
        return Err(ExtractorError::Domain("block_bits must be at least 1".into()));
    }
    let blocks = raw.len() / block_bits;
    if blocks == 0 {
        return Err(ExtractorError::NoFullBlocks { raw: raw.len(), block_bits });
    }
    let params = ExtractorParams::new(block_bits, h_min, epsilon)?;
    let tr = params.trevisan()?;
    if seed.len() < tr.d() {
        return Err(ExtractorError::Length { what: "seed", expected: tr.d(), found: seed.len() });
    }
    let seed = seed.slice(0, tr.d());
    let mut bits = BitString::new();
    for b in 0..blocks {
        bits.extend(&tr.extract(&raw.slice(b * block_bits, block_bits), &seed, exec)?);
    }
    Ok(BlockExtraction { bits, params, blocks, discarded: raw.len() - blocks * block_bits })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_length_examples() {
        assert_eq!(output_length(20000, 0.042, 1e-6, 1.0).unwrap(), 754);
        assert_eq!(output_length(20000, 0.030, 1e-6, 1.0).unwrap(), 514);
        assert_eq!(output_length(1000, 0.042, 1e-6, 1.0).unwrap(), 0);
        assert!(output_length(0, 0.5, 1e-6, 1.0).is_err());
        assert!(output_length(10, 1.5, 1e-6, 1.0).is_err());
        assert!(output_length(10, 0.5, 1.0, 1.0).is_err());
        assert!(output_length(10, 0.5, 1e-6, 0.5).is_err());
    }

    #[test]
    fn layout_for_20000_bit_blocks() {
        let p = ExtractorParams::new(20000, 0.042, 1e-6).unwrap();
        assert_eq!((p.m, p.s, p.t), (754, 64, 128));
        assert!(p.d <= 180_224, "{}", p.d);
        let p = ExtractorParams::new(20000, 0.030, 1e-6).unwrap();
        assert_eq!((p.m, p.s, p.t), (514, 64, 128));
        assert!(p.d <= 147_456, "{}", p.d);
    }

    #[test]
    fn failing_params_refuse_extraction() {
        let p = ExtractorParams::new(1000, 0.042, 1e-6).unwrap();
        assert!(!p.passes());
        assert_eq!(p.trevisan(), Err(ExtractorError::NoOutput));
    }
}
