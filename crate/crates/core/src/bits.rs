//! Packed bit strings and their on-disk form.
//!
//! File layout: an 8-byte little-endian bit count followed by
//! `ceil(count / 8)` bytes, most significant bit first, zero padded.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BitsError {
    #[error("bit file too short: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("bit file has {0} trailing bytes")]
    Trailing(usize),
    #[error("invalid bit character {0:?}")]
    BadChar(char),
}

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString {
    bytes: Vec<u8>,
    len: usize,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zeros(len: usize) -> Self {
        Self { bytes: vec![0; len.div_ceil(8)], len }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut b = Self::zeros(bits.len());
        for (i, &v) in bits.iter().enumerate() {
            b.set(i, v);
        }
        b
    }

    /// Takes `len` bits from `bytes`, most significant bit first.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Self {
        assert!(len <= bytes.len() * 8, "not enough bytes for {len} bits");
        let mut out = Self { bytes: bytes[..len.div_ceil(8)].to_vec(), len };
        out.clear_padding();
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.bytes[i / 8] >> (7 - i % 8) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u8 << (7 - i % 8);
        if v {
            self.bytes[i / 8] |= mask;
        } else {
            self.bytes[i / 8] &= !mask;
        }
    }

    pub fn push(&mut self, v: bool) {
        if self.len % 8 == 0 {
            self.bytes.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, v);
    }

    pub fn extend(&mut self, other: &BitString) {
        for b in other.iter() {
            self.push(b);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Bits `start..start + len` as a new string.
    pub fn slice(&self, start: usize, len: usize) -> BitString {
        assert!(start + len <= self.len, "slice out of range");
        if start % 8 == 0 {
            return Self::from_bytes(&self.bytes[start / 8..], len);
        }
        let mut out = Self::zeros(len);
        for i in 0..len {
            out.set(i, self.get(start + i));
        }
        out
    }

    /// Packed bytes, most significant bit first, zero padded.
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Reads `width ≤ 128` bits starting at `start` as an integer, first bit
    /// most significant; positions past the end read as zero.
    pub fn read_uint(&self, start: usize, width: usize) -> u128 {
        debug_assert!(width <= 128);
        let mut v = 0u128;
        for i in start..start + width {
            v = (v << 1) | u128::from(i < self.len && self.get(i));
        }
        v
    }

    pub fn to_file_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.bytes.len());
        out.extend_from_slice(&(self.len as u64).to_le_bytes());
        out.extend_from_slice(&self.bytes);
        out
    }

    pub fn from_file_bytes(data: &[u8]) -> Result<Self, BitsError> {
        if data.len() < 8 {
            return Err(BitsError::Truncated { expected: 8, found: data.len() });
        }
        let len = u64::from_le_bytes(data[..8].try_into().expect("8 bytes")) as usize;
        let need = 8 + len.div_ceil(8);
        if data.len() < need {
            return Err(BitsError::Truncated { expected: need, found: data.len() });
        }
        if data.len() > need {
            return Err(BitsError::Trailing(data.len() - need));
        }
        Ok(Self::from_bytes(&data[8..], len))
    }

    fn clear_padding(&mut self) {
        if self.len % 8 != 0 {
            let keep = 0xffu8 << (8 - self.len % 8);
            if let Some(last) = self.bytes.last_mut() {
                *last &= keep;
            }
        }
    }
}

impl FromStr for BitString {
    type Err = BitsError;

    fn from_str(s: &str) -> Result<Self, BitsError> {
        let mut b = BitString::new();
        for ch in s.chars().filter(|c| !c.is_whitespace()) {
            match ch {
                '0' => b.push(false),
                '1' => b.push(true),
                c => return Err(BitsError::BadChar(c)),
            }
        }
        Ok(b)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 64 {
            write!(f, "BitString({self})")
        } else {
            write!(f, "BitString(len={}, ones={})", self.len, self.count_ones())
        }
    }
}
