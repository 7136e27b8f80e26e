//! Block weak design with overlap parameter r = 1.
//!
//! The basic design (Hartman–Raz) takes `q = t` and a field GF(q); the set of
//! a polynomial `p` over GF(q) is `{a·q + p(a) : a ∈ GF(q)}` inside a `q²`-bit
//! seed segment. Two polynomials of degree ≤ c share at most c points, which
//! gives overlap weight `r' = 2e` for the basic design.
//!
//! The block construction stacks basic designs on fresh seed segments. With
//! `M` sets still to place, the next block takes `⌊(M − 1)/r'⌋ + 1` of them, so
//! the weight from inside the block stays below `M − 1` and sets of earlier
//! blocks (disjoint, weight 1 each) fill the rest of the budget `m − 1`. Once
//! at most `t` sets remain they are laid out as disjoint consecutive runs of
//! `t` bits.

use super::gf::Field;
use super::ExtractorError;

const R_BASIC: f64 = 2.0 * std::f64::consts::E;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockKind {
    /// Polynomials of degree ≤ `degree` over GF(q), enumerated with the
    /// constant coefficient varying fastest.
    Polynomial { degree: u32 },
    /// Consecutive runs of `t` bits.
    Disjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Block {
    kind: BlockKind,
    /// Index of the block's first set.
    first: usize,
    count: usize,
    /// Start of the block's seed segment.
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeakDesign {
    m: usize,
    t: usize,
    d: usize,
    field: Option<Field>,
    blocks: Vec<Block>,
}

impl WeakDesign {
    /// `t` must be a power of two for which GF(t) is tabulated (2 ≤ t ≤ 256).
    pub fn new(m: usize, t: usize) -> Result<WeakDesign, ExtractorError> {
        if m == 0 {
            return Err(ExtractorError::Domain("weak design needs m ≥ 1".into()));
        }
        if !t.is_power_of_two() || t < 2 {
            return Err(ExtractorError::Unsupported(format!("set size t = {t} is not a power of two ≥ 2")));
        }
        let q = t;
        let mut blocks = Vec::new();
        let mut remaining = m;
        let mut offset = 0;
        let mut field = None;
        while remaining > t {
            if field.is_none() {
                field = Some(
                    Field::new(q.trailing_zeros())
                        .ok_or_else(|| ExtractorError::Unsupported(format!("no field of size {q} for the design")))?,
                );
            }
            // Beyond q^q polynomials the evaluation maps repeat.
            let distinct = (q as f64).powi(q as i32);
            let count = ((((remaining - 1) as f64 / R_BASIC).floor() as usize) + 1).min(distinct as usize);
            let mut degree = 0u32;
            while (q as f64).powi(degree as i32 + 1) < count as f64 {
                degree += 1;
            }
            blocks.push(Block { kind: BlockKind::Polynomial { degree }, first: m - remaining, count, offset });
            offset += q * q;
            remaining -= count;
        }
        blocks.push(Block { kind: BlockKind::Disjoint, first: m - remaining, count: remaining, offset });
        offset += remaining * t;
        Ok(WeakDesign { m, t, d: offset, field, blocks })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Total seed length.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of basic polynomial blocks (the disjoint tail not counted).
    pub fn polynomial_blocks(&self) -> usize {
        self.blocks.len() - 1
    }

    /// Sets per block, polynomial blocks first, the disjoint tail last.
    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.count).collect()
    }

    /// Seed positions of set `i`, in increasing order.
    pub fn set(&self, i: usize) -> Vec<usize> {
        assert!(i < self.m, "set index {i} out of range {}", self.m);
        let b = self.blocks.iter().rev().find(|b| b.first <= i).expect("block 0 starts at 0");
        let j = i - b.first;
        match b.kind {
            BlockKind::Disjoint => (b.offset + j * self.t..b.offset + (j + 1) * self.t).collect(),
            BlockKind::Polynomial { degree } => {
                let f = self.field.expect("polynomial blocks have a field");
                let q = self.t;
                let mut coeffs = Vec::with_capacity(degree as usize + 1);
                let mut rest = j;
                for _ in 0..=degree {
                    coeffs.push((rest % q) as u64);
                    rest /= q;
                }
                (0..q)
                    .map(|a| {
                        let mut v = 0u64;
                        for &c in coeffs.iter().rev() {
                            v = f.mul(v, a as u64) ^ c;
                        }
                        b.offset + a * q + v as usize
                    })
                    .collect()
            }
        }
    }

    pub fn sets(&self) -> Vec<Vec<usize>> {
        (0..self.m).map(|i| self.set(i)).collect()
    }
}

/// `max_i Σ_{j<i} 2^{|S_i ∩ S_j|}` by direct comparison of every pair.
pub fn max_overlap_weight(sets: &[Vec<usize>]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..sets.len() {
        let mut w = 0.0;
        for j in 0..i {
            let common = sets[i].iter().filter(|v| sets[j].binary_search(v).is_ok()).count();
            w += 2f64.powi(common as i32);
        }
        worst = worst.max(w);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_set_is_the_seed_prefix() {
        let w = WeakDesign::new(1, 16).unwrap();
        assert_eq!(w.d(), 16);
        assert_eq!(w.set(0), (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn polynomial_sets_have_size_t_and_stay_in_segment() {
        let w = WeakDesign::new(300, 16).unwrap();
        assert!(w.polynomial_blocks() > 0);
        for s in w.sets() {
            assert_eq!(s.len(), 16);
            assert!(s.windows(2).all(|p| p[0] < p[1]));
            assert!(*s.last().unwrap() < w.d());
        }
    }

    #[test]
    fn unsupported_sizes() {
        assert!(WeakDesign::new(10, 12).is_err());
        assert!(WeakDesign::new(0, 16).is_err());
        assert!(WeakDesign::new(5000, 512).is_err());
    }
}
