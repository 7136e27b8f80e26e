//! Arithmetic in GF(2^k) for k ≤ 64, elements stored in the low bits of a
//! `u64` (bit i is the coefficient of x^i).

/// Irreducible polynomials used to build each field, leading term included.
/// Low-weight choices from the standard tables (the k = 8 entry is the AES
/// polynomial, k = 64 the usual pentanomial).
pub const IRREDUCIBLE: [(u32, u128); 11] = [
    (1, 0x3),
    (2, 0x7),
    (3, 0xb),
    (4, 0x13),
    (5, 0x25),
    (6, 0x43),
    (7, 0x83),
    (8, 0x11b),
    (16, 0x1002b),
    (32, 0x1_0000_008d),
    (64, 0x1_0000_0000_0000_001b),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Field {
    k: u32,
    /// The modulus without its leading term.
    low: u64,
}

impl Field {
    /// `None` when no polynomial of degree `k` is tabulated.
    pub fn new(k: u32) -> Option<Field> {
        let &(_, poly) = IRREDUCIBLE.iter().find(|(d, _)| *d == k)?;
        Some(Field { k, low: (poly & ((1u128 << k) - 1)) as u64 })
    }

    pub fn bits(self) -> u32 {
        self.k
    }

    pub fn size(self) -> u128 {
        1u128 << self.k
    }

    fn mask(self) -> u64 {
        if self.k == 64 {
            u64::MAX
        } else {
            (1u64 << self.k) - 1
        }
    }

    /// Shift-and-add multiplication with reduction folded into each step.
    pub fn mul(self, a: u64, b: u64) -> u64 {
        let top = 1u64 << (self.k - 1);
        let mask = self.mask();
        let (mut a, mut b) = (a & mask, b & mask);
        let mut acc = 0u64;
        while b != 0 {
            if b & 1 == 1 {
                acc ^= a;
            }
            b >>= 1;
            let carry = a & top != 0;
            a = (a << 1) & mask;
            if carry {
                a ^= self.low;
            }
        }
        acc
    }

    pub fn pow(self, mut a: u64, mut e: u128) -> u64 {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, a);
            }
            a = self.mul(a, a);
            e >>= 1;
        }
        acc
    }
}
