//! GF(2^g) arithmetic for `1 <= g <= 32` and a rank-tracking decoder.
//!
//! Elements are `u32` bit patterns of polynomials over GF(2). Multiplication
//! is carry-less shift-and-reduce, so no tables are needed even at g = 20.

use crate::error::{Error, Result};

/// Irreducible polynomials (leading term included), indexed by degree.
const DEFAULT_POLYS: [u64; 33] = [
    0,
    0b11,           // x + 1
    0b111,          // x^2 + x + 1
    0b1011,         // x^3 + x + 1
    0b10011,        // x^4 + x + 1
    0b100101,       // x^5 + x^2 + 1
    0b1000011,      // x^6 + x + 1
    0b10000011,     // x^7 + x + 1
    0x11B,          // x^8 + x^4 + x^3 + x + 1
    0x211,          // x^9 + x^4 + 1
    0x409,          // x^10 + x^3 + 1
    0x805,          // x^11 + x^2 + 1
    0x1053,         // x^12 + x^6 + x^4 + x + 1
    0x201B,         // x^13 + x^4 + x^3 + x + 1
    0x4443,         // x^14 + x^10 + x^6 + x + 1
    0x8003,         // x^15 + x + 1
    0x1002B,        // x^16 + x^5 + x^3 + x + 1
    0x20009,        // x^17 + x^3 + 1
    0x40081,        // x^18 + x^7 + 1
    0x80027,        // x^19 + x^5 + x^2 + x + 1
    0x100009,       // x^20 + x^3 + 1
    0x200005,       // x^21 + x^2 + 1
    0x400003,       // x^22 + x + 1
    0x800021,       // x^23 + x^5 + 1
    0x100001B,      // x^24 + x^4 + x^3 + x + 1
    0x2000009,      // x^25 + x^3 + 1
    0x4000047,      // x^26 + x^6 + x^2 + x + 1
    0x8000027,      // x^27 + x^5 + x^2 + x + 1
    0x10000009,     // x^28 + x^3 + 1
    0x20000005,     // x^29 + x^2 + 1
    0x40000053,     // x^30 + x^6 + x^4 + x + 1
    0x80000009,     // x^31 + x^3 + 1
    0x1_0000_008D,  // x^32 + x^7 + x^3 + x^2 + 1
];

/// A binary extension field GF(2^g).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldSpec {
    bits: u32,
    poly: u64,
}

fn degree(p: u64) -> i32 {
    63 - p.leading_zeros() as i32
}

/// Remainder of carry-less division `a mod b`.
fn poly_mod(mut a: u64, b: u64) -> u64 {
    let db = degree(b);
    while a != 0 && degree(a) >= db {
        a ^= b << (degree(a) - db);
    }
    a
}

/// True if `poly` of degree `g` has no factor of degree `1..=g/2`.
fn is_irreducible(poly: u64) -> bool {
    let g = degree(poly);
    if g < 1 {
        return false;
    }
    for d in 1..=g / 2 {
        for low in 0u64..(1 << d) {
            if poly_mod(poly, (1 << d) | low) == 0 {
                return false;
            }
        }
    }
    true
}

impl FieldSpec {
    /// Field with the built-in polynomial for `bits`.
    pub fn new(bits: u32) -> Result<Self> {
        if !(1..=32).contains(&bits) {
            return Err(Error::InvalidField(format!("g = {bits} outside 1..=32")));
        }
        Ok(FieldSpec { bits, poly: DEFAULT_POLYS[bits as usize] })
    }

    /// Field with a caller-supplied polynomial, checked for irreducibility
    /// when `g <= 16`; larger degrees must match the built-in table.
    pub fn with_poly(bits: u32, poly: u64) -> Result<Self> {
        if !(1..=32).contains(&bits) {
            return Err(Error::InvalidField(format!("g = {bits} outside 1..=32")));
        }
        if degree(poly) != bits as i32 {
            return Err(Error::InvalidField(format!("polynomial {poly:#x} does not have degree {bits}")));
        }
        let ok = if bits <= 16 { is_irreducible(poly) } else { poly == DEFAULT_POLYS[bits as usize] };
        if !ok {
            return Err(Error::InvalidField(format!("polynomial {poly:#x} is not a vetted irreducible of degree {bits}")));
        }
        Ok(FieldSpec { bits, poly })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn poly(&self) -> u64 {
        self.poly
    }

    /// Number of elements, `2^g`.
    pub fn size(&self) -> u64 {
        1u64 << self.bits
    }

    pub fn mul(&self, a: u32, b: u32) -> u32 {
        let top = 1u64 << self.bits;
        let mut a = a as u64;
        let mut b = b as u64;
        let mut acc = 0u64;
        while b != 0 {
            if b & 1 != 0 {
                acc ^= a;
            }
            b >>= 1;
            a <<= 1;
            if a & top != 0 {
                a ^= self.poly;
            }
        }
        acc as u32
    }

    /// Inverse by the extended Euclidean algorithm on polynomials.
    pub fn inv(&self, a: u32) -> Result<u32> {
        if a == 0 || (a as u64) >= self.size() {
            return Err(Error::NotInvertible(a));
        }
        let (mut r0, mut r1) = (self.poly, a as u64);
        let (mut t0, mut t1) = (0u64, 1u64);
        while r1 != 0 {
            let mut q = 0u64;
            let mut r = r0;
            let d1 = degree(r1);
            while r != 0 && degree(r) >= d1 {
                let shift = degree(r) - d1;
                q ^= 1 << shift;
                r ^= r1 << shift;
            }
            let t = t0 ^ clmul_low(q, t1);
            r0 = r1;
            r1 = r;
            t0 = t1;
            t1 = t;
        }
        // r0 is the gcd, 1 for an irreducible modulus
        Ok(poly_mod(t0, self.poly) as u32)
    }
}

/// Carry-less product, truncated to 64 bits (operands stay below 2^33 here).
fn clmul_low(a: u64, b: u64) -> u64 {
    let mut acc = 0;
    for i in 0..64 {
        if (b >> i) & 1 != 0 {
            acc ^= a << i;
        }
    }
    acc
}

pub fn field_mul(a: u32, b: u32, f: &FieldSpec) -> u32 {
    f.mul(a, b)
}

pub fn field_inv(a: u32, f: &FieldSpec) -> Result<u32> {
    f.inv(a)
}

/// Received coding vectors kept in reduced row-echelon form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderState {
    field: FieldSpec,
    block_size: usize,
    /// `rows[c]` holds the stored row whose pivot is column `c`, normalized to
    /// a leading 1 and zero in every other pivot column.
    rows: Vec<Option<Vec<u32>>>,
    rank: usize,
}

impl DecoderState {
    pub fn new(field: FieldSpec, block_size: usize) -> Self {
        DecoderState { field, block_size, rows: vec![None; block_size], rank: 0 }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Dofs still missing, `M - rank`.
    pub fn dofs_needed(&self) -> usize {
        self.block_size - self.rank
    }

    pub fn is_complete(&self) -> bool {
        self.rank == self.block_size
    }

    /// Eliminates `coding_vector` against the stored pivots and keeps the
    /// remainder if it is non-zero. Returns whether the rank grew.
    pub fn absorb(&mut self, coding_vector: &[u32]) -> bool {
        assert_eq!(coding_vector.len(), self.block_size, "coding vector length must equal M");
        if self.is_complete() {
            return false;
        }
        let f = self.field;
        let mut v = coding_vector.to_vec();
        for (c, row) in self.rows.iter().enumerate() {
            if let Some(row) = row {
                let k = v[c];
                if k != 0 {
                    for (x, &r) in v.iter_mut().zip(row) {
                        *x ^= f.mul(k, r);
                    }
                }
            }
        }
        let Some(pivot) = v.iter().position(|&x| x != 0) else {
            return false;
        };
        let scale = f.inv(v[pivot]).expect("non-zero pivot is invertible");
        for x in v.iter_mut() {
            *x = f.mul(*x, scale);
        }
        // keep the stored rows reduced against the new pivot
        for row in self.rows.iter_mut().flatten() {
            let k = row[pivot];
            if k != 0 {
                for (x, &r) in row.iter_mut().zip(&v) {
                    *x ^= f.mul(k, r);
                }
            }
        }
        self.rows[pivot] = Some(v);
        self.rank += 1;
        true
    }
}
