//! Arithmetic over the binary extension fields GF(2^M).
//!
//! Elements carry their field order so that values from different fields
//! cannot be mixed silently. Multiplication goes through log/antilog tables
//! that are built once per order and never mutated afterwards; the
//! table-free [`peasant_mul`] is kept as an independent reference.
//!
//! The default field is GF(2^8) reduced by x^8 + x^4 + x^3 + x + 1 (0x11B).

use std::fmt;
use std::ops::{Add, Div, Mul, Sub};
use std::sync::OnceLock;

use rand::Rng;
use thiserror::Error;

pub const DEFAULT_ORDER: u8 = 8;
pub const MAX_ORDER: u8 = 16;

/// Reduction polynomials indexed by field order. All are irreducible; the
/// generator used for the log tables is searched for at build time, so they
/// need not be primitive (0x11B is not).
const REDUCTION_POLYS: [u32; 17] = [
    0, 0x3, 0x7, 0xB, 0x13, 0x25, 0x43, 0x89, 0x11B, 0x211, 0x409, 0x805, 0x1053, 0x201B, 0x4443,
    0x8003, 0x1100B,
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GaloisError {
    #[error("field order {0} is not supported (expected 1..=16)")]
    UnsupportedOrder(u8),
    #[error("value {value:#x} does not fit in GF(2^{order})")]
    OutOfRange { value: u32, order: u8 },
    #[error("mismatched field orders: GF(2^{0}) and GF(2^{1})")]
    OrderMismatch(u8, u8),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("reduction polynomial {0:#x} does not define a field")]
    Reducible(u32),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("matrix is singular: rank {rank}, need {needed}")]
    Singular { rank: usize, needed: usize },
    #[error("linear system is inconsistent")]
    Inconsistent,
}

pub type Result<T, E = GaloisError> = std::result::Result<T, E>;

/// An element of GF(2^order).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GfElement {
    value: u16,
    order: u8,
}

impl GfElement {
    pub fn new(value: u32, order: u8) -> Result<Self> {
        check_order(order)?;
        if value >> order != 0 {
            return Err(GaloisError::OutOfRange { value, order });
        }
        Ok(Self { value: value as u16, order })
    }

    /// Element of the default field GF(2^8).
    pub const fn gf256(value: u8) -> Self {
        Self { value: value as u16, order: DEFAULT_ORDER }
    }

    pub const fn zero(order: u8) -> Self {
        Self { value: 0, order }
    }

    pub const fn one(order: u8) -> Self {
        Self { value: 1, order }
    }

    #[inline]
    pub const fn value(self) -> u16 {
        self.value
    }

    #[inline]
    pub const fn order(self) -> u8 {
        self.order
    }

    #[inline]
    pub const fn is_zero(self) -> bool {
        self.value == 0
    }
}

impl fmt::Debug for GfElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.value)
    }
}

impl fmt::Display for GfElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.value)
    }
}

fn check_order(order: u8) -> Result<()> {
    if order == 0 || order > MAX_ORDER {
        Err(GaloisError::UnsupportedOrder(order))
    } else {
        Ok(())
    }
}

/// Carry-less "Russian peasant" multiplication modulo `poly`, one shift and
/// conditional reduction per bit. Used as the table-free reference.
pub fn peasant_mul(a: u32, b: u32, poly: u32, order: u8) -> u32 {
    let high = 1u32 << order;
    let mut a = a;
    let mut b = b;
    let mut acc = 0u32;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a & high != 0 {
            a ^= poly;
        }
    }
    acc
}

/// Log/antilog tables for one field.
#[derive(Clone)]
pub struct Field {
    order: u8,
    poly: u32,
    generator: u16,
    // exp has 2*(q-1) entries so that exp[log a + log b] needs no modulo.
    exp: Vec<u16>,
    log: Vec<u16>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("order", &self.order)
            .field("poly", &format_args!("{:#x}", self.poly))
            .field("generator", &self.generator)
            .finish()
    }
}

impl Field {
    /// Builds the tables for GF(2^order) reduced by `poly`.
    pub fn build(order: u8, poly: u32) -> Result<Self> {
        check_order(order)?;
        if poly >> order != 1 {
            return Err(GaloisError::Reducible(poly));
        }
        let size = 1usize << order;
        let group = size - 1;

        let generator = (1..size as u32)
            .find(|&g| multiplicative_order(g, poly, order) == Some(group))
            .ok_or(GaloisError::Reducible(poly))? as u16;

        let mut exp = vec![0u16; 2 * group];
        let mut log = vec![0u16; size];
        let mut x = 1u32;
        for i in 0..group {
            exp[i] = x as u16;
            exp[i + group] = x as u16;
            log[x as usize] = i as u16;
            x = peasant_mul(x, generator as u32, poly, order);
        }
        Ok(Self { order, poly, generator, exp, log })
    }

    #[inline]
    pub fn order(&self) -> u8 {
        self.order
    }

    /// Number of elements, 2^order.
    #[inline]
    pub fn size(&self) -> usize {
        1usize << self.order
    }

    pub fn poly(&self) -> u32 {
        self.poly
    }

    pub fn generator(&self) -> GfElement {
        GfElement { value: self.generator, order: self.order }
    }

    pub fn element(&self, value: u32) -> Result<GfElement> {
        GfElement::new(value, self.order)
    }

    /// All elements in increasing value order.
    pub fn elements(&self) -> impl Iterator<Item = GfElement> + '_ {
        (0..self.size()).map(move |v| GfElement { value: v as u16, order: self.order })
    }

    fn check(&self, a: GfElement) -> Result<()> {
        if a.order != self.order {
            Err(GaloisError::OrderMismatch(self.order, a.order))
        } else {
            Ok(())
        }
    }

    pub fn add(&self, a: GfElement, b: GfElement) -> Result<GfElement> {
        self.check(a)?;
        self.check(b)?;
        Ok(GfElement { value: a.value ^ b.value, order: self.order })
    }

    pub fn mul(&self, a: GfElement, b: GfElement) -> Result<GfElement> {
        self.check(a)?;
        self.check(b)?;
        Ok(GfElement { value: self.mul_raw(a.value, b.value), order: self.order })
    }

    pub fn inv(&self, a: GfElement) -> Result<GfElement> {
        self.check(a)?;
        if a.is_zero() {
            return Err(GaloisError::ZeroInverse);
        }
        let group = self.size() - 1;
        let l = self.log[a.value as usize] as usize;
        Ok(GfElement { value: self.exp[(group - l) % group], order: self.order })
    }

    pub fn div(&self, a: GfElement, b: GfElement) -> Result<GfElement> {
        let inv = self.inv(b)?;
        self.mul(a, inv)
    }

    /// Table multiplication on raw values; callers guarantee both are in range.
    #[inline]
    pub fn mul_raw(&self, a: u16, b: u16) -> u16 {
        if a == 0 || b == 0 {
            0
        } else {
            self.exp[self.log[a as usize] as usize + self.log[b as usize] as usize]
        }
    }

    /// `dst[i] ^= c * src[i]` over equal-length slices.
    pub fn mul_add_into(&self, dst: &mut [GfElement], src: &[GfElement], c: GfElement) {
        debug_assert_eq!(dst.len(), src.len());
        if c.is_zero() {
            return;
        }
        let lc = self.log[c.value as usize] as usize;
        for (d, s) in dst.iter_mut().zip(src) {
            if s.value != 0 {
                d.value ^= self.exp[lc + self.log[s.value as usize] as usize];
            }
        }
    }

    /// `v[i] = c * v[i]`.
    pub fn scale_in_place(&self, v: &mut [GfElement], c: GfElement) {
        for x in v.iter_mut() {
            x.value = self.mul_raw(x.value, c.value);
        }
    }

    /// Uniform draw over the whole field, zero included.
    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> GfElement {
        GfElement { value: rng.gen_range(0..self.size()) as u16, order: self.order }
    }

    /// Uniform draw over the nonzero elements.
    pub fn random_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> GfElement {
        GfElement { value: rng.gen_range(1..self.size()) as u16, order: self.order }
    }

    /// Overwrites one antilog entry. Only meant for fault-injection checks of
    /// the axiom suites; the resulting tables no longer describe a field.
    #[doc(hidden)]
    pub fn corrupt_exp_entry(&mut self, index: usize, value: u16) {
        let group = self.size() - 1;
        let i = index % group;
        self.exp[i] = value;
        self.exp[i + group] = value;
    }
}

fn multiplicative_order(g: u32, poly: u32, order: u8) -> Option<usize> {
    let group = (1usize << order) - 1;
    let mut x = g;
    for k in 1..=group {
        if x == 1 {
            return Some(k);
        }
        x = peasant_mul(x, g, poly, order);
        if x == 0 {
            return None;
        }
    }
    None
}

/// Shared tables for the standard polynomial of `order`.
pub fn field(order: u8) -> Result<&'static Field> {
    static FIELDS: [OnceLock<Field>; 17] = [const { OnceLock::new() }; 17];
    check_order(order)?;
    let slot = &FIELDS[order as usize];
    if let Some(f) = slot.get() {
        return Ok(f);
    }
    let built = Field::build(order, REDUCTION_POLYS[order as usize])?;
    Ok(slot.get_or_init(|| built))
}

pub fn default_field() -> &'static Field {
    field(DEFAULT_ORDER).expect("GF(2^8) tables")
}

pub fn reduction_poly(order: u8) -> Result<u32> {
    check_order(order)?;
    Ok(REDUCTION_POLYS[order as usize])
}

fn same_order(a: GfElement, b: GfElement) -> Result<&'static Field> {
    if a.order != b.order {
        return Err(GaloisError::OrderMismatch(a.order, b.order));
    }
    field(a.order)
}

pub fn gf_add(a: GfElement, b: GfElement) -> Result<GfElement> {
    same_order(a, b)?.add(a, b)
}

pub fn gf_mul(a: GfElement, b: GfElement) -> Result<GfElement> {
    same_order(a, b)?.mul(a, b)
}

pub fn gf_inv(a: GfElement) -> Result<GfElement> {
    field(a.order)?.inv(a)
}

// Operator impls panic on mixed orders; use the `gf_*` functions when the
// orders are not known to agree.
impl Add for GfElement {
    type Output = GfElement;
    fn add(self, rhs: Self) -> Self {
        gf_add(self, rhs).expect("GF addition")
    }
}

impl Sub for GfElement {
    type Output = GfElement;
    fn sub(self, rhs: Self) -> Self {
        gf_add(self, rhs).expect("GF subtraction")
    }
}

impl Mul for GfElement {
    type Output = GfElement;
    fn mul(self, rhs: Self) -> Self {
        gf_mul(self, rhs).expect("GF multiplication")
    }
}

impl Div for GfElement {
    type Output = GfElement;
    fn div(self, rhs: Self) -> Self {
        let inv = gf_inv(rhs).expect("GF division by zero");
        self * inv
    }
}

/// Dense row-major matrix over GF(2^order).
#[derive(Clone, PartialEq, Eq)]
pub struct GfMatrix {
    order: u8,
    rows: usize,
    cols: usize,
    data: Vec<GfElement>,
}

impl fmt::Debug for GfMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "GfMatrix {}x{} over GF(2^{})", self.rows, self.cols, self.order)?;
        for r in 0..self.rows {
            let row: Vec<String> = self.row(r).iter().map(|e| format!("{:02x}", e.value)).collect();
            writeln!(f, "  [{}]", row.join(" "))?;
        }
        Ok(())
    }
}

impl GfMatrix {
    pub fn zeros(order: u8, rows: usize, cols: usize) -> Self {
        Self { order, rows, cols, data: vec![GfElement::zero(order); rows * cols] }
    }

    pub fn identity(order: u8, n: usize) -> Self {
        let mut m = Self::zeros(order, n, n);
        for i in 0..n {
            m.data[i * n + i] = GfElement::one(order);
        }
        m
    }

    pub fn from_rows(order: u8, rows: &[Vec<GfElement>]) -> Result<Self> {
        check_order(order)?;
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(GaloisError::Dimension { expected: cols, found: row.len() });
            }
            for &e in row {
                if e.order != order {
                    return Err(GaloisError::OrderMismatch(order, e.order));
                }
                data.push(e);
            }
        }
        Ok(Self { order, rows: rows.len(), cols, data })
    }

    pub fn from_values(order: u8, rows: usize, cols: usize, values: &[u32]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(GaloisError::Dimension { expected: rows * cols, found: values.len() });
        }
        let data = values.iter().map(|&v| GfElement::new(v, order)).collect::<Result<_>>()?;
        Ok(Self { order, rows, cols, data })
    }

    pub fn random<R: Rng + ?Sized>(order: u8, rows: usize, cols: usize, rng: &mut R) -> Result<Self> {
        let f = field(order)?;
        let data = (0..rows * cols).map(|_| f.random(rng)).collect();
        Ok(Self { order, rows, cols, data })
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> GfElement {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: GfElement) {
        assert_eq!(v.order, self.order, "element from a different field");
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[GfElement] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<GfElement> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    pub fn scale_row(&mut self, r: usize, k: GfElement) -> Result<()> {
        let f = self.field()?;
        f.check(k)?;
        let cols = self.cols;
        f.scale_in_place(&mut self.data[r * cols..(r + 1) * cols], k);
        Ok(())
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, keep: &[usize]) -> Self {
        let mut out = Self::zeros(self.order, self.rows, keep.len());
        for r in 0..self.rows {
            for (j, &c) in keep.iter().enumerate() {
                out.data[r * keep.len() + j] = self.get(r, c);
            }
        }
        out
    }

    fn field(&self) -> Result<&'static Field> {
        field(self.order)
    }

    pub fn mul_vec(&self, x: &[GfElement]) -> Result<Vec<GfElement>> {
        if x.len() != self.cols {
            return Err(GaloisError::Dimension { expected: self.cols, found: x.len() });
        }
        let f = self.field()?;
        (0..self.rows)
            .map(|r| {
                self.row(r).iter().zip(x).try_fold(GfElement::zero(self.order), |acc, (&a, &b)| {
                    f.add(acc, f.mul(a, b)?)
                })
            })
            .collect()
    }

    pub fn mul_mat(&self, other: &GfMatrix) -> Result<GfMatrix> {
        if other.rows != self.cols {
            return Err(GaloisError::Dimension { expected: self.cols, found: other.rows });
        }
        if other.order != self.order {
            return Err(GaloisError::OrderMismatch(self.order, other.order));
        }
        let f = self.field()?;
        let mut out = GfMatrix::zeros(self.order, self.rows, other.cols);
        for r in 0..self.rows {
            let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for k in 0..self.cols {
                f.mul_add_into(dst, other.row(k), self.get(r, k));
            }
        }
        Ok(out)
    }

    /// Reduced row-echelon form together with the pivot columns.
    pub fn row_reduce(&self) -> (GfMatrix, Vec<usize>) {
        let mut m = self.clone();
        let pivots = m.eliminate(None);
        (m, pivots)
    }

    pub fn rank(&self) -> usize {
        self.row_reduce().1.len()
    }

    /// Gauss-Jordan elimination in place, mirroring every row operation on
    /// `rhs` when given. Returns pivot columns.
    fn eliminate(&mut self, mut rhs: Option<&mut GfMatrix>) -> Vec<usize> {
        let f = self.field().expect("matrix over a supported field");
        let cols = self.cols;
        let mut pivots = Vec::new();
        let mut lead = 0;
        for c in 0..cols {
            if lead == self.rows {
                break;
            }
            let Some(p) = (lead..self.rows).find(|&r| !self.get(r, c).is_zero()) else {
                continue;
            };
            self.swap_rows(lead, p);
            if let Some(b) = rhs.as_deref_mut() {
                b.swap_rows(lead, p);
            }
            let inv = f.inv(self.get(lead, c)).expect("nonzero pivot");
            f.scale_in_place(&mut self.data[lead * cols..(lead + 1) * cols], inv);
            if let Some(b) = rhs.as_deref_mut() {
                let bc = b.cols;
                f.scale_in_place(&mut b.data[lead * bc..(lead + 1) * bc], inv);
            }
            let pivot_row = self.row(lead).to_vec();
            let pivot_rhs = rhs.as_deref().map(|b| b.row(lead).to_vec());
            for r in 0..self.rows {
                let k = self.get(r, c);
                if r == lead || k.is_zero() {
                    continue;
                }
                f.mul_add_into(&mut self.data[r * cols..(r + 1) * cols], &pivot_row, k);
                if let (Some(b), Some(pr)) = (rhs.as_deref_mut(), pivot_rhs.as_ref()) {
                    let bc = b.cols;
                    f.mul_add_into(&mut b.data[r * bc..(r + 1) * bc], pr, k);
                }
            }
            pivots.push(c);
            lead += 1;
        }
        pivots
    }

    /// Solves `self * X = rhs` for X, where rhs has one row per row of self.
    /// Needs full column rank; extra rows must be consistent.
    pub fn solve_matrix(&self, rhs: &GfMatrix) -> Result<GfMatrix> {
        if rhs.rows != self.rows {
            return Err(GaloisError::Dimension { expected: self.rows, found: rhs.rows });
        }
        if rhs.order != self.order {
            return Err(GaloisError::OrderMismatch(self.order, rhs.order));
        }
        let mut a = self.clone();
        let mut b = rhs.clone();
        let pivots = a.eliminate(Some(&mut b));
        if pivots.len() < self.cols {
            return Err(GaloisError::Singular { rank: pivots.len(), needed: self.cols });
        }
        if (self.cols..self.rows).any(|r| b.row(r).iter().any(|e| !e.is_zero())) {
            return Err(GaloisError::Inconsistent);
        }
        // Full column rank: the pivots are exactly 0..cols in order.
        let mut x = GfMatrix::zeros(self.order, self.cols, rhs.cols);
        for r in 0..self.cols {
            x.data[r * rhs.cols..(r + 1) * rhs.cols].copy_from_slice(b.row(r));
        }
        Ok(x)
    }

    pub fn solve(&self, y: &[GfElement]) -> Result<Vec<GfElement>> {
        if let Some(e) = y.iter().find(|e| e.order != self.order) {
            return Err(GaloisError::OrderMismatch(self.order, e.order));
        }
        let rhs = GfMatrix { order: self.order, rows: y.len(), cols: 1, data: y.to_vec() };
        let x = self.solve_matrix(&rhs)?;
        Ok(x.column(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(v: u8) -> GfElement {
        GfElement::gf256(v)
    }

    #[test]
    fn addition_examples() {
        assert_eq!(gf_add(g(0x57), g(0x57)).unwrap(), g(0));
        for a in 0..=255u8 {
            assert_eq!(gf_add(g(a), g(0)).unwrap(), g(a));
        }
        assert_eq!(gf_add(g(0x57), g(0x83)).unwrap(), g(0xD4));
    }

    #[test]
    fn mismatched_orders_are_rejected() {
        let a = GfElement::new(3, 4).unwrap();
        assert_eq!(gf_add(a, g(3)), Err(GaloisError::OrderMismatch(4, 8)));
        assert_eq!(gf_mul(g(3), a), Err(GaloisError::OrderMismatch(8, 4)));
        assert!(GfElement::new(16, 4).is_err());
        assert!(field(0).is_err());
        assert!(field(17).is_err());
    }

    #[test]
    fn multiplication_examples() {
        for a in 0..=255u8 {
            assert_eq!(gf_mul(g(a), g(1)).unwrap(), g(a));
            assert_eq!(gf_mul(g(a), g(0)).unwrap(), g(0));
        }
        // 0x80 << 1 overflows once and is reduced by 0x11B.
        let oracle = peasant_mul(0x02, 0x80, 0x11B, 8);
        assert_eq!(oracle, 0x1B);
        assert_eq!(gf_mul(g(0x02), g(0x80)).unwrap().value() as u32, oracle);
        // Classic AES worked example.
        assert_eq!(gf_mul(g(0x57), g(0x83)).unwrap(), g(0xC1));
    }

    #[test]
    fn tables_match_peasant_oracle_exhaustively() {
        let f = default_field();
        for a in 0..256u32 {
            for b in 0..256u32 {
                assert_eq!(f.mul_raw(a as u16, b as u16) as u32, peasant_mul(a, b, 0x11B, 8));
            }
        }
    }

    #[test]
    fn inverse_exists_and_is_unique() {
        let f = default_field();
        assert_eq!(gf_inv(g(1)).unwrap(), g(1));
        assert_eq!(gf_inv(g(0)), Err(GaloisError::ZeroInverse));
        for a in 1..256u32 {
            let partners: Vec<u32> = (1..256u32).filter(|&b| peasant_mul(a, b, 0x11B, 8) == 1).collect();
            assert_eq!(partners.len(), 1, "a = {a:#x}");
            assert_eq!(f.inv(g(a as u8)).unwrap().value() as u32, partners[0]);
        }
    }

    #[test]
    fn every_supported_order_builds() {
        for m in 1..=MAX_ORDER {
            let f = field(m).unwrap();
            assert_eq!(f.size(), 1 << m);
            let a = f.generator();
            assert_eq!(f.mul(a, f.inv(a).unwrap()).unwrap(), GfElement::one(m));
        }
    }

    #[test]
    fn reducible_polynomial_is_rejected() {
        // x^8 + 1 = (x + 1)^8
        assert_eq!(Field::build(8, 0x101).unwrap_err(), GaloisError::Reducible(0x101));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(GfMatrix::identity(8, 3).rank(), 3);
        assert_eq!(GfMatrix::zeros(8, 3, 4).rank(), 0);
        let dup = GfMatrix::from_values(8, 2, 2, &[3, 7, 3, 7]).unwrap();
        assert_eq!(dup.rank(), 1);
    }

    #[test]
    fn solve_identity_and_permutation() {
        let y = vec![g(9), g(0x40), g(0xFE)];
        assert_eq!(GfMatrix::identity(8, 3).solve(&y).unwrap(), y);
        let perm = GfMatrix::from_values(8, 3, 3, &[0, 1, 0, 0, 0, 1, 1, 0, 0]).unwrap();
        // rows pick x1, x2, x0
        assert_eq!(perm.solve(&y).unwrap(), vec![y[2], y[0], y[1]]);
    }

    #[test]
    fn solve_round_trips_random_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut tried = 0;
        while tried < 200 {
            let c = GfMatrix::random(8, 4, 4, &mut rng).unwrap();
            if c.rank() < 4 {
                continue;
            }
            tried += 1;
            let x: Vec<_> = (0..4).map(|_| default_field().random(&mut rng)).collect();
            let y = c.mul_vec(&x).unwrap();
            assert_eq!(c.solve(&y).unwrap(), x);
        }
    }

    #[test]
    fn singular_and_inconsistent_systems() {
        let c = GfMatrix::from_values(8, 2, 2, &[1, 2, 1, 2]).unwrap();
        assert!(matches!(c.solve(&[g(1), g(1)]), Err(GaloisError::Singular { rank: 1, needed: 2 })));
        let tall = GfMatrix::from_values(8, 3, 2, &[1, 0, 0, 1, 1, 1]).unwrap();
        assert_eq!(tall.solve(&[g(1), g(2), g(3)]).unwrap(), vec![g(1), g(2)]);
        assert_eq!(tall.solve(&[g(1), g(2), g(4)]), Err(GaloisError::Inconsistent));
    }

    #[test]
    fn row_reduce_preserves_row_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let m = GfMatrix::random(8, 3, 5, &mut rng).unwrap();
            let (r, pivots) = m.row_reduce();
            // Stacking the reduced rows under the originals adds no rank.
            let mut rows: Vec<Vec<GfElement>> = (0..3).map(|i| m.row(i).to_vec()).collect();
            rows.extend((0..pivots.len()).map(|i| r.row(i).to_vec()));
            assert_eq!(GfMatrix::from_rows(8, &rows).unwrap().rank(), pivots.len());
            assert_eq!(pivots.len(), m.rank());
        }
    }
}
