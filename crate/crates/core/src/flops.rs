//! Floating-point operation accounting.
//!
//! Kernels report complex additions and multiplications; the total uses
//! the convention of 2 flops per complex addition and 6 per complex
//! multiplication. Real scalings and divisions are charged as complex
//! multiplications, comparisons are free.

use std::ops::AddAssign;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlopCounter {
    pub complex_adds: u64,
    pub complex_mults: u64,
}

impl FlopCounter {
    pub const ADD_FLOPS: u64 = 2;
    pub const MULT_FLOPS: u64 = 6;

    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, n: usize) {
        self.complex_adds += n as u64;
    }

    #[inline]
    pub fn mul(&mut self, n: usize) {
        self.complex_mults += n as u64;
    }

    pub fn flops(&self) -> u64 {
        Self::ADD_FLOPS * self.complex_adds + Self::MULT_FLOPS * self.complex_mults
    }

    /// Charges an inner product of length `n`.
    #[inline]
    pub fn dot(&mut self, n: usize) {
        self.mul(n);
        self.add(n.saturating_sub(1));
    }

    /// Charges a dense `rows x cols` matrix-vector product.
    #[inline]
    pub fn matvec(&mut self, rows: usize, cols: usize) {
        self.mul(rows * cols);
        self.add(rows * cols.saturating_sub(1));
    }
}

impl AddAssign for FlopCounter {
    fn add_assign(&mut self, rhs: Self) {
        self.complex_adds += rhs.complex_adds;
        self.complex_mults += rhs.complex_mults;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights() {
        let mut c = FlopCounter::new();
        c.add(3);
        c.mul(2);
        assert_eq!(c.flops(), 3 * 2 + 2 * 6);
    }

    #[test]
    fn dot_and_matvec() {
        let mut c = FlopCounter::new();
        c.dot(4);
        assert_eq!((c.complex_mults, c.complex_adds), (4, 3));
        let mut c = FlopCounter::new();
        c.matvec(3, 4);
        assert_eq!((c.complex_mults, c.complex_adds), (12, 9));
    }
}
