//! Small dense complex helpers shared by the detectors.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::flops::FlopCounter;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// `a^H b`.
#[inline]
pub fn dotc(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(ZERO, |acc, (x, y)| acc + x.conj() * y)
}

/// `‖r − H s‖²` with `s` given as explicit symbol values.
pub fn residual_norm_sqr(r: &CVec, h: &CMat, s: &[C64], flops: &mut FlopCounter) -> f64 {
    let (nr, k) = h.shape();
    debug_assert_eq!(s.len(), k);
    let mut total = 0.0;
    for row in 0..nr {
        let mut e = r[row];
        for (col, sv) in s.iter().enumerate() {
            e -= h[(row, col)] * sv;
        }
        total += e.norm_sqr();
    }
    flops.matvec(nr, k);
    // subtraction from r, squared magnitudes, accumulation
    flops.add(nr);
    flops.mul(nr);
    flops.add(nr.saturating_sub(1));
    total
}

/// Column-wise Euclidean norms.
pub fn column_norms(h: &CMat) -> Vec<f64> {
    h.column_iter().map(|c| c.norm()).collect()
}

/// Full column rank check through the smallest singular value.
pub fn has_full_column_rank(h: &CMat) -> bool {
    let (nr, k) = h.shape();
    if k == 0 || nr < k {
        return false;
    }
    let sv = h.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    max > 0.0 && min > max * 1e-10
}
