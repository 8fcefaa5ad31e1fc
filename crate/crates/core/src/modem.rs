//! Constellations, bit labelling and hard decisions.
//!
//! Symbols are handled by index into [`Constellation::points`]; the index of
//! a point is also its bit label, written most-significant bit first (bit
//! `j = 0` is the MSB).

use crate::error::{Error, Result};
use crate::flops::FlopCounter;
use crate::linalg::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<C64>,
    labels: Vec<u32>,
    bits_per_symbol: usize,
    symbol_power: f64,
}

impl Constellation {
    /// QPSK with points `(±σ_s ± jσ_s)/√2` and Gray labels.
    ///
    /// The first label bit is set for the left half plane and the second for
    /// the lower half plane, so horizontally or vertically adjacent points
    /// differ in exactly one bit.
    pub fn qpsk(symbol_power: f64) -> Result<Self> {
        if !(symbol_power > 0.0) || !symbol_power.is_finite() {
            return Err(Error::invalid(format!(
                "symbol power must be positive, got {symbol_power}"
            )));
        }
        let a = (symbol_power / 2.0).sqrt();
        let mut points = Vec::with_capacity(4);
        let mut labels = Vec::with_capacity(4);
        for label in 0u32..4 {
            let re = if label & 0b10 != 0 { -a } else { a };
            let im = if label & 0b01 != 0 { -a } else { a };
            points.push(C64::new(re, im));
            labels.push(label);
        }
        Ok(Self {
            points,
            labels,
            bits_per_symbol: 2,
            symbol_power,
        })
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> C64 {
        self.points[index]
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn symbol_power(&self) -> f64 {
        self.symbol_power
    }

    /// `σ_s`, the RMS symbol amplitude.
    pub fn symbol_amplitude(&self) -> f64 {
        self.symbol_power.sqrt()
    }

    pub fn label(&self, index: usize) -> u32 {
        self.labels[index]
    }

    /// Bit `j` (0 = MSB) of the label of point `index`.
    #[inline]
    pub fn bit(&self, index: usize, j: usize) -> u8 {
        ((self.labels[index] >> (self.bits_per_symbol - 1 - j)) & 1) as u8
    }

    pub fn bits_of(&self, index: usize) -> Vec<u8> {
        (0..self.bits_per_symbol).map(|j| self.bit(index, j)).collect()
    }

    pub fn index_of_label(&self, label: u32) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn is_qpsk(&self) -> bool {
        self.points.len() == 4
    }

    /// Maps a bit stream onto point indices, `log2(C)` bits per symbol.
    pub fn modulate_indices(&self, bits: &[u8]) -> Result<Vec<usize>> {
        let m = self.bits_per_symbol;
        if bits.len() % m != 0 {
            return Err(Error::invalid(format!(
                "bit stream of length {} is not a multiple of {m}",
                bits.len()
            )));
        }
        bits.chunks(m)
            .map(|word| {
                let mut label = 0u32;
                for &b in word {
                    if b > 1 {
                        return Err(Error::invalid(format!("bit value {b} is not 0 or 1")));
                    }
                    label = (label << 1) | b as u32;
                }
                Ok(self.index_of_label(label).expect("labels cover every word"))
            })
            .collect()
    }

    pub fn modulate(&self, bits: &[u8]) -> Result<Vec<C64>> {
        Ok(self
            .modulate_indices(bits)?
            .into_iter()
            .map(|i| self.points[i])
            .collect())
    }

    /// Hard demapping of point indices back to bits.
    pub fn demap_indices(&self, indices: &[usize]) -> Vec<u8> {
        indices.iter().flat_map(|&i| self.bits_of(i)).collect()
    }

    /// Nearest point index; ties go to the lowest index.
    pub fn quantize(&self, u: C64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            let d = (u - a).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn quantize_counted(&self, u: C64, flops: &mut FlopCounter) -> usize {
        flops.add(self.points.len());
        flops.mul(self.points.len());
        self.quantize(u)
    }

    /// The `m` nearest point indices sorted by ascending distance to `u`.
    ///
    /// The sort is stable, so equidistant points keep index order and the
    /// first entry always equals [`quantize`](Self::quantize).
    pub fn nearest_list(&self, u: C64, m: usize) -> Result<Vec<usize>> {
        if m == 0 || m > self.points.len() {
            return Err(Error::invalid(format!(
                "candidate count {m} outside 1..={}",
                self.points.len()
            )));
        }
        let mut idx: Vec<(usize, f64)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, a)| (i, (u - a).norm_sqr()))
            .collect();
        idx.sort_by(|a, b| a.1.total_cmp(&b.1));
        Ok(idx.into_iter().take(m).map(|(i, _)| i).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn qpsk_unit_power_points() {
        let c = Constellation::qpsk(1.0).unwrap();
        for p in c.points() {
            assert!((p.re.abs() - FRAC_1_SQRT_2).abs() < 1e-15);
            assert!((p.im.abs() - FRAC_1_SQRT_2).abs() < 1e-15);
        }
        let mean: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / 4.0;
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qpsk_scaled_power() {
        let c = Constellation::qpsk(2.0).unwrap();
        for p in c.points() {
            assert!((p.re.abs() - 1.0).abs() < 1e-12);
            assert!((p.im.abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn qpsk_rejects_bad_power() {
        assert!(Constellation::qpsk(0.0).is_err());
        assert!(Constellation::qpsk(-1.0).is_err());
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        let c = Constellation::qpsk(1.0).unwrap();
        let mut labels: Vec<u32> = (0..4).map(|i| c.label(i)).collect();
        labels.sort();
        assert_eq!(labels, vec![0, 1, 2, 3]);
        for i in 0..4 {
            for j in 0..4 {
                let d = (c.point(i) - c.point(j)).norm();
                // nearest neighbours sit at distance sqrt(2) for unit power
                if (d - 2f64.sqrt()).abs() < 1e-9 {
                    assert_eq!((c.label(i) ^ c.label(j)).count_ones(), 1);
                }
            }
        }
    }

    #[test]
    fn modulate_round_trip_all_words() {
        let c = Constellation::qpsk(1.0).unwrap();
        for word in 0u8..4 {
            let bits = [word >> 1, word & 1];
            let idx = c.modulate_indices(&bits).unwrap();
            assert_eq!(c.label(idx[0]), word as u32);
            assert_eq!(c.demap_indices(&idx), bits.to_vec());
        }
    }

    #[test]
    fn modulate_length_contract() {
        let c = Constellation::qpsk(1.0).unwrap();
        let bits: Vec<u8> = (0..1000).map(|i| ((i * 7 + 3) % 5 % 2) as u8).collect();
        assert_eq!(c.modulate(&bits).unwrap().len(), 500);
        assert!(c.modulate(&bits[..999]).is_err());
    }

    #[test]
    fn quantize_examples() {
        let c = Constellation::qpsk(1.0).unwrap();
        let q = c.point(c.quantize(C64::new(0.8, 0.6)));
        assert!(close(q, C64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2)));
        for i in 0..4 {
            assert_eq!(c.quantize(c.point(i)), i);
        }
        assert_eq!(c.quantize(C64::new(0.0, 0.0)), 0);
    }

    #[test]
    fn nearest_list_examples() {
        let c = Constellation::qpsk(1.0).unwrap();
        let u = C64::new(0.1, 2.0);
        // |u - (0.707+0.707j)| = 1.428, |u - (-0.707+0.707j)| = 1.524
        let l = c.nearest_list(u, 2).unwrap();
        assert!(close(c.point(l[0]), C64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2)));
        assert!(close(c.point(l[1]), C64::new(-FRAC_1_SQRT_2, FRAC_1_SQRT_2)));
        assert_eq!(c.nearest_list(u, 1).unwrap(), vec![c.quantize(u)]);
        let all = c.nearest_list(u, 4).unwrap();
        assert_eq!(all.len(), 4);
        assert!(c.nearest_list(u, 0).is_err());
        assert!(c.nearest_list(u, 5).is_err());
    }

    proptest! {
        #[test]
        fn nearest_list_sorted_and_headed_by_quantize(re in -3.0f64..3.0, im in -3.0f64..3.0, m in 1usize..=4) {
            let c = Constellation::qpsk(1.0).unwrap();
            let u = C64::new(re, im);
            let l = c.nearest_list(u, m).unwrap();
            prop_assert_eq!(l[0], c.quantize(u));
            let d: Vec<f64> = l.iter().map(|&i| (u - c.point(i)).norm()).collect();
            prop_assert!(d.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn quantize_symmetries(re in -3.0f64..3.0, im in -3.0f64..3.0) {
            prop_assume!(re.abs() > 1e-9 && im.abs() > 1e-9);
            let c = Constellation::qpsk(1.0).unwrap();
            let u = C64::new(re, im);
            let q = c.point(c.quantize(u));
            prop_assert!(close(c.point(c.quantize(u.conj())), q.conj()));
            prop_assert!(close(c.point(c.quantize(-u)), -q));
        }
    }
}
