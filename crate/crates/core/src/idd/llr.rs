use std::collections::HashSet;

use crate::ccdet::TentativeVector;
use crate::flops::FlopCounter;
use crate::linalg::{residual_norm_sqr, CMat, CVec, C64};
use crate::modem::Constellation;

use super::code::log_add;
use super::{clip, LLR_MAX};

/// Deduplicated list of candidate symbol vectors (point indices, user
/// order), kept in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ListB {
    vectors: Vec<Vec<usize>>,
    seen: HashSet<Vec<usize>>,
}

impl ListB {
    pub fn new() -> Self {
        Self::default()
    }

    /// The final decision followed by the tentative vectors.
    pub fn from_detection(decision: &[usize], tentative: &[TentativeVector]) -> Self {
        let mut l = Self::new();
        l.insert(decision.to_vec());
        for t in tentative {
            l.insert(t.symbols.clone());
        }
        l
    }

    /// All `C^K` vectors.
    pub fn full(users: usize, constellation: &Constellation) -> Self {
        let c = constellation.size();
        let mut l = Self::new();
        let total = c.pow(users as u32);
        for n in 0..total {
            let mut v = vec![0; users];
            let mut x = n;
            for k in (0..users).rev() {
                v[k] = x % c;
                x /= c;
            }
            l.insert(v);
        }
        l
    }

    pub fn insert(&mut self, v: Vec<usize>) -> bool {
        if self.seen.contains(&v) {
            return false;
        }
        self.seen.insert(v.clone());
        self.vectors.push(v);
        true
    }

    pub fn vectors(&self) -> &[Vec<usize>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Extrinsic LLRs of every bit `(k, j)` from a candidate list.
///
/// `priors` and the output are indexed `k * log2(C) + j`. For each bit the
/// numerator and denominator sum `exp(−‖r − Ĥ s‖²/σ_v² + f(s))` over list
/// members with the bit set and cleared, where `f(s)` adds `±L/2` for every
/// other bit of `s`. A side with no list member yields `∓LLR_MAX`.
pub fn detector_extrinsic_llr(
    r: &CVec,
    h: &CMat,
    noise_variance: f64,
    list: &ListB,
    priors: &[f64],
    constellation: &Constellation,
) -> Vec<f64> {
    let users = h.ncols();
    let bps = constellation.bits_per_symbol();
    let nbits = users * bps;
    debug_assert_eq!(priors.len(), nbits);
    assert!(!list.is_empty(), "list must contain at least one vector");

    let mut scratch = FlopCounter::new();
    let mut vals = vec![C64::new(0.0, 0.0); users];
    let mut num = vec![f64::NEG_INFINITY; nbits];
    let mut den = vec![f64::NEG_INFINITY; nbits];
    let mut bits = vec![0u8; nbits];
    for s in list.vectors() {
        for (k, &i) in s.iter().enumerate() {
            vals[k] = constellation.point(i);
            for j in 0..bps {
                bits[k * bps + j] = constellation.bit(i, j);
            }
        }
        let metric = -residual_norm_sqr(r, h, &vals, &mut scratch) / noise_variance;
        let prior_all: f64 = bits
            .iter()
            .zip(priors)
            .map(|(&b, &l)| if b == 1 { 0.5 * l } else { -0.5 * l })
            .sum();
        for n in 0..nbits {
            let own = if bits[n] == 1 { 0.5 * priors[n] } else { -0.5 * priors[n] };
            let v = metric + prior_all - own;
            if bits[n] == 1 {
                num[n] = log_add(num[n], v);
            } else {
                den[n] = log_add(den[n], v);
            }
        }
    }
    num.iter()
        .zip(&den)
        .map(|(&a, &b)| {
            if a == f64::NEG_INFINITY {
                -LLR_MAX
            } else if b == f64::NEG_INFINITY {
                LLR_MAX
            } else {
                clip(a - b)
            }
        })
        .collect()
}
