//! Adaptive multi-user decision-feedback detection.
//!
//! Each user position `k` (in detection order) owns one concatenated filter
//! `ω̃_k = [ω_f; ω_b]` applied to the regressor `r̃_k = [r; −ŝ_{k−1}]`, so
//! that `ω̃_kᴴ r̃_k = ω_fᴴ r − ω_bᴴ ŝ_{k−1}`. The filters are adapted with
//! exponentially weighted RLS, on pilots first and on decisions afterwards.

use crate::error::{Error, Result};
use crate::flops::FlopCounter;
use crate::linalg::{column_norms, dotc, CMat, CVec, C64, ZERO};
use crate::modem::Constellation;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlsConfig {
    /// Forgetting factor λ.
    pub forgetting: f64,
    /// Regularisation δ of the start `Φ⁻¹[0] = δ⁻¹ I`.
    pub init_scale: f64,
    pub training_len: usize,
}

impl Default for RlsConfig {
    fn default() -> Self {
        Self {
            forgetting: 0.998,
            init_scale: 0.01,
            training_len: 10,
        }
    }
}

impl RlsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.forgetting > 0.0 && self.forgetting <= 1.0) {
            return Err(Error::config("lambda", "must lie in (0, 1]"));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::config("delta", "must be positive"));
        }
        Ok(())
    }
}

/// Detection order: `order[p]` is the user detected at position `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderingPermutation(Vec<usize>);

impl OrderingPermutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &u in &order {
            if u >= order.len() || seen[u] {
                return Err(Error::invalid(format!("{order:?} is not a permutation")));
            }
            seen[u] = true;
        }
        Ok(Self(order))
    }

    pub fn identity(k: usize) -> Self {
        Self((0..k).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn user_at(&self, position: usize) -> usize {
        self.0[position]
    }

    /// Reorders values given in original user order into detection order.
    pub fn apply<T: Copy>(&self, original: &[T]) -> Vec<T> {
        self.0.iter().map(|&u| original[u]).collect()
    }

    /// Maps values in detection order back to original user order.
    pub fn restore<T: Copy + Default>(&self, ordered: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); ordered.len()];
        for (p, &u) in self.0.iter().enumerate() {
            out[u] = ordered[p];
        }
        out
    }
}

/// Users by descending column norm of `Ĥ`; ties keep ascending user index.
pub fn column_norm_order(h: &CMat) -> OrderingPermutation {
    let norms = column_norms(h);
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    OrderingPermutation(order)
}

/// `r̃_k = [r; −ŝ_{k−1}]` for the user at `position` (0-based), which must
/// have exactly `position` previous decisions.
pub fn concat_regressor(r: &[C64], previous: &[C64], position: usize) -> Result<Vec<C64>> {
    if previous.len() != position {
        return Err(Error::invalid(format!(
            "position {position} needs {position} previous decisions, got {}",
            previous.len()
        )));
    }
    let mut out = Vec::with_capacity(r.len() + previous.len());
    out.extend_from_slice(r);
    out.extend(previous.iter().map(|s| -s));
    Ok(out)
}

/// Concatenated filter of one user position with its RLS state.
#[derive(Debug, Clone)]
pub struct UserFilterState {
    weights: Vec<C64>,
    inv_corr: CMat,
    position: usize,
    q: Vec<C64>,
    init_scale: f64,
    resets: u64,
}

impl UserFilterState {
    /// Zero weights and `Φ⁻¹ = δ⁻¹ I` with `rx + position` taps.
    pub fn new(rx: usize, position: usize, init_scale: f64) -> Self {
        let n = rx + position;
        Self {
            weights: vec![ZERO; n],
            inv_corr: CMat::identity(n, n) * C64::new(1.0 / init_scale, 0.0),
            position,
            q: vec![ZERO; n],
            init_scale,
            resets: 0,
        }
    }

    /// How often `Φ⁻¹` had to be restarted after losing definiteness.
    pub fn resets(&self) -> u64 {
        self.resets
    }

    fn restart_inv_corr(&mut self, regressor: &[C64]) -> f64 {
        let n = self.weights.len();
        self.inv_corr = CMat::identity(n, n) * C64::new(1.0 / self.init_scale, 0.0);
        self.resets += 1;
        for (qv, x) in self.q.iter_mut().zip(regressor) {
            *qv = x / self.init_scale;
        }
        dotc(regressor, &self.q).re
    }

    pub fn taps(&self) -> usize {
        self.weights.len()
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn weights(&self) -> &[C64] {
        &self.weights
    }

    pub fn set_weights(&mut self, w: &[C64]) {
        self.weights.copy_from_slice(w);
    }

    pub fn inv_corr(&self) -> &CMat {
        &self.inv_corr
    }

    /// `u = ω̃ᴴ r̃`.
    pub fn output(&self, regressor: &[C64], flops: &mut FlopCounter) -> C64 {
        debug_assert_eq!(regressor.len(), self.weights.len());
        flops.dot(self.weights.len());
        dotc(&self.weights, regressor)
    }

    /// One RLS recursion towards `desired`, returning the a-priori error ξ.
    pub fn rls_step(
        &mut self,
        regressor: &[C64],
        desired: C64,
        forgetting: f64,
        flops: &mut FlopCounter,
    ) -> C64 {
        let n = self.weights.len();
        debug_assert_eq!(regressor.len(), n);
        let lam_inv = 1.0 / forgetting;

        // q = Φ⁻¹[i−1] r̃
        for (row, qv) in self.q.iter_mut().enumerate() {
            let mut acc = ZERO;
            for (col, x) in regressor.iter().enumerate() {
                acc += self.inv_corr[(row, col)] * x;
            }
            *qv = acc;
        }
        flops.matvec(n, n);

        // 1 + λ⁻¹ r̃ᴴ q, real and positive for Hermitian positive definite Φ⁻¹
        let mut quad = dotc(regressor, &self.q).re;
        flops.dot(n);
        flops.mul(1);
        flops.add(1);
        if !(quad >= 0.0 && quad.is_finite()) {
            // round-off with λ < 1 can destroy definiteness; restart the
            // recursion from δ⁻¹ I and keep the weights
            quad = self.restart_inv_corr(regressor);
        }
        let denom = 1.0 + lam_inv * quad;
        let scale = lam_inv / denom;
        flops.mul(1 + n);

        // ξ = d − ω̃ᴴ[i−1] r̃
        let xi = desired - dotc(&self.weights, regressor);
        flops.dot(n);
        flops.add(1);

        // ω̃[i] = ω̃[i−1] + k ξ*
        let xi_c = xi.conj();
        for (w, q) in self.weights.iter_mut().zip(&self.q) {
            *w += q * scale * xi_c;
        }
        flops.mul(n);
        flops.add(n);

        // Φ⁻¹[i] = λ⁻¹ (Φ⁻¹[i−1] − k qᴴ), upper triangle mirrored
        for row in 0..n {
            let k_row = self.q[row] * scale;
            for col in row..n {
                let v = (self.inv_corr[(row, col)] - k_row * self.q[col].conj()) * lam_inv;
                self.inv_corr[(row, col)] = v;
                if col != row {
                    self.inv_corr[(col, row)] = v.conj();
                }
            }
            let d = self.inv_corr[(row, row)].re;
            self.inv_corr[(row, row)] = C64::new(d, 0.0);
        }
        let upper = n * (n + 1) / 2;
        flops.mul(2 * upper);
        flops.add(upper);

        xi
    }
}

/// Whether the desired response comes from pilots or from decisions.
#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    /// Known pilot point indices in original user order.
    Training(&'a [usize]),
    DecisionDirected,
}

/// Output of one symbol-vector detection, in original user order.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub decisions: Vec<usize>,
    pub soft: Vec<C64>,
}

/// Conventional adaptive DF detector (DF-RLS).
#[derive(Debug, Clone)]
pub struct DfDetector {
    states: Vec<UserFilterState>,
    order: OrderingPermutation,
    config: RlsConfig,
    rx: usize,
}

impl DfDetector {
    pub fn new(rx: usize, order: OrderingPermutation, config: RlsConfig) -> Result<Self> {
        config.validate()?;
        if order.is_empty() {
            return Err(Error::invalid("at least one user is required"));
        }
        if rx < order.len() {
            return Err(Error::invalid(format!(
                "{rx} receive antennas cannot separate {} users",
                order.len()
            )));
        }
        let states = (0..order.len())
            .map(|p| UserFilterState::new(rx, p, config.init_scale))
            .collect();
        Ok(Self {
            states,
            order,
            config,
            rx,
        })
    }

    pub fn users(&self) -> usize {
        self.order.len()
    }

    pub fn rx(&self) -> usize {
        self.rx
    }

    pub fn order(&self) -> &OrderingPermutation {
        &self.order
    }

    pub fn config(&self) -> &RlsConfig {
        &self.config
    }

    pub fn states(&self) -> &[UserFilterState] {
        &self.states
    }

    pub fn state(&self, position: usize) -> &UserFilterState {
        &self.states[position]
    }

    /// Soft estimate of the user at `position` given the decided symbol
    /// values of all earlier positions. The regressor is written to `buf`.
    pub fn soft_estimate(
        &self,
        position: usize,
        r: &CVec,
        previous: &[C64],
        buf: &mut Vec<C64>,
        flops: &mut FlopCounter,
    ) -> C64 {
        debug_assert_eq!(previous.len(), position);
        buf.clear();
        buf.extend_from_slice(r.as_slice());
        buf.extend(previous.iter().map(|s| -s));
        self.states[position].output(buf, flops)
    }

    /// One RLS step per user position. `desired` is in detection order and
    /// also provides the feedback part of every regressor.
    pub fn adapt(&mut self, r: &CVec, desired: &[C64], flops: &mut FlopCounter) {
        let mut buf = Vec::with_capacity(self.rx + self.users());
        for p in 0..self.states.len() {
            buf.clear();
            buf.extend_from_slice(r.as_slice());
            buf.extend(desired[..p].iter().map(|s| -s));
            let lam = self.config.forgetting;
            self.states[p].rls_step(&buf, desired[p], lam, flops);
        }
    }

    /// Detects one symbol vector in NCO order and then adapts every filter.
    pub fn detect(
        &mut self,
        r: &CVec,
        mode: Mode<'_>,
        constellation: &Constellation,
        flops: &mut FlopCounter,
    ) -> Detection {
        let k = self.users();
        let mut decided = Vec::with_capacity(k);
        let mut values = Vec::with_capacity(k);
        let mut soft = Vec::with_capacity(k);
        let mut buf = Vec::with_capacity(self.rx + k);
        for p in 0..k {
            let u = self.soft_estimate(p, r, &values, &mut buf, flops);
            let idx = match mode {
                Mode::Training(pilots) => pilots[self.order.user_at(p)],
                Mode::DecisionDirected => constellation.quantize_counted(u, flops),
            };
            soft.push(u);
            decided.push(idx);
            values.push(constellation.point(idx));
        }
        self.adapt(r, &values, flops);
        Detection {
            decisions: self.order.restore(&decided),
            soft: self.order.restore(&soft),
        }
    }
}
