//! Decision feedback with constellation constraints (AMUDFCC).
//!
//! The DF loop of [`crate::dfdet`] is kept, but each soft estimate is first
//! checked against an unreliability region of the constellation map. An
//! unreliable estimate spawns the `M` nearest constellation points as
//! candidates; every candidate is rolled out through the remaining users
//! with the same filters, and the candidate whose tentative vector has the
//! smallest `‖r − Ĥ b‖²` becomes the decision.
//!
//! For QPSK with half-side `a = σ_s/√2`, the unreliable region is:
//!
//! * inside the square through the four points (`|Re u| ≤ a` and
//!   `|Im u| ≤ a`): the distance to the nearest point exceeds `d_th`;
//! * outside it: the estimate lies within `a − d_th` of a decision axis.

use crate::dfdet::{DfDetector, Detection, Mode, OrderingPermutation, RlsConfig};
use crate::error::{Error, Result};
use crate::flops::FlopCounter;
use crate::linalg::{residual_norm_sqr, CMat, CVec, C64};
use crate::modem::Constellation;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReliabilityVerdict {
    pub reliable: bool,
    /// Distance to the nearest constellation point.
    pub distance: f64,
}

/// Classifies a soft estimate for a QPSK constellation.
pub fn reliability_check(u: C64, constellation: &Constellation, d_th: f64) -> Result<ReliabilityVerdict> {
    if !constellation.is_qpsk() {
        return Err(Error::invalid("reliability regions are defined for QPSK only"));
    }
    let a = constellation.symbol_amplitude() / std::f64::consts::SQRT_2;
    if !(d_th > 0.0 && d_th < a) {
        return Err(Error::invalid(format!("threshold {d_th} outside (0, {a})")));
    }
    Ok(classify(u, constellation, a, d_th))
}

fn classify(u: C64, constellation: &Constellation, a: f64, d_th: f64) -> ReliabilityVerdict {
    let distance = (u - constellation.point(constellation.quantize(u))).norm();
    let (x, y) = (u.re.abs(), u.im.abs());
    let unreliable = if x <= a && y <= a {
        distance > d_th
    } else {
        x.min(y) < a - d_th
    };
    ReliabilityVerdict {
        reliable: !unreliable,
        distance,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Constant(f64),
    /// `d_th = α σ_v`, clamped into the admissible interval.
    NoiseScaled(f64),
}

impl Threshold {
    pub fn resolve(&self, noise_std: f64, constellation: &Constellation) -> f64 {
        match *self {
            Threshold::Constant(d) => d,
            Threshold::NoiseScaled(alpha) => {
                let a = constellation.symbol_amplitude() / std::f64::consts::SQRT_2;
                (alpha * noise_std).clamp(a * 1e-6, a * (1.0 - 1e-6))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcConfig {
    pub threshold: Threshold,
    /// Candidates `M` per unreliable decision.
    pub candidates: usize,
    /// With `false` the unreliable region is empty and the detector
    /// reduces to plain DF.
    pub enabled: bool,
}

impl Default for CcConfig {
    fn default() -> Self {
        Self {
            threshold: Threshold::Constant(0.5),
            candidates: 4,
            enabled: true,
        }
    }
}

impl CcConfig {
    pub fn validate(&self, constellation: &Constellation) -> Result<()> {
        if self.candidates == 0 || self.candidates > constellation.size() {
            return Err(Error::config(
                "candidates",
                format!("must lie in 1..={}", constellation.size()),
            ));
        }
        let a = constellation.symbol_amplitude() / std::f64::consts::SQRT_2;
        match self.threshold {
            Threshold::Constant(d) if !(d > 0.0 && d < a) => {
                Err(Error::config("dth", format!("must lie in (0, {a:.4})")))
            }
            Threshold::NoiseScaled(alpha) if !(alpha > 0.0) => {
                Err(Error::config("dth", "noise scale must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// A full hypothesis `b = [ŝ_1..ŝ_{k−1}, c_m, b̂_{k+1}..b̂_K]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TentativeVector {
    /// Point indices in original user order.
    pub symbols: Vec<usize>,
    /// Unreliable user (original index) and candidate rank `m` (0-based).
    pub origin: (usize, usize),
}

/// Builds the tentative vector for candidate `candidate` at `position`,
/// quantizing the remaining positions with the unchanged filters.
#[allow(clippy::too_many_arguments)]
pub fn rollout_candidate(
    df: &DfDetector,
    position: usize,
    candidate: usize,
    rank: usize,
    prefix: &[usize],
    r: &CVec,
    constellation: &Constellation,
    flops: &mut FlopCounter,
) -> (TentativeVector, Vec<C64>) {
    let k = df.users();
    debug_assert_eq!(prefix.len(), position);
    let mut idx: Vec<usize> = Vec::with_capacity(k);
    idx.extend_from_slice(prefix);
    idx.push(candidate);
    let mut values: Vec<C64> = idx.iter().map(|&i| constellation.point(i)).collect();
    let mut soft = Vec::with_capacity(k - position - 1);
    let mut buf = Vec::with_capacity(df.rx() + k);
    for p in (position + 1)..k {
        let u = df.soft_estimate(p, r, &values, &mut buf, flops);
        let b = constellation.quantize_counted(u, flops);
        soft.push(u);
        idx.push(b);
        values.push(constellation.point(b));
    }
    let order = df.order();
    (
        TentativeVector {
            symbols: order.restore(&idx),
            origin: (order.user_at(position), rank),
        },
        soft,
    )
}

/// Index of the tentative vector minimising `‖r − Ĥ b‖²` (lowest index on
/// ties) together with every metric.
pub fn select_best(
    r: &CVec,
    h: &CMat,
    vectors: &[TentativeVector],
    constellation: &Constellation,
    flops: &mut FlopCounter,
) -> (usize, Vec<f64>) {
    assert!(!vectors.is_empty(), "no tentative vectors to select from");
    let metrics: Vec<f64> = vectors
        .iter()
        .map(|b| {
            let vals: Vec<C64> = b.symbols.iter().map(|&i| constellation.point(i)).collect();
            residual_norm_sqr(r, h, &vals, flops)
        })
        .collect();
    let mut best = 0;
    for (m, &v) in metrics.iter().enumerate() {
        if v < metrics[best] {
            best = m;
        }
    }
    (best, metrics)
}

/// One constellation-constraint invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct CcEvent {
    pub position: usize,
    pub user: usize,
    pub metrics: Vec<f64>,
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcDetection {
    pub detection: Detection,
    pub tentative: Vec<TentativeVector>,
    pub cc_count: usize,
    pub events: Vec<CcEvent>,
}

/// AMUDFCC: DF-RLS with the constellation-constraint device.
#[derive(Debug, Clone)]
pub struct CcDetector {
    df: DfDetector,
    config: CcConfig,
}

impl CcDetector {
    pub fn new(
        rx: usize,
        order: OrderingPermutation,
        rls: RlsConfig,
        config: CcConfig,
        constellation: &Constellation,
    ) -> Result<Self> {
        config.validate(constellation)?;
        Ok(Self {
            df: DfDetector::new(rx, order, rls)?,
            config,
        })
    }

    pub fn df(&self) -> &DfDetector {
        &self.df
    }

    pub fn config(&self) -> &CcConfig {
        &self.config
    }

    /// Training passes straight to the DF filters; the constraint device
    /// only runs in decision-directed mode.
    #[allow(clippy::too_many_arguments)]
    pub fn detect(
        &mut self,
        r: &CVec,
        h_est: &CMat,
        mode: Mode<'_>,
        constellation: &Constellation,
        noise_std: f64,
        flops: &mut FlopCounter,
    ) -> CcDetection {
        if let Mode::Training(_) = mode {
            return CcDetection {
                detection: self.df.detect(r, mode, constellation, flops),
                tentative: Vec::new(),
                cc_count: 0,
                events: Vec::new(),
            };
        }
        let k = self.df.users();
        let a = constellation.symbol_amplitude() / std::f64::consts::SQRT_2;
        let d_th = self.config.threshold.resolve(noise_std, constellation);
        let mut decided: Vec<usize> = Vec::with_capacity(k);
        let mut values: Vec<C64> = Vec::with_capacity(k);
        let mut soft = Vec::with_capacity(k);
        let mut tentative = Vec::new();
        let mut events = Vec::new();
        let mut buf = Vec::with_capacity(self.df.rx() + k);
        // soft estimates already produced by the selected rollout, valid
        // for as long as later decisions follow that rollout
        let mut cached: Option<(usize, Vec<C64>)> = None;

        for p in 0..k {
            let u = match &cached {
                Some((start, s)) if p >= *start && p - start < s.len() => s[p - start],
                _ => {
                    cached = None;
                    self.df.soft_estimate(p, r, &values, &mut buf, flops)
                }
            };
            soft.push(u);
            let q = constellation.quantize_counted(u, flops);
            let reliable = !self.config.enabled || classify(u, constellation, a, d_th).reliable;
            let choice = if reliable {
                q
            } else {
                let list = constellation
                    .nearest_list(u, self.config.candidates)
                    .expect("candidate count validated");
                let mut vectors = Vec::with_capacity(list.len());
                let mut rollouts = Vec::with_capacity(list.len());
                for (m, &c) in list.iter().enumerate() {
                    let (tv, tail) =
                        rollout_candidate(&self.df, p, c, m, &decided, r, constellation, flops);
                    vectors.push(tv);
                    rollouts.push(tail);
                }
                let (best, metrics) = select_best(r, h_est, &vectors, constellation, flops);
                events.push(CcEvent {
                    position: p,
                    user: self.df.order().user_at(p),
                    metrics,
                    selected: best,
                });
                tentative.extend(vectors);
                cached = Some((p + 1, rollouts.swap_remove(best)));
                list[best]
            };
            if let Some((start, _)) = &cached {
                // a decision that departs from the cached rollout invalidates it
                if p >= *start && choice != q {
                    cached = None;
                }
            }
            decided.push(choice);
            values.push(constellation.point(choice));
        }
        self.df.adapt(r, &values, flops);
        let order = self.df.order();
        CcDetection {
            detection: Detection {
                decisions: order.restore(&decided),
                soft: order.restore(&soft),
            },
            cc_count: events.len(),
            tentative,
            events,
        }
    }
}

/// Detection orders of the parallel branches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchCodebook {
    permutations: Vec<OrderingPermutation>,
}

impl BranchCodebook {
    /// Branch 1 is `base`; the next branches are the cyclic shifts of the
    /// reversed base order, followed by the remaining permutations in
    /// lexicographic order. Duplicates are skipped.
    pub fn new(base: &OrderingPermutation, branches: usize) -> Result<Self> {
        let k = base.len();
        let limit = factorial(k);
        if branches == 0 || branches as u128 > limit {
            return Err(Error::config(
                "branches",
                format!("must lie in 1..={limit} for {k} users"),
            ));
        }
        let mut out: Vec<OrderingPermutation> = vec![base.clone()];
        let push = |p: Vec<usize>, out: &mut Vec<OrderingPermutation>| {
            if out.len() < branches && !out.iter().any(|o| o.as_slice() == p.as_slice()) {
                out.push(OrderingPermutation::new(p).expect("valid permutation"));
            }
        };
        let reversed: Vec<usize> = base.as_slice().iter().rev().copied().collect();
        for s in 0..k {
            let mut p = reversed.clone();
            p.rotate_left(s);
            push(p, &mut out);
        }
        let mut lex: Vec<usize> = (0..k).collect();
        loop {
            if out.len() >= branches {
                break;
            }
            push(lex.clone(), &mut out);
            if !next_permutation(&mut lex) {
                break;
            }
        }
        Ok(Self { permutations: out })
    }

    /// All `K!` orders, `base` first.
    pub fn exhaustive(base: &OrderingPermutation) -> Result<Self> {
        let n = factorial(base.len());
        if n > 40_320 {
            return Err(Error::config("branches", "exhaustive codebook limited to 8 users"));
        }
        Self::new(base, n as usize)
    }

    pub fn permutations(&self) -> &[OrderingPermutation] {
        &self.permutations
    }

    pub fn len(&self) -> usize {
        self.permutations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutations.is_empty()
    }

    /// Transformation matrix `T_l` with `(T ŝ)[p] = ŝ[order[p]]`.
    pub fn matrix(&self, l: usize) -> Vec<Vec<u8>> {
        let order = self.permutations[l].as_slice();
        let k = order.len();
        (0..k)
            .map(|p| (0..k).map(|u| u8::from(order[p] == u)).collect())
            .collect()
    }
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiBranchDetection {
    pub detection: Detection,
    pub branch: usize,
    pub branch_metrics: Vec<f64>,
    /// Every branch's tentative vectors and final decisions.
    pub tentative: Vec<TentativeVector>,
    pub cc_count: usize,
    pub events: Vec<CcEvent>,
}

/// Parallel AMUDFCC branches with independent filters, one per ordering.
#[derive(Debug, Clone)]
pub struct MultiBranchDetector {
    branches: Vec<CcDetector>,
}

impl MultiBranchDetector {
    pub fn new(
        rx: usize,
        codebook: &BranchCodebook,
        rls: RlsConfig,
        config: CcConfig,
        constellation: &Constellation,
    ) -> Result<Self> {
        let branches = codebook
            .permutations()
            .iter()
            .map(|p| CcDetector::new(rx, p.clone(), rls, config, constellation))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { branches })
    }

    pub fn branches(&self) -> &[CcDetector] {
        &self.branches
    }

    #[allow(clippy::too_many_arguments)]
    pub fn detect(
        &mut self,
        r: &CVec,
        h_est: &CMat,
        mode: Mode<'_>,
        constellation: &Constellation,
        noise_std: f64,
        flops: &mut FlopCounter,
    ) -> MultiBranchDetection {
        let single = self.branches.len() == 1;
        let mut outs = Vec::with_capacity(self.branches.len());
        for b in &mut self.branches {
            outs.push(b.detect(r, h_est, mode, constellation, noise_std, flops));
        }
        let mut metrics = Vec::with_capacity(outs.len());
        let mut best = 0;
        if single || matches!(mode, Mode::Training(_)) {
            metrics.push(0.0);
        } else {
            for (l, o) in outs.iter().enumerate() {
                let vals: Vec<C64> = o
                    .detection
                    .decisions
                    .iter()
                    .map(|&i| constellation.point(i))
                    .collect();
                let m = residual_norm_sqr(r, h_est, &vals, flops);
                if l > 0 && m < metrics[best] {
                    best = l;
                }
                metrics.push(m);
            }
        }
        let mut tentative = Vec::new();
        let mut events = Vec::new();
        let mut cc_count = 0;
        for (l, o) in outs.iter_mut().enumerate() {
            cc_count += o.cc_count;
            tentative.append(&mut o.tentative);
            if !single {
                tentative.push(TentativeVector {
                    symbols: o.detection.decisions.clone(),
                    origin: (usize::MAX, l),
                });
            }
            events.append(&mut o.events);
        }
        let chosen = outs.swap_remove(best);
        MultiBranchDetection {
            detection: chosen.detection,
            branch: best,
            branch_metrics: metrics,
            tentative,
            cc_count,
            events,
        }
    }
}
