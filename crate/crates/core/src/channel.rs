//! Channel generation, noisy transmission and channel estimation.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64, ZERO};

/// Oscillators per quadrature branch of the sum-of-sinusoids generator.
pub const JAKES_OSCILLATORS: usize = 16;

/// One circularly-symmetric complex Gaussian sample with `E|x|² = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

/// I.i.d. `CN(0, 1)` gains, held constant for a whole frame.
pub fn gen_block_fading<R: Rng + ?Sized>(users: usize, rx: usize, rng: &mut R) -> CMat {
    DMatrix::from_fn(rx, users, |_, _| complex_gaussian(rng, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JakesParams {
    /// Maximum Doppler shift times symbol period, in cycles per symbol.
    pub normalized_doppler: f64,
    pub seed: u64,
}

impl JakesParams {
    pub fn validate(&self) -> Result<()> {
        let f = self.normalized_doppler;
        if !(0.0..0.5).contains(&f) {
            return Err(Error::invalid(format!(
                "normalized Doppler {f} outside [0, 0.5)"
            )));
        }
        Ok(())
    }
}

/// Sum-of-sinusoids Rayleigh fading process.
///
/// The in-phase and quadrature branches each sum [`JAKES_OSCILLATORS`]
/// cosines whose arrival angles sit on a randomly rotated grid over a
/// quarter circle; the in-phase branch uses the cosines of the angles and
/// the quadrature branch their sines. The time-averaged autocorrelation of
/// the complex output tracks `J0(2π f_d T τ)` and its power is one.
#[derive(Debug, Clone)]
pub struct JakesGenerator {
    omega_i: Vec<f64>,
    phase_i: Vec<f64>,
    omega_q: Vec<f64>,
    phase_q: Vec<f64>,
    scale: f64,
}

impl JakesGenerator {
    pub fn new(params: JakesParams) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let m = JAKES_OSCILLATORS;
        let wd = 2.0 * PI * params.normalized_doppler;
        let theta: f64 = rng.gen_range(-PI..PI);
        let mut omega_i = Vec::with_capacity(m);
        let mut omega_q = Vec::with_capacity(m);
        for n in 1..=m {
            let alpha = (2.0 * PI * n as f64 - PI + theta) / (4.0 * m as f64);
            omega_i.push(wd * alpha.cos());
            omega_q.push(wd * alpha.sin());
        }
        let phase_i = (0..m).map(|_| rng.gen_range(-PI..PI)).collect();
        let phase_q = (0..m).map(|_| rng.gen_range(-PI..PI)).collect();
        Ok(Self {
            omega_i,
            phase_i,
            omega_q,
            phase_q,
            // sqrt(2/M) per branch, then 1/sqrt(2) for unit complex power
            scale: (1.0 / m as f64).sqrt(),
        })
    }

    pub fn sample(&self, t: f64) -> C64 {
        let re: f64 = self
            .omega_i
            .iter()
            .zip(&self.phase_i)
            .map(|(w, p)| (w * t + p).cos())
            .sum();
        let im: f64 = self
            .omega_q
            .iter()
            .zip(&self.phase_q)
            .map(|(w, p)| (w * t + p).cos())
            .sum();
        C64::new(re, im) * self.scale
    }
}

pub fn gen_jakes_sequence(params: JakesParams, length: usize) -> Result<Vec<C64>> {
    if length == 0 {
        return Err(Error::invalid("Jakes sequence length must be at least 1"));
    }
    let g = JakesGenerator::new(params)?;
    Ok((0..length).map(|t| g.sample(t as f64)).collect())
}

/// Sub-seed for the `(antenna, user)` fading branch of a frame.
pub fn jakes_subseed(base: u64, rx: usize, user: usize) -> u64 {
    let mut x = base ^ ((rx as u64) << 32 | user as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    // splitmix64 finaliser
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Gains over the symbol instants of one frame.
#[derive(Debug, Clone)]
pub enum FrameChannel {
    Block(CMat),
    TimeVarying(Vec<CMat>),
}

impl FrameChannel {
    pub fn block<R: Rng + ?Sized>(users: usize, rx: usize, rng: &mut R) -> Self {
        FrameChannel::Block(gen_block_fading(users, rx, rng))
    }

    /// Independent Jakes processes per `(antenna, user)` entry.
    pub fn jakes<R: Rng + ?Sized>(
        users: usize,
        rx: usize,
        normalized_doppler: f64,
        length: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let base: u64 = rng.gen();
        let mut gens = Vec::with_capacity(users * rx);
        for u in 0..users {
            for a in 0..rx {
                gens.push(JakesGenerator::new(JakesParams {
                    normalized_doppler,
                    seed: jakes_subseed(base, a, u),
                })?);
            }
        }
        let mats = (0..length)
            .map(|t| {
                DMatrix::from_fn(rx, users, |a, u| gens[u * rx + a].sample(t as f64))
            })
            .collect();
        Ok(FrameChannel::TimeVarying(mats))
    }

    pub fn at(&self, i: usize) -> &CMat {
        match self {
            FrameChannel::Block(h) => h,
            FrameChannel::TimeVarying(v) => &v[i],
        }
    }
}

/// `r = H s + v` with `v ~ CN(0, σ_v² I)`.
pub fn transmit<R: Rng + ?Sized>(
    h: &CMat,
    s: &[C64],
    noise_variance: f64,
    rng: &mut R,
) -> Result<CVec> {
    if h.ncols() != s.len() {
        return Err(Error::invalid(format!(
            "channel has {} columns but {} symbols were given",
            h.ncols(),
            s.len()
        )));
    }
    if !(noise_variance >= 0.0) {
        return Err(Error::invalid("noise variance must be non-negative"));
    }
    let mut r = h * CVec::from_column_slice(s);
    if noise_variance > 0.0 {
        for x in r.iter_mut() {
            *x += complex_gaussian(rng, noise_variance);
        }
    }
    Ok(r)
}

/// Least-squares fit `Ĥ = R Sᴴ (S Sᴴ)⁻¹` over `P` pilot vectors.
pub fn ls_channel_estimate(r_train: &CMat, s_train: &CMat) -> Result<CMat> {
    if r_train.ncols() != s_train.ncols() {
        return Err(Error::invalid(format!(
            "{} received vectors for {} pilot vectors",
            r_train.ncols(),
            s_train.ncols()
        )));
    }
    if s_train.ncols() < s_train.nrows() {
        return Err(Error::SingularPilots);
    }
    let sh = s_train.adjoint();
    let gram = s_train * &sh;
    let inv = invert_hermitian(&gram).ok_or(Error::SingularPilots)?;
    Ok(r_train * sh * inv)
}

fn invert_hermitian(a: &CMat) -> Option<CMat> {
    let sv = a.clone().singular_values();
    if sv.min() <= sv.max() * 1e-12 {
        return None;
    }
    a.clone().try_inverse()
}

/// Exponentially weighted RLS regression of `r[i]` on the decided symbol
/// vector. All rows of `Ĥ` share one gain vector.
///
/// The estimator is seeded with a pilot fit `Ĥ₀` whose confidence is the
/// regularised pilot Gram matrix `G₀ = S Sᴴ + δ I`, so after `n` updates it
/// holds the minimiser of
/// `Σ λ^{n−τ} ‖r[τ] − H ŝ[τ]‖² + λⁿ tr((H − Ĥ₀) G₀ (H − Ĥ₀)ᴴ)`.
#[derive(Debug, Clone)]
pub struct ChannelEstimator {
    estimate: CMat,
    inv_corr: CMat,
    forgetting: f64,
}

impl ChannelEstimator {
    pub const DEFAULT_FORGETTING: f64 = 0.998;
    pub const DEFAULT_DELTA: f64 = 0.01;

    pub fn new(initial: CMat, initial_gram: &CMat, forgetting: f64) -> Result<Self> {
        if !(forgetting > 0.0 && forgetting <= 1.0) {
            return Err(Error::invalid(format!(
                "forgetting factor {forgetting} outside (0, 1]"
            )));
        }
        if initial_gram.nrows() != initial.ncols() || !initial_gram.is_square() {
            return Err(Error::invalid("initial Gram matrix has wrong shape"));
        }
        let inv_corr = invert_hermitian(initial_gram).ok_or(Error::SingularPilots)?;
        Ok(Self {
            estimate: initial,
            inv_corr,
            forgetting,
        })
    }

    /// Seeds from the LS fit over the pilots with Gram `S Sᴴ + δ I`.
    pub fn from_pilots(
        r_train: &CMat,
        s_train: &CMat,
        forgetting: f64,
        delta: f64,
    ) -> Result<Self> {
        let h0 = ls_channel_estimate(r_train, s_train)?;
        let k = s_train.nrows();
        let gram = s_train * s_train.adjoint() + CMat::identity(k, k) * C64::new(delta, 0.0);
        Self::new(h0, &gram, forgetting)
    }

    pub fn estimate(&self) -> &CMat {
        &self.estimate
    }

    pub fn inv_corr(&self) -> &CMat {
        &self.inv_corr
    }

    pub fn forgetting(&self) -> f64 {
        self.forgetting
    }

    pub fn update(&mut self, s_hat: &[C64], r: &CVec) {
        let k = self.inv_corr.nrows();
        let nr = self.estimate.nrows();
        debug_assert_eq!(s_hat.len(), k);
        let lam_inv = 1.0 / self.forgetting;
        // q = P s
        let mut q = vec![ZERO; k];
        for (row, qv) in q.iter_mut().enumerate() {
            *qv = (0..k).fold(ZERO, |acc, c| acc + self.inv_corr[(row, c)] * s_hat[c]);
        }
        let denom = 1.0 + lam_inv * s_hat.iter().zip(&q).map(|(s, q)| (s.conj() * q).re).sum::<f64>();
        let gain: Vec<C64> = q.iter().map(|v| v * (lam_inv / denom)).collect();
        // a-priori error e = r - Ĥ s
        for a in 0..nr {
            let pred = (0..k).fold(ZERO, |acc, c| acc + self.estimate[(a, c)] * s_hat[c]);
            let e = r[a] - pred;
            for c in 0..k {
                self.estimate[(a, c)] += e * gain[c].conj();
            }
        }
        for row in 0..k {
            for col in row..k {
                let v = (self.inv_corr[(row, col)] - gain[row] * q[col].conj()) * lam_inv;
                self.inv_corr[(row, col)] = v;
                self.inv_corr[(col, row)] = v.conj();
            }
            let d = self.inv_corr[(row, row)].re;
            self.inv_corr[(row, row)] = C64::new(d, 0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn block_fading_unit_variance() {
        let mut r = rng(1);
        let mut acc = 0.0;
        let n = 250_000;
        for _ in 0..n {
            let h = gen_block_fading(2, 2, &mut r);
            acc += h.iter().map(|x| x.norm_sqr()).sum::<f64>();
        }
        let mean = acc / (4 * n) as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn block_fading_deterministic_and_shaped() {
        let a = gen_block_fading(4, 4, &mut rng(7));
        let b = gen_block_fading(4, 4, &mut rng(7));
        assert_eq!(a, b);
        assert_eq!(a.shape(), (4, 4));
    }

    #[test]
    fn jakes_zero_doppler_is_constant() {
        let s = gen_jakes_sequence(
            JakesParams {
                normalized_doppler: 0.0,
                seed: 3,
            },
            50,
        )
        .unwrap();
        assert!(s.iter().all(|x| (x - s[0]).norm() < 1e-15));
    }

    #[test]
    fn jakes_rejects_out_of_range() {
        for f in [-0.1, 0.5, 0.7] {
            assert!(gen_jakes_sequence(
                JakesParams {
                    normalized_doppler: f,
                    seed: 0
                },
                10
            )
            .is_err());
        }
        assert!(gen_jakes_sequence(
            JakesParams {
                normalized_doppler: 0.01,
                seed: 0
            },
            0
        )
        .is_err());
    }

    #[test]
    fn jakes_unit_power() {
        let s = gen_jakes_sequence(
            JakesParams {
                normalized_doppler: 1e-3,
                seed: 11,
            },
            1_000_000,
        )
        .unwrap();
        let p = s.iter().map(|x| x.norm_sqr()).sum::<f64>() / s.len() as f64;
        assert!((p - 1.0).abs() < 0.01, "power {p}");
    }

    // Even an ideal Rayleigh process needs a Doppler well above 10^-2.5 for
    // the sample cross-correlation to settle below 0.05 in a unit test budget.
    #[test]
    fn jakes_branches_uncorrelated() {
        let n = 1_000_000;
        let base = 99;
        let seqs: Vec<Vec<C64>> = (0..6)
            .map(|u| {
                gen_jakes_sequence(
                    JakesParams {
                        normalized_doppler: 0.05,
                        seed: jakes_subseed(base, 0, u),
                    },
                    n,
                )
                .unwrap()
            })
            .collect();
        for a in 0..6 {
            for b in (a + 1)..6 {
                let c: C64 = seqs[a]
                    .iter()
                    .zip(&seqs[b])
                    .map(|(x, y)| x * y.conj())
                    .sum::<C64>()
                    / n as f64;
                assert!(c.norm() < 0.05, "cross-correlation {a},{b}: {}", c.norm());
            }
        }
    }

    #[test]
    fn transmit_noise_free_examples() {
        let h = CMat::from_column_slice(2, 1, &[C64::new(1.0, 0.0), C64::new(0.0, 1.0)]);
        let r = transmit(&h, &[C64::new(1.0, 0.0)], 0.0, &mut rng(0)).unwrap();
        assert_eq!(r.as_slice(), &[C64::new(1.0, 0.0), C64::new(0.0, 1.0)]);
        let r = transmit(&h, &[ZERO], 0.0, &mut rng(0)).unwrap();
        assert!(r.iter().all(|x| *x == ZERO));
        assert!(transmit(&h, &[ZERO, ZERO], 0.0, &mut rng(0)).is_err());
    }

    #[test]
    fn transmit_noise_covariance() {
        let mut g = rng(5);
        let h = gen_block_fading(2, 3, &mut g);
        let s = [C64::new(0.3, -0.1), C64::new(-1.0, 0.5)];
        let clean = &h * CVec::from_column_slice(&s);
        let var = 0.4;
        let n = 100_000;
        let mut cov = CMat::zeros(3, 3);
        for _ in 0..n {
            let v = transmit(&h, &s, var, &mut g).unwrap() - &clean;
            cov += &v * v.adjoint();
        }
        cov /= C64::new(n as f64, 0.0);
        for a in 0..3 {
            for b in 0..3 {
                let want = if a == b { var } else { 0.0 };
                assert!((cov[(a, b)] - C64::new(want, 0.0)).norm() < 0.02 * var);
            }
        }
    }

    #[test]
    fn transmit_linear_in_symbols() {
        let h = gen_block_fading(2, 2, &mut rng(8));
        let s1 = [C64::new(1.0, 2.0), C64::new(-0.5, 0.0)];
        let s2 = [C64::new(0.0, -1.0), C64::new(0.3, 0.7)];
        let sum: Vec<C64> = s1.iter().zip(&s2).map(|(a, b)| a + b).collect();
        // identical noise draws through identical seeds
        let r1 = transmit(&h, &s1, 0.1, &mut rng(9)).unwrap();
        let r2 = transmit(&h, &s2, 0.0, &mut rng(9)).unwrap();
        let r12 = transmit(&h, &sum, 0.1, &mut rng(9)).unwrap();
        assert!((r12 - r1 - r2).norm() < 1e-12);
    }

    fn pilots(users: usize, p: usize, g: &mut ChaCha8Rng) -> CMat {
        let c = crate::modem::Constellation::qpsk(1.0).unwrap();
        CMat::from_fn(users, p, |_, _| c.point(g.gen_range(0..4)))
    }

    #[test]
    fn ls_estimate_exact_without_noise() {
        let mut g = rng(3);
        let h = gen_block_fading(4, 4, &mut g);
        let s = pilots(4, 10, &mut g);
        let r = &h * &s;
        let est = ls_channel_estimate(&r, &s).unwrap();
        assert!((est - h).norm() < 1e-10);
    }

    #[test]
    fn ls_estimate_rejects_rank_deficient_pilots() {
        let s = CMat::from_element(2, 5, C64::new(1.0, 0.0));
        let r = CMat::zeros(3, 5);
        assert!(matches!(ls_channel_estimate(&r, &s), Err(Error::SingularPilots)));
        let short = CMat::identity(3, 2);
        assert!(ls_channel_estimate(&CMat::zeros(2, 2), &short).is_err());
    }

    #[test]
    fn ls_estimate_error_shrinks_with_noise() {
        let mut errs = Vec::new();
        for var in [1.0, 0.1, 0.01, 0.001] {
            let mut acc = 0.0;
            for trial in 0..200 {
                let mut g = rng(1000 + trial);
                let h = gen_block_fading(4, 4, &mut g);
                let s = pilots(4, 10, &mut g);
                let mut r = &h * &s;
                for x in r.iter_mut() {
                    *x += complex_gaussian(&mut g, var);
                }
                acc += (ls_channel_estimate(&r, &s).unwrap() - h).norm_squared();
            }
            errs.push(acc);
        }
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn rls_estimator_zero_innovation_keeps_estimate() {
        let mut g = rng(4);
        let h0 = gen_block_fading(3, 4, &mut g);
        let mut est = ChannelEstimator::new(h0.clone(), &CMat::identity(3, 3), 0.998).unwrap();
        let s = [C64::new(1.0, 0.0), C64::new(0.0, -1.0), C64::new(0.5, 0.5)];
        let r = &h0 * CVec::from_column_slice(&s);
        est.update(&s, &r);
        assert!((est.estimate() - h0).norm() < 1e-14);
    }

    #[test]
    fn rls_estimator_converges_on_static_channel() {
        let mut g = rng(12);
        let c = crate::modem::Constellation::qpsk(1.0).unwrap();
        let h = gen_block_fading(4, 4, &mut g);
        // a deliberately poor seed: the pilot fit of another channel
        let wrong = gen_block_fading(4, 4, &mut g);
        let sp = pilots(4, 10, &mut g);
        let rp = &wrong * &sp;
        let mut est = ChannelEstimator::from_pilots(&rp, &sp, 0.998, 0.01).unwrap();
        est.forgetting = 0.9;
        for _ in 0..200 {
            let s: Vec<C64> = (0..4).map(|_| c.point(g.gen_range(0..4))).collect();
            let r = &h * CVec::from_column_slice(&s);
            est.update(&s, &r);
        }
        assert!((est.estimate() - &h).norm() < 1e-6);
    }

    #[test]
    fn rls_estimator_exact_when_seeded_correctly() {
        let mut g = rng(21);
        let c = crate::modem::Constellation::qpsk(1.0).unwrap();
        let h = gen_block_fading(4, 4, &mut g);
        let sp = pilots(4, 10, &mut g);
        let rp = &h * &sp;
        let mut est = ChannelEstimator::from_pilots(&rp, &sp, 0.998, 0.01).unwrap();
        for _ in 0..50 {
            let s: Vec<C64> = (0..4).map(|_| c.point(g.gen_range(0..4))).collect();
            let r = &h * CVec::from_column_slice(&s);
            est.update(&s, &r);
        }
        assert!((est.estimate() - &h).norm() < 1e-6);
    }

    #[test]
    fn rls_estimator_matches_direct_windowed_fit() {
        let mut g = rng(77);
        let (nr, k) = (3, 2);
        for &lam in &[0.95, 0.998, 1.0] {
            let h0 = gen_block_fading(k, nr, &mut g);
            let g0 = {
                let a = gen_block_fading(k, k + 2, &mut g);
                a.adjoint() * a + CMat::identity(k, k) * C64::new(0.01, 0.0)
            };
            let mut est = ChannelEstimator::new(h0.clone(), &g0, lam).unwrap();
            let mut num = CMat::zeros(nr, k);
            let mut den = CMat::zeros(k, k);
            let steps = 60;
            for _ in 0..steps {
                let s: Vec<C64> = (0..k).map(|_| complex_gaussian(&mut g, 1.0)).collect();
                let r: CVec = CVec::from_fn(nr, |_, _| complex_gaussian(&mut g, 1.0));
                est.update(&s, &r);
                let sv = CVec::from_column_slice(&s);
                num = num * C64::new(lam, 0.0) + &r * sv.adjoint();
                den = den * C64::new(lam, 0.0) + &sv * sv.adjoint();
            }
            let w = C64::new(lam.powi(steps), 0.0);
            let direct = (num + &h0 * &g0 * w) * (den + &g0 * w).try_inverse().unwrap();
            let rel = (est.estimate() - &direct).norm() / direct.norm();
            assert!(rel < 1e-8, "lambda {lam}: rel {rel}");
        }
    }
}
