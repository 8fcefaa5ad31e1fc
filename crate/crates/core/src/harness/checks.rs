//! Quick self-checks behind the `validate` command. Each one compares a
//! production routine with a slower direct computation on random inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{complex_gaussian, gen_block_fading, gen_jakes_sequence, jakes_subseed, transmit, JakesParams};
use crate::dfdet::UserFilterState;
use crate::error::Result;
use crate::flops::FlopCounter;
use crate::idd::{detector_extrinsic_llr, ListB};
use crate::linalg::{CMat, CVec, C64};
use crate::modem::Constellation;
use crate::refdet::{ml_exhaustive, sphere_decode};

use super::{run_experiment, CsiMode, DetectorKind, SimConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Runs every check with `seed`; `scale` multiplies the instance counts.
pub fn run_all(seed: u64, scale: usize) -> Result<Vec<CheckOutcome>> {
    let scale = scale.max(1);
    Ok(vec![
        rls_matches_direct_ls(seed, 10 * scale),
        sphere_matches_exhaustive(seed, 300 * scale)?,
        noise_free_is_error_free(seed)?,
        list_llr_matches_map(seed, 100 * scale),
        jakes_autocorrelation(seed, 200_000 * scale)?,
    ])
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

/// RLS weights against `(Σ λ^{i−τ} r r ᴴ + δ λⁱ I)⁻¹ Σ λ^{i−τ} r d*`.
pub fn rls_matches_direct_ls(seed: u64, sequences: usize) -> CheckOutcome {
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    let delta = 0.01;
    let mut worst: f64 = 0.0;
    for n in 0..sequences {
        let lam = [0.95, 0.998, 1.0][n % 3];
        let taps = g.gen_range(2..7);
        let len = g.gen_range(taps..=120);
        let mut st = UserFilterState::new(taps, 0, delta);
        let mut phi = CMat::zeros(taps, taps);
        let mut p = CVec::zeros(taps);
        let mut fl = FlopCounter::new();
        for _ in 0..len {
            let x = CVec::from_fn(taps, |_, _| complex_gaussian(&mut g, 1.0));
            let d = complex_gaussian(&mut g, 1.0);
            st.rls_step(x.as_slice(), d, lam, &mut fl);
            phi = phi * C64::new(lam, 0.0) + &x * x.adjoint();
            p = p * C64::new(lam, 0.0) + &x * d.conj();
        }
        let reg = &phi + CMat::identity(taps, taps) * C64::new(delta * lam.powi(len as i32), 0.0);
        let Some(inv) = reg.try_inverse() else {
            return outcome("rls-direct-ls", false, "direct system singular".into());
        };
        let w = inv * p;
        let diff: f64 = st.weights().iter().zip(w.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(diff / w.norm().max(1e-300));
    }
    outcome("rls-direct-ls", worst < 1e-8, format!("worst relative error {worst:.2e}"))
}

pub fn sphere_matches_exhaustive(seed: u64, instances: usize) -> Result<CheckOutcome> {
    let c = Constellation::qpsk(1.0)?;
    let mut g = ChaCha8Rng::seed_from_u64(seed ^ 0x5D);
    let mut mismatched = 0;
    for n in 0..instances {
        let k = 2 + n % 3;
        let h = gen_block_fading(k, k, &mut g);
        let s: Vec<C64> = (0..k).map(|_| c.point(g.gen_range(0..4))).collect();
        let var = g.gen_range(0.01..1.0);
        let r = transmit(&h, &s, var, &mut g)?;
        if sphere_decode(&r, &h, &c)?.ml.symbols != ml_exhaustive(&r, &h, &c)?.symbols {
            mismatched += 1;
        }
    }
    Ok(outcome(
        "sphere-decoder-ml",
        mismatched == 0,
        format!("{mismatched} of {instances} instances disagree"),
    ))
}

pub fn noise_free_is_error_free(seed: u64) -> Result<CheckOutcome> {
    let mut failing = Vec::new();
    for d in DetectorKind::ALL {
        let cfg = SimConfig {
            users: 3,
            rx: 3,
            detector: d,
            csi: CsiMode::Perfect,
            snr_db: vec![f64::INFINITY],
            frames: 10,
            frame_len: 100,
            seed,
            ..Default::default()
        };
        let rec = &run_experiment(&cfg)?[0];
        if rec.bit_errors > 0 {
            failing.push(format!("{d}: {} errors", rec.bit_errors));
        }
    }
    Ok(outcome(
        "noise-free",
        failing.is_empty(),
        if failing.is_empty() { "all detectors error free".into() } else { failing.join(", ") },
    ))
}

/// List LLRs over the full list against the per-bit MAP ratio computed in
/// the probability domain with `P(b = 1) = 1 / (1 + e^{−L})`.
pub fn list_llr_matches_map(seed: u64, instances: usize) -> CheckOutcome {
    let c = Constellation::qpsk(1.0).expect("unit power");
    let mut g = ChaCha8Rng::seed_from_u64(seed ^ 0x11D);
    let full = ListB::full(2, &c);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let h = gen_block_fading(2, 2, &mut g);
        let var = g.gen_range(0.3..2.0);
        let r = CVec::from_fn(2, |_, _| complex_gaussian(&mut g, 1.5));
        let priors: Vec<f64> = (0..4).map(|_| g.gen_range(-4.0..4.0)).collect();
        let got = detector_extrinsic_llr(&r, &h, var, &full, &priors, &c);
        for bit in 0..4 {
            let (mut num, mut den) = (0.0, 0.0);
            for a in 0..4 {
                for b in 0..4 {
                    let s = CVec::from_vec(vec![c.point(a), c.point(b)]);
                    let mut p = (-(&r - &h * s).norm_squared() / var).exp();
                    let bits = [c.bit(a, 0), c.bit(a, 1), c.bit(b, 0), c.bit(b, 1)];
                    for (j, &x) in bits.iter().enumerate() {
                        if j != bit {
                            let p1 = 1.0 / (1.0 + (-priors[j]).exp());
                            p *= if x == 1 { p1 } else { 1.0 - p1 };
                        }
                    }
                    if bits[bit] == 1 {
                        num += p;
                    } else {
                        den += p;
                    }
                }
            }
            worst = worst.max((got[bit] - (num / den).ln()).abs());
        }
    }
    outcome("list-llr-map", worst < 1e-9, format!("worst deviation {worst:.2e}"))
}

/// `J₀(x) = (1/π) ∫₀^π cos(x sin θ) dθ` by composite Simpson.
pub fn bessel_j0(x: f64) -> f64 {
    let n = 2000;
    let h = std::f64::consts::PI / n as f64;
    let f = |t: f64| (x * t.sin()).cos();
    let mut acc = f(0.0) + f(std::f64::consts::PI);
    for i in 1..n {
        acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0 / std::f64::consts::PI
}

pub fn jakes_autocorrelation(seed: u64, samples: usize) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for fd in [1e-3, 10f64.powf(-2.5)] {
        let seq = gen_jakes_sequence(
            JakesParams {
                normalized_doppler: fd,
                seed: jakes_subseed(seed, 0, 0),
            },
            samples,
        )?;
        for tau in (0..=100).step_by(10) {
            let n = samples - tau;
            let acc: C64 = (0..n).map(|i| seq[i + tau] * seq[i].conj()).sum();
            let est = acc.re / n as f64;
            let want = bessel_j0(2.0 * std::f64::consts::PI * fd * tau as f64);
            worst = worst.max((est - want).abs());
        }
    }
    Ok(outcome("jakes-autocorrelation", worst < 0.05, format!("worst deviation {worst:.3}")))
}
