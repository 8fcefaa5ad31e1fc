//! Iterative detection and decoding.
//!
//! Each user's info bits are encoded with the (7,5) code, interleaved and
//! mapped onto its symbol stream. The receiver first detects every symbol
//! vector and stores the candidate list produced by the detector; the turbo
//! loop then alternates list-based extrinsic LLRs with log-MAP decoding,
//! re-weighting the stored lists with the decoder's extrinsics as priors.
//!
//! LLRs are `ln P(b = 1) / P(b = 0)` throughout.

mod code;
mod interleaver;
mod llr;

pub use code::ConvCode;
pub use interleaver::{user_interleaver_seed, Interleaver};
pub use llr::{detector_extrinsic_llr, ListB};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};
use crate::modem::Constellation;

/// Magnitude cap of every emitted LLR, also the value used when one
/// hypothesis is absent from the list.
pub const LLR_MAX: f64 = 50.0;

#[inline]
pub(crate) fn clip(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-LLR_MAX, LLR_MAX)
    }
}

/// What the detector left behind for one symbol instant.
#[derive(Debug, Clone)]
pub struct DetectedInstant {
    pub r: CVec,
    pub h_est: CMat,
    pub list: ListB,
}

#[derive(Debug, Clone)]
pub struct IddConfig {
    pub iterations: usize,
    pub noise_variance: f64,
}

/// Decoded info bits per iteration and user.
#[derive(Debug, Clone, PartialEq)]
pub struct IddOutcome {
    pub decoded: Vec<Vec<Vec<u8>>>,
}

/// Runs the turbo loop over one detected frame.
///
/// `instants` covers the data part of the frame; user `k`'s interleaved
/// coded bits occupy its symbols in order, `log2(C)` bits per symbol.
pub fn idd_run(
    instants: &[DetectedInstant],
    interleavers: &[Interleaver],
    code: &ConvCode,
    constellation: &Constellation,
    config: &IddConfig,
) -> Result<IddOutcome> {
    if config.iterations == 0 {
        return Err(Error::config("turbo_iters", "must be at least 1"));
    }
    if !(config.noise_variance > 0.0) {
        return Err(Error::invalid("list LLRs need a positive noise variance"));
    }
    let users = interleavers.len();
    let bps = constellation.bits_per_symbol();
    let coded_len = instants.len() * bps;
    for il in interleavers {
        if il.len() != coded_len {
            return Err(Error::invalid(format!(
                "interleaver of length {} for {coded_len} coded bits",
                il.len()
            )));
        }
    }
    code.info_len(coded_len)?;

    // detector priors in the interleaved (transmitted) bit order, per user
    let mut priors = vec![vec![0.0; coded_len]; users];
    let mut decoded = Vec::with_capacity(config.iterations);
    let mut stacked = vec![0.0; users * bps];
    let mut det_out = vec![vec![0.0; coded_len]; users];
    for _ in 0..config.iterations {
        for (t, inst) in instants.iter().enumerate() {
            for k in 0..users {
                for j in 0..bps {
                    stacked[k * bps + j] = priors[k][t * bps + j];
                }
            }
            let ext = detector_extrinsic_llr(
                &inst.r,
                &inst.h_est,
                config.noise_variance,
                &inst.list,
                &stacked,
                constellation,
            );
            for k in 0..users {
                for j in 0..bps {
                    det_out[k][t * bps + j] = ext[k * bps + j];
                }
            }
        }
        let mut bits = Vec::with_capacity(users);
        for k in 0..users {
            let channel = interleavers[k].deinterleave(&det_out[k])?;
            let (ext, info) = code.siso_decode(&channel)?;
            priors[k] = interleavers[k].interleave(&ext)?;
            bits.push(info);
        }
        decoded.push(bits);
    }
    Ok(IddOutcome { decoded })
}
