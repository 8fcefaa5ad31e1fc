//! Monte-Carlo experiments.
//!
//! A [`SimConfig`] describes one family of cells (one per SNR point). Each
//! frame draws its channel, pilots, payload and noise from its own RNG
//! stream, so results do not depend on how frames are spread over threads,
//! and different detectors run with the same seed see identical frames.

pub mod checks;
mod complexity;
mod metrics;
mod sim;

pub use complexity::{analytic_complexity, analytic_flops, AnalyticComplexity};
pub use metrics::{wilson_interval, write_csv, MetricsRecord, CSV_HEADER};
pub use sim::{mse_curve, run_experiment, MseCurve};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    DfRls,
    Amudfcc,
    Vblast,
    Ml,
    Sd,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::DfRls,
        DetectorKind::Amudfcc,
        DetectorKind::Vblast,
        DetectorKind::Ml,
        DetectorKind::Sd,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            DetectorKind::DfRls => "dfrls",
            DetectorKind::Amudfcc => "amudfcc",
            DetectorKind::Vblast => "vblast",
            DetectorKind::Ml => "ml",
            DetectorKind::Sd => "sd",
        }
    }

    /// Adaptive detectors train their filters on the pilots.
    pub fn is_adaptive(&self) -> bool {
        matches!(self, DetectorKind::DfRls | DetectorKind::Amudfcc)
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|d| d.id() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::config("detector", format!("unknown detector '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelKind {
    Block,
    /// Time-varying Rayleigh fading with normalized Doppler `f_d T_s`.
    Jakes(f64),
}

impl ChannelKind {
    pub fn doppler(&self) -> f64 {
        match self {
            ChannelKind::Block => 0.0,
            ChannelKind::Jakes(f) => *f,
        }
    }
}

/// Channel knowledge available to the reference detectors and to the
/// selection metric of the constraint device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsiMode {
    /// The true channel at every instant.
    Perfect,
    /// One least-squares fit over the pilots, held for the frame.
    Ls,
    /// The pilot fit, then tracked by RLS on the detector's decisions.
    Rls,
}

impl FromStr for CsiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "perfect" => Ok(CsiMode::Perfect),
            "ls" => Ok(CsiMode::Ls),
            "rls" => Ok(CsiMode::Rls),
            _ => Err(Error::config("csi", format!("unknown CSI mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub users: usize,
    pub rx: usize,
    pub detector: DetectorKind,
    pub channel: ChannelKind,
    pub csi: CsiMode,
    /// Eb/N0 points in dB; `f64::INFINITY` means noise free.
    pub snr_db: Vec<f64>,
    pub frames: usize,
    pub frame_len: usize,
    pub training_len: usize,
    /// Forgetting factor of the detector filters.
    pub lambda: f64,
    /// Initial inverse-correlation scale `δ`.
    pub delta: f64,
    pub d_th: f64,
    pub candidates: usize,
    pub branches: usize,
    pub coded: bool,
    pub turbo_iters: usize,
    pub seed: u64,
    /// Forgetting factor of the RLS channel tracker.
    pub channel_lambda: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            users: 4,
            rx: 4,
            detector: DetectorKind::Amudfcc,
            channel: ChannelKind::Block,
            csi: CsiMode::Rls,
            snr_db: vec![13.0],
            frames: 100,
            frame_len: 500,
            training_len: 10,
            lambda: 0.998,
            delta: 0.01,
            d_th: 0.5,
            candidates: 4,
            branches: 1,
            coded: false,
            turbo_iters: 3,
            seed: 1,
            channel_lambda: 0.998,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::config("users", "at least one user is required"));
        }
        if self.rx < self.users {
            return Err(Error::config(
                "rx",
                format!("{} antennas cannot serve {} users", self.rx, self.users),
            ));
        }
        if self.training_len < self.users {
            return Err(Error::config(
                "train_len",
                format!("{} pilots cannot identify {} users", self.training_len, self.users),
            ));
        }
        if self.frame_len <= self.training_len {
            return Err(Error::config("frame_len", "must exceed the training length"));
        }
        if self.frames == 0 {
            return Err(Error::config("frames", "at least one frame is required"));
        }
        if self.snr_db.is_empty() {
            return Err(Error::config("snr_db", "no SNR points given"));
        }
        if self.snr_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return Err(Error::config("snr_db", "SNR points must be numbers"));
        }
        if let ChannelKind::Jakes(f) = self.channel {
            if !(0.0..0.5).contains(&f) {
                return Err(Error::config("fd_ts", "normalized Doppler must lie in [0, 0.5)"));
            }
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::config("lambda", "must lie in (0, 1]"));
        }
        if !(self.channel_lambda > 0.0 && self.channel_lambda <= 1.0) {
            return Err(Error::config("channel_lambda", "must lie in (0, 1]"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::config("delta", "must be positive"));
        }
        if self.branches == 0 {
            return Err(Error::config("branches", "at least one branch is required"));
        }
        if self.coded && self.turbo_iters == 0 {
            return Err(Error::config("turbo_iters", "at least one iteration is required"));
        }
        if self.detector == DetectorKind::Ml {
            let size = 4u128.checked_pow(self.users as u32).unwrap_or(u128::MAX);
            if size > crate::refdet::ML_SEARCH_LIMIT {
                return Err(Error::config(
                    "detector",
                    format!("exhaustive ML over {size} vectors exceeds the search limit"),
                ));
            }
        }
        Ok(())
    }
}

/// `σ_v² = σ_s² / (log2(C) · rate · 10^(Eb/N0 / 10))`.
pub fn snr_to_noise_variance(snr_db: f64, constellation: &crate::modem::Constellation, code_rate: f64) -> f64 {
    let ebn0 = 10f64.powf(snr_db / 10.0);
    constellation.symbol_power() / (constellation.bits_per_symbol() as f64 * code_rate * ebn0)
}
