use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ccdet::{BranchCodebook, CcConfig, MultiBranchDetector, TentativeVector, Threshold};
use crate::channel::{ls_channel_estimate, transmit, ChannelEstimator, FrameChannel};
use crate::dfdet::{column_norm_order, DfDetector, Mode, RlsConfig};
use crate::error::{Error, Result};
use crate::flops::FlopCounter;
use crate::idd::{idd_run, user_interleaver_seed, ConvCode, DetectedInstant, IddConfig, Interleaver, ListB};
use crate::linalg::{has_full_column_rank, CMat, CVec, C64};
use crate::modem::Constellation;
use crate::refdet::{ml_exhaustive_counted, sphere_decode_counted, vblast_detect};

use super::complexity::analytic_flops;
use super::metrics::{wilson_interval, MetricsRecord};
use super::{snr_to_noise_variance, ChannelKind, CsiMode, DetectorKind, SimConfig};

/// Smallest noise variance handed to the list LLRs of a noise-free run.
const LLR_NOISE_FLOOR: f64 = 1e-10;

/// Per-frame symbol MSE with the index at which decision-directed
/// operation starts.
#[derive(Debug, Clone, PartialEq)]
pub struct MseCurve {
    pub mse: Vec<f64>,
    pub switch_at: usize,
    pub record: MetricsRecord,
}

/// Runs every SNR point of `config`, one record per point.
pub fn run_experiment(config: &SimConfig) -> Result<Vec<MetricsRecord>> {
    config.validate()?;
    let setup = Setup::new(config)?;
    config
        .snr_db
        .iter()
        .map(|&snr| run_cell(config, &setup, snr))
        .collect()
}

/// Symbol-estimate MSE per instant at the first SNR point of `config`.
pub fn mse_curve(config: &SimConfig) -> Result<MseCurve> {
    config.validate()?;
    let setup = Setup::new(config)?;
    let record = run_cell(config, &setup, config.snr_db[0])?;
    Ok(MseCurve {
        mse: record.mse.clone(),
        switch_at: config.training_len,
        record,
    })
}

struct Setup {
    constellation: Constellation,
    code: ConvCode,
    interleavers: Vec<Interleaver>,
    info_len: usize,
}

impl Setup {
    fn new(cfg: &SimConfig) -> Result<Self> {
        let constellation = Constellation::qpsk(1.0)?;
        let code = ConvCode::new();
        let coded_len = (cfg.frame_len - cfg.training_len) * constellation.bits_per_symbol();
        let (interleavers, info_len) = if cfg.coded {
            let info_len = code
                .info_len(coded_len)
                .map_err(|_| Error::config("frame_len", "payload too short for a terminated code block"))?;
            let il = (0..cfg.users)
                .map(|k| Interleaver::new(coded_len, user_interleaver_seed(cfg.seed, k)))
                .collect();
            (il, info_len)
        } else {
            (Vec::new(), 0)
        };
        Ok(Self {
            constellation,
            code,
            interleavers,
            info_len,
        })
    }
}

#[derive(Debug, Default)]
struct FrameStats {
    bit_errors: u64,
    bits: u64,
    symbol_errors: u64,
    symbols: u64,
    /// Σ_k |s_k − u_k|² per instant.
    sq_error: Vec<f64>,
    cc_count: u64,
    flops: u64,
    iteration_errors: Vec<u64>,
}

fn run_cell(cfg: &SimConfig, setup: &Setup, snr_db: f64) -> Result<MetricsRecord> {
    let frames: Vec<FrameStats> = (0..cfg.frames)
        .into_par_iter()
        .map(|f| simulate_frame(cfg, setup, snr_db, f))
        .collect::<Result<_>>()?;

    let n = cfg.frame_len;
    let data = (n - cfg.training_len) as f64;
    let mut total = FrameStats {
        sq_error: vec![0.0; n],
        iteration_errors: vec![0; if cfg.coded { cfg.turbo_iters } else { 0 }],
        ..Default::default()
    };
    for fs in &frames {
        total.bit_errors += fs.bit_errors;
        total.bits += fs.bits;
        total.symbol_errors += fs.symbol_errors;
        total.symbols += fs.symbols;
        total.cc_count += fs.cc_count;
        total.flops += fs.flops;
        for (a, b) in total.sq_error.iter_mut().zip(&fs.sq_error) {
            *a += b;
        }
        for (a, b) in total.iteration_errors.iter_mut().zip(&fs.iteration_errors) {
            *a += b;
        }
    }
    let frames_f = cfg.frames as f64;
    let users_f = cfg.users as f64;
    let mse: Vec<f64> = total.sq_error.iter().map(|s| s / (frames_f * users_f)).collect();
    let tail = &mse[n / 2..];
    let mse_final = tail.iter().sum::<f64>() / tail.len() as f64;
    let cc_rate = total.cc_count as f64 / (frames_f * data * users_f);
    let ber = ratio(total.bit_errors, total.bits);
    let info_bits = (cfg.frames * cfg.users * setup.info_len) as u64;
    Ok(MetricsRecord {
        detector: cfg.detector.id().to_string(),
        users: cfg.users,
        rx: cfg.rx,
        snr_db,
        fd_ts: cfg.channel.doppler(),
        frames: cfg.frames,
        bit_errors: total.bit_errors,
        bits: total.bits,
        ber,
        ber_ci: wilson_interval(total.bit_errors, total.bits),
        ser: ratio(total.symbol_errors, total.symbols),
        mse,
        mse_final,
        cc_rate,
        flops_per_symbol: total.flops as f64 / (frames_f * data),
        analytic_flops: analytic_flops(
            cfg.detector,
            cfg.users,
            cfg.rx,
            cfg.candidates,
            setup.constellation.size(),
            cc_rate,
        ),
        ber_per_iteration: total.iteration_errors.iter().map(|&e| ratio(e, info_bits)).collect(),
        seed: cfg.seed,
    })
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// RNG of frame `frame`: the master seed selects the key, the frame index
/// the stream.
fn frame_rng(seed: u64, frame: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame as u64);
    rng
}

/// Pilot indices per instant, redrawn until `S Sᴴ` is invertible.
fn draw_pilots(users: usize, len: usize, c: &Constellation, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    loop {
        let pilots: Vec<Vec<usize>> = (0..len)
            .map(|_| (0..users).map(|_| rng.gen_range(0..c.size())).collect())
            .collect();
        let st = CMat::from_fn(len, users, |i, k| c.point(pilots[i][k]));
        if has_full_column_rank(&st) {
            return pilots;
        }
    }
}

enum Engine {
    Df(DfDetector),
    Cc(MultiBranchDetector),
    Reference(DetectorKind),
}

struct InstantOutput {
    decisions: Vec<usize>,
    soft: Vec<C64>,
    tentative: Vec<TentativeVector>,
    cc_count: usize,
}

impl Engine {
    #[allow(clippy::too_many_arguments)]
    fn detect(
        &mut self,
        r: &CVec,
        h_est: &CMat,
        mode: Mode<'_>,
        c: &Constellation,
        noise_std: f64,
        flops: &mut FlopCounter,
    ) -> Result<InstantOutput> {
        let points = |d: &[usize]| d.iter().map(|&i| c.point(i)).collect::<Vec<_>>();
        Ok(match self {
            Engine::Df(d) => {
                let det = d.detect(r, mode, c, flops);
                InstantOutput {
                    decisions: det.decisions,
                    soft: det.soft,
                    tentative: Vec::new(),
                    cc_count: 0,
                }
            }
            Engine::Cc(m) => {
                let out = m.detect(r, h_est, mode, c, noise_std, flops);
                InstantOutput {
                    decisions: out.detection.decisions,
                    soft: out.detection.soft,
                    tentative: out.tentative,
                    cc_count: out.cc_count,
                }
            }
            Engine::Reference(kind) => {
                let (decisions, soft) = match kind {
                    DetectorKind::Vblast => {
                        let v = vblast_detect(r, h_est, c, flops)?;
                        (v.decisions, v.soft)
                    }
                    DetectorKind::Ml => {
                        let m = ml_exhaustive_counted(r, h_est, c, flops)?;
                        let s = points(&m.symbols);
                        (m.symbols, s)
                    }
                    DetectorKind::Sd => {
                        let m = match sphere_decode_counted(r, h_est, c, flops) {
                            Ok(sd) => sd.ml,
                            Err(Error::SingularMatrix) => ml_exhaustive_counted(r, h_est, c, flops)?,
                            Err(e) => return Err(e),
                        };
                        let s = points(&m.symbols);
                        (m.symbols, s)
                    }
                    _ => unreachable!("adaptive detectors have their own engines"),
                };
                InstantOutput {
                    decisions,
                    soft,
                    tentative: Vec::new(),
                    cc_count: 0,
                }
            }
        })
    }
}

fn simulate_frame(cfg: &SimConfig, setup: &Setup, snr_db: f64, frame: usize) -> Result<FrameStats> {
    let c = &setup.constellation;
    let (k, nr, n, t) = (cfg.users, cfg.rx, cfg.frame_len, cfg.training_len);
    let rate = if cfg.coded { setup.code.rate() } else { 1.0 };
    let var = snr_to_noise_variance(snr_db, c, rate);
    let noise_std = var.sqrt();
    let mut rng = frame_rng(cfg.seed, frame);

    // channel, pilots, payload and noise, in this order
    let channel = match cfg.channel {
        ChannelKind::Block => FrameChannel::block(k, nr, &mut rng),
        ChannelKind::Jakes(fd) => FrameChannel::jakes(k, nr, fd, n, &mut rng)?,
    };
    let mut symbols = draw_pilots(k, t, c, &mut rng);
    let mut info = Vec::new();
    if cfg.coded {
        let mut streams = Vec::with_capacity(k);
        for user in 0..k {
            let bits: Vec<u8> = (0..setup.info_len).map(|_| rng.gen_range(0..2)).collect();
            let coded = setup.interleavers[user].interleave(&setup.code.encode(&bits))?;
            streams.push(c.modulate_indices(&coded)?);
            info.push(bits);
        }
        for i in 0..n - t {
            symbols.push((0..k).map(|user| streams[user][i]).collect());
        }
    } else {
        for _ in t..n {
            symbols.push((0..k).map(|_| rng.gen_range(0..c.size())).collect());
        }
    }
    let received: Vec<CVec> = (0..n)
        .map(|i| {
            let s: Vec<C64> = symbols[i].iter().map(|&x| c.point(x)).collect();
            transmit(channel.at(i), &s, var, &mut rng)
        })
        .collect::<Result<_>>()?;

    let s_train = CMat::from_fn(k, t, |user, i| c.point(symbols[i][user]));
    let r_train = CMat::from_fn(nr, t, |a, i| received[i][a]);
    let h_ls = ls_channel_estimate(&r_train, &s_train)?;
    let mut tracker = match cfg.csi {
        CsiMode::Rls => Some(ChannelEstimator::from_pilots(
            &r_train,
            &s_train,
            cfg.channel_lambda,
            ChannelEstimator::DEFAULT_DELTA,
        )?),
        _ => None,
    };
    let order = match cfg.csi {
        CsiMode::Perfect => column_norm_order(channel.at(0)),
        _ => column_norm_order(&h_ls),
    };
    let rls = RlsConfig {
        forgetting: cfg.lambda,
        init_scale: cfg.delta,
        training_len: t,
    };
    let mut engine = match cfg.detector {
        DetectorKind::DfRls => Engine::Df(DfDetector::new(nr, order, rls)?),
        DetectorKind::Amudfcc => {
            let cc = CcConfig {
                threshold: Threshold::Constant(cfg.d_th),
                candidates: cfg.candidates,
                enabled: true,
            };
            let book = BranchCodebook::new(&order, cfg.branches)?;
            Engine::Cc(MultiBranchDetector::new(nr, &book, rls, cc, c)?)
        }
        other => Engine::Reference(other),
    };

    let mut stats = FrameStats {
        sq_error: vec![0.0; n],
        ..Default::default()
    };
    let mut instants = Vec::new();
    let mut flops = FlopCounter::new();
    let mut scratch = FlopCounter::new();
    for i in 0..n {
        let r = &received[i];
        let training = i < t;
        let h_est: CMat = match (&tracker, cfg.csi) {
            (_, CsiMode::Perfect) => channel.at(i).clone(),
            (Some(tr), CsiMode::Rls) if !training => tr.estimate().clone(),
            _ => h_ls.clone(),
        };
        let mode = if training {
            Mode::Training(&symbols[i])
        } else {
            Mode::DecisionDirected
        };
        let counter = if training { &mut scratch } else { &mut flops };
        let out = engine.detect(r, &h_est, mode, c, noise_std, counter)?;

        for user in 0..k {
            stats.sq_error[i] += (c.point(symbols[i][user]) - out.soft[user]).norm_sqr();
        }
        if training {
            continue;
        }
        stats.cc_count += out.cc_count as u64;
        for user in 0..k {
            let (tx, rx) = (symbols[i][user], out.decisions[user]);
            stats.symbols += 1;
            if tx != rx {
                stats.symbol_errors += 1;
            }
            if !cfg.coded {
                stats.bits += c.bits_per_symbol() as u64;
                stats.bit_errors += (c.label(tx) ^ c.label(rx)).count_ones() as u64;
            }
        }
        if let Some(tr) = tracker.as_mut() {
            let vals: Vec<C64> = out.decisions.iter().map(|&x| c.point(x)).collect();
            tr.update(&vals, r);
        }
        if cfg.coded {
            instants.push(DetectedInstant {
                r: r.clone(),
                h_est,
                list: ListB::from_detection(&out.decisions, &out.tentative),
            });
        }
    }
    stats.flops = flops.flops();

    if cfg.coded {
        let outcome = idd_run(
            &instants,
            &setup.interleavers,
            &setup.code,
            c,
            &IddConfig {
                iterations: cfg.turbo_iters,
                noise_variance: var.max(LLR_NOISE_FLOOR),
            },
        )?;
        for decoded in &outcome.decoded {
            let errors: u64 = decoded
                .iter()
                .zip(&info)
                .map(|(d, b)| d.iter().zip(b).filter(|(x, y)| x != y).count() as u64)
                .sum();
            stats.iteration_errors.push(errors);
        }
        stats.bit_errors = *stats.iteration_errors.last().expect("at least one iteration");
        stats.bits = (k * setup.info_len) as u64;
    }
    Ok(stats)
}
