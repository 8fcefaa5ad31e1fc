//! `mudet`: Monte-Carlo experiments for the multi-user detectors.

mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use mudet::harness::{
    analytic_complexity, checks, mse_curve, run_experiment, write_csv, ChannelKind, DetectorKind,
    MetricsRecord, SimConfig,
};

use config::SimArgs;

#[derive(Debug, Parser)]
#[command(name = "mudet", version, about = "Multi-user MIMO detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// BER against the number of users, N_R = K unless --rx is given
    BerVsUsers(SimArgs),
    /// BER against Eb/N0 at a fixed number of users
    BerVsSnr(SimArgs),
    /// Symbol-estimate MSE per symbol instant on a Jakes channel
    MseCurve(SimArgs),
    /// Counted and analytic flops per symbol vector against the number of users
    Complexity(SimArgs),
    /// Run the built-in oracle checks
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Multiplies the number of random instances per check
        #[arg(long, default_value_t = 1)]
        scale: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::BerVsUsers(a) => {
            let a = a.merged()?;
            let defaults = SimConfig {
                csi: mudet::harness::CsiMode::Ls,
                ..SimConfig::default()
            };
            let detectors = a.detectors(&[DetectorKind::DfRls, DetectorKind::Amudfcc, DetectorKind::Sd])?;
            let snr = a.snr_list("13")?;
            let channel = resolve_channel(&a, "block")?;
            let mut records = Vec::new();
            for d in detectors {
                for k in a.users_list(&[2, 4, 8]) {
                    let cfg = SimConfig {
                        channel,
                        snr_db: snr.clone(),
                        ..a.base_config(k, d, &defaults)?
                    };
                    eprintln!("{d} K={k}");
                    records.extend(run_experiment(&cfg)?);
                }
            }
            emit(&a, &records)?;
        }
        Command::BerVsSnr(a) => {
            let a = a.merged()?;
            let detectors = a.detectors(&[DetectorKind::DfRls, DetectorKind::Amudfcc, DetectorKind::Sd])?;
            let snr = a.snr_list("0:2:12")?;
            let channel = resolve_channel(&a, "block")?;
            let k = a.users_list(&[4])[0];
            let mut records = Vec::new();
            for d in detectors {
                let cfg = SimConfig {
                    channel,
                    snr_db: snr.clone(),
                    ..a.base_config(k, d, &SimConfig::default())?
                };
                eprintln!("{d} K={k}");
                records.extend(run_experiment(&cfg)?);
            }
            emit(&a, &records)?;
        }
        Command::MseCurve(a) => {
            let a = a.merged()?;
            let detectors = a.detectors(&[DetectorKind::DfRls, DetectorKind::Amudfcc])?;
            let snr = a.snr_list("14")?;
            let k = a.users_list(&[4])[0];
            let mut rows = Vec::new();
            for fd in a.doppler_list(&[1e-3]) {
                for &d in &detectors {
                    let cfg = SimConfig {
                        channel: match a.channel_kind("jakes")? {
                            ChannelKind::Block => ChannelKind::Block,
                            ChannelKind::Jakes(_) => ChannelKind::Jakes(fd),
                        },
                        snr_db: vec![snr[0]],
                        ..a.base_config(k, d, &SimConfig::default())?
                    };
                    eprintln!("{d} fdT={fd}");
                    rows.push((cfg.clone(), mse_curve(&cfg)?));
                }
            }
            let mut out = output(&a)?;
            writeln!(out, "detector,K,NR,snr_db,fdT,frames,index,mse,decision_directed")?;
            for (cfg, curve) in rows {
                for (i, m) in curve.mse.iter().enumerate() {
                    writeln!(
                        out,
                        "{},{},{},{:?},{:?},{},{},{:?},{}",
                        cfg.detector,
                        cfg.users,
                        cfg.rx,
                        curve.record.snr_db,
                        curve.record.fd_ts,
                        cfg.frames,
                        i,
                        m,
                        u8::from(i >= curve.switch_at)
                    )?;
                }
            }
            out.flush()?;
        }
        Command::Complexity(a) => {
            let a = a.merged()?;
            let defaults = SimConfig {
                csi: mudet::harness::CsiMode::Ls,
                ..SimConfig::default()
            };
            let detectors = a.detectors(&[DetectorKind::DfRls, DetectorKind::Amudfcc, DetectorKind::Vblast])?;
            let users = a.users_list(&[2, 4, 8]);
            let m = a.candidates.unwrap_or(defaults.candidates);
            eprintln!("K  vblast  dfrls  cc_worst  cc_itemized  (complex multiplications, M={m})");
            for &k in &users {
                let c = analytic_complexity(k, m);
                eprintln!(
                    "{k:<2} {:>7} {:>6.1} {:>9} {:>12}",
                    c.vblast, c.dfrls, c.cc_overhead_worst, c.cc_overhead_itemized
                );
            }
            let snr = a.snr_list("13")?;
            let channel = resolve_channel(&a, "block")?;
            let mut records = Vec::new();
            for d in detectors {
                for &k in &users {
                    let cfg = SimConfig {
                        channel,
                        snr_db: snr.clone(),
                        ..a.base_config(k, d, &defaults)?
                    };
                    records.extend(run_experiment(&cfg)?);
                }
            }
            emit(&a, &records)?;
        }
        Command::Validate { seed, scale } => {
            let outcomes = checks::run_all(seed, scale)?;
            let mut ok = true;
            for o in &outcomes {
                println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
                ok &= o.passed;
            }
            return Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn resolve_channel(a: &SimArgs, default: &str) -> Result<ChannelKind> {
    Ok(match a.channel_kind(default)? {
        ChannelKind::Block => ChannelKind::Block,
        ChannelKind::Jakes(_) => ChannelKind::Jakes(a.doppler_list(&[1e-3])[0]),
    })
}

fn output(a: &SimArgs) -> Result<Box<dyn Write>> {
    Ok(match &a.out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(a: &SimArgs, records: &[MetricsRecord]) -> Result<()> {
    write_csv(output(a)?, records)?;
    Ok(())
}
