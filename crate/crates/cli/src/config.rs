//! Command-line options, the optional TOML settings file and their merge.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;

use mudet::harness::{ChannelKind, CsiMode, DetectorKind, SimConfig};

/// Options shared by every simulation command. Unset options fall back to
/// the settings file, then to the command's defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct SimArgs {
    /// Number of users K; a comma-separated list for ber-vs-users and complexity
    #[arg(long, value_delimiter = ',')]
    pub users: Option<Vec<usize>>,
    /// Receive antennas N_R (defaults to K)
    #[arg(long)]
    pub rx: Option<usize>,
    /// Detectors: dfrls, amudfcc, vblast, ml, sd (comma-separated)
    #[arg(long, value_delimiter = ',')]
    pub detector: Option<Vec<String>>,
    /// Channel model: block or jakes
    #[arg(long)]
    pub channel: Option<String>,
    /// Normalized Doppler f_d T_s of the Jakes channel (comma-separated)
    #[arg(long = "fd-ts", value_delimiter = ',')]
    pub fd_ts: Option<Vec<f64>>,
    /// Channel knowledge: perfect, ls or rls
    #[arg(long)]
    pub csi: Option<String>,
    /// Eb/N0 in dB: a value, a list `a,b,c` or a range `a:step:b`
    #[arg(long = "snr-db", allow_hyphen_values = true)]
    pub snr_db: Option<String>,
    /// Frames per cell; aim for at least 100 bit errors per cell
    #[arg(long)]
    pub frames: Option<usize>,
    /// Symbol vectors per frame, pilots included
    #[arg(long = "frame-len")]
    pub frame_len: Option<usize>,
    /// Pilot vectors at the start of each frame
    #[arg(long = "train-len")]
    pub train_len: Option<usize>,
    /// Forgetting factor of the detector filters
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Forgetting factor of the RLS channel tracker
    #[arg(long = "channel-lambda")]
    pub channel_lambda: Option<f64>,
    /// Regularization of the initial inverse correlation matrix
    #[arg(long)]
    pub delta: Option<f64>,
    /// Reliability threshold d_th
    #[arg(long)]
    pub dth: Option<f64>,
    /// Candidates M per unreliable decision
    #[arg(long)]
    pub candidates: Option<usize>,
    /// Parallel detection branches L
    #[arg(long)]
    pub branches: Option<usize>,
    /// Encode every user with the (7,5) code and decode iteratively
    #[arg(long)]
    pub coded: bool,
    /// Detector/decoder iterations of coded runs
    #[arg(long = "turbo-iters")]
    pub turbo_iters: Option<usize>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV path (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file with any of the options above, keys spelled like the flags
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SnrSpec {
    Number(f64),
    List(Vec<f64>),
    Text(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    users: Option<OneOrMany<usize>>,
    rx: Option<usize>,
    detector: Option<OneOrMany<String>>,
    channel: Option<String>,
    fd_ts: Option<OneOrMany<f64>>,
    csi: Option<String>,
    snr_db: Option<SnrSpec>,
    frames: Option<usize>,
    frame_len: Option<usize>,
    train_len: Option<usize>,
    lambda: Option<f64>,
    channel_lambda: Option<f64>,
    delta: Option<f64>,
    dth: Option<f64>,
    candidates: Option<usize>,
    branches: Option<usize>,
    coded: Option<bool>,
    turbo_iters: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

fn read_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl SimArgs {
    /// Fills every unset flag from the settings file, if one was given.
    pub fn merged(&self) -> Result<SimArgs> {
        let Some(path) = &self.config else {
            return Ok(self.clone());
        };
        let f = read_file(path)?;
        let snr = f.snr_db.map(|s| match s {
            SnrSpec::Number(x) => x.to_string(),
            SnrSpec::List(v) => v.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
            SnrSpec::Text(t) => t,
        });
        Ok(SimArgs {
            users: self.users.clone().or(f.users.map(OneOrMany::into_vec)),
            rx: self.rx.or(f.rx),
            detector: self.detector.clone().or(f.detector.map(OneOrMany::into_vec)),
            channel: self.channel.clone().or(f.channel),
            fd_ts: self.fd_ts.clone().or(f.fd_ts.map(OneOrMany::into_vec)),
            csi: self.csi.clone().or(f.csi),
            snr_db: self.snr_db.clone().or(snr),
            frames: self.frames.or(f.frames),
            frame_len: self.frame_len.or(f.frame_len),
            train_len: self.train_len.or(f.train_len),
            lambda: self.lambda.or(f.lambda),
            channel_lambda: self.channel_lambda.or(f.channel_lambda),
            delta: self.delta.or(f.delta),
            dth: self.dth.or(f.dth),
            candidates: self.candidates.or(f.candidates),
            branches: self.branches.or(f.branches),
            coded: self.coded || f.coded.unwrap_or(false),
            turbo_iters: self.turbo_iters.or(f.turbo_iters),
            seed: self.seed.or(f.seed),
            out: self.out.clone().or(f.out),
            config: None,
        })
    }

    pub fn detectors(&self, default: &[DetectorKind]) -> Result<Vec<DetectorKind>> {
        match &self.detector {
            None => Ok(default.to_vec()),
            Some(list) => list
                .iter()
                .map(|s| s.trim().parse::<DetectorKind>().map_err(Into::into))
                .collect(),
        }
    }

    pub fn users_list(&self, default: &[usize]) -> Vec<usize> {
        self.users.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn snr_list(&self, default: &str) -> Result<Vec<f64>> {
        parse_snr(self.snr_db.as_deref().unwrap_or(default))
    }

    pub fn doppler_list(&self, default: &[f64]) -> Vec<f64> {
        self.fd_ts.clone().unwrap_or_else(|| default.to_vec())
    }

    /// A configuration for `users` users and detector `detector`; the
    /// channel, SNR list and Doppler are set by the caller.
    pub fn base_config(&self, users: usize, detector: DetectorKind, defaults: &SimConfig) -> Result<SimConfig> {
        let csi = match &self.csi {
            Some(s) => s.parse::<CsiMode>()?,
            None => defaults.csi,
        };
        Ok(SimConfig {
            users,
            rx: self.rx.unwrap_or(users),
            detector,
            channel: defaults.channel,
            csi,
            snr_db: defaults.snr_db.clone(),
            frames: self.frames.unwrap_or(defaults.frames),
            frame_len: self.frame_len.unwrap_or(defaults.frame_len),
            training_len: self.train_len.unwrap_or(defaults.training_len),
            lambda: self.lambda.unwrap_or(defaults.lambda),
            delta: self.delta.unwrap_or(defaults.delta),
            d_th: self.dth.unwrap_or(defaults.d_th),
            candidates: self.candidates.unwrap_or(defaults.candidates),
            branches: self.branches.unwrap_or(defaults.branches),
            coded: self.coded || defaults.coded,
            turbo_iters: self.turbo_iters.unwrap_or(defaults.turbo_iters),
            seed: self.seed.unwrap_or(defaults.seed),
            channel_lambda: self.channel_lambda.unwrap_or(defaults.channel_lambda),
        })
    }

    /// The channel model named by `--channel`, or `default`.
    pub fn channel_kind(&self, default: &str) -> Result<ChannelKind> {
        let name = self.channel.as_deref().unwrap_or(default);
        match name.to_ascii_lowercase().as_str() {
            "block" => Ok(ChannelKind::Block),
            "jakes" => Ok(ChannelKind::Jakes(0.0)),
            other => bail!("unknown channel model '{other}' (expected block or jakes)"),
        }
    }
}

/// Parses `x`, `a,b,c` or the inclusive range `a:step:b`.
pub fn parse_snr(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    if spec.contains(':') {
        let parts: Vec<f64> = spec
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("bad SNR range '{spec}'"))?;
        let [a, step, b] = parts[..] else {
            bail!("SNR range '{spec}' must look like start:step:stop");
        };
        if !(step > 0.0) || b < a {
            bail!("SNR range '{spec}' needs a positive step and start <= stop");
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| a + i as f64 * step).collect());
    }
    spec.split(',')
        .map(|p| {
            let p = p.trim();
            if p.eq_ignore_ascii_case("inf") {
                Ok(f64::INFINITY)
            } else {
                p.parse::<f64>().with_context(|| format!("bad SNR value '{p}'"))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_forms() {
        assert_eq!(parse_snr("13").unwrap(), vec![13.0]);
        assert_eq!(parse_snr("0, 5,10").unwrap(), vec![0.0, 5.0, 10.0]);
        assert_eq!(parse_snr("0:2:6").unwrap(), vec![0.0, 2.0, 4.0, 6.0]);
        assert_eq!(parse_snr("0:0.5:1").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_snr("-2:2:1").unwrap(), vec![-2.0, 0.0]);
        assert_eq!(parse_snr("inf").unwrap(), vec![f64::INFINITY]);
        assert!(parse_snr("0:0:4").is_err());
        assert!(parse_snr("1:2").is_err());
        assert!(parse_snr("ten").is_err());
    }

    #[test]
    fn file_values_fill_unset_flags_only() {
        let dir = std::env::temp_dir().join(format!("mudet-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.toml");
        std::fs::write(
            &path,
            "users = [2, 4]\nframes = 7\nsnr-db = \"0:5:10\"\nseed = 9\ndetector = \"sd\"\n",
        )
        .unwrap();
        let args = SimArgs {
            frames: Some(3),
            config: Some(path),
            ..Default::default()
        };
        let m = args.merged().unwrap();
        assert_eq!(m.frames, Some(3));
        assert_eq!(m.users, Some(vec![2, 4]));
        assert_eq!(m.seed, Some(9));
        assert_eq!(m.detectors(&[]).unwrap(), vec![DetectorKind::Sd]);
        assert_eq!(m.snr_list("1").unwrap(), vec![0.0, 5.0, 10.0]);
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        let dir = std::env::temp_dir().join(format!("mudet-cfg-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.toml");
        std::fs::write(&path, "userz = 3\n").unwrap();
        let args = SimArgs {
            config: Some(path),
            ..Default::default()
        };
        assert!(args.merged().is_err());
        std::fs::remove_dir_all(dir).ok();
    }
}
