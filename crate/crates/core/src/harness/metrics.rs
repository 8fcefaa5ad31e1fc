use std::io::Write;

use serde::Serialize;

use crate::error::Result;

pub const CSV_HEADER: &str = "detector,K,NR,snr_db,fdT,frames,ber,ber_ci_lo,ber_ci_hi,ser,mse_final,cc_rate,flops_per_symbol,analytic_flops,seed";

/// Results of one experiment cell. Error rates, `cc_rate` and the flop
/// counts cover the decision-directed part of the frames only; `mse` covers
/// every instant, training included.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub detector: String,
    pub users: usize,
    pub rx: usize,
    pub snr_db: f64,
    pub fd_ts: f64,
    pub frames: usize,
    pub bit_errors: u64,
    pub bits: u64,
    pub ber: f64,
    pub ber_ci: (f64, f64),
    pub ser: f64,
    /// Mean `|s − u|²` per symbol instant, averaged over users and frames.
    pub mse: Vec<f64>,
    /// Mean of `mse` over the second half of the frame.
    pub mse_final: f64,
    /// Constraint-device invocations per detected symbol.
    pub cc_rate: f64,
    /// Counted flops per detected symbol vector.
    pub flops_per_symbol: f64,
    pub analytic_flops: f64,
    /// Coded runs: BER after each turbo iteration.
    pub ber_per_iteration: Vec<f64>,
    pub seed: u64,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    detector: &'a str,
    #[serde(rename = "K")]
    users: usize,
    #[serde(rename = "NR")]
    rx: usize,
    snr_db: f64,
    #[serde(rename = "fdT")]
    fd_ts: f64,
    frames: usize,
    ber: f64,
    ber_ci_lo: f64,
    ber_ci_hi: f64,
    ser: f64,
    mse_final: f64,
    cc_rate: f64,
    flops_per_symbol: f64,
    analytic_flops: f64,
    seed: u64,
}

/// Writes the records as CSV with a header row.
pub fn write_csv<W: Write>(out: W, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(out);
    for r in records {
        w.serialize(CsvRow {
            detector: &r.detector,
            users: r.users,
            rx: r.rx,
            snr_db: r.snr_db,
            fd_ts: r.fd_ts,
            frames: r.frames,
            ber: r.ber,
            ber_ci_lo: r.ber_ci.0,
            ber_ci_hi: r.ber_ci.1,
            ser: r.ser,
            mse_final: r.mse_final,
            cc_rate: r.cc_rate,
            flops_per_symbol: r.flops_per_symbol,
            analytic_flops: r.analytic_flops,
            seed: r.seed,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Wilson score interval at 95 % for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> MetricsRecord {
        MetricsRecord {
            detector: "amudfcc".into(),
            users: 4,
            rx: 4,
            snr_db: 13.0,
            fd_ts: 0.0,
            frames: 10,
            bit_errors: 3,
            bits: 1000,
            ber: 0.003,
            ber_ci: (0.001, 0.008),
            ser: 0.005,
            mse: vec![],
            mse_final: 0.1,
            cc_rate: 0.05,
            flops_per_symbol: 1234.5,
            analytic_flops: 1000.0,
            ber_per_iteration: vec![],
            seed: 7,
        }
    }

    #[test]
    fn csv_header_and_row() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[record()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "amudfcc,4,4,13.0,0.0,10,0.003,0.001,0.008,0.005,0.1,0.05,1234.5,1000.0,7"
        );
        assert!(!text.contains('\r'));
    }

    #[test]
    fn wilson_known_values() {
        // 10 of 100: textbook interval (0.0552, 0.1744)
        let (lo, hi) = wilson_interval(10, 100);
        assert!((lo - 0.0552).abs() < 1e-4 && (hi - 0.1744).abs() < 1e-4, "{lo} {hi}");
        let (lo, hi) = wilson_interval(0, 1000);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.004);
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
    }

    #[test]
    fn wilson_contains_estimate() {
        for (s, n) in [(1, 3), (50, 60), (7, 7), (123, 100_000)] {
            let (lo, hi) = wilson_interval(s, n);
            let p = s as f64 / n as f64;
            assert!(lo <= p && p <= hi);
        }
    }
}
