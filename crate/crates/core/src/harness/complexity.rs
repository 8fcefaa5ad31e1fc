use super::DetectorKind;

/// Closed-form complex-multiplication counts per detected symbol vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticComplexity {
    /// `2K³ + K² + K`
    pub vblast: f64,
    /// `28K²/3 − 4/3`
    pub dfrls: f64,
    /// `M (5K²/2 − 3K/2)`, every decision unreliable.
    pub cc_overhead_worst: f64,
    /// `Σ_k [(k − 1) + M Σ_{j=1}^{K−k} j]`, the per-user itemization.
    pub cc_overhead_itemized: f64,
}

pub fn analytic_complexity(users: usize, candidates: usize) -> AnalyticComplexity {
    let k = users as f64;
    let m = candidates as f64;
    let itemized: usize = (1..=users)
        .map(|u| (u - 1) + candidates * (users - u) * (users - u + 1) / 2)
        .sum();
    AnalyticComplexity {
        vblast: 2.0 * k.powi(3) + k * k + k,
        dfrls: 28.0 * k * k / 3.0 - 4.0 / 3.0,
        cc_overhead_worst: m * (2.5 * k * k - 1.5 * k),
        cc_overhead_itemized: itemized as f64,
    }
}

/// Analytic flops per symbol vector, counting only multiplications at six
/// flops each. The constraint device adds its worst-case overhead scaled by
/// the measured fraction of unreliable decisions; exhaustive ML and sphere
/// decoding are both charged the `C^K` metric evaluations of the full
/// search.
pub fn analytic_flops(
    detector: DetectorKind,
    users: usize,
    rx: usize,
    candidates: usize,
    constellation_size: usize,
    cc_rate: f64,
) -> f64 {
    let a = analytic_complexity(users, candidates);
    let mults = match detector {
        DetectorKind::DfRls => a.dfrls,
        DetectorKind::Amudfcc => a.dfrls + cc_rate * a.cc_overhead_worst,
        DetectorKind::Vblast => a.vblast,
        DetectorKind::Ml | DetectorKind::Sd => {
            (constellation_size as f64).powi(users as i32) * (rx * users) as f64
        }
    };
    6.0 * mults
}
