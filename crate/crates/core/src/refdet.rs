//! Reference detectors: ZF V-BLAST, exhaustive ML and sphere decoding.

use crate::dfdet::column_norm_order;
use crate::error::{Error, Result};
use crate::flops::FlopCounter;
use crate::linalg::{has_full_column_rank, residual_norm_sqr, CMat, CVec, C64, ZERO};
use crate::modem::Constellation;

/// Largest `C^K` the exhaustive search accepts.
pub const ML_SEARCH_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MlResult {
    /// Point indices in user order.
    pub symbols: Vec<usize>,
    /// `‖r − Ĥ s‖²`.
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VblastOutput {
    pub decisions: Vec<usize>,
    /// Nulling-filter outputs in user order.
    pub soft: Vec<C64>,
}

/// Zero-forcing nulling and cancellation in column-norm order.
///
/// At each stage the pseudo-inverse of the remaining columns is formed, the
/// strongest remaining user is nulled, quantized and subtracted from `r`.
pub fn vblast_detect(
    r: &CVec,
    h: &CMat,
    constellation: &Constellation,
    flops: &mut FlopCounter,
) -> Result<VblastOutput> {
    let (nr, k) = h.shape();
    if r.len() != nr {
        return Err(Error::invalid("received vector and channel disagree"));
    }
    if !has_full_column_rank(h) {
        return Err(Error::SingularMatrix);
    }
    let order = column_norm_order(h);
    let mut remaining: Vec<usize> = order.as_slice().to_vec();
    let mut residual = r.clone();
    let mut decisions = vec![0usize; k];
    let mut soft = vec![ZERO; k];
    while let Some(&user) = remaining.first() {
        let m = remaining.len();
        let sub = CMat::from_fn(nr, m, |row, c| h[(row, remaining[c])]);
        let sub_h = sub.adjoint();
        let gram = &sub_h * &sub;
        flops.mul(m * m * nr);
        flops.add(m * m * (nr - 1));
        let inv = gram.try_inverse().ok_or(Error::SingularMatrix)?;
        // Gauss-Jordan style inverse, ~m³ multiplications
        flops.mul(m * m * m);
        flops.add(m * m * m);
        // nulling vector of the first remaining user: row 0 of (HᴴH)⁻¹Hᴴ
        let mut y = ZERO;
        for row in 0..nr {
            let mut w = ZERO;
            for c in 0..m {
                w += inv[(0, c)] * sub_h[(c, row)];
            }
            y += w * residual[row];
        }
        flops.matvec(1, m * nr);
        flops.dot(nr);
        let idx = constellation.quantize_counted(y, flops);
        decisions[user] = idx;
        soft[user] = y;
        let s = constellation.point(idx);
        for row in 0..nr {
            residual[row] -= h[(row, user)] * s;
        }
        flops.mul(nr);
        flops.add(nr);
        remaining.remove(0);
    }
    Ok(VblastOutput { decisions, soft })
}

fn search_size(constellation: &Constellation, k: usize) -> u128 {
    (constellation.size() as u128).saturating_pow(k as u32)
}

/// Exact ML over all `C^K` vectors, enumerated lexicographically with user 0
/// most significant; the first minimiser wins ties.
pub fn ml_exhaustive(r: &CVec, h: &CMat, constellation: &Constellation) -> Result<MlResult> {
    ml_exhaustive_counted(r, h, constellation, &mut FlopCounter::new())
}

pub fn ml_exhaustive_counted(
    r: &CVec,
    h: &CMat,
    constellation: &Constellation,
    flops: &mut FlopCounter,
) -> Result<MlResult> {
    let (nr, k) = h.shape();
    if r.len() != nr {
        return Err(Error::invalid("received vector and channel disagree"));
    }
    let size = search_size(constellation, k);
    if size > ML_SEARCH_LIMIT {
        return Err(Error::TooLarge {
            size,
            limit: ML_SEARCH_LIMIT,
        });
    }
    let c = constellation.size();
    let mut idx = vec![0usize; k];
    let mut vals = vec![constellation.point(0); k];
    let mut best = idx.clone();
    let mut best_metric = f64::INFINITY;
    for _ in 0..size {
        let m = residual_norm_sqr(r, h, &vals, flops);
        if m < best_metric {
            best_metric = m;
            best.copy_from_slice(&idx);
        }
        // odometer increment, last user fastest
        for u in (0..k).rev() {
            idx[u] += 1;
            if idx[u] < c {
                vals[u] = constellation.point(idx[u]);
                break;
            }
            idx[u] = 0;
            vals[u] = constellation.point(0);
        }
    }
    Ok(MlResult {
        symbols: best,
        metric: best_metric,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereResult {
    pub ml: MlResult,
    /// Complete candidate vectors reached.
    pub leaves: u64,
    /// Tree nodes entered at every level, leaves included.
    pub nodes: u64,
}

/// Depth-first Schnorr–Euchner sphere decoder.
///
/// The search runs on `‖Qᴴ r − R s‖²` from the last user upwards, children
/// visited in order of increasing partial metric. The first radius is the
/// metric of the V-BLAST solution. Candidate leaves are re-scored with the
/// direct metric and ties resolved lexicographically, which makes the result
/// identical to [`ml_exhaustive`].
pub fn sphere_decode(r: &CVec, h: &CMat, constellation: &Constellation) -> Result<SphereResult> {
    sphere_decode_counted(r, h, constellation, &mut FlopCounter::new())
}

pub fn sphere_decode_counted(
    r: &CVec,
    h: &CMat,
    constellation: &Constellation,
    flops: &mut FlopCounter,
) -> Result<SphereResult> {
    let (nr, k) = h.shape();
    if r.len() != nr {
        return Err(Error::invalid("received vector and channel disagree"));
    }
    if !has_full_column_rank(h) {
        return Err(Error::SingularMatrix);
    }
    let vb = vblast_detect(r, h, constellation, flops)?;
    let vb_vals: Vec<C64> = vb.decisions.iter().map(|&i| constellation.point(i)).collect();
    let mut best = vb.decisions.clone();
    let mut best_metric = residual_norm_sqr(r, h, &vb_vals, flops);

    let qr = h.clone().qr();
    let q = qr.q();
    let rm = qr.r();
    let y = q.adjoint() * r;
    flops.mul(nr * k * k + nr * k);
    flops.add(nr * k * k + nr * k);
    // ‖r‖² − ‖Qᴴr‖², the part of the metric no symbol choice can change
    let floor = (r.norm_squared() - y.norm_squared()).max(0.0);
    let slack = 1e-9 * (1.0 + best_metric);

    let c = constellation.size();
    let mut idx = vec![0usize; k];
    let mut vals = vec![ZERO; k];
    // children of each level in visiting order with their partial metrics
    let mut children: Vec<Vec<(f64, usize)>> = vec![Vec::with_capacity(c); k];
    let mut cursor = vec![0usize; k];
    let mut nodes = 0u64;
    let mut leaves = 0u64;

    let expand = |level: usize,
                  vals: &[C64],
                  above: f64,
                  out: &mut Vec<(f64, usize)>,
                  flops: &mut FlopCounter| {
        let mut z = y[level];
        for j in (level + 1)..k {
            z -= rm[(level, j)] * vals[j];
        }
        flops.mul(k - level - 1);
        flops.add(k - level - 1);
        out.clear();
        for a in 0..c {
            let e = z - rm[(level, level)] * constellation.point(a);
            out.push((above + e.norm_sqr(), a));
        }
        flops.mul(2 * c);
        flops.add(2 * c);
        out.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    };

    let mut level = k - 1;
    expand(level, &vals, 0.0, &mut children[level], flops);
    cursor[level] = 0;
    loop {
        let radius = best_metric - floor + slack;
        if cursor[level] < c && children[level][cursor[level]].0 <= radius {
            let (pm, a) = children[level][cursor[level]];
            cursor[level] += 1;
            nodes += 1;
            idx[level] = a;
            vals[level] = constellation.point(a);
            if level == 0 {
                leaves += 1;
                let m = residual_norm_sqr(r, h, &vals, flops);
                if m < best_metric || (m == best_metric && idx < best) {
                    best_metric = m;
                    best.copy_from_slice(&idx);
                }
            } else {
                level -= 1;
                expand(level, &vals, pm, &mut children[level], flops);
                cursor[level] = 0;
            }
        } else {
            // Schnorr–Euchner: remaining siblings are no better, go up
            level += 1;
            if level == k {
                break;
            }
        }
    }
    Ok(SphereResult {
        ml: MlResult {
            symbols: best,
            metric: best_metric,
        },
        leaves,
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_gaussian, gen_block_fading, transmit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn qpsk() -> Constellation {
        Constellation::qpsk(1.0).unwrap()
    }

    fn instance(k: usize, var: f64, g: &mut ChaCha8Rng) -> (CVec, CMat, Vec<usize>) {
        let c = qpsk();
        let h = gen_block_fading(k, k, g);
        let s: Vec<usize> = (0..k).map(|_| g.gen_range(0..4)).collect();
        let vals: Vec<C64> = s.iter().map(|&i| c.point(i)).collect();
        (transmit(&h, &vals, var, g).unwrap(), h, s)
    }

    #[test]
    fn noise_free_recovery() {
        let c = qpsk();
        let mut g = ChaCha8Rng::seed_from_u64(1);
        for k in 1..=4 {
            for _ in 0..50 {
                let (r, h, s) = instance(k, 0.0, &mut g);
                assert_eq!(vblast_detect(&r, &h, &c, &mut FlopCounter::new()).unwrap().decisions, s);
                let ml = ml_exhaustive(&r, &h, &c).unwrap();
                assert_eq!(ml.symbols, s);
                assert!(ml.metric < 1e-20);
                let sd = sphere_decode(&r, &h, &c).unwrap();
                assert_eq!(sd.ml.symbols, s);
                assert!(sd.ml.metric < 1e-20);
            }
        }
    }

    #[test]
    fn single_user_ml_is_quantized_ls() {
        let c = qpsk();
        let mut g = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let h = gen_block_fading(1, 3, &mut g);
            let r = CVec::from_fn(3, |_, _| complex_gaussian(&mut g, 1.0));
            let col = h.column(0);
            let ls = col.dotc(&r) / col.norm_squared();
            let ml = ml_exhaustive(&r, &h, &c).unwrap();
            assert_eq!(ml.symbols[0], c.quantize(ls));
        }
    }

    #[test]
    fn sphere_decoder_equals_exhaustive() {
        let c = qpsk();
        let mut g = ChaCha8Rng::seed_from_u64(3);
        for k in 2..=4 {
            for _ in 0..300 {
                let var = [0.05, 0.3, 1.0][g.gen_range(0..3)];
                let (r, h, _) = instance(k, var, &mut g);
                let ml = ml_exhaustive(&r, &h, &c).unwrap();
                let sd = sphere_decode(&r, &h, &c).unwrap();
                assert_eq!(sd.ml.symbols, ml.symbols);
                assert!((sd.ml.metric - ml.metric).abs() <= 1e-12 * (1.0 + ml.metric));
                assert!(sd.leaves as u128 <= 4u128.pow(k as u32));
            }
        }
    }

    #[test]
    fn leaves_visited_bounded_by_search_space() {
        let c = qpsk();
        let mut g = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..200 {
            let (r, h, _) = instance(3, 0.2, &mut g);
            let sd = sphere_decode(&r, &h, &c).unwrap();
            assert!(sd.leaves <= 64);
            assert!(sd.nodes <= 4 + 16 + 64);
        }
    }

    #[test]
    fn ml_dominates_other_detectors() {
        let c = qpsk();
        let mut g = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let (r, h, _) = instance(3, 0.5, &mut g);
            let ml = ml_exhaustive(&r, &h, &c).unwrap();
            let vb = vblast_detect(&r, &h, &c, &mut FlopCounter::new()).unwrap();
            let vals: Vec<C64> = vb.decisions.iter().map(|&i| c.point(i)).collect();
            let m = residual_norm_sqr(&r, &h, &vals, &mut FlopCounter::new());
            assert!(ml.metric <= m + 1e-12);
        }
    }

    #[test]
    fn guards_and_rank_errors() {
        let c = qpsk();
        let h = CMat::from_element(12, 11, C64::new(1.0, 0.0));
        let r = CVec::zeros(12);
        assert!(matches!(ml_exhaustive(&r, &h, &c), Err(Error::TooLarge { .. })));
        let h = CMat::from_element(3, 2, C64::new(1.0, 0.0));
        let r = CVec::zeros(3);
        assert!(matches!(sphere_decode(&r, &h, &c), Err(Error::SingularMatrix)));
        assert!(matches!(
            vblast_detect(&r, &h, &c, &mut FlopCounter::new()),
            Err(Error::SingularMatrix)
        ));
    }

    #[test]
    fn deterministic() {
        let c = qpsk();
        let mut g = ChaCha8Rng::seed_from_u64(5);
        let (r, h, _) = instance(4, 0.4, &mut g);
        assert_eq!(sphere_decode(&r, &h, &c).unwrap(), sphere_decode(&r, &h, &c).unwrap());
        assert_eq!(ml_exhaustive(&r, &h, &c).unwrap(), ml_exhaustive(&r, &h, &c).unwrap());
    }
}
