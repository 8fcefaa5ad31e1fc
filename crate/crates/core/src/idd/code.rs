//! Rate-1/2 feedforward convolutional code with octal generators (7,5) and
//! an exact log-MAP (BCJR) soft-in/soft-out decoder.

use crate::error::{Error, Result};

use super::{clip, LLR_MAX};

const STATES: usize = 4;

/// The memory-2 code with generators 111₂ and 101₂, zero terminated with
/// two tail bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvCode {
    g0: u8,
    g1: u8,
}

impl Default for ConvCode {
    fn default() -> Self {
        Self::new()
    }
}

impl ConvCode {
    pub const MEMORY: usize = 2;

    pub fn new() -> Self {
        Self { g0: 0o7, g1: 0o5 }
    }

    pub fn rate(&self) -> f64 {
        0.5
    }

    pub fn coded_len(&self, info_len: usize) -> usize {
        2 * (info_len + Self::MEMORY)
    }

    /// Info bits carried by a terminated block of `coded_len` coded bits.
    pub fn info_len(&self, coded_len: usize) -> Result<usize> {
        if coded_len % 2 != 0 || coded_len < 2 * Self::MEMORY {
            return Err(Error::invalid(format!(
                "{coded_len} coded bits do not form a terminated block"
            )));
        }
        Ok(coded_len / 2 - Self::MEMORY)
    }

    /// Next state and the two output bits for input `u` in `state`.
    ///
    /// The state holds the last two inputs, most recent in the high bit.
    #[inline]
    fn step(&self, state: usize, u: u8) -> (usize, u8, u8) {
        let reg = ((u as usize) << 2) | state;
        let c0 = ((reg & self.g0 as usize).count_ones() & 1) as u8;
        let c1 = ((reg & self.g1 as usize).count_ones() & 1) as u8;
        (reg >> 1, c0, c1)
    }

    pub fn encode(&self, info: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.coded_len(info.len()));
        let mut state = 0;
        for &u in info.iter().chain([0u8; Self::MEMORY].iter()) {
            let (next, c0, c1) = self.step(state, u & 1);
            out.push(c0);
            out.push(c1);
            state = next;
        }
        out
    }

    /// Minimum weight of a nonzero terminated codeword, by trellis search
    /// over detours from the zero state.
    pub fn free_distance(&self) -> u32 {
        // Dijkstra over (state) with weights; detours leave 0 and return to 0
        let mut best = u32::MAX;
        let (first, c0, c1) = self.step(0, 1);
        let mut dist = [u32::MAX; STATES];
        dist[first] = (c0 + c1) as u32;
        let mut done = [false; STATES];
        loop {
            let mut cur = None;
            for s in 0..STATES {
                if !done[s] && dist[s] != u32::MAX && cur.map_or(true, |c: usize| dist[s] < dist[c]) {
                    cur = Some(s);
                }
            }
            let Some(s) = cur else { break };
            done[s] = true;
            if s == 0 {
                best = best.min(dist[0]);
                continue;
            }
            for u in 0..2u8 {
                let (n, a, b) = self.step(s, u);
                let d = dist[s] + (a + b) as u32;
                if d < dist[n] {
                    dist[n] = d;
                }
            }
        }
        best
    }

    /// Exact log-MAP decoding of a terminated block.
    ///
    /// `channel` holds a-priori LLRs of the coded bits (positive favours 1).
    /// Returns extrinsic LLRs of the coded bits and hard info-bit decisions.
    pub fn siso_decode(&self, channel: &[f64]) -> Result<(Vec<f64>, Vec<u8>)> {
        let n_info = self.info_len(channel.len())?;
        let steps = n_info + Self::MEMORY;
        let neg = f64::NEG_INFINITY;

        // transitions: (from, to, u, c0, c1)
        let mut trans = Vec::with_capacity(2 * STATES);
        for s in 0..STATES {
            for u in 0..2u8 {
                let (n, c0, c1) = self.step(s, u);
                trans.push((s, n, u, c0, c1));
            }
        }
        let gamma = |t: usize, c0: u8, c1: u8| -> f64 {
            let mut g = 0.0;
            if c0 == 1 {
                g += channel[2 * t];
            }
            if c1 == 1 {
                g += channel[2 * t + 1];
            }
            g
        };
        let allowed = |t: usize, u: u8| t < n_info || u == 0;

        let mut alpha = vec![[neg; STATES]; steps + 1];
        alpha[0][0] = 0.0;
        for t in 0..steps {
            for &(s, n, u, c0, c1) in &trans {
                if !allowed(t, u) || alpha[t][s] == neg {
                    continue;
                }
                let v = alpha[t][s] + gamma(t, c0, c1);
                alpha[t + 1][n] = log_add(alpha[t + 1][n], v);
            }
        }
        let mut beta = vec![[neg; STATES]; steps + 1];
        beta[steps][0] = 0.0;
        for t in (0..steps).rev() {
            for &(s, n, u, c0, c1) in &trans {
                if !allowed(t, u) || beta[t + 1][n] == neg {
                    continue;
                }
                let v = beta[t + 1][n] + gamma(t, c0, c1);
                beta[t][s] = log_add(beta[t][s], v);
            }
        }

        let mut extrinsic = vec![0.0; channel.len()];
        let mut info = Vec::with_capacity(n_info);
        for t in 0..steps {
            let mut c_num = [neg; 2];
            let mut c_den = [neg; 2];
            let mut u_num = neg;
            let mut u_den = neg;
            for &(s, n, u, c0, c1) in &trans {
                if !allowed(t, u) {
                    continue;
                }
                let v = alpha[t][s] + gamma(t, c0, c1) + beta[t + 1][n];
                if v == neg {
                    continue;
                }
                for (i, c) in [c0, c1].into_iter().enumerate() {
                    if c == 1 {
                        c_num[i] = log_add(c_num[i], v);
                    } else {
                        c_den[i] = log_add(c_den[i], v);
                    }
                }
                if u == 1 {
                    u_num = log_add(u_num, v);
                } else {
                    u_den = log_add(u_den, v);
                }
            }
            for i in 0..2 {
                let app = llr_from(c_num[i], c_den[i]);
                extrinsic[2 * t + i] = clip(app - channel[2 * t + i]);
            }
            if t < n_info {
                info.push(u8::from(u_num > u_den));
            }
        }
        Ok((extrinsic, info))
    }
}

fn llr_from(num: f64, den: f64) -> f64 {
    match (num == f64::NEG_INFINITY, den == f64::NEG_INFINITY) {
        (true, true) => 0.0,
        (true, false) => -LLR_MAX,
        (false, true) => LLR_MAX,
        _ => num - den,
    }
}

/// `ln(eᵃ + eᵇ)`.
#[inline]
pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn encoder_impulse_response() {
        let c = ConvCode::new();
        let out = c.encode(&[1, 0, 0]);
        assert_eq!(&out[..6], &[1, 1, 1, 0, 1, 1]);
        assert_eq!(out.len(), 2 * (3 + 2));
    }

    #[test]
    fn all_zero_input() {
        assert!(ConvCode::new().encode(&[0; 20]).iter().all(|&b| b == 0));
    }

    #[test]
    fn free_distance_is_five() {
        assert_eq!(ConvCode::new().free_distance(), 5);
    }

    #[test]
    fn encoder_is_linear() {
        let c = ConvCode::new();
        let mut g = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a: Vec<u8> = (0..40).map(|_| g.gen_range(0..2)).collect();
            let b: Vec<u8> = (0..40).map(|_| g.gen_range(0..2)).collect();
            let x: Vec<u8> = a.iter().zip(&b).map(|(p, q)| p ^ q).collect();
            let ex: Vec<u8> = c.encode(&a).iter().zip(c.encode(&b)).map(|(p, q)| p ^ q).collect();
            assert_eq!(c.encode(&x), ex);
        }
    }

    #[test]
    fn noiseless_round_trip() {
        let c = ConvCode::new();
        let mut g = ChaCha8Rng::seed_from_u64(2);
        let info: Vec<u8> = (0..100).map(|_| g.gen_range(0..2)).collect();
        let llr: Vec<f64> = c.encode(&info).iter().map(|&b| if b == 1 { 20.0 } else { -20.0 }).collect();
        let (_, dec) = c.siso_decode(&llr).unwrap();
        assert_eq!(dec, info);
    }

    #[test]
    fn zero_input_gives_zero_extrinsic() {
        let (ext, _) = ConvCode::new().siso_decode(&[0.0; 40]).unwrap();
        assert!(ext.iter().all(|e| e.abs() < 1e-9), "{ext:?}");
    }

    #[test]
    fn rejects_ragged_blocks() {
        let c = ConvCode::new();
        assert!(c.siso_decode(&[0.0; 7]).is_err());
        assert!(c.siso_decode(&[0.0; 2]).is_err());
    }

    /// Bitwise APP LLRs of the coded bits by enumerating every codeword.
    fn brute_app(code: &ConvCode, llr: &[f64], n_info: usize) -> (Vec<f64>, Vec<f64>) {
        let n = llr.len();
        let mut c_num = vec![f64::NEG_INFINITY; n];
        let mut c_den = vec![f64::NEG_INFINITY; n];
        let mut u_num = vec![f64::NEG_INFINITY; n_info];
        let mut u_den = vec![f64::NEG_INFINITY; n_info];
        for m in 0..(1usize << n_info) {
            let info: Vec<u8> = (0..n_info).map(|i| ((m >> i) & 1) as u8).collect();
            let cw = code.encode(&info);
            let w: f64 = cw.iter().zip(llr).map(|(&b, &l)| b as f64 * l).sum();
            for i in 0..n {
                if cw[i] == 1 {
                    c_num[i] = log_add(c_num[i], w);
                } else {
                    c_den[i] = log_add(c_den[i], w);
                }
            }
            for i in 0..n_info {
                if info[i] == 1 {
                    u_num[i] = log_add(u_num[i], w);
                } else {
                    u_den[i] = log_add(u_den[i], w);
                }
            }
        }
        let c = (0..n).map(|i| llr_from(c_num[i], c_den[i])).collect();
        let u = (0..n_info).map(|i| u_num[i] - u_den[i]).collect();
        (c, u)
    }

    #[test]
    fn matches_codeword_enumeration() {
        let c = ConvCode::new();
        let mut g = ChaCha8Rng::seed_from_u64(3);
        let n_info = 9;
        for _ in 0..200 {
            let llr: Vec<f64> = (0..c.coded_len(n_info))
                .map(|_| 3.0 * g.sample::<f64, _>(StandardNormal))
                .collect();
            let (ext, hard) = c.siso_decode(&llr).unwrap();
            let (app, u) = brute_app(&c, &llr, n_info);
            for i in 0..llr.len() {
                let want = clip(app[i] - llr[i]);
                assert!((ext[i] - want).abs() < 1e-9, "bit {i}: {} vs {want}", ext[i]);
            }
            for i in 0..n_info {
                if u[i].abs() > 1e-9 {
                    assert_eq!(hard[i], u8::from(u[i] > 0.0));
                }
            }
        }
    }

    /// Maximum-correlation sequence decoder.
    fn viterbi(code: &ConvCode, llr: &[f64]) -> Vec<u8> {
        let steps = llr.len() / 2;
        let n_info = steps - ConvCode::MEMORY;
        let mut metric = [f64::NEG_INFINITY; STATES];
        metric[0] = 0.0;
        let mut back: Vec<[(usize, u8); STATES]> = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut next = [f64::NEG_INFINITY; STATES];
            let mut bp = [(0usize, 0u8); STATES];
            for s in 0..STATES {
                if metric[s] == f64::NEG_INFINITY {
                    continue;
                }
                for u in 0..2u8 {
                    if t >= n_info && u == 1 {
                        continue;
                    }
                    let (n, c0, c1) = code.step(s, u);
                    let m = metric[s] + c0 as f64 * llr[2 * t] + c1 as f64 * llr[2 * t + 1];
                    if m > next[n] {
                        next[n] = m;
                        bp[n] = (s, u);
                    }
                }
            }
            metric = next;
            back.push(bp);
        }
        let mut s = 0;
        let mut bits = vec![0u8; steps];
        for t in (0..steps).rev() {
            let (p, u) = back[t][s];
            bits[t] = u;
            s = p;
        }
        bits.truncate(n_info);
        bits
    }

    #[test]
    fn hard_decisions_match_viterbi() {
        let c = ConvCode::new();
        let mut g = ChaCha8Rng::seed_from_u64(4);
        // BPSK at Eb/N0 = 5 dB, LLR = 2 y / σ² with y = ±1 + n
        let sigma2 = 1.0 / (2.0 * 0.5 * 10f64.powf(0.5));
        let mut mismatched = 0;
        for _ in 0..1000 {
            let info: Vec<u8> = (0..60).map(|_| g.gen_range(0..2)).collect();
            let llr: Vec<f64> = c
                .encode(&info)
                .iter()
                .map(|&b| {
                    let n: f64 = g.sample(StandardNormal);
                    let y = (2.0 * b as f64 - 1.0) + sigma2.sqrt() * n;
                    2.0 * y / sigma2
                })
                .collect();
            let (_, map) = c.siso_decode(&llr).unwrap();
            if map != viterbi(&c, &llr) {
                mismatched += 1;
            }
        }
        assert_eq!(mismatched, 0);
    }

    #[test]
    fn log_add_matches_direct() {
        for (a, b) in [(0.0f64, 0.0f64), (1.0, -3.0), (-20.0, -21.5)] {
            let want = (a.exp() + b.exp()).ln();
            assert!((log_add(a, b) - want).abs() < 1e-12);
        }
        assert_eq!(log_add(f64::NEG_INFINITY, 2.0), 2.0);
    }
}
