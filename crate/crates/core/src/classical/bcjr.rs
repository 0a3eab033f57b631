use num_complex::Complex64;

use super::max_star::max_star2;
use crate::channel::{Cir, Constellation};
use crate::error::{Error, Result};
use crate::llr::{LlrRole, LlrVector};

/// Default cap on `M^(L+1)` transitions per trellis stage.
pub const DEFAULT_TRANSITION_BUDGET: usize = 1_000_000;

/// Smallest noise variance used in branch metrics; `σ² = 0` saturates.
const SIGMA2_FLOOR: f64 = 1e-12;

/// Trellis of an ISI channel: state `s` encodes the previous `L` symbol
/// labels as base-`M` digits, most recent symbol in the least significant
/// digit.
#[derive(Clone, Debug)]
pub struct Trellis {
    pub order: usize,
    pub memory: usize,
    pub num_states: usize,
}

impl Trellis {
    pub fn new(order: usize, memory: usize, budget: usize) -> Result<Self> {
        let transitions = (order as f64).powi(memory as i32 + 1);
        if transitions > budget as f64 {
            return Err(Error::BudgetExceeded(format!(
                "trellis needs {transitions:.0} transitions per stage, budget is {budget}"
            )));
        }
        Ok(Self {
            order,
            memory,
            num_states: order.pow(memory as u32),
        })
    }

    /// Label of `x_{i-l}` (l ≥ 1) stored in `state`.
    pub fn digit(&self, state: usize, l: usize) -> usize {
        (state / self.order.pow(l as u32 - 1)) % self.order
    }

    pub fn next_state(&self, state: usize, input: usize) -> usize {
        if self.memory == 0 {
            return 0;
        }
        (state * self.order + input) % self.num_states
    }

    /// Noiseless output at time `i` for `state` and `input`, with symbols
    /// outside `0..block_len` fixed to zero.
    pub fn output(
        &self,
        state: usize,
        input: usize,
        i: usize,
        block_len: usize,
        cir: &Cir,
        points: &[Complex64],
    ) -> Complex64 {
        let h = cir.taps();
        let mut y = if i < block_len { h[0] * points[input] } else { Complex64::new(0.0, 0.0) };
        for l in 1..=self.memory {
            if i >= l && i - l < block_len {
                y += h[l] * points[self.digit(state, l)];
            }
        }
        y
    }
}

/// Exact bitwise MAP detection by log-domain forward/backward recursion.
///
/// `prior_llrs`, when given, holds one LLR per transmitted bit; symbol
/// priors are the products of bit priors. Returns total LLRs.
pub fn bcjr_detect(
    y: &[Complex64],
    cir: &Cir,
    sigma2: f64,
    constellation: &Constellation,
    prior_llrs: Option<&[f64]>,
) -> Result<LlrVector> {
    bcjr_detect_with_budget(y, cir, sigma2, constellation, prior_llrs, DEFAULT_TRANSITION_BUDGET)
}

pub fn bcjr_detect_with_budget(
    y: &[Complex64],
    cir: &Cir,
    sigma2: f64,
    constellation: &Constellation,
    prior_llrs: Option<&[f64]>,
    budget: usize,
) -> Result<LlrVector> {
    Ok(LlrVector::new(
        bcjr_raw(y, cir, sigma2, constellation, prior_llrs, budget)?,
        LlrRole::Total,
    ))
}

/// Unsaturated total LLRs.
pub fn bcjr_raw(
    y: &[Complex64],
    cir: &Cir,
    sigma2: f64,
    constellation: &Constellation,
    prior_llrs: Option<&[f64]>,
    budget: usize,
) -> Result<Vec<f64>> {
    let l = cir.memory();
    if y.len() <= l {
        return Err(Error::InvalidLength(format!(
            "{} observations cannot hold a block with memory {l}",
            y.len()
        )));
    }
    let n = y.len() - l;
    let m = constellation.order();
    let bps = constellation.bits_per_symbol();
    if let Some(p) = prior_llrs {
        if p.len() != n * bps {
            return Err(Error::InvalidLength(format!("expected {} prior LLRs, got {}", n * bps, p.len())));
        }
    }
    let trellis = Trellis::new(m, l, budget)?;
    let ns = trellis.num_states;
    let points = constellation.points();
    let inv = 1.0 / sigma2.max(SIGMA2_FLOOR);
    let steps = n + l;
    let sym_prior: Vec<Vec<f64>> = (0..n)
        .map(|i| match prior_llrs {
            Some(p) => constellation.symbol_log_priors(&p[i * bps..(i + 1) * bps]),
            None => vec![0.0; m],
        })
        .collect();

    // gamma[i][s * m + a], inputs a ≥ 1 invalid in the tail
    let inputs_at = |i: usize| if i < n { m } else { 1 };
    let mut gamma = vec![vec![f64::NEG_INFINITY; ns * m]; steps];
    for (i, g) in gamma.iter_mut().enumerate() {
        for s in 0..ns {
            for a in 0..inputs_at(i) {
                let mean = trellis.output(s, a, i, n, cir, points);
                let prior = if i < n { sym_prior[i][a] } else { 0.0 };
                g[s * m + a] = -(y[i] - mean).norm_sqr() * inv + prior;
            }
        }
    }

    let neg = f64::NEG_INFINITY;
    let mut alpha = vec![vec![neg; ns]; steps + 1];
    alpha[0][0] = 0.0;
    for i in 0..steps {
        let (cur, next) = alpha.split_at_mut(i + 1);
        let (a_cur, a_next) = (&cur[i], &mut next[0]);
        for s in 0..ns {
            if a_cur[s] == neg {
                continue;
            }
            for a in 0..inputs_at(i) {
                let t = trellis.next_state(s, a);
                a_next[t] = max_star2(a_next[t], a_cur[s] + gamma[i][s * m + a]);
            }
        }
        let mx = a_next.iter().copied().fold(neg, f64::max);
        if mx > neg {
            a_next.iter_mut().for_each(|v| *v -= mx);
        }
    }
    let mut beta = vec![vec![neg; ns]; steps + 1];
    beta[steps].iter_mut().for_each(|v| *v = 0.0);
    for i in (0..steps).rev() {
        let (cur, next) = beta.split_at_mut(i + 1);
        let (b_cur, b_next) = (&mut cur[i], &next[0]);
        for s in 0..ns {
            let mut acc = neg;
            for a in 0..inputs_at(i) {
                let t = trellis.next_state(s, a);
                acc = max_star2(acc, gamma[i][s * m + a] + b_next[t]);
            }
            b_cur[s] = acc;
        }
        let mx = b_cur.iter().copied().fold(neg, f64::max);
        if mx > neg {
            b_cur.iter_mut().for_each(|v| *v -= mx);
        }
    }

    let mut out = Vec::with_capacity(n * bps);
    let mut metrics = vec![neg; m];
    for i in 0..n {
        metrics.iter_mut().for_each(|v| *v = neg);
        for s in 0..ns {
            if alpha[i][s] == neg {
                continue;
            }
            for (a, metric) in metrics.iter_mut().enumerate() {
                let t = trellis.next_state(s, a);
                *metric = max_star2(*metric, alpha[i][s] + gamma[i][s * m + a] + beta[i + 1][t]);
            }
        }
        constellation.symbol_metrics_to_bit_llrs(&metrics, &mut out);
    }
    Ok(out)
}

/// Extrinsic LLRs by re-running the detector once per bit with that bit's
/// prior removed. Cost grows with `N_x · log2(M)` detector runs.
pub fn bcjr_extrinsic_omit_index(
    y: &[Complex64],
    cir: &Cir,
    sigma2: f64,
    constellation: &Constellation,
    prior_llrs: &[f64],
) -> Result<LlrVector> {
    let mut priors = prior_llrs.to_vec();
    let mut out = Vec::with_capacity(priors.len());
    for j in 0..priors.len() {
        let keep = priors[j];
        priors[j] = 0.0;
        let total = bcjr_raw(y, cir, sigma2, constellation, Some(&priors), DEFAULT_TRANSITION_BUDGET)?;
        out.push(total[j]);
        priors[j] = keep;
    }
    Ok(LlrVector::new(out, LlrRole::Extrinsic))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_isi, random_bits};
    use crate::llr::{extrinsic_llrs, LLR_MAX};
    use crate::rng::seeded;

    #[test]
    fn memoryless_bpsk_closed_form() {
        let c = Constellation::bpsk();
        let cir = Cir::real(&[1.0]).unwrap();
        let y = vec![Complex64::new(0.3, 0.2), Complex64::new(-1.1, 0.0)];
        let l = bcjr_detect(&y, &cir, 0.7, &c, None).unwrap();
        for (v, yi) in l.values.iter().zip(&y) {
            assert!((v - 4.0 * yi.re / 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_and_absent_priors_agree() {
        let c = Constellation::bpsk();
        let cir = Cir::proakis_c();
        let mut rng = seeded(1);
        let x = c.modulate(&random_bits(10, &mut rng)).unwrap();
        let y = apply_isi(&x, &cir, 0.5, &mut rng).unwrap();
        let a = bcjr_detect(&y, &cir, 0.5, &c, None).unwrap();
        let b = bcjr_detect(&y, &cir, 0.5, &c, Some(&[0.0; 10])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn saturated_prior_forces_sign() {
        let c = Constellation::bpsk();
        let cir = Cir::proakis_c();
        let mut rng = seeded(2);
        let x = c.modulate(&[1; 8]).unwrap();
        let y = apply_isi(&x, &cir, 0.5, &mut rng).unwrap();
        let mut prior = vec![0.0; 8];
        prior[3] = LLR_MAX;
        let l = bcjr_detect(&y, &cir, 0.5, &c, Some(&prior)).unwrap();
        assert!(l.values[3] > 0.0);
    }

    #[test]
    fn odd_symmetry() {
        let c = Constellation::bpsk();
        let cir = Cir::proakis_c();
        let mut rng = seeded(3);
        let x = c.modulate(&random_bits(12, &mut rng)).unwrap();
        let y = apply_isi(&x, &cir, 0.3, &mut rng).unwrap();
        let neg: Vec<_> = y.iter().map(|v| -v).collect();
        let a = bcjr_detect(&y, &cir, 0.3, &c, None).unwrap();
        let b = bcjr_detect(&neg, &cir, 0.3, &c, None).unwrap();
        for (p, q) in a.values.iter().zip(&b.values) {
            assert!((p + q).abs() < 1e-9);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let c = Constellation::qam(16).unwrap();
        let y = vec![Complex64::new(0.0, 0.0); 10];
        let err = bcjr_detect(&y, &Cir::proakis_c(), 0.1, &c, None).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded(_)));
    }

    #[test]
    fn noiseless_detection_is_correct_and_saturates() {
        let c = Constellation::qam(4).unwrap();
        let cir = Cir::real(&[0.8, 0.6]).unwrap();
        let mut rng = seeded(6);
        let bits = random_bits(20, &mut rng);
        let x = c.modulate(&bits).unwrap();
        let y = apply_isi(&x, &cir, 0.0, &mut rng).unwrap();
        let l = bcjr_detect(&y, &cir, 0.0, &c, None).unwrap();
        assert_eq!(l.hard_decisions(), bits);
        assert!(l.values.iter().all(|v| v.abs() == LLR_MAX));
    }

    #[test]
    fn subtraction_matches_omit_index() {
        let c = Constellation::bpsk();
        let cir = Cir::proakis_c();
        let mut rng = seeded(8);
        for _ in 0..20 {
            let x = c.modulate(&random_bits(6, &mut rng)).unwrap();
            let y = apply_isi(&x, &cir, 0.6, &mut rng).unwrap();
            let prior: Vec<f64> = (0..6).map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0)).collect();
            let total = bcjr_detect(&y, &cir, 0.6, &c, Some(&prior)).unwrap();
            let sub = extrinsic_llrs(&total, &LlrVector::new(prior.clone(), LlrRole::Prior)).unwrap();
            let omit = bcjr_extrinsic_omit_index(&y, &cir, 0.6, &c, &prior).unwrap();
            for (a, b) in sub.values.iter().zip(&omit.values) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }
    }
}
