//! Error counting, bit-wise mutual information, EXIT analysis, rates and
//! the hardware latency model.

mod exit;

pub use exit::{
    exit_characteristic, exit_trajectory, BcjrDetector, DetectorComponent, Draw, ExitComponent, ExitMethod,
    GnnPriorDetector, LdpcComponent, Link, PriorDetector, Trajectory, TrajectoryPoint, OMIT_INDEX_BIT_LIMIT,
};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const H1: f64 = 0.3073;
pub const H2: f64 = 0.8935;
pub const H3: f64 = 1.1064;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidLength(format!("{a} reference bits, {b} decisions")));
    }
    if a == 0 {
        return Err(Error::InvalidLength("empty input".into()));
    }
    Ok(())
}

/// Fraction of differing positions.
pub fn ber(reference: &[u8], decisions: &[u8]) -> Result<f64> {
    check_lengths(reference.len(), decisions.len())?;
    let errors = reference.iter().zip(decisions).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / reference.len() as f64)
}

/// Fraction of frames with at least one bit error.
pub fn bler(reference: &[Vec<u8>], decisions: &[Vec<u8>]) -> Result<f64> {
    check_lengths(reference.len(), decisions.len())?;
    let mut errors = 0;
    for (r, d) in reference.iter().zip(decisions) {
        check_lengths(r.len(), d.len())?;
        if r != d {
            errors += 1;
        }
    }
    Ok(errors as f64 / reference.len() as f64)
}

/// `log2(1 + e^{−x})` without overflow.
fn log2_one_plus_exp_neg(x: f64) -> f64 {
    let nat = if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    };
    nat / std::f64::consts::LN_2
}

/// Unclipped Hagenauer estimate `1 − E[log2(1 + e^{−(1−2c)ℓ})]`.
pub fn bmi_raw(bits: &[u8], llrs: &[f64]) -> Result<f64> {
    check_lengths(bits.len(), llrs.len())?;
    let sum: f64 = bits
        .iter()
        .zip(llrs)
        .map(|(&c, &l)| {
            let s = if c == 0 { l } else { -l };
            log2_one_plus_exp_neg(s)
        })
        .sum();
    Ok(1.0 - sum / bits.len() as f64)
}

/// Hagenauer estimate clipped to `[0, 1]`.
pub fn bmi_estimate(bits: &[u8], llrs: &[f64]) -> Result<f64> {
    Ok(bmi_raw(bits, llrs)?.clamp(0.0, 1.0))
}

/// Mean of consistent Gaussian LLRs carrying mutual information `I_A`:
/// `μ = ½ (−log2(1 − I_A^{1/H3}) / H1)^{1/H2}`.
pub fn mu_of_ia(ia: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&ia) {
        return Err(Error::InvalidConfig(format!("I_A must lie in [0, 1), got {ia}")));
    }
    if ia == 0.0 {
        return Ok(0.0);
    }
    let inner = -(1.0 - ia.powf(1.0 / H3)).log2() / H1;
    Ok(0.5 * inner.powf(1.0 / H2))
}

/// Inverse of [`mu_of_ia`]: `I = (1 − 2^{−H1 (2μ)^{H2}})^{H3}`.
pub fn ia_of_mu(mu: f64) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    (1.0 - 2f64.powf(-H1 * (2.0 * mu).powf(H2))).powf(H3)
}

/// Mutual information between equiprobable BPSK and its output over a
/// real AWGN channel with noise variance `σ²` per real dimension,
/// `1 − E[log2(1 + e^{−L})]` with `L ~ N(2/σ², 4/σ²)`, by Gauss-Hermite
/// quadrature.
pub fn bpsk_awgn_capacity(sigma2: f64) -> f64 {
    let mean = 2.0 / sigma2;
    let std = (4.0 / sigma2).sqrt();
    let (nodes, weights) = gauss_hermite(64);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(&weights) {
        let l = mean + std * std::f64::consts::SQRT_2 * x;
        acc += w * log2_one_plus_exp_neg(l);
    }
    1.0 - acc / std::f64::consts::PI.sqrt()
}

/// Nodes and weights of the physicists' Gauss-Hermite rule (Golub-Welsch).
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        jacobi[(i, i - 1)] = b;
        jacobi[(i - 1, i)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(jacobi);
    let mu0 = std::f64::consts::PI.sqrt();
    let nodes = eig.eigenvalues.iter().copied().collect();
    let weights = (0..n).map(|i| mu0 * eig.eigenvectors[(0, i)].powi(2)).collect();
    (nodes, weights)
}

/// A measured transfer characteristic.
#[derive(Clone, Debug, PartialEq)]
pub struct ExitCurve {
    pub ia_grid: Vec<f64>,
    /// Clipped to `[0, 1]`.
    pub ie_values: Vec<f64>,
    /// Estimator output before clipping.
    pub ie_raw: Vec<f64>,
    pub snr_db: f64,
    pub component: String,
    pub method: ExitMethod,
    /// LLR samples per grid point.
    pub samples: usize,
}

impl ExitCurve {
    pub fn csv_header() -> &'static str {
        "ia,ie,snr_db,component,method,samples"
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.ia_grid
            .iter()
            .zip(&self.ie_values)
            .map(|(a, e)| {
                format!(
                    "{a:.6},{e:.6},{},{},{},{}",
                    self.snr_db,
                    self.component,
                    self.method.name(),
                    self.samples
                )
            })
            .collect()
    }
}

/// `T(I_A)` interpolated linearly, held constant outside the grid.
pub fn interpolate(curve: &ExitCurve, ia: f64) -> f64 {
    let g = &curve.ia_grid;
    let v = &curve.ie_values;
    if g.is_empty() {
        return 0.0;
    }
    if ia <= g[0] {
        return v[0];
    }
    if ia >= g[g.len() - 1] {
        return v[v.len() - 1];
    }
    let k = g.partition_point(|&x| x <= ia);
    let (x0, x1) = (g[k - 1], g[k]);
    let t = (ia - x0) / (x1 - x0);
    v[k - 1] + t * (v[k] - v[k - 1])
}

/// Area under the curve over `[0, 1]` by the trapezoidal rule, extending
/// the first and last values to the interval ends.
pub fn tdd_rate(curve: &ExitCurve) -> Result<f64> {
    let g = &curve.ia_grid;
    let v = &curve.ie_values;
    if g.len() < 2 || g.len() != v.len() {
        return Err(Error::InvalidLength(format!(
            "rate integral needs ≥ 2 matched grid points, got {} / {}",
            g.len(),
            v.len()
        )));
    }
    if g.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("I_A grid must be strictly increasing".into()));
    }
    let mut area = g[0].max(0.0) * v[0] + (1.0 - g[g.len() - 1]).max(0.0) * v[v.len() - 1];
    for k in 1..g.len() {
        area += 0.5 * (g[k] - g[k - 1]) * (v[k] + v[k - 1]);
    }
    Ok(area)
}

/// Rate without feedback: the characteristic at `I_A = 0`.
pub fn sdd_rate(curve: &ExitCurve) -> f64 {
    interpolate(curve, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatencyKind {
    Gnn,
    Fgnn,
    Spa,
    NeuralSpa,
    Bcjr,
    /// Flooding joint detection-decoding GNN.
    JddGnn,
}

impl LatencyKind {
    pub fn name(self) -> &'static str {
        match self {
            LatencyKind::Gnn => "gnn",
            LatencyKind::Fgnn => "fgnn",
            LatencyKind::Spa => "spa",
            LatencyKind::NeuralSpa => "neural-spa",
            LatencyKind::Bcjr => "bcjr",
            LatencyKind::JddGnn => "jdd-gnn",
        }
    }

    /// Cycles per iteration; `None` for the BCJR.
    pub fn cycles_per_iteration(self) -> Option<u64> {
        match self {
            LatencyKind::Gnn | LatencyKind::JddGnn => Some(12),
            LatencyKind::Fgnn => Some(10),
            LatencyKind::Spa | LatencyKind::NeuralSpa => Some(2),
            LatencyKind::Bcjr => None,
        }
    }
}

impl fmt::Display for LatencyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LatencyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "gnn" => LatencyKind::Gnn,
            "fgnn" => LatencyKind::Fgnn,
            "spa" => LatencyKind::Spa,
            "neural-spa" | "nspa" => LatencyKind::NeuralSpa,
            "bcjr" => LatencyKind::Bcjr,
            "jdd-gnn" | "jdd" => LatencyKind::JddGnn,
            other => return Err(Error::InvalidConfig(format!("unknown latency kind `{other}`"))),
        })
    }
}

/// Clock cycles of one detection: per-iteration counts for the iterative
/// methods, `N_x + L + 2` for the BCJR (iterations ignored).
pub fn latency_cycles(kind: LatencyKind, iterations: usize, block_len: usize, memory: usize) -> u64 {
    match kind.cycles_per_iteration() {
        Some(c) => c * iterations as u64,
        None => (block_len + memory + 2) as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ber_cases() {
        let a = [0u8, 1, 1, 0];
        assert_eq!(ber(&a, &a).unwrap(), 0.0);
        assert_eq!(ber(&a, &[1, 0, 0, 1]).unwrap(), 1.0);
        assert_eq!(ber(&a, &[1, 0, 1, 0]).unwrap(), 0.5);
        assert!(ber(&[], &[]).is_err());
        assert!(ber(&a, &[0]).is_err());
    }

    #[test]
    fn bler_counts_frames() {
        let r = vec![vec![0, 0], vec![1, 1], vec![0, 1]];
        let d = vec![vec![0, 0], vec![1, 0], vec![1, 0]];
        assert!((bler(&r, &d).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bmi_limits() {
        assert_eq!(bmi_estimate(&[0, 1, 0], &[0.0; 3]).unwrap(), 0.0);
        let v = bmi_estimate(&[0, 1, 0], &[40.0, -40.0, 40.0]).unwrap();
        assert!(v > 1.0 - 1e-15);
        // confidently wrong decisions clip at zero
        assert!(bmi_raw(&[0], &[-10.0]).unwrap() < 0.0);
        assert_eq!(bmi_estimate(&[0], &[-10.0]).unwrap(), 0.0);
    }

    #[test]
    fn mu_of_ia_anchors() {
        assert_eq!(mu_of_ia(0.0).unwrap(), 0.0);
        assert!(mu_of_ia(1.0).is_err());
        assert!(mu_of_ia(-0.1).is_err());
        let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        let mus: Vec<f64> = grid.iter().map(|&i| mu_of_ia(i).unwrap()).collect();
        assert!(mus.windows(2).all(|w| w[1] > w[0]));
        for (&i, &m) in grid.iter().zip(&mus) {
            assert!((ia_of_mu(m) - i).abs() < 1e-12);
        }
    }

    #[test]
    fn capacity_matches_monte_carlo() {
        use crate::rng::seeded;
        use rand_distr::{Distribution, Normal};
        let sigma2 = 0.6;
        let n = Normal::new(2.0 / sigma2, (4.0f64 / sigma2).sqrt()).unwrap();
        let mut rng = seeded(3);
        let llrs: Vec<f64> = (0..200_000).map(|_| n.sample(&mut rng)).collect();
        let mc = bmi_raw(&vec![0; llrs.len()], &llrs).unwrap();
        assert!((bpsk_awgn_capacity(sigma2) - mc).abs() < 5e-3);
        assert!(bpsk_awgn_capacity(1e-3) > 0.999_999);
        assert!(bpsk_awgn_capacity(1e4) < 1e-3);
    }

    fn curve(ia: Vec<f64>, ie: Vec<f64>) -> ExitCurve {
        ExitCurve {
            ie_raw: ie.clone(),
            ia_grid: ia,
            ie_values: ie,
            snr_db: 0.0,
            component: "test".into(),
            method: ExitMethod::Subtract,
            samples: 0,
        }
    }

    #[test]
    fn rate_integrals() {
        let c = curve(vec![0.2, 0.5, 0.7], vec![0.4; 3]);
        assert!((tdd_rate(&c).unwrap() - 0.4).abs() < 1e-15);
        let ramp = curve(vec![0.0, 0.25, 1.0], vec![0.0, 0.25, 1.0]);
        assert!((tdd_rate(&ramp).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(sdd_rate(&ramp), 0.0);
        assert!(tdd_rate(&curve(vec![0.5], vec![0.5])).is_err());
    }

    #[test]
    fn latency_accounting() {
        assert_eq!(latency_cycles(LatencyKind::Gnn, 8, 512, 4), 96);
        assert_eq!(latency_cycles(LatencyKind::Fgnn, 8, 512, 4), 80);
        assert_eq!(latency_cycles(LatencyKind::Bcjr, 0, 512, 4), 518);
        assert_eq!(latency_cycles(LatencyKind::Spa, 11, 512, 4), 22);
        assert_eq!(latency_cycles(LatencyKind::JddGnn, 5, 512, 4), 60);
        assert!("ep".parse::<LatencyKind>().is_err());
        assert_eq!("FGNN".parse::<LatencyKind>().unwrap(), LatencyKind::Fgnn);
    }

    proptest! {
        #[test]
        fn bmi_is_bounded(bits in prop::collection::vec(0u8..2, 1..50), seed in 0u64..1000) {
            use rand::Rng;
            let mut rng = crate::rng::seeded(seed);
            let llrs: Vec<f64> = bits.iter().map(|_| rng.random_range(-30.0..30.0)).collect();
            let v = bmi_estimate(&bits, &llrs).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(bmi_raw(&bits, &llrs).unwrap() <= 1.0);
        }

        #[test]
        fn rate_of_constant_curve(c in 0.0f64..1.0, n in 2usize..20) {
            let ia: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
            let r = tdd_rate(&curve(ia, vec![c; n])).unwrap();
            prop_assert!((r - c).abs() < 1e-12);
        }
    }
}
