//! Modulation, the tapped-delay-line ISI channel, noise, channel-matrix
//! construction and CSI perturbation.
//!
//! Noise is circularly-symmetric complex Gaussian with *total* variance
//! `σ²`; every likelihood exponent in the crate is `-|·|²/σ²`.

mod constellation;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub use constellation::Constellation;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Channel impulse response `h_0..h_L`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cir {
    taps: Vec<Complex64>,
}

impl Cir {
    pub fn new(taps: Vec<Complex64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidConfig("CIR needs at least one tap".into()));
        }
        if taps.iter().any(|t| !t.re.is_finite() || !t.im.is_finite()) {
            return Err(Error::InvalidConfig("CIR taps must be finite".into()));
        }
        Ok(Self { taps })
    }

    pub fn real(taps: &[f64]) -> Result<Self> {
        Self::new(taps.iter().map(|&t| Complex64::new(t, 0.0)).collect())
    }

    /// `h = [0.227, 0.460, 0.688, 0.460, 0.227]`
    pub fn proakis_c() -> Self {
        Self::real(&[0.227, 0.460, 0.688, 0.460, 0.227]).expect("valid preset")
    }

    /// Named presets accepted on the command line.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "proakis-c" => Some(Self::proakis_c()),
            "proakis-b" => Some(Self::real(&[0.407, 0.815, 0.407]).expect("valid preset")),
            "awgn" | "identity" => Some(Self::real(&[1.0]).expect("valid preset")),
            _ => None,
        }
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    /// Channel memory `L = taps − 1`.
    pub fn memory(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }

    pub fn is_real(&self) -> bool {
        self.taps.iter().all(|t| t.im == 0.0)
    }
}

impl fmt::Display for Cir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.taps.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            if t.im == 0.0 {
                write!(f, "{}", t.re)?;
            } else {
                write!(f, "{}{:+}j", t.re, t.im)?;
            }
        }
        Ok(())
    }
}

impl FromStr for Cir {
    type Err = Error;

    /// A preset name or comma-separated taps, each real (`0.5`) or complex
    /// (`0.5+0.1j`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(c) = Self::preset(s) {
            return Ok(c);
        }
        let taps = s
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                tok.parse::<f64>()
                    .map(|re| Complex64::new(re, 0.0))
                    .or_else(|_| tok.parse::<Complex64>())
                    .map_err(|_| Error::InvalidConfig(format!("cannot parse CIR tap `{tok}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(taps)
    }
}

/// One simulated block.
#[derive(Clone, Debug)]
pub struct TransmissionRecord {
    pub info_bits: Vec<u8>,
    pub code_bits: Vec<u8>,
    pub symbols: Vec<Complex64>,
    pub observations: Vec<Complex64>,
    pub noise_variance: f64,
    pub cir: Cir,
}

/// `CN(0, σ²)` sample.
pub fn complex_noise<R: Rng + ?Sized>(sigma2: f64, rng: &mut R) -> Complex64 {
    if sigma2 == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let s = (sigma2 / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Noiseless convolution `Σ h_l x_{i-l}` over `N_x + L` outputs with zero
/// boundary symbols.
pub fn convolve(symbols: &[Complex64], cir: &Cir) -> Vec<Complex64> {
    let l = cir.memory();
    let n = symbols.len();
    (0..n + l)
        .map(|i| {
            cir.taps()
                .iter()
                .enumerate()
                .filter(|(k, _)| *k <= i && i - k < n)
                .map(|(k, h)| h * symbols[i - k])
                .sum()
        })
        .collect()
}

/// `y_i = Σ h_l x_{i-l} + z_i`, output length `N_x + L`.
pub fn apply_isi<R: Rng + ?Sized>(symbols: &[Complex64], cir: &Cir, sigma2: f64, rng: &mut R) -> Result<Vec<Complex64>> {
    if sigma2.is_nan() || sigma2 < 0.0 {
        return Err(Error::InvalidConfig(format!("noise variance must be ≥ 0, got {sigma2}")));
    }
    let mut y = convolve(symbols, cir);
    for v in y.iter_mut() {
        *v += complex_noise(sigma2, rng);
    }
    Ok(y)
}

/// Toeplitz channel matrix of shape `(N_x+L) × (N_x+2L)` acting on the
/// zero-padded sequence `x̃` (`x̃_k = x_{k-L}`).
pub fn build_channel_matrix(cir: &Cir, block_len: usize) -> Result<CMatrix> {
    if block_len == 0 {
        return Err(Error::InvalidConfig("block length must be ≥ 1".into()));
    }
    let l = cir.memory();
    let mut h = CMatrix::zeros(block_len + l, block_len + 2 * l);
    for i in 0..block_len + l {
        for (k, tap) in cir.taps().iter().enumerate() {
            h[(i, i + l - k)] = *tap;
        }
    }
    Ok(h)
}

/// Columns of `H` that multiply transmitted symbols.
pub fn payload_columns(h: &CMatrix, memory: usize) -> CMatrix {
    let n = h.ncols() - 2 * memory;
    h.columns(memory, n).into_owned()
}

/// Zero-pads `x` to `x̃`.
pub fn zero_pad(symbols: &[Complex64], memory: usize) -> CVector {
    let mut v = CVector::zeros(symbols.len() + 2 * memory);
    for (i, s) in symbols.iter().enumerate() {
        v[i + memory] = *s;
    }
    v
}

/// Sufficient statistics of the Ungerboeck observation model.
#[derive(Clone, Debug)]
pub struct UfgStatistics {
    /// `G = HᴴH`
    pub gram: CMatrix,
    /// `χ = Hᴴy`
    pub matched: CVector,
    /// `true` for the leading and trailing `L` virtual positions
    pub virtual_mask: Vec<bool>,
}

pub fn ufg_statistics(h: &CMatrix, y: &[Complex64]) -> Result<UfgStatistics> {
    if h.nrows() != y.len() {
        return Err(Error::InvalidShape(format!(
            "H has {} rows but y has {} samples",
            h.nrows(),
            y.len()
        )));
    }
    let memory = h.ncols().saturating_sub(h.nrows());
    let hh = h.adjoint();
    let gram = &hh * h;
    let matched = &hh * CVector::from_column_slice(y);
    let n = h.ncols();
    let virtual_mask = (0..n).map(|k| k < memory || k >= n - memory).collect();
    Ok(UfgStatistics {
        gram,
        matched,
        virtual_mask,
    })
}

/// Unit-energy CIR with i.i.d. `CN(0,1)` taps.
pub fn random_cir<R: Rng + ?Sized>(memory: usize, rng: &mut R) -> Cir {
    loop {
        let taps: Vec<Complex64> = (0..=memory).map(|_| complex_noise(1.0, rng)).collect();
        let e: f64 = taps.iter().map(|t| t.norm_sqr()).sum();
        if e > 1e-12 {
            let s = e.sqrt().recip();
            return Cir::new(taps.into_iter().map(|t| t * s).collect()).expect("finite taps");
        }
    }
}

/// `h' = h + n'` with per-tap error variance `variance`: a real perturbation
/// for real-valued CIRs, circular complex otherwise.
pub fn perturb_csi<R: Rng + ?Sized>(cir: &Cir, variance: f64, rng: &mut R) -> Result<Cir> {
    if variance.is_nan() || variance < 0.0 {
        return Err(Error::InvalidConfig(format!("CSI error variance must be ≥ 0, got {variance}")));
    }
    if variance == 0.0 {
        return Ok(cir.clone());
    }
    let taps = if cir.is_real() {
        let n = Normal::new(0.0, variance.sqrt()).expect("finite");
        cir.taps()
            .iter()
            .map(|t| Complex64::new(t.re + n.sample(rng), 0.0))
            .collect()
    } else {
        cir.taps().iter().map(|t| t + complex_noise(variance, rng)).collect()
    };
    Cir::new(taps)
}

/// Noise variance for unit-energy constellations at a given `E_b/N_0`:
/// `σ² = 1 / (R · log2(M) · 10^(EbN0/10))`.
pub fn ebn0_to_sigma2(ebn0_db: f64, code_rate: f64, bits_per_symbol: usize) -> Result<f64> {
    if !(code_rate > 0.0 && code_rate <= 1.0) {
        return Err(Error::InvalidConfig(format!("code rate must lie in (0, 1], got {code_rate}")));
    }
    if bits_per_symbol == 0 {
        return Err(Error::InvalidConfig("bits per symbol must be ≥ 1".into()));
    }
    Ok(1.0 / (code_rate * bits_per_symbol as f64 * 10f64.powf(ebn0_db / 10.0)))
}

/// Noise variance at a symbol SNR `E_s/σ² = 10^(snr/10)` (unit-energy symbols).
pub fn snr_db_to_sigma2(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Full simulation of one block: modulate, convolve, add noise.
pub fn transmit<R: Rng + ?Sized>(
    info_bits: Vec<u8>,
    code_bits: Vec<u8>,
    constellation: &Constellation,
    cir: &Cir,
    sigma2: f64,
    rng: &mut R,
) -> Result<TransmissionRecord> {
    let symbols = constellation.modulate(&code_bits)?;
    let observations = apply_isi(&symbols, cir, sigma2, rng)?;
    Ok(TransmissionRecord {
        info_bits,
        code_bits,
        symbols,
        observations,
        noise_variance: sigma2,
        cir: cir.clone(),
    })
}

pub fn random_bits<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<u8> {
    (0..n).map(|_| rng.random_range(0..2u8)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn identity_channel() {
        let x = vec![c(1.0), c(-1.0), c(1.0)];
        let y = apply_isi(&x, &Cir::real(&[1.0]).unwrap(), 0.0, &mut seeded(1)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn proakis_impulse_response() {
        let y = apply_isi(&[c(1.0)], &Cir::proakis_c(), 0.0, &mut seeded(1)).unwrap();
        let want = [0.227, 0.460, 0.688, 0.460, 0.227];
        assert_eq!(y.len(), 5);
        for (a, b) in y.iter().zip(want) {
            assert!((a.re - b).abs() < 1e-15 && a.im == 0.0);
        }
    }

    #[test]
    fn convolution_is_linear() {
        let mut rng = seeded(3);
        let cir = random_cir(3, &mut rng);
        let x1: Vec<_> = (0..10).map(|_| complex_noise(1.0, &mut rng)).collect();
        let x2: Vec<_> = (0..10).map(|_| complex_noise(1.0, &mut rng)).collect();
        let sum: Vec<_> = x1.iter().zip(&x2).map(|(a, b)| a + b).collect();
        let y = convolve(&sum, &cir);
        let y1 = convolve(&x1, &cir);
        let y2 = convolve(&x2, &cir);
        for i in 0..y.len() {
            assert!((y[i] - y1[i] - y2[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn memoryless_matrix_is_scaled_identity() {
        let h = build_channel_matrix(&Cir::real(&[0.7]).unwrap(), 4).unwrap();
        assert_eq!(h.shape(), (4, 4));
        assert_eq!(h, CMatrix::identity(4, 4) * c(0.7));
    }

    #[test]
    fn matrix_rows_hold_reversed_taps() {
        let cir = Cir::real(&[1.0, 2.0, 3.0]).unwrap();
        let h = build_channel_matrix(&cir, 5).unwrap();
        assert_eq!(h.shape(), (7, 9));
        for i in 0..7 {
            assert_eq!(h[(i, i)], c(3.0));
            assert_eq!(h[(i, i + 1)], c(2.0));
            assert_eq!(h[(i, i + 2)], c(1.0));
            assert_eq!(h.row(i).iter().filter(|v| v.norm() > 0.0).count(), 3);
        }
    }

    #[test]
    fn matrix_product_matches_convolution() {
        let mut rng = seeded(5);
        for trial in 0..50 {
            let memory = trial % 5;
            let cir = random_cir(memory, &mut rng);
            let n = 1 + trial % 13;
            let x: Vec<_> = (0..n).map(|_| complex_noise(1.0, &mut rng)).collect();
            let h = build_channel_matrix(&cir, n).unwrap();
            let y = &h * zero_pad(&x, memory);
            let r = convolve(&x, &cir);
            for i in 0..r.len() {
                assert!((y[i] - r[i]).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn ufg_statistics_memoryless_unit() {
        let h = build_channel_matrix(&Cir::real(&[1.0]).unwrap(), 3).unwrap();
        let y = vec![c(0.5), c(-0.1), Complex64::new(0.2, 0.3)];
        let s = ufg_statistics(&h, &y).unwrap();
        assert_eq!(s.gram, CMatrix::identity(3, 3));
        assert_eq!(s.matched.as_slice(), y.as_slice());
        assert!(s.virtual_mask.iter().all(|v| !v));
    }

    #[test]
    fn gram_is_banded_and_hermitian() {
        let h = build_channel_matrix(&Cir::proakis_c(), 12).unwrap();
        let s = ufg_statistics(&h, &vec![c(0.0); 16]).unwrap();
        for i in 0..s.gram.nrows() {
            for j in 0..s.gram.ncols() {
                if i.abs_diff(j) > 4 {
                    assert_eq!(s.gram[(i, j)].norm(), 0.0);
                }
            }
        }
        assert_eq!(s.virtual_mask.iter().filter(|v| **v).count(), 8);
        let mut rng = seeded(8);
        let cir = random_cir(3, &mut rng);
        let h = build_channel_matrix(&cir, 10).unwrap();
        let g = ufg_statistics(&h, &vec![c(0.0); 13]).unwrap().gram;
        assert!((&g - g.adjoint()).iter().all(|v| v.norm() <= 1e-12));
    }

    #[test]
    fn random_cir_unit_energy_and_flat_power() {
        let mut rng = seeded(9);
        let mut power = [0.0; 4];
        for _ in 0..10_000 {
            let cir = random_cir(3, &mut rng);
            assert!((cir.energy() - 1.0).abs() < 1e-12);
            for (p, t) in power.iter_mut().zip(cir.taps()) {
                *p += t.norm_sqr() / 10_000.0;
            }
        }
        for p in power {
            assert!((p - 0.25).abs() < 0.01, "tap power {p}");
        }
        let a = random_cir(2, &mut seeded(4));
        let b = random_cir(2, &mut seeded(4));
        assert_eq!(a, b);
    }

    #[test]
    fn csi_perturbation_statistics() {
        let cir = Cir::proakis_c();
        assert_eq!(perturb_csi(&cir, 0.0, &mut seeded(1)).unwrap(), cir);
        let mut rng = seeded(2);
        let mut mse = 0.0;
        let draws = 10_000;
        for _ in 0..draws {
            let p = perturb_csi(&cir, 0.15, &mut rng).unwrap();
            assert_eq!(p.memory(), cir.memory());
            mse += p
                .taps()
                .iter()
                .zip(cir.taps())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                / 5.0;
        }
        mse /= draws as f64;
        assert!((mse - 0.15).abs() / 0.15 < 0.05, "mse {mse}");
    }

    #[test]
    fn ebn0_conversion() {
        assert!((ebn0_to_sigma2(0.0, 1.0, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!((ebn0_to_sigma2(3.0103, 0.5, 1).unwrap() - 1.0).abs() < 1e-4);
        assert!(ebn0_to_sigma2(1.0, 0.0, 1).is_err());
        let mut last = f64::MAX;
        for k in 0..20 {
            let s = ebn0_to_sigma2(k as f64, 0.5, 2).unwrap();
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn noise_is_white_with_requested_variance() {
        let mut rng = seeded(21);
        let n = 200_000;
        let z: Vec<_> = (0..n).map(|_| complex_noise(0.3, &mut rng)).collect();
        let var = z.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
        assert!((var - 0.3).abs() < 0.01);
        let bound = 3.0 / (n as f64).sqrt();
        for lag in 1..5 {
            let acf: Complex64 = (lag..n).map(|i| z[i] * z[i - lag].conj()).sum::<Complex64>() / (n as f64 * var);
            assert!(acf.norm() < bound, "lag {lag}: {acf}");
        }
    }

    #[test]
    fn cir_literals() {
        assert_eq!("proakis-c".parse::<Cir>().unwrap(), Cir::proakis_c());
        let c: Cir = "0.8, 0.6".parse().unwrap();
        assert_eq!(c.memory(), 1);
        let z: Cir = "0.5+0.1j,0.2-0.3j".parse().unwrap();
        assert_eq!(z.taps()[1], Complex64::new(0.2, -0.3));
        assert!("0.5,abc".parse::<Cir>().is_err());
        assert_eq!(z.to_string().parse::<Cir>().unwrap(), z);
    }
}
