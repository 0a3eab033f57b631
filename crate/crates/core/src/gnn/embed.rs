//! Input embeddings: per-node raw features computed outside the tape, and
//! their learned projection on the tape.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::params::{EmbeddingParams, GnnConfig, GnnParameters};
use crate::channel::{build_channel_matrix, CMatrix, CVector, Cir, Constellation};
use crate::error::{Error, Result};
use crate::graphs::DetectionKind;
use crate::neural_core::{Bindings, Tape, Tensor, Var};

/// Diagonal loading floor of the CCT solve.
const CCT_LOADING_FLOOR: f64 = 1e-10;

/// One received block as seen by the receiver.
#[derive(Clone, Debug)]
pub struct Frame {
    pub y: Vec<Complex64>,
    pub sigma2: f64,
    /// Channel state known to the receiver (possibly perturbed).
    pub cir: Cir,
    /// Prior bit LLRs in readout order, `log2 M` per readout VN.
    pub prior: Option<Vec<f64>>,
}

impl Frame {
    pub fn new(y: Vec<Complex64>, sigma2: f64, cir: Cir) -> Self {
        Self {
            y,
            sigma2,
            cir,
            prior: None,
        }
    }

    pub fn with_prior(mut self, prior: Vec<f64>) -> Self {
        self.prior = Some(prior);
        self
    }

    pub fn block_len(&self) -> usize {
        self.y.len().saturating_sub(self.cir.memory())
    }
}

/// Max-normalized log-likelihoods `−|y − Σ_l h_l x_l|²/σ²` over all
/// `M^{L+1}` symbol combinations. Combination `c` assigns label
/// `(c / M^l) mod M` to tap `l`.
pub fn embed_llr(y: Complex64, cir: &Cir, sigma2: f64, constellation: &Constellation) -> Vec<f64> {
    let m = constellation.order();
    let taps = cir.taps();
    let count = m.pow(taps.len() as u32);
    let s2 = sigma2.max(1e-12);
    let points = constellation.points();
    let mut out = Vec::with_capacity(count);
    for c in 0..count {
        let mut rest = c;
        let mut mean = Complex64::new(0.0, 0.0);
        for h in taps {
            mean += h * points[rest % m];
            rest /= m;
        }
        out.push(-(y - mean).norm_sqr() / s2);
    }
    max_normalize(&mut out);
    out
}

/// UFG self-term metrics `(2 Re(x* χ) − G_kk |x|²)/σ²`, max-normalized.
pub fn ufg_local_metrics(chi: Complex64, g_kk: f64, sigma2: f64, constellation: &Constellation) -> Vec<f64> {
    let s2 = sigma2.max(1e-12);
    let mut out: Vec<f64> = constellation
        .points()
        .iter()
        .map(|x| (2.0 * (x.conj() * chi).re - g_kk * x.norm_sqr()) / s2)
        .collect();
    max_normalize(&mut out);
    out
}

fn max_normalize(v: &mut [f64]) {
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.iter_mut().for_each(|x| *x -= mx);
}

#[derive(Clone, Debug)]
pub struct CctOutput {
    /// `R = H̃ (HᴴH + I/σ²)⁻¹ Hᴴ`
    pub r: CMatrix,
    pub y_tilde: Vec<Complex64>,
    pub regularized: bool,
}

/// `(HᴴH + I/σ²)⁻¹` applied to `rhs`.
fn cct_solve(h: &CMatrix, sigma2: f64, rhs: &CMatrix) -> Result<(CMatrix, bool)> {
    let n = h.ncols();
    let mut load = if sigma2 > 0.0 { 1.0 / sigma2 } else { f64::INFINITY };
    let mut regularized = false;
    if !load.is_finite() {
        return Err(Error::InvalidConfig("CCT filter needs σ² > 0".into()));
    }
    if load < CCT_LOADING_FLOOR {
        load = CCT_LOADING_FLOOR;
        regularized = true;
    }
    let a = h.adjoint() * h + CMatrix::identity(n, n) * Complex64::new(load, 0.0);
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::InvalidConfig("CCT system is not positive definite".into()))?;
    Ok((chol.solve(rhs), regularized))
}

/// Constant-channel receive filter with target `H̃` (`rows × (N_x+2L)`).
pub fn cct_filter(h: &CMatrix, sigma2: f64, target: &DMatrix<f64>, y: &[Complex64]) -> Result<CctOutput> {
    if target.ncols() != h.ncols() || y.len() != h.nrows() {
        return Err(Error::InvalidShape(format!(
            "CCT: H is {}×{}, H̃ has {} columns, y has {} samples",
            h.nrows(),
            h.ncols(),
            target.ncols(),
            y.len()
        )));
    }
    let (inner, regularized) = cct_solve(h, sigma2, &h.adjoint())?;
    let t = target.map(|v| Complex64::new(v, 0.0));
    let r = t * inner;
    let y_tilde = (&r * CVector::from_column_slice(y)).iter().copied().collect();
    Ok(CctOutput { r, y_tilde, regularized })
}

/// Banded target with `H̃[i, i..=i+L] = band[i, ·]`, shape
/// `band.rows × (band.rows + L)`.
pub fn cct_target(band: &Tensor) -> DMatrix<f64> {
    let (rows, width) = band.dim();
    let mut t = DMatrix::zeros(rows, rows + width - 1);
    for i in 0..rows {
        for k in 0..width {
            t[(i, i + k)] = band[(i, k)];
        }
    }
    t
}

/// Raw embedding inputs of one frame.
#[derive(Clone, Debug)]
pub struct FrameFeatures {
    /// One row per embedded node (FFG: FN per observation, UFG: payload VN).
    pub rows: Tensor,
    /// CCT only: windows `z[i..=i+L]` of the pre-filtered block, real and
    /// imaginary parts, one row per FN.
    pub cct_windows: Option<(Tensor, Tensor)>,
    pub prior: Option<Tensor>,
    pub regularized: bool,
}

/// Computes the embedding inputs of `frame` for `config`.
pub fn frame_features(config: &GnnConfig, frame: &Frame) -> Result<FrameFeatures> {
    let l = config.memory;
    if frame.cir.memory() != l {
        return Err(Error::InvalidShape(format!(
            "model memory {l} but frame CIR has memory {}",
            frame.cir.memory()
        )));
    }
    let n = frame.block_len();
    if n == 0 {
        return Err(Error::InvalidLength("empty frame".into()));
    }
    let constellation = Constellation::for_order(config.modulation_order)?;
    let noise = config.noise_input;
    let s2 = frame.sigma2;
    let width = config.embedding_input_dim()?;
    let mut regularized = false;
    let mut cct_windows = None;

    let row_complex = |v: Complex64| -> Vec<f64> {
        let mut r = vec![v.re, v.im];
        if noise {
            r.push(s2);
        }
        r
    };
    let csi_row = |v: Complex64| -> Vec<f64> {
        let mut r = vec![v.re, v.im];
        r.extend(frame.cir.taps().iter().map(|h| h.re));
        r.extend(frame.cir.taps().iter().map(|h| h.im));
        if noise {
            r.push(s2);
        }
        r
    };

    let rows: Vec<Vec<f64>> = match config.detection {
        DetectionKind::Ffg => match config.embedding {
            super::EmbeddingKind::Linear => frame.y.iter().map(|&v| row_complex(v)).collect(),
            super::EmbeddingKind::Llr => frame
                .y
                .iter()
                .map(|&v| embed_llr(v, &frame.cir, s2, &constellation))
                .collect(),
            super::EmbeddingKind::NeuralCsi => frame.y.iter().map(|&v| csi_row(v)).collect(),
            super::EmbeddingKind::Cct => {
                if config.block_len != Some(n) {
                    return Err(Error::InvalidShape(format!(
                        "CCT model trained for block length {:?}, frame has {n}",
                        config.block_len
                    )));
                }
                let h = build_channel_matrix(&frame.cir, n)?;
                let rhs = h.adjoint() * CMatrix::from_column_slice(frame.y.len(), 1, &frame.y);
                let (z, reg) = cct_solve(&h, s2, &rhs)?;
                regularized = reg;
                let fns = n + l;
                let mut re = Tensor::zeros((fns, l + 1));
                let mut im = Tensor::zeros((fns, l + 1));
                for i in 0..fns {
                    for k in 0..=l {
                        re[(i, k)] = z[(i + k, 0)].re;
                        im[(i, k)] = z[(i + k, 0)].im;
                    }
                }
                cct_windows = Some((re, im));
                (0..fns).map(|_| if noise { vec![s2] } else { Vec::new() }).collect()
            }
        },
        DetectionKind::Ufg => {
            let h = build_channel_matrix(&frame.cir, n)?;
            let chi = h.adjoint() * CVector::from_column_slice(&frame.y);
            let payload = l..l + n;
            match config.embedding {
                super::EmbeddingKind::Linear => payload.map(|k| row_complex(chi[k])).collect(),
                super::EmbeddingKind::Llr => {
                    let g = h.adjoint() * &h;
                    payload
                        .map(|k| ufg_local_metrics(chi[k], g[(k, k)].re, s2, &constellation))
                        .collect()
                }
                super::EmbeddingKind::NeuralCsi => payload.map(|k| csi_row(chi[k])).collect(),
                super::EmbeddingKind::Cct => {
                    return Err(Error::Unsupported("CCT embedding is defined for the FFG only".into()))
                }
            }
        }
    };
    let cols = if cct_windows.is_some() { usize::from(noise) } else { width };
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let rows = Tensor::from_shape_vec((rows.len(), cols), flat).map_err(|e| Error::InvalidShape(e.to_string()))?;

    let prior = match (&frame.prior, config.with_prior) {
        (Some(p), true) => {
            let k = config.bits_per_symbol();
            if p.len() % k != 0 {
                return Err(Error::InvalidLength(format!("{} prior LLRs for {k} bits per symbol", p.len())));
            }
            Some(Tensor::from_shape_vec((p.len() / k, k), p.clone()).expect("divisible"))
        }
        _ => None,
    };
    Ok(FrameFeatures {
        rows,
        cct_windows,
        prior,
        regularized,
    })
}

/// Features of a batch stacked frame after frame.
#[derive(Clone, Debug)]
pub struct BatchFeatures {
    pub batch: usize,
    pub rows: Tensor,
    pub cct_windows: Option<(Tensor, Tensor)>,
    /// Per batch row of `rows`, the FN index within its frame.
    pub row_in_frame: Arc<Vec<usize>>,
    pub prior: Option<Tensor>,
}

fn stack(parts: &[&Tensor]) -> Tensor {
    let views: Vec<_> = parts.iter().map(|t| t.view()).collect();
    ndarray::concatenate(ndarray::Axis(0), &views).expect("matching widths")
}

impl BatchFeatures {
    pub fn new(frames: &[FrameFeatures]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidLength("empty batch".into()))?;
        if frames.iter().any(|f| f.rows.dim() != first.rows.dim()) {
            return Err(Error::InvalidShape("frames of a batch must share the block length".into()));
        }
        let per = first.rows.nrows();
        let rows = stack(&frames.iter().map(|f| &f.rows).collect::<Vec<_>>());
        let cct_windows = if first.cct_windows.is_some() {
            let re: Vec<&Tensor> = frames.iter().map(|f| &f.cct_windows.as_ref().expect("cct").0).collect();
            let im: Vec<&Tensor> = frames.iter().map(|f| &f.cct_windows.as_ref().expect("cct").1).collect();
            Some((stack(&re), stack(&im)))
        } else {
            None
        };
        let prior = if first.prior.is_some() {
            if frames.iter().any(|f| f.prior.is_none()) {
                return Err(Error::InvalidConfig("either all or no frames of a batch carry priors".into()));
            }
            Some(stack(&frames.iter().map(|f| f.prior.as_ref().expect("checked")).collect::<Vec<_>>()))
        } else {
            None
        };
        Ok(Self {
            batch: frames.len(),
            rows,
            cct_windows,
            row_in_frame: Arc::new((0..frames.len() * per).map(|r| r % per).collect()),
            prior,
        })
    }
}

/// Learned projection of the batch features to `d`-dimensional states,
/// one row per embedded node.
pub fn embed_tape(params: &GnnParameters, tape: &mut Tape, bind: &mut Bindings, batch: &BatchFeatures) -> Var {
    let rows = tape.constant(batch.rows.clone());
    match &params.embedding {
        EmbeddingParams::Linear { w } | EmbeddingParams::Llr { w } => {
            let wv = bind.bind(tape, "embed.w", w);
            tape.matmul_t(rows, wv)
        }
        EmbeddingParams::NeuralCsi { mlp } => mlp.forward_tape(tape, bind, "embed.csi", rows),
        EmbeddingParams::Cct { band, w } => {
            let (re, im) = batch.cct_windows.as_ref().expect("CCT features");
            let bv = bind.bind(tape, "embed.band", band);
            let per_row = tape.gather_rows(bv, batch.row_in_frame.clone());
            let ones = tape.constant(Tensor::ones((band.ncols(), 1)));
            let zre = tape.constant(re.clone());
            let zim = tape.constant(im.clone());
            let pr = tape.mul(per_row, zre);
            let pi = tape.mul(per_row, zim);
            let yre = tape.matmul(pr, ones);
            let yim = tape.matmul(pi, ones);
            let input = if batch.rows.ncols() > 0 {
                tape.concat_cols(&[yre, yim, rows])
            } else {
                tape.concat_cols(&[yre, yim])
            };
            let wv = bind.bind(tape, "embed.w", w);
            tape.matmul_t(input, wv)
        }
    }
}
