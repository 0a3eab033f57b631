use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::{payload_columns, CMatrix, CVector, Constellation};
use crate::error::{Error, Result};
use crate::llr::{LlrRole, LlrVector};

/// Diagonal loading used when the system is singular.
const REGULARIZATION_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct LmmseOutput {
    pub llrs: LlrVector,
    /// Filter outputs `x̂_i`.
    pub estimates: Vec<Complex64>,
    /// Per-symbol bias `μ_i = [W H_p]_ii`.
    pub bias: Vec<f64>,
    /// Set when the regularization floor had to be applied.
    pub regularized: bool,
}

/// Block LMMSE equalization followed by exact memoryless demapping.
///
/// The filter acts on the payload columns `H_p` of the channel matrix (the
/// virtual boundary symbols are known zeros):
/// `x̂ = (H_pᴴH_p + σ²I)⁻¹ H_pᴴ y`. The unbiased estimate `x̂_i/μ_i` is
/// demapped as `x_i + n` with `n ~ CN(0, (1−μ_i)/μ_i)`.
pub fn lmmse_detect(y: &[Complex64], h: &CMatrix, sigma2: f64, constellation: &Constellation) -> Result<LmmseOutput> {
    if h.nrows() != y.len() {
        return Err(Error::InvalidShape(format!(
            "H has {} rows but y has {} samples",
            h.nrows(),
            y.len()
        )));
    }
    let memory = h.ncols().saturating_sub(h.nrows());
    let hp = payload_columns(h, memory);
    let n = hp.ncols();
    let hh = hp.adjoint();
    let gram = &hh * &hp;
    let rhs = &hh * CVector::from_column_slice(y);
    let mut regularized = false;
    let mut load = sigma2;
    if load < REGULARIZATION_FLOOR {
        load = REGULARIZATION_FLOOR;
        regularized = true;
    }
    let system = |load: f64| &gram + DMatrix::<Complex64>::identity(n, n) * Complex64::new(load, 0.0);
    let chol = match system(load).cholesky() {
        Some(c) => c,
        None => {
            regularized = true;
            load = load.max(REGULARIZATION_FLOOR) * 1e3;
            system(load)
                .cholesky()
                .ok_or_else(|| Error::InvalidConfig("LMMSE system is not positive definite".into()))?
        }
    };
    let estimates = chol.solve(&rhs);
    let filtered_gram = chol.solve(&gram);
    let mut llrs = Vec::with_capacity(n * constellation.bits_per_symbol());
    let mut bias = Vec::with_capacity(n);
    for i in 0..n {
        let mu = filtered_gram[(i, i)].re.clamp(1e-12, 1.0 - 1e-12);
        bias.push(mu);
        let z = estimates[i] / mu;
        let noise = (1.0 - mu) / mu;
        llrs.extend(constellation.demap(z, noise, None));
    }
    Ok(LmmseOutput {
        llrs: LlrVector::new(llrs, LlrRole::Total),
        estimates: estimates.iter().copied().collect(),
        bias,
        regularized,
    })
}
