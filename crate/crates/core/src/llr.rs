//! Bit log-likelihood ratios with an explicit role tag.
//!
//! Sign convention everywhere: positive values favor bit 0.

use crate::error::{Error, Result};

/// Saturation magnitude applied to every LLR leaving a component.
pub const LLR_MAX: f64 = 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LlrRole {
    Total,
    Extrinsic,
    Prior,
}

impl LlrRole {
    pub fn name(self) -> &'static str {
        match self {
            LlrRole::Total => "total",
            LlrRole::Extrinsic => "extrinsic",
            LlrRole::Prior => "prior",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlrVector {
    pub values: Vec<f64>,
    pub role: LlrRole,
}

pub fn saturate(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-LLR_MAX, LLR_MAX)
    }
}

impl LlrVector {
    /// Saturates `values` at `±LLR_MAX`.
    pub fn new(values: Vec<f64>, role: LlrRole) -> Self {
        Self {
            values: values.into_iter().map(saturate).collect(),
            role,
        }
    }

    pub fn zeros(n: usize, role: LlrRole) -> Self {
        Self {
            values: vec![0.0; n],
            role,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn hard_decisions(&self) -> Vec<u8> {
        self.values.iter().map(|&l| u8::from(l < 0.0)).collect()
    }

    pub fn expect_role(&self, role: LlrRole) -> Result<()> {
        if self.role != role {
            return Err(Error::RoleMismatch {
                expected: role.name(),
                found: self.role.name(),
            });
        }
        Ok(())
    }
}

/// `ℓ_E = ℓ_T − ℓ_A`, saturated.
pub fn extrinsic_llrs(total: &LlrVector, prior: &LlrVector) -> Result<LlrVector> {
    total.expect_role(LlrRole::Total)?;
    prior.expect_role(LlrRole::Prior)?;
    if total.len() != prior.len() {
        return Err(Error::InvalidLength(format!(
            "total has {} LLRs, prior has {}",
            total.len(),
            prior.len()
        )));
    }
    Ok(LlrVector::new(
        total.values.iter().zip(&prior.values).map(|(t, a)| t - a).collect(),
        LlrRole::Extrinsic,
    ))
}
