use crate::error::{Error, Result};

/// Jacobian logarithm of two terms, `ln(e^a + e^b)`.
#[inline]
pub fn max_star2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ exp(v)`, stabilized by subtracting the maximum.
pub fn max_star(values: &[f64]) -> Result<f64> {
    let Some(&first) = values.first() else {
        return Err(Error::InvalidLength("max* of an empty vector".into()));
    };
    let m = values.iter().copied().fold(first, f64::max);
    if m.is_infinite() {
        return Ok(m);
    }
    Ok(m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln())
}
