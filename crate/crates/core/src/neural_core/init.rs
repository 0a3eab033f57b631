use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tape::Tensor;
use crate::error::{Error, Result};

/// Glorot (Xavier) normal initialization: i.i.d. `N(0, 2/(fan_in+fan_out))`
/// entries in a `fan_out × fan_in` matrix.
pub fn glorot_init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Result<Tensor> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::InvalidShape(format!(
            "Glorot init needs positive fans, got ({fan_in}, {fan_out})"
        )));
    }
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    Ok(Tensor::from_shape_simple_fn((fan_out, fan_in), || normal.sample(rng)))
}

/// Standard normal matrix, used for attribute vectors.
pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    Tensor::from_shape_simple_fn((rows, cols), || normal.sample(rng))
}
