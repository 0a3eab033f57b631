use std::collections::BTreeMap;

use super::params::{GradientRecord, Parameterized};
use super::tape::Tensor;
use crate::error::{Error, Result};

/// Adam optimizer state with bias correction.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub first_moment: BTreeMap<String, Tensor>,
    pub second_moment: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: BTreeMap::new(),
            second_moment: BTreeMap::new(),
        }
    }

    /// One update. A non-finite gradient rejects the whole step and leaves
    /// both parameters and state untouched.
    pub fn step<P: Parameterized + ?Sized>(&mut self, params: &mut P, grads: &GradientRecord) -> Result<()> {
        for (name, g) in &grads.gradients {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }
        let mut shape_err = None;
        params.visit("", &mut |name, t| match grads.gradients.get(name) {
            Some(g) if g.dim() == t.dim() => {}
            _ => shape_err = Some(name.to_string()),
        });
        if let Some(name) = shape_err {
            return Err(Error::InvalidShape(format!("gradient for `{name}` missing or mis-shaped")));
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let first = &mut self.first_moment;
        let second = &mut self.second_moment;
        params.visit_mut("", &mut |name, p| {
            let g = &grads.gradients[name];
            let m = first
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(p.dim()));
            let v = second
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(p.dim()));
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let mhat = *m / c1;
                    let vhat = *v / c2;
                    *p -= lr * mhat / (vhat.sqrt() + eps);
                });
        });
        Ok(())
    }
}
