use rand::Rng;

use super::init::glorot_init;
use super::params::{join, Bindings, Parameterized};
use super::tape::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Dense feed-forward network: ReLU on hidden layers, affine output.
///
/// Weight `k` has shape `(layer_dims[k+1], layer_dims[k])`; bias `k` is a
/// `1 × layer_dims[k+1]` row.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl Mlp {
    /// Glorot-normal weights, zero biases.
    pub fn new<R: Rng + ?Sized>(layer_dims: &[usize], rng: &mut R) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::InvalidShape(format!(
                "MLP needs at least two positive layer sizes, got {layer_dims:?}"
            )));
        }
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for pair in layer_dims.windows(2) {
            weights.push(glorot_init(pair[0], pair[1], rng)?);
            biases.push(Tensor::zeros((1, pair[1])));
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
        })
    }

    /// `[input, hidden × layers, output]`
    pub fn with_hidden<R: Rng + ?Sized>(
        input: usize,
        hidden_units: usize,
        hidden_layers: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(hidden_units, hidden_layers));
        dims.push(output);
        Self::new(&dims, rng)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("non-empty")
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Single-vector forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::InvalidShape(format!(
                "MLP expects input of length {}, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        let mut x = input.to_vec();
        let last = self.weights.len() - 1;
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut out: Vec<f64> = (0..w.nrows())
                .map(|r| {
                    w.row(r)
                        .iter()
                        .zip(&x)
                        .map(|(a, v)| a * v)
                        .sum::<f64>()
                        + b[(0, r)]
                })
                .collect();
            if k < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            x = out;
        }
        Ok(x)
    }

    /// Row-batched forward pass on a tape; parameters are bound under
    /// `prefix`.
    pub fn forward_tape(&self, tape: &mut Tape, bind: &mut Bindings, prefix: &str, x: Var) -> Var {
        debug_assert_eq!(tape.shape(x).1, self.input_dim(), "{prefix}: input width");
        let last = self.weights.len() - 1;
        let mut h = x;
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let wv = bind.bind(tape, &join(prefix, &format!("w{k}")), w);
            let bv = bind.bind(tape, &join(prefix, &format!("b{k}")), b);
            let z = tape.matmul_t(h, wv);
            h = tape.add_bias(z, bv);
            if k < last {
                h = tape.relu(h);
            }
        }
        h
    }
}

impl Parameterized for Mlp {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            f(&join(prefix, &format!("w{k}")), w);
            f(&join(prefix, &format!("b{k}")), b);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (k, (w, b)) in self.weights.iter_mut().zip(self.biases.iter_mut()).enumerate() {
            f(&join(prefix, &format!("w{k}")), w);
            f(&join(prefix, &format!("b{k}")), b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::Array2;

    #[test]
    fn zero_weights_give_bias() {
        let mut mlp = Mlp::new(&[3, 5, 2], &mut seeded(1)).unwrap();
        mlp.weights.iter_mut().for_each(|w| w.fill(0.0));
        mlp.biases[1] = Array2::from_shape_vec((1, 2), vec![0.7, -1.3]).unwrap();
        assert_eq!(mlp.forward(&[4.0, -2.0, 9.0]).unwrap(), vec![0.7, -1.3]);
    }

    #[test]
    fn identity_single_layer() {
        let mut mlp = Mlp::new(&[3, 3], &mut seeded(2)).unwrap();
        mlp.weights[0] = Array2::eye(3);
        let x = [0.5, -1.5, 2.0];
        assert_eq!(mlp.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn matches_straight_line_reference() {
        let mlp = Mlp::new(&[4, 6, 3], &mut seeded(3)).unwrap();
        let x = [0.3, -0.2, 1.1, 0.7];
        // independent reference: explicit loops over raw slices
        let w0 = mlp.weights[0].as_slice().unwrap();
        let w1 = mlp.weights[1].as_slice().unwrap();
        let mut h = [0.0; 6];
        for i in 0..6 {
            let mut acc = mlp.biases[0][(0, i)];
            for j in 0..4 {
                acc += w0[i * 4 + j] * x[j];
            }
            h[i] = if acc > 0.0 { acc } else { 0.0 };
        }
        let mut out = [0.0; 3];
        for i in 0..3 {
            let mut acc = mlp.biases[1][(0, i)];
            for j in 0..6 {
                acc += w1[i * 6 + j] * h[j];
            }
            out[i] = acc;
        }
        let got = mlp.forward(&x).unwrap();
        for (a, b) in got.iter().zip(out.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // the tape path agrees with the vector path
        let mut tape = Tape::new();
        let mut bind = Bindings::default();
        let xv = tape.constant(Array2::from_shape_vec((1, 4), x.to_vec()).unwrap());
        let y = mlp.forward_tape(&mut tape, &mut bind, "m", xv);
        for (a, b) in tape.value(y).iter().zip(out.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mlp = Mlp::new(&[2, 2], &mut seeded(4)).unwrap();
        assert!(matches!(mlp.forward(&[1.0]), Err(Error::InvalidShape(_))));
    }
}
