//! Central finite-difference validation of analytic gradients.

use super::params::{GradientRecord, Parameterized};

/// Magnitude below which gradient entries are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Relative gap between the one-sided slopes that marks a kink (a ReLU
/// corner inside `[x − h, x + h]`).
pub const KINK_SLOPE_GAP: f64 = 1e-3;

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Worst error over entries where the loss is smooth within `±h`.
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst smooth entry.
    pub worst: Option<(String, usize)>,
    /// Entries with a kink within `±h`.
    pub kinks: usize,
    /// Worst error at a kink, against the closest of the central and the
    /// two one-sided differences.
    pub max_kink_error: f64,
}

/// `|a − n| / max(|a|, |n|, RELATIVE_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares `analytic` against `(loss(p + h e_i) − loss(p − h e_i)) / 2h`
/// for every entry of every parameter, or for `stride`-spaced entries when
/// a tensor is larger than `max_per_tensor`. Entries whose one-sided
/// slopes differ by more than [`KINK_SLOPE_GAP`] are reported as kinks.
pub fn gradient_check<P, F>(params: &P, loss: F, analytic: &GradientRecord, step: f64, max_per_tensor: usize) -> GradCheckReport
where
    P: Parameterized + Clone,
    F: Fn(&P) -> f64,
{
    let mut report = GradCheckReport::default();
    let f0 = loss(params);
    let names: Vec<(String, usize)> = params
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.len()))
        .collect();
    for (name, len) in names {
        let grad = &analytic.gradients[&name];
        let stride = len.div_ceil(max_per_tensor.max(1)).max(1);
        for i in (0..len).step_by(stride) {
            let eval = |delta: f64| {
                let mut p = params.clone();
                p.visit_mut("", &mut |n, t| {
                    if n == name {
                        t.as_slice_mut().expect("standard layout")[i] += delta;
                    }
                });
                loss(&p)
            };
            let (up, down) = (eval(step), eval(-step));
            let numeric = (up - down) / (2.0 * step);
            let a = grad.as_slice().expect("standard layout")[i];
            let err = relative_error(a, numeric);
            report.checked += 1;
            let (right, left) = ((up - f0) / step, (f0 - down) / step);
            if err > 0.0 && relative_error(right, left) > KINK_SLOPE_GAP {
                report.kinks += 1;
                let e = err.min(relative_error(a, right)).min(relative_error(a, left));
                report.max_kink_error = report.max_kink_error.max(e);
                continue;
            }
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = err;
                report.worst = Some((name.clone(), i));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural_core::{Bindings, Mlp, Parameterized, Tape, Tensor};
    use crate::rng::seeded;
    use std::sync::Arc;

    #[test]
    fn mlp_gradients_match_over_seeds() {
        for seed in 0..3 {
            let mut mlp = Mlp::new(&[3, 6, 6, 2], &mut seeded(seed)).unwrap();
            // move zero biases off the ReLU kink
            mlp.visit_mut("", &mut |name, t| {
                if name.starts_with('b') {
                    t.mapv_inplace(|v| v + 0.05);
                }
            });
            let x = Tensor::from_shape_fn((5, 3), |(r, c)| ((r * 3 + c) as f64 * 0.37 + seed as f64).sin());
            let targets = Arc::new(vec![0u8, 1, 1, 0, 1, 0, 0, 1, 1, 1]);
            let run = |m: &Mlp, tape: &mut Tape, bind: &mut Bindings| {
                let xv = tape.constant(x.clone());
                let y = m.forward_tape(tape, bind, "", xv);
                tape.bce_logits(y, targets.clone(), 0.1)
            };
            let mut tape = Tape::new();
            let mut bind = Bindings::default();
            let l = run(&mlp, &mut tape, &mut bind);
            let mut g = tape.backward(l);
            let record = bind.collect(&mlp, tape.value(l)[(0, 0)], &mut g);
            let loss = |m: &Mlp| {
                let mut t = Tape::new();
                let mut b = Bindings::default();
                let l = run(m, &mut t, &mut b);
                t.value(l)[(0, 0)]
            };
            let rep = gradient_check(&mlp, loss, &record, 1e-6, usize::MAX);
            assert!(rep.max_relative_error < 1e-4, "{rep:?}");
            assert_eq!(rep.checked, mlp.num_parameters());
        }
    }

    #[derive(Clone)]
    struct Scalar(Tensor);

    impl Parameterized for Scalar {
        fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
            f(&crate::neural_core::params::join(prefix, "x"), &self.0);
        }

        fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
            f(&crate::neural_core::params::join(prefix, "x"), &mut self.0);
        }
    }

    #[test]
    fn relu_corner_is_reported_as_kink() {
        let relu = |p: &Scalar| p.0[(0, 0)].max(0.0);
        let record = |g: f64| crate::neural_core::GradientRecord {
            loss_value: 0.0,
            gradients: [("x".to_string(), Tensor::from_elem((1, 1), g))].into(),
        };
        let at_corner = Scalar(Tensor::from_elem((1, 1), 2e-6));
        let rep = gradient_check(&at_corner, relu, &record(1.0), 1e-5, 1);
        assert_eq!(rep.kinks, 1);
        assert!(rep.max_kink_error < 1e-9, "{rep:?}");
        let wrong = gradient_check(&at_corner, relu, &record(-0.5), 1e-5, 1);
        assert!(wrong.max_kink_error > 1.0, "{wrong:?}");
        let smooth = gradient_check(&Scalar(Tensor::from_elem((1, 1), 0.5)), relu, &record(1.0), 1e-5, 1);
        assert_eq!((smooth.kinks, smooth.checked), (0, 1));
    }
}
