use std::collections::BTreeMap;

use super::tape::{Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Anything that owns named trainable tensors.
///
/// `visit` and `visit_mut` must enumerate the same names in the same order.
pub trait Parameterized {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor));

    fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, t| out.push((name.to_string(), t.clone())));
        out
    }

    fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.len());
        n
    }

    /// Overwrites every parameter from `source`; names and shapes must match.
    fn load_named(&mut self, source: &BTreeMap<String, Tensor>) -> Result<()> {
        let mut err = None;
        self.visit_mut("", &mut |name, t| {
            if err.is_some() {
                return;
            }
            match source.get(name) {
                Some(src) if src.dim() == t.dim() => t.assign(src),
                Some(src) => {
                    err = Some(Error::Checkpoint(format!(
                        "shape mismatch for `{name}`: expected {:?}, found {:?}",
                        t.dim(),
                        src.dim()
                    )))
                }
                None => err = Some(Error::Checkpoint(format!("missing parameter `{name}`"))),
            }
        });
        err.map_or(Ok(()), Err)
    }
}

/// Joins a prefix and a local name with a dot.
pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Maps parameter names to tape leaves during one forward pass.
#[derive(Default)]
pub struct Bindings {
    vars: BTreeMap<String, Var>,
}

impl Bindings {
    /// Returns the leaf for `name`, creating it on first use.
    pub fn bind(&mut self, tape: &mut Tape, name: &str, value: &Tensor) -> Var {
        if let Some(&v) = self.vars.get(name) {
            return v;
        }
        let v = tape.param(value.clone());
        self.vars.insert(name.to_string(), v);
        v
    }

    pub fn get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    /// Builds the gradient record for `params`; parameters that were never
    /// bound (unreachable from the loss) get zero gradients.
    pub fn collect<P: Parameterized + ?Sized>(
        &self,
        params: &P,
        loss_value: f64,
        grads: &mut Gradients,
    ) -> GradientRecord {
        let mut out = BTreeMap::new();
        params.visit("", &mut |name, t| {
            let g = self
                .vars
                .get(name)
                .and_then(|&v| grads.take(v))
                .unwrap_or_else(|| Tensor::zeros(t.dim()));
            out.insert(name.to_string(), g);
        });
        GradientRecord {
            loss_value,
            gradients: out,
        }
    }
}

/// Loss value plus one gradient per trainable parameter, shape-matched.
#[derive(Clone, Debug, Default)]
pub struct GradientRecord {
    pub loss_value: f64,
    pub gradients: BTreeMap<String, Tensor>,
}

impl GradientRecord {
    /// Element-wise sum of records with identical keys, in the given order.
    pub fn sum(records: Vec<GradientRecord>) -> GradientRecord {
        let mut iter = records.into_iter();
        let Some(mut acc) = iter.next() else {
            return GradientRecord::default();
        };
        for r in iter {
            acc.loss_value += r.loss_value;
            for (name, g) in r.gradients {
                match acc.gradients.get_mut(&name) {
                    Some(a) => *a += &g,
                    None => {
                        acc.gradients.insert(name, g);
                    }
                }
            }
        }
        acc
    }

    pub fn is_finite(&self) -> bool {
        self.loss_value.is_finite() && self.gradients.values().all(|g| g.iter().all(|v| v.is_finite()))
    }
}
