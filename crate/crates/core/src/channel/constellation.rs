use num_complex::Complex64;

use crate::classical::max_star::max_star;
use crate::error::{Error, Result};

/// Unit-energy Gray-labelled signal set.
///
/// `points[k]` carries the label `k` written MSB-first on `bits_per_symbol`
/// bits. Square QAM uses the first half of the label for the in-phase axis
/// and the second half for quadrature; BPSK maps bit `b` to `1 - 2b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    order: usize,
    bits_per_symbol: usize,
    points: Vec<Complex64>,
    real_valued: bool,
}

fn gray_to_binary(mut g: usize) -> usize {
    let mut b = 0;
    while g != 0 {
        b ^= g;
        g >>= 1;
    }
    b
}

/// Unnormalized Gray PAM amplitude for label `label` on `bits` bits; label 0
/// maps to the largest positive level.
fn pam_level(label: usize, bits: usize) -> f64 {
    let levels = 1usize << bits;
    let k = gray_to_binary(label);
    ((levels - 1) as f64) - 2.0 * k as f64
}

impl Constellation {
    pub fn bpsk() -> Self {
        Self::pam(2).expect("valid order")
    }

    /// Real `M`-PAM with Gray labels.
    pub fn pam(order: usize) -> Result<Self> {
        let bits = Self::check_order(order)?;
        let raw: Vec<f64> = (0..order).map(|k| pam_level(k, bits)).collect();
        let energy = raw.iter().map(|a| a * a).sum::<f64>() / order as f64;
        let scale = energy.sqrt().recip();
        Ok(Self {
            order,
            bits_per_symbol: bits,
            points: raw.iter().map(|&a| Complex64::new(a * scale, 0.0)).collect(),
            real_valued: true,
        })
    }

    /// Square `M`-QAM (M = 4, 16, 64, ...) with per-axis Gray labels.
    pub fn qam(order: usize) -> Result<Self> {
        let bits = Self::check_order(order)?;
        if bits % 2 != 0 {
            return Err(Error::Unsupported(format!("{order}-QAM is not square")));
        }
        let half = bits / 2;
        let mask = (1 << half) - 1;
        let raw: Vec<Complex64> = (0..order)
            .map(|k| Complex64::new(pam_level(k >> half, half), pam_level(k & mask, half)))
            .collect();
        let energy = raw.iter().map(|a| a.norm_sqr()).sum::<f64>() / order as f64;
        let scale = energy.sqrt().recip();
        Ok(Self {
            order,
            bits_per_symbol: bits,
            points: raw.iter().map(|&a| a * scale).collect(),
            real_valued: false,
        })
    }

    /// BPSK for `M = 2`, square QAM otherwise.
    pub fn for_order(order: usize) -> Result<Self> {
        if order == 2 {
            Ok(Self::bpsk())
        } else {
            Self::qam(order)
        }
    }

    fn check_order(order: usize) -> Result<usize> {
        if order < 2 || !order.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "constellation order must be a power of two ≥ 2, got {order}"
            )));
        }
        Ok(order.trailing_zeros() as usize)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn is_real(&self) -> bool {
        self.real_valued
    }

    /// Bit `k` (MSB first) of the label of point `index`.
    pub fn bit(&self, index: usize, k: usize) -> u8 {
        ((index >> (self.bits_per_symbol - 1 - k)) & 1) as u8
    }

    pub fn label_of(&self, bits: &[u8]) -> usize {
        bits.iter().fold(0, |acc, &b| (acc << 1) | (b as usize & 1))
    }

    pub fn modulate(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        if !bits.len().is_multiple_of(self.bits_per_symbol) {
            return Err(Error::InvalidLength(format!(
                "{} bits do not fill whole {}-bit symbols",
                bits.len(),
                self.bits_per_symbol
            )));
        }
        Ok(bits
            .chunks(self.bits_per_symbol)
            .map(|c| self.points[self.label_of(c)])
            .collect())
    }

    /// Log-priors of every symbol from per-bit prior LLRs (positive favors 0),
    /// up to a common additive constant.
    pub fn symbol_log_priors(&self, bit_llrs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(bit_llrs.len(), self.bits_per_symbol);
        (0..self.order)
            .map(|s| {
                (0..self.bits_per_symbol)
                    .map(|k| {
                        let half = 0.5 * bit_llrs[k];
                        if self.bit(s, k) == 0 {
                            half
                        } else {
                            -half
                        }
                    })
                    .sum()
            })
            .collect()
    }

    /// Bit LLRs from symbol log-metrics via exact max* marginalization.
    pub fn symbol_metrics_to_bit_llrs(&self, metrics: &[f64], out: &mut Vec<f64>) {
        let mut zero = Vec::with_capacity(self.order / 2);
        let mut one = Vec::with_capacity(self.order / 2);
        for k in 0..self.bits_per_symbol {
            zero.clear();
            one.clear();
            for (s, &m) in metrics.iter().enumerate() {
                if self.bit(s, k) == 0 {
                    zero.push(m);
                } else {
                    one.push(m);
                }
            }
            out.push(max_star(&zero).expect("non-empty") - max_star(&one).expect("non-empty"));
        }
    }

    /// Exact bit LLRs of a memoryless channel `z = a + n`, `n ~ CN(0, noise_var)`.
    pub fn demap(&self, z: Complex64, noise_var: f64, prior_llrs: Option<&[f64]>) -> Vec<f64> {
        let priors = prior_llrs.map(|p| self.symbol_log_priors(p));
        let metrics: Vec<f64> = self
            .points
            .iter()
            .enumerate()
            .map(|(s, a)| -(z - a).norm_sqr() / noise_var + priors.as_ref().map_or(0.0, |p| p[s]))
            .collect();
        let mut out = Vec::with_capacity(self.bits_per_symbol);
        self.symbol_metrics_to_bit_llrs(&metrics, &mut out);
        out
    }

    /// Nearest point label (hard decision).
    pub fn nearest(&self, z: Complex64) -> usize {
        self.points
            .iter()
            .enumerate()
            .min_by(|a, b| (z - a.1).norm_sqr().total_cmp(&(z - b.1).norm_sqr()))
            .map(|(k, _)| k)
            .expect("non-empty constellation")
    }

    pub fn label_bits(&self, index: usize) -> impl Iterator<Item = u8> + '_ {
        (0..self.bits_per_symbol).map(move |k| self.bit(index, k))
    }
}
