use std::collections::HashSet;

use rand::Rng;

use super::{load_alist, ParityCheckMatrix};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Column weight of the information part of generated codes.
const INFO_COLUMN_WEIGHT: usize = 3;

/// Generates an `(n, k)` code `H = [A | B]` with a dual-diagonal parity part
/// `B` (the accumulator structure of 5G base graphs) and a column-weight-3
/// information part `A` with balanced row degrees. Length-4 cycles are
/// avoided whenever the greedy placement allows it.
#[allow(clippy::needless_range_loop)]
pub fn stand_in_code(n: usize, k: usize, seed: u64) -> Result<ParityCheckMatrix> {
    if k == 0 || k >= n {
        return Err(Error::InvalidConfig(format!("need 0 < k < n, got n={n}, k={k}")));
    }
    let m = n - k;
    let weight = INFO_COLUMN_WEIGHT.min(m);
    let mut rng = seeded(seed);
    let mut degree = vec![0usize; m];
    let mut pairs: HashSet<(usize, usize)> = HashSet::new();
    let mut entries = Vec::new();
    for j in 0..m {
        entries.push((j, k + j));
        if j + 1 < m {
            entries.push((j + 1, k + j));
            pairs.insert((j, j + 1));
            degree[j] += 1;
        }
        degree[j] += 1;
    }
    for c in 0..k {
        let mut chosen: Vec<usize> = Vec::with_capacity(weight);
        while chosen.len() < weight {
            let key = |r: usize, rng: &mut rand_chacha::ChaCha8Rng| (degree[r], rng.random::<u32>());
            let mut best: Option<((usize, u32), usize)> = None;
            let mut best_any: Option<((usize, u32), usize)> = None;
            for r in 0..m {
                if chosen.contains(&r) {
                    continue;
                }
                let kr = key(r, &mut rng);
                if best_any.is_none_or(|(b, _)| kr < b) {
                    best_any = Some((kr, r));
                }
                let clean = chosen.iter().all(|&q| !pairs.contains(&(q.min(r), q.max(r))));
                if clean && best.is_none_or(|(b, _)| kr < b) {
                    best = Some((kr, r));
                }
            }
            let r = best.or(best_any).expect("weight ≤ m").1;
            chosen.push(r);
        }
        for (i, &a) in chosen.iter().enumerate() {
            degree[a] += 1;
            entries.push((a, c));
            for &b in &chosen[i + 1..] {
                pairs.insert((a.min(b), a.max(b)));
            }
        }
    }
    ParityCheckMatrix::from_entries(m, n, &entries)
}

/// Codes shipped under `data/codes/`, generated by [`stand_in_code`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShippedCode {
    /// (132, 66)
    Short,
    /// (4608, 4032)
    HighRate,
    /// (25344, 8448)
    LowRate,
}

impl ShippedCode {
    pub const ALL: [ShippedCode; 3] = [ShippedCode::Short, ShippedCode::HighRate, ShippedCode::LowRate];

    pub fn name(self) -> &'static str {
        match self {
            ShippedCode::Short => "ldpc-132-66",
            ShippedCode::HighRate => "ldpc-4608-4032",
            ShippedCode::LowRate => "ldpc-25344-8448",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn dimensions(self) -> (usize, usize) {
        match self {
            ShippedCode::Short => (132, 66),
            ShippedCode::HighRate => (4608, 4032),
            ShippedCode::LowRate => (25344, 8448),
        }
    }

    pub fn generator_seed(self) -> u64 {
        match self {
            ShippedCode::Short => 132,
            ShippedCode::HighRate => 4608,
            ShippedCode::LowRate => 25344,
        }
    }

    pub fn alist_text(self) -> &'static str {
        match self {
            ShippedCode::Short => include_str!("../../data/codes/ldpc-132-66.alist"),
            ShippedCode::HighRate => include_str!("../../data/codes/ldpc-4608-4032.alist"),
            ShippedCode::LowRate => include_str!("../../data/codes/ldpc-25344-8448.alist"),
        }
    }
}

pub fn shipped_code(code: ShippedCode) -> Result<ParityCheckMatrix> {
    load_alist(code.alist_text())
}
