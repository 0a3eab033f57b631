//! Log-domain sum-product detection on the FFG and UFG.
//!
//! Every factor is tabulated over the joint alphabet of its neighbours
//! (virtual VNs have the single value 0). One iteration computes all
//! FN→VN messages, then all VN→FN messages. Damping blends each freshly
//! computed message with its previous value,
//! `m ← d·m_new + (1−d)·m_old`; a message's first computation is taken
//! undamped.

use num_complex::Complex64;

use super::max_star::max_star2;
use crate::channel::{Cir, Constellation, UfgStatistics};
use crate::error::{Error, Result};
use crate::graphs::{build_ffg, build_ufg, BipartiteGraph};
use crate::llr::{LlrRole, LlrVector};

/// A normalized message whose spread exceeds this value could no longer be
/// represented as a probability vector in `f64` (`ln f64::MAX ≈ 709.8`).
pub const OVERFLOW_SPREAD: f64 = 700.0;

/// Growth factor of the LLR change that marks a non-contracting iteration.
pub const NON_CONTRACTION_GROWTH: f64 = 2.0;

/// LLR changes at or below this are rounding noise of a converged fixed
/// point and never count as growth.
pub const CONVERGED_CHANGE: f64 = 1e-9;

/// Default cap on factor-table entries per FN.
pub const DEFAULT_TABLE_BUDGET: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaOptions {
    pub damping: f64,
    pub iterations: usize,
}

impl Default for SpaOptions {
    fn default() -> Self {
        Self {
            damping: 1.0,
            iterations: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpaOutput {
    /// Total LLRs after each completed, non-diverged iteration.
    pub llrs_per_iteration: Vec<LlrVector>,
    /// 1-based iteration at which messages overflowed or the updates
    /// stopped contracting.
    pub diverged_at: Option<usize>,
    /// Largest normalized message spread seen in each iteration.
    pub spread_per_iteration: Vec<f64>,
    /// `max_i |ℓ_t,i − ℓ_{t−1},i|` for iterations `t ≥ 2`.
    pub change_per_iteration: Vec<f64>,
    /// Number of bits whose hard decision flipped in both of the last two
    /// iterations, for iterations `t ≥ 3`.
    pub toggles_per_iteration: Vec<usize>,
}

impl SpaOutput {
    pub fn last(&self) -> Option<&LlrVector> {
        self.llrs_per_iteration.last()
    }
}

/// Factor graph with tabulated log-factors and per-VN local potentials.
pub struct TabulatedGraph<'g> {
    pub graph: &'g BipartiteGraph,
    /// Alphabet size per VN.
    pub alphabet: Vec<usize>,
    /// Local log-potential per VN (priors, UFG self terms).
    pub local: Vec<Vec<f64>>,
    /// Per FN: table over neighbour labels, first neighbour most significant.
    pub tables: Vec<Vec<f64>>,
}

/// Iterations a period-2 cycle must persist before it is flagged.
const CYCLE_PERSISTENCE: usize = 3;

/// The fixed-point iteration has stopped contracting. Either the
/// per-iteration LLR change grew twice in a row and is at least
/// `NON_CONTRACTION_GROWTH` times the smallest change seen so far, or hard
/// decisions have toggled back and forth for `CYCLE_PERSISTENCE`
/// iterations while the change stayed at its largest value so far.
fn non_contracting(changes: &[f64], toggles: &[usize]) -> bool {
    let n = changes.len();
    if n < 3 {
        return false;
    }
    let (a, b, c) = (changes[n - 3], changes[n - 2], changes[n - 1]);
    let best = changes.iter().copied().fold(f64::INFINITY, f64::min);
    let worst = changes.iter().copied().fold(0.0, f64::max);
    let growing = a < b && b < c && c > NON_CONTRACTION_GROWTH * best && c > CONVERGED_CHANGE;
    let t = toggles.len();
    let cycling = t >= CYCLE_PERSISTENCE
        && toggles[t - CYCLE_PERSISTENCE..].iter().all(|&k| k > 0)
        && changes[n - CYCLE_PERSISTENCE..].iter().all(|&d| d >= 0.99 * worst);
    growing || cycling
}

fn normalize(v: &mut [f64]) -> f64 {
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mn = v.iter().copied().fold(f64::INFINITY, f64::min);
    if mx.is_finite() {
        v.iter_mut().for_each(|x| *x -= mx);
    }
    mx - mn
}

fn blend(old: &mut [f64], new: &[f64], damping: f64, first: bool) {
    if first || damping >= 1.0 {
        old.copy_from_slice(new);
    } else {
        for (o, n) in old.iter_mut().zip(new) {
            *o = damping * n + (1.0 - damping) * *o;
        }
    }
}

impl TabulatedGraph<'_> {
    /// Runs flooding SPA and returns bit LLRs of the readout VNs.
    pub fn run(&self, constellation: &Constellation, options: SpaOptions) -> Result<SpaOutput> {
        if !(options.damping > 0.0 && options.damping <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "damping must lie in (0, 1], got {}",
                options.damping
            )));
        }
        let g = self.graph;
        let ne = g.num_edges();
        let mut f2v: Vec<Vec<f64>> = (0..ne).map(|e| vec![0.0; self.alphabet[g.edges[e].vn]]).collect();
        let mut v2f: Vec<Vec<f64>> = (0..ne).map(|e| self.local[g.edges[e].vn].clone()).collect();
        for m in &mut v2f {
            normalize(m);
        }
        let mut out = SpaOutput {
            llrs_per_iteration: Vec::with_capacity(options.iterations),
            diverged_at: None,
            spread_per_iteration: Vec::with_capacity(options.iterations),
            change_per_iteration: Vec::with_capacity(options.iterations),
            toggles_per_iteration: Vec::with_capacity(options.iterations),
        };
        let mut prev_llrs: Option<Vec<f64>> = None;
        let mut prev2_llrs: Option<Vec<f64>> = None;
        let mut scratch: Vec<Vec<f64>> = Vec::new();
        let mut digits = Vec::new();
        for it in 0..options.iterations {
            let first = it == 0;
            let mut spread: f64 = 0.0;
            for f in 0..g.num_fn {
                let edges = &g.fn_edges[f];
                let dims: Vec<usize> = edges.iter().map(|&e| self.alphabet[g.edges[e].vn]).collect();
                scratch.resize(edges.len(), Vec::new());
                for (k, &d) in dims.iter().enumerate() {
                    scratch[k].clear();
                    scratch[k].resize(d, f64::NEG_INFINITY);
                }
                digits.clear();
                digits.resize(edges.len(), 0usize);
                for &t in self.tables[f].iter() {
                    let incoming: f64 = edges.iter().zip(&digits).map(|(&e, &a)| v2f[e][a]).sum();
                    let total = t + incoming;
                    for (k, (&e, &a)) in edges.iter().zip(&digits).enumerate() {
                        scratch[k][a] = max_star2(scratch[k][a], total - v2f[e][a]);
                    }
                    // advance mixed-radix counter, last neighbour fastest
                    for k in (0..digits.len()).rev() {
                        digits[k] += 1;
                        if digits[k] < dims[k] {
                            break;
                        }
                        digits[k] = 0;
                    }
                }
                for (k, &e) in edges.iter().enumerate() {
                    spread = spread.max(normalize(&mut scratch[k]));
                    blend(&mut f2v[e], &scratch[k], options.damping, first);
                }
            }
            let mut beliefs = Vec::with_capacity(g.num_vn);
            for v in 0..g.num_vn {
                let mut b = self.local[v].clone();
                for &e in &g.vn_edges[v] {
                    for (x, m) in b.iter_mut().zip(&f2v[e]) {
                        *x += m;
                    }
                }
                for &e in &g.vn_edges[v] {
                    let mut msg: Vec<f64> = b.iter().zip(&f2v[e]).map(|(x, m)| x - m).collect();
                    spread = spread.max(normalize(&mut msg));
                    blend(&mut v2f[e], &msg, options.damping, first);
                }
                beliefs.push(b);
            }
            out.spread_per_iteration.push(spread);
            let mut llrs = Vec::with_capacity(g.readout_vns.len() * constellation.bits_per_symbol());
            for &v in &g.readout_vns {
                constellation.symbol_metrics_to_bit_llrs(&beliefs[v], &mut llrs);
            }
            if let Some(prev) = &prev_llrs {
                let delta = llrs
                    .iter()
                    .zip(prev)
                    .map(|(a, b): (&f64, &f64)| (a - b).abs())
                    .fold(0.0, f64::max);
                out.change_per_iteration.push(delta);
                if let Some(prev2) = &prev2_llrs {
                    let toggles = llrs
                        .iter()
                        .zip(prev)
                        .zip(prev2)
                        .filter(|((a, b), c)| (**a < 0.0) != (**b < 0.0) && (**b < 0.0) != (**c < 0.0))
                        .count();
                    out.toggles_per_iteration.push(toggles);
                }
            }
            prev2_llrs = prev_llrs.take();
            prev_llrs = Some(llrs.clone());
            let overflow = !spread.is_finite() || spread > OVERFLOW_SPREAD;
            let stalled = non_contracting(&out.change_per_iteration, &out.toggles_per_iteration);
            if out.diverged_at.is_none() && (overflow || stalled) {
                out.diverged_at = Some(it + 1);
            }
            if overflow {
                break;
            }
            out.llrs_per_iteration.push(LlrVector::new(llrs, LlrRole::Total));
        }
        Ok(out)
    }
}

fn check_priors(prior: Option<&[f64]>, n: usize, bps: usize) -> Result<()> {
    match prior {
        Some(p) if p.len() != n * bps => Err(Error::InvalidLength(format!(
            "expected {} prior LLRs, got {}",
            n * bps,
            p.len()
        ))),
        _ => Ok(()),
    }
}

fn payload_local(constellation: &Constellation, prior: Option<&[f64]>, i: usize) -> Vec<f64> {
    let bps = constellation.bits_per_symbol();
    match prior {
        Some(p) => constellation.symbol_log_priors(&p[i * bps..(i + 1) * bps]),
        None => vec![0.0; constellation.order()],
    }
}

/// SPA on the Forney factor graph of `y`.
pub fn spa_detect_ffg(
    y: &[Complex64],
    cir: &Cir,
    sigma2: f64,
    constellation: &Constellation,
    options: SpaOptions,
    prior_llrs: Option<&[f64]>,
) -> Result<SpaOutput> {
    let l = cir.memory();
    if y.len() <= l {
        return Err(Error::InvalidLength("observation shorter than channel memory".into()));
    }
    let n = y.len() - l;
    let m = constellation.order();
    let bps = constellation.bits_per_symbol();
    check_priors(prior_llrs, n, bps)?;
    let entries = (m as f64).powi(l as i32 + 1);
    if entries > DEFAULT_TABLE_BUDGET as f64 {
        return Err(Error::BudgetExceeded(format!("FFG factor table of {entries:.0} entries")));
    }
    let graph = build_ffg(n, l)?;
    let alphabet: Vec<usize> = (0..graph.num_vn).map(|v| if graph.is_virtual(v) { 1 } else { m }).collect();
    let local: Vec<Vec<f64>> = (0..graph.num_vn)
        .map(|v| {
            if graph.is_virtual(v) {
                vec![0.0]
            } else {
                payload_local(constellation, prior_llrs, v - l)
            }
        })
        .collect();
    let inv = 1.0 / sigma2.max(1e-12);
    let points = constellation.points();
    let taps = cir.taps();
    let tables = (0..graph.num_fn)
        .map(|f| {
            let edges = &graph.fn_edges[f];
            let dims: Vec<usize> = edges.iter().map(|&e| alphabet[graph.edges[e].vn]).collect();
            let size: usize = dims.iter().product();
            let mut table = Vec::with_capacity(size);
            let mut digits = vec![0usize; edges.len()];
            for _ in 0..size {
                let mut mean = Complex64::new(0.0, 0.0);
                for (k, &e) in edges.iter().enumerate() {
                    let edge = graph.edges[e];
                    if !graph.is_virtual(edge.vn) {
                        mean += taps[edge.edge_type] * points[digits[k]];
                    }
                }
                table.push(-(y[f] - mean).norm_sqr() * inv);
                for k in (0..digits.len()).rev() {
                    digits[k] += 1;
                    if digits[k] < dims[k] {
                        break;
                    }
                    digits[k] = 0;
                }
            }
            table
        })
        .collect();
    TabulatedGraph {
        graph: &graph,
        alphabet,
        local,
        tables,
    }
    .run(constellation, options)
}

/// SPA on the Ungerboeck factor graph built from `(G, χ)`.
pub fn spa_detect_ufg(
    stats: &UfgStatistics,
    memory: usize,
    sigma2: f64,
    constellation: &Constellation,
    options: SpaOptions,
    prior_llrs: Option<&[f64]>,
) -> Result<SpaOutput> {
    let total = stats.matched.len();
    if total < 2 * memory + 1 {
        return Err(Error::InvalidLength("UFG statistics shorter than channel memory".into()));
    }
    let n = total - 2 * memory;
    let m = constellation.order();
    check_priors(prior_llrs, n, constellation.bits_per_symbol())?;
    let graph = build_ufg(n, memory)?;
    let inv = 1.0 / sigma2.max(1e-12);
    let points = constellation.points();
    let local: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let k = i + memory;
            let chi = stats.matched[k];
            let gii = stats.gram[(k, k)].re;
            let prior = payload_local(constellation, prior_llrs, i);
            points
                .iter()
                .zip(prior)
                .map(|(x, p)| (2.0 * (x.conj() * chi).re - gii * x.norm_sqr()) * inv + p)
                .collect()
        })
        .collect();
    let tables = (0..graph.num_fn)
        .map(|f| {
            let e = &graph.fn_edges[f];
            let (i, j) = (graph.edges[e[0]].vn + memory, graph.edges[e[1]].vn + memory);
            let gij = stats.gram[(i, j)];
            let mut t = Vec::with_capacity(m * m);
            for a in points {
                for b in points {
                    t.push(-2.0 * (a.conj() * gij * b).re * inv);
                }
            }
            t
        })
        .collect();
    TabulatedGraph {
        graph: &graph,
        alphabet: vec![m; n],
        local,
        tables,
    }
    .run(constellation, options)
}
