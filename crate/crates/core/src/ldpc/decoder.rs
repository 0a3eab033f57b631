use super::ParityCheckMatrix;
use crate::error::{Error, Result};
use crate::llr::{saturate, LlrRole, LlrVector, LLR_MAX};

/// Result of one BP decode.
#[derive(Clone, Debug)]
pub struct DecodeOutput {
    /// A-posteriori LLRs (role total).
    pub posterior: LlrVector,
    /// Sum of the check messages into each bit, formed before the
    /// posterior is saturated.
    pub extrinsic: LlrVector,
    pub hard: Vec<u8>,
    pub converged: bool,
    pub iterations: usize,
}

const TANH_LIMIT: f64 = 1.0 - 1e-15;

/// Exact check-node combination of two LLRs.
pub fn boxplus(a: f64, b: f64) -> f64 {
    let t = ((a / 2.0).tanh() * (b / 2.0).tanh()).clamp(-TANH_LIMIT, TANH_LIMIT);
    saturate(2.0 * t.atanh())
}

/// Flooding sum-product decoding with the tanh check rule.
///
/// Punctured positions must enter with LLR 0. At least one iteration is
/// always run; with `early_stop` the decoder halts on a zero syndrome.
pub fn spa_decode(
    pcm: &ParityCheckMatrix,
    channel_llrs: &[f64],
    max_iterations: usize,
    early_stop: bool,
) -> Result<DecodeOutput> {
    let n = pcm.cols();
    if channel_llrs.len() != n {
        return Err(Error::InvalidLength(format!(
            "decoder expects {n} LLRs, got {}",
            channel_llrs.len()
        )));
    }
    let iterations_cap = max_iterations.max(1);
    // Edges in row-major order; `col_edges` lists each column's edge ids.
    let mut edge_col = Vec::with_capacity(pcm.num_ones());
    let mut row_start = Vec::with_capacity(pcm.rows() + 1);
    for r in 0..pcm.rows() {
        row_start.push(edge_col.len());
        edge_col.extend_from_slice(pcm.row(r));
    }
    row_start.push(edge_col.len());
    let mut col_edges = vec![Vec::new(); n];
    for (e, &c) in edge_col.iter().enumerate() {
        col_edges[c].push(e);
    }

    let ch: Vec<f64> = channel_llrs.iter().map(|&v| saturate(v)).collect();
    let mut v2c: Vec<f64> = edge_col.iter().map(|&c| ch[c]).collect();
    let mut c2v = vec![0.0; edge_col.len()];
    let mut total = ch.clone();
    let mut ext = vec![0.0; n];
    let mut hard = vec![0u8; n];
    let mut converged = false;
    let mut used = 0;
    let mut tanh_buf = Vec::new();
    let mut prefix = Vec::new();

    for it in 0..iterations_cap {
        used = it + 1;
        for r in 0..pcm.rows() {
            let (s, e) = (row_start[r], row_start[r + 1]);
            tanh_buf.clear();
            tanh_buf.extend(v2c[s..e].iter().map(|&m| (m / 2.0).tanh()));
            prefix.clear();
            let mut acc = 1.0;
            for &t in &tanh_buf {
                prefix.push(acc);
                acc *= t;
            }
            let mut suffix = 1.0;
            for k in (0..tanh_buf.len()).rev() {
                let p = (prefix[k] * suffix).clamp(-TANH_LIMIT, TANH_LIMIT);
                c2v[s + k] = (2.0 * p.atanh()).clamp(-LLR_MAX, LLR_MAX);
                suffix *= tanh_buf[k];
            }
        }
        for c in 0..n {
            let x = col_edges[c].iter().map(|&e| c2v[e]).sum::<f64>();
            let t = ch[c] + x;
            ext[c] = x;
            total[c] = t;
            hard[c] = u8::from(t < 0.0);
            for &e in &col_edges[c] {
                v2c[e] = saturate(t - c2v[e]);
            }
        }
        if pcm.is_codeword(&hard) {
            converged = true;
            if early_stop {
                break;
            }
        } else {
            converged = false;
        }
    }
    Ok(DecodeOutput {
        posterior: LlrVector::new(total, LlrRole::Total),
        extrinsic: LlrVector::new(ext, LlrRole::Extrinsic),
        hard,
        converged,
        iterations: used,
    })
}
