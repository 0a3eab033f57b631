//! Graph neural network detection and joint detection-decoding.
//!
//! Node states live on a [`Tape`](crate::neural_core::Tape) as row-stacked
//! matrices, one row per node and frame. Training runs [`forward`] on one
//! tape and differentiates through every iteration; inference uses
//! [`infer`], which keeps only the states between iterations.

mod embed;
mod forward;
mod params;

pub use embed::{
    cct_filter, cct_target, embed_llr, embed_tape, frame_features, ufg_local_metrics, BatchFeatures, CctOutput,
    Frame, FrameFeatures,
};
pub use forward::{forward, infer, GnnState, GraphIndex, Schedule, ScheduleKind, Session};
pub use params::{
    ClassWeights, EmbeddingKind, EmbeddingParams, GnnConfig, GnnParameters, ModelKind, DEFAULT_LLR_BUDGET,
};

use crate::error::Result;
use crate::graphs::BipartiteGraph;
use crate::llr::{LlrRole, LlrVector};
use crate::neural_core::Tensor;

/// Splits stacked logits `(batch · readout) × k` into per-frame LLR vectors.
pub fn split_logits(logits: &Tensor, batch: usize) -> Vec<LlrVector> {
    let flat = logits.as_slice().expect("standard layout");
    let per = flat.len() / batch.max(1);
    flat.chunks(per.max(1))
        .map(|c| LlrVector::new(c.to_vec(), LlrRole::Total))
        .collect()
}

/// Batched inference; `out[frame][iteration]`.
pub fn detect_batch(
    params: &GnnParameters,
    graph: &BipartiteGraph,
    frames: &[Frame],
    schedule: &Schedule,
) -> Result<Vec<Vec<LlrVector>>> {
    let feats = frames
        .iter()
        .map(|f| frame_features(&params.config, f))
        .collect::<Result<Vec<_>>>()?;
    let batch = BatchFeatures::new(&feats)?;
    let index = GraphIndex::new(graph, frames.len())?;
    let per_step = infer(params, &index, &batch, schedule)?;
    let mut out: Vec<Vec<LlrVector>> = vec![Vec::with_capacity(per_step.len()); frames.len()];
    for logits in &per_step {
        for (b, llr) in split_logits(logits, frames.len()).into_iter().enumerate() {
            out[b].push(llr);
        }
    }
    Ok(out)
}

/// Detection on a FFG/UFG: total LLRs after each of `iterations`.
pub fn gnn_detect(
    params: &GnnParameters,
    graph: &BipartiteGraph,
    frame: &Frame,
    iterations: usize,
) -> Result<Vec<LlrVector>> {
    let mut out = detect_batch(params, graph, std::slice::from_ref(frame), &Schedule::flooding(iterations))?;
    Ok(out.remove(0))
}

/// Joint detection-decoding on a graph from
/// [`build_joint`](crate::graphs::build_joint): code-bit LLRs in codeword
/// order after every scheduled iteration.
pub fn jdd_infer(
    params: &GnnParameters,
    joint: &BipartiteGraph,
    frame: &Frame,
    schedule: &Schedule,
) -> Result<Vec<LlrVector>> {
    let mut out = detect_batch(params, joint, std::slice::from_ref(frame), schedule)?;
    Ok(out.remove(0))
}

#[cfg(test)]
mod tests;
