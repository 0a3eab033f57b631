//! Detectors behind one interface, and the per-frame Monte-Carlo chain.

use isi_gnn::channel::{apply_isi, build_channel_matrix, perturb_csi, random_bits, ufg_statistics, Cir};
use isi_gnn::classical::{bcjr_detect, lmmse_detect, spa_detect_ffg, spa_detect_ufg, SpaOptions};
use isi_gnn::gnn::{detect_batch, Frame, GnnParameters, ModelKind, Schedule};
use isi_gnn::graphs::{BipartiteGraph, DetectionKind};
use isi_gnn::ldpc::spa_decode;
use isi_gnn::llr::saturate;
use isi_gnn::metrics::bmi_raw;
use isi_gnn::rng::SimRng;
use isi_gnn::training::{DetectionTask, JointTask};
use isi_gnn::Error;

use crate::config::{ExperimentConfig, NoisePoint, ReceiverKind};
use crate::error::{CliError, Result};

/// A configured detector.
pub struct Receiver<'a> {
    cfg: &'a ExperimentConfig,
    kind: ReceiverKind,
    iterations: usize,
    neural: Option<Neural>,
}

struct Neural {
    params: GnnParameters,
    graph: BipartiteGraph,
    schedule: Schedule,
}

/// What the receiver sees of one block.
pub struct Observation<'o> {
    pub y: &'o [num_complex::Complex64],
    pub sigma2: f64,
    pub cir: &'o Cir,
}

/// Receiver graph of the configured task.
pub fn neural_graph(cfg: &ExperimentConfig) -> Result<BipartiteGraph> {
    Ok(match (&cfg.code, cfg.detector.kind) {
        (Some(code), ReceiverKind::Jdd) => {
            JointTask::new(cfg.cir.clone(), code.pcm.clone(), code.interleaver.clone(), cfg.detector.graph)?.graph
        }
        _ => DetectionTask::new(cfg.cir.clone(), cfg.constellation.clone(), cfg.block_len, cfg.detector.graph)?.graph,
    })
}

impl<'a> Receiver<'a> {
    /// `iterations` overrides the configured SPA iterations or GNN schedule
    /// (as a flooding schedule). Neural kinds need `params`.
    pub fn new(
        cfg: &'a ExperimentConfig,
        kind: ReceiverKind,
        iterations: Option<usize>,
        params: Option<GnnParameters>,
    ) -> Result<Self> {
        let neural = if kind.is_neural() {
            let params = params.ok_or_else(|| CliError::Config("neural detector needs `detector.checkpoint`".into()))?;
            let schedule = match iterations {
                Some(it) => Schedule::flooding(it),
                None => cfg.detector.schedule.clone(),
            };
            Some(Neural {
                params,
                graph: neural_graph(cfg)?,
                schedule,
            })
        } else {
            None
        };
        Ok(Self {
            cfg,
            kind,
            iterations: iterations.unwrap_or(cfg.detector.iterations),
            neural,
        })
    }

    pub fn label(&self) -> String {
        let graph = match self.cfg.detector.graph {
            DetectionKind::Ffg => "ffg",
            DetectionKind::Ufg => "ufg",
        };
        let base = match (self.kind, &self.neural) {
            (ReceiverKind::Bcjr, _) => "bcjr".to_string(),
            (ReceiverKind::Lmmse, _) => "lmmse".to_string(),
            (ReceiverKind::Spa, _) => format!("spa-{graph}"),
            (ReceiverKind::Jdd, _) => "jdd".to_string(),
            (ReceiverKind::Gnn, Some(n)) if n.params.config.model == ModelKind::Fgnn => format!("fgnn-{graph}"),
            (ReceiverKind::Gnn, _) => format!("gnn-{graph}"),
        };
        match (&self.cfg.code, self.kind) {
            (None, _) | (_, ReceiverKind::Jdd) => base,
            (Some(_), _) if self.cfg.detector.turbo_iterations > 0 => {
                format!("{base}+ldpc-turbo{}", self.cfg.detector.turbo_iterations)
            }
            (Some(_), _) => format!("{base}+ldpc"),
        }
    }

    /// Total LLRs of one block and whether the detector diverged. A
    /// diverged GNN yields zero LLRs; a diverged SPA keeps its last stable
    /// iteration.
    pub fn detect(&self, obs: &Observation, prior: Option<&[f64]>) -> Result<(Vec<f64>, bool)> {
        let c = &self.cfg.constellation;
        let n = self.cfg.block_len;
        let options = SpaOptions {
            damping: self.cfg.detector.damping,
            iterations: self.iterations,
        };
        match self.kind {
            ReceiverKind::Bcjr => Ok((bcjr_detect(obs.y, obs.cir, obs.sigma2, c, prior)?.values, false)),
            ReceiverKind::Lmmse => {
                let h = build_channel_matrix(obs.cir, n)?;
                Ok((lmmse_detect(obs.y, &h, obs.sigma2, c)?.llrs.values, false))
            }
            ReceiverKind::Spa => {
                let out = match self.cfg.detector.graph {
                    DetectionKind::Ffg => spa_detect_ffg(obs.y, obs.cir, obs.sigma2, c, options, prior)?,
                    DetectionKind::Ufg => {
                        let stats = ufg_statistics(&build_channel_matrix(obs.cir, n)?, obs.y)?;
                        spa_detect_ufg(&stats, obs.cir.memory(), obs.sigma2, c, options, prior)?
                    }
                };
                let diverged = out.diverged_at.is_some();
                let llrs = out.last().map(|l| l.values.clone());
                Ok((llrs.unwrap_or_else(|| vec![0.0; n * c.bits_per_symbol()]), diverged))
            }
            ReceiverKind::Gnn | ReceiverKind::Jdd => {
                let nn = self.neural.as_ref().expect("neural receiver");
                let mut frame = Frame::new(obs.y.to_vec(), obs.sigma2, obs.cir.clone());
                if nn.params.prior.is_some() {
                    let len = nn.graph.readout_vns.len() * c.bits_per_symbol();
                    frame = frame.with_prior(prior.map_or_else(|| vec![0.0; len], <[f64]>::to_vec));
                }
                match detect_batch(&nn.params, &nn.graph, std::slice::from_ref(&frame), &nn.schedule) {
                    Ok(mut out) => {
                        let last = out.remove(0).pop().map(|l| l.values).unwrap_or_default();
                        Ok((last, false))
                    }
                    Err(Error::InferenceDivergence { .. }) => {
                        Ok((vec![0.0; nn.graph.readout_vns.len() * c.bits_per_symbol()], true))
                    }
                    Err(e) => Err(e.into()),
                }
            }
        }
    }
}

/// Counts of one simulated block.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FrameOutcome {
    pub bit_errors: usize,
    pub bits: usize,
    pub frame_error: bool,
    /// `Σ (1 − BCE)` over the detector LLRs, in bits.
    pub bmi_sum: f64,
    pub bmi_bits: usize,
    pub diverged: bool,
}

/// Simulates one block at `point`: uncoded detection, separate or turbo
/// detection and decoding, or joint detection-decoding.
pub fn run_frame(rx: &Receiver, point: NoisePoint, rng: &mut SimRng) -> Result<FrameOutcome> {
    let cfg = rx.cfg;
    let c = &cfg.constellation;
    let (info, symbol_bits, word) = match &cfg.code {
        None => {
            let bits = random_bits(cfg.block_len * c.bits_per_symbol(), rng);
            (bits.clone(), bits, None)
        }
        Some(code) => {
            let info = random_bits(code.encoder.k(), rng);
            let word = code.encoder.encode(&info)?;
            let on_air = code.interleaver.interleave(&code.pcm.transmitted_bits(&word));
            (info, on_air, Some(word))
        }
    };
    let x = c.modulate(&symbol_bits)?;
    let y = apply_isi(&x, &cfg.cir, point.sigma2, rng)?;
    let cir = if cfg.csi_error_variance > 0.0 {
        perturb_csi(&cfg.cir, cfg.csi_error_variance, rng)?
    } else {
        cfg.cir.clone()
    };
    let obs = Observation {
        y: &y,
        sigma2: point.sigma2,
        cir: &cir,
    };

    let (decisions, bmi_ref, bmi_llrs, diverged) = match (&cfg.code, word) {
        (None, _) => {
            let (llrs, div) = rx.detect(&obs, None)?;
            let hard = hard(&llrs);
            (hard, symbol_bits, llrs, div)
        }
        (Some(code), Some(word)) if rx.kind == ReceiverKind::Jdd => {
            let (llrs, div) = rx.detect(&obs, None)?;
            (code.encoder.extract_info(&hard(&llrs)), word, llrs, div)
        }
        (Some(code), _) => {
            let turbo = cfg.detector.turbo_iterations;
            let mut prior = vec![0.0; symbol_bits.len()];
            let mut first = None;
            let mut diverged = false;
            let mut decoded = Vec::new();
            for t in 0..=turbo {
                let (total, div) = rx.detect(&obs, (turbo > 0).then_some(prior.as_slice()))?;
                diverged |= div;
                let ext: Vec<f64> = total.iter().zip(&prior).map(|(l, a)| saturate(l - a)).collect();
                let full = code.pcm.depuncture(&code.interleaver.deinterleave(&ext));
                let out = spa_decode(&code.pcm, &full, cfg.decoder.iterations, cfg.decoder.early_stop)?;
                if t < turbo {
                    prior = code.interleaver.interleave(&code.pcm.transmitted_llrs(&out.extrinsic.values));
                }
                decoded = out.hard;
                first.get_or_insert(total);
            }
            (code.encoder.extract_info(&decoded), symbol_bits, first.unwrap_or_default(), diverged)
        }
    };
    let bit_errors = info.iter().zip(&decisions).filter(|(a, b)| a != b).count();
    Ok(FrameOutcome {
        bit_errors,
        bits: info.len(),
        frame_error: bit_errors > 0,
        bmi_sum: bmi_raw(&bmi_ref, &bmi_llrs)? * bmi_ref.len() as f64,
        bmi_bits: bmi_ref.len(),
        diverged,
    })
}

fn hard(llrs: &[f64]) -> Vec<u8> {
    llrs.iter().map(|&l| u8::from(l < 0.0)).collect()
}
