use std::io::Write;

use isi_gnn::metrics::{latency_cycles, LatencyKind};
use isi_gnn::parallel::map_indexed;
use isi_gnn::rng::stream;

use crate::config::{ExperimentConfig, NoisePoint, ReceiverKind};
use crate::error::{CliError, Result};
use crate::output::{open, preamble, RunContext};
use crate::receiver::{run_frame, FrameOutcome, Receiver};
use crate::train::{load_params, train_for_point};

/// Aggregate of one sweep point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PointResult {
    pub bit_errors: usize,
    pub bits: usize,
    pub frame_errors: usize,
    pub frames: usize,
    pub bmi_sum: f64,
    pub bmi_bits: usize,
    pub diverged: usize,
}

impl PointResult {
    fn add(&mut self, o: &FrameOutcome) {
        self.bit_errors += o.bit_errors;
        self.bits += o.bits;
        self.frame_errors += usize::from(o.frame_error);
        self.frames += 1;
        self.bmi_sum += o.bmi_sum;
        self.bmi_bits += o.bmi_bits;
        self.diverged += usize::from(o.diverged);
    }

    pub fn ber(&self) -> f64 {
        self.bit_errors as f64 / self.bits.max(1) as f64
    }

    pub fn bler(&self) -> f64 {
        self.frame_errors as f64 / self.frames.max(1) as f64
    }

    /// Detector BMI, clipped to `[0, 1]`.
    pub fn bmi(&self) -> f64 {
        (self.bmi_sum / self.bmi_bits.max(1) as f64).clamp(0.0, 1.0)
    }
}

/// Monte-Carlo at one point. Frames run in blocks of `sim.block_frames`;
/// the point stops after the block in which the frame-error target or the
/// frame cap is reached. Frame `f` uses the stream `(seed, f)`.
pub fn simulate_point(rx: &Receiver, cfg: &ExperimentConfig, point: NoisePoint, seed: u64, ctx: RunContext) -> Result<PointResult> {
    let mut acc = PointResult::default();
    while acc.frames < cfg.sim.max_frames && acc.frame_errors < cfg.sim.min_frame_errors.max(1) {
        let start = acc.frames;
        let count = cfg.sim.block_frames.min(cfg.sim.max_frames - start);
        let outcomes = map_indexed(ctx.mode, count, |i| {
            run_frame(rx, point, &mut stream(seed, &[(start + i) as u64]))
        });
        for o in outcomes {
            acc.add(&o?);
        }
    }
    Ok(acc)
}

pub const SIMULATE_HEADER: &str = "snr_db,ber,bler,bmi,frames,detector,seed,diverged";

/// `simulate` subcommand: one CSV row per sweep point.
pub fn run_simulate(cfg: &ExperimentConfig, ctx: RunContext) -> Result<()> {
    let kind = cfg.detector.kind;
    let retrain = cfg.detector.retrain_per_point && kind.is_neural();
    let shared = if retrain { None } else { load_params(cfg)? };
    if kind.is_neural() && !retrain && shared.is_none() {
        return Err(CliError::Config(
            "neural detector needs `detector.checkpoint` or `detector.retrain_per_point`".into(),
        ));
    }
    let mut out = open(cfg.output.csv.as_deref())?;
    preamble(&mut *out, &cfg.hash, cfg.seed)?;
    writeln!(out, "{SIMULATE_HEADER}")?;
    for (p, point) in cfg.sweep.iter().enumerate() {
        let seed = cfg.point_seed(p);
        let params = if retrain {
            Some(train_for_point(cfg, point.snr_db, seed, ctx)?)
        } else {
            shared.clone()
        };
        let rx = Receiver::new(cfg, kind, None, params)?;
        let r = simulate_point(&rx, cfg, *point, seed, ctx)?;
        writeln!(
            out,
            "{:.4},{:.6e},{:.6e},{:.6},{},{},{},{}",
            point.snr_db,
            r.ber(),
            r.bler(),
            r.bmi(),
            r.frames,
            rx.label(),
            seed,
            r.diverged
        )?;
        out.flush()?;
    }
    Ok(())
}

pub const LATENCY_HEADER: &str = "method,n_it,cycles,ber";

/// `latency` subcommand: cycle count and measured BER per method.
pub fn run_latency(cfg: &ExperimentConfig, ctx: RunContext) -> Result<()> {
    let params = load_params(cfg)?;
    let point = NoisePoint {
        snr_db: cfg.latency.snr_db,
        sigma2: isi_gnn::channel::snr_db_to_sigma2(cfg.latency.snr_db),
    };
    let mut out = open(cfg.output.csv.as_deref())?;
    preamble(&mut *out, &cfg.hash, cfg.seed)?;
    writeln!(out, "{LATENCY_HEADER}")?;
    for (i, entry) in cfg.latency.methods.iter().enumerate() {
        let (kind, latency) = match entry.method.as_str() {
            "bcjr" => (ReceiverKind::Bcjr, LatencyKind::Bcjr),
            "spa" => (ReceiverKind::Spa, LatencyKind::Spa),
            "gnn" if cfg.detector.model.model == isi_gnn::gnn::ModelKind::Fgnn => (ReceiverKind::Gnn, LatencyKind::Fgnn),
            "gnn" => (ReceiverKind::Gnn, LatencyKind::Gnn),
            "jdd" => (ReceiverKind::Jdd, LatencyKind::JddGnn),
            m => return Err(CliError::Config(format!("latency method `{m}` has no cycle model"))),
        };
        if (kind == ReceiverKind::Jdd) != (cfg.detector.kind == ReceiverKind::Jdd) && kind.is_neural() {
            return Err(CliError::Config(format!(
                "latency method `{}` does not match `detector.kind`",
                entry.method
            )));
        }
        let rx = Receiver::new(cfg, kind, Some(entry.iterations), params.clone())?;
        let r = simulate_point(&rx, cfg, point, cfg.point_seed(i), ctx)?;
        let cycles = latency_cycles(latency, entry.iterations, cfg.block_len, cfg.cir.memory());
        writeln!(out, "{},{},{},{:.6e}", latency.name(), entry.iterations, cycles, r.ber())?;
        out.flush()?;
    }
    Ok(())
}
