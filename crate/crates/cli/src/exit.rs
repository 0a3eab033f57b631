use std::io::Write;

use isi_gnn::metrics::{
    exit_characteristic, exit_trajectory, sdd_rate, tdd_rate, BcjrDetector, DetectorComponent, ExitCurve,
    GnnPriorDetector, LdpcComponent, Link, PriorDetector, Trajectory,
};

use crate::config::{ExitPart, ExperimentConfig, ReceiverKind};
use crate::error::{CliError, Result};
use crate::output::{open, preamble, RunContext};
use crate::receiver::neural_graph;
use crate::train::load_params;

/// `exit` subcommand: detector and/or decoder EXIT curves, plus a turbo
/// trajectory when `exit.turbo_iterations > 0`. The detector curve uses
/// seed `seed`, the decoder curve `seed + 1`, the trajectory `seed + 2`.
pub fn run_exit(cfg: &ExperimentConfig, ctx: RunContext) -> Result<()> {
    let e = &cfg.exit;
    let link = Link {
        cir: cfg.cir.clone(),
        constellation: cfg.constellation.clone(),
        block_len: cfg.block_len,
        snr_db: e.snr_db,
    };
    let params = load_params(cfg)?;
    let graph = match cfg.detector.kind {
        ReceiverKind::Gnn => Some(neural_graph(cfg)?),
        _ => None,
    };
    let detector: Box<dyn PriorDetector + '_> = match (cfg.detector.kind, &params, &graph) {
        (ReceiverKind::Bcjr, _, _) => Box::new(BcjrDetector),
        (ReceiverKind::Gnn, Some(p), Some(g)) => Box::new(GnnPriorDetector {
            params: p,
            graph: g,
            schedule: cfg.detector.schedule.clone(),
        }),
        (ReceiverKind::Gnn, None, _) => return Err(CliError::Config("EXIT of a GNN needs `detector.checkpoint`".into())),
        (k, _, _) => return Err(CliError::Config(format!("EXIT analysis supports bcjr and gnn detectors, not {k:?}"))),
    };
    let decoder = match &cfg.code {
        Some(code) => {
            let mut d = LdpcComponent::new(code.pcm.clone(), cfg.decoder.iterations)?;
            d.early_stop = cfg.decoder.early_stop;
            Some(d)
        }
        None if e.component != ExitPart::Detector || e.turbo_iterations > 0 => {
            return Err(CliError::Config("decoder EXIT curves and trajectories need a code".into()))
        }
        None => None,
    };

    let mut out = open(cfg.output.csv.as_deref())?;
    preamble(&mut *out, &cfg.hash, cfg.seed)?;
    writeln!(out, "{}", ExitCurve::csv_header())?;
    if e.component != ExitPart::Decoder {
        let component = DetectorComponent {
            link: link.clone(),
            detector: detector.as_ref(),
        };
        let curve = exit_characteristic(&component, &e.ia_grid, e.method, e.samples, cfg.point_seed(0), ctx.mode)?;
        write_curve(&mut *out, &curve)?;
        eprintln!("sdd rate {:.4}", sdd_rate(&curve));
        if let Ok(rate) = tdd_rate(&curve) {
            eprintln!("tdd rate {rate:.4}");
        }
    }
    if let (true, Some(dec)) = (e.component != ExitPart::Detector, &decoder) {
        let curve = exit_characteristic(dec, &e.ia_grid, e.method, e.samples, cfg.point_seed(1), ctx.mode)?;
        write_curve(&mut *out, &curve)?;
    }
    out.flush()?;

    if let (true, Some(dec), Some(code)) = (e.turbo_iterations > 0, &decoder, &cfg.code) {
        let path = cfg
            .output
            .trajectory
            .as_deref()
            .ok_or_else(|| CliError::Config("trajectories need `output.trajectory`".into()))?;
        let traj = exit_trajectory(
            &link,
            detector.as_ref(),
            dec,
            &code.interleaver,
            e.turbo_iterations,
            e.frames,
            cfg.point_seed(2),
            ctx.mode,
        )?;
        let mut t = open(Some(path))?;
        preamble(&mut *t, &cfg.hash, cfg.seed)?;
        writeln!(t, "{}", Trajectory::csv_header())?;
        for row in traj.csv_rows() {
            writeln!(t, "{row}")?;
        }
        t.flush()?;
        if let Some(it) = traj.diverged_at {
            eprintln!("trajectory diverged at iteration {it}");
        }
    }
    Ok(())
}

fn write_curve(out: &mut dyn Write, curve: &ExitCurve) -> Result<()> {
    for row in curve.csv_rows() {
        writeln!(out, "{row}")?;
    }
    Ok(())
}
