use std::io::Write;

use isi_gnn::gnn::GnnParameters;
use isi_gnn::rng::stream;
use isi_gnn::training::{train, DetectionTask, JointTask, Procedure, Task, TrainConfig, TrainLog, TrainState};

use crate::config::{ExperimentConfig, ReceiverKind, TrainProcedure};
use crate::error::{CliError, Result};
use crate::output::{open, preamble, RunContext};

/// Stream index of the parameter initialization.
const INIT_STREAM: u64 = u64::MAX;

/// Training task of the configured detector.
pub fn build_task(cfg: &ExperimentConfig) -> Result<Task> {
    match (cfg.detector.kind, &cfg.code) {
        (ReceiverKind::Jdd, Some(code)) => Ok(Task::Joint(JointTask::new(
            cfg.cir.clone(),
            code.pcm.clone(),
            code.interleaver.clone(),
            cfg.detector.graph,
        )?)),
        (ReceiverKind::Gnn, _) => {
            let mut task =
                DetectionTask::new(cfg.cir.clone(), cfg.constellation.clone(), cfg.block_len, cfg.detector.graph)?;
            task.csi_error_variance = cfg.csi_error_variance;
            Ok(Task::Detection(task))
        }
        _ => Err(CliError::Config("training needs `detector.kind` gnn or jdd".into())),
    }
}

/// Freshly initialized parameters of the configured model.
pub fn init_params(cfg: &ExperimentConfig, seed: u64) -> Result<GnnParameters> {
    Ok(GnnParameters::new(cfg.detector.model.clone(), &mut stream(seed, &[INIT_STREAM]))?)
}

/// Parameters stored in `detector.checkpoint`.
pub fn load_params(cfg: &ExperimentConfig) -> Result<Option<GnnParameters>> {
    match &cfg.detector.checkpoint {
        Some(path) => {
            let fresh = init_params(cfg, 0)?;
            Ok(Some(TrainState::load(path, fresh, cfg.train.config.learning_rate)?.params))
        }
        None => Ok(None),
    }
}

/// Trains `state` up to `config.epochs` steps, continuing from
/// `state.step`. The two-stage procedure runs its first schedule until
/// `train.stage1_epochs`.
pub fn run_phases(
    cfg: &ExperimentConfig,
    config: &TrainConfig,
    state: &mut TrainState,
    task: &Task,
    ctx: RunContext,
    mut log: Option<&mut TrainLog<'_>>,
) -> Result<()> {
    let t = &cfg.train;
    let mut phases = Vec::new();
    match t.procedure {
        TrainProcedure::Plain => phases.push((Procedure::Plain, config.clone(), config.epochs)),
        TrainProcedure::GaussianPrior => phases.push((Procedure::GaussianPrior, config.clone(), config.epochs)),
        TrainProcedure::TwoStage => {
            let first = TrainConfig {
                schedule: t.stage1_schedule.clone().expect("validated"),
                ..config.clone()
            };
            phases.push((Procedure::Plain, first, t.stage1_epochs));
            phases.push((Procedure::Plain, config.clone(), config.epochs));
        }
    }
    for (procedure, phase_cfg, end) in phases {
        if state.step < end {
            train(state, task, &phase_cfg, procedure, end - state.step, ctx.mode, log.as_deref_mut())?;
        }
    }
    Ok(())
}

/// `train` subcommand: writes the training log and the checkpoint.
pub fn run_train(cfg: &ExperimentConfig, ctx: RunContext) -> Result<()> {
    let checkpoint = cfg
        .output
        .checkpoint
        .clone()
        .ok_or_else(|| CliError::Config("train needs `output.checkpoint`".into()))?;
    let task = build_task(cfg)?;
    let config = &cfg.train.config;
    let params = init_params(cfg, cfg.seed)?;
    let mut state = match &cfg.train.resume {
        Some(path) => TrainState::load(path, params, config.learning_rate)?,
        None => TrainState::new(params, config.learning_rate),
    };
    let mut out = open(cfg.output.csv.as_deref())?;
    preamble(&mut *out, &cfg.hash, cfg.seed)?;
    {
        let result = {
            let mut log = TrainLog::new(&mut *out, ctx.reproducible, false)?;
            run_phases(cfg, config, &mut state, &task, ctx, Some(&mut log))
        };
        out.flush()?;
        result?;
    }
    if let Some(dir) = checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    state.save(&checkpoint)?;
    Ok(())
}

/// Trains one model for a single sweep point at `snr_db`.
pub fn train_for_point(cfg: &ExperimentConfig, snr_db: f64, seed: u64, ctx: RunContext) -> Result<GnnParameters> {
    let task = build_task(cfg)?;
    let config = TrainConfig {
        snr_range_db: (snr_db, snr_db),
        seed,
        ..cfg.train.config.clone()
    };
    let mut state = TrainState::new(init_params(cfg, seed)?, config.learning_rate);
    run_phases(cfg, &config, &mut state, &task, ctx, None)?;
    Ok(state.params)
}
