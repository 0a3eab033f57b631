//! Losses, data generation and the training procedures: plain training
//! epochs, Gaussian-prior pre-training and two-stage schedule finetuning.
//!
//! One "epoch" is one optimizer step on a freshly simulated batch. Step `s`
//! draws everything from `derive_seed(seed, [s])`, so a run is a pure
//! function of the configuration and can be resumed bit-exactly.

mod task;

pub use task::{DetectionTask, JointTask, Sample, Task};

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::gnn::{forward, frame_features, BatchFeatures, GnnParameters, GraphIndex, Schedule};
use crate::llr::{LlrRole, LlrVector, LLR_MAX};
use crate::metrics::{bmi_raw, mu_of_ia};
use crate::neural_core::{checkpoint, AdamState, Bindings, GradientRecord, Parameterized, Tape, Tensor};
use crate::parallel::{map_indexed, ExecMode};
use crate::rng::{derive_seed, stream};

/// Probability clamp of [`bce_loss`].
pub const PROB_CLAMP: f64 = 1e-12;

/// Mean binary cross-entropy in bits, `−[c log2 q + (1−c) log2(1−q)]`,
/// where `q` is the probability of bit 1.
pub fn bce_loss(bits: &[u8], probs: &[f64]) -> Result<f64> {
    if bits.len() != probs.len() || bits.is_empty() {
        return Err(Error::InvalidLength(format!("{} bits, {} probabilities", bits.len(), probs.len())));
    }
    let sum: f64 = bits
        .iter()
        .zip(probs)
        .map(|(&c, &q)| {
            let q = q.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if c == 0 {
                -(1.0 - q).log2()
            } else {
                -q.log2()
            }
        })
        .sum();
    Ok(sum / bits.len() as f64)
}

/// Arithmetic mean of per-iteration losses.
pub fn multi_loss(per_iteration: &[f64]) -> Result<f64> {
    if per_iteration.is_empty() {
        return Err(Error::InvalidLength("multi-loss needs at least one iteration".into()));
    }
    Ok(per_iteration.iter().sum::<f64>() / per_iteration.len() as f64)
}

/// Prior LLRs of a Gaussian side channel.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorSample {
    pub llrs: LlrVector,
    /// `I_A ≥ 1` was requested and the LLRs are saturated.
    pub saturated: bool,
}

/// Consistent Gaussian prior LLRs `ℓ_A ~ N((1−2c)·μ(I_A), 2μ(I_A))`.
/// `I_A = 0` returns zeros without drawing from `rng`.
pub fn sample_prior_llrs<R: Rng + ?Sized>(bits: &[u8], ia: f64, rng: &mut R) -> Result<PriorSample> {
    if ia.is_nan() || ia < 0.0 {
        return Err(Error::InvalidConfig(format!("I_A must be ≥ 0, got {ia}")));
    }
    let sign = |c: u8| if c == 0 { 1.0 } else { -1.0 };
    if ia >= 1.0 {
        return Ok(PriorSample {
            llrs: LlrVector::new(bits.iter().map(|&c| sign(c) * LLR_MAX).collect(), LlrRole::Prior),
            saturated: true,
        });
    }
    let mu = mu_of_ia(ia)?;
    if mu == 0.0 {
        return Ok(PriorSample {
            llrs: LlrVector::zeros(bits.len(), LlrRole::Prior),
            saturated: false,
        });
    }
    let noise = Normal::new(0.0, (2.0 * mu).sqrt()).expect("positive variance");
    let values = bits.iter().map(|&c| sign(c) * mu + noise.sample(rng)).collect();
    Ok(PriorSample {
        llrs: LlrVector::new(values, LlrRole::Prior),
        saturated: false,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossKind {
    /// BCE of the last iteration.
    Bce,
    /// Mean BCE over all iterations.
    #[default]
    Multi,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Bce => "bce",
            LossKind::Multi => "multi",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "bce" => Ok(LossKind::Bce),
            "multi" => Ok(LossKind::Multi),
            other => Err(Error::InvalidConfig(format!("unknown loss `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Number of optimizer steps.
    pub epochs: u64,
    /// SNR range in dB, sampled uniformly once per batch.
    pub snr_range_db: (f64, f64),
    pub learning_rate: f64,
    pub schedule: Schedule,
    pub loss: LossKind,
    pub seed: u64,
    /// Range of the uniform `I_A` draw of Gaussian pre-training.
    pub ia_range: (f64, f64),
    /// Frames per gradient chunk. Chunks run in parallel and are summed in
    /// index order, so results do not depend on the thread count.
    pub chunk_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 20_000,
            snr_range_db: (10.0, 14.0),
            learning_rate: 1e-3,
            schedule: Schedule::flooding(8),
            loss: LossKind::Multi,
            seed: 0,
            ia_range: (0.0, 1.0),
            chunk_size: 16,
        }
    }
}

impl TrainConfig {
    /// Detection budget: batch 256, 5·10^4 steps, learning rate 10^-4.
    pub fn full_detection() -> Self {
        Self {
            batch_size: 256,
            epochs: 50_000,
            learning_rate: 1e-4,
            ..Self::default()
        }
    }

    /// Joint detection-decoding budget: 1.6·10^5 steps at 10 to 13 dB
    /// with the (10, 1) flooding schedule.
    pub fn full_joint() -> Self {
        Self {
            batch_size: 256,
            epochs: 160_000,
            snr_range_db: (10.0, 13.0),
            learning_rate: 1e-4,
            schedule: Schedule::flooding(10),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.snr_range_db;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidConfig(format!("SNR range ({lo}, {hi}) must satisfy min ≤ max")));
        }
        let (a, b) = self.ia_range;
        if !(0.0 <= a && a <= b && b <= 1.0) {
            return Err(Error::InvalidConfig(format!("I_A range ({a}, {b}) must lie in [0, 1]")));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.chunk_size == 0 {
            return Err(Error::InvalidConfig("batch size, epochs and chunk size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be positive", self.learning_rate)));
        }
        self.schedule.validate()
    }
}

/// Outcome of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    /// 1-based index of the step just taken.
    pub step: u64,
    pub loss: f64,
    /// Bit-wise mutual information of the last-iteration outputs.
    pub bmi: f64,
    pub snr_db: f64,
    pub wall_time: f64,
}

/// Parameters plus optimizer state; everything a resumed run needs.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub params: GnnParameters,
    pub adam: AdamState,
    /// Steps taken so far.
    pub step: u64,
}

const STEP_KEY: &str = "train.step";
const ADAM_STEP_KEY: &str = "adam.step";

impl TrainState {
    pub fn new(params: GnnParameters, learning_rate: f64) -> Self {
        Self {
            params,
            adam: AdamState::new(learning_rate),
            step: 0,
        }
    }

    /// Writes parameters, Adam moments and counters. Counters are stored as
    /// exact `f64` values.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut entries = self.params.named_tensors();
        for (name, m) in &self.adam.first_moment {
            entries.push((format!("adam.m.{name}"), m.clone()));
        }
        for (name, v) in &self.adam.second_moment {
            entries.push((format!("adam.v.{name}"), v.clone()));
        }
        entries.push((STEP_KEY.into(), Tensor::from_elem((1, 1), self.step as f64)));
        entries.push((ADAM_STEP_KEY.into(), Tensor::from_elem((1, 1), self.adam.step_count as f64)));
        checkpoint::save(path, &entries)
    }

    /// Restores a state written by [`TrainState::save`] into `params`,
    /// whose configuration must match the stored tensors.
    pub fn load(path: &Path, mut params: GnnParameters, learning_rate: f64) -> Result<Self> {
        let map = checkpoint::load(path)?;
        params.load_named(&map)?;
        let mut adam = AdamState::new(learning_rate);
        for (key, t) in &map {
            if let Some(name) = key.strip_prefix("adam.m.") {
                adam.first_moment.insert(name.to_string(), t.clone());
            } else if let Some(name) = key.strip_prefix("adam.v.") {
                adam.second_moment.insert(name.to_string(), t.clone());
            }
        }
        let counter = |k: &str| map.get(k).map(|t| t[(0, 0)] as u64).unwrap_or(0);
        adam.step_count = counter(ADAM_STEP_KEY);
        Ok(Self {
            params,
            adam,
            step: counter(STEP_KEY),
        })
    }
}

/// Seed of the batch drawn at 0-based step `step`.
pub fn batch_seed(seed: u64, step: u64) -> u64 {
    derive_seed(seed, &[step])
}

/// SNR of the batch with `batch_seed`.
pub fn batch_snr(config: &TrainConfig, batch_seed: u64) -> f64 {
    let (lo, hi) = config.snr_range_db;
    if lo == hi {
        return lo;
    }
    stream(batch_seed, &[0]).random_range(lo..hi)
}

/// Simulates the batch of `batch_seed`. With `ia_range`, every frame also
/// carries Gaussian priors at `I_A ~ U(ia_range)`.
pub fn simulate_batch(
    task: &Task,
    config: &TrainConfig,
    batch_seed: u64,
    ia_range: Option<(f64, f64)>,
    mode: ExecMode,
) -> Result<(f64, Vec<Sample>)> {
    let snr = batch_snr(config, batch_seed);
    let samples = map_indexed(mode, config.batch_size, |i| -> Result<Sample> {
        let mut rng = stream(batch_seed, &[1, i as u64]);
        let mut s = task.sample(snr, &mut rng)?;
        if let Some((lo, hi)) = ia_range {
            let mut prng = stream(batch_seed, &[2, i as u64]);
            let ia = if lo == hi { lo } else { prng.random_range(lo..hi) };
            let prior = sample_prior_llrs(&s.targets, ia, &mut prng)?;
            s.frame = s.frame.with_prior(prior.llrs.values);
        }
        Ok(s)
    });
    Ok((snr, samples.into_iter().collect::<Result<Vec<_>>>()?))
}

/// Loss, gradients and last-iteration logits of one chunk. The loss is
/// normalized by `norm` bits so that chunk losses add up to the batch loss.
fn chunk_gradients(
    params: &GnnParameters,
    task: &Task,
    samples: &[Sample],
    schedule: &Schedule,
    loss: LossKind,
    norm: f64,
) -> Result<(GradientRecord, Vec<f64>)> {
    let feats = samples
        .iter()
        .map(|s| frame_features(&params.config, &s.frame))
        .collect::<Result<Vec<_>>>()?;
    let batch = BatchFeatures::new(&feats)?;
    let index = GraphIndex::new(task.graph(), samples.len())?;
    let mut tape = Tape::new();
    let mut bind = Bindings::default();
    let logits = forward(params, &index, &batch, schedule, &mut tape, &mut bind)?;
    let targets: Arc<Vec<u8>> = Arc::new(samples.iter().flat_map(|s| s.targets.iter().copied()).collect());
    let used: &[_] = match loss {
        LossKind::Multi => &logits,
        LossKind::Bce => &logits[logits.len() - 1..],
    };
    let w = 1.0 / (norm * used.len() as f64);
    let terms: Vec<_> = used.iter().map(|&l| tape.bce_logits(l, targets.clone(), w)).collect();
    let total = if terms.len() == 1 {
        terms[0]
    } else {
        let all = tape.concat_cols(&terms);
        tape.sum(all)
    };
    let value = tape.value(total)[(0, 0)];
    let last = tape
        .value(*logits.last().expect("validated schedule"))
        .iter()
        .copied()
        .collect();
    let mut g = tape.backward(total);
    Ok((bind.collect(params, value, &mut g), last))
}

/// Loss, gradients and BMI of a simulated batch.
pub fn batch_gradients(
    params: &GnnParameters,
    task: &Task,
    samples: &[Sample],
    schedule: &Schedule,
    loss: LossKind,
    chunk_size: usize,
    mode: ExecMode,
) -> Result<(GradientRecord, f64)> {
    let bits: usize = samples.iter().map(|s| s.targets.len()).sum();
    let chunks: Vec<&[Sample]> = samples.chunks(chunk_size.max(1)).collect();
    let results = map_indexed(mode, chunks.len(), |c| {
        chunk_gradients(params, task, chunks[c], schedule, loss, bits as f64)
    });
    let mut records = Vec::with_capacity(results.len());
    let mut logits = Vec::with_capacity(bits);
    for r in results {
        let (rec, l) = r?;
        records.push(rec);
        logits.extend(l);
    }
    let targets: Vec<u8> = samples.iter().flat_map(|s| s.targets.iter().copied()).collect();
    let bmi = bmi_raw(&targets, &logits)?;
    Ok((GradientRecord::sum(records), bmi))
}

fn optimizer_step(
    state: &mut TrainState,
    task: &Task,
    config: &TrainConfig,
    ia_range: Option<(f64, f64)>,
    mode: ExecMode,
) -> Result<StepMetrics> {
    let start = Instant::now();
    let seed = batch_seed(config.seed, state.step);
    let (snr, samples) = simulate_batch(task, config, seed, ia_range, mode)?;
    let (grads, bmi) = batch_gradients(
        &state.params,
        task,
        &samples,
        &config.schedule,
        config.loss,
        config.chunk_size,
        mode,
    )?;
    let step = state.step + 1;
    if !grads.loss_value.is_finite() {
        return Err(Error::TrainingDivergence { step, batch_seed: seed });
    }
    state.adam.learning_rate = config.learning_rate;
    state.adam.step(&mut state.params, &grads)?;
    state.step = step;
    Ok(StepMetrics {
        step,
        loss: grads.loss_value,
        bmi,
        snr_db: snr,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// One training step: fresh batch at a random SNR, forward pass, loss,
/// one Adam update.
pub fn train_epoch(state: &mut TrainState, task: &Task, config: &TrainConfig, mode: ExecMode) -> Result<StepMetrics> {
    optimizer_step(state, task, config, None, mode)
}

/// One training step with Gaussian priors at `I_A ~ U(config.ia_range)`
/// per frame; the loss targets the total output.
pub fn gaussian_prior_pretrain_epoch(
    state: &mut TrainState,
    task: &Task,
    config: &TrainConfig,
    mode: ExecMode,
) -> Result<StepMetrics> {
    if state.params.prior.is_none() {
        return Err(Error::InvalidConfig("Gaussian-prior training needs a prior embedding".into()));
    }
    optimizer_step(state, task, config, Some(config.ia_range), mode)
}

/// Which step function a [`train`] run uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Procedure {
    #[default]
    Plain,
    GaussianPrior,
}

/// Runs `steps` steps, writing one log row per step when `log` is given.
pub fn train(
    state: &mut TrainState,
    task: &Task,
    config: &TrainConfig,
    procedure: Procedure,
    steps: u64,
    mode: ExecMode,
    mut log: Option<&mut TrainLog<'_>>,
) -> Result<Vec<StepMetrics>> {
    config.validate()?;
    let mut out = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        let m = match procedure {
            Procedure::Plain => train_epoch(state, task, config, mode)?,
            Procedure::GaussianPrior => gaussian_prior_pretrain_epoch(state, task, config, mode)?,
        };
        if let Some(l) = log.as_deref_mut() {
            l.row(&m)?;
        }
        out.push(m);
    }
    Ok(out)
}

/// Trains `steps1` steps at `stage1`, then continues at `stage2` for
/// `steps2` steps on the same parameters, optimizer state and seed stream.
#[allow(clippy::too_many_arguments)]
pub fn two_stage_finetune(
    state: &mut TrainState,
    task: &Task,
    config: &TrainConfig,
    stage1: Schedule,
    steps1: u64,
    stage2: Schedule,
    steps2: u64,
    mode: ExecMode,
    mut log: Option<&mut TrainLog<'_>>,
) -> Result<Vec<StepMetrics>> {
    let first = TrainConfig {
        schedule: stage1,
        ..config.clone()
    };
    let second = TrainConfig {
        schedule: stage2,
        ..config.clone()
    };
    let mut out = train(state, task, &first, Procedure::Plain, steps1, mode, log.as_deref_mut())?;
    out.extend(train(state, task, &second, Procedure::Plain, steps2, mode, log)?);
    Ok(out)
}

/// Mean loss of `params` on `batches` fixed evaluation batches (seeds
/// derived from `seed`), without updating anything.
pub fn evaluate_loss(
    params: &GnnParameters,
    task: &Task,
    config: &TrainConfig,
    batches: u64,
    seed: u64,
    mode: ExecMode,
) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut bmi = 0.0;
    for b in 0..batches {
        let bs = batch_seed(seed, b);
        let (_, samples) = simulate_batch(task, config, bs, None, mode)?;
        let (g, m) = batch_gradients(params, task, &samples, &config.schedule, config.loss, config.chunk_size, mode)?;
        loss += g.loss_value;
        bmi += m;
    }
    Ok((loss / batches as f64, bmi / batches as f64))
}

/// CSV training log with columns `step,loss,bmi,snr_db,wall_time`.
pub struct TrainLog<'w> {
    out: &'w mut dyn Write,
    /// Writes `0` instead of the measured wall time (reproducible output).
    pub zero_wall_time: bool,
}

impl<'w> TrainLog<'w> {
    pub const HEADER: &'static str = "step,loss,bmi,snr_db,wall_time";

    /// Writes the header unless `append` is set.
    pub fn new(out: &'w mut dyn Write, zero_wall_time: bool, append: bool) -> Result<Self> {
        if !append {
            writeln!(out, "{}", Self::HEADER)?;
        }
        Ok(Self { out, zero_wall_time })
    }

    pub fn row(&mut self, m: &StepMetrics) -> Result<()> {
        let wall = if self.zero_wall_time { 0.0 } else { m.wall_time };
        writeln!(self.out, "{},{:.9},{:.9},{:.6},{:.6}", m.step, m.loss, m.bmi, m.snr_db, wall)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests;
