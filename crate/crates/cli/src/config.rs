//! Flat `key = value` experiment configuration.
//!
//! Keys carry dotted section prefixes (`channel.cir`, `train.batch_size`).
//! `#` starts a comment. Lists are comma separated; numeric sweeps also
//! accept `start:step:stop` (inclusive).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use isi_gnn::channel::{ebn0_to_sigma2, snr_db_to_sigma2, Cir, Constellation};
use isi_gnn::gnn::{EmbeddingKind, GnnConfig, ModelKind, Schedule};
use isi_gnn::graphs::{DetectionKind, Interleaver};
use isi_gnn::ldpc::{load_alist, shipped_code, Encoder, ParityCheckMatrix, ShippedCode};
use isi_gnn::metrics::ExitMethod;
use isi_gnn::rng::seeded;
use isi_gnn::training::{LossKind, TrainConfig};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "base seed; sweep point p uses seed + p"),
    ("channel.cir", "preset name (proakis-c) or comma-separated taps, real or re+imj"),
    ("channel.block_len", "symbols per uncoded block"),
    ("channel.snr_db", "sweep over E_s/σ² in dB"),
    ("channel.ebn0_db", "sweep over E_b/N_0 in dB"),
    ("channel.sigma2", "sweep over the noise variance"),
    ("channel.csi_error_variance", "receiver CIR error variance (0 = perfect CSI)"),
    ("modulation.order", "constellation size M"),
    ("code.name", "shipped code: ldpc-132-66, ldpc-4608-4032, ldpc-25344-8448"),
    ("code.alist", "path of an alist parity-check matrix"),
    ("code.puncture", "comma-separated punctured columns"),
    ("code.interleaver", "random or identity"),
    ("code.interleaver_seed", "seed of the random interleaver"),
    ("detector.kind", "bcjr, lmmse, spa, gnn or jdd"),
    ("detector.graph", "ffg or ufg"),
    ("detector.iterations", "SPA iterations; flooding iterations of the GNN"),
    ("detector.damping", "SPA damping factor in (0, 1]"),
    ("detector.schedule", "GNN schedule, e.g. flooding:8 or sequential:2x2,2"),
    ("detector.turbo_iterations", "detector-decoder exchanges after the first pass"),
    ("detector.model", "gnn or fgnn"),
    ("detector.embedding", "linear, llr, neural-csi or cct"),
    ("detector.feature_size", "node state size d"),
    ("detector.hidden_units", "hidden units per MLP layer"),
    ("detector.hidden_layers", "hidden layers per MLP"),
    ("detector.noise_input", "feed σ² to the embedding"),
    ("detector.prior", "add the prior embedding"),
    ("detector.checkpoint", "trained GNN parameters"),
    ("detector.retrain_per_point", "train one GNN per sweep point before simulating it"),
    ("decoder.iterations", "belief-propagation iterations"),
    ("decoder.early_stop", "stop on a zero syndrome"),
    ("sim.max_frames", "frame cap per sweep point"),
    ("sim.min_frame_errors", "stop a point after this many frame errors"),
    ("sim.block_frames", "frames simulated between stopping checks"),
    ("train.batch_size", "frames per step"),
    ("train.epochs", "optimizer steps"),
    ("train.snr_db", "training SNR range `min,max` in dB"),
    ("train.learning_rate", "Adam learning rate"),
    ("train.loss", "bce or multi"),
    ("train.procedure", "plain, gaussian-prior or two-stage"),
    ("train.ia_range", "prior mutual information range `min,max`"),
    ("train.chunk_size", "frames per gradient chunk"),
    ("train.stage1_schedule", "first-stage schedule of the two-stage procedure"),
    ("train.stage1_epochs", "first-stage steps of the two-stage procedure"),
    ("train.resume", "checkpoint to continue from"),
    ("exit.snr_db", "operating SNR of the detector curve"),
    ("exit.ia_grid", "a-priori information grid"),
    ("exit.method", "subtract or omit-index"),
    ("exit.samples", "LLRs per grid point"),
    ("exit.component", "detector, decoder or both"),
    ("exit.turbo_iterations", "trajectory length; 0 disables the trajectory"),
    ("exit.frames", "frames per trajectory"),
    ("latency.snr_db", "SNR of the BER column"),
    ("latency.methods", "entries method[:iterations], e.g. bcjr,spa:8,gnn:4"),
    ("output.csv", "main CSV output (stdout if absent)"),
    ("output.checkpoint", "checkpoint written by train"),
    ("output.trajectory", "trajectory CSV written by exit"),
];

/// Parsed key/value pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
    /// Directory that relative paths resolve against.
    base_dir: PathBuf,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let k = k.trim();
            if raw.entries.contains_key(k) {
                return Err(CliError::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
            raw.insert(k, v.trim())?;
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut raw = Self::parse(&text)?;
        raw.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(raw)
    }

    /// Inserts or replaces a key.
    pub fn insert(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
        self.insert(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Sorted `key=value` lines, without the `output.*` paths.
    pub fn canonical(&self) -> String {
        self.entries
            .iter()
            .filter(|(k, _)| !k.starts_with("output."))
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// First 16 hex digits of the SHA-256 of [`RawConfig::canonical`] plus
    /// `extra`.
    pub fn hash(&self, extra: &str) -> String {
        let mut h = Sha256::new();
        h.update(self.canonical().as_bytes());
        h.update(extra.as_bytes());
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{v}`"))))
            .transpose()
    }

    fn value<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(CliError::Config(format!("`{key}`: expected true or false, got `{v}`"))),
        }
    }

    fn core<T, E: std::fmt::Display>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr<Err = E>,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| CliError::Config(format!("`{key}`: {e}"))),
        }
    }

    fn pair(&self, key: &str, default: (f64, f64)) -> Result<(f64, f64)> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => match parse_list(v).map_err(|e| CliError::Config(format!("`{key}`: {e}")))?[..] {
                [a] => Ok((a, a)),
                [a, b] => Ok((a, b)),
                _ => Err(CliError::Config(format!("`{key}`: expected one or two numbers"))),
            },
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|p| self.base_dir.join(p))
    }

    fn existing_path(&self, key: &str) -> Result<Option<PathBuf>> {
        match self.path(key) {
            Some(p) if !p.exists() => Err(CliError::Config(format!("`{key}`: {} does not exist", p.display()))),
            other => Ok(other),
        }
    }
}

/// Parses `a,b,c` or `start:step:stop` (inclusive, tolerant to rounding).
pub fn parse_list(text: &str) -> std::result::Result<Vec<f64>, String> {
    let text = text.trim();
    let parts: Vec<&str> = text.split(':').collect();
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("cannot parse `{s}`"));
    let out = match parts[..] {
        [single] => single.split(',').map(num).collect::<std::result::Result<Vec<_>, _>>()?,
        [start, step, stop] => {
            let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
            if step.is_nan() || step <= 0.0 || stop < start {
                return Err(format!("range `{text}` needs step > 0 and stop ≥ start"));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|i| start + i as f64 * step).collect()
        }
        _ => return Err(format!("cannot parse `{text}`")),
    };
    if out.is_empty() || out.iter().any(|v| !v.is_finite()) {
        return Err(format!("`{text}` must list finite numbers"));
    }
    Ok(out)
}

/// One point of the noise sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoisePoint {
    pub snr_db: f64,
    pub sigma2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReceiverKind {
    Bcjr,
    Lmmse,
    Spa,
    Gnn,
    Jdd,
}

impl FromStr for ReceiverKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "bcjr" => ReceiverKind::Bcjr,
            "lmmse" => ReceiverKind::Lmmse,
            "spa" => ReceiverKind::Spa,
            "gnn" => ReceiverKind::Gnn,
            "jdd" => ReceiverKind::Jdd,
            _ => return Err(CliError::Config(format!("unknown detector kind `{s}`"))),
        })
    }
}

impl ReceiverKind {
    pub fn is_neural(self) -> bool {
        matches!(self, ReceiverKind::Gnn | ReceiverKind::Jdd)
    }
}

/// LDPC code with its interleaver.
#[derive(Clone, Debug)]
pub struct CodeSection {
    pub label: String,
    pub pcm: ParityCheckMatrix,
    pub encoder: Encoder,
    pub interleaver: Interleaver,
}

impl CodeSection {
    pub fn rate(&self) -> f64 {
        self.encoder.k() as f64 / self.pcm.num_transmitted() as f64
    }
}

#[derive(Clone, Debug)]
pub struct DetectorSection {
    pub kind: ReceiverKind,
    pub graph: DetectionKind,
    pub iterations: usize,
    pub damping: f64,
    pub schedule: Schedule,
    pub turbo_iterations: usize,
    pub model: GnnConfig,
    pub checkpoint: Option<PathBuf>,
    pub retrain_per_point: bool,
}

#[derive(Clone, Debug)]
pub struct DecoderSection {
    pub iterations: usize,
    pub early_stop: bool,
}

#[derive(Clone, Debug)]
pub struct SimSection {
    pub max_frames: usize,
    pub min_frame_errors: usize,
    pub block_frames: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainProcedure {
    Plain,
    GaussianPrior,
    TwoStage,
}

#[derive(Clone, Debug)]
pub struct TrainSection {
    pub config: TrainConfig,
    pub procedure: TrainProcedure,
    pub stage1_schedule: Option<Schedule>,
    pub stage1_epochs: u64,
    pub resume: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitPart {
    Detector,
    Decoder,
    Both,
}

#[derive(Clone, Debug)]
pub struct ExitSection {
    pub snr_db: f64,
    pub ia_grid: Vec<f64>,
    pub method: ExitMethod,
    pub samples: usize,
    pub component: ExitPart,
    pub turbo_iterations: usize,
    pub frames: usize,
}

/// One latency-table entry.
#[derive(Clone, Debug, PartialEq)]
pub struct LatencyEntry {
    pub method: String,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct LatencySection {
    pub snr_db: f64,
    pub methods: Vec<LatencyEntry>,
}

#[derive(Clone, Debug, Default)]
pub struct OutputSection {
    pub csv: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
}

/// Fully resolved experiment.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub cir: Cir,
    pub constellation: Constellation,
    /// Symbols per block (derived from the code when one is given).
    pub block_len: usize,
    pub csi_error_variance: f64,
    pub sweep: Vec<NoisePoint>,
    pub code: Option<CodeSection>,
    pub detector: DetectorSection,
    pub decoder: DecoderSection,
    pub sim: SimSection,
    pub train: TrainSection,
    pub exit: ExitSection,
    pub latency: LatencySection,
    pub output: OutputSection,
    /// Hash of the raw entries and command-line flags.
    pub hash: String,
}

impl ExperimentConfig {
    /// Resolves and validates `raw`. With `paper_budget` the training
    /// budget keys are replaced by the published values.
    pub fn resolve(raw: &RawConfig, paper_budget: bool) -> Result<Self> {
        let seed = raw.value("seed", 0u64)?;
        let cir: Cir = raw.core("channel.cir", Cir::proakis_c())?;
        let order = raw.value("modulation.order", 2usize)?;
        let constellation = Constellation::for_order(order).map_err(|e| CliError::Config(e.to_string()))?;
        let bps = constellation.bits_per_symbol();

        let code = resolve_code(raw)?;
        let block_len = match &code {
            Some(c) => {
                let n = c.pcm.num_transmitted();
                if raw.contains("channel.block_len") {
                    return Err(CliError::Config("`channel.block_len` is derived from the code".into()));
                }
                if n % bps != 0 {
                    return Err(CliError::Config(format!("{n} transmitted bits do not fill {order}-ary symbols")));
                }
                n / bps
            }
            None => raw.value("channel.block_len", 512usize)?,
        };
        if block_len == 0 {
            return Err(CliError::Config("block length must be positive".into()));
        }
        let rate = code.as_ref().map_or(1.0, CodeSection::rate);
        let sweep = resolve_sweep(raw, rate, bps)?;
        let csi_error_variance = raw.value("channel.csi_error_variance", 0.0f64)?;
        if csi_error_variance.is_nan() || csi_error_variance < 0.0 {
            return Err(CliError::Config("`channel.csi_error_variance` must be ≥ 0".into()));
        }

        let kind: ReceiverKind = raw.value_with("detector.kind", ReceiverKind::Bcjr)?;
        let graph = match raw.get("detector.graph").unwrap_or("ffg") {
            "ffg" => DetectionKind::Ffg,
            "ufg" => DetectionKind::Ufg,
            g => return Err(CliError::Config(format!("unknown graph `{g}`"))),
        };
        let iterations = raw.value("detector.iterations", 8usize)?;
        let schedule: Schedule = raw.core("detector.schedule", Schedule::flooding(iterations))?;
        let damping = raw.value("detector.damping", 1.0)?;
        if !(damping > 0.0 && damping <= 1.0) {
            return Err(CliError::Config(format!("damping {damping} must lie in (0, 1]")));
        }
        let model = GnnConfig {
            model: match raw.get("detector.model").unwrap_or("gnn") {
                "gnn" => ModelKind::Gnn,
                "fgnn" => ModelKind::Fgnn,
                m => return Err(CliError::Config(format!("unknown model `{m}`"))),
            },
            embedding: raw.core("detector.embedding", EmbeddingKind::Linear)?,
            feature_size: raw.value("detector.feature_size", 16usize)?,
            hidden_units: raw.value("detector.hidden_units", 64usize)?,
            hidden_layers: raw.value("detector.hidden_layers", 2usize)?,
            with_checks: kind == ReceiverKind::Jdd,
            with_prior: raw.flag("detector.prior", false)?,
            noise_input: raw.flag("detector.noise_input", true)?,
            block_len: Some(block_len),
            ..GnnConfig::detection(graph, order, cir.memory())
        };
        if kind.is_neural() {
            model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        let detector = DetectorSection {
            kind,
            graph,
            iterations,
            damping,
            schedule,
            turbo_iterations: raw.value("detector.turbo_iterations", 0usize)?,
            model,
            checkpoint: raw.existing_path("detector.checkpoint")?,
            retrain_per_point: raw.flag("detector.retrain_per_point", false)?,
        };
        if kind == ReceiverKind::Jdd {
            if code.is_none() {
                return Err(CliError::Config("detector `jdd` needs a code".into()));
            }
            if order != 2 {
                return Err(CliError::Config("detector `jdd` needs BPSK".into()));
            }
        }
        if detector.turbo_iterations > 0 {
            if code.is_none() {
                return Err(CliError::Config("turbo iterations need a code".into()));
            }
            let with_priors = match kind {
                ReceiverKind::Bcjr | ReceiverKind::Spa => true,
                ReceiverKind::Gnn => detector.model.with_prior,
                ReceiverKind::Lmmse | ReceiverKind::Jdd => false,
            };
            if !with_priors {
                return Err(CliError::Config("turbo iterations need a detector that accepts priors".into()));
            }
        }

        let decoder = DecoderSection {
            iterations: raw.value("decoder.iterations", 20usize)?,
            early_stop: raw.flag("decoder.early_stop", true)?,
        };
        let sim = SimSection {
            max_frames: raw.value("sim.max_frames", 10_000usize)?,
            min_frame_errors: raw.value("sim.min_frame_errors", 100usize)?,
            block_frames: raw.value("sim.block_frames", 64usize)?,
        };
        if sim.max_frames == 0 || sim.block_frames == 0 {
            return Err(CliError::Config("`sim.max_frames` and `sim.block_frames` must be positive".into()));
        }

        let train = resolve_train(raw, &detector, seed, paper_budget)?;
        let exit = ExitSection {
            snr_db: raw.value("exit.snr_db", sweep[0].snr_db)?,
            ia_grid: match raw.get("exit.ia_grid") {
                Some(v) => parse_list(v).map_err(|e| CliError::Config(format!("`exit.ia_grid`: {e}")))?,
                None => (0..20).map(|i| i as f64 / 20.0).chain([0.99]).collect(),
            },
            method: raw.core("exit.method", ExitMethod::Subtract)?,
            samples: raw.value("exit.samples", 200_000usize)?,
            component: match raw.get("exit.component").unwrap_or("both") {
                "detector" => ExitPart::Detector,
                "decoder" => ExitPart::Decoder,
                "both" => ExitPart::Both,
                c => return Err(CliError::Config(format!("unknown EXIT component `{c}`"))),
            },
            turbo_iterations: raw.value("exit.turbo_iterations", 0usize)?,
            frames: raw.value("exit.frames", 100usize)?,
        };
        if exit.ia_grid.iter().any(|&ia| !(0.0..1.0).contains(&ia)) {
            return Err(CliError::Config("`exit.ia_grid` values must lie in [0, 1)".into()));
        }
        let latency = LatencySection {
            snr_db: raw.value("latency.snr_db", sweep[0].snr_db)?,
            methods: parse_methods(raw.get("latency.methods").unwrap_or("bcjr,spa:4,spa:8"))?,
        };
        let output = OutputSection {
            csv: raw.path("output.csv"),
            checkpoint: raw.path("output.checkpoint"),
            trajectory: raw.path("output.trajectory"),
        };
        Ok(Self {
            seed,
            cir,
            constellation,
            block_len,
            csi_error_variance,
            sweep,
            code,
            detector,
            decoder,
            sim,
            train,
            exit,
            latency,
            output,
            hash: raw.hash(if paper_budget { "paper_budget\n" } else { "" }),
        })
    }

    /// Seed of sweep point `index`.
    pub fn point_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_add(index as u64)
    }
}

impl RawConfig {
    fn value_with<T: FromStr<Err = CliError>>(&self, key: &str, default: T) -> Result<T> {
        self.get(key).map_or(Ok(default), str::parse)
    }
}

fn resolve_code(raw: &RawConfig) -> Result<Option<CodeSection>> {
    let pcm = match (raw.get("code.name"), raw.existing_path("code.alist")?) {
        (Some(_), Some(_)) => return Err(CliError::Config("give either `code.name` or `code.alist`".into())),
        (Some(name), None) => {
            let code = ShippedCode::from_name(name).ok_or_else(|| CliError::Config(format!("unknown code `{name}`")))?;
            shipped_code(code)?
        }
        (None, Some(path)) => load_alist(&std::fs::read_to_string(&path)?)?,
        (None, None) => return Ok(None),
    };
    let label = raw.get("code.name").or(raw.get("code.alist")).unwrap_or_default().to_string();
    let pcm = match raw.get("code.puncture") {
        Some(list) => {
            let cols = list
                .split(',')
                .map(|c| c.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| CliError::Config(format!("`code.puncture`: cannot parse `{list}`")))?;
            pcm.with_puncture(cols).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => pcm,
    };
    let encoder = Encoder::new(&pcm)?;
    let n = pcm.num_transmitted();
    let interleaver = match raw.get("code.interleaver").unwrap_or("random") {
        "random" => Interleaver::random(n, &mut seeded(raw.value("code.interleaver_seed", 0u64)?)),
        "identity" => Interleaver::identity(n),
        v => return Err(CliError::Config(format!("unknown interleaver `{v}`"))),
    };
    Ok(Some(CodeSection {
        label,
        pcm,
        encoder,
        interleaver,
    }))
}

fn resolve_sweep(raw: &RawConfig, rate: f64, bps: usize) -> Result<Vec<NoisePoint>> {
    let given: Vec<&str> = ["channel.snr_db", "channel.ebn0_db", "channel.sigma2"]
        .into_iter()
        .filter(|k| raw.contains(k))
        .collect();
    let key = match given[..] {
        [] => return Ok(vec![point_from_snr(10.0)]),
        [k] => k,
        _ => return Err(CliError::Config("give only one of snr_db, ebn0_db and sigma2".into())),
    };
    let values = parse_list(raw.get(key).unwrap_or_default()).map_err(|e| CliError::Config(format!("`{key}`: {e}")))?;
    values
        .into_iter()
        .map(|v| match key {
            "channel.snr_db" => Ok(point_from_snr(v)),
            "channel.ebn0_db" => Ok(point_from_sigma2(ebn0_to_sigma2(v, rate, bps)?)),
            _ if v > 0.0 => Ok(point_from_sigma2(v)),
            _ => Err(CliError::Config(format!("noise variance {v} must be positive"))),
        })
        .collect()
}

fn point_from_snr(snr_db: f64) -> NoisePoint {
    NoisePoint {
        snr_db,
        sigma2: snr_db_to_sigma2(snr_db),
    }
}

fn point_from_sigma2(sigma2: f64) -> NoisePoint {
    NoisePoint {
        snr_db: -10.0 * sigma2.log10(),
        sigma2,
    }
}

fn resolve_train(raw: &RawConfig, detector: &DetectorSection, seed: u64, paper_budget: bool) -> Result<TrainSection> {
    let joint = detector.kind == ReceiverKind::Jdd;
    let base = TrainConfig::default();
    let mut config = TrainConfig {
        batch_size: raw.value("train.batch_size", base.batch_size)?,
        epochs: raw.value("train.epochs", base.epochs)?,
        snr_range_db: raw.pair("train.snr_db", base.snr_range_db)?,
        learning_rate: raw.value("train.learning_rate", base.learning_rate)?,
        schedule: detector.schedule.clone(),
        loss: raw.core("train.loss", LossKind::Multi)?,
        seed,
        ia_range: raw.pair("train.ia_range", base.ia_range)?,
        chunk_size: raw.value("train.chunk_size", base.chunk_size)?,
    };
    if paper_budget {
        let full = if joint {
            TrainConfig::full_joint()
        } else {
            TrainConfig::full_detection()
        };
        config.batch_size = full.batch_size;
        config.epochs = full.epochs;
        config.learning_rate = full.learning_rate;
        if joint {
            config.snr_range_db = full.snr_range_db;
            config.schedule = full.schedule;
        }
    }
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let procedure = match raw.get("train.procedure").unwrap_or("plain") {
        "plain" => TrainProcedure::Plain,
        "gaussian-prior" => TrainProcedure::GaussianPrior,
        "two-stage" => TrainProcedure::TwoStage,
        p => return Err(CliError::Config(format!("unknown procedure `{p}`"))),
    };
    if procedure == TrainProcedure::GaussianPrior && !detector.model.with_prior {
        return Err(CliError::Config("procedure `gaussian-prior` needs `detector.prior = true`".into()));
    }
    let stage1_schedule: Option<Schedule> = raw
        .get("train.stage1_schedule")
        .map(|s| s.parse().map_err(|e: isi_gnn::Error| CliError::Config(e.to_string())))
        .transpose()?;
    let stage1_epochs = raw.value("train.stage1_epochs", 0u64)?;
    if procedure == TrainProcedure::TwoStage && (stage1_schedule.is_none() || stage1_epochs > config.epochs) {
        return Err(CliError::Config(
            "procedure `two-stage` needs `train.stage1_schedule` and `train.stage1_epochs` ≤ `train.epochs`".into(),
        ));
    }
    Ok(TrainSection {
        config,
        procedure,
        stage1_schedule,
        stage1_epochs,
        resume: raw.existing_path("train.resume")?,
    })
}

fn parse_methods(text: &str) -> Result<Vec<LatencyEntry>> {
    text.split(',')
        .map(|tok| {
            let tok = tok.trim();
            let (method, it) = tok.split_once(':').unwrap_or((tok, "1"));
            let iterations = it
                .parse::<usize>()
                .map_err(|_| CliError::Config(format!("`latency.methods`: bad entry `{tok}`")))?;
            if !matches!(method, "bcjr" | "spa" | "gnn" | "jdd") || iterations == 0 {
                return Err(CliError::Config(format!("`latency.methods`: bad entry `{tok}`")));
            }
            Ok(LatencyEntry {
                method: method.to_string(),
                iterations,
            })
        })
        .collect()
}
