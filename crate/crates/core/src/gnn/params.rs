use rand::Rng;

use crate::error::{Error, Result};
use crate::graphs::{DetectionKind, FnClass};
use crate::neural_core::params::join;
use crate::neural_core::{glorot_init, standard_normal, Mlp, Parameterized, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// Node and edge MLPs.
    Gnn,
    /// Aggregation-only nodes, edges scaled by a learned per-type matrix.
    Fgnn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingKind {
    /// `W · [Re, Im, (σ²)]` of the observation (FFG) or of `χ` (UFG).
    Linear,
    /// Max-normalized log-likelihoods, linearly projected.
    Llr,
    /// MLP over the observation, the CIR and (optionally) σ².
    NeuralCsi,
    /// Learnable constant-channel receive filter, then linear.
    Cct,
}

impl EmbeddingKind {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingKind::Linear => "linear",
            EmbeddingKind::Llr => "llr",
            EmbeddingKind::NeuralCsi => "neural-csi",
            EmbeddingKind::Cct => "cct",
        }
    }
}

impl std::str::FromStr for EmbeddingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(EmbeddingKind::Linear),
            "llr" => Ok(EmbeddingKind::Llr),
            "neural-csi" | "csi" => Ok(EmbeddingKind::NeuralCsi),
            "cct" => Ok(EmbeddingKind::Cct),
            _ => Err(Error::InvalidConfig(format!("unknown embedding `{s}`"))),
        }
    }
}

/// Largest log-likelihood table accepted by the LLR embedding.
pub const DEFAULT_LLR_BUDGET: usize = 1 << 12;

#[derive(Clone, Debug, PartialEq)]
pub struct GnnConfig {
    pub model: ModelKind,
    pub detection: DetectionKind,
    pub embedding: EmbeddingKind,
    pub feature_size: usize,
    pub hidden_units: usize,
    pub hidden_layers: usize,
    pub modulation_order: usize,
    pub memory: usize,
    /// Adds parity-check FN weights for joint detection-decoding.
    pub with_checks: bool,
    /// Adds the prior embedding `W_V`.
    pub with_prior: bool,
    /// Appends σ² to the linear, neural-CSI and CCT embedding inputs.
    pub noise_input: bool,
    /// Block length; required by the CCT embedding, whose band is per row.
    pub block_len: Option<usize>,
    pub llr_budget: usize,
}

impl GnnConfig {
    /// Detection defaults: d = 16, two hidden layers of 64 units.
    pub fn detection(detection: DetectionKind, modulation_order: usize, memory: usize) -> Self {
        Self {
            model: ModelKind::Gnn,
            detection,
            embedding: EmbeddingKind::Linear,
            feature_size: 16,
            hidden_units: 64,
            hidden_layers: 2,
            modulation_order,
            memory,
            with_checks: false,
            with_prior: false,
            noise_input: true,
            block_len: None,
            llr_budget: DEFAULT_LLR_BUDGET,
        }
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.modulation_order.trailing_zeros() as usize
    }

    /// `N_p`: number of distinct detection edge attributes per direction.
    pub fn num_edge_types(&self) -> usize {
        match self.detection {
            DetectionKind::Ffg => self.memory + 1,
            DetectionKind::Ufg => 2 * self.memory,
        }
    }

    /// Width of the raw per-node embedding input.
    pub fn embedding_input_dim(&self) -> Result<usize> {
        let noise = usize::from(self.noise_input);
        let m = self.modulation_order;
        Ok(match (self.embedding, self.detection) {
            (EmbeddingKind::Linear, _) | (EmbeddingKind::Cct, DetectionKind::Ffg) => 2 + noise,
            (EmbeddingKind::Llr, DetectionKind::Ffg) => {
                let size = m
                    .checked_pow(self.memory as u32 + 1)
                    .filter(|&s| s <= self.llr_budget)
                    .ok_or_else(|| {
                        Error::BudgetExceeded(format!(
                            "LLR embedding needs M^(L+1) = {m}^{} entries, budget {}",
                            self.memory + 1,
                            self.llr_budget
                        ))
                    })?;
                size
            }
            (EmbeddingKind::Llr, DetectionKind::Ufg) => m,
            (EmbeddingKind::NeuralCsi, _) => 2 + 2 * (self.memory + 1) + noise,
            (EmbeddingKind::Cct, DetectionKind::Ufg) => {
                return Err(Error::Unsupported("CCT embedding is defined for the FFG only".into()))
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_size == 0 || self.hidden_units == 0 {
            return Err(Error::InvalidConfig("feature size and hidden units must be positive".into()));
        }
        if !self.modulation_order.is_power_of_two() || self.modulation_order < 2 {
            return Err(Error::InvalidConfig(format!(
                "modulation order must be a power of two ≥ 2, got {}",
                self.modulation_order
            )));
        }
        if self.with_checks && self.modulation_order != 2 {
            return Err(Error::Unsupported("joint detection-decoding requires BPSK".into()));
        }
        if self.embedding == EmbeddingKind::Cct && self.block_len.is_none() {
            return Err(Error::InvalidConfig("CCT embedding needs a fixed block length".into()));
        }
        self.embedding_input_dim().map(|_| ())
    }
}

/// Weights of one FN class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassWeights {
    /// FN update `θ_F` (GNN only).
    pub fn_update: Option<Mlp>,
    /// `θ_{F→V}`
    pub f2v: Mlp,
    /// `θ_{V→F}`
    pub v2f: Mlp,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EmbeddingParams {
    Linear { w: Tensor },
    Llr { w: Tensor },
    NeuralCsi { mlp: Mlp },
    /// `band[i, k]` is `H̃[i, i+k]`; `w` projects `[Re ỹ, Im ỹ, (σ²)]`.
    Cct { band: Tensor, w: Tensor },
}

/// All trainable state of a GNN or FGNN.
#[derive(Clone, Debug, PartialEq)]
pub struct GnnParameters {
    pub config: GnnConfig,
    /// Shared VN update `θ_V` (GNN only).
    pub vn_update: Option<Mlp>,
    pub detection: ClassWeights,
    pub check: Option<ClassWeights>,
    /// FGNN feature-extraction matrix generator `θ_E`, output `d²`.
    pub edge_matrix: Option<Mlp>,
    /// VN attributes: row 0 payload, row 1 virtual. Node attributes only
    /// enter the GNN node updates; the FGNN does not expose them.
    pub vn_attr: Tensor,
    /// Detection FN attribute (1 × d).
    pub fn_attr: Tensor,
    /// Detection edge attributes, `N_p × d` per direction.
    pub f2v_attr: Tensor,
    pub v2f_attr: Tensor,
    pub embedding: EmbeddingParams,
    /// Prior embedding `W_V` (d × log2 M).
    pub prior: Option<Tensor>,
    /// Readout, `log2 M × d`.
    pub readout: Tensor,
}

impl GnnParameters {
    pub fn new<R: Rng + ?Sized>(config: GnnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.feature_size;
        let (hu, hl) = (config.hidden_units, config.hidden_layers);
        let k = config.bits_per_symbol();
        let class = |rng: &mut R| -> Result<ClassWeights> {
            Ok(match config.model {
                ModelKind::Gnn => ClassWeights {
                    fn_update: Some(Mlp::with_hidden(3 * d, hu, hl, d, rng)?),
                    f2v: Mlp::with_hidden(3 * d, hu, hl, d, rng)?,
                    v2f: Mlp::with_hidden(3 * d, hu, hl, d, rng)?,
                },
                ModelKind::Fgnn => ClassWeights {
                    fn_update: None,
                    f2v: Mlp::with_hidden(2 * d, hu, hl, d, rng)?,
                    v2f: Mlp::with_hidden(2 * d, hu, hl, d, rng)?,
                },
            })
        };
        let vn_update = match config.model {
            ModelKind::Gnn => Some(Mlp::with_hidden(3 * d, hu, hl, d, rng)?),
            ModelKind::Fgnn => None,
        };
        let detection = class(rng)?;
        let check = if config.with_checks { Some(class(rng)?) } else { None };
        let edge_matrix = match config.model {
            ModelKind::Gnn => None,
            ModelKind::Fgnn => Some(Mlp::new(&[d, d, d * d], rng)?),
        };
        let np = config.num_edge_types().max(1);
        let vn_attr = standard_normal(2, d, rng);
        let fn_attr = standard_normal(1, d, rng);
        let f2v_attr = standard_normal(np, d, rng);
        let v2f_attr = standard_normal(np, d, rng);
        let input = config.embedding_input_dim()?;
        let embedding = match config.embedding {
            EmbeddingKind::Linear => EmbeddingParams::Linear {
                w: glorot_init(input, d, rng)?,
            },
            EmbeddingKind::Llr => EmbeddingParams::Llr {
                w: glorot_init(input, d, rng)?,
            },
            EmbeddingKind::NeuralCsi => EmbeddingParams::NeuralCsi {
                mlp: Mlp::with_hidden(input, hu, hl, d, rng)?,
            },
            EmbeddingKind::Cct => {
                let n = config.block_len.expect("validated") + config.memory;
                EmbeddingParams::Cct {
                    band: Tensor::ones((n, config.memory + 1)),
                    w: glorot_init(input, d, rng)?,
                }
            }
        };
        let prior = if config.with_prior {
            Some(glorot_init(k, d, rng)?)
        } else {
            None
        };
        let readout = glorot_init(d, k, rng)?;
        Ok(Self {
            config,
            vn_update,
            detection,
            check,
            edge_matrix,
            vn_attr,
            fn_attr,
            f2v_attr,
            v2f_attr,
            embedding,
            prior,
            readout,
        })
    }

    pub fn class(&self, class: FnClass) -> Option<&ClassWeights> {
        match class {
            FnClass::Detection => Some(&self.detection),
            FnClass::Check => self.check.as_ref(),
        }
    }

    /// Parameter-name prefix of a class.
    pub fn class_prefix(class: FnClass) -> &'static str {
        match class {
            FnClass::Detection => "det",
            FnClass::Check => "chk",
        }
    }
}

fn visit_class(c: &ClassWeights, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
    if let Some(m) = &c.fn_update {
        m.visit(&join(prefix, "fn"), f);
    }
    c.f2v.visit(&join(prefix, "f2v"), f);
    c.v2f.visit(&join(prefix, "v2f"), f);
}

fn visit_class_mut(c: &mut ClassWeights, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
    if let Some(m) = &mut c.fn_update {
        m.visit_mut(&join(prefix, "fn"), f);
    }
    c.f2v.visit_mut(&join(prefix, "f2v"), f);
    c.v2f.visit_mut(&join(prefix, "v2f"), f);
}

impl Parameterized for GnnParameters {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        if let Some(m) = &self.vn_update {
            m.visit(&join(prefix, "vn"), f);
        }
        visit_class(&self.detection, &join(prefix, "det"), f);
        if let Some(c) = &self.check {
            visit_class(c, &join(prefix, "chk"), f);
        }
        if let Some(m) = &self.edge_matrix {
            m.visit(&join(prefix, "edge"), f);
        }
        if self.config.model == ModelKind::Gnn {
            f(&join(prefix, "attr.vn"), &self.vn_attr);
            f(&join(prefix, "attr.fn"), &self.fn_attr);
        }
        f(&join(prefix, "attr.f2v"), &self.f2v_attr);
        f(&join(prefix, "attr.v2f"), &self.v2f_attr);
        match &self.embedding {
            EmbeddingParams::Linear { w } | EmbeddingParams::Llr { w } => f(&join(prefix, "embed.w"), w),
            EmbeddingParams::NeuralCsi { mlp } => mlp.visit(&join(prefix, "embed.csi"), f),
            EmbeddingParams::Cct { band, w } => {
                f(&join(prefix, "embed.band"), band);
                f(&join(prefix, "embed.w"), w);
            }
        }
        if let Some(p) = &self.prior {
            f(&join(prefix, "prior.w"), p);
        }
        f(&join(prefix, "readout"), &self.readout);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        if let Some(m) = &mut self.vn_update {
            m.visit_mut(&join(prefix, "vn"), f);
        }
        visit_class_mut(&mut self.detection, &join(prefix, "det"), f);
        if let Some(c) = &mut self.check {
            visit_class_mut(c, &join(prefix, "chk"), f);
        }
        if let Some(m) = &mut self.edge_matrix {
            m.visit_mut(&join(prefix, "edge"), f);
        }
        if self.config.model == ModelKind::Gnn {
            f(&join(prefix, "attr.vn"), &mut self.vn_attr);
            f(&join(prefix, "attr.fn"), &mut self.fn_attr);
        }
        f(&join(prefix, "attr.f2v"), &mut self.f2v_attr);
        f(&join(prefix, "attr.v2f"), &mut self.v2f_attr);
        match &mut self.embedding {
            EmbeddingParams::Linear { w } | EmbeddingParams::Llr { w } => f(&join(prefix, "embed.w"), w),
            EmbeddingParams::NeuralCsi { mlp } => mlp.visit_mut(&join(prefix, "embed.csi"), f),
            EmbeddingParams::Cct { band, w } => {
                f(&join(prefix, "embed.band"), band);
                f(&join(prefix, "embed.w"), w);
            }
        }
        if let Some(p) = &mut self.prior {
            f(&join(prefix, "prior.w"), p);
        }
        f(&join(prefix, "readout"), &mut self.readout);
    }
}
