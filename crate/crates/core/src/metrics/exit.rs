//! EXIT transfer characteristics and measured turbo trajectories.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use super::{bmi_raw, ExitCurve};
use crate::channel::{apply_isi, random_bits, snr_db_to_sigma2, Cir, Constellation};
use crate::classical::{bcjr_raw, DEFAULT_TRANSITION_BUDGET};
use crate::error::{Error, Result};
use crate::gnn::{detect_batch, Frame, GnnParameters, Schedule};
use crate::graphs::{BipartiteGraph, Interleaver};
use crate::ldpc::{spa_decode, Encoder, ParityCheckMatrix};
use crate::llr::saturate;
use crate::parallel::{map_indexed, ExecMode};
use crate::rng::{stream, SimRng};
use crate::training::sample_prior_llrs;

/// Largest block for which the omit-index method is accepted.
pub const OMIT_INDEX_BIT_LIMIT: usize = 64;

/// How extrinsic LLRs are obtained from a prior-conditioned component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExitMethod {
    /// `ℓ_E = ℓ_T − ℓ_A`.
    #[default]
    Subtract,
    /// One run per bit with that bit's prior set to zero.
    OmitIndex,
}

impl ExitMethod {
    pub fn name(self) -> &'static str {
        match self {
            ExitMethod::Subtract => "subtract",
            ExitMethod::OmitIndex => "omit-index",
        }
    }
}

impl fmt::Display for ExitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "subtract" => Ok(ExitMethod::Subtract),
            "omit-index" | "omit_index" => Ok(ExitMethod::OmitIndex),
            other => Err(Error::InvalidConfig(format!("unknown EXIT method `{other}`"))),
        }
    }
}

/// One random realization seen by a component.
#[derive(Clone, Debug)]
pub struct Draw {
    /// Bits the component's LLRs refer to.
    pub bits: Vec<u8>,
    /// Channel observations; empty for decoders.
    pub y: Vec<Complex64>,
    pub sigma2: f64,
    pub cir: Option<Cir>,
}

/// A soft-in soft-out receiver component.
pub trait ExitComponent: Sync {
    fn label(&self) -> String;
    fn num_bits(&self) -> usize;
    fn snr_db(&self) -> f64 {
        f64::NAN
    }
    fn draw(&self, rng: &mut SimRng) -> Result<Draw>;
    /// Total LLRs given one prior LLR per bit.
    fn total_llrs(&self, draw: &Draw, priors: &[f64]) -> Result<Vec<f64>>;
    /// `ℓ_T − ℓ_A`; components that form it before saturating their output
    /// override this.
    fn subtract_extrinsic(&self, draw: &Draw, priors: &[f64]) -> Result<Vec<f64>> {
        let total = self.total_llrs(draw, priors)?;
        Ok(total.iter().zip(priors).map(|(t, a)| saturate(t - a)).collect())
    }
}

/// Extrinsic LLRs of `component` by `method`.
pub fn extrinsic(component: &dyn ExitComponent, draw: &Draw, priors: &[f64], method: ExitMethod) -> Result<Vec<f64>> {
    match method {
        ExitMethod::Subtract => component.subtract_extrinsic(draw, priors),
        ExitMethod::OmitIndex => {
            let mut p = priors.to_vec();
            let mut out = Vec::with_capacity(p.len());
            for j in 0..p.len() {
                let keep = p[j];
                p[j] = 0.0;
                out.push(component.total_llrs(draw, &p)?[j]);
                p[j] = keep;
            }
            Ok(out)
        }
    }
}

/// Channel, constellation and block length of a detection link.
#[derive(Clone, Debug)]
pub struct Link {
    pub cir: Cir,
    pub constellation: Constellation,
    pub block_len: usize,
    pub snr_db: f64,
}

impl Link {
    pub fn sigma2(&self) -> f64 {
        snr_db_to_sigma2(self.snr_db)
    }

    pub fn num_bits(&self) -> usize {
        self.block_len * self.constellation.bits_per_symbol()
    }

    /// Transmits `bits` (one block) over the link.
    pub fn transmit(&self, bits: Vec<u8>, rng: &mut SimRng) -> Result<Draw> {
        let x = self.constellation.modulate(&bits)?;
        let sigma2 = self.sigma2();
        let y = apply_isi(&x, &self.cir, sigma2, rng)?;
        Ok(Draw {
            bits,
            y,
            sigma2,
            cir: Some(self.cir.clone()),
        })
    }
}

/// A detector that accepts prior bit LLRs.
pub trait PriorDetector: Sync {
    fn label(&self) -> String;
    fn total_llrs(&self, link: &Link, draw: &Draw, priors: &[f64]) -> Result<Vec<f64>>;
}

/// Exact MAP detection.
#[derive(Clone, Copy, Debug, Default)]
pub struct BcjrDetector;

impl PriorDetector for BcjrDetector {
    fn label(&self) -> String {
        "bcjr".into()
    }

    fn total_llrs(&self, link: &Link, draw: &Draw, priors: &[f64]) -> Result<Vec<f64>> {
        let raw = bcjr_raw(
            &draw.y,
            &link.cir,
            draw.sigma2,
            &link.constellation,
            Some(priors),
            DEFAULT_TRANSITION_BUDGET,
        )?;
        Ok(raw.into_iter().map(saturate).collect())
    }
}

/// A trained GNN; priors enter through its prior embedding when present.
pub struct GnnPriorDetector<'a> {
    pub params: &'a GnnParameters,
    pub graph: &'a BipartiteGraph,
    pub schedule: Schedule,
}

impl PriorDetector for GnnPriorDetector<'_> {
    fn label(&self) -> String {
        format!("{:?}-{}", self.params.config.model, self.params.config.embedding.name()).to_lowercase()
    }

    fn total_llrs(&self, link: &Link, draw: &Draw, priors: &[f64]) -> Result<Vec<f64>> {
        let mut frame = Frame::new(draw.y.clone(), draw.sigma2, link.cir.clone());
        if self.params.prior.is_some() {
            frame = frame.with_prior(priors.to_vec());
        }
        let mut out = detect_batch(self.params, self.graph, std::slice::from_ref(&frame), &self.schedule)?;
        let last = out.remove(0).pop().ok_or_else(|| Error::InvalidConfig("empty schedule".into()))?;
        Ok(last.values)
    }
}

/// A detector bound to its link.
pub struct DetectorComponent<'a> {
    pub link: Link,
    pub detector: &'a dyn PriorDetector,
}

impl ExitComponent for DetectorComponent<'_> {
    fn label(&self) -> String {
        self.detector.label()
    }

    fn num_bits(&self) -> usize {
        self.link.num_bits()
    }

    fn snr_db(&self) -> f64 {
        self.link.snr_db
    }

    fn draw(&self, rng: &mut SimRng) -> Result<Draw> {
        let bits = random_bits(self.num_bits(), rng);
        self.link.transmit(bits, rng)
    }

    fn total_llrs(&self, draw: &Draw, priors: &[f64]) -> Result<Vec<f64>> {
        self.detector.total_llrs(&self.link, draw, priors)
    }
}

/// Belief-propagation LDPC decoding over the transmitted code bits;
/// punctured positions enter with zero LLR.
pub struct LdpcComponent {
    pub pcm: ParityCheckMatrix,
    pub encoder: Encoder,
    pub iterations: usize,
    pub early_stop: bool,
}

impl LdpcComponent {
    pub fn new(pcm: ParityCheckMatrix, iterations: usize) -> Result<Self> {
        let encoder = Encoder::new(&pcm)?;
        Ok(Self {
            pcm,
            encoder,
            iterations,
            early_stop: true,
        })
    }

    /// Random codeword restricted to its transmitted positions.
    pub fn random_transmitted(&self, rng: &mut SimRng) -> Result<Vec<u8>> {
        let info = random_bits(self.encoder.k(), rng);
        let word = self.encoder.encode(&info)?;
        Ok(self.pcm.transmitted_bits(&word))
    }

    /// Posterior and extrinsic LLRs at the transmitted positions.
    pub fn decode_transmitted(&self, priors: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let full = self.pcm.depuncture(priors);
        let out = spa_decode(&self.pcm, &full, self.iterations, self.early_stop)?;
        Ok((
            self.pcm.transmitted_llrs(&out.posterior.values),
            self.pcm.transmitted_llrs(&out.extrinsic.values),
        ))
    }
}

impl ExitComponent for LdpcComponent {
    fn label(&self) -> String {
        format!("ldpc-{}x{}", self.pcm.cols(), self.pcm.rows())
    }

    fn num_bits(&self) -> usize {
        self.pcm.num_transmitted()
    }

    fn draw(&self, rng: &mut SimRng) -> Result<Draw> {
        Ok(Draw {
            bits: self.random_transmitted(rng)?,
            y: Vec::new(),
            sigma2: 0.0,
            cir: None,
        })
    }

    fn total_llrs(&self, _draw: &Draw, priors: &[f64]) -> Result<Vec<f64>> {
        Ok(self.decode_transmitted(priors)?.0)
    }

    fn subtract_extrinsic(&self, _draw: &Draw, priors: &[f64]) -> Result<Vec<f64>> {
        Ok(self.decode_transmitted(priors)?.1)
    }
}

/// Measures `T(I_A)` on `ia_grid`, drawing at least `samples` LLRs per
/// point. Priors are consistent Gaussian LLRs at `μ(I_A)`. Grid point `g`
/// and trial `t` use the stream `(seed, g, t)`, so both methods see the
/// same realizations under the same seed.
pub fn exit_characteristic(
    component: &dyn ExitComponent,
    ia_grid: &[f64],
    method: ExitMethod,
    samples: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<ExitCurve> {
    let n = component.num_bits();
    if n == 0 {
        return Err(Error::InvalidLength("component has no bits".into()));
    }
    if method == ExitMethod::OmitIndex && n > OMIT_INDEX_BIT_LIMIT {
        return Err(Error::BudgetExceeded(format!(
            "omit-index needs one run per bit; {n} bits exceed the limit of {OMIT_INDEX_BIT_LIMIT}"
        )));
    }
    if ia_grid.is_empty() || ia_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("I_A grid must be nonempty and strictly increasing".into()));
    }
    let trials = samples.div_ceil(n).max(1);
    let mut ie_raw = Vec::with_capacity(ia_grid.len());
    for (g, &ia) in ia_grid.iter().enumerate() {
        let results = map_indexed(mode, trials, |t| -> Result<(Vec<u8>, Vec<f64>)> {
            let mut rng = stream(seed, &[g as u64, t as u64]);
            let draw = component.draw(&mut rng)?;
            let priors = sample_prior_llrs(&draw.bits, ia, &mut rng)?.llrs.values;
            let ext = extrinsic(component, &draw, &priors, method)?;
            Ok((draw.bits, ext))
        });
        let mut bits = Vec::with_capacity(trials * n);
        let mut llrs = Vec::with_capacity(trials * n);
        for r in results {
            let (b, l) = r?;
            bits.extend(b);
            llrs.extend(l);
        }
        ie_raw.push(bmi_raw(&bits, &llrs)?);
    }
    Ok(ExitCurve {
        ia_grid: ia_grid.to_vec(),
        ie_values: ie_raw.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        ie_raw,
        snr_db: component.snr_db(),
        component: component.label(),
        method,
        samples: trials * n,
    })
}

/// One half-iteration of a measured trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryPoint {
    /// `"det"` or `"dec"`.
    pub component: &'static str,
    pub iteration: usize,
    pub ia: f64,
    pub ie: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    /// First turbo iteration whose detector or decoder `I_E` fell by more
    /// than [`Trajectory::DIVERGENCE_DROP`].
    pub diverged_at: Option<usize>,
}

impl Trajectory {
    pub const DIVERGENCE_DROP: f64 = 0.05;

    pub fn csv_header() -> &'static str {
        "iteration,component,ia,ie"
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.points
            .iter()
            .map(|p| format!("{},{},{:.6},{:.6}", p.iteration, p.component, p.ia, p.ie))
            .collect()
    }
}

struct FrameHistory {
    /// Interleaved (detector-order) bits.
    det_bits: Vec<u8>,
    /// Transmitted code bits in codeword order.
    dec_bits: Vec<u8>,
    /// Per iteration: detector prior, detector extrinsic, decoder extrinsic.
    rounds: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

/// Runs `frames` coded transmissions through `max_turbo_iterations` real
/// turbo rounds and measures the information exchanged at every step.
#[allow(clippy::too_many_arguments)]
pub fn exit_trajectory(
    link: &Link,
    detector: &dyn PriorDetector,
    decoder: &LdpcComponent,
    interleaver: &Interleaver,
    max_turbo_iterations: usize,
    frames: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<Trajectory> {
    let n = decoder.num_bits();
    if link.num_bits() != n || interleaver.len() != n {
        return Err(Error::InvalidLength(format!(
            "link carries {} bits, code transmits {n}, interleaver has {}",
            link.num_bits(),
            interleaver.len()
        )));
    }
    let histories = map_indexed(mode, frames, |f| -> Result<FrameHistory> {
        let mut rng = stream(seed, &[f as u64]);
        let dec_bits = decoder.random_transmitted(&mut rng)?;
        let det_bits = interleaver.interleave(&dec_bits);
        let draw = link.transmit(det_bits.clone(), &mut rng)?;
        let mut det_prior = vec![0.0; n];
        let mut rounds = Vec::new();
        for _ in 0..=max_turbo_iterations {
            let total = detector.total_llrs(link, &draw, &det_prior)?;
            let det_ext: Vec<f64> = total.iter().zip(&det_prior).map(|(t, a)| saturate(t - a)).collect();
            let dec_prior = interleaver.deinterleave(&det_ext);
            let (_, dec_ext) = decoder.decode_transmitted(&dec_prior)?;
            let next_prior = interleaver.interleave(&dec_ext);
            rounds.push((std::mem::replace(&mut det_prior, next_prior), det_ext, dec_ext));
        }
        Ok(FrameHistory {
            det_bits,
            dec_bits,
            rounds,
        })
    });
    let histories = histories.into_iter().collect::<Result<Vec<_>>>()?;
    let mut points = Vec::new();
    let mut diverged_at = None;
    let mut last: Option<(f64, f64)> = None;
    for it in 0..=max_turbo_iterations {
        let mut det_bits = Vec::new();
        let mut dec_bits = Vec::new();
        let (mut a_det, mut e_det, mut e_dec) = (Vec::new(), Vec::new(), Vec::new());
        for h in &histories {
            det_bits.extend_from_slice(&h.det_bits);
            dec_bits.extend_from_slice(&h.dec_bits);
            let (a, e, d) = &h.rounds[it];
            a_det.extend_from_slice(a);
            e_det.extend_from_slice(e);
            e_dec.extend_from_slice(d);
        }
        let clip = |v: f64| v.clamp(0.0, 1.0);
        let ia_det = if it == 0 { 0.0 } else { clip(bmi_raw(&det_bits, &a_det)?) };
        let ie_det = clip(bmi_raw(&det_bits, &e_det)?);
        let ie_dec = clip(bmi_raw(&dec_bits, &e_dec)?);
        points.push(TrajectoryPoint {
            component: "det",
            iteration: it,
            ia: ia_det,
            ie: ie_det,
        });
        points.push(TrajectoryPoint {
            component: "dec",
            iteration: it,
            ia: ie_det,
            ie: ie_dec,
        });
        if let Some((pd, pc)) = last {
            let drop = Trajectory::DIVERGENCE_DROP;
            if diverged_at.is_none() && (ie_det < pd - drop || ie_dec < pc - drop) {
                diverged_at = Some(it);
            }
        }
        last = Some((ie_det, ie_dec));
    }
    Ok(Trajectory { points, diverged_at })
}
