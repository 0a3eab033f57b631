use rand::Rng;

use crate::channel::{apply_isi, perturb_csi, random_bits, snr_db_to_sigma2, Cir, Constellation};
use crate::error::{Error, Result};
use crate::gnn::Frame;
use crate::graphs::{build_ffg, build_joint, build_tanner, build_ufg, BipartiteGraph, DetectionKind, Interleaver};
use crate::ldpc::{Encoder, ParityCheckMatrix};

/// One simulated training example.
#[derive(Clone, Debug)]
pub struct Sample {
    pub frame: Frame,
    /// Target bits in readout order.
    pub targets: Vec<u8>,
}

/// Uncoded detection over a fixed channel.
#[derive(Clone, Debug)]
pub struct DetectionTask {
    pub cir: Cir,
    pub constellation: Constellation,
    pub block_len: usize,
    /// Variance of the CIR estimation error handed to the receiver; 0 for
    /// perfect CSI.
    pub csi_error_variance: f64,
    pub graph: BipartiteGraph,
}

impl DetectionTask {
    pub fn new(cir: Cir, constellation: Constellation, block_len: usize, kind: DetectionKind) -> Result<Self> {
        let l = cir.memory();
        let graph = match kind {
            DetectionKind::Ffg => build_ffg(block_len, l)?,
            DetectionKind::Ufg => build_ufg(block_len, l)?,
        };
        Ok(Self {
            cir,
            constellation,
            block_len,
            csi_error_variance: 0.0,
            graph,
        })
    }

    fn receiver_cir<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Cir> {
        if self.csi_error_variance > 0.0 {
            perturb_csi(&self.cir, self.csi_error_variance, rng)
        } else {
            Ok(self.cir.clone())
        }
    }
}

/// Joint detection-decoding: LDPC codewords, interleaved onto BPSK symbols.
#[derive(Clone, Debug)]
pub struct JointTask {
    pub cir: Cir,
    pub pcm: ParityCheckMatrix,
    pub encoder: Encoder,
    pub interleaver: Interleaver,
    pub graph: BipartiteGraph,
}

impl JointTask {
    pub fn new(cir: Cir, pcm: ParityCheckMatrix, interleaver: Interleaver, kind: DetectionKind) -> Result<Self> {
        let n = pcm.num_transmitted();
        if interleaver.len() != n {
            return Err(Error::InvalidLength(format!(
                "interleaver of length {} for {n} transmitted bits",
                interleaver.len()
            )));
        }
        let l = cir.memory();
        let det = match kind {
            DetectionKind::Ffg => build_ffg(n, l)?,
            DetectionKind::Ufg => build_ufg(n, l)?,
        };
        let graph = build_joint(&det, &build_tanner(&pcm)?, &interleaver, 2)?;
        let encoder = Encoder::new(&pcm)?;
        Ok(Self {
            cir,
            pcm,
            encoder,
            interleaver,
            graph,
        })
    }
}

#[derive(Clone, Debug)]
pub enum Task {
    Detection(DetectionTask),
    Joint(JointTask),
}

impl Task {
    pub fn graph(&self) -> &BipartiteGraph {
        match self {
            Task::Detection(t) => &t.graph,
            Task::Joint(t) => &t.graph,
        }
    }

    /// Draws one example at `snr_db`.
    pub fn sample<R: Rng + ?Sized>(&self, snr_db: f64, rng: &mut R) -> Result<Sample> {
        let sigma2 = snr_db_to_sigma2(snr_db);
        match self {
            Task::Detection(t) => {
                let bits = random_bits(t.block_len * t.constellation.bits_per_symbol(), rng);
                let x = t.constellation.modulate(&bits)?;
                let y = apply_isi(&x, &t.cir, sigma2, rng)?;
                let cir = t.receiver_cir(rng)?;
                Ok(Sample {
                    frame: Frame::new(y, sigma2, cir),
                    targets: bits,
                })
            }
            Task::Joint(t) => {
                let info = random_bits(t.encoder.k(), rng);
                let word = t.encoder.encode(&info)?;
                let on_air = t.interleaver.interleave(&t.pcm.transmitted_bits(&word));
                let x = Constellation::bpsk().modulate(&on_air)?;
                let y = apply_isi(&x, &t.cir, sigma2, rng)?;
                Ok(Sample {
                    frame: Frame::new(y, sigma2, t.cir.clone()),
                    targets: word,
                })
            }
        }
    }
}
