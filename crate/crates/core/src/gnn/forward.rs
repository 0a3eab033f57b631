//! Message passing on the tape: batched graph indices, one GNN/FGNN
//! iteration, schedules and readout.

use std::sync::Arc;

use super::embed::{embed_tape, BatchFeatures};
use super::params::{ClassWeights, GnnParameters, ModelKind};
use crate::error::{Error, Result};
use crate::graphs::{BipartiteGraph, DetectionKind, FnClass, GraphKind, VnFlag};
use crate::neural_core::{Bindings, Tape, Tensor, Var};

const CLASSES: [FnClass; 2] = [FnClass::Detection, FnClass::Check];

fn class_bit(class: FnClass) -> u8 {
    match class {
        FnClass::Detection => 1,
        FnClass::Check => 2,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    Flooding,
    Sequential,
}

/// `(outer, [inner])`. Flooding runs `outer · inner[0]` iterations over all
/// FN classes. Sequential runs, per outer round, `inner[0]` detection-only
/// then `inner[1]` check-only iterations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub outer: usize,
    pub inner: Vec<usize>,
}

impl Schedule {
    pub fn flooding(iterations: usize) -> Self {
        Self {
            kind: ScheduleKind::Flooding,
            outer: iterations,
            inner: vec![1],
        }
    }

    pub fn sequential(outer: usize, detection: usize, decoding: usize) -> Self {
        Self {
            kind: ScheduleKind::Sequential,
            outer,
            inner: vec![detection, decoding],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            ScheduleKind::Flooding => self.inner.len() == 1,
            ScheduleKind::Sequential => self.inner.len() == 2,
        };
        if !ok || self.outer == 0 || self.inner.iter().sum::<usize>() == 0 {
            return Err(Error::InvalidConfig(format!("invalid schedule {self}")));
        }
        Ok(())
    }

    /// Active FN-class mask of every iteration, in order.
    pub fn steps(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for _ in 0..self.outer {
            match self.kind {
                ScheduleKind::Flooding => out.extend(std::iter::repeat_n(3u8, self.inner[0])),
                ScheduleKind::Sequential => {
                    out.extend(std::iter::repeat_n(1u8, self.inner[0]));
                    out.extend(std::iter::repeat_n(2u8, self.inner[1]));
                }
            }
        }
        out
    }

    /// Total number of GNN iterations.
    pub fn iterations(&self) -> usize {
        self.outer * self.inner.iter().sum::<usize>()
    }
}

impl std::fmt::Display for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner: Vec<String> = self.inner.iter().map(|v| v.to_string()).collect();
        match self.kind {
            ScheduleKind::Flooding => write!(f, "flooding({}, {})", self.outer, inner.join(",")),
            ScheduleKind::Sequential => write!(f, "sequential({}, [{}])", self.outer, inner.join(",")),
        }
    }
}

impl std::str::FromStr for Schedule {
    type Err = Error;

    /// `flooding:10`, `flooding:10x1`, `sequential:3x3,5`
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("cannot parse schedule `{s}`"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let (outer, inner) = match rest.split_once('x') {
            Some((o, i)) => (o, i),
            None => (rest, "1"),
        };
        let outer: usize = outer.trim().parse().map_err(|_| bad())?;
        let inner: Vec<usize> = inner
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let sched = match kind.trim() {
            "flooding" => Schedule {
                kind: ScheduleKind::Flooding,
                outer,
                inner,
            },
            "sequential" => Schedule {
                kind: ScheduleKind::Sequential,
                outer,
                inner,
            },
            _ => return Err(bad()),
        };
        sched.validate()?;
        Ok(sched)
    }
}

/// Edges and FNs of one class, replicated over a batch.
struct ClassIndex {
    class: FnClass,
    /// FNs of the class per frame.
    num_fn: usize,
    edge_vn_rows: Arc<Vec<usize>>,
    edge_fn_rows: Arc<Vec<usize>>,
    edge_types: Arc<Vec<usize>>,
    fn_weights: Arc<Vec<f64>>,
}

/// VN segment index and mean weights of one aggregation.
type Aggregation = (Arc<Vec<usize>>, Arc<Vec<f64>>);

/// Index arrays of a graph replicated `batch` times (frame-major rows).
pub struct GraphIndex {
    pub batch: usize,
    pub num_vn: usize,
    classes: Vec<ClassIndex>,
    vn_attr_rows: Arc<Vec<usize>>,
    readout_rows: Arc<Vec<usize>>,
    /// Rows receiving the input embedding (detection FNs or payload VNs).
    embed_rows: Arc<Vec<usize>>,
    embed_at_vn: bool,
    /// Per active mask: VN segment index of the concatenated class edges and
    /// the mean weights.
    vn_aggregation: [Option<Aggregation>; 4],
    pub num_readout: usize,
}

impl GraphIndex {
    pub fn new(graph: &BipartiteGraph, batch: usize) -> Result<Self> {
        if batch == 0 {
            return Err(Error::InvalidLength("batch size must be ≥ 1".into()));
        }
        let nv = graph.num_vn;
        let mut classes = Vec::new();
        for class in CLASSES {
            let fns: Vec<usize> = (0..graph.num_fn).filter(|&f| graph.fn_class[f] == class).collect();
            if fns.is_empty() {
                continue;
            }
            let mut local = vec![usize::MAX; graph.num_fn];
            for (i, &f) in fns.iter().enumerate() {
                local[f] = i;
            }
            let edges: Vec<usize> = (0..graph.num_edges()).filter(|&e| graph.edge_class(e) == class).collect();
            let nf = fns.len();
            let mut vn_rows = Vec::with_capacity(batch * edges.len());
            let mut fn_rows = Vec::with_capacity(batch * edges.len());
            let mut types = Vec::with_capacity(batch * edges.len());
            for b in 0..batch {
                for &e in &edges {
                    let edge = graph.edges[e];
                    vn_rows.push(b * nv + edge.vn);
                    fn_rows.push(b * nf + local[edge.fnode]);
                    types.push(edge.edge_type);
                }
            }
            let weights: Vec<f64> = (0..batch)
                .flat_map(|_| fns.iter().map(|&f| 1.0 / graph.fn_degree(f).max(1) as f64))
                .collect();
            classes.push(ClassIndex {
                class,
                num_fn: nf,
                edge_vn_rows: Arc::new(vn_rows),
                edge_fn_rows: Arc::new(fn_rows),
                edge_types: Arc::new(types),
                fn_weights: Arc::new(weights),
            });
        }
        let vn_attr_rows = (0..batch)
            .flat_map(|_| {
                graph.vn_flags.iter().map(|f| match f {
                    VnFlag::Payload => 0,
                    VnFlag::Virtual => 1,
                    VnFlag::Punctured => 2,
                })
            })
            .collect();
        let nr = graph.readout_vns.len();
        let readout_rows = (0..batch)
            .flat_map(|b| graph.readout_vns.iter().map(move |&v| b * nv + v))
            .collect();
        let detection = match graph.kind {
            GraphKind::Ffg => Some(DetectionKind::Ffg),
            GraphKind::Ufg => Some(DetectionKind::Ufg),
            GraphKind::Joint(k) => Some(k),
            GraphKind::Tanner => None,
        };
        let (embed_rows, embed_at_vn) = match detection {
            Some(DetectionKind::Ffg) => {
                let nf = classes.first().filter(|c| c.class == FnClass::Detection).map_or(0, |c| c.num_fn);
                ((0..batch * nf).collect(), false)
            }
            Some(DetectionKind::Ufg) => {
                let n = graph.block_len;
                ((0..batch).flat_map(|b| (0..n).map(move |k| b * nv + k)).collect(), true)
            }
            None => (Vec::new(), false),
        };
        let mut index = Self {
            batch,
            num_vn: nv,
            classes,
            vn_attr_rows: Arc::new(vn_attr_rows),
            readout_rows: Arc::new(readout_rows),
            embed_rows: Arc::new(embed_rows),
            embed_at_vn,
            vn_aggregation: Default::default(),
            num_readout: nr,
        };
        for mask in 1u8..4 {
            let active: Vec<&ClassIndex> = index.classes.iter().filter(|c| mask & class_bit(c.class) != 0).collect();
            if active.is_empty() {
                continue;
            }
            let mut segs = Vec::new();
            let mut deg = vec![0usize; batch * nv];
            for c in &active {
                for &r in c.edge_vn_rows.iter() {
                    segs.push(r);
                    deg[r] += 1;
                }
            }
            let w = deg.iter().map(|&d| if d == 0 { 0.0 } else { 1.0 / d as f64 }).collect();
            index.vn_aggregation[mask as usize] = Some((Arc::new(segs), Arc::new(w)));
        }
        Ok(index)
    }

    pub fn has_class(&self, class: FnClass) -> bool {
        self.classes.iter().any(|c| c.class == class)
    }

    /// Restricts a schedule mask to the classes present.
    fn effective_mask(&self, mask: u8) -> u8 {
        self.classes.iter().map(|c| class_bit(c.class)).fold(0, |a, b| a | b) & mask
    }
}

/// Node states of a batch: VN rows `batch · num_vn`, FN rows per class.
#[derive(Clone, Copy, Debug)]
pub struct GnnState {
    pub vn: Var,
    pub fns: [Option<Var>; 2],
}

/// Attribute rows and per-class bindings for one tape.
pub struct Session<'a> {
    params: &'a GnnParameters,
    index: &'a GraphIndex,
    vn_attr: Var,
    /// Per class index: (f2v attributes, v2f attributes, FN attributes).
    class_attr: Vec<(Var, Var, Var)>,
    /// FGNN: per class, per-edge `d×d` matrices for both directions.
    edge_mats: Vec<Option<(Var, Var)>>,
}

fn class_weights(params: &GnnParameters, class: FnClass) -> &ClassWeights {
    params.class(class).expect("class weights exist for every class of the graph")
}

impl<'a> Session<'a> {
    pub fn new(params: &'a GnnParameters, index: &'a GraphIndex, tape: &mut Tape, bind: &mut Bindings) -> Result<Self> {
        let d = params.config.feature_size;
        for c in &index.classes {
            if params.class(c.class).is_none() {
                return Err(Error::InvalidConfig(format!(
                    "graph has {} FNs but the model has no weights for them",
                    c.class.name()
                )));
            }
        }
        let vn_table = bind.bind(tape, "attr.vn", &params.vn_attr);
        let zero_row = tape.constant(Tensor::zeros((1, d)));
        let vn_table = tape.concat_rows(&[vn_table, zero_row]);
        let vn_attr = tape.gather_rows(vn_table, index.vn_attr_rows.clone());
        let mut class_attr = Vec::new();
        let mut edge_mats = Vec::new();
        for c in &index.classes {
            let ne = c.edge_types.len();
            let nf = c.num_fn * index.batch;
            let (f2v_t, v2f_t, fn_a) = match c.class {
                FnClass::Detection => {
                    let f2v = bind.bind(tape, "attr.f2v", &params.f2v_attr);
                    let v2f = bind.bind(tape, "attr.v2f", &params.v2f_attr);
                    let fa = bind.bind(tape, "attr.fn", &params.fn_attr);
                    (f2v, v2f, tape.gather_rows(fa, Arc::new(vec![0; nf])))
                }
                FnClass::Check => {
                    let z = tape.constant(Tensor::zeros((1, d)));
                    (z, z, tape.constant(Tensor::zeros((nf, d))))
                }
            };
            let types = match c.class {
                FnClass::Detection => c.edge_types.clone(),
                FnClass::Check => Arc::new(vec![0; ne]),
            };
            let f2v = tape.gather_rows(f2v_t, types.clone());
            let v2f = tape.gather_rows(v2f_t, types.clone());
            class_attr.push((f2v, v2f, fn_a));
            edge_mats.push(match &params.edge_matrix {
                Some(mlp) => {
                    let a = mlp.forward_tape(tape, bind, "edge", f2v_t);
                    let b = mlp.forward_tape(tape, bind, "edge", v2f_t);
                    Some((tape.gather_rows(a, types.clone()), tape.gather_rows(b, types)))
                }
                None => None,
            });
        }
        Ok(Self {
            params,
            index,
            vn_attr,
            class_attr,
            edge_mats,
        })
    }

    /// Initial states: embedding, prior embedding, zeros elsewhere.
    pub fn init(&self, tape: &mut Tape, bind: &mut Bindings, features: &BatchFeatures) -> Result<GnnState> {
        let idx = self.index;
        let d = self.params.config.feature_size;
        if features.batch != idx.batch {
            return Err(Error::InvalidShape(format!(
                "features for {} frames, index for {}",
                features.batch, idx.batch
            )));
        }
        let nv = idx.batch * idx.num_vn;
        let mut vn = tape.constant(Tensor::zeros((nv, d)));
        let mut fns = [None, None];
        for (k, c) in idx.classes.iter().enumerate() {
            fns[k] = Some(tape.constant(Tensor::zeros((c.num_fn * idx.batch, d))));
        }
        if !idx.embed_rows.is_empty() {
            let emb = embed_tape(self.params, tape, bind, features);
            if tape.shape(emb).0 != idx.embed_rows.len() {
                return Err(Error::InvalidShape(format!(
                    "{} embedded rows for {} target nodes",
                    tape.shape(emb).0,
                    idx.embed_rows.len()
                )));
            }
            if idx.embed_at_vn {
                let scattered = tape.segment_mean(emb, idx.embed_rows.clone(), Arc::new(vec![1.0; nv]));
                vn = tape.add(vn, scattered);
            } else {
                fns[0] = Some(emb);
            }
        }
        if let (Some(prior), Some(w)) = (&features.prior, &self.params.prior) {
            if prior.nrows() != idx.readout_rows.len() {
                return Err(Error::InvalidLength(format!(
                    "{} prior rows for {} readout VNs",
                    prior.nrows(),
                    idx.readout_rows.len()
                )));
            }
            let p = tape.constant(prior.clone());
            let wv = bind.bind(tape, "prior.w", w);
            let e = tape.matmul_t(p, wv);
            let scattered = tape.segment_mean(e, idx.readout_rows.clone(), Arc::new(vec![1.0; nv]));
            vn = tape.add(vn, scattered);
        }
        Ok(GnnState { vn, fns })
    }

    fn message(&self, tape: &mut Tape, bind: &mut Bindings, mlp_prefix: String, mlp: &crate::neural_core::Mlp, parts: &[Var], mat: Option<Var>) -> Var {
        let input = tape.concat_cols(parts);
        let m = mlp.forward_tape(tape, bind, &mlp_prefix, input);
        match mat {
            Some(a) => tape.row_mat_vec(a, m),
            None => m,
        }
    }

    /// One iteration over the FN classes in `mask` (bit 1 detection, bit 2
    /// check): FN→VN messages, VN update, VN→FN messages, FN update.
    pub fn iterate(&self, tape: &mut Tape, bind: &mut Bindings, state: &GnnState, mask: u8) -> GnnState {
        let idx = self.index;
        let mask = idx.effective_mask(mask);
        let fgnn = self.params.config.model == ModelKind::Fgnn;
        let Some((segs, weights)) = idx.vn_aggregation[mask as usize].clone() else {
            return *state;
        };
        let active: Vec<usize> = (0..idx.classes.len())
            .filter(|&k| mask & class_bit(idx.classes[k].class) != 0)
            .collect();

        let mut msgs = Vec::new();
        for &k in &active {
            let c = &idx.classes[k];
            let w = class_weights(self.params, c.class);
            let prefix = GnnParameters::class_prefix(c.class);
            let sf = state.fns[k].expect("class state");
            let src = tape.gather_rows(sf, c.edge_fn_rows.clone());
            let dst = tape.gather_rows(state.vn, c.edge_vn_rows.clone());
            let (f2v_attr, _, _) = self.class_attr[k];
            let (parts, mat) = if fgnn {
                (vec![src, dst], self.edge_mats[k].map(|m| m.0))
            } else {
                (vec![src, dst, f2v_attr], None)
            };
            msgs.push(self.message(tape, bind, format!("{prefix}.f2v"), &w.f2v, &parts, mat));
        }
        let all = if msgs.len() == 1 { msgs[0] } else { tape.concat_rows(&msgs) };
        let agg = tape.segment_mean(all, segs, weights);
        let vn = if fgnn {
            tape.add(state.vn, agg)
        } else {
            let input = tape.concat_cols(&[state.vn, agg, self.vn_attr]);
            self.params
                .vn_update
                .as_ref()
                .expect("GNN VN update")
                .forward_tape(tape, bind, "vn", input)
        };

        let mut fns = state.fns;
        for &k in &active {
            let c = &idx.classes[k];
            let w = class_weights(self.params, c.class);
            let prefix = GnnParameters::class_prefix(c.class);
            let sf = state.fns[k].expect("class state");
            let src = tape.gather_rows(vn, c.edge_vn_rows.clone());
            let dst = tape.gather_rows(sf, c.edge_fn_rows.clone());
            let (_, v2f_attr, fn_attr) = self.class_attr[k];
            let (parts, mat) = if fgnn {
                (vec![src, dst], self.edge_mats[k].map(|m| m.1))
            } else {
                (vec![src, dst, v2f_attr], None)
            };
            let m = self.message(tape, bind, format!("{prefix}.v2f"), &w.v2f, &parts, mat);
            let agg = tape.segment_mean(m, c.edge_fn_rows.clone(), c.fn_weights.clone());
            fns[k] = Some(if fgnn {
                tape.add(sf, agg)
            } else {
                let input = tape.concat_cols(&[sf, agg, fn_attr]);
                w.fn_update
                    .as_ref()
                    .expect("GNN FN update")
                    .forward_tape(tape, bind, &format!("{prefix}.fn"), input)
            });
        }
        GnnState { vn, fns }
    }

    /// LLR logits of the readout VNs, `(batch · readout) × log2 M`.
    pub fn readout(&self, tape: &mut Tape, bind: &mut Bindings, state: &GnnState) -> Var {
        let s = tape.gather_rows(state.vn, self.index.readout_rows.clone());
        let v = bind.bind(tape, "readout", &self.params.readout);
        tape.matmul_t(s, v)
    }
}

/// Full forward pass on one tape; returns the readout logits after every
/// iteration of `schedule`.
pub fn forward(
    params: &GnnParameters,
    index: &GraphIndex,
    features: &BatchFeatures,
    schedule: &Schedule,
    tape: &mut Tape,
    bind: &mut Bindings,
) -> Result<Vec<Var>> {
    schedule.validate()?;
    let session = Session::new(params, index, tape, bind)?;
    let mut state = session.init(tape, bind, features)?;
    let mut out = Vec::new();
    for mask in schedule.steps() {
        state = session.iterate(tape, bind, &state, mask);
        out.push(session.readout(tape, bind, &state));
    }
    Ok(out)
}

fn finite(t: &Tensor) -> bool {
    t.iter().all(|v| v.is_finite())
}

/// Inference without keeping the whole unrolled graph: every iteration runs
/// on a fresh tape seeded with the previous states. Returns the logits after
/// every iteration.
pub fn infer(
    params: &GnnParameters,
    index: &GraphIndex,
    features: &BatchFeatures,
    schedule: &Schedule,
) -> Result<Vec<Tensor>> {
    schedule.validate()?;
    let mut carried: Option<(Tensor, [Option<Tensor>; 2])> = None;
    let mut out = Vec::new();
    for (it, mask) in schedule.steps().into_iter().enumerate() {
        let mut tape = Tape::new();
        let mut bind = Bindings::default();
        let session = Session::new(params, index, &mut tape, &mut bind)?;
        let state = match carried.take() {
            None => session.init(&mut tape, &mut bind, features)?,
            Some((vn, fns)) => GnnState {
                vn: tape.constant(vn),
                fns: fns.map(|f| f.map(|t| tape.constant(t))),
            },
        };
        let next = session.iterate(&mut tape, &mut bind, &state, mask);
        let logits = session.readout(&mut tape, &mut bind, &next);
        let vn = tape.value(next.vn).clone();
        let fns = next.fns.map(|f| f.map(|v| tape.value(v).clone()));
        if !finite(&vn) || fns.iter().flatten().any(|t| !finite(t)) {
            return Err(Error::InferenceDivergence { iteration: it + 1 });
        }
        out.push(tape.value(logits).clone());
        carried = Some((vn, fns));
    }
    Ok(out)
}
