//! Typed bipartite graphs for detection (FFG, UFG), decoding (Tanner) and
//! joint detection-decoding.
//!
//! VN numbering for the FFG follows the zero-padded sequence `x̃`: VN `k`
//! holds `x_{k-L}`, the first and last `L` VNs are virtual. UFG VNs are the
//! `N_x` payload symbols only.

mod interleaver;

use std::fmt::Write as _;

pub use interleaver::Interleaver;

use crate::error::{Error, Result};
use crate::ldpc::ParityCheckMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FnClass {
    Detection,
    Check,
}

impl FnClass {
    pub fn name(self) -> &'static str {
        match self {
            FnClass::Detection => "detection",
            FnClass::Check => "check",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VnFlag {
    Payload,
    Virtual,
    Punctured,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphKind {
    Ffg,
    Ufg,
    Tanner,
    Joint(DetectionKind),
}

/// Factorization underlying a detection graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetectionKind {
    Ffg,
    Ufg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub vn: usize,
    pub fnode: usize,
    pub edge_type: usize,
}

#[derive(Clone, Debug)]
pub struct BipartiteGraph {
    pub kind: GraphKind,
    pub num_vn: usize,
    pub num_fn: usize,
    pub edges: Vec<Edge>,
    pub fn_class: Vec<FnClass>,
    pub vn_flags: Vec<VnFlag>,
    /// Edge indices per VN, ascending.
    pub vn_edges: Vec<Vec<usize>>,
    /// Edge indices per FN, in construction order.
    pub fn_edges: Vec<Vec<usize>>,
    /// Number of distinct detection edge types `N_p`.
    pub num_edge_types: usize,
    /// Channel memory the detection part was built for.
    pub memory: usize,
    /// Number of transmitted symbols `N_x`.
    pub block_len: usize,
    /// VNs whose LLRs form the output, in output order.
    pub readout_vns: Vec<usize>,
    pub warning: Option<String>,
}

impl BipartiteGraph {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        kind: GraphKind,
        num_vn: usize,
        num_fn: usize,
        edges: Vec<Edge>,
        fn_class: Vec<FnClass>,
        vn_flags: Vec<VnFlag>,
        num_edge_types: usize,
        memory: usize,
        block_len: usize,
        readout_vns: Vec<usize>,
    ) -> Self {
        let mut vn_edges = vec![Vec::new(); num_vn];
        let mut fn_edges = vec![Vec::new(); num_fn];
        for (e, edge) in edges.iter().enumerate() {
            vn_edges[edge.vn].push(e);
            fn_edges[edge.fnode].push(e);
        }
        Self {
            kind,
            num_vn,
            num_fn,
            edges,
            fn_class,
            vn_flags,
            vn_edges,
            fn_edges,
            num_edge_types,
            memory,
            block_len,
            readout_vns,
            warning: None,
        }
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vn_degree(&self, v: usize) -> usize {
        self.vn_edges[v].len()
    }

    pub fn fn_degree(&self, f: usize) -> usize {
        self.fn_edges[f].len()
    }

    /// FN neighbours of VN `v`.
    pub fn vn_neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.vn_edges[v].iter().map(|&e| self.edges[e].fnode)
    }

    /// VN neighbours of FN `f`.
    pub fn fn_neighbors(&self, f: usize) -> impl Iterator<Item = usize> + '_ {
        self.fn_edges[f].iter().map(|&e| self.edges[e].vn)
    }

    pub fn edge_class(&self, e: usize) -> FnClass {
        self.fn_class[self.edges[e].fnode]
    }

    pub fn is_virtual(&self, v: usize) -> bool {
        self.vn_flags[v] == VnFlag::Virtual
    }

    pub fn has_class(&self, class: FnClass) -> bool {
        self.fn_class.contains(&class)
    }

    pub fn detection_kind(&self) -> Option<DetectionKind> {
        match self.kind {
            GraphKind::Ffg => Some(DetectionKind::Ffg),
            GraphKind::Ufg => Some(DetectionKind::Ufg),
            GraphKind::Joint(k) => Some(k),
            GraphKind::Tanner => None,
        }
    }

    /// One `vn fn type class` line per edge.
    pub fn edge_list(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(out, "{} {} {} {}", e.vn, e.fnode, e.edge_type, self.fn_class[e.fnode].name());
        }
        out
    }

    /// Union-find connectivity over all VNs and FNs.
    pub fn is_connected(&self) -> bool {
        let n = self.num_vn + self.num_fn;
        if n == 0 {
            return true;
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            let a = find(&mut parent, e.vn);
            let b = find(&mut parent, self.num_vn + e.fnode);
            if a != b {
                parent[a] = b;
            }
        }
        let root = find(&mut parent, 0);
        (1..n).all(|x| find(&mut parent, x) == root)
    }

    /// Checks the structural invariants; used by tests and after loading.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for e in &self.edges {
            if e.vn >= self.num_vn || e.fnode >= self.num_fn {
                return Err(Error::InvalidShape(format!("edge {e:?} out of range")));
            }
            if !seen.insert((e.vn, e.fnode)) {
                return Err(Error::InvalidShape(format!("duplicate edge {e:?}")));
            }
            if self.fn_class[e.fnode] == FnClass::Detection && e.edge_type >= self.num_edge_types {
                return Err(Error::InvalidShape(format!("edge type {} ≥ N_p", e.edge_type)));
            }
        }
        for &v in &self.readout_vns {
            if self.vn_flags[v] == VnFlag::Virtual {
                return Err(Error::InvalidShape(format!("virtual VN {v} in readout set")));
            }
        }
        Ok(())
    }
}

/// Forney factor graph: one FN per observation `y_i`, connected to
/// `x̃_{i}..x̃_{i+L}`; the edge to `x̃_{i+L-l}` has type `l`.
pub fn build_ffg(block_len: usize, memory: usize) -> Result<BipartiteGraph> {
    if block_len == 0 {
        return Err(Error::InvalidConfig("block length must be ≥ 1".into()));
    }
    let l = memory;
    let num_vn = block_len + 2 * l;
    let num_fn = block_len + l;
    let mut edges = Vec::with_capacity(num_fn * (l + 1));
    for i in 0..num_fn {
        for tap in 0..=l {
            edges.push(Edge {
                vn: i + l - tap,
                fnode: i,
                edge_type: tap,
            });
        }
    }
    let vn_flags = (0..num_vn)
        .map(|k| {
            if k < l || k >= block_len + l {
                VnFlag::Virtual
            } else {
                VnFlag::Payload
            }
        })
        .collect();
    Ok(BipartiteGraph::assemble(
        GraphKind::Ffg,
        num_vn,
        num_fn,
        edges,
        vec![FnClass::Detection; num_fn],
        vn_flags,
        l + 1,
        l,
        block_len,
        (l..l + block_len).collect(),
    ))
}

/// Ungerboeck factor graph: pairwise FNs `I_{i,j}` for `0 < j-i ≤ L` over
/// the payload symbols. The lower VN's edge has type `j-i-1`, the upper
/// VN's edge type `L + j-i-1`, so `N_p = 2L`.
pub fn build_ufg(block_len: usize, memory: usize) -> Result<BipartiteGraph> {
    if block_len == 0 {
        return Err(Error::InvalidConfig("block length must be ≥ 1".into()));
    }
    let l = memory;
    let mut edges = Vec::new();
    let mut fnode = 0;
    for i in 0..block_len {
        for off in 1..=l {
            let j = i + off;
            if j >= block_len {
                break;
            }
            edges.push(Edge {
                vn: i,
                fnode,
                edge_type: off - 1,
            });
            edges.push(Edge {
                vn: j,
                fnode,
                edge_type: l + off - 1,
            });
            fnode += 1;
        }
    }
    let mut g = BipartiteGraph::assemble(
        GraphKind::Ufg,
        block_len,
        fnode,
        edges,
        vec![FnClass::Detection; fnode],
        vec![VnFlag::Payload; block_len],
        2 * l,
        l,
        block_len,
        (0..block_len).collect(),
    );
    if l == 0 {
        g.warning = Some("memoryless channel: UFG has no factor nodes".into());
    }
    Ok(g)
}

/// UFG FN index of the pair `(i, i+off)`, matching [`build_ufg`] order.
pub fn ufg_pairs(block_len: usize, memory: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..block_len {
        for off in 1..=memory {
            if i + off >= block_len {
                break;
            }
            out.push((i, i + off));
        }
    }
    out
}

/// Tanner graph: VN per column, check FN per row.
pub fn build_tanner(pcm: &ParityCheckMatrix) -> Result<BipartiteGraph> {
    if pcm.rows() == 0 || pcm.cols() == 0 {
        return Err(Error::InvalidShape("empty parity-check matrix".into()));
    }
    if let Some(r) = (0..pcm.rows()).find(|&r| pcm.row(r).is_empty()) {
        return Err(Error::InvalidShape(format!("parity-check row {r} is empty")));
    }
    if let Some(c) = (0..pcm.cols()).find(|&c| pcm.col(c).is_empty()) {
        return Err(Error::InvalidShape(format!("parity-check column {c} is empty")));
    }
    let mut edges = Vec::with_capacity(pcm.num_ones());
    for r in 0..pcm.rows() {
        for &c in pcm.row(r) {
            edges.push(Edge {
                vn: c,
                fnode: r,
                edge_type: 0,
            });
        }
    }
    let flags = (0..pcm.cols())
        .map(|c| {
            if pcm.is_punctured(c) {
                VnFlag::Punctured
            } else {
                VnFlag::Payload
            }
        })
        .collect();
    Ok(BipartiteGraph::assemble(
        GraphKind::Tanner,
        pcm.cols(),
        pcm.rows(),
        edges,
        vec![FnClass::Check; pcm.rows()],
        flags,
        1,
        0,
        pcm.cols(),
        (0..pcm.cols()).collect(),
    ))
}

/// Joint graph sharing VNs between detection and decoding.
///
/// Transmitted (non-punctured) code bits, taken in codeword order, are
/// interleaved onto the symbol positions: the `t`-th transmitted bit sits
/// on symbol `π(t)`. Punctured code bits become extra VNs. The readout
/// order is codeword order.
pub fn build_joint(
    detection: &BipartiteGraph,
    tanner: &BipartiteGraph,
    interleaver: &Interleaver,
    modulation_order: usize,
) -> Result<BipartiteGraph> {
    if modulation_order != 2 {
        return Err(Error::Unsupported(format!(
            "joint graph requires BPSK, got modulation order {modulation_order}"
        )));
    }
    let det_kind = match detection.kind {
        GraphKind::Ffg => DetectionKind::Ffg,
        GraphKind::Ufg => DetectionKind::Ufg,
        _ => return Err(Error::InvalidConfig("first graph must be FFG or UFG".into())),
    };
    if tanner.kind != GraphKind::Tanner {
        return Err(Error::InvalidConfig("second graph must be a Tanner graph".into()));
    }
    let transmitted: Vec<usize> = (0..tanner.num_vn)
        .filter(|&c| tanner.vn_flags[c] != VnFlag::Punctured)
        .collect();
    if transmitted.len() != detection.block_len {
        return Err(Error::InvalidShape(format!(
            "{} transmitted code bits but detector carries {} symbols",
            transmitted.len(),
            detection.block_len
        )));
    }
    if interleaver.len() != transmitted.len() {
        return Err(Error::InvalidShape(format!(
            "interleaver length {} ≠ {} transmitted bits",
            interleaver.len(),
            transmitted.len()
        )));
    }
    let payload_vns = &detection.readout_vns;
    let mut code_vn = vec![usize::MAX; tanner.num_vn];
    for (t, &c) in transmitted.iter().enumerate() {
        code_vn[c] = payload_vns[interleaver.forward(t)];
    }
    let mut num_vn = detection.num_vn;
    let mut vn_flags = detection.vn_flags.clone();
    for (c, slot) in code_vn.iter_mut().enumerate() {
        if *slot == usize::MAX {
            debug_assert_eq!(tanner.vn_flags[c], VnFlag::Punctured);
            *slot = num_vn;
            vn_flags.push(VnFlag::Punctured);
            num_vn += 1;
        }
    }
    let mut edges = detection.edges.clone();
    let mut fn_class = detection.fn_class.clone();
    for e in &tanner.edges {
        edges.push(Edge {
            vn: code_vn[e.vn],
            fnode: detection.num_fn + e.fnode,
            edge_type: 0,
        });
    }
    fn_class.extend(std::iter::repeat_n(FnClass::Check, tanner.num_fn));
    Ok(BipartiteGraph::assemble(
        GraphKind::Joint(det_kind),
        num_vn,
        detection.num_fn + tanner.num_fn,
        edges,
        fn_class,
        vn_flags,
        detection.num_edge_types,
        detection.memory,
        detection.block_len,
        code_vn,
    ))
}
