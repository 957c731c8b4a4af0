//! Bioassay protocols as DAGs of fluidic operations, plus the benchmark
//! generators (PCR mixing stage, in-vitro diagnostics, protein serial
//! dilution).

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OpKind {
    Dispense { fluid: String },
    Mix,
    Split,
    Detect,
    Heat,
    Output,
}

impl OpKind {
    pub fn arity(&self) -> (usize, usize) {
        match self {
            OpKind::Dispense { .. } => (0, 1),
            OpKind::Mix => (2, 1),
            OpKind::Split => (1, 2),
            OpKind::Detect | OpKind::Heat => (1, 1),
            OpKind::Output => (1, 0),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Dispense { .. } => "dispense",
            OpKind::Mix => "mix",
            OpKind::Split => "split",
            OpKind::Detect => "detect",
            OpKind::Heat => "heat",
            OpKind::Output => "output",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpNode {
    pub id: NodeId,
    #[serde(flatten)]
    pub kind: OpKind,
    /// Overrides the kind's default duration from the `DurationTable`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_ts: Option<u32>,
}

/// Operation durations in discrete timesteps. Dispense models the reservoir
/// reservation; split and output are routing-dominated and carry no
/// scheduled work of their own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationTable {
    pub mix_ts: u32,
    pub detect_ts: u32,
    pub heat_ts: u32,
    pub dispense_ts: u32,
    pub timestep_seconds: f64,
}

impl Default for DurationTable {
    fn default() -> Self {
        // 3 s mixing and 5 s detection at a 10 ms timestep.
        DurationTable {
            mix_ts: 300,
            detect_ts: 500,
            heat_ts: 500,
            dispense_ts: 10,
            timestep_seconds: 0.01,
        }
    }
}

impl DurationTable {
    pub fn duration_of(&self, node: &OpNode) -> u32 {
        if let Some(d) = node.duration_ts {
            return d;
        }
        match node.kind {
            OpKind::Dispense { .. } => self.dispense_ts,
            OpKind::Mix => self.mix_ts,
            OpKind::Detect => self.detect_ts,
            OpKind::Heat => self.heat_ts,
            OpKind::Split | OpKind::Output => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BioassayGraph {
    pub nodes: BTreeMap<NodeId, OpNode>,
    /// Droplet-flow pairs (parent, child) in insertion order.
    pub edges: Vec<(NodeId, NodeId)>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AssayError {
    #[error("assay graph contains a cycle through {0}")]
    Cycle(NodeId),
    #[error("node {node} ({kind}) has {got} {dir} edges, expected {want}")]
    Arity {
        node: NodeId,
        kind: String,
        dir: &'static str,
        got: usize,
        want: usize,
    },
    #[error("edge references unknown node {0}")]
    DanglingEdge(NodeId),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("duplicate edge {0} -> {1}: each droplet flow needs its own path")]
    DuplicateEdge(NodeId, NodeId),
    #[error("assay file is not valid JSON: {0}")]
    Json(String),
}

impl BioassayGraph {
    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        self.edges
            .iter()
            .filter(|(_, c)| *c == id)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        self.edges
            .iter()
            .filter(|(p, _)| *p == id)
            .map(|(_, c)| *c)
            .collect()
    }

    pub fn node(&self, id: NodeId) -> &OpNode {
        &self.nodes[&id]
    }

    pub fn count_kind(&self, want: &str) -> usize {
        self.nodes
            .values()
            .filter(|n| n.kind.name() == want)
            .count()
    }

    /// Topological order (stable: ready nodes leave in id order), or the
    /// offending node when a cycle prevents one.
    pub fn topo_order(&self) -> Result<Vec<NodeId>, AssayError> {
        let mut indeg: BTreeMap<NodeId, usize> = self.nodes.keys().map(|id| (*id, 0)).collect();
        for (_, c) in &self.edges {
            if let Some(d) = indeg.get_mut(c) {
                *d += 1;
            }
        }
        let mut ready: BTreeSet<NodeId> = indeg
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(id) = ready.iter().next().copied() {
            ready.remove(&id);
            order.push(id);
            for c in self.children(id) {
                let d = indeg.get_mut(&c).expect("validated edge");
                *d -= 1;
                if *d == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() != self.nodes.len() {
            let stuck = indeg
                .iter()
                .find(|(id, _)| !order.contains(id))
                .map(|(id, _)| *id)
                .unwrap_or(NodeId(0));
            return Err(AssayError::Cycle(stuck));
        }
        Ok(order)
    }

    /// Checks acyclicity, per-kind arity, and that every non-output droplet
    /// is consumed.
    pub fn check(&self) -> Result<(), AssayError> {
        let mut seen = BTreeSet::new();
        for (p, c) in &self.edges {
            for id in [p, c] {
                if !self.nodes.contains_key(id) {
                    return Err(AssayError::DanglingEdge(*id));
                }
            }
            if !seen.insert((*p, *c)) {
                return Err(AssayError::DuplicateEdge(*p, *c));
            }
        }
        for node in self.nodes.values() {
            let (want_in, want_out) = node.kind.arity();
            let got_in = self.parents(node.id).len();
            let got_out = self.children(node.id).len();
            if got_in != want_in {
                return Err(AssayError::Arity {
                    node: node.id,
                    kind: node.kind.name().to_string(),
                    dir: "incoming",
                    got: got_in,
                    want: want_in,
                });
            }
            if got_out != want_out {
                return Err(AssayError::Arity {
                    node: node.id,
                    kind: node.kind.name().to_string(),
                    dir: "outgoing",
                    got: got_out,
                    want: want_out,
                });
            }
        }
        self.topo_order()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let ff = AssayFile {
            nodes: self.nodes.values().cloned().collect(),
            edges: self.edges.iter().map(|(p, c)| [p.0, c.0]).collect(),
        };
        serde_json::to_string_pretty(&ff).expect("assay serializes")
    }

    pub fn from_json(text: &str) -> Result<BioassayGraph, AssayError> {
        let ff: AssayFile =
            serde_json::from_str(text).map_err(|e| AssayError::Json(e.to_string()))?;
        let mut nodes = BTreeMap::new();
        for n in ff.nodes {
            if nodes.insert(n.id, n.clone()).is_some() {
                return Err(AssayError::DuplicateNode(n.id));
            }
        }
        let graph = BioassayGraph {
            nodes,
            edges: ff
                .edges
                .iter()
                .map(|[p, c]| (NodeId(*p), NodeId(*c)))
                .collect(),
        };
        graph.check()?;
        Ok(graph)
    }
}

#[derive(Serialize, Deserialize)]
struct AssayFile {
    nodes: Vec<OpNode>,
    edges: Vec<[u32; 2]>,
}

/// Incremental graph builder used by the generators.
struct Builder {
    graph: BioassayGraph,
    next: u32,
}

impl Builder {
    fn new() -> Self {
        Builder {
            graph: BioassayGraph::default(),
            next: 0,
        }
    }

    fn add(&mut self, kind: OpKind) -> NodeId {
        let id = NodeId(self.next);
        self.next += 1;
        self.graph.nodes.insert(
            id,
            OpNode {
                id,
                kind,
                duration_ts: None,
            },
        );
        id
    }

    fn edge(&mut self, p: NodeId, c: NodeId) {
        self.graph.edges.push((p, c));
    }

    fn dispense(&mut self, fluid: &str) -> NodeId {
        self.add(OpKind::Dispense {
            fluid: fluid.to_string(),
        })
    }

    fn mix(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let m = self.add(OpKind::Mix);
        self.edge(a, m);
        self.edge(b, m);
        m
    }

    fn finish(self) -> BioassayGraph {
        self.graph.check().expect("generator emits a valid graph");
        self.graph
    }
}

/// The PCR mixing stage: a balanced binary mixing tree over eight input
/// fluids (8 dispense leaves, 7 mixes, 1 output).
pub fn gen_pcr() -> BioassayGraph {
    let mut b = Builder::new();
    let mut layer: Vec<NodeId> = (1..=8)
        .map(|i| b.dispense(&format!("reagent{i}")))
        .collect();
    while layer.len() > 1 {
        layer = layer
            .chunks(2)
            .map(|pair| b.mix(pair[0], pair[1]))
            .collect();
    }
    let out = b.add(OpKind::Output);
    b.edge(layer[0], out);
    b.finish()
}

/// In-vitro diagnostics: `samples x reagents` independent chains of
/// dispense+dispense -> mix -> detect -> output.
pub fn gen_invitro(samples: u32, reagents: u32) -> BioassayGraph {
    assert!(
        samples >= 1 && reagents >= 1,
        "need at least one sample and reagent"
    );
    let mut b = Builder::new();
    for i in 1..=samples {
        for j in 1..=reagents {
            let s = b.dispense(&format!("sample{i}"));
            let r = b.dispense(&format!("reagent{j}"));
            let m = b.mix(s, r);
            let d = b.add(OpKind::Detect);
            b.edge(m, d);
            let o = b.add(OpKind::Output);
            b.edge(d, o);
        }
    }
    b.finish()
}

/// Protein serial dilution: a sample+buffer mix feeds `levels` levels of
/// binary splits; every non-final branch mixes in fresh buffer before the
/// next split, and each of the 2^levels leaves is detected and output.
pub fn gen_protein_split(levels: u32) -> BioassayGraph {
    assert!(levels >= 1, "need at least one split level");
    let mut b = Builder::new();
    let sample = b.dispense("sample");
    let buffer = b.dispense("buffer");
    let mut frontier = vec![b.mix(sample, buffer)];
    for level in 1..=levels {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for droplet in frontier {
            let split = b.add(OpKind::Split);
            b.edge(droplet, split);
            for _ in 0..2 {
                if level < levels {
                    let buf = b.dispense("buffer");
                    next.push(b.mix(split, buf));
                } else {
                    next.push(split);
                }
            }
        }
        frontier = next;
    }
    for leaf in frontier {
        let d = b.add(OpKind::Detect);
        b.edge(leaf, d);
        let o = b.add(OpKind::Output);
        b.edge(d, o);
    }
    b.finish()
}

/// Names the benchmark presets: `pcr`, `invitro_1..5` (k maps to k+1 samples
/// and reagents), `protein_split_1..3` (k maps to k+1 split levels).
pub fn preset(name: &str) -> Option<BioassayGraph> {
    match name {
        "pcr" => Some(gen_pcr()),
        "invitro_1" => Some(gen_invitro(2, 2)),
        "invitro_2" => Some(gen_invitro(3, 3)),
        "invitro_3" => Some(gen_invitro(4, 4)),
        "invitro_4" => Some(gen_invitro(5, 5)),
        "invitro_5" => Some(gen_invitro(6, 6)),
        "protein_split_1" => Some(gen_protein_split(2)),
        "protein_split_2" => Some(gen_protein_split(3)),
        "protein_split_3" => Some(gen_protein_split(4)),
        _ => None,
    }
}

pub const PRESET_NAMES: [&str; 9] = [
    "pcr",
    "invitro_1",
    "invitro_2",
    "invitro_3",
    "invitro_4",
    "invitro_5",
    "protein_split_1",
    "protein_split_2",
    "protein_split_3",
];
