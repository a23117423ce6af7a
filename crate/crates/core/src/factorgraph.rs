//! Multitask graph for one question group.
//!
//! Nodes: one A and one C node per comment, one B node per thread. Edge
//! families AA, BB, CC (intra-task) and AC, BC, AB (across tasks) are
//! switched on by a [`TopologyConfig`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::cosine;
use crate::task::{PerTask, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeRef {
    pub task: Task,
    /// 1-based thread (related question) index.
    pub question: usize,
    /// 1-based comment index; `None` for B nodes.
    pub comment: Option<usize>,
}

impl NodeRef {
    pub fn a(question: usize, comment: usize) -> Self {
        Self {
            task: Task::A,
            question,
            comment: Some(comment),
        }
    }

    pub fn b(question: usize) -> Self {
        Self {
            task: Task::B,
            question,
            comment: None,
        }
    }

    pub fn c(question: usize, comment: usize) -> Self {
        Self {
            task: Task::C,
            question,
            comment: Some(comment),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.question >= 1
            && match self.task {
                Task::B => self.comment.is_none(),
                Task::A | Task::C => self.comment.is_some_and(|m| m >= 1),
            }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.comment {
            Some(m) => write!(f, "{}:{}:{}", self.task, self.question, m),
            None => write!(f, "{}:{}", self.task, self.question),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    AA,
    BB,
    CC,
    AC,
    BC,
    AB,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 6] = [
        EdgeKind::AA,
        EdgeKind::BB,
        EdgeKind::CC,
        EdgeKind::AC,
        EdgeKind::BC,
        EdgeKind::AB,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Endpoint tasks in storage order.
    pub fn tasks(self) -> (Task, Task) {
        match self {
            EdgeKind::AA => (Task::A, Task::A),
            EdgeKind::BB => (Task::B, Task::B),
            EdgeKind::CC => (Task::C, Task::C),
            EdgeKind::AC => (Task::A, Task::C),
            EdgeKind::BC => (Task::B, Task::C),
            EdgeKind::AB => (Task::A, Task::B),
        }
    }

    pub fn is_intra(self) -> bool {
        let (s, t) = self.tasks();
        s == t
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRef {
    pub kind: EdgeKind,
    /// Node indices into [`FactorGraph::nodes`]; `u` has the first task of
    /// `kind` (and the lower comment index for intra-task edges).
    pub u: usize,
    pub v: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intra {
    #[default]
    Null,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OneToOne {
    #[default]
    Null,
    OneToOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManyToOne {
    #[default]
    Null,
    ManyToOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub intra_a: Intra,
    pub intra_b: Intra,
    pub intra_c: Intra,
    pub across_ac: OneToOne,
    pub across_bc: ManyToOne,
    pub across_ab: ManyToOne,
}

/// Named topologies, in the order they are listed to users.
pub const PRESETS: &[&str] = &[
    "null",
    "CRF_AC",
    "CRF_BC",
    "CRF_ACBC",
    "CRF_all",
    "CRF_ACBC,C^f",
    "CRF_ACBC,A^fC^f",
    "CRF_ACBC,B^fC^f",
    "CRF_ACBC,f",
    "CRF_B^f",
    "CRF_ACBC,B^f",
    "CRF_ACBC,A^fB^f",
];

impl TopologyConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let mut t = TopologyConfig::default();
        let full = Intra::Full;
        let acbc = |t: &mut TopologyConfig| {
            t.across_ac = OneToOne::OneToOne;
            t.across_bc = ManyToOne::ManyToOne;
        };
        match name {
            "null" => {}
            "CRF_AC" => t.across_ac = OneToOne::OneToOne,
            "CRF_BC" => t.across_bc = ManyToOne::ManyToOne,
            "CRF_ACBC" => acbc(&mut t),
            "CRF_all" => {
                acbc(&mut t);
                t.across_ab = ManyToOne::ManyToOne;
            }
            "CRF_ACBC,C^f" => {
                acbc(&mut t);
                t.intra_c = full;
            }
            "CRF_ACBC,A^fC^f" => {
                acbc(&mut t);
                t.intra_a = full;
                t.intra_c = full;
            }
            "CRF_ACBC,B^fC^f" => {
                acbc(&mut t);
                t.intra_b = full;
                t.intra_c = full;
            }
            "CRF_ACBC,f" => {
                acbc(&mut t);
                t.intra_a = full;
                t.intra_b = full;
                t.intra_c = full;
            }
            "CRF_B^f" => t.intra_b = full,
            "CRF_ACBC,B^f" => {
                acbc(&mut t);
                t.intra_b = full;
            }
            "CRF_ACBC,A^fB^f" => {
                acbc(&mut t);
                t.intra_a = full;
                t.intra_b = full;
            }
            _ => {
                return Err(Error::UnknownPreset {
                    name: name.to_string(),
                    valid: PRESETS.join(", "),
                })
            }
        }
        Ok(t)
    }

    pub fn has_edges(&self) -> bool {
        *self != TopologyConfig::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeFeatureMode {
    BiasOnly,
    #[default]
    BiasPlusCosine,
}

impl EdgeFeatureMode {
    pub fn width(self) -> usize {
        match self {
            EdgeFeatureMode::BiasOnly => 1,
            EdgeFeatureMode::BiasPlusCosine => 2,
        }
    }
}

/// Edge feature vector `mu(x_u, x_v)`: a bias, optionally followed by the
/// cosine of the two embeddings. Embeddings of different tasks live in
/// different spaces, so the cosine slot is 0 whenever the widths differ.
pub fn edge_features(x_u: &[f64], x_v: &[f64], mode: EdgeFeatureMode) -> Vec<f64> {
    match mode {
        EdgeFeatureMode::BiasOnly => vec![1.0],
        EdgeFeatureMode::BiasPlusCosine => {
            let sim = if x_u.len() == x_v.len() { cosine(x_u, x_v) } else { 0.0 };
            vec![1.0, sim]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CommentInput {
    pub a: Option<Vec<f64>>,
    pub c: Option<Vec<f64>>,
    pub label_a: Option<bool>,
    pub label_c: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ThreadInput {
    pub b: Option<Vec<f64>>,
    pub label_b: Option<bool>,
    /// Comments in chronological order.
    pub comments: Vec<CommentInput>,
}

/// Task embeddings of one question group; threads in retrieval order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupInput {
    pub id: String,
    pub threads: Vec<ThreadInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub node: NodeRef,
    pub embedding: Vec<f64>,
    pub label: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub edge: EdgeRef,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorGraph {
    pub id: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    /// Per node: `(edge index, neighbour node index)`.
    pub adjacency: Vec<Vec<(usize, usize)>>,
    pub widths: PerTask<usize>,
}

impl FactorGraph {
    /// Assembles a graph from explicit parts. Used by [`build_graph`] and by
    /// tests that need arbitrary shapes.
    pub fn from_parts(id: impl Into<String>, nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        let mut widths: PerTask<Option<usize>> = PerTask::default();
        for n in &nodes {
            let w = widths.get_mut(n.node.task);
            match *w {
                None => *w = Some(n.embedding.len()),
                Some(expected) if expected != n.embedding.len() => {
                    return Err(Error::shape(
                        format!("embedding of {}", n.node),
                        expected,
                        n.embedding.len(),
                    ))
                }
                _ => {}
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut seen = std::collections::BTreeSet::new();
        for (k, e) in edges.iter().enumerate() {
            let EdgeRef { kind, u, v } = e.edge;
            if u == v || u >= nodes.len() || v >= nodes.len() {
                return Err(Error::Config(format!("invalid edge {u}-{v}")));
            }
            let (su, sv) = kind.tasks();
            if nodes[u].node.task != su || nodes[v].node.task != sv {
                return Err(Error::Config(format!(
                    "edge {kind} joins {} and {}",
                    nodes[u].node, nodes[v].node
                )));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::Config(format!("duplicate edge {u}-{v}")));
            }
            adjacency[u].push((k, v));
            adjacency[v].push((k, u));
        }
        Ok(Self {
            id: id.into(),
            nodes,
            edges,
            adjacency,
            widths: widths.map(|_, w| w.unwrap_or(0)),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.edge.kind == kind).count()
    }

    /// True when the graph has no cycles.
    pub fn is_forest(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut x = x;
            while p[x] != r {
                let next = p[x];
                p[x] = r;
                x = next;
            }
            r
        }
        for e in &self.edges {
            let a = find(&mut parent, e.edge.u);
            let b = find(&mut parent, e.edge.v);
            if a == b {
                return false;
            }
            parent[a] = b;
        }
        true
    }

    pub fn index_of(&self, node: &NodeRef) -> Option<usize> {
        self.nodes.iter().position(|n| n.node == *node)
    }

    /// Line-oriented dump: a header, one `node` line per node and one `edge`
    /// line per edge.
    pub fn dump(&self) -> String {
        let mut out = format!("jointcqa.graph v1 id={}\n", self.id);
        for (i, n) in self.nodes.iter().enumerate() {
            let label = match n.label {
                Some(true) => "1",
                Some(false) => "0",
                None => "?",
            };
            out.push_str(&format!(
                "node {i} {} width={} label={label}\n",
                n.node,
                n.embedding.len()
            ));
        }
        for (k, e) in self.edges.iter().enumerate() {
            let mu: Vec<String> = e.features.iter().map(|v| format!("{v}")).collect();
            out.push_str(&format!(
                "edge {k} {} {} {} mu={}\n",
                e.edge.kind,
                self.nodes[e.edge.u].node,
                self.nodes[e.edge.v].node,
                mu.join(",")
            ));
        }
        out
    }
}

fn take(v: &Option<Vec<f64>>, node: NodeRef) -> Result<Vec<f64>> {
    v.clone().ok_or_else(|| Error::MissingEmbedding(node.to_string()))
}

pub fn build_graph(group: &GroupInput, topology: &TopologyConfig, mode: EdgeFeatureMode) -> Result<FactorGraph> {
    if group.threads.is_empty() {
        return Err(Error::Config(format!("group {} has no threads", group.id)));
    }
    let mut nodes = Vec::new();
    let mut a_idx: Vec<Vec<usize>> = Vec::new();
    let mut c_idx: Vec<Vec<usize>> = Vec::new();
    let mut b_idx: Vec<usize> = Vec::new();
    for (ti, thread) in group.threads.iter().enumerate() {
        let i = ti + 1;
        let mut row = Vec::new();
        for (ci, comment) in thread.comments.iter().enumerate() {
            let node = NodeRef::a(i, ci + 1);
            row.push(nodes.len());
            nodes.push(Node {
                node,
                embedding: take(&comment.a, node)?,
                label: comment.label_a,
            });
        }
        a_idx.push(row);
    }
    for (ti, thread) in group.threads.iter().enumerate() {
        let node = NodeRef::b(ti + 1);
        b_idx.push(nodes.len());
        nodes.push(Node {
            node,
            embedding: take(&thread.b, node)?,
            label: thread.label_b,
        });
    }
    for (ti, thread) in group.threads.iter().enumerate() {
        let mut row = Vec::new();
        for (ci, comment) in thread.comments.iter().enumerate() {
            let node = NodeRef::c(ti + 1, ci + 1);
            row.push(nodes.len());
            nodes.push(Node {
                node,
                embedding: take(&comment.c, node)?,
                label: comment.label_c,
            });
        }
        c_idx.push(row);
    }

    let mut pairs: Vec<(EdgeKind, usize, usize)> = Vec::new();
    let within_threads = |idx: &[Vec<usize>], kind: EdgeKind, out: &mut Vec<(EdgeKind, usize, usize)>| {
        for row in idx {
            for (x, &u) in row.iter().enumerate() {
                for &v in &row[x + 1..] {
                    out.push((kind, u, v));
                }
            }
        }
    };
    if topology.intra_a == Intra::Full {
        within_threads(&a_idx, EdgeKind::AA, &mut pairs);
    }
    if topology.intra_b == Intra::Full {
        within_threads(std::slice::from_ref(&b_idx), EdgeKind::BB, &mut pairs);
    }
    if topology.intra_c == Intra::Full {
        within_threads(&c_idx, EdgeKind::CC, &mut pairs);
    }
    if topology.across_ac == OneToOne::OneToOne {
        for (ra, rc) in a_idx.iter().zip(&c_idx) {
            pairs.extend(ra.iter().zip(rc).map(|(&u, &v)| (EdgeKind::AC, u, v)));
        }
    }
    if topology.across_bc == ManyToOne::ManyToOne {
        for (&b, rc) in b_idx.iter().zip(&c_idx) {
            pairs.extend(rc.iter().map(|&v| (EdgeKind::BC, b, v)));
        }
    }
    if topology.across_ab == ManyToOne::ManyToOne {
        for (ra, &b) in a_idx.iter().zip(&b_idx) {
            pairs.extend(ra.iter().map(|&u| (EdgeKind::AB, u, b)));
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(kind, u, v)| Edge {
            edge: EdgeRef { kind, u, v },
            features: edge_features(&nodes[u].embedding, &nodes[v].embedding, mode),
        })
        .collect();
    FactorGraph::from_parts(group.id.clone(), nodes, edges)
}
