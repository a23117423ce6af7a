//! Globally normalized pairwise CRF over [`FactorGraph`]s.
//!
//! Every node is binary. The node factor is `exp(w_t . [x_u, 1])` for the
//! positive label and `exp(0)` for the negative one, so a CRF without edges
//! reproduces the sigmoid outputs of the task networks it was initialized
//! from. Edge factors are log-linear in the edge feature vector `mu`, with
//! one weight row per joint state in the order (0,0), (0,1), (1,0), (1,1).

mod bp;
mod exact;
mod io;
mod learn;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorgraph::{EdgeKind, FactorGraph};
use crate::math::dot;
use crate::nn::TaskNetwork;
use crate::task::{PerTask, Task};

pub use bp::{bp_infer, BpConfig, Schedule};
pub use exact::{brute_force_infer, MAX_ENUMERATION_NODES};
pub use io::{format_scores, load_params, save_params, CrfFile, CRF_FORMAT_VERSION};
pub use learn::{
    nll_and_grad, predict, predict_labels, train_crf, train_crf_from, CrfTrainConfig, CrfTrainTrace, Inference,
};

/// Number of joint states of a binary pair.
pub const EDGE_STATES: usize = 4;

pub fn edge_state(y_u: bool, y_v: bool) -> usize {
    2 * y_u as usize + y_v as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfParameters {
    /// Positive-class weights over `[x_u, 1]` per task (bias last).
    pub node_weights: PerTask<Vec<f64>>,
    /// Per edge kind (indexed by [`EdgeKind::index`]), row-major
    /// `EDGE_STATES x edge_feature_width`.
    pub edge_weights: [Vec<f64>; 6],
    pub edge_feature_width: usize,
}

impl CrfParameters {
    pub fn zeros(widths: PerTask<usize>, edge_feature_width: usize) -> Self {
        Self {
            node_weights: widths.map(|_, &w| vec![0.0; w + 1]),
            edge_weights: std::array::from_fn(|_| vec![0.0; EDGE_STATES * edge_feature_width]),
            edge_feature_width,
        }
    }

    /// Node weights copied from each network's output layer; edge weights 0.
    pub fn from_networks(nets: PerTask<&TaskNetwork>, edge_feature_width: usize) -> Self {
        Self {
            node_weights: nets.map(|_, n| n.output_weights_with_bias()),
            edge_weights: std::array::from_fn(|_| vec![0.0; EDGE_STATES * edge_feature_width]),
            edge_feature_width,
        }
    }

    pub fn embedding_width(&self, task: Task) -> usize {
        self.node_weights.get(task).len() - 1
    }

    pub fn edge_row(&self, kind: EdgeKind, state: usize) -> &[f64] {
        let w = self.edge_feature_width;
        &self.edge_weights[kind.index()][state * w..(state + 1) * w]
    }

    pub fn edge_row_mut(&mut self, kind: EdgeKind, state: usize) -> &mut [f64] {
        let w = self.edge_feature_width;
        &mut self.edge_weights[kind.index()][state * w..(state + 1) * w]
    }

    pub fn len(&self) -> usize {
        Task::ALL.iter().map(|&t| self.node_weights.get(t).len()).sum::<usize>()
            + self.edge_weights.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node weights A, B, C then edge weights in [`EdgeKind::ALL`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for t in Task::ALL {
            out.extend_from_slice(self.node_weights.get(t));
        }
        for w in &self.edge_weights {
            out.extend_from_slice(w);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.len(), "flat parameter length");
        let mut at = 0;
        for t in Task::ALL {
            let w = self.node_weights.get_mut(t);
            let n = w.len();
            w.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        for w in &mut self.edge_weights {
            let n = w.len();
            w.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.set_flat(&vec![0.0; self.len()]);
        z
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    /// Checks that the graph's embedding and edge feature widths fit.
    pub fn check_graph(&self, graph: &FactorGraph) -> Result<()> {
        for n in &graph.nodes {
            let want = self.embedding_width(n.node.task);
            if n.embedding.len() != want {
                return Err(Error::WidthMismatch {
                    task: n.node.task,
                    network: want,
                    graph: n.embedding.len(),
                });
            }
        }
        for e in &graph.edges {
            if e.features.len() != self.edge_feature_width {
                return Err(Error::shape(
                    format!("edge features of {}", e.edge.kind),
                    self.edge_feature_width,
                    e.features.len(),
                ));
            }
        }
        Ok(())
    }
}

/// `w_t . [x_u, 1]` for label 1, 0 for label 0.
pub fn log_node_potential(task: Task, label: bool, x_u: &[f64], params: &CrfParameters) -> Result<f64> {
    let w = params.node_weights.get(task);
    if x_u.len() + 1 != w.len() {
        return Err(Error::shape(
            format!("node embedding for task {task}"),
            w.len() - 1,
            x_u.len(),
        ));
    }
    if !label {
        return Ok(0.0);
    }
    Ok(dot(&w[..x_u.len()], x_u) + w[x_u.len()])
}

/// Log potentials of every node (per label) and edge (per joint state).
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    pub node: Vec<[f64; 2]>,
    pub edge: Vec<[f64; EDGE_STATES]>,
}

impl Potentials {
    pub fn new(graph: &FactorGraph, params: &CrfParameters) -> Result<Self> {
        params.check_graph(graph)?;
        let node = graph
            .nodes
            .iter()
            .map(|n| log_node_potential(n.node.task, true, &n.embedding, params).map(|s| [0.0, s]))
            .collect::<Result<Vec<_>>>()?;
        let edge = graph
            .edges
            .iter()
            .map(|e| std::array::from_fn(|s| dot(params.edge_row(e.edge.kind, s), &e.features)))
            .collect();
        Ok(Self { node, edge })
    }

    /// Unnormalized log score of a full labeling.
    pub fn score(&self, graph: &FactorGraph, labels: &[bool]) -> f64 {
        let mut s: f64 = self.node.iter().zip(labels).map(|(p, &y)| p[y as usize]).sum();
        for (e, p) in graph.edges.iter().zip(&self.edge) {
            s += p[edge_state(labels[e.edge.u], labels[e.edge.v])];
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    /// `[P(y=0), P(y=1)]` per node.
    pub node_marginals: Vec<[f64; 2]>,
    /// Joint-state distribution per edge.
    pub edge_marginals: Vec<[f64; EDGE_STATES]>,
    /// Exact on enumeration and on trees, Bethe approximation otherwise.
    pub log_partition: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl InferenceResult {
    pub fn positive_scores(&self) -> Vec<f64> {
        self.node_marginals.iter().map(|m| m[1]).collect()
    }
}

/// Joint probability of a labeling under the locally normalized product of
/// independent per-task Bernoullis.
pub fn local_joint_baseline(probs: (f64, f64, f64), labels: (bool, bool, bool)) -> f64 {
    let f = |p: f64, y: bool| if y { p } else { 1.0 - p };
    f(probs.0, labels.0) * f(probs.1, labels.1) * f(probs.2, labels.2)
}

#[cfg(test)]
mod tests;
