use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{bp, edge_state, exact, BpConfig, CrfParameters, InferenceResult, Potentials, EDGE_STATES};
use crate::error::{Error, Result};
use crate::factorgraph::FactorGraph;
use crate::nn::{Rmsprop, TaskNetwork};
use crate::par::Exec;
use crate::task::{PerTask, Task};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Inference {
    /// Enumeration; limited to small graphs.
    Exact,
    Bp(BpConfig),
}

impl Default for Inference {
    fn default() -> Self {
        Inference::Bp(BpConfig::default())
    }
}

impl Inference {
    pub fn run(&self, graph: &FactorGraph, params: &CrfParameters) -> Result<InferenceResult> {
        match self {
            Inference::Exact => exact::brute_force_infer(graph, params),
            Inference::Bp(cfg) => super::bp_infer(graph, params, cfg),
        }
    }
}

fn gold_labels(graph: &FactorGraph) -> Result<Vec<bool>> {
    graph
        .nodes
        .iter()
        .map(|n| {
            n.label
                .ok_or_else(|| Error::UnlabeledNode(format!("{} in {}", n.node, graph.id)))
        })
        .collect()
}

/// NLL of one graph and its gradient, without regularization.
fn graph_nll_and_grad(
    graph: &FactorGraph,
    params: &CrfParameters,
    inference: &Inference,
) -> Result<(f64, CrfParameters)> {
    let gold = gold_labels(graph)?;
    let pot = Potentials::new(graph, params)?;
    let result = match inference {
        Inference::Exact => exact::brute_force_infer(graph, params)?,
        Inference::Bp(cfg) => {
            cfg.validate()?;
            bp::run(graph, &pot, cfg)
        }
    };
    let loss = result.log_partition - pot.score(graph, &gold);

    let mut grad = params.zeros_like();
    for (n, (m, &y)) in graph.nodes.iter().zip(result.node_marginals.iter().zip(&gold)) {
        let coef = m[1] - if y { 1.0 } else { 0.0 };
        let g = grad.node_weights.get_mut(n.node.task);
        let d = n.embedding.len();
        for (gi, xi) in g[..d].iter_mut().zip(&n.embedding) {
            *gi += coef * xi;
        }
        g[d] += coef;
    }
    for (e, m) in graph.edges.iter().zip(&result.edge_marginals) {
        let s_gold = edge_state(gold[e.edge.u], gold[e.edge.v]);
        for s in 0..EDGE_STATES {
            let coef = m[s] - if s == s_gold { 1.0 } else { 0.0 };
            if coef == 0.0 {
                continue;
            }
            for (gi, mu) in grad.edge_row_mut(e.edge.kind, s).iter_mut().zip(&e.features) {
                *gi += coef * mu;
            }
        }
    }
    Ok((loss, grad))
}

/// Summed negative log-likelihood of the labeled graphs plus
/// `l2_t * ||w_t||^2` on node weights (bias excluded), with its gradient.
///
/// Per-graph terms are computed with `exec` and summed in graph order.
pub fn nll_and_grad(
    graphs: &[&FactorGraph],
    params: &CrfParameters,
    inference: &Inference,
    l2: PerTask<f64>,
    exec: Exec,
) -> Result<(f64, CrfParameters)> {
    let parts = exec.map(graphs, |g| graph_nll_and_grad(g, params, inference));
    let mut loss = 0.0;
    let mut grad = params.zeros_like();
    let mut flat = grad.to_flat();
    for part in parts {
        let (l, g) = part?;
        loss += l;
        for (a, b) in flat.iter_mut().zip(g.to_flat()) {
            *a += b;
        }
    }
    grad.set_flat(&flat);
    for t in Task::ALL {
        let lambda = *l2.get(t);
        if lambda == 0.0 {
            continue;
        }
        let w = params.node_weights.get(t);
        let d = w.len() - 1;
        loss += lambda * w[..d].iter().map(|x| x * x).sum::<f64>();
        for (g, x) in grad.node_weights.get_mut(t)[..d].iter_mut().zip(&w[..d]) {
            *g += 2.0 * lambda * x;
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrfTrainConfig {
    pub epochs: usize,
    /// Graphs per optimizer step.
    pub batch_size: usize,
    pub rmsprop: Rmsprop,
    pub l2: PerTask<f64>,
    pub inference: Inference,
    pub seed: u64,
}

impl Default for CrfTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 1,
            rmsprop: Rmsprop::default(),
            l2: PerTask::new(0.001, 0.05, 0.0001),
            inference: Inference::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CrfTrainTrace {
    /// Mean per-step objective for each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Initializes node weights from the task networks' output layers and edge
/// weights at zero, then trains.
pub fn train_crf(
    dataset: &[FactorGraph],
    nets: PerTask<&TaskNetwork>,
    edge_feature_width: usize,
    cfg: &CrfTrainConfig,
    exec: Exec,
) -> Result<(CrfParameters, CrfTrainTrace)> {
    let init = CrfParameters::from_networks(nets, edge_feature_width);
    for g in dataset {
        init.check_graph(g)?;
    }
    train_crf_from(dataset, init, cfg, exec)
}

/// RMSprop on the regularized NLL, one step per `batch_size` graphs, graphs
/// visited in a seeded random order each epoch.
pub fn train_crf_from(
    dataset: &[FactorGraph],
    init: CrfParameters,
    cfg: &CrfTrainConfig,
    exec: Exec,
) -> Result<(CrfParameters, CrfTrainTrace)> {
    cfg.rmsprop.validate()?;
    if cfg.batch_size == 0 {
        return Err(Error::Config("crf batch size must be positive".into()));
    }
    let mut params = init;
    let mut flat = params.to_flat();
    let mut cache = vec![0.0; flat.len()];
    let mut rng = crate::rng(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut trace = CrfTrainTrace::default();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&FactorGraph> = chunk.iter().map(|&i| &dataset[i]).collect();
            let (loss, grad) = nll_and_grad(&batch, &params, &cfg.inference, cfg.l2, exec)?;
            if loss.is_nan() {
                return Err(Error::NanLoss {
                    epoch: trace.epoch_losses.len() + 1,
                });
            }
            total += loss;
            steps += 1;
            cfg.rmsprop.step(&mut flat, &grad.to_flat(), &mut cache)?;
            params.set_flat(&flat);
        }
        trace
            .epoch_losses
            .push(if steps > 0 { total / steps as f64 } else { 0.0 });
    }
    Ok((params, trace))
}

/// Positive-class marginal per node.
pub fn predict(graph: &FactorGraph, params: &CrfParameters, cfg: &BpConfig) -> Result<Vec<f64>> {
    Ok(super::bp_infer(graph, params, cfg)?.positive_scores())
}

/// Posterior-marginal decoding: label 1 iff the marginal is at least 0.5.
pub fn predict_labels(scores: &[f64]) -> Vec<bool> {
    scores.iter().map(|&s| s >= 0.5).collect()
}
