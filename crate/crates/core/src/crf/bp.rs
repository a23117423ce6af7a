//! Sum-product belief propagation in log space.
//!
//! Messages are stored as normalized log vectors over the receiving node's
//! two labels. On forests damping is skipped: undamped BP is exact there and
//! reaches its fixed point after at most diameter + 1 synchronous sweeps.

use serde::{Deserialize, Serialize};

use super::{edge_state, CrfParameters, InferenceResult, Potentials, EDGE_STATES};
use crate::error::{Error, Result};
use crate::factorgraph::FactorGraph;
use crate::math::{log_sum_exp, log_sum_exp2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Synchronous,
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BpConfig {
    pub schedule: Schedule,
    /// Weight of the previous message in `[0, 1)`.
    pub damping: f64,
    /// Convergence threshold on the largest change of any message
    /// (probability scale).
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            schedule: Schedule::Synchronous,
            damping: 0.5,
            tolerance: 1e-6,
            max_iters: 200,
        }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Config("bp damping must lie in [0, 1)".into()));
        }
        if !(self.tolerance > 0.0) || self.max_iters == 0 {
            return Err(Error::Config(
                "bp tolerance must be positive and max_iters at least 1".into(),
            ));
        }
        Ok(())
    }
}

fn normalize(m: [f64; 2]) -> [f64; 2] {
    let z = log_sum_exp2(m[0], m[1]);
    [m[0] - z, m[1] - z]
}

/// Message state: `msg[2k]` flows u -> v along edge k, `msg[2k + 1]` v -> u.
struct Messages {
    msg: Vec<[f64; 2]>,
}

impl Messages {
    fn incoming(&self, edge: usize, into_u: bool) -> [f64; 2] {
        if into_u {
            self.msg[2 * edge + 1]
        } else {
            self.msg[2 * edge]
        }
    }

    /// Sum of incoming log messages at `node`, excluding edge `skip`.
    fn cavity(&self, graph: &FactorGraph, node: usize, skip: Option<usize>) -> [f64; 2] {
        let mut acc = [0.0; 2];
        for &(k, _) in &graph.adjacency[node] {
            if Some(k) == skip {
                continue;
            }
            let into_u = graph.edges[k].edge.u == node;
            let m = self.incoming(k, into_u);
            acc[0] += m[0];
            acc[1] += m[1];
        }
        acc
    }
}

fn fresh_message(graph: &FactorGraph, pot: &Potentials, msgs: &Messages, slot: usize) -> [f64; 2] {
    let k = slot / 2;
    let forward = slot % 2 == 0;
    let e = graph.edges[k].edge;
    let (src, _) = if forward { (e.u, e.v) } else { (e.v, e.u) };
    let cav = msgs.cavity(graph, src, Some(k));
    let mut out = [0.0; 2];
    for (y_dst, o) in out.iter_mut().enumerate() {
        let terms: [f64; 2] = std::array::from_fn(|y_src| {
            let (yu, yv) = if forward {
                (y_src == 1, y_dst == 1)
            } else {
                (y_dst == 1, y_src == 1)
            };
            pot.node[src][y_src] + cav[y_src] + pot.edge[k][edge_state(yu, yv)]
        });
        *o = log_sum_exp(&terms);
    }
    normalize(out)
}

fn damp(old: [f64; 2], fresh: [f64; 2], damping: f64) -> [f64; 2] {
    if damping == 0.0 {
        return fresh;
    }
    let (a, b) = ((1.0 - damping).ln(), damping.ln());
    normalize([
        log_sum_exp2(a + fresh[0], b + old[0]),
        log_sum_exp2(a + fresh[1], b + old[1]),
    ])
}

fn change(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0].exp() - b[0].exp()).abs().max((a[1].exp() - b[1].exp()).abs())
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

pub fn bp_infer(graph: &FactorGraph, params: &CrfParameters, cfg: &BpConfig) -> Result<InferenceResult> {
    cfg.validate()?;
    let pot = Potentials::new(graph, params)?;
    Ok(run(graph, &pot, cfg))
}

pub(crate) fn run(graph: &FactorGraph, pot: &Potentials, cfg: &BpConfig) -> InferenceResult {
    let n_slots = 2 * graph.edges.len();
    let uniform = [-(2f64.ln()); 2];
    let mut msgs = Messages {
        msg: vec![uniform; n_slots],
    };
    let damping = if graph.is_forest() { 0.0 } else { cfg.damping };
    let mut converged = n_slots == 0;
    let mut iterations = 0;
    if n_slots > 0 {
        for it in 1..=cfg.max_iters {
            iterations = it;
            let mut delta = 0.0f64;
            match cfg.schedule {
                Schedule::Synchronous => {
                    let next: Vec<[f64; 2]> = (0..n_slots)
                        .map(|s| damp(msgs.msg[s], fresh_message(graph, pot, &msgs, s), damping))
                        .collect();
                    for (old, new) in msgs.msg.iter().zip(&next) {
                        delta = delta.max(change(*old, *new));
                    }
                    msgs.msg = next;
                }
                Schedule::Sequential => {
                    for s in 0..n_slots {
                        let new = damp(msgs.msg[s], fresh_message(graph, pot, &msgs, s), damping);
                        delta = delta.max(change(msgs.msg[s], new));
                        msgs.msg[s] = new;
                    }
                }
            }
            if delta < cfg.tolerance {
                converged = true;
                break;
            }
        }
    }
    beliefs(graph, pot, &msgs, converged, iterations)
}

fn beliefs(
    graph: &FactorGraph,
    pot: &Potentials,
    msgs: &Messages,
    converged: bool,
    iterations: usize,
) -> InferenceResult {
    let node_marginals: Vec<[f64; 2]> = (0..graph.len())
        .map(|u| {
            let cav = msgs.cavity(graph, u, None);
            let b = normalize([pot.node[u][0] + cav[0], pot.node[u][1] + cav[1]]);
            [b[0].exp(), b[1].exp()]
        })
        .collect();
    let edge_marginals: Vec<[f64; EDGE_STATES]> = graph
        .edges
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let (u, v) = (e.edge.u, e.edge.v);
            let cu = msgs.cavity(graph, u, Some(k));
            let cv = msgs.cavity(graph, v, Some(k));
            let logits: [f64; EDGE_STATES] = std::array::from_fn(|s| {
                let (yu, yv) = (s >> 1, s & 1);
                pot.node[u][yu] + cu[yu] + pot.node[v][yv] + cv[yv] + pot.edge[k][s]
            });
            let z = log_sum_exp(&logits);
            logits.map(|l| (l - z).exp())
        })
        .collect();

    // Bethe approximation: -F = E_b[log potentials] + H_edges - sum (d_u - 1) H_u.
    let mut neg_free = 0.0;
    for (u, b) in node_marginals.iter().enumerate() {
        neg_free += b[0] * pot.node[u][0] + b[1] * pot.node[u][1];
        let degree = graph.adjacency[u].len() as f64;
        neg_free -= (degree - 1.0) * entropy(b);
    }
    for (k, b) in edge_marginals.iter().enumerate() {
        neg_free += b.iter().zip(&pot.edge[k]).map(|(p, t)| p * t).sum::<f64>();
        neg_free += entropy(b);
    }
    InferenceResult {
        node_marginals,
        edge_marginals,
        log_partition: neg_free,
        converged,
        iterations,
    }
}
