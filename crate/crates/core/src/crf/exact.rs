use super::{edge_state, InferenceResult, Potentials, EDGE_STATES};
use crate::crf::CrfParameters;
use crate::error::{Error, Result};
use crate::factorgraph::FactorGraph;

pub const MAX_ENUMERATION_NODES: usize = 20;

/// Exact marginals and log partition by summing over all labelings.
pub fn brute_force_infer(graph: &FactorGraph, params: &CrfParameters) -> Result<InferenceResult> {
    let n = graph.len();
    if n > MAX_ENUMERATION_NODES {
        return Err(Error::GraphTooLarge {
            nodes: n,
            max: MAX_ENUMERATION_NODES,
        });
    }
    let pot = Potentials::new(graph, params)?;
    let total = 1usize << n;
    let mut labels = vec![false; n];
    let mut scores = Vec::with_capacity(total);
    for code in 0..total {
        for (i, y) in labels.iter_mut().enumerate() {
            *y = code >> i & 1 == 1;
        }
        scores.push(pot.score(graph, &labels));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    let log_partition = max + z.ln();

    let mut node_marginals = vec![[0.0; 2]; n];
    let mut edge_marginals = vec![[0.0; EDGE_STATES]; graph.edges.len()];
    for (code, s) in scores.iter().enumerate() {
        let p = (s - log_partition).exp();
        for (i, m) in node_marginals.iter_mut().enumerate() {
            m[code >> i & 1] += p;
        }
        for (e, m) in graph.edges.iter().zip(edge_marginals.iter_mut()) {
            let yu = code >> e.edge.u & 1 == 1;
            let yv = code >> e.edge.v & 1 == 1;
            m[edge_state(yu, yv)] += p;
        }
    }
    Ok(InferenceResult {
        node_marginals,
        edge_marginals,
        log_partition,
        converged: true,
        iterations: 1,
    })
}
