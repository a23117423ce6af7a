use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::factorgraph::{
    build_graph, CommentInput, Edge, EdgeFeatureMode, EdgeRef, GroupInput, Node, NodeRef, ThreadInput, TopologyConfig,
};
use crate::math::sigmoid;
use crate::nn::{FeatureRow, InputDims, Rmsprop, TaskNetworkSpec};
use crate::par::Exec;

fn node(task: Task, i: usize, x: Vec<f64>, label: Option<bool>) -> Node {
    let node = match task {
        Task::A => NodeRef::a(i, 1),
        Task::B => NodeRef::b(i),
        Task::C => NodeRef::c(i, 1),
    };
    Node {
        node,
        embedding: x,
        label,
    }
}

/// The edge kind joining two tasks, with endpoints in storage order.
fn edge_between(nodes: &[Node], a: usize, b: usize, features: Vec<f64>) -> Edge {
    let (ta, tb) = (nodes[a].node.task, nodes[b].node.task);
    let kind = EdgeKind::ALL
        .into_iter()
        .find(|k| k.tasks() == (ta, tb) || k.tasks() == (tb, ta))
        .expect("every task pair has a kind");
    let (u, v) = if kind.tasks().0 == ta { (a, b) } else { (b, a) };
    Edge {
        edge: EdgeRef { kind, u, v },
        features,
    }
}

const WIDTH: PerTask<usize> = PerTask { a: 2, b: 3, c: 2 };

fn random_task(rng: &mut ChaCha8Rng) -> Task {
    Task::ALL[rng.gen_range(0..3)]
}

fn random_nodes(rng: &mut ChaCha8Rng, n: usize, labeled: bool) -> Vec<Node> {
    (0..n)
        .map(|i| {
            let t = random_task(rng);
            let x = (0..*WIDTH.get(t)).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = labeled.then(|| rng.gen_bool(0.5));
            node(t, i + 1, x, y)
        })
        .collect()
}

fn random_features(rng: &mut ChaCha8Rng) -> Vec<f64> {
    vec![1.0, rng.gen_range(-1.0..1.0)]
}

fn random_tree(rng: &mut ChaCha8Rng, n: usize, labeled: bool) -> FactorGraph {
    let nodes = random_nodes(rng, n, labeled);
    let edges = (1..n)
        .map(|i| {
            let parent = rng.gen_range(0..i);
            let f = random_features(rng);
            edge_between(&nodes, parent, i, f)
        })
        .collect();
    FactorGraph::from_parts("tree", nodes, edges).unwrap()
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, p_edge: f64, labeled: bool) -> FactorGraph {
    let nodes = random_nodes(rng, n, labeled);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(p_edge) {
                let f = random_features(rng);
                edges.push(edge_between(&nodes, a, b, f));
            }
        }
    }
    FactorGraph::from_parts("graph", nodes, edges).unwrap()
}

fn random_params(rng: &mut ChaCha8Rng, scale: f64) -> CrfParameters {
    let mut p = CrfParameters::zeros(WIDTH, 2);
    let flat: Vec<f64> = (0..p.len()).map(|_| rng.gen_range(-scale..scale)).collect();
    p.set_flat(&flat);
    p
}

fn max_marginal_gap(a: &InferenceResult, b: &InferenceResult) -> f64 {
    let nodes = a
        .node_marginals
        .iter()
        .zip(&b.node_marginals)
        .flat_map(|(x, y)| (0..2).map(move |i| (x[i] - y[i]).abs()));
    let edges = a
        .edge_marginals
        .iter()
        .zip(&b.edge_marginals)
        .flat_map(|(x, y)| (0..EDGE_STATES).map(move |i| (x[i] - y[i]).abs()));
    nodes.chain(edges).fold(0.0, f64::max)
}

fn single_c(x: Vec<f64>, label: Option<bool>) -> FactorGraph {
    let w = x.len();
    let n = node(Task::C, 1, x, label);
    let mut g = FactorGraph::from_parts("one", vec![n], vec![]).unwrap();
    g.widths = PerTask::new(0, 0, w);
    g
}

#[test]
fn log_node_potential_examples() {
    let mut p = CrfParameters::zeros(PerTask::new(1, 1, 1), 1);
    p.node_weights.a = vec![1.0, 0.0];
    assert_eq!(log_node_potential(Task::A, false, &[2.0], &p).unwrap(), 0.0);
    assert_eq!(log_node_potential(Task::A, true, &[2.0], &p).unwrap(), 2.0);
    assert!(log_node_potential(Task::A, true, &[2.0, 1.0], &p).is_err());
    p.node_weights.b = vec![1.0, -3.0];
    assert_eq!(log_node_potential(Task::B, true, &[3.0], &p).unwrap(), 0.0);
}

#[test]
fn three_isolated_nodes_are_uniform() {
    let nodes = vec![
        node(Task::A, 1, vec![0.3, 0.1], None),
        node(Task::B, 2, vec![1.0, 2.0, 3.0], None),
        node(Task::C, 3, vec![-1.0, 0.5], None),
    ];
    let g = FactorGraph::from_parts("iso", nodes, vec![]).unwrap();
    let p = CrfParameters::zeros(WIDTH, 2);
    let r = brute_force_infer(&g, &p).unwrap();
    assert!((r.log_partition - 3.0 * 2f64.ln()).abs() < 1e-12);
    for m in &r.node_marginals {
        assert!((m[0] - 0.5).abs() < 1e-12 && (m[1] - 0.5).abs() < 1e-12);
    }
    let b = bp_infer(&g, &p, &BpConfig::default()).unwrap();
    assert!((b.log_partition - 3.0 * 2f64.ln()).abs() < 1e-12);
}

fn ln2_chain() -> (FactorGraph, CrfParameters) {
    let nodes = vec![
        node(Task::C, 1, vec![0.0, 0.0], None),
        node(Task::C, 2, vec![0.0, 0.0], None),
    ];
    let edges = vec![Edge {
        edge: EdgeRef {
            kind: EdgeKind::CC,
            u: 0,
            v: 1,
        },
        features: vec![1.0],
    }];
    let g = FactorGraph::from_parts("chain", nodes, edges).unwrap();
    let mut p = CrfParameters::zeros(WIDTH, 1);
    let ln2 = 2f64.ln();
    p.edge_weights[EdgeKind::CC.index()] = vec![ln2, 0.0, 0.0, ln2];
    (g, p)
}

#[test]
fn two_node_chain_partition() {
    let (g, p) = ln2_chain();
    let r = brute_force_infer(&g, &p).unwrap();
    assert!((r.log_partition - 6f64.ln()).abs() < 1e-12);
    assert!((r.node_marginals[0][1] - 0.5).abs() < 1e-12);
    assert!((r.edge_marginals[0][0] - 1.0 / 3.0).abs() < 1e-12);
    assert!((r.edge_marginals[0][1] - 1.0 / 6.0).abs() < 1e-12);
    let b = bp_infer(&g, &p, &BpConfig::default()).unwrap();
    assert!(max_marginal_gap(&r, &b) < 1e-12);
    assert!((b.log_partition - r.log_partition).abs() < 1e-12);
}

#[test]
fn single_node_is_a_sigmoid() {
    let g = single_c(vec![1.0], None);
    let mut p = CrfParameters::zeros(PerTask::new(0, 0, 1), 1);
    p.node_weights.c = vec![0.25, 0.75];
    let r = brute_force_infer(&g, &p).unwrap();
    assert!((r.node_marginals[0][1] - 0.7310585786300049).abs() < 1e-12);
}

#[test]
fn enumeration_size_limit() {
    let mut rng = crate::rng(3);
    let g = random_graph(&mut rng, MAX_ENUMERATION_NODES + 1, 0.0, false);
    let p = CrfParameters::zeros(WIDTH, 2);
    assert!(matches!(
        brute_force_infer(&g, &p),
        Err(Error::GraphTooLarge { nodes: 21, max: 20 })
    ));
}

#[test]
fn single_node_nll_example() {
    let g = single_c(vec![1.0], Some(true));
    let p = CrfParameters::zeros(PerTask::new(0, 0, 1), 1);
    let l2 = PerTask::new(0.0, 0.0, 0.0);
    for inf in [Inference::Exact, Inference::default()] {
        let (loss, grad) = nll_and_grad(&[&g], &p, &inf, l2, Exec::Sequential).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        assert!((grad.node_weights.c[0] + 0.5).abs() < 1e-12);
        assert!((grad.node_weights.c[1] + 0.5).abs() < 1e-12);
    }
}

#[test]
fn nll_requires_labels() {
    let g = single_c(vec![1.0], None);
    let p = CrfParameters::zeros(PerTask::new(0, 0, 1), 1);
    let r = nll_and_grad(
        &[&g],
        &p,
        &Inference::Exact,
        PerTask::new(0.0, 0.0, 0.0),
        Exec::Sequential,
    );
    assert!(matches!(r, Err(Error::UnlabeledNode(_))));
}

#[test]
fn observed_equals_expected_gives_zero_gradient() {
    // Two copies of a node at P(y=1) = 0.5, one labeled 1 and one labeled 0.
    let p = CrfParameters::zeros(PerTask::new(0, 0, 1), 1);
    let g1 = single_c(vec![0.7], Some(true));
    let g0 = single_c(vec![0.7], Some(false));
    let (_, grad) = nll_and_grad(
        &[&g1, &g0],
        &p,
        &Inference::Exact,
        PerTask::new(0.0, 0.0, 0.0),
        Exec::Sequential,
    )
    .unwrap();
    assert!(grad.to_flat().iter().all(|g| g.abs() < 1e-12));
}

#[test]
fn l2_excludes_bias_and_edges() {
    let mut rng = crate::rng(11);
    let g = random_tree(&mut rng, 4, true);
    let p = random_params(&mut rng, 1.0);
    let none = PerTask::new(0.0, 0.0, 0.0);
    let some = PerTask::new(0.3, 0.2, 0.1);
    let (l0, g0) = nll_and_grad(&[&g], &p, &Inference::Exact, none, Exec::Sequential).unwrap();
    let (l1, g1) = nll_and_grad(&[&g], &p, &Inference::Exact, some, Exec::Sequential).unwrap();
    let mut expect = 0.0;
    for t in Task::ALL {
        let w = p.node_weights.get(t);
        let d = w.len() - 1;
        let lam = *some.get(t);
        expect += lam * w[..d].iter().map(|x| x * x).sum::<f64>();
        for j in 0..d {
            let dg = g1.node_weights.get(t)[j] - g0.node_weights.get(t)[j];
            assert!((dg - 2.0 * lam * w[j]).abs() < 1e-12);
        }
        assert_eq!(g1.node_weights.get(t)[d], g0.node_weights.get(t)[d]);
    }
    assert_eq!(g1.edge_weights, g0.edge_weights);
    assert!((l1 - l0 - expect).abs() < 1e-12);
}

#[test]
fn bp_on_random_trees_matches_enumeration() {
    let mut rng = crate::rng(5);
    for case in 0..120 {
        let n = 1 + case % 10;
        let g = random_tree(&mut rng, n, false);
        let p = random_params(&mut rng, 1.0);
        let exact = brute_force_infer(&g, &p).unwrap();
        for schedule in [Schedule::Synchronous, Schedule::Sequential] {
            let cfg = BpConfig {
                schedule,
                ..BpConfig::default()
            };
            let bp = bp_infer(&g, &p, &cfg).unwrap();
            assert!(bp.converged);
            assert!(max_marginal_gap(&exact, &bp) <= 1e-8, "case {case}");
            assert!((exact.log_partition - bp.log_partition).abs() <= 1e-8);
            if schedule == Schedule::Synchronous && n > 1 {
                // Diameter + 1 sweeps suffice, plus one to observe no change.
                assert!(bp.iterations <= n + 1);
            }
        }
    }
}

#[test]
fn bp_on_triangles_is_close_to_enumeration() {
    let mut rng = crate::rng(8);
    for _ in 0..100 {
        let nodes: Vec<Node> = (1..=3)
            .map(|i| {
                node(
                    Task::C,
                    i,
                    vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    None,
                )
            })
            .collect();
        let edges = vec![
            edge_between(&nodes, 0, 1, random_features(&mut rng)),
            edge_between(&nodes, 1, 2, random_features(&mut rng)),
            edge_between(&nodes, 0, 2, random_features(&mut rng)),
        ];
        let g = FactorGraph::from_parts("tri", nodes, edges).unwrap();
        let mut p = random_params(&mut rng, 1.0);
        for w in &mut p.edge_weights {
            for v in w.iter_mut() {
                *v *= 0.5;
            }
        }
        let exact = brute_force_infer(&g, &p).unwrap();
        let bp = bp_infer(&g, &p, &BpConfig::default()).unwrap();
        assert!(bp.converged);
        let node_gap = exact
            .node_marginals
            .iter()
            .zip(&bp.node_marginals)
            .map(|(a, b)| (a[1] - b[1]).abs())
            .fold(0.0, f64::max);
        assert!(node_gap <= 0.05, "gap {node_gap}");
    }
}

#[test]
fn zero_weights_converge_immediately() {
    let mut rng = crate::rng(9);
    let g = random_graph(&mut rng, 9, 0.5, false);
    assert!(!g.edges.is_empty());
    let p = CrfParameters::zeros(WIDTH, 2);
    for schedule in [Schedule::Synchronous, Schedule::Sequential] {
        let cfg = BpConfig {
            schedule,
            ..BpConfig::default()
        };
        let r = bp_infer(&g, &p, &cfg).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        for m in &r.node_marginals {
            assert!((m[1] - 0.5).abs() < 1e-15);
        }
    }
}

#[test]
fn damped_runs_share_a_fixed_point() {
    let mut rng = crate::rng(12);
    let g = random_graph(&mut rng, 8, 0.6, false);
    assert!(!g.is_forest());
    let p = random_params(&mut rng, 0.5);
    let tight = |damping| BpConfig {
        damping,
        tolerance: 1e-12,
        max_iters: 2000,
        ..BpConfig::default()
    };
    let a = bp_infer(&g, &p, &tight(0.5)).unwrap();
    let b = bp_infer(&g, &p, &tight(0.8)).unwrap();
    let c = bp_infer(
        &g,
        &p,
        &BpConfig {
            schedule: Schedule::Sequential,
            ..tight(0.3)
        },
    )
    .unwrap();
    assert!(a.converged && b.converged && c.converged);
    assert!(max_marginal_gap(&a, &b) < 1e-9);
    assert!(max_marginal_gap(&a, &c) < 1e-9);
}

#[test]
fn non_convergence_is_reported() {
    let mut rng = crate::rng(13);
    let g = random_graph(&mut rng, 8, 0.8, false);
    let p = random_params(&mut rng, 1.0);
    let cfg = BpConfig {
        max_iters: 1,
        tolerance: 1e-300,
        ..BpConfig::default()
    };
    let r = bp_infer(&g, &p, &cfg).unwrap();
    assert!(!r.converged);
    assert_eq!(r.iterations, 1);
}

fn exact_loss(graphs: &[&FactorGraph], p: &CrfParameters, l2: PerTask<f64>) -> f64 {
    nll_and_grad(graphs, p, &Inference::Exact, l2, Exec::Sequential)
        .unwrap()
        .0
}

#[test]
fn exact_gradient_matches_finite_differences() {
    let mut rng = crate::rng(21);
    let l2 = PerTask::new(0.01, 0.05, 0.001);
    let mut worst = 0.0f64;
    for case in 0..25 {
        let g = random_graph(&mut rng, 2 + case % 7, 0.4, true);
        let p = random_params(&mut rng, 1.0);
        let (_, grad) = nll_and_grad(&[&g], &p, &Inference::Exact, l2, Exec::Sequential).unwrap();
        let base = p.to_flat();
        let analytic = grad.to_flat();
        let h = 1e-5;
        for k in 0..base.len() {
            let mut plus = p.clone();
            let mut minus = p.clone();
            let mut f = base.clone();
            f[k] += h;
            plus.set_flat(&f);
            f[k] -= 2.0 * h;
            minus.set_flat(&f);
            let numeric = (exact_loss(&[&g], &plus, l2) - exact_loss(&[&g], &minus, l2)) / (2.0 * h);
            let rel = (numeric - analytic[k]).abs() / numeric.abs().max(analytic[k].abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    assert!(worst <= 1e-5, "worst relative error {worst}");
}

#[test]
fn gradient_descent_is_monotone() {
    let mut rng = crate::rng(22);
    let graphs: Vec<FactorGraph> = (0..4).map(|i| random_graph(&mut rng, 3 + i, 0.5, true)).collect();
    let refs: Vec<&FactorGraph> = graphs.iter().collect();
    let l2 = PerTask::new(0.001, 0.05, 0.0001);
    let mut p = random_params(&mut rng, 0.5);
    let mut prev = f64::INFINITY;
    for _ in 0..100 {
        let (loss, grad) = nll_and_grad(&refs, &p, &Inference::Exact, l2, Exec::Sequential).unwrap();
        assert!(loss <= prev + 1e-12, "{loss} > {prev}");
        prev = loss;
        let f: Vec<f64> = p
            .to_flat()
            .iter()
            .zip(grad.to_flat())
            .map(|(w, g)| w - 0.01 * g)
            .collect();
        p.set_flat(&f);
    }
}

#[test]
fn parallel_and_sequential_gradients_agree() {
    let mut rng = crate::rng(23);
    let graphs: Vec<FactorGraph> = (0..16).map(|i| random_graph(&mut rng, 3 + i % 5, 0.5, true)).collect();
    let refs: Vec<&FactorGraph> = graphs.iter().collect();
    let p = random_params(&mut rng, 1.0);
    let l2 = PerTask::new(0.001, 0.05, 0.0001);
    let inf = Inference::default();
    let a = nll_and_grad(&refs, &p, &inf, l2, Exec::Sequential).unwrap();
    let b = nll_and_grad(&refs, &p, &inf, l2, Exec::default()).unwrap();
    assert_eq!(a.0.to_bits(), b.0.to_bits());
    assert_eq!(a.1, b.1);
}

fn small_spec(task: Task) -> TaskNetworkSpec {
    TaskNetworkSpec::with_widths(task, InputDims { q: 3, qi: 3, c: 4 }, 2, [3, 2, 4], 5)
}

fn random_row(rng: &mut ChaCha8Rng) -> FeatureRow {
    let mut v = |n: usize| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    FeatureRow {
        z_q: v(3),
        z_qi: v(3),
        z_c: v(4),
        phi_a: v(2),
        phi_b: v(2),
        phi_c: v(2),
        upstream: vec![],
    }
}

#[test]
fn dnn_initialization_reproduces_network_outputs() {
    let nets = PerTask::new(
        TaskNetwork::init(small_spec(Task::A), 1).unwrap(),
        TaskNetwork::init(small_spec(Task::B), 2).unwrap(),
        TaskNetwork::init(small_spec(Task::C), 3).unwrap(),
    );
    let mut rng = crate::rng(4);
    let mut group = GroupInput {
        id: "g".into(),
        threads: vec![],
    };
    let mut expected = Vec::new();
    let (mut pa, mut pc) = (Vec::new(), Vec::new());
    let mut pb = Vec::new();
    for _ in 0..3 {
        let row_b = random_row(&mut rng);
        pb.push(nets.b.predict_proba(&row_b).unwrap());
        let mut thread = ThreadInput {
            b: Some(nets.b.extract_task_embedding(&row_b).unwrap().vector),
            label_b: Some(true),
            comments: vec![],
        };
        for _ in 0..4 {
            let row = random_row(&mut rng);
            pa.push(nets.a.predict_proba(&row).unwrap());
            pc.push(nets.c.predict_proba(&row).unwrap());
            thread.comments.push(CommentInput {
                a: Some(nets.a.extract_task_embedding(&row).unwrap().vector),
                c: Some(nets.c.extract_task_embedding(&row).unwrap().vector),
                label_a: Some(false),
                label_c: Some(true),
            });
        }
        group.threads.push(thread);
    }
    expected.extend(pa);
    expected.extend(pb);
    expected.extend(pc);
    let params = CrfParameters::from_networks(nets.as_ref(), 2);
    for preset in ["null", "CRF_ACBC", "CRF_all", "CRF_ACBC,f"] {
        let topo = TopologyConfig::preset(preset).unwrap();
        let g = build_graph(&group, &topo, EdgeFeatureMode::BiasPlusCosine).unwrap();
        let scores = predict(&g, &params, &BpConfig::default()).unwrap();
        for (s, e) in scores.iter().zip(&expected) {
            assert!((s - e).abs() <= 1e-12, "{preset}: {s} vs {e}");
        }
    }
    let g = build_graph(
        &group,
        &TopologyConfig::preset("CRF_ACBC").unwrap(),
        EdgeFeatureMode::BiasPlusCosine,
    )
    .unwrap();
    let cfg = CrfTrainConfig {
        epochs: 0,
        ..CrfTrainConfig::default()
    };
    let (trained, trace) = train_crf(&[g.clone()], nets.as_ref(), 2, &cfg, Exec::Sequential).unwrap();
    assert!(trace.epoch_losses.is_empty());
    assert_eq!(trained, params);
    let wrong = CrfParameters::zeros(PerTask::new(9, 9, 9), 2);
    assert!(matches!(
        train_crf_from(&[g], wrong, &CrfTrainConfig::default(), Exec::Sequential),
        Err(Error::WidthMismatch { .. })
    ));
}

fn ac_pair(x_a: f64, diag: f64) -> (FactorGraph, CrfParameters) {
    let nodes = vec![
        node(Task::A, 1, vec![x_a], Some(true)),
        node(Task::C, 1, vec![0.0], Some(true)),
    ];
    let edges = vec![Edge {
        edge: EdgeRef {
            kind: EdgeKind::AC,
            u: 0,
            v: 1,
        },
        features: vec![1.0],
    }];
    let g = FactorGraph::from_parts("ac", nodes, edges).unwrap();
    let mut p = CrfParameters::zeros(PerTask::new(1, 0, 1), 1);
    p.node_weights.a = vec![1.0, 0.0];
    p.node_weights.c = vec![0.0, -0.5];
    p.edge_weights[EdgeKind::AC.index()] = vec![diag, 0.0, 0.0, diag];
    (g, p)
}

#[test]
fn attractive_edge_pulls_c_toward_a() {
    let factorized = sigmoid(-0.5);
    let (g, p) = ac_pair(4.0, 3.0);
    let exact = brute_force_infer(&g, &p).unwrap();
    assert!(exact.node_marginals[1][1] > factorized + 0.3);
    let (g, p) = ac_pair(-4.0, 3.0);
    let exact = brute_force_infer(&g, &p).unwrap();
    assert!(exact.node_marginals[1][1] < factorized - 0.2);
    let bp = predict(&g, &p, &BpConfig::default()).unwrap();
    assert!((bp[1] - exact.node_marginals[1][1]).abs() < 1e-12);
}

#[test]
fn cross_task_influence_only_in_joint_model() {
    let (g1, p) = ac_pair(0.5, 1.0);
    let (g2, _) = ac_pair(-1.5, 1.0);
    let c1 = brute_force_infer(&g1, &p).unwrap().node_marginals[1][1];
    let c2 = brute_force_infer(&g2, &p).unwrap().node_marginals[1][1];
    assert!((c1 - c2).abs() > 1e-3);

    // The local baseline's C factor is the same whatever p_a is.
    let pc = sigmoid(-0.5);
    let pos = |pa: f64| local_joint_baseline((pa, 0.5, pc), (true, true, true));
    let neg = |pa: f64| local_joint_baseline((pa, 0.5, pc), (true, true, false));
    for pa in [sigmoid(0.5), sigmoid(-1.5)] {
        let marginal_c = pos(pa) / (pos(pa) + neg(pa));
        assert!((marginal_c - pc).abs() < 1e-15);
    }
}

#[test]
fn local_baseline_examples() {
    assert!((local_joint_baseline((0.5, 0.5, 0.5), (true, true, true)) - 0.125).abs() < 1e-15);
    assert_eq!(local_joint_baseline((0.0, 0.3, 0.9), (true, true, true)), 0.0);
    assert!((local_joint_baseline((0.9, 0.8, 0.7), (true, true, true)) - 0.504).abs() < 1e-12);
    assert!((local_joint_baseline((0.9, 0.8, 0.7), (false, true, false)) - 0.1 * 0.8 * 0.3).abs() < 1e-12);
}

fn toy_dataset(seed: u64) -> Vec<FactorGraph> {
    let mut rng = crate::rng(seed);
    (0..6).map(|i| random_graph(&mut rng, 4 + i % 3, 0.5, true)).collect()
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let data = toy_dataset(31);
    let init = CrfParameters::zeros(WIDTH, 2);
    let cfg = CrfTrainConfig {
        epochs: 30,
        rmsprop: Rmsprop {
            learning_rate: 0.01,
            ..Rmsprop::default()
        },
        seed: 7,
        ..CrfTrainConfig::default()
    };
    let (p1, t1) = train_crf_from(&data, init.clone(), &cfg, Exec::Sequential).unwrap();
    let (p2, t2) = train_crf_from(&data, init.clone(), &cfg, Exec::default()).unwrap();
    assert_eq!(p1, p2);
    assert_eq!(t1, t2);
    assert!(t1.epoch_losses.last().unwrap() < &t1.epoch_losses[0]);
    let batched = CrfTrainConfig { batch_size: 4, ..cfg };
    let (p3, _) = train_crf_from(&data, init, &batched, Exec::default()).unwrap();
    assert!(p3.is_finite());
}

#[test]
fn params_round_trip_bit_exact() {
    let mut rng = crate::rng(41);
    let p = random_params(&mut rng, 3.0);
    let file = CrfFile::new("CRF_ACBC", p.clone());
    let back = CrfFile::from_json(&file.to_json().unwrap()).unwrap();
    assert_eq!(
        back.params.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        p.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(back.topology, "CRF_ACBC");

    let dir = std::env::temp_dir().join(format!("jointcqa-crf-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("crf.json");
    save_params(&path, "null", &p).unwrap();
    assert_eq!(load_params(&path).unwrap().params, p);
    std::fs::remove_dir_all(&dir).unwrap();

    let mut bad: serde_json::Value = serde_json::from_str(&file.to_json().unwrap()).unwrap();
    bad["version"] = serde_json::json!(CRF_FORMAT_VERSION + 1);
    assert!(CrfFile::from_json(&bad.to_string()).is_err());
}

#[test]
fn score_dump_format() {
    let (g, p) = ln2_chain();
    let scores = predict(&g, &p, &BpConfig::default()).unwrap();
    assert_eq!(format_scores(&g, &scores), "chain\tC:1:1\t0.5\nchain\tC:2:1\t0.5\n");
    assert_eq!(predict_labels(&[0.2, 0.5, 0.9]), vec![false, true, true]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn marginals_normalized_and_locally_consistent(seed in 0u64..10_000, n in 2usize..9) {
        let mut rng = crate::rng(seed);
        let g = random_graph(&mut rng, n, 0.5, false);
        let p = random_params(&mut rng, 1.0);
        let r = bp_infer(&g, &p, &BpConfig::default()).unwrap();
        for m in &r.node_marginals {
            prop_assert!((m[0] + m[1] - 1.0).abs() < 1e-9);
        }
        for m in &r.edge_marginals {
            prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        if r.converged {
            for (e, m) in g.edges.iter().zip(&r.edge_marginals) {
                let pu1 = m[2] + m[3];
                let pv1 = m[1] + m[3];
                prop_assert!((pu1 - r.node_marginals[e.edge.u][1]).abs() < 1e-5);
                prop_assert!((pv1 - r.node_marginals[e.edge.v][1]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn zero_edges_give_sigmoids(seed in 0u64..10_000, n in 1usize..12) {
        let mut rng = crate::rng(seed);
        let g = random_graph(&mut rng, n, 0.4, false);
        let mut p = random_params(&mut rng, 2.0);
        for w in &mut p.edge_weights {
            w.iter_mut().for_each(|v| *v = 0.0);
        }
        let scores = predict(&g, &p, &BpConfig::default()).unwrap();
        for (nd, s) in g.nodes.iter().zip(scores) {
            let z = log_node_potential(nd.node.task, true, &nd.embedding, &p).unwrap();
            prop_assert!((s - sigmoid(z)).abs() < 1e-12);
        }
    }
}
