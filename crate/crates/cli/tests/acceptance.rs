//! Acceptance run: one PASS/FAIL line per criterion.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::Parser;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use jointcqa::crf::{
    bp_infer, brute_force_infer, nll_and_grad, predict, BpConfig, CrfParameters, Inference, InferenceResult,
};
use jointcqa::data::{synth_generate, SynthConfig};
use jointcqa::eval::{mean_average_precision, mean_reciprocal_rank, RankedItem, RankedPrediction};
use jointcqa::experiment::{
    build_graphs, embed_all, extract, graph_scores, run_synthetic, split_groups, train_networks, ExperimentConfig,
    ExperimentReport, Extracted,
};
use jointcqa::factorgraph::{Edge, EdgeKind, EdgeRef, FactorGraph, Node, NodeRef, TopologyConfig, PRESETS};
use jointcqa::features::{bleu_with_components, meteor_lite, ter};
use jointcqa::nn::{FeatureRow, InputDims, TaskNetwork, TaskNetworkSpec};
use jointcqa::par::Exec;
use jointcqa::task::{PerTask, Task};

/// Subtask-C MAP gain of CRF_ACBC over DNN_C, mean of seeds 0..5 at sigma 1.5.
const FROZEN_ACBC_GAIN: f64 = 0.0417;
/// Slack below the frozen gain before the run counts as a regression.
const GAIN_SLACK: f64 = 0.005;
const SIGMA: f64 = 1.5;
const SEEDS: u64 = 5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

const WIDTH: PerTask<usize> = PerTask { a: 2, b: 3, c: 2 };

fn random_nodes(rng: &mut ChaCha8Rng, n: usize, labeled: bool) -> Vec<Node> {
    (1..=n)
        .map(|i| {
            let task = Task::ALL[rng.gen_range(0..3)];
            let node = match task {
                Task::A => NodeRef::a(i, 1),
                Task::B => NodeRef::b(i),
                Task::C => NodeRef::c(i, 1),
            };
            Node {
                node,
                embedding: (0..*WIDTH.get(task)).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                label: labeled.then(|| rng.gen_bool(0.5)),
            }
        })
        .collect()
}

fn edge(rng: &mut ChaCha8Rng, nodes: &[Node], a: usize, b: usize) -> Edge {
    let (ta, tb) = (nodes[a].node.task, nodes[b].node.task);
    let kind = EdgeKind::ALL
        .into_iter()
        .find(|k| k.tasks() == (ta, tb) || k.tasks() == (tb, ta))
        .unwrap();
    let (u, v) = if kind.tasks().0 == ta { (a, b) } else { (b, a) };
    Edge {
        edge: EdgeRef { kind, u, v },
        features: vec![1.0, rng.gen_range(-1.0..1.0)],
    }
}

fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> FactorGraph {
    let nodes = random_nodes(rng, n, false);
    let edges = (1..n)
        .map(|i| {
            let p = rng.gen_range(0..i);
            edge(rng, &nodes, p, i)
        })
        .collect();
    FactorGraph::from_parts("tree", nodes, edges).unwrap()
}

/// A connected graph with at least one cycle.
fn random_loopy(rng: &mut ChaCha8Rng, n: usize, labeled: bool) -> FactorGraph {
    loop {
        let nodes = random_nodes(rng, n, labeled);
        let mut edges = Vec::new();
        for i in 1..n {
            let p = rng.gen_range(0..i);
            edges.push(edge(rng, &nodes, p, i));
        }
        for a in 0..n {
            for b in a + 1..n {
                let present = edges
                    .iter()
                    .any(|e: &Edge| (e.edge.u.min(e.edge.v), e.edge.u.max(e.edge.v)) == (a, b));
                if !present && rng.gen_bool(0.3) {
                    edges.push(edge(rng, &nodes, a, b));
                }
            }
        }
        let g = FactorGraph::from_parts("loopy", nodes, edges).unwrap();
        if !g.is_forest() {
            return g;
        }
    }
}

fn random_params(rng: &mut ChaCha8Rng, node_scale: f64, edge_scale: f64) -> CrfParameters {
    let mut p = CrfParameters::zeros(WIDTH, 2);
    for t in Task::ALL {
        for w in p.node_weights.get_mut(t).iter_mut() {
            *w = rng.gen_range(-node_scale..node_scale);
        }
    }
    for e in &mut p.edge_weights {
        for w in e.iter_mut() {
            *w = rng.gen_range(-edge_scale..edge_scale);
        }
    }
    p
}

fn node_gap(a: &InferenceResult, b: &InferenceResult) -> f64 {
    a.node_marginals
        .iter()
        .zip(&b.node_marginals)
        .flat_map(|(x, y)| (0..2).map(move |i| (x[i] - y[i]).abs()))
        .fold(0.0, f64::max)
}

fn edge_gap(a: &InferenceResult, b: &InferenceResult) -> f64 {
    a.edge_marginals
        .iter()
        .zip(&b.edge_marginals)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn inference_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = jointcqa::rng(101);
    let cfg = BpConfig::default();
    let (mut tree_m, mut tree_z, mut trees) = (0.0f64, 0.0f64, 0);
    for case in 0..150 {
        let g = random_tree(&mut rng, 1 + case % 10);
        let p = random_params(&mut rng, 1.0, 1.0);
        let exact = brute_force_infer(&g, &p).unwrap();
        let bp = bp_infer(&g, &p, &cfg).unwrap();
        tree_m = tree_m.max(node_gap(&exact, &bp)).max(edge_gap(&exact, &bp));
        tree_z = tree_z.max((exact.log_partition - bp.log_partition).abs());
        trees += 1;
    }
    let (mut loopy_m, mut loopy_e, mut loops, mut unconverged) = (0.0f64, 0.0f64, 0, 0);
    for case in 0..150 {
        let g = random_loopy(&mut rng, 3 + case % 6, false);
        let p = random_params(&mut rng, 1.0, 0.5);
        let exact = brute_force_infer(&g, &p).unwrap();
        let bp = bp_infer(&g, &p, &cfg).unwrap();
        unconverged += usize::from(!bp.converged);
        loopy_m = loopy_m.max(node_gap(&exact, &bp));
        loopy_e = loopy_e.max(edge_gap(&exact, &bp));
        loops += 1;
    }
    let secs = start.elapsed();
    outcome(
        tree_m <= 1e-8 && tree_z <= 1e-8 && loopy_m <= 0.05 && secs < Duration::from_secs(60),
        format!(
            "{trees} trees: max marginal gap {tree_m:.1e}, max log Z gap {tree_z:.1e} (tol 1e-8); \
             {loops} loopy graphs: max node marginal gap {loopy_m:.4}, edge {loopy_e:.4} (tol 0.05 on nodes), \
             {unconverged} unconverged; {:.2}s (limit 60s)",
            secs.as_secs_f64()
        ),
    )
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = jointcqa::rng(202);
    let l2 = PerTask::new(0.01, 0.05, 0.001);
    let h = 1e-5;
    let loss =
        |g: &FactorGraph, p: &CrfParameters| nll_and_grad(&[g], p, &Inference::Exact, l2, Exec::Sequential).unwrap();
    let mut crf_worst = 0.0f64;
    for case in 0..50 {
        let n = 2 + case % 7;
        let g = if case % 2 == 0 {
            random_loopy(&mut rng, n.max(3), true)
        } else {
            let mut t = random_tree(&mut rng, n);
            for node in &mut t.nodes {
                node.label = Some(rng.gen_bool(0.5));
            }
            t
        };
        let p = random_params(&mut rng, 1.0, 1.0);
        let analytic = loss(&g, &p).1.to_flat();
        let base = p.to_flat();
        for k in 0..base.len() {
            let (mut plus, mut minus) = (p.clone(), p.clone());
            let mut f = base.clone();
            f[k] += h;
            plus.set_flat(&f);
            f[k] -= 2.0 * h;
            minus.set_flat(&f);
            let numeric = (loss(&g, &plus).0 - loss(&g, &minus).0) / (2.0 * h);
            crf_worst = crf_worst.max(rel_err(analytic[k], numeric));
        }
    }
    let mut dnn_worst = 0.0f64;
    let mut nets = 0;
    for case in 0..30 {
        let task = Task::ALL[case % 3];
        let dims = InputDims {
            q: rng.gen_range(1..=4),
            qi: rng.gen_range(1..=4),
            c: rng.gen_range(1..=4),
        };
        let phi = rng.gen_range(1..=3);
        let spec = TaskNetworkSpec::with_widths(
            task,
            dims,
            phi,
            [rng.gen_range(1..=6), rng.gen_range(1..=6), rng.gen_range(1..=6)],
            rng.gen_range(1..=6),
        );
        let net = TaskNetwork::init(spec.clone(), rng.gen()).unwrap();
        let rows: Vec<FeatureRow> = (0..4)
            .map(|_| {
                let mut v = |n: usize| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
                FeatureRow {
                    z_q: v(dims.q),
                    z_qi: v(dims.qi),
                    z_c: v(dims.c),
                    phi_a: v(phi),
                    phi_b: v(phi),
                    phi_c: v(phi),
                    upstream: vec![],
                }
            })
            .collect();
        let batch: Vec<(&FeatureRow, f64)> = rows
            .iter()
            .map(|r| (r, f64::from(u8::from(rng.gen_bool(0.5)))))
            .collect();
        let analytic = net.loss_and_gradient(&batch, 0.01).unwrap().1.to_flat();
        let base = net.params.to_flat();
        let mut probe = net.clone();
        for k in 0..base.len() {
            let mut f = base.clone();
            f[k] += h;
            probe.params.set_flat(&f);
            let up = probe.loss_and_gradient(&batch, 0.01).unwrap().0;
            f[k] -= 2.0 * h;
            probe.params.set_flat(&f);
            let down = probe.loss_and_gradient(&batch, 0.01).unwrap().0;
            dnn_worst = dnn_worst.max(rel_err(analytic[k], (up - down) / (2.0 * h)));
        }
        nets += 1;
    }
    let secs = start.elapsed();
    outcome(
        crf_worst <= 1e-5 && dnn_worst <= 1e-4 && secs < Duration::from_secs(60),
        format!(
            "CRF on 50 labeled graphs (n <= 8, exact inference): worst relative error {crf_worst:.1e} (tol 1e-5); \
             DNN on {nets} random networks: {dnn_worst:.1e} (tol 1e-4); {:.2}s (limit 60s)",
            secs.as_secs_f64()
        ),
    )
}

fn synth(seed: u64, groups: usize) -> SynthConfig {
    SynthConfig {
        groups,
        embedding_noise_sigma: SIGMA,
        seed,
        ..SynthConfig::default()
    }
}

fn initialization_equivalence() -> Outcome {
    let groups = synth_generate(&synth(7, 80)).unwrap();
    let (train, test) = split_groups(&groups, 0.4, 7).unwrap();
    let tr = extract(&train, &[], &train, None, Exec::default()).unwrap();
    let te: Extracted = extract(&test, &[], &train, None, Exec::default()).unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.reseed(7);
    for t in Task::ALL {
        cfg.dnn.get_mut(t).max_epochs = 10;
    }
    let nets = train_networks(&train, &tr.rows, tr.layout, &cfg, Exec::default()).unwrap();
    let nets = PerTask::new(&nets.a.0, &nets.b.0, &nets.c.0);
    let embedded = embed_all(&test, &te.rows, nets, Exec::default()).unwrap();
    let params = CrfParameters::from_networks(nets, cfg.edge_features.width());
    let mut worst = 0.0f64;
    let mut instances = 0;
    for preset in PRESETS {
        let topology = TopologyConfig::preset(preset).unwrap();
        let graphs = build_graphs(&embedded, &topology, cfg.edge_features, Exec::default()).unwrap();
        for ((g, graph), e) in test.iter().zip(&graphs).zip(&embedded) {
            let scores = graph_scores(g, graph, &predict(graph, &params, &cfg.predict_bp).unwrap()).unwrap();
            for t in Task::ALL {
                for (s, d) in scores.scores.get(t).iter().zip(e.dnn.scores.get(t)) {
                    worst = worst.max((s - d).abs());
                    instances += 1;
                }
            }
        }
    }
    outcome(
        worst <= 1e-12,
        format!(
            "{} held-out groups under all {} presets, {instances} node scores: max |CRF - DNN| = {worst:.1e} (tol 1e-12)",
            test.len(),
            PRESETS.len()
        ),
    )
}

struct SyntheticRuns {
    reports: Vec<ExperimentReport>,
    elapsed: Duration,
}

fn synthetic_runs() -> SyntheticRuns {
    let start = Instant::now();
    let reports = (0..SEEDS)
        .map(|seed| {
            let mut cfg = ExperimentConfig::default();
            cfg.reseed(seed);
            run_synthetic(&synth(seed, 500), &cfg, 0.4, Exec::default())
                .unwrap()
                .report
        })
        .collect();
    SyntheticRuns {
        reports,
        elapsed: start.elapsed(),
    }
}

impl SyntheticRuns {
    fn maps(&self, task: Task, system: &str) -> Vec<f64> {
        self.reports.iter().map(|r| r.get(task, system).unwrap().map).collect()
    }

    fn mean(&self, task: Task, system: &str) -> f64 {
        let v = self.maps(task, system);
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn structural_gain(runs: &SyntheticRuns) -> Outcome {
    let dnn = runs.mean(Task::C, "DNN_C");
    let ac = runs.mean(Task::C, "CRF_AC");
    let bc = runs.mean(Task::C, "CRF_BC");
    let acbc = runs.mean(Task::C, "CRF_ACBC");
    let gain = acbc - dnn;
    let pass = (0.6..=0.8).contains(&dnn)
        && gain >= 0.02
        && ac > dnn
        && bc > dnn
        && gain >= FROZEN_ACBC_GAIN - GAIN_SLACK
        && runs.elapsed < Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "{SEEDS} seeds, sigma {SIGMA}: mean C MAP DNN_C {:.2} (window 60-80), CRF_AC {:.2}, CRF_BC {:.2}, \
             CRF_ACBC {:.2} (+{:.2}, need >= +2.00 and >= frozen {:.2} - {:.2}); {:.1}s (limit 600s)",
            100.0 * dnn,
            100.0 * ac,
            100.0 * bc,
            100.0 * acbc,
            100.0 * gain,
            100.0 * FROZEN_ACBC_GAIN,
            100.0 * GAIN_SLACK,
            runs.elapsed.as_secs_f64()
        ),
    )
}

fn global_vs_local(runs: &SyntheticRuns) -> Outcome {
    let all = runs.maps(Task::C, "CRF_all");
    let local = runs.maps(Task::C, "Local_joint");
    let wins = all.iter().zip(&local).filter(|(a, l)| a >= l).count();
    let (ma, ml) = (runs.mean(Task::C, "CRF_all"), runs.mean(Task::C, "Local_joint"));
    let others: Vec<String> = [Task::A, Task::B]
        .iter()
        .map(|&t| {
            format!(
                "{t}: {:.2} vs {:.2}",
                100.0 * runs.mean(t, "CRF_all"),
                100.0 * runs.mean(t, "Local_joint")
            )
        })
        .collect();
    outcome(
        ma >= ml,
        format!(
            "mean C MAP CRF_all {:.2} vs Local_joint {:.2}, CRF_all >= Local_joint on {wins}/{SEEDS} seeds; {}",
            100.0 * ma,
            100.0 * ml,
            others.join(", ")
        ),
    )
}

fn ordered(query: &str, gold: &[bool]) -> RankedPrediction {
    let items = gold
        .iter()
        .enumerate()
        .map(|(k, &g)| RankedItem {
            id: format!("{query}{k}"),
            score: 1.0 - k as f64 / 10.0,
            gold: g,
        })
        .collect();
    RankedPrediction::new(query, items).unwrap()
}

fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn metric_units() -> Outcome {
    let mut checks: Vec<(&str, f64, f64)> = Vec::new();
    let map = mean_average_precision(&[ordered("q", &[true, false, true]), ordered("r", &[false, true])]).unwrap();
    checks.push(("MAP of APs 0.8333 and 0.5", map, (5.0 / 6.0 + 0.5) / 2.0));
    let mrr = mean_reciprocal_rank(&[ordered("q", &[false, true]), ordered("r", &[true])]).unwrap();
    checks.push(("MRR ranks 2 and 1", mrr, 0.75));
    checks.push(("TER substitution", ter(&tokens("a b c"), &tokens("a x c")), 1.0 / 3.0));
    checks.push(("TER shift", ter(&tokens("c a b"), &tokens("a b c")), 1.0 / 3.0));
    let (_, bleu) = bleu_with_components(&tokens("a b"), &tokens("a b c d"), 4);
    checks.push(("BLEU brevity penalty", bleu.brevity_penalty, (-1f64).exp()));
    checks.push((
        "METEOR-lite identity",
        meteor_lite(&tokens("the cat"), &tokens("the cat")),
        0.9375,
    ));
    let worst = checks
        .iter()
        .map(|(_, got, want)| (got - want).abs())
        .fold(0.0, f64::max);
    let listed: Vec<String> = checks.iter().map(|(n, got, _)| format!("{n} {got:.4}")).collect();
    outcome(
        worst <= 1e-12,
        format!("{} (max deviation {worst:.1e})", listed.join(", ")),
    )
}

fn mini_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/mini/config.toml")
}

fn cli(args: &[&str]) -> anyhow::Result<()> {
    let mut argv = vec!["jointcqa", "-q"];
    argv.extend_from_slice(args);
    jointcqa_cli::run(jointcqa_cli::Cli::try_parse_from(argv)?)
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn mini_corpus(out: &Path) -> Outcome {
    let start = Instant::now();
    let config = mini_config();
    if let Err(e) = cli(&["train", "-c", config.to_str().unwrap(), "-o", out.to_str().unwrap()]) {
        return outcome(false, format!("pipeline failed: {e:#}"));
    }
    let secs = start.elapsed();
    let metrics = std::fs::read_to_string(out.join("evaluate/metrics.txt")).unwrap();
    let values: BTreeMap<&str, f64> = metrics
        .lines()
        .filter_map(|l| l.split_once('='))
        .filter_map(|(k, v)| v.parse().ok().map(|v| (k, v)))
        .collect();
    let mut missing = Vec::new();
    for preset in PRESETS {
        for t in ["a", "b", "c"] {
            if !values.contains_key(format!("{t}.{preset}.map").as_str()) {
                missing.push(format!("{t}.{preset}.map"));
            }
        }
    }
    let bounded = values
        .iter()
        .filter(|(k, _)| k.ends_with(".map") || k.ends_with(".mrr"))
        .all(|(_, v)| (0.0..=1.0).contains(v));
    let rows: Extracted =
        serde_json::from_str(&std::fs::read_to_string(out.join("extract/train.rows.json")).unwrap()).unwrap();
    let d = rows.layout.dims;
    let slots_filled = d.q > 0 && d.qi > 0 && d.c > 0 && rows.layout.phi_width > 0 && rows.scaler.is_some();
    let groups =
        jointcqa::data::load_dataset(&config.with_file_name("dataset.json"), None, &Default::default()).unwrap();
    outcome(
        missing.is_empty() && bounded && slots_filled && secs < Duration::from_secs(120),
        format!(
            "{} groups, text features (z_q {} / z_qi {} / z_c {} / phi {} slots), {} presets, {} metric lines, \
             missing {:?}, rank metrics in [0,1]: {bounded}; {:.1}s (limit 120s)",
            groups.len(),
            d.q,
            d.qi,
            d.c,
            rows.layout.phi_width,
            PRESETS.len(),
            values.len(),
            missing,
            secs.as_secs_f64()
        ),
    )
}

fn determinism(first: &Path, scratch: &Path) -> Outcome {
    let config = mini_config();
    let second = scratch.join("rerun");
    let sequential = scratch.join("sequential");
    let synth_a = scratch.join("synth_a");
    let synth_b = scratch.join("synth_b");
    let runs = [
        cli(&["train", "-c", config.to_str().unwrap(), "-o", second.to_str().unwrap()]),
        cli(&[
            "train",
            "--sequential",
            "-c",
            config.to_str().unwrap(),
            "-o",
            sequential.to_str().unwrap(),
        ]),
        cli(&["synth", "--set", "synth.groups=30", "-o", synth_a.to_str().unwrap()]),
        cli(&["synth", "--set", "synth.groups=30", "-o", synth_b.to_str().unwrap()]),
    ];
    if let Some(e) = runs.into_iter().find_map(Result::err) {
        return outcome(false, format!("rerun failed: {e:#}"));
    }
    let a = read_tree(first);
    let b = read_tree(&second);
    let c = read_tree(&sequential);
    let differing: Vec<&String> = a
        .keys()
        .filter(|k| b.get(*k) != a.get(*k) || c.get(*k) != a.get(*k))
        .collect();
    let same_sets = a.len() == b.len() && a.len() == c.len();
    let synth_same = read_tree(&synth_a) == read_tree(&synth_b);
    outcome(
        differing.is_empty() && same_sets && synth_same,
        format!(
            "{} files compared across a rerun and a sequential run, differing {:?}; synth rerun identical: {synth_same}",
            a.len(),
            differing
        ),
    )
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let first = scratch.path().join("mini");
    let runs = synthetic_runs();
    let results = [
        ("inference correctness", inference_correctness()),
        ("gradient correctness", gradient_correctness()),
        ("initialization equivalence", initialization_equivalence()),
        ("structural gain", structural_gain(&runs)),
        ("global vs local normalization", global_vs_local(&runs)),
        ("metric unit suite", metric_units()),
        ("miniature corpus", mini_corpus(&first)),
        ("determinism", determinism(&first, scratch.path())),
    ];
    let mut failed = 0;
    for (k, (name, o)) in results.iter().enumerate() {
        println!(
            "criterion {} [{}] {name}: {}",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
