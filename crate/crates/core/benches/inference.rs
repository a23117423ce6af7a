use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use jointcqa::crf::{bp_infer, nll_and_grad, BpConfig, CrfParameters, Inference};
use jointcqa::data::{synth_generate, SynthConfig};
use jointcqa::experiment::{build_graphs, embed_all, extract, ExperimentConfig};
use jointcqa::factorgraph::{FactorGraph, TopologyConfig};
use jointcqa::nn::TaskNetwork;
use jointcqa::par::Exec;
use jointcqa::task::{PerTask, Task};

fn workload(preset: &str) -> (Vec<FactorGraph>, CrfParameters) {
    let groups = synth_generate(&SynthConfig {
        groups: 64,
        threads_per_group: 4,
        comments_per_thread: 5,
        ..SynthConfig::default()
    })
    .unwrap();
    let ex = extract(&groups, &[], &groups, None, Exec::Sequential).unwrap();
    let cfg = ExperimentConfig::default();
    let net = |t: Task, seed| TaskNetwork::init(cfg.spec(t, ex.layout), seed).unwrap();
    let nets = PerTask::new(net(Task::A, 1), net(Task::B, 2), net(Task::C, 3));
    let emb = embed_all(&groups, &ex.rows, nets.as_ref(), Exec::Sequential).unwrap();
    let topology = TopologyConfig::preset(preset).unwrap();
    let graphs = build_graphs(&emb, &topology, cfg.edge_features, Exec::Sequential).unwrap();
    let mut params = CrfParameters::from_networks(nets.as_ref(), cfg.edge_features.width());
    for (kind, w) in params.edge_weights.iter_mut().enumerate() {
        for (k, x) in w.iter_mut().enumerate() {
            *x = 0.3 * (((kind + k) % 7) as f64 / 7.0 - 0.5);
        }
    }
    (graphs, params)
}

fn strategies() -> Vec<(&'static str, Exec)> {
    let mut v = vec![("sequential", Exec::Sequential)];
    #[cfg(feature = "parallel")]
    v.push(("parallel", Exec::Parallel));
    v
}

fn bench_bp(c: &mut Criterion) {
    let mut group = c.benchmark_group("bp_batch");
    for preset in ["CRF_ACBC", "CRF_ACBC,f"] {
        let (graphs, params) = workload(preset);
        let cfg = BpConfig::default();
        for (name, exec) in strategies() {
            group.bench_with_input(BenchmarkId::new(name, preset), &graphs, |b, graphs| {
                b.iter(|| exec.map(graphs, |g| black_box(bp_infer(g, &params, &cfg).unwrap().log_partition)))
            });
        }
    }
    group.finish();
}

fn bench_gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("nll_grad_batch");
    let (graphs, params) = workload("CRF_all");
    let batch: Vec<&FactorGraph> = graphs.iter().collect();
    let l2 = PerTask::new(0.001, 0.05, 0.0001);
    let inference = Inference::default();
    for (name, exec) in strategies() {
        group.bench_function(name, |b| {
            b.iter(|| black_box(nll_and_grad(&batch, &params, &inference, l2, exec).unwrap().0))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_bp, bench_gradient);
criterion_main!(benches);
