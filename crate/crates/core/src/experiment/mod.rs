//! The two-step pipeline: task networks, task embeddings, factor graphs, CRF
//! training and prediction, baselines and the metric report.
//!
//! Per-group scores and labels are kept in graph node order: comments
//! thread-major for A and C, threads in retrieval order for B.

mod extract;
mod pipeline;
mod report;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use extract::{
    comment_names, extract, pairwise_names, task_csv, text_names, Extracted, Extractor, GroupRows, RowLayout,
    RowScaler, BLEU_ORDER, NIST_ORDER,
};
pub use pipeline::{pipeline_baseline, PipelineVariant};
pub use report::{evaluate_system, ExperimentReport};

use crate::crf::{self, BpConfig, CrfParameters, CrfTrainConfig, CrfTrainTrace};
use crate::data::{baseline_orderings, synth_generate, QuestionGroup, SynthConfig};
use crate::error::{Error, Result};
use crate::factorgraph::{
    build_graph, CommentInput, EdgeFeatureMode, FactorGraph, GroupInput, ThreadInput, TopologyConfig,
};
use crate::nn::{
    train_dnn, FeatureRow, LabeledRow, TaskNetwork, TaskNetworkSpec, TrainConfig, TrainTrace, DEFAULT_INTERACTION,
    DEFAULT_TASK_LAYER,
};
use crate::par::Exec;
use crate::task::{PerTask, Task};

/// Everything the pipeline needs besides data. Missing fields take the
/// [`Default`] values when deserialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dnn: PerTask<TrainConfig>,
    /// Width of the `h1` block owned by each task.
    pub interaction: PerTask<usize>,
    pub task_layer: PerTask<usize>,
    pub crf: CrfTrainConfig,
    /// Inference used at prediction time.
    pub predict_bp: BpConfig,
    pub topologies: Vec<String>,
    pub edge_features: EdgeFeatureMode,
    pub pipeline: Vec<PipelineVariant>,
    pub baseline_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dnn: PerTask::new(
                TrainConfig::for_task(Task::A),
                TrainConfig::for_task(Task::B),
                TrainConfig::for_task(Task::C),
            ),
            interaction: PerTask::new(DEFAULT_INTERACTION[0], DEFAULT_INTERACTION[1], DEFAULT_INTERACTION[2]),
            task_layer: PerTask::new(DEFAULT_TASK_LAYER[0], DEFAULT_TASK_LAYER[1], DEFAULT_TASK_LAYER[2]),
            crf: CrfTrainConfig::default(),
            predict_bp: BpConfig::default(),
            topologies: ["CRF_AC", "CRF_BC", "CRF_ACBC", "CRF_all"].map(String::from).to_vec(),
            edge_features: EdgeFeatureMode::default(),
            pipeline: Vec::new(),
            baseline_seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Derives every seed from one: task `t` trains with `seed + index(t)`.
    pub fn reseed(&mut self, seed: u64) {
        for t in Task::ALL {
            self.dnn.get_mut(t).seed = seed.wrapping_add(t.index() as u64);
        }
        self.crf.seed = seed;
        self.baseline_seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        for t in Task::ALL {
            self.dnn.get(t).validate()?;
        }
        self.predict_bp.validate()?;
        for name in &self.topologies {
            TopologyConfig::preset(name)?;
        }
        Ok(())
    }

    pub fn spec(&self, task: Task, layout: RowLayout) -> TaskNetworkSpec {
        TaskNetworkSpec::with_widths(
            task,
            layout.dims,
            layout.phi_width,
            [self.interaction.a, self.interaction.b, self.interaction.c],
            *self.task_layer.get(task),
        )
    }
}

/// Splits groups into `(train, test)` with a seeded shuffle; both parts keep
/// the input order.
pub fn split_groups(
    groups: &[QuestionGroup],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<QuestionGroup>, Vec<QuestionGroup>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config("test fraction must lie in (0, 1)".into()));
    }
    let n = groups.len();
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n.saturating_sub(1));
    if n < 2 {
        return Err(Error::Config("splitting needs at least two groups".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::rng(seed));
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let (test, train): (Vec<_>, Vec<_>) = groups.iter().cloned().zip(is_test).partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(g, _)| g).collect(),
        test.into_iter().map(|(g, _)| g).collect(),
    ))
}

fn require(label: Option<bool>, what: &str) -> Result<f64> {
    label
        .map(|y| if y { 1.0 } else { 0.0 })
        .ok_or_else(|| Error::UnlabeledNode(what.to_string()))
}

/// Labeled training rows of one task: thread rows for B, comment rows for A
/// and C.
pub fn task_rows(groups: &[QuestionGroup], rows: &[GroupRows], task: Task) -> Result<Vec<LabeledRow>> {
    let mut out = Vec::new();
    for (g, r) in groups.iter().zip(rows) {
        for (i, t) in g.threads.iter().enumerate() {
            match task {
                Task::B => out.push(LabeledRow {
                    row: r.threads[i].clone(),
                    label: require(t.label_b, &t.id)?,
                }),
                Task::A | Task::C => {
                    for (m, c) in t.comments.iter().enumerate() {
                        let label = if task == Task::A { c.label_a } else { c.label_c };
                        out.push(LabeledRow {
                            row: r.comment_row(task, i, m).clone(),
                            label: require(label, &c.id)?,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// The three task networks, trained concurrently under `exec`.
pub fn train_networks(
    groups: &[QuestionGroup],
    rows: &[GroupRows],
    layout: RowLayout,
    cfg: &ExperimentConfig,
    exec: Exec,
) -> Result<PerTask<(TaskNetwork, TrainTrace)>> {
    let mut trained = exec
        .map(&Task::ALL, |&t| -> Result<(TaskNetwork, TrainTrace)> {
            let data = task_rows(groups, rows, t)?;
            train_dnn(&data, None, cfg.spec(t, layout), cfg.dnn.get(t))
        })
        .into_iter();
    let mut next = || trained.next().expect("one result per task");
    Ok(PerTask::new(next()?, next()?, next()?))
}

/// Per-group scores in node order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScores {
    pub group: String,
    pub scores: PerTask<Vec<f64>>,
}

/// Positive-class scores of one system on a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemScores {
    pub system: String,
    /// Classification decisions (score >= 0.5) are meaningful.
    pub probabilistic: bool,
    /// Tasks with scores; the vectors of other tasks are empty.
    pub tasks: Vec<Task>,
    pub groups: Vec<GroupScores>,
}

/// Task embeddings of a group plus the networks' own probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedGroup {
    pub input: GroupInput,
    pub dnn: GroupScores,
}

fn embed_row(net: &TaskNetwork, row: &FeatureRow) -> Result<(Vec<f64>, f64)> {
    Ok((net.extract_task_embedding(row)?.vector, net.predict_proba(row)?))
}

pub fn embed_group(group: &QuestionGroup, rows: &GroupRows, nets: PerTask<&TaskNetwork>) -> Result<EmbeddedGroup> {
    let mut scores: PerTask<Vec<f64>> = PerTask::default();
    let mut threads = Vec::with_capacity(group.threads.len());
    for (i, t) in group.threads.iter().enumerate() {
        let (b, p_b) = embed_row(nets.b, &rows.threads[i])?;
        scores.b.push(p_b);
        let mut comments = Vec::with_capacity(t.comments.len());
        for (m, c) in t.comments.iter().enumerate() {
            let (a, p_a) = embed_row(nets.a, rows.comment_row(Task::A, i, m))?;
            let (cv, p_c) = embed_row(nets.c, rows.comment_row(Task::C, i, m))?;
            scores.a.push(p_a);
            scores.c.push(p_c);
            comments.push(CommentInput {
                a: Some(a),
                c: Some(cv),
                label_a: c.label_a,
                label_c: c.label_c,
            });
        }
        threads.push(ThreadInput {
            b: Some(b),
            label_b: t.label_b,
            comments,
        });
    }
    Ok(EmbeddedGroup {
        input: GroupInput {
            id: group.id.clone(),
            threads,
        },
        dnn: GroupScores {
            group: group.id.clone(),
            scores,
        },
    })
}

pub fn embed_all(
    groups: &[QuestionGroup],
    rows: &[GroupRows],
    nets: PerTask<&TaskNetwork>,
    exec: Exec,
) -> Result<Vec<EmbeddedGroup>> {
    if groups.len() != rows.len() {
        return Err(Error::shape("feature rows per group", groups.len(), rows.len()));
    }
    let pairs: Vec<(&QuestionGroup, &GroupRows)> = groups.iter().zip(rows).collect();
    exec.map(&pairs, |(g, r)| embed_group(g, r, nets)).into_iter().collect()
}

pub fn build_graphs(
    embedded: &[EmbeddedGroup],
    topology: &TopologyConfig,
    mode: EdgeFeatureMode,
    exec: Exec,
) -> Result<Vec<FactorGraph>> {
    exec.map(embedded, |e| build_graph(&e.input, topology, mode))
        .into_iter()
        .collect()
}

/// Splits a graph's per-node scores back into per-task vectors.
pub fn graph_scores(group: &QuestionGroup, graph: &FactorGraph, scores: &[f64]) -> Result<GroupScores> {
    if scores.len() != graph.len() {
        return Err(Error::shape(
            format!("scores of {}", graph.id),
            graph.len(),
            scores.len(),
        ));
    }
    let mut offsets = Vec::with_capacity(group.threads.len());
    let mut total = 0;
    for t in &group.threads {
        offsets.push(total);
        total += t.comments.len();
    }
    let mut out: PerTask<Vec<f64>> = PerTask::new(vec![0.0; total], vec![0.0; group.threads.len()], vec![0.0; total]);
    for (node, &s) in graph.nodes.iter().zip(scores) {
        let i = node.node.question - 1;
        let slot = match node.node.comment {
            Some(m) => offsets[i] + m - 1,
            None => i,
        };
        out.get_mut(node.node.task)[slot] = s;
    }
    Ok(GroupScores {
        group: group.id.clone(),
        scores: out,
    })
}

/// CRF with DNN-initialized node weights trained on `train` graphs.
pub fn train_crf(
    train: &[FactorGraph],
    nets: PerTask<&TaskNetwork>,
    cfg: &ExperimentConfig,
    exec: Exec,
) -> Result<(CrfParameters, CrfTrainTrace)> {
    crf::train_crf(train, nets, cfg.edge_features.width(), &cfg.crf, exec)
}

pub fn predict_crf(
    groups: &[QuestionGroup],
    graphs: &[FactorGraph],
    params: &CrfParameters,
    bp: &BpConfig,
    system: &str,
    exec: Exec,
) -> Result<SystemScores> {
    let pairs: Vec<(&QuestionGroup, &FactorGraph)> = groups.iter().zip(graphs).collect();
    let groups = exec
        .map(&pairs, |(g, graph)| {
            graph_scores(g, graph, &crf::predict(graph, params, bp)?)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(SystemScores {
        system: system.to_string(),
        probabilistic: true,
        tasks: Task::ALL.to_vec(),
        groups,
    })
}

pub fn dnn_scores(embedded: &[EmbeddedGroup]) -> SystemScores {
    SystemScores {
        system: "DNN".into(),
        probabilistic: true,
        tasks: Task::ALL.to_vec(),
        groups: embedded.iter().map(|e| e.dnn.clone()).collect(),
    }
}

/// Marginals of the locally normalized product of the three networks'
/// Bernoullis, obtained by summing its joint over the other two labels.
pub fn local_joint_scores(embedded: &[EmbeddedGroup]) -> SystemScores {
    let marginal = |p: (f64, f64, f64), task: Task| -> f64 {
        let mut total = 0.0;
        for ya in [false, true] {
            for yb in [false, true] {
                for yc in [false, true] {
                    let y = match task {
                        Task::A => ya,
                        Task::B => yb,
                        Task::C => yc,
                    };
                    if y {
                        total += crf::local_joint_baseline(p, (ya, yb, yc));
                    }
                }
            }
        }
        total
    };
    let groups = embedded
        .iter()
        .map(|e| {
            let s = &e.dnn.scores;
            let mut thread_of = Vec::new();
            for (i, t) in e.input.threads.iter().enumerate() {
                thread_of.extend(std::iter::repeat_n(i, t.comments.len()));
            }
            let triple = |k: usize| (s.a[k], s.b[thread_of[k]], s.c[k]);
            let b = s.b.iter().map(|&p| marginal((0.5, p, 0.5), Task::B)).collect();
            GroupScores {
                group: e.dnn.group.clone(),
                scores: PerTask::new(
                    (0..s.a.len()).map(|k| marginal(triple(k), Task::A)).collect(),
                    b,
                    (0..s.c.len()).map(|k| marginal(triple(k), Task::C)).collect(),
                ),
            }
        })
        .collect();
    SystemScores {
        system: "Local_joint".into(),
        probabilistic: true,
        tasks: Task::ALL.to_vec(),
        groups,
    }
}

/// The uninformed orderings: `Random` for every task, `Chron` for A, `IR`
/// for B and `IR+Chron` for C.
pub fn baseline_scores(groups: &[QuestionGroup], seed: u64) -> (SystemScores, SystemScores) {
    let mut random = Vec::with_capacity(groups.len());
    let mut ordered = Vec::with_capacity(groups.len());
    for (k, g) in groups.iter().enumerate() {
        let b = baseline_orderings(g, seed.wrapping_add(k as u64));
        random.push(GroupScores {
            group: g.id.clone(),
            scores: PerTask::new(b.random_comments.clone(), b.random_threads, b.random_comments),
        });
        ordered.push(GroupScores {
            group: g.id.clone(),
            scores: PerTask::new(b.chronological, b.ir, b.ir_chron),
        });
    }
    (
        SystemScores {
            system: "Random".into(),
            probabilistic: false,
            tasks: Task::ALL.to_vec(),
            groups: random,
        },
        SystemScores {
            system: "Order".into(),
            probabilistic: false,
            tasks: Task::ALL.to_vec(),
            groups: ordered,
        },
    )
}

/// Trained artifacts of a full run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub nets: PerTask<(TaskNetwork, TrainTrace)>,
    pub crfs: Vec<(String, CrfParameters, CrfTrainTrace)>,
    pub systems: Vec<SystemScores>,
    pub report: ExperimentReport,
}

/// Trains on `train`, predicts on `test` and evaluates every system.
pub fn run(
    train: (&[QuestionGroup], &[GroupRows]),
    test: (&[QuestionGroup], &[GroupRows]),
    layout: RowLayout,
    cfg: &ExperimentConfig,
    exec: Exec,
) -> Result<RunArtifacts> {
    cfg.validate()?;
    let nets = train_networks(train.0, train.1, layout, cfg, exec)?;
    let net_refs = PerTask::new(&nets.a.0, &nets.b.0, &nets.c.0);
    let train_emb = embed_all(train.0, train.1, net_refs, exec)?;
    let test_emb = embed_all(test.0, test.1, net_refs, exec)?;

    let (random, ordered) = baseline_scores(test.0, cfg.baseline_seed);
    let mut systems = vec![random, ordered, dnn_scores(&test_emb)];
    let mut crfs = Vec::new();
    for name in &cfg.topologies {
        let topology = TopologyConfig::preset(name)?;
        let train_graphs = build_graphs(&train_emb, &topology, cfg.edge_features, exec)?;
        let (params, trace) = train_crf(&train_graphs, net_refs, cfg, exec)?;
        let test_graphs = build_graphs(&test_emb, &topology, cfg.edge_features, exec)?;
        systems.push(predict_crf(test.0, &test_graphs, &params, &cfg.predict_bp, name, exec)?);
        crfs.push((name.clone(), params, trace));
    }
    for variant in &cfg.pipeline {
        systems.push(pipeline_baseline(variant, train, test, layout, net_refs, cfg, exec)?);
    }
    systems.push(local_joint_scores(&test_emb));
    let report = ExperimentReport::from_systems(test.0, &systems)?;
    Ok(RunArtifacts {
        nets,
        crfs,
        systems,
        report,
    })
}

/// Generates a synthetic dataset, splits it with the generator's seed and
/// runs the pipeline on the inline rows.
pub fn run_synthetic(
    synth: &SynthConfig,
    cfg: &ExperimentConfig,
    test_fraction: f64,
    exec: Exec,
) -> Result<RunArtifacts> {
    let groups = synth_generate(synth)?;
    let (train, test) = split_groups(&groups, test_fraction, synth.seed)?;
    let tr = extract(&train, &[], &train, None, exec)?;
    let te = extract(&test, &[], &train, None, exec)?;
    run((&train, &tr.rows), (&test, &te.rows), tr.layout, cfg, exec)
}
