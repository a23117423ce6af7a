//! Pipeline stages. Each stage writes into `<output_dir>/<stage>/` and
//! finishes by writing a manifest; stages that read earlier outputs verify
//! the producing stage's manifest first.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use jointcqa::crf::{self, format_scores, CrfFile};
use jointcqa::data::{self, load_dataset, parse_json, synth_generate, LabelMap, QuestionGroup};
use jointcqa::experiment::{
    baseline_scores, build_graphs, embed_all, extract, graph_scores, local_joint_scores, pipeline_baseline,
    split_groups, task_csv, train_crf, train_networks, EmbeddedGroup, ExperimentConfig, ExperimentReport, Extracted,
    SystemScores,
};
use jointcqa::factorgraph::TopologyConfig;
use jointcqa::features::EmbeddingTable;
use jointcqa::nn::{NetworkFile, TaskNetwork, TrainTrace};
use jointcqa::par::Exec;
use jointcqa::task::{PerTask, Task};

use crate::config::{hash_bytes, hash_value, Loaded, Source};
use crate::manifest::{hash_file, manifest_path, FileHash, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Extract,
    TrainDnn,
    Embed,
    TrainCrf,
    Predict,
    PipelineBaseline,
    Evaluate,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Extract => "extract",
            Stage::TrainDnn => "train-dnn",
            Stage::Embed => "embed",
            Stage::TrainCrf => "train-crf",
            Stage::Predict => "predict",
            Stage::PipelineBaseline => "pipeline-baseline",
            Stage::Evaluate => "evaluate",
        }
    }
}

/// File-name form of a system or preset name.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub struct Ctx {
    pub loaded: Loaded,
    pub out: PathBuf,
    pub exec: Exec,
    pub quiet: bool,
    experiment: ExperimentConfig,
}

impl Ctx {
    pub fn new(loaded: Loaded, exec: Exec, quiet: bool) -> Self {
        let out = loaded.output_dir();
        let experiment = loaded.experiment();
        Self {
            loaded,
            out,
            exec,
            quiet,
            experiment,
        }
    }

    fn log(&self, stage: Stage, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("[{}] {}", stage.name(), msg.as_ref());
        }
    }

    /// Stages whose outputs `stage` reads.
    fn reads(&self, stage: Stage) -> Vec<Stage> {
        match stage {
            Stage::Synth | Stage::Extract => vec![],
            Stage::TrainDnn => vec![Stage::Extract],
            Stage::Embed => vec![Stage::Extract, Stage::TrainDnn],
            Stage::TrainCrf => vec![Stage::TrainDnn, Stage::Embed],
            Stage::Predict => vec![Stage::Embed, Stage::TrainCrf],
            Stage::PipelineBaseline => vec![Stage::Extract, Stage::TrainDnn],
            Stage::Evaluate => {
                let mut v = vec![Stage::Extract, Stage::Embed, Stage::Predict];
                if !self.experiment.pipeline.is_empty() {
                    v.push(Stage::PipelineBaseline);
                }
                v
            }
        }
    }

    /// The configuration settings `stage` itself depends on.
    fn fragment(&self, stage: Stage) -> serde_json::Value {
        let c = &self.loaded.config;
        let e = &self.experiment;
        match stage {
            Stage::Synth => json!({ "synth": self.loaded.synth() }),
            Stage::Extract => json!({
                "seed": c.seed,
                "test_fraction": c.test_fraction,
                "source": c.mode.source,
                "dataset": c.paths.dataset,
                "test_dataset": c.paths.test_dataset,
                "dataset_format": c.paths.dataset_format,
                "embeddings": c.paths.embeddings,
                "labels": c.labels,
                "synth": (c.mode.source == Source::Synth).then(|| self.loaded.synth()),
            }),
            Stage::TrainDnn => json!({ "dnn": e.dnn, "interaction": e.interaction, "task_layer": e.task_layer }),
            Stage::Embed => json!({}),
            Stage::TrainCrf => json!({ "crf": e.crf, "topologies": e.topologies, "edge_features": e.edge_features }),
            Stage::Predict => json!({ "predict_bp": e.predict_bp }),
            Stage::PipelineBaseline => json!({ "pipeline": e.pipeline }),
            Stage::Evaluate => json!({
                "baseline_seed": e.baseline_seed,
                "verbose": c.mode.verbose,
                "topologies": e.topologies,
                "pipeline": e.pipeline,
            }),
        }
    }

    /// Hash of everything in the configuration that `stage` and the stages
    /// it reads from depend on.
    pub fn config_hash(&self, stage: Stage) -> Result<String> {
        let upstream = self
            .reads(stage)
            .into_iter()
            .map(|s| self.config_hash(s))
            .collect::<Result<Vec<_>>>()?;
        hash_value(&json!({ "stage": stage.name(), "config": self.fragment(stage), "upstream": upstream }))
    }

    fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.name())
    }

    /// The manifest of `stage`, checked against the current configuration
    /// and the files on disk.
    pub fn verified(&self, stage: Stage) -> Result<Manifest> {
        let m = Manifest::read(&self.out, stage.name())?.with_context(|| {
            format!(
                "no outputs of stage {} in {}; run `jointcqa {}` first",
                stage.name(),
                self.out.display(),
                stage.name()
            )
        })?;
        m.verify(&self.config_hash(stage)?, &self.out, |p| {
            self.loaded.resolve(Path::new(p))
        })?;
        Ok(m)
    }

    fn read_text(&self, stage: Stage, name: &str) -> Result<String> {
        let path = self.stage_dir(stage).join(name);
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))
    }

    fn read_json<T: DeserializeOwned>(&self, stage: Stage, name: &str) -> Result<T> {
        let text = self.read_text(stage, name)?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}/{name}", stage.name()))
    }

    fn read_groups(&self, name: &str) -> Result<Vec<QuestionGroup>> {
        let text = self.read_text(Stage::Extract, name)?;
        Ok(parse_json(&text, &LabelMap::default(), &format!("extract/{name}"))?)
    }

    fn read_nets(&self) -> Result<PerTask<TaskNetwork>> {
        let load = |t: Task| -> Result<TaskNetwork> {
            let text = self.read_text(Stage::TrainDnn, &format!("{}.json", t.lower()))?;
            Ok(NetworkFile::from_json(&text)
                .with_context(|| format!("train-dnn/{}.json", t.lower()))?
                .network)
        };
        Ok(PerTask::new(load(Task::A)?, load(Task::B)?, load(Task::C)?))
    }
}

/// Collects a stage's outputs and their hashes. Creating one verifies the
/// upstream stages, then clears the stage directory.
struct Writer<'a> {
    ctx: &'a Ctx,
    stage: Stage,
    dir: PathBuf,
    manifest: Manifest,
}

impl<'a> Writer<'a> {
    fn new(ctx: &'a Ctx, stage: Stage) -> Result<Self> {
        let mut manifest = Manifest::new(stage.name(), ctx.config_hash(stage)?, ctx.loaded.config.seed);
        for s in ctx.reads(stage) {
            ctx.verified(s)?;
            manifest.upstream.push(FileHash {
                path: format!("{}/manifest.json", s.name()),
                sha256: hash_file(&manifest_path(&ctx.out, s.name()))?,
            });
        }
        let dir = ctx.stage_dir(stage);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
        }
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            ctx,
            stage,
            dir,
            manifest,
        })
    }

    /// Records an external input given as written in the configuration.
    fn input(&mut self, path: &Path) -> Result<PathBuf> {
        let resolved = self.ctx.loaded.resolve(path);
        let sha256 = hash_file(&resolved)?;
        self.manifest.inputs.push(FileHash {
            path: path.display().to_string(),
            sha256,
        });
        Ok(resolved)
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.push(FileHash {
            path: format!("{}/{name}", self.stage.name()),
            sha256: hash_bytes(text.as_bytes()),
        });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.text(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    fn finish(self) -> Result<()> {
        let n = self.manifest.outputs.len();
        self.manifest.write(&self.ctx.out)?;
        self.ctx
            .log(self.stage, format!("wrote {n} files to {}", self.dir.display()));
        Ok(())
    }
}

fn load_groups(ctx: &Ctx, w: &mut Writer<'_>, path: &Path) -> Result<Vec<QuestionGroup>> {
    let c = &ctx.loaded.config;
    let resolved = w.input(path)?;
    Ok(load_dataset(&resolved, c.paths.dataset_format, &c.labels)?)
}

pub fn synth(ctx: &Ctx) -> Result<()> {
    let mut w = Writer::new(ctx, Stage::Synth)?;
    let groups = synth_generate(&ctx.loaded.synth())?;
    w.text("dataset.json", &data::to_json(&groups)?)?;
    w.finish()
}

pub fn extract_stage(ctx: &Ctx) -> Result<()> {
    let c = &ctx.loaded.config;
    let mut w = Writer::new(ctx, Stage::Extract)?;
    let all = match c.mode.source {
        Source::Synth => synth_generate(&ctx.loaded.synth())?,
        Source::File => {
            let path = c.paths.dataset.as_ref().context("paths.dataset is not set")?;
            load_groups(ctx, &mut w, path)?
        }
    };
    let (train, test) = match &c.paths.test_dataset {
        Some(p) => (all, load_groups(ctx, &mut w, p)?),
        None => split_groups(&all, c.test_fraction, c.seed)?,
    };
    let mut tables = Vec::with_capacity(c.paths.embeddings.len());
    for t in &c.paths.embeddings {
        let resolved = w
            .input(&t.path)
            .with_context(|| format!("embedding table `{}`", t.name))?;
        tables.push(EmbeddingTable::load(t.name.clone(), &resolved)?);
    }
    let tr = extract(&train, &tables, &train, None, ctx.exec)?;
    let te = extract(&test, &tables, &train, tr.scaler.as_ref(), ctx.exec)?;
    w.text("train.dataset.json", &data::to_json(&train)?)?;
    w.text("test.dataset.json", &data::to_json(&test)?)?;
    w.json("train.rows.json", &tr)?;
    w.json("test.rows.json", &te)?;
    if let Some(s) = &tr.scaler {
        w.json("scaler.json", s)?;
    }
    for t in Task::ALL {
        w.text(&format!("train.{}.csv", t.lower()), &task_csv(&train, &tr, &tables, t))?;
        w.text(&format!("test.{}.csv", t.lower()), &task_csv(&test, &te, &tables, t))?;
    }
    ctx.log(
        Stage::Extract,
        format!("{} train and {} test groups", train.len(), test.len()),
    );
    w.finish()
}

pub fn train_dnn(ctx: &Ctx) -> Result<()> {
    let mut w = Writer::new(ctx, Stage::TrainDnn)?;
    let groups = ctx.read_groups("train.dataset.json")?;
    let rows: Extracted = ctx.read_json(Stage::Extract, "train.rows.json")?;
    let nets = train_networks(&groups, &rows.rows, rows.layout, &ctx.experiment, ctx.exec)?;
    for t in Task::ALL {
        let (net, trace): &(TaskNetwork, TrainTrace) = nets.get(t);
        let file = NetworkFile::new(net.clone(), Some(*ctx.experiment.dnn.get(t)));
        w.text(&format!("{}.json", t.lower()), &file.to_json()?)?;
        w.json(&format!("{}.trace.json", t.lower()), trace)?;
        if let Some(last) = trace.epochs.last() {
            ctx.log(
                Stage::TrainDnn,
                format!(
                    "DNN_{t}: {} epochs, final train loss {:.4}",
                    trace.epochs.len(),
                    last.train_loss
                ),
            );
        }
    }
    w.finish()
}

pub fn embed(ctx: &Ctx) -> Result<()> {
    let mut w = Writer::new(ctx, Stage::Embed)?;
    let nets = ctx.read_nets()?;
    for split in ["train", "test"] {
        let groups = ctx.read_groups(&format!("{split}.dataset.json"))?;
        let rows: Extracted = ctx.read_json(Stage::Extract, &format!("{split}.rows.json"))?;
        let embedded = embed_all(&groups, &rows.rows, nets.as_ref(), ctx.exec)?;
        w.json(&format!("{split}.json"), &embedded)?;
    }
    w.finish()
}

fn topologies(ctx: &Ctx) -> Result<Vec<(String, TopologyConfig)>> {
    ctx.experiment
        .topologies
        .iter()
        .map(|n| Ok((n.clone(), TopologyConfig::preset(n)?)))
        .collect()
}

pub fn train_crf_stage(ctx: &Ctx) -> Result<()> {
    let mut w = Writer::new(ctx, Stage::TrainCrf)?;
    let nets = ctx.read_nets()?;
    let embedded: Vec<EmbeddedGroup> = ctx.read_json(Stage::Embed, "train.json")?;
    for (name, topology) in topologies(ctx)? {
        let graphs = build_graphs(&embedded, &topology, ctx.experiment.edge_features, ctx.exec)?;
        let (params, trace) =
            train_crf(&graphs, nets.as_ref(), &ctx.experiment, ctx.exec).with_context(|| format!("training {name}"))?;
        w.text(
            &format!("{}.json", slug(&name)),
            &CrfFile::new(name.clone(), params).to_json()?,
        )?;
        w.json(&format!("{}.trace.json", slug(&name)), &trace)?;
        ctx.log(Stage::TrainCrf, format!("{name}: {} epochs", trace.epoch_losses.len()));
    }
    w.finish()
}

pub fn predict(ctx: &Ctx) -> Result<()> {
    let mut w = Writer::new(ctx, Stage::Predict)?;
    let embedded: Vec<EmbeddedGroup> = ctx.read_json(Stage::Embed, "test.json")?;
    let groups: Vec<QuestionGroup> = ctx.read_groups_for_embedded(&embedded)?;
    for (name, topology) in topologies(ctx)? {
        let file = CrfFile::from_json(&ctx.read_text(Stage::TrainCrf, &format!("{}.json", slug(&name)))?)?;
        if file.topology != name {
            bail!(
                "train-crf/{}.json holds {} instead of {name}",
                slug(&name),
                file.topology
            );
        }
        let graphs = build_graphs(&embedded, &topology, ctx.experiment.edge_features, ctx.exec)?;
        let marginals = ctx
            .exec
            .map(&graphs, |g| crf::predict(g, &file.params, &ctx.experiment.predict_bp))
            .into_iter()
            .collect::<jointcqa::Result<Vec<_>>>()?;
        let mut tsv = String::new();
        let mut scored = Vec::with_capacity(graphs.len());
        for ((g, graph), m) in groups.iter().zip(&graphs).zip(&marginals) {
            tsv.push_str(&format_scores(graph, m));
            scored.push(graph_scores(g, graph, m)?);
        }
        let system = SystemScores {
            system: name.clone(),
            probabilistic: true,
            tasks: Task::ALL.to_vec(),
            groups: scored,
        };
        w.json(&format!("{}.scores.json", slug(&name)), &system)?;
        w.text(&format!("{}.tsv", slug(&name)), &tsv)?;
    }
    w.finish()
}

impl Ctx {
    /// Test groups, checked to match the embedded groups one to one.
    fn read_groups_for_embedded(&self, embedded: &[EmbeddedGroup]) -> Result<Vec<QuestionGroup>> {
        let groups = self.read_groups("test.dataset.json")?;
        if groups.len() != embedded.len() || groups.iter().zip(embedded).any(|(g, e)| g.id != e.dnn.group) {
            bail!("embed/test.json does not match extract/test.dataset.json");
        }
        Ok(groups)
    }
}

pub fn pipeline(ctx: &Ctx) -> Result<()> {
    let mut w = Writer::new(ctx, Stage::PipelineBaseline)?;
    if ctx.experiment.pipeline.is_empty() {
        ctx.log(Stage::PipelineBaseline, "no variants configured in experiment.pipeline");
    }
    let nets = ctx.read_nets()?;
    let train = ctx.read_groups("train.dataset.json")?;
    let test = ctx.read_groups("test.dataset.json")?;
    let tr: Extracted = ctx.read_json(Stage::Extract, "train.rows.json")?;
    let te: Extracted = ctx.read_json(Stage::Extract, "test.rows.json")?;
    let mut systems = Vec::new();
    for variant in &ctx.experiment.pipeline {
        let s = pipeline_baseline(
            variant,
            (&train, &tr.rows),
            (&test, &te.rows),
            tr.layout,
            nets.as_ref(),
            &ctx.experiment,
            ctx.exec,
        )?;
        w.json(&format!("{}.scores.json", slug(&s.system)), &s)?;
        systems.push(s);
    }
    let report = ExperimentReport::from_systems(&test, &systems)?;
    w.text("report.txt", &report.to_text())?;
    w.finish()
}

/// Every system's test scores, in report order.
pub fn collect_systems(ctx: &Ctx) -> Result<(Vec<QuestionGroup>, Vec<SystemScores>)> {
    let embedded: Vec<EmbeddedGroup> = ctx.read_json(Stage::Embed, "test.json")?;
    let groups = ctx.read_groups_for_embedded(&embedded)?;
    let (random, ordered) = baseline_scores(&groups, ctx.experiment.baseline_seed);
    let mut systems = vec![random, ordered, jointcqa::experiment::dnn_scores(&embedded)];
    for name in &ctx.experiment.topologies {
        systems.push(ctx.read_json(Stage::Predict, &format!("{}.scores.json", slug(name)))?);
    }
    for variant in &ctx.experiment.pipeline {
        systems.push(ctx.read_json(
            Stage::PipelineBaseline,
            &format!("{}.scores.json", slug(&variant.to_string())),
        )?);
    }
    systems.push(local_joint_scores(&embedded));
    Ok((groups, systems))
}

pub fn evaluate(ctx: &Ctx) -> Result<String> {
    let mut w = Writer::new(ctx, Stage::Evaluate)?;
    let (groups, systems) = collect_systems(ctx)?;
    let report = ExperimentReport::from_systems(&groups, &systems)?;
    let text = report.to_text();
    w.text("report.txt", &text)?;
    w.text("metrics.txt", &report.to_key_values(ctx.loaded.config.mode.verbose))?;
    w.json("report.json", &report)?;
    w.finish()?;
    Ok(text)
}

/// Runs `stage`, labelling any error with the stage name.
pub fn run_stage(ctx: &Ctx, stage: Stage) -> Result<Option<String>> {
    let r = match stage {
        Stage::Synth => synth(ctx).map(|_| None),
        Stage::Extract => extract_stage(ctx).map(|_| None),
        Stage::TrainDnn => train_dnn(ctx).map(|_| None),
        Stage::Embed => embed(ctx).map(|_| None),
        Stage::TrainCrf => train_crf_stage(ctx).map(|_| None),
        Stage::Predict => predict(ctx).map(|_| None),
        Stage::PipelineBaseline => pipeline(ctx).map(|_| None),
        Stage::Evaluate => evaluate(ctx).map(Some),
    };
    r.with_context(|| format!("stage {}", stage.name()))
}

/// Stages run by `train`, in order.
pub fn full_run(ctx: &Ctx) -> Vec<Stage> {
    let mut v = vec![
        Stage::Extract,
        Stage::TrainDnn,
        Stage::Embed,
        Stage::TrainCrf,
        Stage::Predict,
    ];
    if !ctx.experiment.pipeline.is_empty() {
        v.push(Stage::PipelineBaseline);
    }
    v.push(Stage::Evaluate);
    v
}
