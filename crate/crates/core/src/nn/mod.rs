//! Feed-forward task networks.
//!
//! Each subtask has its own network. Interaction layers (`h1`) read input
//! embedding blocks, the task layer (`h2`) combines those activations with
//! pairwise similarity vectors, and the output unit reads
//! `x = [h2, pairwise...]`, which doubles as the task embedding handed to
//! the CRF.

mod io;
mod optim;
mod train;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{bce_with_logit, dot, sigmoid};
use crate::task::Task;

pub use io::{load_network, save_network, NetworkFile, NETWORK_FORMAT_VERSION};
pub use optim::Rmsprop;
pub use train::{train_dnn, EpochRecord, LabeledRow, TrainConfig, TrainTrace};

/// Named input embedding block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputSlot {
    /// New question.
    Q,
    /// Related (thread) question.
    Qi,
    /// Comment.
    C,
}

impl InputSlot {
    pub fn name(self) -> &'static str {
        match self {
            InputSlot::Q => "z_q",
            InputSlot::Qi => "z_qi",
            InputSlot::C => "z_c",
        }
    }
}

/// Named pairwise feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairSlot {
    /// (q_i, c)
    PhiA,
    /// (q, q_i)
    PhiB,
    /// (q, c)
    PhiC,
    /// Upstream predictions appended by the pipeline baseline.
    Upstream,
}

impl PairSlot {
    pub fn name(self) -> &'static str {
        match self {
            PairSlot::PhiA => "phi_a",
            PairSlot::PhiB => "phi_b",
            PairSlot::PhiC => "phi_c",
            PairSlot::Upstream => "upstream",
        }
    }
}

/// All vectors describing one (q, q_i, c) triple; each network reads the
/// slots its spec names and ignores the rest. Thread-level rows for subtask
/// B leave the comment slots empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub z_q: Vec<f64>,
    pub z_qi: Vec<f64>,
    pub z_c: Vec<f64>,
    pub phi_a: Vec<f64>,
    pub phi_b: Vec<f64>,
    pub phi_c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub upstream: Vec<f64>,
}

impl FeatureRow {
    pub fn input(&self, slot: InputSlot) -> &[f64] {
        match slot {
            InputSlot::Q => &self.z_q,
            InputSlot::Qi => &self.z_qi,
            InputSlot::C => &self.z_c,
        }
    }

    pub fn pairwise(&self, slot: PairSlot) -> &[f64] {
        match slot {
            PairSlot::PhiA => &self.phi_a,
            PairSlot::PhiB => &self.phi_b,
            PairSlot::PhiC => &self.phi_c,
            PairSlot::Upstream => &self.upstream,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub q: usize,
    pub qi: usize,
    pub c: usize,
}

impl InputDims {
    pub fn get(&self, slot: InputSlot) -> usize {
        match slot {
            InputSlot::Q => self.q,
            InputSlot::Qi => self.qi,
            InputSlot::C => self.c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionBlock {
    pub name: String,
    pub inputs: Vec<InputSlot>,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseSlot {
    pub slot: PairSlot,
    pub width: usize,
}

/// Default interaction-layer widths for A/B/C.
pub const DEFAULT_INTERACTION: [usize; 3] = [10, 5, 15];
/// Default task-layer widths for A/B/C.
pub const DEFAULT_TASK_LAYER: [usize; 3] = [125, 75, 50];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskNetworkSpec {
    pub task: Task,
    pub input_dims: InputDims,
    pub blocks: Vec<InteractionBlock>,
    pub pairwise: Vec<PairwiseSlot>,
    pub task_layer_dim: usize,
}

fn block_for(task: Task, width: usize) -> InteractionBlock {
    let inputs = match task {
        Task::A => vec![InputSlot::Qi, InputSlot::C],
        Task::B => vec![InputSlot::Q, InputSlot::Qi],
        Task::C => vec![InputSlot::Q, InputSlot::C],
    };
    InteractionBlock {
        name: format!("h1_{}", task.lower()),
        inputs,
        width,
    }
}

impl TaskNetworkSpec {
    /// Spec with the default layer widths. `phi_width` is the common width of
    /// the three pairwise vectors.
    pub fn new(task: Task, input_dims: InputDims, phi_width: usize) -> Self {
        Self::with_widths(
            task,
            input_dims,
            phi_width,
            DEFAULT_INTERACTION,
            DEFAULT_TASK_LAYER[task.index()],
        )
    }

    /// `interaction[k]` is the width of the `h1` block owned by task `k`; the
    /// C network carries all three.
    pub fn with_widths(
        task: Task,
        input_dims: InputDims,
        phi_width: usize,
        interaction: [usize; 3],
        task_layer_dim: usize,
    ) -> Self {
        let (blocks, pairwise) = match task {
            Task::A => (vec![block_for(Task::A, interaction[0])], vec![PairSlot::PhiA]),
            Task::B => (vec![block_for(Task::B, interaction[1])], vec![PairSlot::PhiB]),
            Task::C => (
                Task::ALL
                    .iter()
                    .map(|&t| block_for(t, interaction[t.index()]))
                    .collect(),
                vec![PairSlot::PhiA, PairSlot::PhiB, PairSlot::PhiC],
            ),
        };
        Self {
            task,
            input_dims,
            blocks,
            pairwise: pairwise
                .into_iter()
                .map(|slot| PairwiseSlot { slot, width: phi_width })
                .collect(),
            task_layer_dim,
        }
    }

    /// Appends an upstream-prediction slot of the given width.
    pub fn with_upstream(mut self, width: usize) -> Self {
        self.pairwise.retain(|p| p.slot != PairSlot::Upstream);
        if width > 0 {
            self.pairwise.push(PairwiseSlot {
                slot: PairSlot::Upstream,
                width,
            });
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (blocks, phis) = match self.task {
            Task::A | Task::B => (1, 1),
            Task::C => (3, 3),
        };
        if self.blocks.len() != blocks {
            return Err(Error::Config(format!(
                "task {} needs {blocks} interaction blocks, spec has {}",
                self.task,
                self.blocks.len()
            )));
        }
        let n_phi = self.pairwise.iter().filter(|p| p.slot != PairSlot::Upstream).count();
        if n_phi != phis {
            return Err(Error::Config(format!(
                "task {} needs {phis} pairwise slots, spec has {n_phi}",
                self.task
            )));
        }
        if self.task_layer_dim == 0 || self.blocks.iter().any(|b| b.width == 0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn block_input_width(&self, block: &InteractionBlock) -> usize {
        block.inputs.iter().map(|&s| self.input_dims.get(s)).sum()
    }

    pub fn interaction_width(&self) -> usize {
        self.blocks.iter().map(|b| b.width).sum()
    }

    pub fn pairwise_width(&self) -> usize {
        self.pairwise.iter().map(|p| p.width).sum()
    }

    /// Length of the task embedding `[h2, pairwise...]`.
    pub fn embedding_width(&self) -> usize {
        self.task_layer_dim + self.pairwise_width()
    }

    fn check_row(&self, row: &FeatureRow) -> Result<()> {
        for slot in [InputSlot::Q, InputSlot::Qi, InputSlot::C] {
            if self.blocks.iter().any(|b| b.inputs.contains(&slot)) {
                let got = row.input(slot).len();
                let want = self.input_dims.get(slot);
                if got != want {
                    return Err(Error::shape(slot.name(), want, got));
                }
            }
        }
        for p in &self.pairwise {
            let got = row.pairwise(p.slot).len();
            if got != p.width {
                return Err(Error::shape(p.slot.name(), p.width, got));
            }
        }
        Ok(())
    }
}

/// Dense affine layer, row-major `rows x cols` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let weights = (0..rows * cols).map(|_| rng.gen_range(-limit..=limit)).collect();
        Self {
            rows,
            cols,
            weights,
            bias: vec![0.0; rows],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.cols..(r + 1) * self.cols]
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|r| dot(self.row(r), x) + self.bias[r]).collect()
    }

    fn weight_sq_norm(&self) -> f64 {
        dot(&self.weights, &self.weights)
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Trainable parameters in a fixed order: interaction blocks, task layer,
/// output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub layers: Vec<Dense>,
}

impl Params {
    pub fn zeros_like(other: &Params) -> Self {
        Self {
            layers: other.layers.iter().map(|l| Dense::zeros(l.rows, l.cols)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened copy, layer by layer, weights before bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.len(), "flat parameter length");
        let mut at = 0;
        for l in &mut self.layers {
            let n = l.weights.len();
            l.weights.copy_from_slice(&flat[at..at + n]);
            at += n;
            let n = l.bias.len();
            l.bias.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
    }

    fn for_each_pair(&mut self, other: &Params, mut f: impl FnMut(&mut [f64], &[f64], bool)) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            f(&mut a.weights, &b.weights, true);
            f(&mut a.bias, &b.bias, false);
        }
    }

    fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w *= k);
            l.bias.iter_mut().for_each(|w| *w *= k);
        }
    }

    /// Squared L2 norm of the weights, biases excluded.
    pub fn weight_sq_norm(&self) -> f64 {
        self.layers.iter().map(Dense::weight_sq_norm).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskNetwork {
    pub spec: TaskNetworkSpec,
    pub params: Params,
    pub seed: u64,
}

/// Forward or inference mode.
pub enum Mode<'a> {
    Infer,
    /// Inverted dropout on `h1` and `h2` with the given drop rate.
    Train {
        dropout: f64,
        rng: &'a mut ChaCha8Rng,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub probability: f64,
    pub logit: f64,
    pub h2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEmbedding {
    pub task: Task,
    pub vector: Vec<f64>,
}

struct Trace {
    block_inputs: Vec<Vec<f64>>,
    /// Derivative factor for each `h1` unit: relu' times dropout scale.
    h1_gate: Vec<Vec<f64>>,
    task_input: Vec<f64>,
    h2_gate: Vec<f64>,
    embedding: Vec<f64>,
    logit: f64,
}

fn activate(pre: Vec<f64>, mode: &mut Mode<'_>) -> (Vec<f64>, Vec<f64>) {
    let mut gate = Vec::with_capacity(pre.len());
    let mut out = Vec::with_capacity(pre.len());
    for z in pre {
        let mut scale = 1.0;
        if let Mode::Train { dropout, rng } = mode {
            if *dropout > 0.0 {
                scale = if rng.gen::<f64>() < *dropout {
                    0.0
                } else {
                    1.0 / (1.0 - *dropout)
                };
            }
        }
        if z > 0.0 {
            out.push(z * scale);
            gate.push(scale);
        } else {
            out.push(0.0);
            gate.push(0.0);
        }
    }
    (out, gate)
}

impl TaskNetwork {
    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: TaskNetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = crate::rng(seed);
        let mut layers: Vec<Dense> = spec
            .blocks
            .iter()
            .map(|b| Dense::glorot(b.width, spec.block_input_width(b), &mut rng))
            .collect();
        let task_in = spec.interaction_width() + spec.pairwise_width();
        layers.push(Dense::glorot(spec.task_layer_dim, task_in, &mut rng));
        layers.push(Dense::glorot(1, spec.embedding_width(), &mut rng));
        Ok(Self {
            spec,
            params: Params { layers },
            seed,
        })
    }

    /// Same shapes as [`TaskNetwork::init`] with every parameter zero.
    pub fn zeros(spec: TaskNetworkSpec) -> Result<Self> {
        let net = Self::init(spec, 0)?;
        Ok(Self {
            params: Params::zeros_like(&net.params),
            ..net
        })
    }

    pub fn task(&self) -> Task {
        self.spec.task
    }

    pub fn interaction_layer(&self, k: usize) -> &Dense {
        &self.params.layers[k]
    }

    pub fn interaction_layer_mut(&mut self, k: usize) -> &mut Dense {
        &mut self.params.layers[k]
    }

    pub fn task_layer(&self) -> &Dense {
        &self.params.layers[self.spec.blocks.len()]
    }

    pub fn task_layer_mut(&mut self) -> &mut Dense {
        let k = self.spec.blocks.len();
        &mut self.params.layers[k]
    }

    pub fn output_layer(&self) -> &Dense {
        self.params.layers.last().expect("output layer")
    }

    pub fn output_layer_mut(&mut self) -> &mut Dense {
        self.params.layers.last_mut().expect("output layer")
    }

    /// Output weights over the embedding followed by the output bias.
    pub fn output_weights_with_bias(&self) -> Vec<f64> {
        let out = self.output_layer();
        let mut w = out.weights.clone();
        w.push(out.bias[0]);
        w
    }

    fn trace(&self, row: &FeatureRow, mut mode: Mode<'_>) -> Result<Trace> {
        self.spec.check_row(row)?;
        let mut block_inputs = Vec::with_capacity(self.spec.blocks.len());
        let mut h1_gate = Vec::with_capacity(self.spec.blocks.len());
        let mut task_input = Vec::with_capacity(self.task_layer().cols);
        for (k, block) in self.spec.blocks.iter().enumerate() {
            let input: Vec<f64> = block
                .inputs
                .iter()
                .flat_map(|&s| row.input(s).iter().copied())
                .collect();
            let (h, gate) = activate(self.params.layers[k].apply(&input), &mut mode);
            task_input.extend_from_slice(&h);
            block_inputs.push(input);
            h1_gate.push(gate);
        }
        let mut pairwise = Vec::with_capacity(self.spec.pairwise_width());
        for p in &self.spec.pairwise {
            pairwise.extend_from_slice(row.pairwise(p.slot));
        }
        task_input.extend_from_slice(&pairwise);
        let (h2, h2_gate) = activate(self.task_layer().apply(&task_input), &mut mode);
        let mut embedding = h2;
        embedding.extend_from_slice(&pairwise);
        let out = self.output_layer();
        let logit = dot(&out.weights, &embedding) + out.bias[0];
        Ok(Trace {
            block_inputs,
            h1_gate,
            task_input,
            h2_gate,
            embedding,
            logit,
        })
    }

    pub fn forward(&self, row: &FeatureRow, mode: Mode<'_>) -> Result<ForwardOutput> {
        let t = self.trace(row, mode)?;
        let d = self.spec.task_layer_dim;
        Ok(ForwardOutput {
            probability: sigmoid(t.logit),
            logit: t.logit,
            h2: t.embedding[..d].to_vec(),
        })
    }

    pub fn predict_proba(&self, row: &FeatureRow) -> Result<f64> {
        Ok(self.forward(row, Mode::Infer)?.probability)
    }

    /// `[h2, pairwise...]` in inference mode.
    pub fn extract_task_embedding(&self, row: &FeatureRow) -> Result<TaskEmbedding> {
        let t = self.trace(row, Mode::Infer)?;
        Ok(TaskEmbedding {
            task: self.spec.task,
            vector: t.embedding,
        })
    }

    fn backward(&self, t: &Trace, dlogit: f64, grad: &mut Params) {
        let nb = self.spec.blocks.len();
        let d = self.spec.task_layer_dim;
        let out = self.output_layer();
        {
            let g = &mut grad.layers[nb + 1];
            for (gw, x) in g.weights.iter_mut().zip(&t.embedding) {
                *gw += dlogit * x;
            }
            g.bias[0] += dlogit;
        }
        let dh2: Vec<f64> = (0..d).map(|j| dlogit * out.weights[j] * t.h2_gate[j]).collect();
        let task = self.task_layer();
        let mut dtask_in = vec![0.0; task.cols];
        {
            let g = &mut grad.layers[nb];
            for (r, &dr) in dh2.iter().enumerate() {
                if dr == 0.0 {
                    continue;
                }
                let grow = &mut g.weights[r * task.cols..(r + 1) * task.cols];
                for (gw, x) in grow.iter_mut().zip(&t.task_input) {
                    *gw += dr * x;
                }
                g.bias[r] += dr;
                for (di, w) in dtask_in.iter_mut().zip(task.row(r)) {
                    *di += dr * w;
                }
            }
        }
        let mut offset = 0;
        for k in 0..nb {
            let layer = &self.params.layers[k];
            let g = &mut grad.layers[k];
            for r in 0..layer.rows {
                let dr = dtask_in[offset + r] * t.h1_gate[k][r];
                if dr == 0.0 {
                    continue;
                }
                let grow = &mut g.weights[r * layer.cols..(r + 1) * layer.cols];
                for (gw, x) in grow.iter_mut().zip(&t.block_inputs[k]) {
                    *gw += dr * x;
                }
                g.bias[r] += dr;
            }
            offset += layer.rows;
        }
    }

    /// Mean cross-entropy over `batch` plus `l2 * ||W||^2` (biases excluded),
    /// with its gradient. Inference mode (no dropout).
    pub fn loss_and_gradient(&self, batch: &[(&FeatureRow, f64)], l2: f64) -> Result<(f64, Params)> {
        self.loss_and_gradient_mode(batch, l2, None)
    }

    pub(crate) fn loss_and_gradient_mode(
        &self,
        batch: &[(&FeatureRow, f64)],
        l2: f64,
        mut dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Result<(f64, Params)> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut grad = Params::zeros_like(&self.params);
        let mut loss = 0.0;
        for (row, y) in batch {
            let mode = match dropout.as_mut() {
                Some((p, rng)) => Mode::Train {
                    dropout: *p,
                    rng: &mut **rng,
                },
                None => Mode::Infer,
            };
            let t = self.trace(row, mode)?;
            loss += bce_with_logit(t.logit, *y);
            self.backward(&t, sigmoid(t.logit) - y, &mut grad);
        }
        let n = batch.len() as f64;
        grad.scale(1.0 / n);
        loss /= n;
        if l2 > 0.0 {
            loss += l2 * self.params.weight_sq_norm();
            grad.for_each_pair(&self.params, |g, w, is_weight| {
                if is_weight {
                    for (gi, wi) in g.iter_mut().zip(w) {
                        *gi += 2.0 * l2 * wi;
                    }
                }
            });
        }
        Ok((loss, grad))
    }

    pub fn is_finite(&self) -> bool {
        self.params.to_flat().iter().all(|v| v.is_finite())
    }
}
