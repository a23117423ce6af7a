use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Comment, QuestionGroup, Thread};
use crate::error::{Error, Result};
use crate::nn::{FeatureRow, InputDims};

/// Widths of every synthetic vector slot.
pub const SYNTH_DIMS: InputDims = InputDims { q: 2, qi: 2, c: 2 };
/// Width of each synthetic pairwise vector.
pub const SYNTH_PHI_WIDTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub groups: usize,
    pub threads_per_group: usize,
    pub comments_per_thread: usize,
    pub p_a: f64,
    pub p_b: f64,
    /// Probability of flipping `y_c` after the conjunction.
    pub noise: f64,
    pub embedding_noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            groups: 500,
            threads_per_group: 3,
            comments_per_thread: 4,
            p_a: 0.5,
            p_b: 0.5,
            noise: 0.1,
            embedding_noise_sigma: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_a", self.p_a), ("p_b", self.p_b), ("noise", self.noise)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.embedding_noise_sigma >= 0.0 && self.embedding_noise_sigma.is_finite()) {
            return Err(Error::Config(
                "embedding_noise_sigma must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

fn pure_noise(width: usize, noise: &Normal<f64>, rng: &mut impl Rng) -> Vec<f64> {
    (0..width).map(|_| noise.sample(rng)).collect()
}

fn indicator(y: bool, noise: &Normal<f64>, rng: &mut impl Rng) -> Vec<f64> {
    let base = if y { [1.0, 0.0] } else { [0.0, 1.0] };
    base.iter().map(|b| b + noise.sample(rng)).collect()
}

/// Groups whose labels follow `y_c = (y_a AND y_b) XOR flip` and whose
/// feature rows are noisy label indicators, `[y, 1 - y]` plus independent
/// Gaussian noise.
///
/// Each task's rows indicate only that task's label, so a single network
/// sees partial evidence and the other subtasks' evidence reaches C only
/// through cross-task edges:
/// - thread rows (B): `z_qi` and `phi_b` indicate `y_b`;
/// - comment rows (A): `z_c` and `phi_a` indicate `y_a`;
/// - `features_c` rows (C): `z_c` and `phi_c` indicate `y_c`.
///
/// Every other slot, and `z_q` everywhere, is pure noise. The A row copies
/// its thread's `z_q`, `z_qi` and `phi_b`.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Vec<QuestionGroup>> {
    cfg.validate()?;
    let mut rng = crate::rng(cfg.seed);
    let noise = Normal::new(0.0, cfg.embedding_noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut groups = Vec::with_capacity(cfg.groups);
    for g in 0..cfg.groups {
        let gid = format!("S{}", g + 1);
        let z_q = pure_noise(SYNTH_DIMS.q, &noise, &mut rng);
        let mut threads = Vec::with_capacity(cfg.threads_per_group);
        for i in 1..=cfg.threads_per_group {
            let tid = format!("{gid}_R{i}");
            let y_b = rng.gen_bool(cfg.p_b);
            let z_qi = indicator(y_b, &noise, &mut rng);
            let phi_b = indicator(y_b, &noise, &mut rng);
            let mut comments = Vec::with_capacity(cfg.comments_per_thread);
            for m in 1..=cfg.comments_per_thread {
                let y_a = rng.gen_bool(cfg.p_a);
                let flip = rng.gen_bool(cfg.noise);
                let y_c = (y_a && y_b) != flip;
                comments.push(Comment {
                    id: format!("{tid}_C{m}"),
                    rank: m,
                    text: String::new(),
                    author: None,
                    label_a: Some(y_a),
                    label_c: Some(y_c),
                    features: Some(FeatureRow {
                        z_q: z_q.clone(),
                        z_qi: z_qi.clone(),
                        z_c: indicator(y_a, &noise, &mut rng),
                        phi_a: indicator(y_a, &noise, &mut rng),
                        phi_b: phi_b.clone(),
                        phi_c: pure_noise(SYNTH_PHI_WIDTH, &noise, &mut rng),
                        upstream: Vec::new(),
                    }),
                    features_c: Some(FeatureRow {
                        z_q: z_q.clone(),
                        z_qi: pure_noise(SYNTH_DIMS.qi, &noise, &mut rng),
                        z_c: indicator(y_c, &noise, &mut rng),
                        phi_a: pure_noise(SYNTH_PHI_WIDTH, &noise, &mut rng),
                        phi_b: pure_noise(SYNTH_PHI_WIDTH, &noise, &mut rng),
                        phi_c: indicator(y_c, &noise, &mut rng),
                        upstream: Vec::new(),
                    }),
                });
            }
            threads.push(Thread {
                id: tid,
                rank: i,
                text: String::new(),
                author: None,
                label_b: Some(y_b),
                features: Some(FeatureRow {
                    z_q: z_q.clone(),
                    z_qi,
                    phi_b,
                    ..FeatureRow::default()
                }),
                comments,
            });
        }
        groups.push(QuestionGroup {
            id: gid,
            text: String::new(),
            author: None,
            threads,
        });
    }
    Ok(groups)
}
