//! Pipeline baselines: upstream probabilities (or gold labels) appended to a
//! downstream network's input, which is then retrained.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{task_rows, ExperimentConfig, GroupRows, GroupScores, RowLayout, SystemScores};
use crate::data::QuestionGroup;
use crate::error::{Error, Result};
use crate::nn::{train_dnn, TaskNetwork};
use crate::par::Exec;
use crate::task::{PerTask, Task};

/// A target network plus the upstream tasks whose outputs it receives,
/// written `DNN_C+PA+PB` (predicted) or `DNN_C+GA+GB` (gold).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PipelineVariant {
    pub target: Task,
    pub upstream: Vec<Task>,
    pub gold: bool,
}

impl FromStr for PipelineVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Config(format!("pipeline variant `{s}`: {why}"));
        let mut parts = s.split('+');
        let target = match parts.next().and_then(|t| t.strip_prefix("DNN_")) {
            Some("A") => Task::A,
            Some("B") => Task::B,
            Some("C") => Task::C,
            _ => return Err(bad("expected DNN_A, DNN_B or DNN_C before the first `+`")),
        };
        let mut upstream = Vec::new();
        let mut kinds = Vec::new();
        for p in parts {
            let mut chars = p.chars();
            let (kind, task) = (chars.next(), chars.next());
            if chars.next().is_some() {
                return Err(bad("upstream entries look like PA or GB"));
            }
            let gold = match kind {
                Some('P') => false,
                Some('G') => true,
                _ => return Err(bad("upstream entries start with P (predicted) or G (gold)")),
            };
            let task = match task {
                Some('A') => Task::A,
                Some('B') => Task::B,
                Some('C') => Task::C,
                _ => return Err(bad("upstream task must be A, B or C")),
            };
            if task == target || upstream.contains(&task) {
                return Err(bad("upstream tasks must be distinct and differ from the target"));
            }
            upstream.push(task);
            kinds.push(gold);
        }
        if upstream.is_empty() {
            return Err(bad("at least one upstream task is required"));
        }
        if kinds.iter().any(|&g| g != kinds[0]) {
            return Err(bad("mixing predicted and gold upstream entries is not supported"));
        }
        upstream.sort();
        Ok(Self {
            target,
            upstream,
            gold: kinds[0],
        })
    }
}

impl TryFrom<String> for PipelineVariant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PipelineVariant> for String {
    fn from(v: PipelineVariant) -> Self {
        v.to_string()
    }
}

impl fmt::Display for PipelineVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DNN_{}", self.target)?;
        let kind = if self.gold { 'G' } else { 'P' };
        for t in &self.upstream {
            write!(f, "+{kind}{t}")?;
        }
        Ok(())
    }
}

fn as_f64(y: Option<bool>, id: &str) -> Result<f64> {
    match y {
        Some(true) => Ok(1.0),
        Some(false) => Ok(0.0),
        None => Err(Error::UnlabeledNode(id.to_string())),
    }
}

/// Upstream values of every task in node order: network probabilities, or
/// gold labels.
fn upstream_values(
    group: &QuestionGroup,
    rows: &GroupRows,
    nets: PerTask<&TaskNetwork>,
    gold: bool,
) -> Result<PerTask<Vec<f64>>> {
    let mut out: PerTask<Vec<f64>> = PerTask::default();
    for (i, t) in group.threads.iter().enumerate() {
        out.b.push(if gold {
            as_f64(t.label_b, &t.id)?
        } else {
            nets.b.predict_proba(&rows.threads[i])?
        });
        for (m, c) in t.comments.iter().enumerate() {
            if gold {
                out.a.push(as_f64(c.label_a, &c.id)?);
                out.c.push(as_f64(c.label_c, &c.id)?);
            } else {
                out.a.push(nets.a.predict_proba(rows.comment_row(Task::A, i, m))?);
                out.c.push(nets.c.predict_proba(rows.comment_row(Task::C, i, m))?);
            }
        }
    }
    Ok(out)
}

/// Copies `rows` with the variant's upstream slot filled. Comment-level
/// targets see the comment's A/C values and the thread's B value; the B
/// target sees the mean A and C values over the thread's comments (0 for an
/// empty thread).
fn augment(
    variant: &PipelineVariant,
    group: &QuestionGroup,
    rows: &GroupRows,
    values: &PerTask<Vec<f64>>,
) -> GroupRows {
    let mut out = rows.clone();
    let mut k = 0;
    for (i, t) in group.threads.iter().enumerate() {
        let n = t.comments.len();
        let mean = |task: Task| {
            let v = &values.get(task)[k..k + n];
            if n == 0 {
                0.0
            } else {
                v.iter().sum::<f64>() / n as f64
            }
        };
        if variant.target == Task::B {
            out.threads[i].upstream = variant.upstream.iter().map(|&u| mean(u)).collect();
        }
        for m in 0..n {
            if variant.target != Task::B {
                out.comment_row_mut(variant.target, i, m).upstream = variant
                    .upstream
                    .iter()
                    .map(|&u| {
                        if u == Task::B {
                            values.b[i]
                        } else {
                            values.get(u)[k + m]
                        }
                    })
                    .collect();
            }
        }
        k += n;
    }
    out
}

/// Retrains the target network with upstream inputs on `train` and scores
/// `test` with it.
pub fn pipeline_baseline(
    variant: &PipelineVariant,
    train: (&[QuestionGroup], &[GroupRows]),
    test: (&[QuestionGroup], &[GroupRows]),
    layout: RowLayout,
    nets: PerTask<&TaskNetwork>,
    cfg: &ExperimentConfig,
    exec: Exec,
) -> Result<SystemScores> {
    let augment_all = |(groups, rows): (&[QuestionGroup], &[GroupRows])| -> Result<Vec<GroupRows>> {
        let pairs: Vec<(&QuestionGroup, &GroupRows)> = groups.iter().zip(rows).collect();
        exec.map(&pairs, |(g, r)| {
            Ok(augment(variant, g, r, &upstream_values(g, r, nets, variant.gold)?))
        })
        .into_iter()
        .collect()
    };
    let train_rows = augment_all(train)?;
    let test_rows = augment_all(test)?;
    let spec = cfg.spec(variant.target, layout).with_upstream(variant.upstream.len());
    let data = task_rows(train.0, &train_rows, variant.target)?;
    let (net, _) = train_dnn(&data, None, spec, cfg.dnn.get(variant.target))?;
    let mut groups = Vec::with_capacity(test.0.len());
    for (g, r) in test.0.iter().zip(&test_rows) {
        let mut scores: PerTask<Vec<f64>> = PerTask::default();
        let target = scores.get_mut(variant.target);
        if variant.target == Task::B {
            for row in &r.threads {
                target.push(net.predict_proba(row)?);
            }
        } else {
            for (i, t) in g.threads.iter().enumerate() {
                for m in 0..t.comments.len() {
                    target.push(net.predict_proba(r.comment_row(variant.target, i, m))?);
                }
            }
        }
        groups.push(GroupScores {
            group: g.id.clone(),
            scores,
        });
    }
    Ok(SystemScores {
        system: variant.to_string(),
        probabilistic: true,
        tasks: vec![variant.target],
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for name in ["DNN_C+PA", "DNN_C+PB", "DNN_C+PA+PB", "DNN_C+GA+GB", "DNN_B+PA+PC"] {
            let v: PipelineVariant = name.parse().unwrap();
            assert_eq!(v.to_string(), name);
        }
        let v: PipelineVariant = "DNN_C+PB+PA".parse().unwrap();
        assert_eq!(v.upstream, vec![Task::A, Task::B]);
    }

    #[test]
    fn invalid_variants_are_rejected() {
        for name in [
            "C+PA",
            "DNN_C",
            "DNN_C+PC",
            "DNN_C+PA+PA",
            "DNN_C+PA+GB",
            "DNN_C+XA",
            "DNN_D+PA",
        ] {
            assert!(name.parse::<PipelineVariant>().is_err(), "{name}");
        }
    }
}
