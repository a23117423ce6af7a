use serde::{Deserialize, Serialize};

use super::SystemScores;
use crate::data::QuestionGroup;
use crate::error::{Error, Result};
use crate::eval::{format_table, MetricReport, RankedItem, RankedPrediction};
use crate::task::{PerTask, Task};

/// Row label of a system on one task.
fn row_name(system: &str, task: Task) -> String {
    match (system, task) {
        ("DNN", t) => format!("DNN_{t}"),
        ("Order", Task::A) => "Chron".into(),
        ("Order", Task::B) => "IR".into(),
        ("Order", Task::C) => "IR+Chron".into(),
        (s, _) => s.to_string(),
    }
}

fn gold(label: Option<bool>, id: &str) -> Result<bool> {
    label.ok_or_else(|| Error::UnlabeledNode(id.to_string()))
}

/// Ranks items per query (threads' comments for A, a group's threads for B,
/// a group's comments for C) and computes every metric.
pub fn evaluate_system(groups: &[QuestionGroup], system: &SystemScores, task: Task) -> Result<MetricReport> {
    if groups.len() != system.groups.len() {
        return Err(Error::shape(
            format!("groups scored by {}", system.system),
            groups.len(),
            system.groups.len(),
        ));
    }
    let mut predictions = Vec::new();
    let mut decisions = Vec::new();
    for (g, s) in groups.iter().zip(&system.groups) {
        if g.id != s.group {
            return Err(Error::Config(format!(
                "scores of {} list group {} where the dataset has {}",
                system.system, s.group, g.id
            )));
        }
        let scores = s.scores.get(task);
        let expected = if task == Task::B {
            g.threads.len()
        } else {
            g.comment_count()
        };
        if scores.len() != expected {
            return Err(Error::shape(
                format!("{} scores of group {}", task, g.id),
                expected,
                scores.len(),
            ));
        }
        let mut items = Vec::new();
        let mut k = 0;
        for t in &g.threads {
            if task == Task::B {
                items.push(RankedItem {
                    id: t.id.clone(),
                    score: scores[k],
                    gold: gold(t.label_b, &t.id)?,
                });
                k += 1;
                continue;
            }
            let mut thread_items = Vec::with_capacity(t.comments.len());
            for c in &t.comments {
                let label = if task == Task::A { c.label_a } else { c.label_c };
                thread_items.push(RankedItem {
                    id: c.id.clone(),
                    score: scores[k],
                    gold: gold(label, &c.id)?,
                });
                k += 1;
            }
            if task == Task::A {
                if !thread_items.is_empty() {
                    decisions.extend(thread_items.iter().map(|it| (it.score >= 0.5, it.gold)));
                    predictions.push(RankedPrediction::new(t.id.clone(), thread_items)?);
                }
            } else {
                items.extend(thread_items);
            }
        }
        if task != Task::A && !items.is_empty() {
            decisions.extend(items.iter().map(|it| (it.score >= 0.5, it.gold)));
            predictions.push(RankedPrediction::new(g.id.clone(), items)?);
        }
    }
    MetricReport::new(
        row_name(&system.system, task),
        &predictions,
        system.probabilistic.then_some(decisions.as_slice()),
    )
}

/// Metric rows per subtask, in the order the systems were given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tasks: PerTask<Vec<MetricReport>>,
}

const TITLES: [&str; 3] = [
    "Subtask A: comment goodness, ranked per thread",
    "Subtask B: question relatedness, ranked per group",
    "Subtask C: comment relevance, ranked per group",
];

impl ExperimentReport {
    pub fn from_systems(groups: &[QuestionGroup], systems: &[SystemScores]) -> Result<Self> {
        let mut tasks: PerTask<Vec<MetricReport>> = PerTask::default();
        for s in systems {
            for &t in &s.tasks {
                tasks.get_mut(t).push(evaluate_system(groups, s, t)?);
            }
        }
        Ok(Self { tasks })
    }

    pub fn get(&self, task: Task, system: &str) -> Option<&MetricReport> {
        self.tasks.get(task).iter().find(|r| r.system == system)
    }

    pub fn to_text(&self) -> String {
        Task::ALL
            .iter()
            .map(|&t| format_table(TITLES[t.index()], self.tasks.get(t)))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// `a.DNN_A.map=...` lines, subtask by subtask.
    pub fn to_key_values(&self, verbose: bool) -> String {
        let mut out = String::new();
        for t in Task::ALL {
            let prefix = format!("{}.", t.lower());
            for r in self.tasks.get(t) {
                out.push_str(&r.to_key_values(&prefix, verbose));
            }
        }
        out
    }
}
