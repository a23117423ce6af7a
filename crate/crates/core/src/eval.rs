//! Ranking and classification metrics.
//!
//! Queries without any relevant item are skipped by MAP, MRR and AvgRec.
//! AvgRec of a query is its recall at every cutoff `k = 1..n`, averaged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub id: String,
    pub score: f64,
    pub gold: bool,
}

/// Items of one query sorted by descending score; ties keep input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPrediction {
    pub query: String,
    pub items: Vec<RankedItem>,
}

impl RankedPrediction {
    /// `items` must be given in their original (baseline) order.
    pub fn new(query: impl Into<String>, mut items: Vec<RankedItem>) -> Result<Self> {
        let query = query.into();
        if let Some(bad) = items.iter().find(|i| !i.score.is_finite()) {
            return Err(Error::NonFinite(format!("score of {} in query {query}", bad.id)));
        }
        items.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(Self { query, items })
    }

    pub fn positives(&self) -> usize {
        self.items.iter().filter(|i| i.gold).count()
    }

    pub fn average_precision(&self) -> Option<f64> {
        let mut hits = 0usize;
        let mut sum = 0.0;
        for (k, item) in self.items.iter().enumerate() {
            if item.gold {
                hits += 1;
                sum += hits as f64 / (k + 1) as f64;
            }
        }
        (hits > 0).then(|| sum / hits as f64)
    }

    pub fn reciprocal_rank(&self) -> Option<f64> {
        self.items.iter().position(|i| i.gold).map(|k| 1.0 / (k + 1) as f64)
    }

    pub fn average_recall(&self) -> Option<f64> {
        let total = self.positives();
        if total == 0 {
            return None;
        }
        let mut hits = 0usize;
        let mut sum = 0.0;
        for item in &self.items {
            hits += usize::from(item.gold);
            sum += hits as f64 / total as f64;
        }
        Some(sum / self.items.len() as f64)
    }
}

fn mean_over(predictions: &[RankedPrediction], f: impl Fn(&RankedPrediction) -> Option<f64>) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let vals: Vec<f64> = predictions.iter().filter_map(f).collect();
    Ok(if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    })
}

pub fn mean_average_precision(predictions: &[RankedPrediction]) -> Result<f64> {
    mean_over(predictions, RankedPrediction::average_precision)
}

pub fn mean_reciprocal_rank(predictions: &[RankedPrediction]) -> Result<f64> {
    mean_over(predictions, RankedPrediction::reciprocal_rank)
}

pub fn average_recall(predictions: &[RankedPrediction]) -> Result<f64> {
    mean_over(predictions, RankedPrediction::average_recall)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// `(predicted, gold)` pairs.
pub fn classification_metrics(pairs: &[(bool, bool)]) -> Result<Classification> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let count = |p: bool, g: bool| pairs.iter().filter(|&&x| x == (p, g)).count() as f64;
    let (tp, fp, fn_, tn) = (
        count(true, true),
        count(true, false),
        count(false, true),
        count(false, false),
    );
    let ratio = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Ok(Classification {
        accuracy: (tp + tn) / pairs.len() as f64,
        precision,
        recall,
        f1: ratio(2.0 * precision * recall, precision + recall),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBreakdown {
    pub query: String,
    pub items: usize,
    pub positives: usize,
    pub ap: Option<f64>,
    pub rr: Option<f64>,
    pub avg_rec: Option<f64>,
}

/// All metrics of one system on one subtask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub system: String,
    pub map: f64,
    pub avg_rec: f64,
    pub mrr: f64,
    pub classification: Option<Classification>,
    pub queries: Vec<QueryBreakdown>,
}

impl MetricReport {
    /// Ranking metrics from `predictions`; classification metrics from the
    /// `(predicted, gold)` pairs when given.
    pub fn new(
        system: impl Into<String>,
        predictions: &[RankedPrediction],
        decisions: Option<&[(bool, bool)]>,
    ) -> Result<Self> {
        Ok(Self {
            system: system.into(),
            map: mean_average_precision(predictions)?,
            avg_rec: average_recall(predictions)?,
            mrr: mean_reciprocal_rank(predictions)?,
            classification: decisions.map(classification_metrics).transpose()?,
            queries: predictions
                .iter()
                .map(|p| QueryBreakdown {
                    query: p.query.clone(),
                    items: p.items.len(),
                    positives: p.positives(),
                    ap: p.average_precision(),
                    rr: p.reciprocal_rank(),
                    avg_rec: p.average_recall(),
                })
                .collect(),
        })
    }

    /// `system.metric=value` lines; per-query lines when `verbose`.
    pub fn to_key_values(&self, prefix: &str, verbose: bool) -> String {
        let key = |m: &str| format!("{prefix}{}.{m}", self.system);
        let mut out = format!(
            "{}={:.6}\n{}={:.6}\n{}={:.6}\n",
            key("map"),
            self.map,
            key("avg_rec"),
            self.avg_rec,
            key("mrr"),
            self.mrr
        );
        if let Some(c) = &self.classification {
            out.push_str(&format!(
                "{}={:.6}\n{}={:.6}\n{}={:.6}\n{}={:.6}\n",
                key("acc"),
                c.accuracy,
                key("p"),
                c.precision,
                key("r"),
                c.recall,
                key("f1"),
                c.f1
            ));
        }
        if verbose {
            let fmt = |v: Option<f64>| v.map_or("na".to_string(), |x| format!("{x:.6}"));
            for q in &self.queries {
                out.push_str(&format!(
                    "{}.query.{}=ap:{} rr:{} avg_rec:{} positives:{}/{}\n",
                    key("q"),
                    q.query,
                    fmt(q.ap),
                    fmt(q.rr),
                    fmt(q.avg_rec),
                    q.positives,
                    q.items
                ));
            }
        }
        out
    }
}

/// Fixed-width table of reports, scores in percent.
pub fn format_table(title: &str, reports: &[MetricReport]) -> String {
    let width = reports.iter().map(|r| r.system.len()).max().unwrap_or(6).max(6);
    let mut out = format!(
        "{title}\n{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}\n",
        "System", "MAP", "AvgRec", "MRR", "Acc", "P", "R", "F1"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<width$}  {:>6.2}  {:>6.2}  {:>6.2}",
            r.system,
            100.0 * r.map,
            100.0 * r.avg_rec,
            100.0 * r.mrr
        ));
        match &r.classification {
            Some(c) => out.push_str(&format!(
                "  {:>6.2}  {:>6.2}  {:>6.2}  {:>6.2}\n",
                100.0 * c.accuracy,
                100.0 * c.precision,
                100.0 * c.recall,
                100.0 * c.f1
            )),
            None => out.push_str(&format!("  {:>6}  {:>6}  {:>6}  {:>6}\n", "-", "-", "-", "-")),
        }
    }
    out
}
