//! Feature rows for every thread (subtask B) and comment (subtasks A, C).

use serde::{Deserialize, Serialize};

use crate::data::{Comment, QuestionGroup};
use crate::error::{Error, Result};
use crate::features::{
    avg_embedding, bleu_with_components, cosine, meteor_lite, node_and_meta_features, qc_ratio_features, ter, tokenize,
    unigram_pr, CommentContext, EmbeddingTable, MinMaxScaler, NistInfo, NODE_FEATURE_NAMES, QC_RATIO_NAMES,
};
use crate::nn::{FeatureRow, InputDims};
use crate::par::Exec;
use crate::task::Task;

pub const NIST_ORDER: usize = 5;
pub const BLEU_ORDER: usize = 4;

/// Feature rows of one group: one per thread and one per comment, plus
/// optional separate rows for the C network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRows {
    pub group: String,
    pub threads: Vec<FeatureRow>,
    pub comments: Vec<Vec<FeatureRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comments_c: Option<Vec<Vec<FeatureRow>>>,
}

impl GroupRows {
    /// Row of comment `m` in thread `i` (both 0-based) for an A or C network.
    pub fn comment_row(&self, task: Task, i: usize, m: usize) -> &FeatureRow {
        match (&self.comments_c, task) {
            (Some(c), Task::C) => &c[i][m],
            _ => &self.comments[i][m],
        }
    }

    pub fn comment_row_mut(&mut self, task: Task, i: usize, m: usize) -> &mut FeatureRow {
        match (&mut self.comments_c, task) {
            (Some(c), Task::C) => &mut c[i][m],
            _ => &mut self.comments[i][m],
        }
    }

    pub fn comment_rows_mut(&mut self) -> impl Iterator<Item = &mut FeatureRow> {
        self.comments
            .iter_mut()
            .flatten()
            .chain(self.comments_c.iter_mut().flatten().flatten())
    }
}

/// Slot widths shared by every row of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowLayout {
    pub dims: InputDims,
    pub phi_width: usize,
}

impl RowLayout {
    fn check(&self, row: &FeatureRow, thread_level: bool, location: &str) -> Result<()> {
        let mut slots = vec![
            ("z_q", self.dims.q, row.z_q.len()),
            ("z_qi", self.dims.qi, row.z_qi.len()),
            ("phi_b", self.phi_width, row.phi_b.len()),
        ];
        if !thread_level {
            slots.extend([
                ("z_c", self.dims.c, row.z_c.len()),
                ("phi_a", self.phi_width, row.phi_a.len()),
                ("phi_c", self.phi_width, row.phi_c.len()),
            ]);
        }
        for (name, want, got) in slots {
            if want != got {
                return Err(Error::shape(format!("{name} of {location}"), want, got));
            }
        }
        Ok(())
    }
}

/// Slot names of a pairwise vector (same layout for phi_a, phi_b, phi_c).
pub fn pairwise_names(tables: &[EmbeddingTable]) -> Vec<String> {
    let mut names: Vec<String> = tables.iter().map(|t| format!("cos_{}", t.name)).collect();
    names.extend(["bleu", "nist", "ter", "meteor", "unigram_p", "unigram_r"].map(String::from));
    for kind in ["p", "m", "t"] {
        names.extend((1..=BLEU_ORDER).map(|n| format!("bleu_{kind}{n}")));
    }
    names.extend(["bleu_hyp_len", "bleu_ref_len", "bleu_len_ratio", "bleu_bp"].map(String::from));
    names.extend(QC_RATIO_NAMES.iter().map(|s| s.to_string()));
    names
}

/// Slot names of a text vector (`z_q`, `z_qi`): averaged embeddings per table.
pub fn text_names(tables: &[EmbeddingTable]) -> Vec<String> {
    tables
        .iter()
        .flat_map(|t| (0..t.dimension).map(move |k| format!("{}_{k}", t.name)))
        .collect()
}

/// Slot names of `z_c`: averaged embeddings, then node and meta features.
pub fn comment_names(tables: &[EmbeddingTable]) -> Vec<String> {
    let mut names = text_names(tables);
    names.extend(NODE_FEATURE_NAMES.iter().map(|s| s.to_string()));
    names
}

struct Text {
    raw: String,
    tokens: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

/// Text-based extraction with embedding tables and a NIST information table
/// fitted on the reference side (new and related questions) of a corpus.
pub struct Extractor<'a> {
    tables: &'a [EmbeddingTable],
    nist: NistInfo,
}

impl<'a> Extractor<'a> {
    pub fn fit(tables: &'a [EmbeddingTable], corpus: &[QuestionGroup]) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::Config(
                "text feature extraction needs at least one embedding table".into(),
            ));
        }
        let refs: Vec<Vec<String>> = corpus
            .iter()
            .flat_map(|g| std::iter::once(&g.text).chain(g.threads.iter().map(|t| &t.text)))
            .map(|s| tokenize(s))
            .collect();
        Ok(Self {
            tables,
            nist: NistInfo::fit(refs.iter().map(Vec::as_slice), NIST_ORDER),
        })
    }

    pub fn layout(&self) -> RowLayout {
        let emb: usize = self.tables.iter().map(|t| t.dimension).sum();
        RowLayout {
            dims: InputDims {
                q: emb,
                qi: emb,
                c: emb + NODE_FEATURE_NAMES.len(),
            },
            phi_width: pairwise_names(self.tables).len(),
        }
    }

    fn text(&self, raw: &str) -> Text {
        let tokens = tokenize(raw);
        let vectors = self.tables.iter().map(|t| avg_embedding(&tokens, t).vector).collect();
        Text {
            raw: raw.to_string(),
            tokens,
            vectors,
        }
    }

    /// Similarity features of a pair: `first` plays the reference and
    /// `second` the hypothesis of each MT metric.
    fn pairwise(&self, first: &Text, second: &Text) -> Result<Vec<f64>> {
        let mut v = Vec::with_capacity(self.layout().phi_width);
        for (a, b) in first.vectors.iter().zip(&second.vectors) {
            v.push(cosine(a, b)?);
        }
        let (hyp, reference) = (&second.tokens, &first.tokens);
        let (bleu, comps) = bleu_with_components(hyp, reference, BLEU_ORDER);
        let (p, r) = unigram_pr(hyp, reference);
        v.extend([
            bleu,
            self.nist.score(hyp, reference),
            ter(hyp, reference),
            meteor_lite(hyp, reference),
            p,
            r,
        ]);
        v.extend(comps.to_vec());
        v.extend(qc_ratio_features(&first.raw, &second.raw, self.tables.first()));
        Ok(v)
    }

    pub fn group_rows(&self, group: &QuestionGroup) -> Result<GroupRows> {
        let q = self.text(&group.text);
        let z_q = q.vectors.concat();
        let mut threads = Vec::with_capacity(group.threads.len());
        let mut comments = Vec::with_capacity(group.threads.len());
        for t in &group.threads {
            let qi = self.text(&t.text);
            let z_qi = qi.vectors.concat();
            let phi_b = self.pairwise(&q, &qi)?;
            let mut rows = Vec::with_capacity(t.comments.len());
            for c in &t.comments {
                let ct = self.text(&c.text);
                let ctx = CommentContext {
                    m: c.rank,
                    i: t.rank,
                    comment_author: c.author.as_deref(),
                    thread_author: t.author.as_deref(),
                };
                let mut z_c = ct.vectors.concat();
                z_c.extend(node_and_meta_features(&c.text, ctx, self.tables.first()).to_vec());
                rows.push(FeatureRow {
                    z_q: z_q.clone(),
                    z_qi: z_qi.clone(),
                    z_c,
                    phi_a: self.pairwise(&qi, &ct)?,
                    phi_b: phi_b.clone(),
                    phi_c: self.pairwise(&q, &ct)?,
                    upstream: Vec::new(),
                });
            }
            threads.push(FeatureRow {
                z_q: z_q.clone(),
                z_qi,
                phi_b,
                ..FeatureRow::default()
            });
            comments.push(rows);
        }
        Ok(GroupRows {
            group: group.id.clone(),
            threads,
            comments,
            comments_c: None,
        })
    }
}

/// Whether a dataset carries precomputed rows everywhere, nowhere, or mixed.
fn precomputed(groups: &[QuestionGroup]) -> Result<bool> {
    let mut any = false;
    let mut all = true;
    for g in groups {
        for t in &g.threads {
            let flags = std::iter::once(t.features.is_some()).chain(t.comments.iter().map(|c| c.features.is_some()));
            for f in flags {
                any |= f;
                all &= f;
            }
            any |= t.comments.iter().any(|c| c.features_c.is_some());
        }
    }
    if any && !all {
        return Err(Error::Config(
            "dataset mixes precomputed feature rows with text-only entries".into(),
        ));
    }
    Ok(any)
}

fn passthrough(group: &QuestionGroup) -> GroupRows {
    let shared = |c: &Comment| c.features.clone().unwrap_or_default();
    let has_c = group.comments().any(|(_, c)| c.features_c.is_some());
    GroupRows {
        group: group.id.clone(),
        threads: group
            .threads
            .iter()
            .map(|t| t.features.clone().unwrap_or_default())
            .collect(),
        comments: group
            .threads
            .iter()
            .map(|t| t.comments.iter().map(shared).collect())
            .collect(),
        comments_c: has_c.then(|| {
            group
                .threads
                .iter()
                .map(|t| {
                    t.comments
                        .iter()
                        .map(|c| c.features_c.clone().unwrap_or_else(|| shared(c)))
                        .collect()
                })
                .collect()
        }),
    }
}

fn layout_of(rows: &[GroupRows]) -> Result<RowLayout> {
    let first_thread = rows.iter().flat_map(|g| &g.threads).next().ok_or(Error::EmptyDataset)?;
    let z_c = rows
        .iter()
        .flat_map(|g| g.comments.iter().flatten())
        .next()
        .map_or(0, |r| r.z_c.len());
    let layout = RowLayout {
        dims: InputDims {
            q: first_thread.z_q.len(),
            qi: first_thread.z_qi.len(),
            c: z_c,
        },
        phi_width: first_thread.phi_b.len(),
    };
    for g in rows {
        for (i, t) in g.threads.iter().enumerate() {
            layout.check(t, true, &format!("{} thread {}", g.group, i + 1))?;
            for (m, c) in g.comments[i].iter().enumerate() {
                layout.check(c, false, &format!("{} comment {}:{}", g.group, i + 1, m + 1))?;
            }
            for (m, c) in g.comments_c.iter().flat_map(|rows| &rows[i]).enumerate() {
                layout.check(c, false, &format!("{} C row {}:{}", g.group, i + 1, m + 1))?;
            }
        }
    }
    Ok(layout)
}

/// Min-max scalers for thread-level slots (fitted on thread rows) and
/// comment-level slots (fitted on comment rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowScaler {
    pub z_q: MinMaxScaler,
    pub z_qi: MinMaxScaler,
    pub phi_b: MinMaxScaler,
    pub z_c: MinMaxScaler,
    pub phi_a: MinMaxScaler,
    pub phi_c: MinMaxScaler,
}

impl RowScaler {
    pub fn fit(rows: &[GroupRows]) -> Result<Self> {
        let threads: Vec<&FeatureRow> = rows.iter().flat_map(|g| &g.threads).collect();
        let comments: Vec<&FeatureRow> = rows.iter().flat_map(|g| g.comments.iter().flatten()).collect();
        Ok(Self {
            z_q: MinMaxScaler::fit(threads.iter().map(|r| r.z_q.as_slice()))?,
            z_qi: MinMaxScaler::fit(threads.iter().map(|r| r.z_qi.as_slice()))?,
            phi_b: MinMaxScaler::fit(threads.iter().map(|r| r.phi_b.as_slice()))?,
            z_c: MinMaxScaler::fit(comments.iter().map(|r| r.z_c.as_slice()))?,
            phi_a: MinMaxScaler::fit(comments.iter().map(|r| r.phi_a.as_slice()))?,
            phi_c: MinMaxScaler::fit(comments.iter().map(|r| r.phi_c.as_slice()))?,
        })
    }

    fn scale_thread_slots(&self, row: &mut FeatureRow) -> Result<()> {
        row.z_q = self.z_q.apply(&row.z_q)?;
        row.z_qi = self.z_qi.apply(&row.z_qi)?;
        row.phi_b = self.phi_b.apply(&row.phi_b)?;
        Ok(())
    }

    pub fn apply(&self, rows: &mut GroupRows) -> Result<()> {
        for t in &mut rows.threads {
            self.scale_thread_slots(t)?;
        }
        for c in rows.comment_rows_mut() {
            self.scale_thread_slots(c)?;
            c.z_c = self.z_c.apply(&c.z_c)?;
            c.phi_a = self.phi_a.apply(&c.phi_a)?;
            c.phi_c = self.phi_c.apply(&c.phi_c)?;
        }
        Ok(())
    }
}

/// Extracted rows of a dataset with their layout and, for text data, the
/// scaler that was applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extracted {
    pub layout: RowLayout,
    pub scaler: Option<RowScaler>,
    pub rows: Vec<GroupRows>,
}

/// Rows for `groups`. Precomputed rows pass through unscaled. Text rows
/// are scaled with `scaler` when given, otherwise with a scaler fitted on
/// these rows; NIST weights are fitted on `nist_corpus`.
pub fn extract(
    groups: &[QuestionGroup],
    tables: &[EmbeddingTable],
    nist_corpus: &[QuestionGroup],
    scaler: Option<&RowScaler>,
    exec: Exec,
) -> Result<Extracted> {
    if groups.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if precomputed(groups)? {
        let rows: Vec<GroupRows> = groups.iter().map(passthrough).collect();
        return Ok(Extracted {
            layout: layout_of(&rows)?,
            scaler: None,
            rows,
        });
    }
    let ex = Extractor::fit(tables, nist_corpus)?;
    let mut rows = exec
        .map(groups, |g| ex.group_rows(g))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let layout = layout_of(&rows)?;
    let scaler = match scaler {
        Some(s) => s.clone(),
        None => RowScaler::fit(&rows)?,
    };
    for r in &mut rows {
        scaler.apply(r)?;
    }
    Ok(Extracted {
        layout,
        scaler: Some(scaler),
        rows,
    })
}

/// Delimited matrix of one task's rows: id columns, the gold label (empty
/// when absent), then every slot the task's network reads, named after the
/// feature it holds when the rows were extracted from text.
pub fn task_csv(groups: &[QuestionGroup], extracted: &Extracted, tables: &[EmbeddingTable], task: Task) -> String {
    let l = extracted.layout;
    let named = extracted.scaler.is_some();
    let names = |prefix: &str, named_slots: Vec<String>, width: usize| -> Vec<String> {
        if named && named_slots.len() == width {
            named_slots.into_iter().map(|n| format!("{prefix}.{n}")).collect()
        } else {
            (0..width).map(|k| format!("{prefix}.{k}")).collect()
        }
    };
    let slots: &[&str] = match task {
        Task::A => &["z_qi", "z_c", "phi_a"],
        Task::B => &["z_q", "z_qi", "phi_b"],
        Task::C => &["z_q", "z_qi", "z_c", "phi_a", "phi_b", "phi_c"],
    };
    let mut header = vec!["group".to_string(), "thread".into()];
    if task != Task::B {
        header.push("comment".into());
    }
    header.push("label".into());
    for &slot in slots {
        header.extend(match slot {
            "z_q" => names(slot, text_names(tables), l.dims.q),
            "z_qi" => names(slot, text_names(tables), l.dims.qi),
            "z_c" => names(slot, comment_names(tables), l.dims.c),
            _ => names(slot, pairwise_names(tables), l.phi_width),
        });
    }
    let pick = |row: &FeatureRow, slot: &str| -> Vec<f64> {
        match slot {
            "z_q" => row.z_q.clone(),
            "z_qi" => row.z_qi.clone(),
            "z_c" => row.z_c.clone(),
            "phi_a" => row.phi_a.clone(),
            "phi_b" => row.phi_b.clone(),
            _ => row.phi_c.clone(),
        }
    };
    let label = |y: Option<bool>| y.map_or(String::new(), |y| u8::from(y).to_string());
    let mut out = header.join(",") + "\n";
    let mut line = |ids: Vec<String>, y: Option<bool>, row: &FeatureRow| {
        let mut cells = ids;
        cells.push(label(y));
        for &slot in slots {
            cells.extend(pick(row, slot).iter().map(|x| format!("{x}")));
        }
        out.push_str(&(cells.join(",") + "\n"));
    };
    for (g, rows) in groups.iter().zip(&extracted.rows) {
        for (i, t) in g.threads.iter().enumerate() {
            if task == Task::B {
                line(vec![g.id.clone(), t.id.clone()], t.label_b, &rows.threads[i]);
                continue;
            }
            for (m, c) in t.comments.iter().enumerate() {
                let y = if task == Task::A { c.label_a } else { c.label_c };
                line(
                    vec![g.id.clone(), t.id.clone(), c.id.clone()],
                    y,
                    rows.comment_row(task, i, m),
                );
            }
        }
    }
    out
}
