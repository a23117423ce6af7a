//! Machine-translation metrics used as text-pair similarity features.
//!
//! Every function takes `(hyp, ref)` token slices.

use std::collections::BTreeMap;

type Counts<'a> = BTreeMap<&'a [String], usize>;

fn ngram_counts(tokens: &[String], n: usize) -> Counts<'_> {
    let mut c = BTreeMap::new();
    if n > 0 && tokens.len() >= n {
        for g in tokens.windows(n) {
            *c.entry(g).or_insert(0) += 1;
        }
    }
    c
}

fn clipped_matches(hyp: &Counts<'_>, reference: &Counts<'_>) -> usize {
    hyp.iter()
        .map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0)))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BleuComponents {
    /// Clipped n-gram precision per order (0 when the hypothesis has no n-grams).
    pub precisions: Vec<f64>,
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub hyp_len: usize,
    pub ref_len: usize,
    /// `hyp_len / ref_len`, 0 for an empty reference.
    pub length_ratio: f64,
    pub brevity_penalty: f64,
}

impl BleuComponents {
    /// Precisions, matches, totals, lengths, ratio and brevity penalty as one
    /// flat vector.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.precisions.clone();
        v.extend(self.matches.iter().map(|&m| m as f64));
        v.extend(self.totals.iter().map(|&t| t as f64));
        v.extend([
            self.hyp_len as f64,
            self.ref_len as f64,
            self.length_ratio,
            self.brevity_penalty,
        ]);
        v
    }
}

/// Sentence BLEU without smoothing, with its components.
pub fn bleu_with_components(hyp: &[String], reference: &[String], max_n: usize) -> (f64, BleuComponents) {
    assert!(max_n >= 1, "max_n must be at least 1");
    let mut c = BleuComponents {
        precisions: vec![0.0; max_n],
        matches: vec![0; max_n],
        totals: vec![0; max_n],
        hyp_len: hyp.len(),
        ref_len: reference.len(),
        length_ratio: if reference.is_empty() {
            0.0
        } else {
            hyp.len() as f64 / reference.len() as f64
        },
        brevity_penalty: 0.0,
    };
    if hyp.is_empty() {
        c.length_ratio = 0.0;
        return (0.0, c);
    }
    c.brevity_penalty = (1.0 - reference.len() as f64 / hyp.len() as f64).exp().min(1.0);
    let mut log_sum = 0.0;
    let mut any_zero = false;
    for n in 1..=max_n {
        let h = ngram_counts(hyp, n);
        let r = ngram_counts(reference, n);
        let m = clipped_matches(&h, &r);
        let t = hyp.len().saturating_sub(n - 1);
        c.matches[n - 1] = m;
        c.totals[n - 1] = t;
        if t > 0 {
            c.precisions[n - 1] = m as f64 / t as f64;
        }
        if m == 0 {
            any_zero = true;
        } else {
            log_sum += c.precisions[n - 1].ln();
        }
    }
    let bleu = if any_zero {
        0.0
    } else {
        c.brevity_penalty * (log_sum / max_n as f64).exp()
    };
    (bleu, c)
}

/// Information weights `log2(count(w_1..w_{n-1}) / count(w_1..w_n))` fitted
/// on a reference corpus; unigram weights use the corpus word count as the
/// numerator.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NistInfo {
    pub max_n: usize,
    info: BTreeMap<Vec<String>, f64>,
}

impl NistInfo {
    pub fn fit<'a>(references: impl IntoIterator<Item = &'a [String]>, max_n: usize) -> Self {
        let mut freq: BTreeMap<Vec<String>, usize> = BTreeMap::new();
        let mut words = 0usize;
        for r in references {
            words += r.len();
            for n in 1..=max_n {
                for (g, c) in ngram_counts(r, n) {
                    *freq.entry(g.to_vec()).or_insert(0) += c;
                }
            }
        }
        let info = freq
            .iter()
            .map(|(g, &c)| {
                let prefix = if g.len() == 1 { words } else { freq[&g[..g.len() - 1]] };
                (g.clone(), (prefix as f64 / c as f64).log2())
            })
            .collect();
        Self { max_n, info }
    }

    /// Weight of an n-gram; 0 for n-grams never seen in the fitted corpus.
    pub fn weight(&self, gram: &[String]) -> f64 {
        self.info.get(gram).copied().unwrap_or(0.0)
    }

    /// NIST score of `hyp` against `reference`. Orders for which the
    /// hypothesis has no n-grams contribute nothing.
    pub fn score(&self, hyp: &[String], reference: &[String]) -> f64 {
        if hyp.is_empty() || reference.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for n in 1..=self.max_n {
            let h = ngram_counts(hyp, n);
            let denom: usize = h.values().sum();
            if denom == 0 {
                continue;
            }
            let r = ngram_counts(reference, n);
            let num: f64 = h
                .iter()
                .map(|(g, &c)| {
                    let m = c.min(r.get(g).copied().unwrap_or(0));
                    if m == 0 {
                        0.0
                    } else {
                        self.weight(g) * m as f64
                    }
                })
                .sum();
            total += num / denom as f64;
        }
        total * nist_length_penalty(reference.len(), hyp.len())
    }
}

/// `exp(beta * ln^2(hyp/ref))` for shorter hypotheses, with beta chosen so
/// that a ratio of 2/3 gives 0.5; 1 otherwise.
pub fn nist_length_penalty(ref_len: usize, hyp_len: usize) -> f64 {
    if ref_len == 0 {
        return 0.0;
    }
    let ratio = hyp_len as f64 / ref_len as f64;
    if ratio <= 0.0 {
        return 0.0;
    }
    if ratio >= 1.0 {
        return 1.0;
    }
    let beta = 0.5f64.ln() / 1.5f64.ln().powi(2);
    (beta * ratio.ln().powi(2)).exp()
}

/// NIST with information weights fitted on `reference` alone.
pub fn nist(hyp: &[String], reference: &[String], max_n: usize) -> f64 {
    NistInfo::fit([reference], max_n).score(hyp, reference)
}

fn levenshtein(a: &[String], b: &[String]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub const TER_MAX_SHIFT_DISTANCE: usize = 10;
pub const TER_MAX_BLOCK: usize = 10;

fn shifted(hyp: &[String], start: usize, len: usize, dest: usize) -> Vec<String> {
    let mut rest: Vec<String> = hyp[..start].to_vec();
    rest.extend_from_slice(&hyp[start + len..]);
    let mut out = rest[..dest].to_vec();
    out.extend_from_slice(&hyp[start..start + len]);
    out.extend_from_slice(&rest[dest..]);
    out
}

/// Translation edit rate: (edits + shifts) / ref_len.
///
/// Shifts are searched greedily. A candidate moves a hypothesis block of at
/// most [`TER_MAX_BLOCK`] tokens that also occurs in the reference to a
/// position where that occurrence starts, at most
/// [`TER_MAX_SHIFT_DISTANCE`] positions away; the best candidate is applied
/// while it strictly lowers the edit distance, and each costs one edit.
/// An empty reference gives 0 for an empty hypothesis and `hyp_len`
/// otherwise.
pub fn ter(hyp: &[String], reference: &[String]) -> f64 {
    if reference.is_empty() {
        return hyp.len() as f64;
    }
    let mut cur = hyp.to_vec();
    let mut dist = levenshtein(&cur, reference);
    let mut shifts = 0usize;
    while dist > 0 {
        let mut best: Option<(usize, Vec<String>)> = None;
        for start in 0..cur.len() {
            for len in 1..=TER_MAX_BLOCK.min(cur.len() - start).min(reference.len()) {
                let block = &cur[start..start + len];
                if reference.get(start..start + len) == Some(block) {
                    continue;
                }
                for j in 0..=reference.len() - len {
                    if &reference[j..j + len] != block {
                        continue;
                    }
                    let dest = j.min(cur.len() - len);
                    if dest == start || dest.abs_diff(start) > TER_MAX_SHIFT_DISTANCE {
                        continue;
                    }
                    let cand = shifted(&cur, start, len, dest);
                    let d = levenshtein(&cand, reference);
                    if d < best.as_ref().map_or(dist, |b| b.0) {
                        best = Some((d, cand));
                    }
                }
            }
        }
        match best {
            Some((d, cand)) => {
                dist = d;
                cur = cand;
                shifts += 1;
            }
            None => break,
        }
    }
    (dist + shifts) as f64 / reference.len() as f64
}

pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_BETA: f64 = 3.0;
pub const METEOR_GAMMA: f64 = 0.5;
/// Search-node budget of the exact chunk minimization; beyond it the best
/// alignment found so far is used.
const METEOR_SEARCH_BUDGET: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteorAlignment {
    pub matches: usize,
    pub chunks: usize,
}

struct ChunkSearch<'a> {
    hyp: &'a [String],
    candidates: Vec<Vec<usize>>,
    /// Remaining optional skips per hyp token's word.
    skips: BTreeMap<&'a str, usize>,
    used: Vec<bool>,
    best: usize,
    budget: usize,
}

impl ChunkSearch<'_> {
    fn run(&mut self, h: usize, prev: Option<(usize, usize)>, chunks: usize) {
        if chunks >= self.best || self.budget == 0 {
            return;
        }
        self.budget -= 1;
        if h == self.hyp.len() {
            self.best = chunks;
            return;
        }
        let cands = self.candidates[h].clone();
        // Continuing the current chunk first finds good bounds early.
        let mut order: Vec<usize> = cands.iter().copied().filter(|&r| !self.used[r]).collect();
        order.sort_by_key(|&r| !matches!(prev, Some((ph, pr)) if ph + 1 == h && pr + 1 == r));
        for r in order {
            self.used[r] = true;
            let extends = matches!(prev, Some((ph, pr)) if ph + 1 == h && pr + 1 == r);
            self.run(h + 1, Some((h, r)), chunks + usize::from(!extends));
            self.used[r] = false;
        }
        let word = self.hyp[h].as_str();
        let free = !cands.iter().any(|&r| !self.used[r]);
        let skip = self.skips.get(word).copied().unwrap_or(0);
        if free || skip > 0 {
            if !free {
                self.skips.insert(word, skip - 1);
            }
            self.run(h + 1, prev, chunks);
            if !free {
                self.skips.insert(word, skip);
            }
        }
    }
}

/// Exact-match unigram alignment with the maximum number of matches and,
/// among those, the fewest chunks.
pub fn meteor_alignment(hyp: &[String], reference: &[String]) -> MeteorAlignment {
    let mut ref_pos: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (j, w) in reference.iter().enumerate() {
        ref_pos.entry(w).or_default().push(j);
    }
    let mut hyp_count: BTreeMap<&str, usize> = BTreeMap::new();
    for w in hyp {
        *hyp_count.entry(w).or_insert(0) += 1;
    }
    let matches: usize = hyp_count
        .iter()
        .map(|(w, &c)| c.min(ref_pos.get(w).map_or(0, Vec::len)))
        .sum();
    if matches == 0 {
        return MeteorAlignment { matches: 0, chunks: 0 };
    }
    let skips = hyp_count
        .iter()
        .map(|(w, &c)| (*w, c.saturating_sub(ref_pos.get(w).map_or(0, Vec::len))))
        .collect();
    let mut search = ChunkSearch {
        hyp,
        candidates: hyp
            .iter()
            .map(|w| ref_pos.get(w.as_str()).cloned().unwrap_or_default())
            .collect(),
        skips,
        used: vec![false; reference.len()],
        best: matches + 1,
        budget: METEOR_SEARCH_BUDGET,
    };
    search.run(0, None, 0);
    MeteorAlignment {
        matches,
        chunks: search.best.min(matches),
    }
}

/// METEOR with exact matching only.
pub fn meteor_lite(hyp: &[String], reference: &[String]) -> f64 {
    let a = meteor_alignment(hyp, reference);
    if a.matches == 0 {
        return 0.0;
    }
    let m = a.matches as f64;
    let p = m / hyp.len() as f64;
    let r = m / reference.len() as f64;
    let f_mean = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r);
    let penalty = METEOR_GAMMA * (a.chunks as f64 / m).powf(METEOR_BETA);
    f_mean * (1.0 - penalty)
}

/// Clipped unigram precision and recall; 0 for an empty denominator.
pub fn unigram_pr(hyp: &[String], reference: &[String]) -> (f64, f64) {
    let m = clipped_matches(&ngram_counts(hyp, 1), &ngram_counts(reference, 1)) as f64;
    let ratio = |d: usize| if d == 0 { 0.0 } else { m / d as f64 };
    (ratio(hyp.len()), ratio(reference.len()))
}
