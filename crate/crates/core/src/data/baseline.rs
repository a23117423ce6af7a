use rand::seq::SliceRandom;

use super::QuestionGroup;

/// Ranking scores of the uninformed orderings for one group; higher ranks
/// first. Comment vectors are thread-major, as in [`QuestionGroup::comments`].
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineScores {
    /// Seeded random permutation of the comments, shared by A and C.
    pub random_comments: Vec<f64>,
    pub random_threads: Vec<f64>,
    /// Subtask A: earlier comments first within each thread.
    pub chronological: Vec<f64>,
    /// Subtask B: retrieval order.
    pub ir: Vec<f64>,
    /// Subtask C: retrieval order, then chronological.
    pub ir_chron: Vec<f64>,
}

fn random_scores(n: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut scores = vec![0.0; n];
    for (pos, &item) in order.iter().enumerate() {
        scores[item] = (n - pos) as f64;
    }
    scores
}

pub fn baseline_orderings(group: &QuestionGroup, seed: u64) -> BaselineScores {
    let mut rng = crate::rng(seed);
    let n = group.comment_count();
    let chronological = group
        .comments()
        .map(|(t, c)| (t.comments.len() + 1 - c.rank) as f64)
        .collect();
    let threads = group.threads.len();
    BaselineScores {
        random_comments: random_scores(n, &mut rng),
        random_threads: random_scores(threads, &mut rng),
        chronological,
        ir: group.threads.iter().map(|t| (threads + 1 - t.rank) as f64).collect(),
        ir_chron: (0..n).map(|k| (n - k) as f64).collect(),
    }
}
