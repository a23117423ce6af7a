//! Per-comment counts, question/comment ratios and rank-based meta features.
//!
//! Pattern rules (all case-insensitive):
//!
//! | slot | pattern |
//! |---|---|
//! | url | `https?://` or `www.` followed by non-space characters |
//! | email | `local@domain.tld` |
//! | phone | an optional `+` and 8 or more digits, possibly separated by spaces or dashes |
//! | image | a word ending in `.jpg`, `.jpeg`, `.png`, `.gif` or `.bmp` |
//! | positive smiley | `:)` `:-)` `:D` `;)` `=)` `:p` `^^` `^_^` and similar |
//! | negative smiley | `:(` `:-(` `:'(` `:/` `=(` and similar |
//! | thank | a word starting with `thank`, or `thx` |
//!
//! Smileys are matched after URLs and emails are removed, so `http://`
//! does not count as `:/`.

use std::sync::OnceLock;

use regex::Regex;

use super::embed::EmbeddingTable;
use super::text::{is_word, pos_counts, sentences, tokenize, PosCounts};

struct Patterns {
    url: Regex,
    email: Regex,
    phone: Regex,
    image: Regex,
    smiley_pos: Regex,
    smiley_neg: Regex,
    thank: Regex,
    exclaim: Regex,
    question: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        url: Regex::new(r"(?i)\b(?:https?://|www\.)[^\s]+").unwrap(),
        email: Regex::new(r"(?i)\b[a-z0-9._%+-]+@[a-z0-9-]+(?:\.[a-z0-9-]+)*\.[a-z]{2,}\b").unwrap(),
        phone: Regex::new(r"\+?\d(?:[ -]?\d){7,}").unwrap(),
        image: Regex::new(r"(?i)\b[\w-]+\.(?:jpe?g|png|gif|bmp)\b").unwrap(),
        smiley_pos: Regex::new(r"(?i)(?:[:;=]-?[)\]dp]|\^_?\^)").unwrap(),
        smiley_neg: Regex::new(r"(?:[:;=]'?-?[(\[/\\])").unwrap(),
        thank: Regex::new(r"(?i)\b(?:thank\w*|thx)\b").unwrap(),
        exclaim: Regex::new(r"!+").unwrap(),
        question: Regex::new(r"\?+").unwrap(),
    })
}

/// Word tokens missing from `table`; 0 without a table.
pub fn oov_count(tokens: &[String], table: Option<&EmbeddingTable>) -> usize {
    table.map_or(0, |t| tokens.iter().filter(|w| is_word(w) && !t.contains(w)).count())
}

struct TextCounts {
    sentences: usize,
    tokens: usize,
    pos: PosCounts,
    oov: usize,
}

fn text_counts(text: &str, table: Option<&EmbeddingTable>) -> TextCounts {
    let tokens = tokenize(text);
    TextCounts {
        sentences: sentences(text).len(),
        tokens: tokens.len(),
        pos: pos_counts(&tokens),
        oov: oov_count(&tokens, table),
    }
}

pub const QC_RATIO_NAMES: [&str; 8] = [
    "ratio_sentences",
    "ratio_tokens",
    "ratio_nouns_proxy",
    "ratio_verbs_proxy",
    "ratio_adjectives_proxy",
    "ratio_adverbs_proxy",
    "ratio_pronouns_proxy",
    "ratio_oov",
];

/// Question-to-comment count ratios in [`QC_RATIO_NAMES`] order; a zero
/// comment count gives 0.
pub fn qc_ratio_features(question: &str, comment: &str, table: Option<&EmbeddingTable>) -> Vec<f64> {
    let q = text_counts(question, table);
    let c = text_counts(comment, table);
    let pairs = [
        (q.sentences, c.sentences),
        (q.tokens, c.tokens),
        (q.pos.nouns, c.pos.nouns),
        (q.pos.verbs, c.pos.verbs),
        (q.pos.adjectives, c.pos.adjectives),
        (q.pos.adverbs, c.pos.adverbs),
        (q.pos.pronouns, c.pos.pronouns),
        (q.oov, c.oov),
    ];
    pairs
        .iter()
        .map(|&(a, b)| if b == 0 { 0.0 } else { a as f64 / b as f64 })
        .collect()
}

/// Where a comment sits and who wrote it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommentContext<'a> {
    /// 1-based position of the comment in its thread.
    pub m: usize,
    /// 1-based rank of the thread among the related questions.
    pub i: usize,
    pub comment_author: Option<&'a str>,
    pub thread_author: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    pub nouns: usize,
    pub verbs: usize,
    pub adjectives: usize,
    pub adverbs: usize,
    pub pronouns: usize,
    pub urls: usize,
    pub emails: usize,
    pub phones: usize,
    pub images: usize,
    pub tokens: usize,
    pub sentences: usize,
    pub positive_smileys: usize,
    pub negative_smileys: usize,
    pub exclamation_runs: usize,
    pub triple_exclamations: usize,
    pub question_runs: usize,
    pub triple_questions: usize,
    pub interrogative_sentences: usize,
    pub thank_mentions: usize,
    pub oov: usize,
    pub avg_token_length: f64,
    pub type_token_ratio: f64,
    pub same_author: bool,
    pub inv_m: f64,
    pub inv_global_rank: f64,
    pub inv_i: f64,
}

pub const NODE_FEATURE_NAMES: [&str; 26] = [
    "nouns_proxy",
    "verbs_proxy",
    "adjectives_proxy",
    "adverbs_proxy",
    "pronouns_proxy",
    "urls",
    "emails",
    "phones",
    "images",
    "tokens",
    "sentences",
    "positive_smileys",
    "negative_smileys",
    "exclamation_runs",
    "triple_exclamations",
    "question_runs",
    "triple_questions",
    "interrogative_sentences",
    "thank_mentions",
    "oov",
    "avg_token_length",
    "type_token_ratio",
    "meta_same_author",
    "meta_inv_m",
    "meta_inv_global_rank",
    "meta_inv_i",
];

impl NodeFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        let counts = [
            self.nouns,
            self.verbs,
            self.adjectives,
            self.adverbs,
            self.pronouns,
            self.urls,
            self.emails,
            self.phones,
            self.images,
            self.tokens,
            self.sentences,
            self.positive_smileys,
            self.negative_smileys,
            self.exclamation_runs,
            self.triple_exclamations,
            self.question_runs,
            self.triple_questions,
            self.interrogative_sentences,
            self.thank_mentions,
            self.oov,
        ];
        let mut v: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        v.extend([
            self.avg_token_length,
            self.type_token_ratio,
            f64::from(u8::from(self.same_author)),
            self.inv_m,
            self.inv_global_rank,
            self.inv_i,
        ]);
        v
    }
}

/// Comment counts plus meta slots `1/m`, `1/(m + 10(i - 1))` and `1/i`.
pub fn node_and_meta_features(comment: &str, ctx: CommentContext<'_>, table: Option<&EmbeddingTable>) -> NodeFeatures {
    assert!(ctx.m >= 1 && ctx.i >= 1, "positions are 1-based");
    let p = patterns();
    let tokens = tokenize(comment);
    let words: Vec<&String> = tokens.iter().filter(|t| is_word(t)).collect();
    let pos = pos_counts(&tokens);
    let stripped = p.email.replace_all(&p.url.replace_all(comment, " "), " ").into_owned();
    let runs = |re: &Regex, min: usize| re.find_iter(comment).filter(|m| m.len() >= min).count();
    let sents = sentences(comment);
    let types: std::collections::BTreeSet<&String> = words.iter().copied().collect();
    NodeFeatures {
        nouns: pos.nouns,
        verbs: pos.verbs,
        adjectives: pos.adjectives,
        adverbs: pos.adverbs,
        pronouns: pos.pronouns,
        urls: p.url.find_iter(comment).count(),
        emails: p.email.find_iter(comment).count(),
        phones: p.phone.find_iter(&stripped).count(),
        images: p.image.find_iter(comment).count(),
        tokens: tokens.len(),
        sentences: sents.len(),
        positive_smileys: p.smiley_pos.find_iter(&stripped).count(),
        negative_smileys: p.smiley_neg.find_iter(&stripped).count(),
        exclamation_runs: runs(&p.exclaim, 1),
        triple_exclamations: runs(&p.exclaim, 3),
        question_runs: runs(&p.question, 1),
        triple_questions: runs(&p.question, 3),
        interrogative_sentences: sents.iter().filter(|s| s.1 == Some('?')).count(),
        thank_mentions: p.thank.find_iter(comment).count(),
        oov: oov_count(&tokens, table),
        avg_token_length: if words.is_empty() {
            0.0
        } else {
            words.iter().map(|w| w.chars().count()).sum::<usize>() as f64 / words.len() as f64
        },
        type_token_ratio: if words.is_empty() {
            1.0
        } else {
            types.len() as f64 / words.len() as f64
        },
        same_author: matches!((ctx.comment_author, ctx.thread_author), (Some(a), Some(b)) if a == b),
        inv_m: 1.0 / ctx.m as f64,
        inv_global_rank: 1.0 / (ctx.m + 10 * (ctx.i - 1)) as f64,
        inv_i: 1.0 / ctx.i as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx(m: usize, i: usize) -> CommentContext<'static> {
        CommentContext {
            m,
            i,
            comment_author: None,
            thread_author: None,
        }
    }

    #[test]
    fn meta_slots() {
        let f = node_and_meta_features("ok", ctx(2, 3), None);
        assert_eq!(f.inv_m, 0.5);
        assert!((f.inv_global_rank - 1.0 / 22.0).abs() < 1e-15);
        assert!((f.inv_i - 1.0 / 3.0).abs() < 1e-15);
        let f = node_and_meta_features("ok", ctx(1, 1), None);
        assert_eq!((f.inv_m, f.inv_global_rank, f.inv_i), (1.0, 1.0, 1.0));
    }

    #[test]
    fn pattern_counts() {
        let f = node_and_meta_features("Thanks!!! see http://x.com", ctx(1, 1), None);
        assert_eq!(f.thank_mentions, 1);
        assert_eq!(f.urls, 1);
        assert_eq!(f.triple_exclamations, 1);
        assert_eq!(f.negative_smileys, 0);
        let f = node_and_meta_features(
            "Mail me at a.b@mail.com or call +974 5555 1234 :) :( pic.jpg Why?? really???",
            ctx(1, 1),
            None,
        );
        assert_eq!(f.emails, 1);
        assert_eq!(f.phones, 1);
        assert_eq!(f.positive_smileys, 1);
        assert_eq!(f.negative_smileys, 1);
        assert_eq!(f.images, 1);
        assert_eq!(f.question_runs, 2);
        assert_eq!(f.triple_questions, 1);
        assert_eq!(f.interrogative_sentences, 2);
    }

    #[test]
    fn author_flag_and_ratios() {
        let c = CommentContext {
            comment_author: Some("u1"),
            thread_author: Some("u1"),
            ..ctx(1, 1)
        };
        assert!(node_and_meta_features("x", c, None).same_author);
        assert!(!node_and_meta_features("x", ctx(1, 1), None).same_author);
        let f = node_and_meta_features("", ctx(1, 1), None);
        assert_eq!(f.type_token_ratio, 1.0);
        let f = node_and_meta_features("a a b b", ctx(1, 1), None);
        assert_eq!(f.type_token_ratio, 0.5);
        assert_eq!(f.to_vec().len(), NODE_FEATURE_NAMES.len());
    }

    #[test]
    fn qc_ratio_examples() {
        let q = "How can I extend my old visa quickly? It expires soon.";
        let same = qc_ratio_features(q, q, None);
        for (k, v) in same.iter().enumerate() {
            assert!(*v == 1.0 || (k == 7 && *v == 0.0), "slot {k} = {v}");
        }
        assert!(qc_ratio_features(q, "", None).iter().all(|&v| v == 0.0));
        let r = qc_ratio_features("a b c d e f g h i j", "a b c d e", None);
        assert_eq!(r[1], 2.0);
        let table = EmbeddingTable::parse("t", "visa 1\n", "mem").unwrap();
        let r = qc_ratio_features("visa foo bar", "baz visa", Some(&table));
        assert_eq!(r[7], 2.0);
        assert_eq!(r.len(), QC_RATIO_NAMES.len());
    }

    proptest! {
        #[test]
        fn counts_and_ranges(text in "\\PC{0,80}", m in 1usize..30, i in 1usize..11) {
            let f = node_and_meta_features(&text, ctx(m, i), None);
            for r in [f.inv_m, f.inv_global_rank, f.inv_i] {
                prop_assert!(r > 0.0 && r <= 1.0);
            }
            prop_assert!(f.type_token_ratio > 0.0 && f.type_token_ratio <= 1.0);
            prop_assert!(f.to_vec().iter().all(|v| v.is_finite() && *v >= 0.0));
            prop_assert!(f.triple_exclamations <= f.exclamation_runs);
        }
    }
}
