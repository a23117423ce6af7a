//! Text features: tokenization, averaged word embeddings, MT-metric
//! similarities, node and meta features, and min-max scaling.

mod embed;
mod mt;
mod node;
mod scale;
mod text;

pub use embed::{avg_embedding, cosine, AveragedText, EmbeddingTable};
pub use mt::{
    bleu_with_components, meteor_alignment, meteor_lite, nist, nist_length_penalty, ter, unigram_pr, BleuComponents,
    MeteorAlignment, NistInfo, METEOR_ALPHA, METEOR_BETA, METEOR_GAMMA, TER_MAX_BLOCK, TER_MAX_SHIFT_DISTANCE,
};
pub use node::{
    node_and_meta_features, oov_count, qc_ratio_features, CommentContext, NodeFeatures, NODE_FEATURE_NAMES,
    QC_RATIO_NAMES,
};
pub use scale::MinMaxScaler;
pub use text::{is_word, pos_counts, pos_proxy, sentences, tokenize, PosCounts, PosProxy};
