//! Sources of scores for the structured layer: emission matrices and span
//! class probabilities, either read from interchange files or produced by
//! feature-based softmax baselines.

mod features;
mod io;
mod probs;
mod softmax;
mod token;

pub use features::{context_range, feature_id, featurize_span, featurize_with, FeatureConfig, FeatureVector, LengthBinning};
pub use io::{
    format_emissions, format_span_probs, load_emissions, load_span_probs, parse_emissions, parse_span_probs,
    save_emissions, save_span_probs, SpanProbRecord,
};
pub use probs::SpanProbs;
pub use softmax::{train_softmax, SoftmaxConfig, SoftmaxGradient, SoftmaxModel};
pub use token::{gold_ranges, gold_tag_sequence, token_features, TokenEmitter};
