//! Rules applied to model output: span boundary repair, the repetition
//! rule, gazetteer boosting, nesting resolution and multi-label assignment.

mod boundary;
mod nesting;
mod rules;

pub use boundary::{fix_boundaries, fix_in_chars, PunctuationRuleConfig};
pub use nesting::{
    resolve_nested_spans, resolve_nesting_strategy1, resolve_nesting_strategy2, NestingChoice, NestingModel,
    NestingResolution, NestingStrategy,
};
pub use rules::{
    apply_gazetteer_boost, apply_repetition, assign_multilabel, count_occurrences, normalize_span_text,
    repetition_score, GazetteerBoostConfig, RepetitionRuleConfig,
};
