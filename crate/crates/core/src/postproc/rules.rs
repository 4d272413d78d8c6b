use std::collections::BTreeMap;

use crate::emitters::SpanProbs;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RepetitionRuleConfig {
    pub t1: f64,
    pub t2: f64,
    pub class_name: String,
}

impl Default for RepetitionRuleConfig {
    fn default() -> Self {
        RepetitionRuleConfig {
            t1: 0.001,
            t2: 0.99,
            class_name: "Repetition".into(),
        }
    }
}

impl RepetitionRuleConfig {
    pub fn check(&self) -> Result<()> {
        if !(0.0 <= self.t1 && self.t1 <= self.t2 && self.t2 <= 1.0) {
            return Err(Error::Config(format!(
                "repetition thresholds need 0 <= t1 <= t2 <= 1, got t1={} t2={}",
                self.t1, self.t2
            )));
        }
        Ok(())
    }
}

/// Repetition-class score after seeing the span `k` times in its article.
///
/// `k >= 3`, or `k == 2` with `p >= t1`, gives 1; `k == 1` with `p <= t2`
/// gives 0; anything else keeps `p`.
pub fn repetition_score(p: f64, k: usize, t1: f64, t2: f64) -> f64 {
    if k >= 3 || (k == 2 && p >= t1) {
        1.0
    } else if k == 1 && p <= t2 {
        0.0
    } else {
        p
    }
}

/// Rewrites the repetition-class score; other classes are untouched and
/// nothing is renormalized.
pub fn apply_repetition(probs: &SpanProbs, k: usize, config: &RepetitionRuleConfig) -> Result<SpanProbs> {
    if k < 1 {
        return Err(Error::validation("occurrence count must be at least 1"));
    }
    let mut out = probs.clone();
    let p = probs.get(&config.class_name);
    out.set(&config.class_name, repetition_score(p, k, config.t1, config.t2));
    Ok(out)
}

/// Case-folded with whitespace runs collapsed and trimmed.
pub fn normalize_span_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// How many of `article_spans` (which should include the span itself)
/// match `span` after normalization.
pub fn count_occurrences<S: AsRef<str>>(span: &str, article_spans: &[S]) -> usize {
    let key = normalize_span_text(span);
    article_spans
        .iter()
        .filter(|s| normalize_span_text(s.as_ref()) == key)
        .count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GazetteerBoostConfig {
    pub delta: f64,
}

impl Default for GazetteerBoostConfig {
    fn default() -> Self {
        GazetteerBoostConfig { delta: 0.5 }
    }
}

impl GazetteerBoostConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("gazetteer delta must be >= 0, got {}", self.delta)));
        }
        Ok(())
    }
}

/// Adds `delta` to each class the gazetteer has seen for this span.
pub fn apply_gazetteer_boost(
    probs: &SpanProbs,
    lookup: Option<&BTreeMap<String, f64>>,
    config: &GazetteerBoostConfig,
) -> SpanProbs {
    let mut out = probs.clone();
    for (class, &g) in lookup.into_iter().flatten() {
        if g > 0.0 {
            out.set(class, probs.get(class) + config.delta);
        }
    }
    out
}

/// Labels for `n` copies of one span: the `n` best classes, best first.
pub fn assign_multilabel(n: usize, probs: &SpanProbs) -> Result<Vec<String>> {
    if n > probs.len() {
        return Err(Error::validation(format!(
            "{n} duplicate instances but only {} classes",
            probs.len()
        )));
    }
    Ok(probs.ranked().into_iter().take(n).map(String::from).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(p: f64, k: usize) -> f64 {
        let probs = SpanProbs::from_pairs(&[("Repetition", p), ("Other", 1.0 - p)]);
        let out = apply_repetition(&probs, k, &RepetitionRuleConfig::default()).unwrap();
        assert_eq!(out.get("Other"), 1.0 - p);
        out.get("Repetition")
    }

    #[test]
    fn repetition_branches() {
        assert_eq!(rep(0.10, 3), 1.0);
        assert_eq!(rep(0.50, 1), 0.0);
        assert_eq!(rep(0.995, 1), 0.995);
        assert_eq!(rep(0.0005, 2), 0.0005);
        assert_eq!(rep(0.001, 2), 1.0);
        assert_eq!(rep(0.99, 1), 0.0);
        let probs = SpanProbs::from_pairs(&[("A", 1.0)]);
        assert!(apply_repetition(&probs, 0, &RepetitionRuleConfig::default()).is_err());
        let out = apply_repetition(&probs, 4, &RepetitionRuleConfig::default()).unwrap();
        assert_eq!(out.get("Repetition"), 1.0);
    }

    #[test]
    fn thresholds_are_checked() {
        let bad = RepetitionRuleConfig {
            t1: 0.5,
            t2: 0.4,
            ..RepetitionRuleConfig::default()
        };
        assert!(bad.check().is_err());
        assert!(RepetitionRuleConfig::default().check().is_ok());
    }

    #[test]
    fn occurrences() {
        assert_eq!(count_occurrences("war", &["war"]), 1);
        assert_eq!(count_occurrences("a b", &["a b", "A  B", "a b ", "ab"]), 3);
        assert_eq!(count_occurrences("War ", &["war", "War "]), 2);
    }

    #[test]
    fn gazetteer_boost() {
        let probs = SpanProbs::from_pairs(&[("A", 0.3), ("B", 0.6), ("C", 0.1)]);
        let lookup: BTreeMap<String, f64> = [("A".to_string(), 0.7), ("B".to_string(), 0.3)].into();
        let out = apply_gazetteer_boost(&probs, Some(&lookup), &GazetteerBoostConfig::default());
        assert!((out.get("A") - 0.8).abs() < 1e-12);
        assert!((out.get("B") - 1.1).abs() < 1e-12);
        assert_eq!(out.get("C"), 0.1);
        assert_eq!(apply_gazetteer_boost(&probs, None, &GazetteerBoostConfig::default()), probs);
        let zero = GazetteerBoostConfig { delta: 0.0 };
        assert_eq!(apply_gazetteer_boost(&probs, Some(&lookup), &zero), probs);
    }

    #[test]
    fn multilabel() {
        let probs = SpanProbs::from_pairs(&[("A", 0.5), ("B", 0.3), ("C", 0.2)]);
        assert_eq!(assign_multilabel(1, &probs).unwrap(), ["A"]);
        assert_eq!(assign_multilabel(2, &probs).unwrap(), ["A", "B"]);
        assert_eq!(assign_multilabel(3, &probs).unwrap(), ["A", "B", "C"]);
        assert!(assign_multilabel(4, &probs).is_err());
    }
}
