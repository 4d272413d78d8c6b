use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Class scores for one span. Usually a probability distribution; after
/// post-processing rules it may hold unnormalized scores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpanProbs(pub BTreeMap<String, f64>);

impl SpanProbs {
    pub fn new(entries: impl IntoIterator<Item = (String, f64)>) -> Self {
        SpanProbs(entries.into_iter().collect())
    }

    pub fn from_pairs<S: AsRef<str>>(pairs: &[(S, f64)]) -> Self {
        SpanProbs(pairs.iter().map(|(c, p)| (c.as_ref().to_string(), *p)).collect())
    }

    /// Score of `class`, 0 when absent.
    pub fn get(&self, class: &str) -> f64 {
        self.0.get(class).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, class: &str, value: f64) {
        self.0.insert(class.to_string(), value);
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Highest-scoring class; ties go to the lexicographically first class.
    pub fn argmax(&self) -> Option<&str> {
        self.ranked().into_iter().next()
    }

    /// All classes by descending score, ties in lexicographic order.
    pub fn ranked(&self) -> Vec<&str> {
        let mut classes: Vec<(&str, f64)> = self.0.iter().map(|(c, &p)| (c.as_str(), p)).collect();
        classes.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        classes.into_iter().map(|(c, _)| c).collect()
    }

    pub fn sum(&self) -> f64 {
        self.0.values().sum()
    }

    /// Finite, non-negative and summing to one within `tolerance`.
    pub fn is_distribution(&self, tolerance: f64) -> bool {
        !self.0.is_empty()
            && self.0.values().all(|p| p.is_finite() && *p >= 0.0)
            && (self.sum() - 1.0).abs() <= tolerance
    }
}
