use std::collections::BTreeMap;

use crate::corpus::tokenize_str;
use crate::error::{Error, Result};
use crate::gazetteer::stem;

/// FNV-1a, 64 bit.
pub fn feature_id(name: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    name.bytes().fold(OFFSET, |h, b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// Sparse hashed features.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector(pub BTreeMap<u64, f64>);

impl FeatureVector {
    pub fn new() -> Self {
        FeatureVector::default()
    }

    /// Adds `value` to feature `name`.
    pub fn add(&mut self, name: &str, value: f64) {
        *self.0.entry(feature_id(name)).or_default() += value;
    }

    pub fn get(&self, name: &str) -> f64 {
        self.0.get(&feature_id(name)).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthBinning {
    edges: Vec<usize>,
}

impl Default for LengthBinning {
    fn default() -> Self {
        LengthBinning {
            edges: vec![1, 2, 3, 5, 8, 13, 21, 34, 55, 89],
        }
    }
}

impl LengthBinning {
    pub fn new(edges: Vec<usize>) -> Result<Self> {
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation(format!("bin edges must be strictly ascending: {edges:?}")));
        }
        Ok(LengthBinning { edges })
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    /// Number of edges at or below `len`; the last bin is open-ended.
    pub fn bin(&self, len: usize) -> usize {
        self.edges.partition_point(|&e| e <= len)
    }

    pub fn num_bins(&self) -> usize {
        self.edges.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub binning: LengthBinning,
    /// Raw lengths and the length bin.
    pub length: bool,
    pub context: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            binning: LengthBinning::default(),
            length: true,
            context: true,
        }
    }
}

const QUOTES: &[char] = &['"', '“', '”', '«', '»'];

fn stems(text: &str) -> impl Iterator<Item = String> {
    tokenize_str(text)
        .into_iter()
        .filter(|t| t.text.chars().all(char::is_alphanumeric))
        .map(|t| stem(&t.text))
}

pub fn featurize_span(span_text: &str, context_sentence: &str, binning: &LengthBinning) -> FeatureVector {
    let config = FeatureConfig {
        binning: binning.clone(),
        ..FeatureConfig::default()
    };
    featurize_with(span_text, context_sentence, &config)
}

pub fn featurize_with(span_text: &str, context_sentence: &str, config: &FeatureConfig) -> FeatureVector {
    let mut fv = FeatureVector::new();
    let count = |pred: &dyn Fn(char) -> bool| span_text.chars().filter(|&c| pred(c)).count() as f64;
    if config.length {
        let len = span_text.chars().count();
        fv.add("len_chars", len as f64);
        fv.add("len_tokens", tokenize_str(span_text).len() as f64);
        fv.add(&format!("len_bin={}", config.binning.bin(len)), 1.0);
    }
    fv.add("quest_count", count(&|c| c == '?'));
    fv.add("excl_count", count(&|c| c == '!'));
    fv.add("quote_count", count(&|c| QUOTES.contains(&c)));
    for s in stems(span_text) {
        fv.add(&format!("span_stem={s}"), 1.0);
    }
    if config.context {
        for s in stems(context_sentence) {
            fv.add(&format!("ctx_stem={s}"), 1.0);
        }
    }
    fv.0.retain(|_, v| *v != 0.0);
    fv
}

/// Char range of the sentence(s) containing `[start, end)`. Sentences end
/// after `.`, `!` or `?` followed by whitespace, and at newlines.
pub fn context_range(text: &[char], start: usize, end: usize) -> (usize, usize) {
    let boundary_after = |i: usize| -> bool {
        match text[i] {
            '\n' => true,
            '.' | '!' | '?' => text.get(i + 1).is_some_and(|c| c.is_whitespace()),
            _ => false,
        }
    };
    let mut s = start.min(text.len());
    while s > 0 && !boundary_after(s - 1) {
        s -= 1;
    }
    while s < start && text[s].is_whitespace() {
        s += 1;
    }
    let mut e = end.max(s).min(text.len());
    if e > s && boundary_after(e - 1) {
        return (s, e);
    }
    while e < text.len() && !boundary_after(e) {
        e += 1;
    }
    (s, (e + 1).min(text.len()))
}
