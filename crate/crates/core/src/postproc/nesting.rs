//! Joint labelling of a span nested inside another so that the pair of
//! classes is one seen nested in training.

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::Annotation;
use crate::crf::log_sum_exp;
use crate::emitters::SpanProbs;
use crate::error::{Error, Result};
use crate::spanops::contains;

/// How often a span of class `x` sat strictly inside a span of class `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct NestingModel {
    classes: Vec<String>,
    /// `counts[x][y]`, indexed like `classes`.
    counts: Vec<Vec<u64>>,
    temperature: f64,
}

impl NestingModel {
    /// Classes are stored sorted; `counts` is permuted along with them.
    pub fn new(classes: Vec<String>, counts: Vec<Vec<u64>>, temperature: f64) -> Result<Self> {
        let c = classes.len();
        if c == 0 {
            return Err(Error::validation("nesting model needs at least one class"));
        }
        if counts.len() != c || counts.iter().any(|row| row.len() != c) {
            return Err(Error::validation(format!("co-occurrence matrix must be {c} x {c}")));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Config(format!("nesting temperature must be > 0, got {temperature}")));
        }
        let mut order: Vec<usize> = (0..c).collect();
        order.sort_by(|&a, &b| classes[a].cmp(&classes[b]));
        if order.windows(2).any(|w| classes[w[0]] == classes[w[1]]) {
            return Err(Error::validation("duplicate class in nesting model"));
        }
        Ok(NestingModel {
            classes: order.iter().map(|&i| classes[i].clone()).collect(),
            counts: order.iter().map(|&x| order.iter().map(|&y| counts[x][y]).collect()).collect(),
            temperature,
        })
    }

    /// Counts strict containments between annotations of the same document.
    /// `classes` defaults to the labels seen.
    pub fn from_annotations(annotations: &[Annotation], classes: Option<Vec<String>>, temperature: f64) -> Result<Self> {
        let classes = classes.unwrap_or_else(|| {
            annotations
                .iter()
                .map(|a| a.label.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        });
        let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let mut counts = vec![vec![0u64; classes.len()]; classes.len()];
        let mut by_doc: BTreeMap<&str, Vec<&Annotation>> = BTreeMap::new();
        for a in annotations {
            by_doc.entry(&a.doc_id).or_default().push(a);
        }
        for anns in by_doc.values() {
            for inner in anns {
                for outer in anns {
                    if !contains((outer.start, outer.end), (inner.start, inner.end)) {
                        continue;
                    }
                    if let (Some(&x), Some(&y)) = (index.get(inner.label.as_str()), index.get(outer.label.as_str())) {
                        counts[x][y] += 1;
                    }
                }
            }
        }
        NestingModel::new(classes, counts, temperature)
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn with_temperature(&self, temperature: f64) -> Result<Self> {
        NestingModel::new(self.classes.clone(), self.counts.clone(), temperature)
    }

    fn index(&self, class: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(class)).ok()
    }

    pub fn count(&self, inner: &str, outer: &str) -> u64 {
        match (self.index(inner), self.index(outer)) {
            (Some(x), Some(y)) => self.counts[x][y],
            _ => 0,
        }
    }

    /// Pairs `(inner, outer)` seen at least once.
    pub fn allowed_pairs(&self) -> BTreeSet<(String, String)> {
        let mut out = BTreeSet::new();
        for (x, row) in self.counts.iter().enumerate() {
            for (y, &n) in row.iter().enumerate() {
                if n > 0 {
                    out.insert((self.classes[x].clone(), self.classes[y].clone()));
                }
            }
        }
        out
    }

    /// `log p(A[x][y])`: log-softmax of `count / t` over all cells.
    pub fn pair_log_probs(&self) -> Vec<Vec<f64>> {
        let z: Vec<f64> = self.counts.iter().flatten().map(|&n| n as f64 / self.temperature).collect();
        let lse = log_sum_exp(&z);
        let c = self.classes.len();
        z.chunks(c).map(|row| row.iter().map(|v| v - lse).collect()).collect()
    }

    pub fn pair_probability(&self, inner: &str, outer: &str) -> f64 {
        match (self.index(inner), self.index(outer)) {
            (Some(x), Some(y)) => self.pair_log_probs()[x][y].exp(),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NestingChoice {
    pub inner: String,
    pub outer: String,
    /// False when no admissible pair existed and the labels are plain
    /// independent argmaxes.
    pub constrained: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NestingStrategy {
    /// Best product among pairs seen nested in training.
    AllowedPairs,
    /// Product weighted by the tempered co-occurrence softmax.
    Cooccurrence,
}

fn ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Best candidate by `log p_in(x) + log p_out(y) + weight`; earlier
/// candidates win ties.
fn best_pair<'a>(
    inner: &SpanProbs,
    outer: &SpanProbs,
    candidates: impl IntoIterator<Item = (&'a str, &'a str, f64)>,
) -> Option<(String, String)> {
    let mut best: Option<(f64, &str, &str)> = None;
    for (x, y, w) in candidates {
        let score = ln(inner.get(x)) + ln(outer.get(y)) + w;
        if best.is_none_or(|(b, _, _)| score > b) {
            best = Some((score, x, y));
        }
    }
    best.map(|(_, x, y)| (x.to_string(), y.to_string()))
}

fn independent(inner: &SpanProbs, outer: &SpanProbs) -> Result<NestingChoice> {
    match (inner.argmax(), outer.argmax()) {
        (Some(x), Some(y)) => Ok(NestingChoice {
            inner: x.to_string(),
            outer: y.to_string(),
            constrained: false,
        }),
        _ => Err(Error::validation("nesting resolution needs non-empty class scores")),
    }
}

pub fn resolve_nesting_strategy1(
    inner: &SpanProbs,
    outer: &SpanProbs,
    allowed: &BTreeSet<(String, String)>,
) -> Result<NestingChoice> {
    match best_pair(inner, outer, allowed.iter().map(|(x, y)| (x.as_str(), y.as_str(), 0.0))) {
        Some((inner, outer)) => Ok(NestingChoice {
            inner,
            outer,
            constrained: true,
        }),
        None => independent(inner, outer),
    }
}

pub fn resolve_nesting_strategy2(inner: &SpanProbs, outer: &SpanProbs, model: &NestingModel) -> Result<NestingChoice> {
    let log_pa = model.pair_log_probs();
    let candidates = model.classes.iter().enumerate().flat_map(|(x, cx)| {
        let log_pa = &log_pa;
        model
            .classes
            .iter()
            .enumerate()
            .map(move |(y, cy)| (cx.as_str(), cy.as_str(), log_pa[x][y]))
    });
    resolve_candidates(inner, outer, candidates)
}

fn resolve_candidates<'a>(
    inner: &SpanProbs,
    outer: &SpanProbs,
    candidates: impl IntoIterator<Item = (&'a str, &'a str, f64)>,
) -> Result<NestingChoice> {
    let candidates: Vec<_> = candidates.into_iter().collect();
    let any_finite = candidates
        .iter()
        .any(|&(x, y, w)| (ln(inner.get(x)) + ln(outer.get(y)) + w).is_finite());
    match best_pair(inner, outer, candidates) {
        Some((x, y)) if any_finite => Ok(NestingChoice {
            inner: x,
            outer: y,
            constrained: true,
        }),
        _ => independent(inner, outer),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestingResolution {
    /// Label per input span; `None` for spans in no nested pair.
    pub labels: Vec<Option<String>>,
    /// Pairs that had no admissible labelling.
    pub fallbacks: usize,
}

/// Resolves nested spans of one document. Each span is paired with its
/// immediate parents (the shortest spans strictly containing it), and pairs
/// are handled innermost first. A label fixed by an earlier pair stays fixed.
pub fn resolve_nested_spans(
    ranges: &[(usize, usize)],
    probs: &[SpanProbs],
    model: &NestingModel,
    strategy: NestingStrategy,
) -> Result<NestingResolution> {
    if ranges.len() != probs.len() {
        return Err(Error::validation("one score vector per span required"));
    }
    let len = |i: usize| ranges[i].1 - ranges[i].0;
    let mut pairs = Vec::new();
    for (i, &inner) in ranges.iter().enumerate() {
        let parents: Vec<usize> = (0..ranges.len()).filter(|&o| contains(ranges[o], inner)).collect();
        if let Some(shortest) = parents.iter().map(|&o| len(o)).min() {
            pairs.extend(parents.into_iter().filter(|&o| len(o) == shortest).map(|o| (i, o)));
        }
    }
    pairs.sort_by_key(|&(i, o)| (len(i), len(o), ranges[i].0, ranges[o].0, i, o));

    let allowed = model.allowed_pairs();
    let log_pa = model.pair_log_probs();
    let mut labels: Vec<Option<String>> = vec![None; ranges.len()];
    let mut fallbacks = 0;
    for (i, o) in pairs {
        let pinned_ok = |idx: usize, class: &str| labels[idx].as_deref().is_none_or(|l| l == class);
        let candidates: Vec<(&str, &str, f64)> = match strategy {
            NestingStrategy::AllowedPairs => allowed
                .iter()
                .filter(|(x, y)| pinned_ok(i, x) && pinned_ok(o, y))
                .map(|(x, y)| (x.as_str(), y.as_str(), 0.0))
                .collect(),
            NestingStrategy::Cooccurrence => {
                let mut c = Vec::new();
                for (x, cx) in model.classes.iter().enumerate() {
                    for (y, cy) in model.classes.iter().enumerate() {
                        if pinned_ok(i, cx) && pinned_ok(o, cy) {
                            c.push((cx.as_str(), cy.as_str(), log_pa[x][y]));
                        }
                    }
                }
                c
            }
        };
        let pin = |idx: usize| match &labels[idx] {
            Some(l) => SpanProbs::from_pairs(&[(l.as_str(), 1.0)]),
            None => probs[idx].clone(),
        };
        let (pi, po) = (pin(i), pin(o));
        let choice = match strategy {
            NestingStrategy::AllowedPairs => match best_pair(&pi, &po, candidates) {
                Some((inner, outer)) => NestingChoice {
                    inner,
                    outer,
                    constrained: true,
                },
                None => independent(&pi, &po)?,
            },
            NestingStrategy::Cooccurrence => resolve_candidates(&pi, &po, candidates)?,
        };
        if !choice.constrained {
            fallbacks += 1;
        }
        labels[i] = Some(choice.inner);
        labels[o] = Some(choice.outer);
    }
    Ok(NestingResolution { labels, fallbacks })
}
