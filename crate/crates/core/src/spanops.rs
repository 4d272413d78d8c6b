//! Interval algebra over char spans: ensemble union-merging, overlap and
//! strict containment.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub class: Option<String>,
    pub score: Option<f64>,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span {
            start,
            end,
            class: None,
            score: None,
        }
    }

    pub fn with_class(start: usize, end: usize, class: impl Into<String>) -> Self {
        Span {
            class: Some(class.into()),
            ..Span::new(start, end)
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

/// Spans kept sorted by `(start, end)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpanSet {
    spans: Vec<Span>,
}

impl SpanSet {
    pub fn new(mut spans: Vec<Span>) -> Result<Self> {
        if let Some(s) = spans.iter().find(|s| s.is_empty()) {
            return Err(Error::validation(format!("empty span [{}, {})", s.start, s.end)));
        }
        spans.sort_by(|a, b| (a.start, a.end).cmp(&(b.start, b.end)));
        Ok(SpanSet { spans })
    }

    pub fn from_ranges(ranges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        SpanSet::new(ranges.into_iter().map(|(s, e)| Span::new(s, e)).collect())
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn ranges(&self) -> Vec<(usize, usize)> {
        self.spans.iter().map(|s| (s.start, s.end)).collect()
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn into_spans(self) -> Vec<Span> {
        self.spans
    }
}

/// Unions every group of spans connected by a shared char. Spans that only
/// touch stay apart. A group mixing classes is an error; a merged span keeps
/// the highest score in its group.
pub fn merge_ensemble(sets: &[SpanSet]) -> Result<SpanSet> {
    if sets.is_empty() {
        return Err(Error::validation("merge needs at least one span set"));
    }
    let mut all: Vec<&Span> = sets.iter().flat_map(|s| s.spans.iter()).collect();
    all.sort_by(|a, b| (a.start, a.end).cmp(&(b.start, b.end)));

    let mut merged: Vec<Span> = Vec::new();
    for span in all {
        match merged.last_mut() {
            Some(cur) if span.start < cur.end => {
                if cur.class != span.class {
                    return Err(Error::validation(format!(
                        "cannot merge overlapping spans of classes {:?} and {:?} at [{}, {})",
                        cur.class, span.class, span.start, span.end
                    )));
                }
                cur.end = cur.end.max(span.end);
                cur.score = match (cur.score, span.score) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    (a, b) => a.or(b),
                };
            }
            _ => merged.push(span.clone()),
        }
    }
    Ok(SpanSet { spans: merged })
}

/// Number of shared chars.
pub fn overlap(a: (usize, usize), b: (usize, usize)) -> usize {
    a.1.min(b.1).saturating_sub(a.0.max(b.0))
}

/// Strict containment: `inner` lies within `outer` and differs from it.
pub fn contains(outer: (usize, usize), inner: (usize, usize)) -> bool {
    outer.0 <= inner.0 && inner.1 <= outer.1 && inner != outer
}

/// All `(inner, outer)` index pairs with strict containment, ordered by
/// inner index then outer index.
pub fn find_nested_pairs(set: &SpanSet) -> Vec<(usize, usize)> {
    let ranges = set.ranges();
    let mut pairs = Vec::new();
    for (i, &inner) in ranges.iter().enumerate() {
        for (o, &outer) in ranges.iter().enumerate() {
            if i != o && contains(outer, inner) {
                pairs.push((i, o));
            }
        }
    }
    pairs
}
