//! Scorers: proportional-overlap span F1, micro-averaged F1 for labels and
//! binary token F1.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::spanops::{overlap, SpanSet};
use crate::tagcodec::TagSequence;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpanScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_pred: usize,
    pub n_gold: usize,
}

pub fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl SpanScore {
    fn from_sums(p_sum: f64, r_sum: f64, n_pred: usize, n_gold: usize) -> Self {
        if n_pred == 0 && n_gold == 0 {
            return SpanScore {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
                n_pred,
                n_gold,
            };
        }
        let precision = if n_pred == 0 { 0.0 } else { p_sum / n_pred as f64 };
        let recall = if n_gold == 0 { 0.0 } else { r_sum / n_gold as f64 };
        SpanScore {
            precision,
            recall,
            f1: harmonic(precision, recall),
            n_pred,
            n_gold,
        }
    }
}

/// Overlap credit of one document: `(sum |s^t|/|s|, sum |s^t|/|t|)` over
/// every predicted `s` and gold `t` whose labels agree (or either has none).
fn overlap_sums(predicted: &SpanSet, gold: &SpanSet) -> (f64, f64) {
    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    for s in predicted.spans() {
        for t in gold.spans() {
            if let (Some(a), Some(b)) = (&s.class, &t.class) {
                if a != b {
                    continue;
                }
            }
            let shared = overlap((s.start, s.end), (t.start, t.end)) as f64;
            if shared > 0.0 {
                p_sum += shared / s.len() as f64;
                r_sum += shared / t.len() as f64;
            }
        }
    }
    (p_sum, r_sum)
}

pub fn span_f1(predicted: &SpanSet, gold: &SpanSet) -> SpanScore {
    let (p, r) = overlap_sums(predicted, gold);
    SpanScore::from_sums(p, r, predicted.len(), gold.len())
}

/// Corpus-level span F1: credit and counts pooled over documents. A
/// document missing from one side counts as having no spans there.
pub fn span_f1_corpus(predicted: &BTreeMap<String, SpanSet>, gold: &BTreeMap<String, SpanSet>) -> SpanScore {
    let empty = SpanSet::default();
    let (mut p_sum, mut r_sum, mut n_pred, mut n_gold) = (0.0, 0.0, 0, 0);
    let docs: std::collections::BTreeSet<&String> = predicted.keys().chain(gold.keys()).collect();
    for doc in docs {
        let p = predicted.get(doc).unwrap_or(&empty);
        let g = gold.get(doc).unwrap_or(&empty);
        let (a, b) = overlap_sums(p, g);
        p_sum += a;
        r_sum += b;
        n_pred += p.len();
        n_gold += g.len();
    }
    SpanScore::from_sums(p_sum, r_sum, n_pred, n_gold)
}

/// Micro F1 over aligned single-label lists; equal to accuracy.
pub fn micro_f1<S: AsRef<str>>(predicted: &[S], gold: &[S]) -> Result<f64> {
    if predicted.len() != gold.len() {
        return Err(Error::validation(format!(
            "{} predictions for {} gold labels",
            predicted.len(),
            gold.len()
        )));
    }
    let pred: Vec<Vec<&str>> = predicted.iter().map(|p| vec![p.as_ref()]).collect();
    let gold: Vec<Vec<&str>> = gold.iter().map(|g| vec![g.as_ref()]).collect();
    Ok(label_scores(&pred, &gold)?.micro.f1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelScores {
    pub micro: SpanScore,
    pub per_class: BTreeMap<String, SpanScore>,
}

/// Pooled counts over instances that may carry several labels each: true
/// positives are the multiset intersection per instance.
pub fn label_scores<S: AsRef<str>>(predicted: &[Vec<S>], gold: &[Vec<S>]) -> Result<LabelScores> {
    if predicted.len() != gold.len() {
        return Err(Error::validation(format!(
            "{} predicted instances for {} gold instances",
            predicted.len(),
            gold.len()
        )));
    }
    #[derive(Default)]
    struct Counts {
        tp: usize,
        pred: usize,
        gold: usize,
    }
    let mut per: BTreeMap<String, Counts> = BTreeMap::new();
    for (p, g) in predicted.iter().zip(gold) {
        let mut remaining: BTreeMap<&str, usize> = BTreeMap::new();
        for label in g {
            *remaining.entry(label.as_ref()).or_default() += 1;
            per.entry(label.as_ref().to_string()).or_default().gold += 1;
        }
        for label in p {
            let c = per.entry(label.as_ref().to_string()).or_default();
            c.pred += 1;
            if let Some(n) = remaining.get_mut(label.as_ref()).filter(|n| **n > 0) {
                *n -= 1;
                c.tp += 1;
            }
        }
    }
    let score = |c: &Counts| {
        let precision = if c.pred == 0 { 0.0 } else { c.tp as f64 / c.pred as f64 };
        let recall = if c.gold == 0 { 0.0 } else { c.tp as f64 / c.gold as f64 };
        SpanScore {
            precision,
            recall,
            f1: harmonic(precision, recall),
            n_pred: c.pred,
            n_gold: c.gold,
        }
    };
    let total = per.values().fold(Counts::default(), |acc, c| Counts {
        tp: acc.tp + c.tp,
        pred: acc.pred + c.pred,
        gold: acc.gold + c.gold,
    });
    Ok(LabelScores {
        micro: score(&total),
        per_class: per.iter().map(|(k, c)| (k.clone(), score(c))).collect(),
    })
}

/// Binary token P/R/F1: a token is positive when its tag is not `O`.
/// Sequences without any positive token on either side score 1.
pub fn token_f1(predicted: &TagSequence, gold: &TagSequence) -> Result<SpanScore> {
    if predicted.len() != gold.len() {
        return Err(Error::validation(format!(
            "token_f1 needs equal lengths, got {} and {}",
            predicted.len(),
            gold.len()
        )));
    }
    let mut tp = 0.0;
    let (mut n_pred, mut n_gold) = (0, 0);
    for (p, g) in predicted.tags.iter().zip(&gold.tags) {
        let (p, g) = (!p.is_outside(), !g.is_outside());
        n_pred += p as usize;
        n_gold += g as usize;
        if p && g {
            tp += 1.0;
        }
    }
    Ok(SpanScore::from_sums(tp, tp, n_pred, n_gold))
}

/// `metric<TAB>value` lines with six decimals.
pub fn format_report(rows: &[(String, f64)]) -> String {
    let mut out = String::from("metric\tvalue\n");
    for (name, value) in rows {
        out.push_str(&format!("{name}\t{value:.6}\n"));
    }
    out
}

/// Standard rows for a span score under `prefix`.
pub fn score_rows(prefix: &str, score: &SpanScore) -> Vec<(String, f64)> {
    vec![
        (format!("{prefix}precision"), score.precision),
        (format!("{prefix}recall"), score.recall),
        (format!("{prefix}f1"), score.f1),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spanops::Span;
    use crate::tagcodec::{Scheme, Tag};

    fn set(ranges: &[(usize, usize)]) -> SpanSet {
        SpanSet::from_ranges(ranges.iter().copied()).unwrap()
    }

    #[test]
    fn partial_overlap_example() {
        let s = span_f1(&set(&[(0, 5)]), &set(&[(0, 10)]));
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 0.5);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_sets() {
        assert_eq!(span_f1(&set(&[]), &set(&[])).f1, 1.0);
        let s = span_f1(&set(&[]), &set(&[(0, 3)]));
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let s = span_f1(&set(&[(0, 3)]), &set(&[]));
        assert_eq!((s.precision, s.recall), (0.0, 0.0));
        assert_eq!(span_f1(&set(&[(0, 3)]), &set(&[(3, 6)])).f1, 0.0);
        assert_eq!(span_f1(&set(&[(0, 3), (5, 9)]), &set(&[(0, 3), (5, 9)])).f1, 1.0);
    }

    #[test]
    fn labels_must_agree() {
        let p = SpanSet::new(vec![Span::with_class(0, 4, "A")]).unwrap();
        let g = SpanSet::new(vec![Span::with_class(0, 4, "B")]).unwrap();
        assert_eq!(span_f1(&p, &g).f1, 0.0);
        assert_eq!(span_f1(&p, &set(&[(0, 4)])).f1, 1.0);
    }

    #[test]
    fn corpus_pooling() {
        let pred: BTreeMap<String, SpanSet> = [("a".to_string(), set(&[(0, 5)]))].into();
        let gold: BTreeMap<String, SpanSet> = [("a".to_string(), set(&[(0, 10)])), ("b".to_string(), set(&[(0, 2)]))].into();
        let s = span_f1_corpus(&pred, &gold);
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 0.25);
    }

    #[test]
    fn micro() {
        assert_eq!(micro_f1(&["a", "b"], &["a", "b"]).unwrap(), 1.0);
        assert_eq!(micro_f1(&["a", "a"], &["a", "b"]).unwrap(), 0.5);
        assert!(micro_f1(&["a"], &["a", "b"]).is_err());
        let scores = label_scores(&[vec!["A", "B"], vec!["A"]], &[vec!["B", "A"], vec!["C"]]).unwrap();
        assert_eq!(scores.micro.precision, 2.0 / 3.0);
        assert_eq!(scores.per_class["A"].precision, 0.5);
        assert_eq!(scores.per_class["C"].recall, 0.0);
    }

    #[test]
    fn tokens() {
        let seq = |tags: &[&str]| TagSequence::new(tags.iter().map(|t| t.parse::<Tag>().unwrap()).collect(), Scheme::Bio);
        let gold = seq(&["O", "B-PROP", "I-PROP", "O", "B-PROP"]);
        assert_eq!(token_f1(&gold, &gold).unwrap().f1, 1.0);
        assert_eq!(token_f1(&seq(&["O"; 5]), &gold).unwrap().recall, 0.0);
        let pred = seq(&["B-PROP", "I-PROP", "O", "O", "B-PROP"]);
        let s = token_f1(&pred, &gold).unwrap();
        assert_eq!((s.precision, s.recall), (2.0 / 3.0, 2.0 / 3.0));
        assert!(token_f1(&seq(&["O"]), &gold).is_err());
    }

    #[test]
    fn report_format() {
        let text = format_report(&[("f1".into(), 0.5)]);
        assert_eq!(text, "metric\tvalue\nf1\t0.500000\n");
    }
}
