//! Linear-chain CRF over a fixed tag inventory.
//!
//! A path `y` over `T` tokens scores
//! `start[y0] + sum_t emission[t, y_t] + sum_{t>0} transition[y_{t-1}, y_t] + end[y_{T-1}]`.
//! Emissions come from an upstream model and are treated as fixed inputs.
//!
//! Positions flagged in an emission's `ignore_mask` are cut out of the
//! chain: the transition bridges from the previous kept position to the
//! next one, and decoding fills them with a continuation of the preceding
//! tag.

mod io;
mod train;

use ndarray::{Array1, Array2, ArrayView2, Axis};

pub use io::{format_model, parse_model, read_model, write_model};
pub use train::{train, Gradients, TrainConfig};

use crate::corpus::TokenSpan;
use crate::error::{Error, Result};
use crate::tagcodec::{legal_transition, Prefix, Scheme, Tag, TagSequence};

/// Per-token log-scores for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix {
    pub doc_id: String,
    pub tag_order: Vec<Tag>,
    pub tokens: Vec<TokenSpan>,
    /// `T x K`, row-major by token.
    pub scores: Array2<f64>,
    pub ignore_mask: Option<Vec<bool>>,
}

impl EmissionMatrix {
    pub fn new(
        doc_id: impl Into<String>,
        tag_order: Vec<Tag>,
        tokens: Vec<TokenSpan>,
        scores: Array2<f64>,
        ignore_mask: Option<Vec<bool>>,
    ) -> Result<Self> {
        let em = EmissionMatrix {
            doc_id: doc_id.into(),
            tag_order,
            tokens,
            scores,
            ignore_mask,
        };
        em.check()?;
        Ok(em)
    }

    /// Emissions without token offsets, for tests and synthetic data.
    pub fn from_scores(tag_order: Vec<Tag>, scores: Array2<f64>) -> Result<Self> {
        let tokens = (0..scores.nrows())
            .map(|i| TokenSpan {
                index: i,
                text: format!("t{i}"),
                start: i,
                end: i + 1,
            })
            .collect();
        EmissionMatrix::new("", tag_order, tokens, scores, None)
    }

    fn check(&self) -> Result<()> {
        let (t, k) = self.scores.dim();
        if k != self.tag_order.len() {
            return Err(Error::validation(format!(
                "{}: score rows have {k} columns but tag_order has {} tags",
                self.doc_id,
                self.tag_order.len()
            )));
        }
        if self.tokens.len() != t {
            return Err(Error::validation(format!(
                "{}: {} tokens but {t} score rows",
                self.doc_id,
                self.tokens.len()
            )));
        }
        if let Some(mask) = &self.ignore_mask {
            if mask.len() != t {
                return Err(Error::validation(format!(
                    "{}: ignore_mask has length {} for {t} tokens",
                    self.doc_id,
                    mask.len()
                )));
            }
        }
        if let Some(((row, col), v)) = self.scores.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::validation(format!(
                "{}: non-finite score {v} at token {row}, tag {col}",
                self.doc_id
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.scores.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_tags(&self) -> usize {
        self.tag_order.len()
    }

    fn is_ignored(&self, t: usize) -> bool {
        self.ignore_mask.as_ref().is_some_and(|m| m[t])
    }

    /// Indices of the positions that take part in the chain.
    fn active(&self) -> Vec<usize> {
        (0..self.len()).filter(|&t| !self.is_ignored(t)).collect()
    }

    fn active_scores(&self) -> (Vec<usize>, Array2<f64>) {
        let active = self.active();
        let scores = self.scores.select(Axis(0), &active);
        (active, scores)
    }

    /// Per-token argmax, ties to the lower index.
    pub fn argmax_path(&self) -> Vec<usize> {
        self.scores.rows().into_iter().map(|row| argmax(row.iter().copied())).collect()
    }

    pub fn tags_for(&self, path: &[usize]) -> Vec<Tag> {
        path.iter().map(|&k| self.tag_order[k].clone()).collect()
    }
}

/// Allowed transitions under a scheme, indexed like `tag_order`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMask {
    pub allowed: Array2<bool>,
    pub start: Vec<bool>,
    pub end: Vec<bool>,
}

impl TransitionMask {
    pub fn for_scheme(tag_order: &[Tag], scheme: Scheme) -> Self {
        let k = tag_order.len();
        let allowed = Array2::from_shape_fn((k, k), |(i, j)| {
            legal_transition(Some(&tag_order[i]), Some(&tag_order[j]), scheme)
        });
        TransitionMask {
            allowed,
            start: tag_order.iter().map(|t| legal_transition(None, Some(t), scheme)).collect(),
            end: tag_order.iter().map(|t| legal_transition(Some(t), None, scheme)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    pub tag_order: Vec<Tag>,
    pub scheme: Scheme,
    /// `transitions[[prev, next]]`
    pub transitions: Array2<f64>,
    pub start: Array1<f64>,
    pub end: Array1<f64>,
}

impl CrfModel {
    pub fn zeros(tag_order: Vec<Tag>, scheme: Scheme) -> Self {
        let k = tag_order.len();
        CrfModel {
            tag_order,
            scheme,
            transitions: Array2::zeros((k, k)),
            start: Array1::zeros(k),
            end: Array1::zeros(k),
        }
    }

    pub fn num_tags(&self) -> usize {
        self.tag_order.len()
    }

    pub fn mask(&self) -> TransitionMask {
        TransitionMask::for_scheme(&self.tag_order, self.scheme)
    }

    fn check_emissions(&self, em: &EmissionMatrix) -> Result<()> {
        if em.tag_order != self.tag_order {
            return Err(Error::validation(format!(
                "{}: emission tag order does not match the model's",
                em.doc_id
            )));
        }
        Ok(())
    }

    fn check_params(&self) -> Result<()> {
        let k = self.num_tags();
        if self.transitions.dim() != (k, k) || self.start.len() != k || self.end.len() != k {
            return Err(Error::validation(format!("CRF parameters do not match {k} tags")));
        }
        let finite = self.transitions.iter().chain(&self.start).chain(&self.end).all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation("CRF parameters must be finite"));
        }
        Ok(())
    }

    pub fn score_path(&self, em: &EmissionMatrix, path: &[usize]) -> Result<f64> {
        self.check_emissions(em)?;
        if path.len() != em.len() {
            return Err(Error::validation(format!(
                "path length {} does not match {} tokens",
                path.len(),
                em.len()
            )));
        }
        if let Some(&bad) = path.iter().find(|&&y| y >= self.num_tags()) {
            return Err(Error::validation(format!("tag index {bad} out of range")));
        }
        let active = em.active();
        let active_path: Vec<usize> = active.iter().map(|&t| path[t]).collect();
        Ok(self.path_score(em.scores.select(Axis(0), &active).view(), &active_path))
    }

    fn path_score(&self, scores: ArrayView2<f64>, path: &[usize]) -> f64 {
        let (Some(&first), Some(&last)) = (path.first(), path.last()) else {
            return 0.0;
        };
        let mut s = self.start[first] + self.end[last];
        for (t, &y) in path.iter().enumerate() {
            s += scores[[t, y]];
            if t > 0 {
                s += self.transitions[[path[t - 1], y]];
            }
        }
        s
    }

    /// Log of the sum of `exp(score)` over all `K^T` paths.
    pub fn log_partition(&self, em: &EmissionMatrix) -> Result<f64> {
        self.check_emissions(em)?;
        let (_, scores) = em.active_scores();
        Ok(self.forward(scores.view()).1)
    }

    /// Forward log-messages and the log-partition.
    fn forward(&self, scores: ArrayView2<f64>) -> (Array2<f64>, f64) {
        let (t_len, k) = scores.dim();
        let mut alpha = Array2::zeros((t_len, k));
        if t_len == 0 {
            return (alpha, 0.0);
        }
        for j in 0..k {
            alpha[[0, j]] = self.start[j] + scores[[0, j]];
        }
        let mut buf = vec![0.0; k];
        for t in 1..t_len {
            for j in 0..k {
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = alpha[[t - 1, i]] + self.transitions[[i, j]];
                }
                alpha[[t, j]] = log_sum_exp(&buf) + scores[[t, j]];
            }
        }
        for (j, b) in buf.iter_mut().enumerate() {
            *b = alpha[[t_len - 1, j]] + self.end[j];
        }
        let log_z = log_sum_exp(&buf);
        (alpha, log_z)
    }

    fn backward(&self, scores: ArrayView2<f64>) -> Array2<f64> {
        let (t_len, k) = scores.dim();
        let mut beta = Array2::zeros((t_len, k));
        if t_len == 0 {
            return beta;
        }
        for i in 0..k {
            beta[[t_len - 1, i]] = self.end[i];
        }
        let mut buf = vec![0.0; k];
        for t in (0..t_len - 1).rev() {
            for i in 0..k {
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = self.transitions[[i, j]] + scores[[t + 1, j]] + beta[[t + 1, j]];
                }
                beta[[t, i]] = log_sum_exp(&buf);
            }
        }
        beta
    }

    /// Posterior tag marginals, `T x K`. Ignored positions copy the row of
    /// the nearest kept position before them (or after, at the start).
    pub fn marginals(&self, em: &EmissionMatrix) -> Result<Array2<f64>> {
        self.check_emissions(em)?;
        let (active, scores) = em.active_scores();
        let active_marginals = self.active_marginals(scores.view());
        let k = self.num_tags();
        let mut out = Array2::from_elem((em.len(), k), 1.0 / k as f64);
        if active.is_empty() {
            return Ok(out);
        }
        let mut next_active = 0;
        for t in 0..em.len() {
            while next_active + 1 < active.len() && active[next_active + 1] <= t {
                next_active += 1;
            }
            out.row_mut(t).assign(&active_marginals.row(next_active));
        }
        Ok(out)
    }

    fn active_marginals(&self, scores: ArrayView2<f64>) -> Array2<f64> {
        let (alpha, log_z) = self.forward(scores);
        let beta = self.backward(scores);
        (&alpha + &beta).mapv(|v| (v - log_z).exp())
    }

    /// Best path and its score. With a mask, disallowed transitions are
    /// excluded and the result is a legal sequence for the model's scheme.
    pub fn viterbi(&self, em: &EmissionMatrix, mask: Option<&TransitionMask>) -> Result<(Vec<usize>, f64)> {
        self.check_emissions(em)?;
        self.check_params()?;
        let (active, scores) = em.active_scores();
        let (active_path, score) = self.viterbi_scores(scores.view(), mask)?;
        if active.len() == em.len() {
            return Ok((active_path, score));
        }
        let path = fill_ignored(&active, &active_path, em.len(), &self.tag_order);
        Ok((path, score))
    }

    fn viterbi_scores(&self, scores: ArrayView2<f64>, mask: Option<&TransitionMask>) -> Result<(Vec<usize>, f64)> {
        let (t_len, k) = scores.dim();
        if t_len == 0 {
            return Ok((Vec::new(), 0.0));
        }
        let trans = |i: usize, j: usize| match mask {
            Some(m) if !m.allowed[[i, j]] => f64::NEG_INFINITY,
            _ => self.transitions[[i, j]],
        };
        let start = |j: usize| match mask {
            Some(m) if !m.start[j] => f64::NEG_INFINITY,
            _ => self.start[j],
        };
        let end = |j: usize| match mask {
            Some(m) if !m.end[j] => f64::NEG_INFINITY,
            _ => self.end[j],
        };

        let mut delta = Array2::from_elem((t_len, k), f64::NEG_INFINITY);
        let mut back = Array2::<usize>::zeros((t_len, k));
        for j in 0..k {
            delta[[0, j]] = start(j) + scores[[0, j]];
        }
        for t in 1..t_len {
            for j in 0..k {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for i in 0..k {
                    let v = delta[[t - 1, i]] + trans(i, j);
                    if v > best {
                        best = v;
                        best_i = i;
                    }
                }
                delta[[t, j]] = best + scores[[t, j]];
                back[[t, j]] = best_i;
            }
        }
        let mut best = f64::NEG_INFINITY;
        let mut last = 0;
        for j in 0..k {
            let v = delta[[t_len - 1, j]] + end(j);
            if v > best {
                best = v;
                last = j;
            }
        }
        if best == f64::NEG_INFINITY {
            return Err(Error::Decode("no path satisfies the transition mask".into()));
        }
        let mut path = vec![0; t_len];
        path[t_len - 1] = last;
        for t in (1..t_len).rev() {
            path[t - 1] = back[[t, path[t]]];
        }
        Ok((path, best))
    }

    pub fn decode_tags(&self, em: &EmissionMatrix, constrained: bool) -> Result<TagSequence> {
        let mask = constrained.then(|| self.mask());
        let (path, _) = self.viterbi(em, mask.as_ref())?;
        Ok(TagSequence::new(em.tags_for(&path), self.scheme))
    }
}

/// Expands a path over kept positions to all `len` positions. An ignored
/// run continues the span opened before it: after `B`/`I` it is `I`, after
/// `E`/`S` the span is extended through the run, and after `O` it is `O`.
fn fill_ignored(active: &[usize], active_path: &[usize], len: usize, tag_order: &[Tag]) -> Vec<usize> {
    let index_of = |prefix: Prefix, class: &str| tag_order.iter().position(|t| *t == Tag::new(prefix, class));
    let outside = index_of(Prefix::O, "");
    let mut path = vec![outside.unwrap_or(0); len];
    for (&t, &y) in active.iter().zip(active_path) {
        path[t] = y;
    }
    let mut t = 0;
    while t < len {
        if active.binary_search(&t).is_ok() {
            t += 1;
            continue;
        }
        let run_start = t;
        while t < len && active.binary_search(&t).is_err() {
            t += 1;
        }
        let Some(prev) = run_start.checked_sub(1) else { continue };
        let tag = &tag_order[path[prev]];
        let inside = index_of(Prefix::I, &tag.class);
        let (new_prev, run_tag, last_tag) = match tag.prefix {
            Prefix::O => continue,
            Prefix::B | Prefix::I => (None, inside, inside),
            Prefix::E => (inside, inside, index_of(Prefix::E, &tag.class)),
            Prefix::S => (index_of(Prefix::B, &tag.class), inside, index_of(Prefix::E, &tag.class)),
        };
        // leave the run as O when the inventory lacks the needed tags
        let (Some(run_tag), Some(last_tag)) = (run_tag, last_tag) else { continue };
        if matches!(tag.prefix, Prefix::E | Prefix::S) && new_prev.is_none() {
            continue;
        }
        if let Some(p) = new_prev {
            path[prev] = p;
        }
        for slot in &mut path[run_start..t] {
            *slot = run_tag;
        }
        path[t - 1] = last_tag;
    }
    path
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut best_i = 0;
    for (i, v) in values.into_iter().enumerate() {
        if v > best {
            best = v;
            best_i = i;
        }
    }
    best_i
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagcodec::validate;
    use ndarray::array;

    fn tags(names: &[&str]) -> Vec<Tag> {
        names.iter().map(|n| n.parse().unwrap()).collect()
    }

    fn bio() -> Vec<Tag> {
        tags(&["O", "B-PROP", "I-PROP"])
    }

    #[test]
    fn single_token_score() {
        let mut model = CrfModel::zeros(tags(&["O", "I-A"]), Scheme::Io);
        model.start = array![0.5, -1.0];
        model.end = array![2.0, 0.25];
        let em = EmissionMatrix::from_scores(model.tag_order.clone(), array![[1.0, 3.0]]).unwrap();
        assert_eq!(model.score_path(&em, &[1]).unwrap(), -1.0 + 3.0 + 0.25);
        assert_eq!(model.score_path(&em, &[0]).unwrap(), 0.5 + 1.0 + 2.0);
    }

    #[test]
    fn zero_model_scores_sum_emissions() {
        let model = CrfModel::zeros(bio(), Scheme::Bio);
        let em = EmissionMatrix::from_scores(bio(), array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(model.score_path(&em, &[2, 0]).unwrap(), 7.0);
        assert!(model.score_path(&em, &[2]).is_err());
        assert!(model.score_path(&em, &[2, 3]).is_err());
    }

    #[test]
    fn hand_computed_two_by_two() {
        let mut model = CrfModel::zeros(tags(&["O", "I-A"]), Scheme::Io);
        model.start = array![1.0, 2.0];
        model.end = array![-1.0, 3.0];
        model.transitions = array![[0.0, 4.0], [-2.0, 5.0]];
        let em = EmissionMatrix::from_scores(model.tag_order.clone(), array![[1.0, -1.0], [2.0, 7.0]]).unwrap();
        // path [0, 1]: start 1 + e 1 + trans 4 + e 7 + end 3
        assert_eq!(model.score_path(&em, &[0, 1]).unwrap(), 16.0);
        // path [1, 0]: start 2 + e -1 + trans -2 + e 2 + end -1
        assert_eq!(model.score_path(&em, &[1, 0]).unwrap(), 0.0);
    }

    #[test]
    fn partition_closed_form() {
        let model = CrfModel::zeros(tags(&["O", "I-A"]), Scheme::Io);
        let em = EmissionMatrix::from_scores(model.tag_order.clone(), array![[0.3, -1.7]]).unwrap();
        let expected = (0.3f64.exp() + (-1.7f64).exp()).ln();
        assert!((model.log_partition(&em).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_transitions_viterbi_is_argmax() {
        let model = CrfModel::zeros(bio(), Scheme::Bio);
        let em = EmissionMatrix::from_scores(bio(), array![[0.0, 1.0, 0.5], [0.0, 0.1, 2.0], [3.0, 0.0, 0.0]]).unwrap();
        let (path, score) = model.viterbi(&em, None).unwrap();
        assert_eq!(path, vec![1, 2, 0]);
        assert_eq!(score, 6.0);
    }

    #[test]
    fn mask_forbids_inside_after_outside() {
        let model = CrfModel::zeros(bio(), Scheme::Bio);
        let em = EmissionMatrix::from_scores(bio(), array![[5.0, -10.0, 0.0], [0.0, 1.0, 9.0]]).unwrap();
        let (free, _) = model.viterbi(&em, None).unwrap();
        assert_eq!(free, vec![0, 2]);
        let (masked, _) = model.viterbi(&em, Some(&model.mask())).unwrap();
        assert!(masked == vec![0, 1] || masked == vec![0, 0]);
        let seq = TagSequence::new(em.tags_for(&masked), Scheme::Bio);
        assert!(validate(&seq).is_empty());
    }

    #[test]
    fn impossible_mask_is_decode_error() {
        let only_inside = tags(&["I-A"]);
        let model = CrfModel::zeros(only_inside.clone(), Scheme::Bio);
        let em = EmissionMatrix::from_scores(only_inside, array![[1.0]]).unwrap();
        assert!(matches!(model.viterbi(&em, Some(&model.mask())), Err(Error::Decode(_))));
    }

    #[test]
    fn marginal_rows_sum_to_one() {
        let mut model = CrfModel::zeros(bio(), Scheme::Bio);
        model.transitions = array![[0.1, 0.2, -0.3], [0.4, -0.5, 0.6], [0.7, 0.8, -0.9]];
        let em = EmissionMatrix::from_scores(bio(), array![[0.2, 1.0, -1.0], [0.3, 0.0, 0.5], [1.5, 0.2, 0.1]]).unwrap();
        let m = model.marginals(&em).unwrap();
        for row in m.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_token_marginals_are_softmax() {
        let mut model = CrfModel::zeros(bio(), Scheme::Bio);
        model.start = array![0.1, 0.2, 0.3];
        model.end = array![1.0, -1.0, 0.0];
        let em = EmissionMatrix::from_scores(bio(), array![[0.5, 0.5, 2.0]]).unwrap();
        let m = model.marginals(&em).unwrap();
        let logits = [0.1 + 0.5 + 1.0, 0.2 + 0.5 - 1.0, 0.3 + 2.0];
        let z: f64 = logits.iter().map(|v: &f64| v.exp()).sum();
        for (j, l) in logits.iter().enumerate() {
            assert!((m[[0, j]] - l.exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn ignored_positions_are_bridged() {
        let tag_order = bio();
        let mut model = CrfModel::zeros(tag_order.clone(), Scheme::Bio);
        model.transitions[[0, 0]] = 1.0;
        // second row is ignored: its huge score must not matter
        let em = EmissionMatrix::new(
            "d",
            tag_order.clone(),
            (0..3)
                .map(|i| TokenSpan {
                    index: i,
                    text: "w".into(),
                    start: i,
                    end: i + 1,
                })
                .collect(),
            array![[0.0, 2.0, 0.0], [100.0, 0.0, 0.0], [0.0, 0.0, 2.0]],
            Some(vec![false, true, false]),
        )
        .unwrap();
        let (path, score) = model.viterbi(&em, Some(&model.mask())).unwrap();
        assert_eq!(path, vec![1, 2, 2]);
        assert_eq!(score, 4.0);
        assert_eq!(model.score_path(&em, &[1, 0, 2]).unwrap(), 4.0);
        let plain = EmissionMatrix::from_scores(tag_order, array![[0.0, 2.0, 0.0], [0.0, 0.0, 2.0]]).unwrap();
        assert!((model.log_partition(&em).unwrap() - model.log_partition(&plain).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ignored_run_extends_closed_span() {
        let tag_order = Scheme::Bioes.tag_set(&["A"]);
        // O B-A I-A E-A S-A
        let filled = fill_ignored(&[0, 3], &[4, 0], 4, &tag_order);
        assert_eq!(filled, vec![1, 2, 3, 0]);
        let filled = fill_ignored(&[0, 1, 4], &[4, 0, 0], 5, &tag_order);
        assert_eq!(filled, vec![4, 0, 0, 0, 0]);
        let filled = fill_ignored(&[0, 3], &[1, 3], 5, &tag_order);
        assert_eq!(filled, vec![1, 2, 2, 2, 3]);
        let seq = TagSequence::new(filled.iter().map(|&k| tag_order[k].clone()).collect(), Scheme::Bioes);
        assert!(validate(&seq).is_empty());
    }

    #[test]
    fn empty_document() {
        let model = CrfModel::zeros(bio(), Scheme::Bio);
        let em = EmissionMatrix::from_scores(bio(), Array2::zeros((0, 3))).unwrap();
        assert_eq!(model.viterbi(&em, Some(&model.mask())).unwrap(), (vec![], 0.0));
        assert_eq!(model.log_partition(&em).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_emissions() {
        assert!(EmissionMatrix::from_scores(bio(), array![[0.0, 1.0]]).is_err());
        assert!(EmissionMatrix::from_scores(bio(), array![[0.0, f64::NAN, 1.0]]).is_err());
        let model = CrfModel::zeros(bio(), Scheme::Bio);
        let other = EmissionMatrix::from_scores(tags(&["O", "I-X", "B-X"]), array![[0.0, 1.0, 2.0]]).unwrap();
        assert!(model.log_partition(&other).is_err());
    }
}
