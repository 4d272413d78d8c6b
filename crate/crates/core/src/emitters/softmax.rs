use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::FeatureVector;
use super::probs::SpanProbs;
use crate::crf::log_sum_exp;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftmaxConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SoftmaxConfig {
    fn default() -> Self {
        SoftmaxConfig {
            learning_rate: 0.5,
            epochs: 100,
            l2: 1e-5,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl SoftmaxConfig {
    pub fn check(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || !(self.l2 >= 0.0) {
            return Err(Error::Config("learning_rate must be positive and l2 non-negative".into()));
        }
        Ok(())
    }
}

/// Multinomial logistic regression over hashed features. Inputs are divided
/// by a per-feature scale (the largest magnitude seen in training) before
/// the linear map; features never seen in training are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel {
    pub classes: Vec<String>,
    pub weights: BTreeMap<u64, Vec<f64>>,
    pub bias: Vec<f64>,
    pub scales: BTreeMap<u64, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxGradient {
    pub weights: BTreeMap<u64, Vec<f64>>,
    pub bias: Vec<f64>,
}

impl SoftmaxModel {
    pub fn new(
        classes: Vec<String>,
        weights: BTreeMap<u64, Vec<f64>>,
        bias: Vec<f64>,
        scales: BTreeMap<u64, f64>,
    ) -> Result<Self> {
        let k = classes.len();
        if k < 2 {
            return Err(Error::validation("a softmax model needs at least two classes"));
        }
        if classes.iter().collect::<BTreeSet<_>>().len() != k {
            return Err(Error::validation("duplicate class names"));
        }
        if bias.len() != k || weights.values().any(|w| w.len() != k) {
            return Err(Error::validation(format!("parameter rows must have {k} entries")));
        }
        let finite = bias.iter().chain(weights.values().flatten()).all(|v| v.is_finite());
        if !finite || scales.values().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::validation("softmax parameters must be finite, scales positive"));
        }
        Ok(SoftmaxModel {
            classes,
            weights,
            bias,
            scales,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, class: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == class)
            .ok_or_else(|| Error::validation(format!("class {class:?} unknown to the model")))
    }

    fn scaled(&self, x: &FeatureVector) -> Vec<(u64, f64)> {
        x.iter()
            .filter_map(|(id, v)| self.scales.get(&id).map(|s| (id, v / s)))
            .collect()
    }

    pub fn logits(&self, x: &FeatureVector) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (id, v) in self.scaled(x) {
            if let Some(w) = self.weights.get(&id) {
                for (zk, wk) in z.iter_mut().zip(w) {
                    *zk += wk * v;
                }
            }
        }
        z
    }

    fn log_proba(&self, x: &FeatureVector) -> Vec<f64> {
        let z = self.logits(x);
        let lse = log_sum_exp(&z);
        z.into_iter().map(|v| v - lse).collect()
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> SpanProbs {
        let logp = self.log_proba(x);
        SpanProbs::new(self.classes.iter().cloned().zip(logp.into_iter().map(f64::exp)))
    }

    pub fn predict(&self, x: &FeatureVector) -> &str {
        let logp = self.log_proba(x);
        &self.classes[crate::crf::argmax(logp)]
    }

    fn l2_norm_sq(&self) -> f64 {
        self.weights.values().flatten().map(|w| w * w).sum()
    }

    /// Mean cross-entropy plus `l2 * |W|^2` (bias unpenalized).
    pub fn loss(&self, examples: &[(FeatureVector, String)], l2: f64) -> Result<f64> {
        let refs: Vec<(&FeatureVector, &str)> = examples.iter().map(|(x, y)| (x, y.as_str())).collect();
        Ok(self.loss_and_gradient(&refs, l2)?.0)
    }

    pub fn loss_and_gradient(&self, batch: &[(&FeatureVector, &str)], l2: f64) -> Result<(f64, SoftmaxGradient)> {
        let k = self.num_classes();
        let mut grad = SoftmaxGradient {
            weights: BTreeMap::new(),
            bias: vec![0.0; k],
        };
        if batch.is_empty() {
            return Err(Error::validation("empty batch"));
        }
        let n = batch.len() as f64;
        let mut loss = 0.0;
        for &(x, y) in batch {
            let yi = self.class_index(y)?;
            let logp = self.log_proba(x);
            loss -= logp[yi];
            let residual: Vec<f64> = logp
                .iter()
                .enumerate()
                .map(|(c, lp)| (lp.exp() - if c == yi { 1.0 } else { 0.0 }) / n)
                .collect();
            for (b, r) in grad.bias.iter_mut().zip(&residual) {
                *b += r;
            }
            for (id, v) in self.scaled(x) {
                if !self.weights.contains_key(&id) {
                    continue;
                }
                let g = grad.weights.entry(id).or_insert_with(|| vec![0.0; k]);
                for (gk, r) in g.iter_mut().zip(&residual) {
                    *gk += r * v;
                }
            }
        }
        if l2 > 0.0 {
            for (id, w) in &self.weights {
                let g = grad.weights.entry(*id).or_insert_with(|| vec![0.0; k]);
                for (gk, wk) in g.iter_mut().zip(w) {
                    *gk += 2.0 * l2 * wk;
                }
            }
        }
        Ok((loss / n + l2 * self.l2_norm_sq(), grad))
    }

    fn step(&mut self, grad: &SoftmaxGradient, lr: f64) {
        for (b, g) in self.bias.iter_mut().zip(&grad.bias) {
            *b -= lr * g;
        }
        for (id, g) in &grad.weights {
            if let Some(w) = self.weights.get_mut(id) {
                for (wk, gk) in w.iter_mut().zip(g) {
                    *wk -= lr * gk;
                }
            }
        }
    }

    pub fn accuracy(&self, examples: &[(FeatureVector, String)]) -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        let hits = examples.iter().filter(|(x, y)| self.predict(x) == y).count();
        hits as f64 / examples.len() as f64
    }
}

/// Mini-batch gradient descent from zero weights. The class list is the
/// sorted set of training labels.
pub fn train_softmax(examples: &[(FeatureVector, String)], config: &SoftmaxConfig) -> Result<SoftmaxModel> {
    config.check()?;
    let classes: Vec<String> = examples
        .iter()
        .map(|(_, y)| y.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let k = classes.len();
    let mut scales: BTreeMap<u64, f64> = BTreeMap::new();
    for (x, _) in examples {
        for (id, v) in x.iter() {
            let s = scales.entry(id).or_insert(0.0);
            *s = s.max(v.abs());
        }
    }
    scales.retain(|_, s| *s > 0.0);
    let weights = scales.keys().map(|&id| (id, vec![0.0; k])).collect();
    let mut model = SoftmaxModel::new(classes, weights, vec![0.0; k], scales)?;

    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&FeatureVector, &str)> =
                chunk.iter().map(|&i| (&examples[i].0, examples[i].1.as_str())).collect();
            // data term only; the penalty's gradient 2*l2*w is applied as decay
            let (loss, grad) = model.loss_and_gradient(&batch, 0.0)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("non-finite loss {loss}"),
                });
            }
            if config.l2 > 0.0 {
                let decay = 1.0 - 2.0 * config.learning_rate * config.l2;
                for w in model.weights.values_mut() {
                    w.iter_mut().for_each(|x| *x *= decay);
                }
            }
            model.step(&grad, config.learning_rate);
        }
    }
    Ok(model)
}
