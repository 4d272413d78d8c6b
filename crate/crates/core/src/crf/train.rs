use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CrfModel, EmissionMatrix};
use crate::error::{Error, Result};
use crate::tagcodec::{validate, Scheme, TagSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 30,
            l2: 0.0,
            seed: 0,
            batch_size: 8,
        }
    }
}

impl TrainConfig {
    fn check(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning_rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::validation("epochs must be at least 1"));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::validation("l2 must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// Gradients of the negative log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub transitions: Array2<f64>,
    pub start: Array1<f64>,
    pub end: Array1<f64>,
    /// One `T x K` matrix per batch item.
    pub emissions: Vec<Array2<f64>>,
}

impl Gradients {
    fn zeros(k: usize) -> Self {
        Gradients {
            transitions: Array2::zeros((k, k)),
            start: Array1::zeros(k),
            end: Array1::zeros(k),
            emissions: Vec::new(),
        }
    }
}

impl CrfModel {
    fn squared_norm(&self) -> f64 {
        self.transitions.iter().chain(&self.start).chain(&self.end).map(|v| v * v).sum()
    }

    fn check_gold(&self, em: &EmissionMatrix, gold: &[usize]) -> Result<Vec<usize>> {
        if gold.len() != em.len() {
            return Err(Error::validation(format!(
                "{}: gold path has {} tags for {} tokens",
                em.doc_id,
                gold.len(),
                em.len()
            )));
        }
        if gold.iter().any(|&y| y >= self.num_tags()) {
            return Err(Error::validation(format!("{}: gold tag index out of range", em.doc_id)));
        }
        let active: Vec<usize> = em.active().iter().map(|&t| gold[t]).collect();
        let seq = TagSequence::new(em.tags_for(&active), self.scheme);
        if let Some(v) = validate(&seq).first() {
            return Err(Error::validation(format!(
                "{}: gold path is illegal under {} at position {}",
                em.doc_id, self.scheme, v.position
            )));
        }
        Ok(active)
    }

    /// Summed `log Z - score(gold)` over the batch plus `l2 * ||params||^2`,
    /// with gradients from expected minus observed counts.
    pub fn nll_and_gradient(&self, batch: &[(&EmissionMatrix, &[usize])], l2: f64) -> Result<(f64, Gradients)> {
        let k = self.num_tags();
        let mut grads = Gradients::zeros(k);
        let mut loss = l2 * self.squared_norm();

        for &(em, gold) in batch {
            self.check_emissions(em)?;
            let gold_active = self.check_gold(em, gold)?;
            let (active, scores) = em.active_scores();
            let scores = scores.view();
            let t_len = active.len();
            let mut emission_grad = Array2::zeros((em.len(), k));
            if t_len == 0 {
                grads.emissions.push(emission_grad);
                continue;
            }

            let (alpha, log_z) = self.forward(scores);
            let beta = self.backward(scores);
            loss += log_z - self.path_score(scores, &gold_active);

            let marg = (&alpha + &beta).mapv(|v| (v - log_z).exp());
            for (row, &t) in active.iter().enumerate() {
                emission_grad.row_mut(t).assign(&marg.row(row));
                emission_grad[[t, gold_active[row]]] -= 1.0;
            }
            grads.start += &marg.row(0);
            grads.start[gold_active[0]] -= 1.0;
            grads.end += &marg.row(t_len - 1);
            grads.end[gold_active[t_len - 1]] -= 1.0;

            for t in 1..t_len {
                for i in 0..k {
                    for j in 0..k {
                        let lp = alpha[[t - 1, i]] + self.transitions[[i, j]] + scores[[t, j]] + beta[[t, j]] - log_z;
                        grads.transitions[[i, j]] += lp.exp();
                    }
                }
                grads.transitions[[gold_active[t - 1], gold_active[t]]] -= 1.0;
            }
            grads.emissions.push(emission_grad);
        }

        if l2 > 0.0 {
            grads.transitions.scaled_add(2.0 * l2, &self.transitions);
            grads.start.scaled_add(2.0 * l2, &self.start);
            grads.end.scaled_add(2.0 * l2, &self.end);
        }
        Ok((loss, grads))
    }

    fn step(&mut self, grads: &Gradients, rate: f64) {
        self.transitions.scaled_add(-rate, &grads.transitions);
        self.start.scaled_add(-rate, &grads.start);
        self.end.scaled_add(-rate, &grads.end);
    }
}

/// Mini-batch gradient descent on the mean per-sequence loss. The
/// parameters with the lowest full-data loss seen (including the zero
/// initialization) are returned, so the final loss never exceeds the
/// initial one.
pub fn train(dataset: &[(EmissionMatrix, Vec<usize>)], scheme: Scheme, config: &TrainConfig) -> Result<CrfModel> {
    config.check()?;
    let Some((first, _)) = dataset.first() else {
        return Err(Error::validation("cannot train a CRF on an empty dataset"));
    };
    let tag_order = first.tag_order.clone();
    if let Some((em, _)) = dataset.iter().find(|(em, _)| em.tag_order != tag_order) {
        return Err(Error::validation(format!("{}: inconsistent tag order in training data", em.doc_id)));
    }

    let mut model = CrfModel::zeros(tag_order, scheme);
    let all: Vec<(&EmissionMatrix, &[usize])> = dataset.iter().map(|(em, g)| (em, g.as_slice())).collect();
    let full_loss = |m: &CrfModel| -> Result<f64> {
        let (loss, _) = m.nll_and_gradient(&all, 0.0)?;
        Ok(loss / all.len() as f64 + config.l2 * m.squared_norm())
    };

    let mut best_loss = full_loss(&model)?;
    let mut best = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&EmissionMatrix, &[usize])> = chunk.iter().map(|&i| all[i]).collect();
            let (loss, mut grads) = model.nll_and_gradient(&batch, 0.0)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("non-finite batch loss {loss}"),
                });
            }
            let n = batch.len() as f64;
            grads.transitions /= n;
            grads.start /= n;
            grads.end /= n;
            if config.l2 > 0.0 {
                grads.transitions.scaled_add(2.0 * config.l2, &model.transitions);
                grads.start.scaled_add(2.0 * config.l2, &model.start);
                grads.end.scaled_add(2.0 * config.l2, &model.end);
            }
            model.step(&grads, config.learning_rate);
        }
        let loss = full_loss(&model)?;
        if !loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("non-finite training loss {loss}"),
            });
        }
        if loss < best_loss {
            best_loss = loss;
            best = model.clone();
        }
    }
    Ok(best)
}
