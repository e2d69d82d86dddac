use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Gradients, ModelParams};
use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub weight_init_scale: f64,
    pub optimizer: Optimizer,
    pub decision_threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            learning_rate: 0.02,
            batch_size: 32,
            embed_dim: 16,
            hidden_dim: 32,
            weight_init_scale: 0.1,
            optimizer: Optimizer::adam(),
            decision_threshold: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
        ] {
            if v == 0 {
                return Err(Error::validation(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation(
                "learning_rate must be finite and non-negative",
            ));
        }
        if !(self.weight_init_scale >= 0.0 && self.weight_init_scale.is_finite()) {
            return Err(Error::validation(
                "weight_init_scale must be finite and non-negative",
            ));
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return Err(Error::validation("decision_threshold must be in (0, 1)"));
        }
        if let Optimizer::Adam {
            beta1,
            beta2,
            epsilon,
        } = self.optimizer
        {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0) {
                return Err(Error::validation(
                    "adam needs beta1, beta2 in [0, 1) and epsilon > 0",
                ));
            }
        }
        Ok(())
    }
}

/// Numerically stable binary cross-entropy of `sigmoid(logit)` against `target`.
pub fn bce_loss(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss of each epoch, measured during the epoch.
    pub epoch_losses: Vec<f64>,
}

struct AdamState {
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

/// Minimize mean per-class binary cross-entropy over `corpus`.
///
/// Documents are visited in a seeded shuffled order; gradients of a
/// mini-batch are summed in that order before each update.
pub fn train(
    mut params: ModelParams,
    corpus: &Corpus,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    config.validate()?;
    let docs: Vec<_> = corpus
        .documents()
        .iter()
        .filter(|d| !d.subwords.is_empty())
        .collect();
    if docs.is_empty() {
        return Err(Error::validation(
            "training corpus has no non-empty documents",
        ));
    }
    let targets: Vec<Vec<bool>> = docs
        .iter()
        .map(|d| d.label_mask(&params.label_space))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut grads = Gradients::zeros_like(&params);
    let mut adam = match config.optimizer {
        Optimizer::Adam { .. } => Some(AdamState {
            step: 0,
            first: grads.slices().iter().map(|s| vec![0.0; s.len()]).collect(),
            second: grads.slices().iter().map(|s| vec![0.0; s.len()]).collect(),
        }),
        Optimizer::Sgd => None,
    };

    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                total += params.accumulate_gradients(docs[i], &targets[i], scale, &mut grads)?;
            }
            apply_update(&mut params, &grads, config, adam.as_mut());
        }
        let mean = total / docs.len() as f64;
        if !mean.is_finite() || !params.embedding.is_finite() {
            return Err(Error::Diverged {
                epoch,
                learning_rate: config.learning_rate,
                loss: mean,
            });
        }
        log::debug!("epoch {epoch}: loss {mean:.6}");
        epoch_losses.push(mean);
    }
    Ok((params, TrainReport { epoch_losses }))
}

fn apply_update(
    params: &mut ModelParams,
    grads: &Gradients,
    config: &TrainConfig,
    adam: Option<&mut AdamState>,
) {
    let lr = config.learning_rate;
    if lr == 0.0 {
        return;
    }
    match (config.optimizer, adam) {
        (
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
            },
            Some(state),
        ) => {
            state.step += 1;
            let c1 = 1.0 - beta1.powi(state.step);
            let c2 = 1.0 - beta2.powi(state.step);
            for (k, (p, g)) in params
                .slices_mut()
                .into_iter()
                .zip(grads.slices())
                .enumerate()
            {
                let (m, v) = (&mut state.first[k], &mut state.second[k]);
                for i in 0..p.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                    p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + epsilon);
                }
            }
        }
        _ => {
            for (p, g) in params.slices_mut().into_iter().zip(grads.slices()) {
                for (pi, gi) in p.iter_mut().zip(g) {
                    *pi -= lr * gi;
                }
            }
        }
    }
}
