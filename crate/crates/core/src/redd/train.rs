use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{embedding_matrix, sigmoid, Architecture, ReddModel, TrainingMeta};
use crate::corpus::{EmbeddingField, PageRecord};
use crate::error::{Error, Result};
use crate::util::{derive_seed, seeded_rng};

pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain mini-batch gradient descent.
    #[default]
    Sgd,
    /// Heavy-ball momentum.
    Momentum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStop {
    /// Epochs without a train-loss improvement of at least `min_delta` before stopping.
    pub patience: usize,
    #[serde(default)]
    pub min_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
    pub hidden_dims: Vec<usize>,
    pub early_stop: Option<EarlyStop>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            architecture: Architecture::Nonlinear,
            epochs: 50,
            batch_size: 64,
            learning_rate: 0.01,
            seed: 0,
            optimizer: OptimizerKind::Sgd,
            momentum: 0.9,
            hidden_dims: vec![128, 64, 32],
            early_stop: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Error::Config {
            field: format!("train.{field}"),
            reason: reason.into(),
        };
        if self.epochs == 0 {
            return Err(bad("epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size", "must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(bad("learning_rate", "must be a positive finite number"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(bad("momentum", "must lie in [0, 1)"));
        }
        if self.architecture == Architecture::Nonlinear
            && (self.hidden_dims.len() != 3 || self.hidden_dims.contains(&0))
        {
            return Err(bad(
                "hidden_dims",
                "nonlinear model needs exactly three positive widths",
            ));
        }
        if let Some(es) = &self.early_stop {
            if es.patience == 0 {
                return Err(bad("early_stop.patience", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Mean binary cross-entropy with predictions clamped to `[eps, 1 - eps]`.
pub fn bce_loss(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::dims(
            "bce predictions vs labels",
            predictions.len(),
            labels.len(),
        ));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("bce loss of an empty batch".into()));
    }
    if let Some(y) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::InvalidArgument(format!("label {y} is not 0 or 1")));
    }
    let total: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / predictions.len() as f64)
}

/// Per-layer `(d weights, d bias)` of the mean BCE loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

/// Backpropagation of the mean BCE loss over `batch`.
///
/// The output delta is `p - y`, the derivative of the unclamped loss; the clamp
/// only matters once a prediction is within `BCE_EPSILON` of 0 or 1.
pub fn gradients(model: &ReddModel, batch: ArrayView2<f64>, labels: &[f64]) -> Result<Gradients> {
    if batch.nrows() != labels.len() {
        return Err(Error::dims(
            "batch rows vs labels",
            batch.nrows(),
            labels.len(),
        ));
    }
    if batch.ncols() != model.input_dim() {
        return Err(Error::dims("model input", model.input_dim(), batch.ncols()));
    }
    Ok(backprop(model, batch, labels).1)
}

fn backprop(model: &ReddModel, batch: ArrayView2<f64>, labels: &[f64]) -> (Array1<f64>, Gradients) {
    let n = batch.nrows() as f64;
    let (pre, acts) = model.forward_cached(batch);
    let logits = pre.last().expect("at least one layer").column(0).to_owned();
    let probs = logits.mapv(sigmoid);
    let y = Array1::from(labels.to_vec());
    let mut delta: Array2<f64> = ((&probs - &y) / n).insert_axis(Axis(1));

    let mut grads = Vec::with_capacity(model.layers.len());
    for li in (0..model.layers.len()).rev() {
        let gw = delta.t().dot(&acts[li]);
        let gb = delta.sum_axis(Axis(0));
        grads.push((gw, gb));
        if li > 0 {
            let upstream = delta.dot(&model.layers[li].weights);
            let dact = pre[li - 1].mapv(|z| model.activation_derivative(z));
            delta = upstream * dact;
        }
    }
    grads.reverse();
    (probs, Gradients { layers: grads })
}

fn full_loss(model: &ReddModel, x: &Array2<f64>, y: &[f64]) -> Result<f64> {
    let p = model.logits_unchecked(x.view()).mapv(sigmoid);
    bce_loss(p.as_slice().expect("contiguous"), y)
}

/// Trained model plus the full-data train loss before training (index 0) and after each epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ReddModel,
    pub epoch_losses: Vec<f64>,
}

pub fn train(pages: &[&PageRecord], cfg: &TrainConfig) -> Result<ReddModel> {
    train_detailed(pages, cfg).map(|o| o.model)
}

pub fn train_detailed(pages: &[&PageRecord], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pages.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 training pages, got {}",
            pages.len()
        )));
    }
    let mut labels = Vec::with_capacity(pages.len());
    for p in pages {
        let label = p.label.ok_or_else(|| Error::InvalidRecord {
            page_id: p.page_id.clone(),
            reason: "training page has no label".into(),
        })?;
        labels.push(f64::from(label.as_u8()));
    }
    let positives = labels.iter().filter(|&&y| y == 1.0).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClass(format!(
            "{positives} positives among {} pages",
            labels.len()
        )));
    }
    let x = embedding_matrix(pages, EmbeddingField::Reduced)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "non-finite training embedding".into(),
        ));
    }

    let mut model = ReddModel::init(
        cfg.architecture,
        x.ncols(),
        &cfg.hidden_dims,
        derive_seed(cfg.seed, b"init"),
    )?;
    let mut shuffle_rng = seeded_rng(derive_seed(cfg.seed, b"shuffle"));
    let mut velocity: Vec<(Array2<f64>, Array1<f64>)> = model
        .layers
        .iter()
        .map(|l| {
            (
                Array2::zeros(l.weights.raw_dim()),
                Array1::zeros(l.bias.len()),
            )
        })
        .collect();

    let initial = full_loss(&model, &x, &labels)?;
    let mut epoch_losses = vec![initial];
    let mut order: Vec<usize> = (0..pages.len()).collect();
    let mut best = initial;
    let mut stale = 0;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<f64> = chunk.iter().map(|&i| labels[i]).collect();
            let (_, grads) = backprop(&model, xb.view(), &yb);
            for ((layer, (gw, gb)), (vw, vb)) in model
                .layers
                .iter_mut()
                .zip(grads.layers)
                .zip(velocity.iter_mut())
            {
                match cfg.optimizer {
                    OptimizerKind::Sgd => {
                        layer.weights.scaled_add(-cfg.learning_rate, &gw);
                        layer.bias.scaled_add(-cfg.learning_rate, &gb);
                    }
                    OptimizerKind::Momentum => {
                        vw.mapv_inplace(|v| v * cfg.momentum);
                        vw.scaled_add(1.0, &gw);
                        vb.mapv_inplace(|v| v * cfg.momentum);
                        vb.scaled_add(1.0, &gb);
                        layer.weights.scaled_add(-cfg.learning_rate, vw);
                        layer.bias.scaled_add(-cfg.learning_rate, vb);
                    }
                }
            }
            if !model.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    detail: format!(
                        "non-finite weights; last epoch loss {:?}",
                        epoch_losses.last()
                    ),
                });
            }
        }
        let loss = full_loss(&model, &x, &labels)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                step: 0,
                detail: format!("train loss {loss}"),
            });
        }
        epoch_losses.push(loss);
        epochs_run = epoch;
        if let Some(es) = &cfg.early_stop {
            if loss < best - es.min_delta {
                best = loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= es.patience {
                    break;
                }
            }
        }
    }

    model.round_to_f32();
    let final_loss = full_loss(&model, &x, &labels)?;
    model.training = Some(TrainingMeta {
        seed: cfg.seed,
        epochs: cfg.epochs,
        epochs_run,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        optimizer: match cfg.optimizer {
            OptimizerKind::Sgd => "sgd".into(),
            OptimizerKind::Momentum => format!("momentum({})", cfg.momentum),
        },
        initial_train_loss: initial,
        final_train_loss: final_loss,
        n_train: pages.len(),
    });
    Ok(TrainOutcome {
        model,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn bce_examples() {
        let l = bce_loss(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap() <= 1e-6);
        assert!(bce_loss(&[0.0], &[1.0]).unwrap().is_finite());
        assert!(bce_loss(&[0.5], &[1.0, 0.0]).is_err());
        assert!(bce_loss(&[0.5], &[0.3]).is_err());
    }

    #[test]
    fn bce_matches_summation_oracle() {
        let mut rng = seeded_rng(3);
        let p: Vec<f64> = (0..257).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..257)
            .map(|_| if rng.random_bool(0.4) { 1.0 } else { 0.0 })
            .collect();
        let mut oracle = 0.0;
        for i in 0..p.len() {
            let q = p[i].max(1e-7).min(1.0 - 1e-7);
            oracle += if y[i] == 1.0 {
                -q.ln()
            } else {
                -(1.0 - q).ln()
            };
        }
        oracle /= p.len() as f64;
        assert!((bce_loss(&p, &y).unwrap() - oracle).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate().unwrap_err(), Error::Config { .. }));
        let cfg = TrainConfig {
            hidden_dims: vec![3],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            architecture: Architecture::Linear,
            hidden_dims: vec![],
            ..Default::default()
        };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn config_parses_from_toml() {
        let cfg: TrainConfig =
            toml::from_str("epochs = 10\noptimizer = \"momentum\"\n[early_stop]\npatience = 3\n")
                .unwrap();
        assert_eq!(cfg.epochs, 10);
        assert_eq!(cfg.optimizer, OptimizerKind::Momentum);
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.early_stop.unwrap().patience, 3);
    }

    fn labeled(id: usize, v: Vec<f32>, y: u8) -> PageRecord {
        let mut p = PageRecord::new(format!("p{id}"), "d", "en");
        p.embedding_reduced = Some(v);
        p.label = crate::corpus::Label::from_u8(y);
        p
    }

    #[test]
    fn rejects_bad_training_sets() {
        let a = labeled(0, vec![1.0], 1);
        let b = labeled(1, vec![2.0], 1);
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(&[&a, &b], &cfg).unwrap_err(),
            Error::SingleClass(_)
        ));
        assert!(train(&[&a], &cfg).is_err());
        let mut c = labeled(2, vec![0.0], 0);
        c.label = None;
        assert!(train(&[&a, &c], &cfg).is_err());
    }

    #[test]
    fn diverging_training_reports() {
        let pages: Vec<PageRecord> = (0..20)
            .map(|i| labeled(i, vec![1e30, -1e30], (i % 2) as u8))
            .collect();
        let refs: Vec<&PageRecord> = pages.iter().collect();
        let cfg = TrainConfig {
            learning_rate: 1e10,
            epochs: 3,
            ..Default::default()
        };
        let err = train(&refs, &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn early_stop_truncates() {
        let mut rng = seeded_rng(1);
        let pages: Vec<PageRecord> = (0..40)
            .map(|i| {
                labeled(
                    i,
                    (0..3).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
                    (i % 2) as u8,
                )
            })
            .collect();
        let refs: Vec<&PageRecord> = pages.iter().collect();
        let cfg = TrainConfig {
            epochs: 500,
            early_stop: Some(EarlyStop {
                patience: 2,
                min_delta: 1.0,
            }),
            ..Default::default()
        };
        let out = train_detailed(&refs, &cfg).unwrap();
        assert_eq!(out.model.training.unwrap().epochs_run, 2);
    }
}
