use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, EarlyStopping, MlpModel, ModelKind, Scorer, StreamConfig, StreamModel, TransformerModel};
use crate::eval::Confusion;
use crate::timeline::{validate_tiling, Interval};
use crate::{Error, Result};

/// One episode of one stream: unit features, unit labels and the frame-level
/// ground truth used for F1 monitoring.
#[derive(Debug, Clone)]
pub struct StreamExample {
    pub id: String,
    pub features: Array2<f64>,
    pub unit_labels: Vec<u8>,
    pub bounds: Vec<Interval>,
    pub frame_labels: Vec<u8>,
}

impl StreamExample {
    pub fn validate(&self) -> Result<()> {
        let n = self.features.nrows();
        if n == 0 || n != self.unit_labels.len() || n != self.bounds.len() {
            return Err(Error::invalid(format!(
                "{}: {} feature rows, {} labels, {} units",
                self.id,
                n,
                self.unit_labels.len(),
                self.bounds.len()
            )));
        }
        validate_tiling(&self.bounds, self.frame_labels.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(rename = "val_F1")]
    pub val_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: StreamModel,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (the last one without early stopping).
    pub best_epoch: usize,
}

/// Frame-level confusion of thresholded unit scores, summed over episodes.
pub fn frame_confusion<S: Scorer>(model: &S, examples: &[StreamExample], threshold: f64) -> Result<Confusion> {
    let mut total = Confusion::default();
    for ex in examples {
        let logits = model.logits(&ex.features)?;
        let mut pred = Vec::with_capacity(ex.frame_labels.len());
        for (b, &z) in ex.bounds.iter().zip(&logits) {
            let label = u8::from(super::sigmoid(z) >= threshold);
            pred.extend(std::iter::repeat_n(label, b.len()));
        }
        total = total + Confusion::from_labels(&pred, &ex.frame_labels)?;
    }
    Ok(total)
}

/// Trains one stream scorer with Adam, one episode per step in a seeded
/// shuffled order.
pub fn train_stream(
    train: &[StreamExample],
    val: &[StreamExample],
    kind: ModelKind,
    config: &StreamConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let first = train
        .first()
        .ok_or_else(|| Error::Training("training set is empty".into()))?;
    let dim = first.features.ncols();
    for ex in train.iter().chain(val) {
        ex.validate()?;
        if ex.features.ncols() != dim {
            return Err(Error::invalid(format!(
                "{}: feature dimension {} differs from {dim}",
                ex.id,
                ex.features.ncols()
            )));
        }
    }
    let positives: usize = train
        .iter()
        .map(|e| e.unit_labels.iter().filter(|&&l| l == 1).count())
        .sum();
    let units: usize = train.iter().map(|e| e.unit_labels.len()).sum();
    if positives == 0 || positives == units {
        return Err(Error::Training(format!(
            "training labels are all one class ({positives} of {units} units positive)"
        )));
    }
    if matches!(config.early_stopping, EarlyStopping::Patience(_)) && val.is_empty() {
        return Err(Error::Training("early stopping needs a validation set".into()));
    }
    let model = match kind {
        ModelKind::Transformer => StreamModel::Transformer(TransformerModel::new(dim, config)?),
        ModelKind::Mlp => StreamModel::Mlp(MlpModel::new(dim, config)?),
        ModelKind::Random => return Err(Error::Training("the random baseline has no parameters to train".into())),
    };
    fit(model, train, val, config)
}

fn fit(
    mut model: StreamModel,
    train: &[StreamExample],
    val: &[StreamExample],
    config: &StreamConfig,
) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut adam = Adam::new(config.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.n_epochs);
    let mut best: Option<(f64, usize, StreamModel)> = None;

    for epoch in 1..=config.n_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for &i in &order {
            let ex = &train[i];
            let (loss, grad) = model.loss_and_grad(&ex.features, &ex.unit_labels, config.alpha, config.gamma)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("loss became {loss} at epoch {epoch}")));
            }
            loss_sum += loss;
            adam.update(&mut model, &grad);
        }
        let val_f1 = if val.is_empty() {
            None
        } else {
            Some(frame_confusion(&model, val, config.threshold)?.metrics().f1)
        };
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_f1,
        });
        if let EarlyStopping::Patience(patience) = config.early_stopping {
            let f1 = val_f1.expect("validation set checked above");
            if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                best = Some((f1, epoch, model.clone()));
            } else if epoch - best.as_ref().map_or(0, |b| b.1) >= patience as usize {
                break;
            }
        }
    }
    Ok(match best {
        Some((_, best_epoch, m)) => TrainOutcome {
            model: m,
            history,
            best_epoch,
        },
        None => TrainOutcome {
            model,
            best_epoch: history.len(),
            history,
        },
    })
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for rec in history {
        w.serialize(rec).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
