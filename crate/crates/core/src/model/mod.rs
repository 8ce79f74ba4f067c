//! Per-stream trailerness scorers.
//!
//! All arithmetic is f64. Gradients are derived by hand and verified
//! against central finite differences in the test suite.

mod adam;
mod checkpoint;
mod config;
mod loss;
mod mlp;
mod pe;
mod random;
mod train;
mod transformer;

pub use adam::Adam;
pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use config::{EarlyStopping, ModelKind, StreamConfig};
pub use loss::{focal_logit_grad, focal_loss, focal_loss_unit, SCORE_CLAMP};
pub use mlp::MlpModel;
pub use pe::positional_encoding;
pub use random::random_baseline;
pub use train::{frame_confusion, train_stream, write_history_csv, EpochRecord, StreamExample, TrainOutcome};
pub use transformer::{layer_norm_rows, softmax_rows, TransformerModel};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scale};

/// Per-unit (or per-frame) trailerness likelihoods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTrack {
    granularity: Scale,
    scores: Vec<f64>,
}

impl ScoreTrack {
    pub fn new(granularity: Scale, scores: Vec<f64>) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::invalid(format!("score {} at {i} outside [0, 1]", scores[i])));
        }
        Ok(ScoreTrack { granularity, scores })
    }

    pub fn granularity(&self) -> Scale {
        self.granularity
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A differentiable per-sequence scorer whose parameters are a list of matrices.
///
/// The gradient of a model is represented by a model of the same shape.
pub trait Scorer: Clone + Send + Sync {
    fn input_dim(&self) -> usize;

    /// Pre-sigmoid outputs, one per input row.
    fn logits(&self, x: &Array2<f64>) -> Result<Vec<f64>>;

    /// Mean focal loss over the rows and its gradient.
    fn loss_and_grad(&self, x: &Array2<f64>, labels: &[u8], alpha: f64, gamma: f64) -> Result<(f64, Self)>;

    fn tensors(&self) -> Vec<&Array2<f64>>;

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>>;

    fn scores(&self, x: &Array2<f64>, scale: Scale) -> Result<ScoreTrack> {
        ScoreTrack::new(scale, self.logits(x)?.into_iter().map(sigmoid).collect())
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// A trained scorer of either architecture.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamModel {
    Transformer(TransformerModel),
    Mlp(MlpModel),
}

impl StreamModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            StreamModel::Transformer(_) => ModelKind::Transformer,
            StreamModel::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn config(&self) -> &StreamConfig {
        match self {
            StreamModel::Transformer(m) => &m.config,
            StreamModel::Mlp(m) => &m.config,
        }
    }

    pub fn tensor_names(&self) -> Vec<String> {
        match self {
            StreamModel::Transformer(m) => m.tensor_names(),
            StreamModel::Mlp(m) => m.tensor_names(),
        }
    }
}

impl Scorer for StreamModel {
    fn input_dim(&self) -> usize {
        match self {
            StreamModel::Transformer(m) => m.input_dim(),
            StreamModel::Mlp(m) => m.input_dim(),
        }
    }

    fn logits(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        match self {
            StreamModel::Transformer(m) => m.logits(x),
            StreamModel::Mlp(m) => m.logits(x),
        }
    }

    fn loss_and_grad(&self, x: &Array2<f64>, labels: &[u8], alpha: f64, gamma: f64) -> Result<(f64, Self)> {
        Ok(match self {
            StreamModel::Transformer(m) => {
                let (l, g) = m.loss_and_grad(x, labels, alpha, gamma)?;
                (l, StreamModel::Transformer(g))
            }
            StreamModel::Mlp(m) => {
                let (l, g) = m.loss_and_grad(x, labels, alpha, gamma)?;
                (l, StreamModel::Mlp(g))
            }
        })
    }

    fn tensors(&self) -> Vec<&Array2<f64>> {
        match self {
            StreamModel::Transformer(m) => m.tensors(),
            StreamModel::Mlp(m) => m.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        match self {
            StreamModel::Transformer(m) => m.tensors_mut(),
            StreamModel::Mlp(m) => m.tensors_mut(),
        }
    }
}

/// Feature rows as an f64 matrix.
pub fn to_matrix(features: &crate::features::FeatureSequence) -> Array2<f64> {
    Array2::from_shape_vec(
        (features.rows(), features.dim()),
        features.as_slice().iter().map(|&v| v as f64).collect(),
    )
    .expect("rows * dim matches the buffer")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn score_track_range() {
        assert!(ScoreTrack::new(Scale::Clip, vec![0.0, 0.5, 1.0]).is_ok());
        assert!(ScoreTrack::new(Scale::Clip, vec![1.5]).is_err());
        assert!(ScoreTrack::new(Scale::Clip, vec![f64::NAN]).is_err());
    }
}
