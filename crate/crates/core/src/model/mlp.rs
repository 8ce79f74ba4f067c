use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::transformer::{bias_grad, gelu, gelu_grad, glorot, row_bias};
use super::{focal_logit_grad, focal_loss, sigmoid, Scorer, StreamConfig};
use crate::{Error, Result};

/// Per-unit baseline: `D -> hidden -> 1` with a GELU hidden layer and no
/// sequence context.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub config: StreamConfig,
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
}

impl MlpModel {
    pub fn new(input_dim: usize, config: &StreamConfig) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let hidden = config.hidden();
        Ok(MlpModel {
            config: config.clone(),
            w1: glorot(&mut rng, input_dim, hidden),
            b1: row_bias(hidden),
            w2: glorot(&mut rng, hidden, 1),
            b2: row_bias(1),
        })
    }

    pub fn tensor_names(&self) -> Vec<String> {
        ["w1", "b1", "w2", "b2"].iter().map(|s| s.to_string()).collect()
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.w1.nrows() {
            return Err(Error::invalid(format!(
                "feature dimension {} does not match model input {}",
                x.ncols(),
                self.w1.nrows()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::invalid("empty sequence"));
        }
        Ok(())
    }
}

impl Scorer for MlpModel {
    fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    fn logits(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let act = (x.dot(&self.w1) + &self.b1).mapv(gelu);
        Ok((act.dot(&self.w2) + &self.b2).column(0).to_vec())
    }

    fn loss_and_grad(&self, x: &Array2<f64>, labels: &[u8], alpha: f64, gamma: f64) -> Result<(f64, Self)> {
        self.check_input(x)?;
        if labels.len() != x.nrows() {
            return Err(Error::invalid(format!(
                "{} labels for {} units",
                labels.len(),
                x.nrows()
            )));
        }
        let z1 = x.dot(&self.w1) + &self.b1;
        let act = z1.mapv(gelu);
        let logits = (act.dot(&self.w2) + &self.b2).column(0).to_vec();
        let scores: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
        let loss = focal_loss(&scores, labels, alpha, gamma)?;
        let n = logits.len() as f64;
        let d_logits = Array2::from_shape_fn((logits.len(), 1), |(i, _)| {
            focal_logit_grad(logits[i], labels[i], alpha, gamma) / n
        });
        let d_z1 = d_logits.dot(&self.w2.t()) * z1.mapv(gelu_grad);
        let grad = MlpModel {
            config: self.config.clone(),
            w1: x.t().dot(&d_z1),
            b1: bias_grad(&d_z1),
            w2: act.t().dot(&d_logits),
            b2: bias_grad(&d_logits),
        };
        Ok((loss, grad))
    }

    fn tensors(&self) -> Vec<&Array2<f64>> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}
