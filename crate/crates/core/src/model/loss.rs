use crate::{Error, Result};

/// Scores are clamped to `[SCORE_CLAMP, 1 - SCORE_CLAMP]` before taking logs.
pub const SCORE_CLAMP: f64 = 1e-12;

/// Focal loss of one prediction: `-alpha * (1 - p)^gamma * ln(p)` where `p`
/// is the probability assigned to the true label.
pub fn focal_loss_unit(score: f64, label: u8, alpha: f64, gamma: f64) -> f64 {
    let s = score.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
    let p = if label == 1 { s } else { 1.0 - s };
    -alpha * (1.0 - p).powf(gamma) * p.ln()
}

/// Mean focal loss over a sequence.
pub fn focal_loss(scores: &[f64], labels: &[u8], alpha: f64, gamma: f64) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::invalid("empty sequence"));
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| focal_loss_unit(s, y, alpha, gamma))
        .sum();
    Ok(total / scores.len() as f64)
}

/// Derivative of the per-unit focal loss with respect to the logit `z`.
///
/// With `p = sigmoid(+-z)` the probability of the true label,
/// `dL/dz = +-alpha * (1 - p)^gamma * (gamma * p * ln p - (1 - p))`.
pub fn focal_logit_grad(z: f64, label: u8, alpha: f64, gamma: f64) -> f64 {
    let sign = if label == 1 { 1.0 } else { -1.0 };
    let x = sign * z;
    let p = super::sigmoid(x);
    let q = super::sigmoid(-x);
    sign * alpha * q.powf(gamma) * (gamma * p * ln_sigmoid(x) - q)
}

fn ln_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_costs_nothing() {
        assert!(focal_loss(&[1.0 - 1e-15], &[1], 0.95, 1.0).unwrap() < 1e-9);
        assert!(focal_loss(&[0.0], &[0], 0.95, 1.0).unwrap() < 1e-9);
    }

    #[test]
    fn hand_evaluated_half() {
        let l = focal_loss(&[0.5], &[1], 0.95, 1.0).unwrap();
        assert!((l - 0.95 * 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!((l - 0.329245).abs() < 1e-6);
    }

    #[test]
    fn reduces_to_bce() {
        let l = focal_loss(&[0.5], &[0], 1.0, 0.0).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        let scores = [0.1, 0.7, 0.99, 0.3];
        let labels = [0, 1, 1, 0];
        let bce: f64 = scores
            .iter()
            .zip(labels)
            .map(|(&s, y): (&f64, u8)| if y == 1 { -s.ln() } else { -(1.0 - s).ln() })
            .sum::<f64>()
            / 4.0;
        assert!((focal_loss(&scores, &labels, 1.0, 0.0).unwrap() - bce).abs() < 1e-12);
        assert!((focal_loss(&scores, &labels, 0.3, 0.0).unwrap() - 0.3 * bce).abs() < 1e-12);
    }

    #[test]
    fn nonincreasing_in_true_class_probability() {
        for gamma in [0.0, 0.5, 1.0, 2.0] {
            let mut prev = f64::INFINITY;
            for i in 1..1000 {
                let p = i as f64 / 1000.0;
                let l = focal_loss_unit(p, 1, 0.95, gamma);
                assert!(l <= prev);
                prev = l;
            }
        }
    }

    #[test]
    fn length_mismatch() {
        assert!(focal_loss(&[0.5, 0.5], &[1], 0.9, 1.0).is_err());
    }

    #[test]
    fn logit_gradient_matches_difference_quotient() {
        let h = 1e-6;
        for &label in &[0u8, 1] {
            for &gamma in &[0.0, 1.0, 2.5] {
                for &z in &[-6.0, -1.3, 0.0, 0.4, 3.7] {
                    let f = |z: f64| focal_loss_unit(super::super::sigmoid(z), label, 0.95, gamma);
                    let fd = (f(z + h) - f(z - h)) / (2.0 * h);
                    let g = focal_logit_grad(z, label, 0.95, gamma);
                    assert!((fd - g).abs() < 1e-7, "label {label} gamma {gamma} z {z}: {fd} vs {g}");
                }
            }
        }
    }
}
