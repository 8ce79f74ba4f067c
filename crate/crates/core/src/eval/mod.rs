//! Frame-level precision, recall and F1 against editor labels.

mod plot;

pub use plot::{ascii_timeline, svg_timeline};

use serde::{Deserialize, Serialize};

use crate::fusion::FrameScoreTrack;
use crate::timeline::LabelTrack;
use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Frame label 1 iff score >= threshold.
pub fn binarize(track: &FrameScoreTrack, threshold: f64) -> Result<LabelTrack> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!("threshold {threshold} outside [0, 1]")));
    }
    LabelTrack::frames(track.scores.iter().map(|&s| u8::from(s >= threshold)).collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn from_labels(pred: &[u8], gold: &[u8]) -> Result<Self> {
        if pred.len() != gold.len() {
            return Err(Error::invalid(format!(
                "{} predictions vs {} gold labels",
                pred.len(),
                gold.len()
            )));
        }
        let mut c = Confusion::default();
        for (&p, &g) in pred.iter().zip(gold) {
            match (p, g) {
                (1, 1) => c.tp += 1,
                (1, _) => c.fp += 1,
                (_, 1) => c.fn_ += 1,
                _ => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn metrics(&self) -> Metrics {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics { precision, recall, f1 }
    }
}

impl std::ops::Add for Confusion {
    type Output = Confusion;

    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl std::iter::Sum for Confusion {
    fn sum<I: Iterator<Item = Confusion>>(iter: I) -> Confusion {
        iter.fold(Confusion::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 with 0 for every zero denominator.
pub fn prf1(pred: &LabelTrack, gold: &LabelTrack) -> Result<Metrics> {
    Ok(Confusion::from_labels(pred.labels(), gold.labels())?.metrics())
}

/// Metrics of one seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

impl SeedRun {
    pub fn new(seed: u64, confusion: Confusion) -> Self {
        let m = confusion.metrics();
        SeedRun {
            seed,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            confusion,
        }
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            precision: self.precision,
            recall: self.recall,
            f1: self.f1,
        }
    }
}

/// Mean and sample standard deviation over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Streams fused for this report, e.g. `["visual-clip", "textual-shot"]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub streams: Vec<String>,
    pub per_seed: Vec<SeedRun>,
    pub mean: Metrics,
    pub std: Metrics,
    /// Confusion counts summed over seeds.
    pub confusion: Confusion,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn multi_seed_report(runs: &[SeedRun]) -> Result<EvalReport> {
    if runs.is_empty() {
        return Err(Error::invalid("report needs at least one run"));
    }
    let stat = |f: fn(&SeedRun) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>());
    let (p, p_sd) = stat(|r| r.precision);
    let (r, r_sd) = stat(|r| r.recall);
    let (f, f_sd) = stat(|r| r.f1);
    Ok(EvalReport {
        streams: Vec::new(),
        per_seed: runs.to_vec(),
        mean: Metrics {
            precision: p,
            recall: r,
            f1: f,
        },
        std: Metrics {
            precision: p_sd,
            recall: r_sd,
            f1: f_sd,
        },
        confusion: runs.iter().map(|r| r.confusion).sum(),
    })
}
