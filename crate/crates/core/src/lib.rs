//! Trailer moment detection on pre-extracted video features.
//!
//! The crate covers the whole pipeline:
//!
//! - [`hashmatch`]: difference hashes of frames, Hamming nearest-neighbour
//!   search against trailer frames, and thresholding into frame labels.
//! - [`timeline`]: clip/shot segmentation, subtitle alignment and the
//!   one-third label aggregation rule.
//! - [`features`]: the binary feature container, shot pooling and a
//!   synthetic data generator with planted ground truth.
//! - [`model`]: per-stream transformer scorer trained with focal loss, the
//!   MLP and random baselines, Adam and checkpoints.
//! - [`fusion`]: upsampling unit scores to frames and late fusion by averaging.
//! - [`eval`]: binarization, precision/recall/F1 and multi-seed reports.
//! - [`pipeline`]: the on-disk stages driven by the command line tool.

pub mod error;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod hashmatch;
pub mod model;
pub mod pipeline;
pub mod timeline;

pub use error::{Error, FormatError, Result};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Input modality of a feature stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Visual,
    Textual,
}

/// Temporal unit of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Clip,
    Shot,
    Frame,
}

/// One (modality, scale) combination, e.g. `visual-clip`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StreamId {
    pub modality: Modality,
    pub scale: Scale,
}

impl StreamId {
    pub const VISUAL_CLIP: StreamId = StreamId::new(Modality::Visual, Scale::Clip);
    pub const TEXTUAL_CLIP: StreamId = StreamId::new(Modality::Textual, Scale::Clip);
    pub const VISUAL_SHOT: StreamId = StreamId::new(Modality::Visual, Scale::Shot);
    pub const TEXTUAL_SHOT: StreamId = StreamId::new(Modality::Textual, Scale::Shot);

    /// The four streams in table order: visual clip, textual clip, visual shot, textual shot.
    pub const ALL: [StreamId; 4] = [
        Self::VISUAL_CLIP,
        Self::TEXTUAL_CLIP,
        Self::VISUAL_SHOT,
        Self::TEXTUAL_SHOT,
    ];

    pub const fn new(modality: Modality, scale: Scale) -> Self {
        StreamId { modality, scale }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Visual => "visual",
            Modality::Textual => "textual",
        })
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Clip => "clip",
            Scale::Shot => "shot",
            Scale::Frame => "frame",
        })
    }
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.modality, self.scale)
    }
}

impl FromStr for StreamId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (m, sc) = s
            .split_once('-')
            .ok_or_else(|| Error::invalid(format!("stream '{s}' is not <modality>-<scale>")))?;
        let modality = match m {
            "visual" => Modality::Visual,
            "textual" => Modality::Textual,
            _ => return Err(Error::invalid(format!("unknown modality '{m}'"))),
        };
        let scale = match sc {
            "clip" => Scale::Clip,
            "shot" => Scale::Shot,
            _ => return Err(Error::invalid(format!("unknown stream scale '{sc}'"))),
        };
        Ok(StreamId { modality, scale })
    }
}

impl Serialize for StreamId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StreamId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
