//! Pre-extracted unit embeddings.
//!
//! On disk a feature matrix is stored as:
//!
//! ```text
//! "TRLF" | version u8 | modality u8 | scale u8 | D u32 LE | N u32 LE | N*D f32 LE, row-major
//! ```
//!
//! Modality codes are 0 visual, 1 textual, 2 mixed (fused score tracks);
//! scale codes are 0 clip, 1 shot, 2 frame.

mod pool;
pub mod synth;

pub use pool::pool_shot_features;

use std::fs;
use std::path::Path;

use crate::timeline::VideoTimeline;
use crate::{Error, FormatError, Modality, Result, Scale, StreamId};

pub const MAGIC: [u8; 4] = *b"TRLF";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 15;

pub(crate) const MODALITY_MIXED: u8 = 2;

pub(crate) fn modality_code(m: Modality) -> u8 {
    match m {
        Modality::Visual => 0,
        Modality::Textual => 1,
    }
}

pub(crate) fn scale_code(s: Scale) -> u8 {
    match s {
        Scale::Clip => 0,
        Scale::Shot => 1,
        Scale::Frame => 2,
    }
}

fn scale_from_code(c: u8) -> Result<Scale, FormatError> {
    match c {
        0 => Ok(Scale::Clip),
        1 => Ok(Scale::Shot),
        2 => Ok(Scale::Frame),
        _ => Err(FormatError::BadScale(c)),
    }
}

/// Decoded container before any semantic checks on the modality.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RawMatrix {
    pub modality: u8,
    pub scale: Scale,
    pub dim: usize,
    pub rows: usize,
    pub data: Vec<f32>,
}

pub(crate) fn encode_matrix(modality: u8, scale: Scale, dim: usize, data: &[f32]) -> Vec<u8> {
    let rows = data.len().checked_div(dim).unwrap_or(0);
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * 4);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(modality);
    out.push(scale_code(scale));
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub(crate) fn decode_matrix(bytes: &[u8]) -> Result<RawMatrix, FormatError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(FormatError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        return Err(FormatError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    if bytes[4] != VERSION {
        return Err(FormatError::UnsupportedVersion(bytes[4]));
    }
    let modality = bytes[5];
    if modality > MODALITY_MIXED {
        return Err(FormatError::BadModality(modality));
    }
    let scale = scale_from_code(bytes[6])?;
    let dim = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let rows = u32::from_le_bytes(bytes[11..15].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(FormatError::Malformed("dimension is zero".into()));
    }
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| FormatError::Malformed("payload size overflows".into()))?;
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FormatError::TrailingBytes(bytes.len() - expected));
    }
    let data: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(FormatError::NonFinite {
            row: i / dim,
            col: i % dim,
        });
    }
    Ok(RawMatrix {
        modality,
        scale,
        dim,
        rows,
        data,
    })
}

pub(crate) fn read_bytes(path: &Path, hint: &str) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact {
                path: path.to_path_buf(),
                hint: hint.to_string(),
            }
        } else {
            Error::io(path, e)
        }
    })
}

/// `N x D` embeddings of one (modality, scale) stream of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub modality: Modality,
    pub scale: Scale,
    dim: usize,
    data: Vec<f32>,
    /// Extractor tag; not stored in the binary container.
    pub provenance: String,
}

impl FeatureSequence {
    pub fn new(modality: Modality, scale: Scale, dim: usize, data: Vec<f32>) -> Result<Self> {
        if scale == Scale::Frame {
            return Err(Error::invalid("feature streams are clip or shot scale"));
        }
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} values do not form rows of dimension {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite {
                row: i / dim,
                col: i % dim,
            }
            .into());
        }
        Ok(FeatureSequence {
            modality,
            scale,
            dim,
            data,
            provenance: String::new(),
        })
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn stream(&self) -> StreamId {
        StreamId::new(self.modality, self.scale)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Rows scaled to unit Euclidean norm; all-zero rows stay zero.
    pub fn l2_normalized(&self) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.dim) {
            let norm = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v = (*v as f64 / norm) as f32);
            }
        }
        FeatureSequence { data, ..self.clone() }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_matrix(modality_code(self.modality), self.scale, self.dim, &self.data)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let raw = decode_matrix(bytes)?;
        let modality = match raw.modality {
            0 => Modality::Visual,
            1 => Modality::Textual,
            c => return Err(FormatError::BadModality(c).into()),
        };
        if raw.scale == Scale::Frame {
            return Err(FormatError::BadScale(scale_code(raw.scale)).into());
        }
        Ok(FeatureSequence {
            modality,
            scale: raw.scale,
            dim: raw.dim,
            data: raw.data,
            provenance: String::new(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Checks the row count against the timeline's units at this sequence's scale.
    pub fn check_against(&self, timeline: &VideoTimeline) -> Result<()> {
        let expected = timeline.unit_count(self.scale);
        if self.rows() != expected {
            return Err(FormatError::CountMismatch {
                expected,
                found: self.rows(),
            }
            .into());
        }
        Ok(())
    }
}

/// Reads and validates a feature file, optionally against a timeline.
pub fn load_features(path: &Path, timeline: Option<&VideoTimeline>) -> Result<FeatureSequence> {
    let bytes = read_bytes(path, "feature file not found; run `synth` or supply extracted features")?;
    let seq = FeatureSequence::from_bytes(&bytes)?;
    if let Some(tl) = timeline {
        seq.check_against(tl)?;
    }
    Ok(seq.with_provenance(path.display().to_string()))
}
