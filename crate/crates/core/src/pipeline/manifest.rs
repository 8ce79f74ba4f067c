use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::synth::SynthConfig;
use crate::{Error, Result, StreamId};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

/// One episode of a dataset. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub id: String,
    pub split: Split,
    /// Directory of episode frames (`frame_*.pgm` / `.png`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<PathBuf>,
    /// Directory of trailer frames.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trailer: Option<PathBuf>,
    /// Serialized timeline (frame count, clip and shot bounds). Without it
    /// the frame count comes from the frames directory and shots from the
    /// naive cut detector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeline: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtitles: Option<PathBuf>,
    /// Precomputed frame labels (label-run JSONL), used when no frames are given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub features: BTreeMap<StreamId, PathBuf>,
}

/// Provenance of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthInfo {
    pub seed: u64,
    pub config: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub fps: f64,
    pub clip_len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SynthInfo>,
    pub episodes: Vec<EpisodeEntry>,
    /// Directory containing the manifest; relative paths resolve against it.
    #[serde(skip)]
    pub root: PathBuf,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact {
                path: path.to_path_buf(),
                hint: "dataset manifest not found; run the `synth` stage or write a manifest".into(),
            },
            _ => Error::io(path, e),
        })?;
        let mut m: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::invalid(format!(
                "{}: manifest version {} (expected {MANIFEST_VERSION})",
                path.display(),
                m.version
            )));
        }
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes.is_empty() {
            return Err(Error::invalid("manifest lists no episodes"));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) || self.clip_len == 0 {
            return Err(Error::invalid("manifest fps and clip_len must be positive"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for ep in &self.episodes {
            if ep.id.is_empty() || ep.id.contains(['/', '\\']) || !seen.insert(&ep.id) {
                return Err(Error::invalid(format!(
                    "episode id {:?} is empty, unsafe or repeated",
                    ep.id
                )));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn split(&self, split: Split) -> Vec<&EpisodeEntry> {
        self.episodes.iter().filter(|e| e.split == split).collect()
    }
}

/// Train/val/test counts for `n` items at 60/20/20.
///
/// Largest-remainder apportionment: each split gets the floor of its quota and
/// the leftover items go to the largest fractional parts, ties favouring the
/// later split. 63 items give 38/12/13.
pub fn split_counts(n: usize) -> [usize; 3] {
    const PERCENT: [usize; 3] = [60, 20, 20];
    let mut counts = PERCENT.map(|p| n * p / 100);
    let remainders = PERCENT.map(|p| n * p % 100);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(b.cmp(&a)));
    let leftover = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(leftover) {
        counts[i] += 1;
    }
    counts
}

/// Seeded assignment of `n` items to splits with [`split_counts`] sizes.
pub fn assign_splits(n: usize, seed: u64) -> Vec<Split> {
    let counts = split_counts(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Split::Train; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < counts[0] {
            Split::Train
        } else if rank < counts[0] + counts[1] {
            Split::Val
        } else {
            Split::Test
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn corpus_split() {
        assert_eq!(split_counts(63), [38, 12, 13]);
        assert_eq!(split_counts(10), [6, 2, 2]);
        assert_eq!(split_counts(1), [1, 0, 0]);
        assert_eq!(split_counts(2), [1, 0, 1]);
        assert_eq!(split_counts(0), [0, 0, 0]);
    }

    #[test]
    fn assignment_is_seeded() {
        let a = assign_splits(63, 4);
        assert_eq!(a, assign_splits(63, 4));
        assert_ne!(a, assign_splits(63, 5));
        assert_eq!(a.iter().filter(|&&s| s == Split::Test).count(), 13);
    }

    #[test]
    fn rejects_duplicate_ids() {
        let ep = EpisodeEntry {
            id: "a".into(),
            split: Split::Train,
            frames: None,
            trailer: None,
            timeline: None,
            subtitles: None,
            labels: None,
            features: BTreeMap::new(),
        };
        let m = Manifest {
            version: 1,
            fps: 25.0,
            clip_len: 64,
            synthetic: None,
            episodes: vec![ep.clone(), ep],
            root: PathBuf::new(),
        };
        assert!(m.validate().is_err());
    }

    proptest! {
        #[test]
        fn counts_sum_and_stay_near_quota(n in 0usize..5000) {
            let c = split_counts(n);
            prop_assert_eq!(c.iter().sum::<usize>(), n);
            for (count, p) in c.iter().zip([60usize, 20, 20]) {
                let quota = (n * p) as f64 / 100.0;
                prop_assert!((*count as f64 - quota).abs() < 1.0);
            }
        }
    }
}
