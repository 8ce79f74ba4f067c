//! Artifact-producing stages: synth, labels, train, predict, fuse, eval, grid.
//!
//! Every stage reads a dataset manifest and a [`RunConfig`], writes its
//! outputs under the run's output directory, and records a JSON stage log
//! with the SHA-256 of every input it consumed. Stages are pure functions of
//! their inputs, so reruns reproduce outputs byte for byte.

mod data;
mod manifest;
mod stages;

pub use data::{load_frame_labels, load_stream_features, load_timeline, stream_examples};
pub use manifest::{assign_splits, split_counts, EpisodeEntry, Manifest, Split, SynthInfo, MANIFEST_VERSION};
pub use stages::{run_eval, run_fuse, run_grid, run_labels, run_predict, run_train, synthesize, SynthOptions};

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::hashmatch::DEFAULT_TAU;
use crate::model::{ModelKind, StreamConfig};
use crate::{Error, Result, StreamId};

/// Settings shared by the stages of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    /// Hamming threshold for editor-label matching.
    pub tau: u32,
    /// Mean-absolute-difference threshold of the fallback cut detector.
    pub cut_threshold: f64,
    /// Streams to train and predict.
    pub streams: Vec<StreamId>,
    pub model: ModelKind,
    /// Hyperparameters for every stream; the model kind's defaults when absent.
    pub stream_config: Option<StreamConfig>,
    /// Per-stream replacements for `stream_config`.
    pub stream_overrides: BTreeMap<StreamId, StreamConfig>,
    pub seeds: Vec<u64>,
    pub l2_normalize: bool,
    /// Stream subsets fused and evaluated by `fuse` and `eval`. Empty means one
    /// subset holding every configured stream.
    pub fusion: Vec<Vec<StreamId>>,
    /// Decision threshold for evaluation.
    pub threshold: f64,
    /// Columns of the ASCII timeline plots.
    pub plot_width: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest: PathBuf::from("data/manifest.json"),
            output_dir: PathBuf::from("runs"),
            tau: DEFAULT_TAU,
            cut_threshold: 70.0,
            streams: StreamId::ALL.to_vec(),
            model: ModelKind::Transformer,
            stream_config: None,
            stream_overrides: BTreeMap::new(),
            seeds: (0..5).collect(),
            l2_normalize: false,
            fusion: Vec::new(),
            threshold: crate::eval::DEFAULT_THRESHOLD,
            plot_width: 100,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.manifest.is_file() {
            return Err(Error::MissingArtifact {
                path: self.manifest.clone(),
                hint: "dataset manifest not found; run the `synth` stage or point --manifest at one".into(),
            });
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if self.tau > 64 {
            return Err(Error::invalid(format!("tau {} outside [0, 64]", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        check_streams(&self.streams)?;
        for subset in &self.fusion {
            check_streams(subset)?;
            if let Some(s) = subset.iter().find(|s| !self.streams.contains(s)) {
                return Err(Error::invalid(format!("fusion subset names unconfigured stream {s}")));
            }
        }
        for &s in &self.streams {
            self.stream_config(s, 0).validate()?;
        }
        Ok(())
    }

    /// Shared stream hyperparameters: `stream_config`, or the model kind's defaults.
    pub fn base_stream_config(&self) -> StreamConfig {
        self.stream_config.clone().unwrap_or_else(|| match self.model {
            ModelKind::Mlp => StreamConfig::mlp_baseline(),
            _ => StreamConfig::default(),
        })
    }

    /// Hyperparameters of `stream` for one seed.
    pub fn stream_config(&self, stream: StreamId, seed: u64) -> StreamConfig {
        let base = self
            .stream_overrides
            .get(&stream)
            .cloned()
            .unwrap_or_else(|| self.base_stream_config());
        StreamConfig { seed, ..base }
    }

    pub fn fusion_subsets(&self) -> Vec<Vec<StreamId>> {
        if self.fusion.is_empty() {
            vec![self.streams.clone()]
        } else {
            self.fusion.clone()
        }
    }

    pub fn layout(&self) -> Layout {
        Layout {
            root: self.output_dir.clone(),
        }
    }
}

fn check_streams(streams: &[StreamId]) -> Result<()> {
    if streams.is_empty() {
        return Err(Error::invalid("stream selection is empty"));
    }
    let unique: std::collections::BTreeSet<_> = streams.iter().collect();
    if unique.len() != streams.len() {
        return Err(Error::invalid("stream selection repeats a stream"));
    }
    Ok(())
}

/// `visual-clip+textual-shot` style name of a stream subset.
pub fn subset_name(streams: &[StreamId]) -> String {
    streams.iter().map(ToString::to_string).collect::<Vec<_>>().join("+")
}

/// File locations inside a run's output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn labels(&self, episode: &str) -> PathBuf {
        self.root.join("labels").join(format!("{episode}.jsonl"))
    }

    pub fn model_dir(&self, stream: StreamId, seed: u64) -> PathBuf {
        self.root
            .join("models")
            .join(stream.to_string())
            .join(format!("seed{seed}"))
    }

    pub fn checkpoint(&self, stream: StreamId, seed: u64) -> PathBuf {
        self.model_dir(stream, seed).join("model.trlm")
    }

    pub fn history(&self, stream: StreamId, seed: u64) -> PathBuf {
        self.model_dir(stream, seed).join("history.csv")
    }

    pub fn prediction(&self, stream: StreamId, seed: u64, episode: &str) -> PathBuf {
        self.root
            .join("predictions")
            .join(stream.to_string())
            .join(format!("seed{seed}"))
            .join(format!("{episode}.trlf"))
    }

    pub fn fused(&self, subset: &str, seed: u64, episode: &str) -> PathBuf {
        self.root
            .join("fused")
            .join(subset)
            .join(format!("seed{seed}"))
            .join(format!("{episode}.trlf"))
    }

    /// Report directory of the `eval` (`"eval"`) or `grid` (`"grid"`) stage.
    pub fn reports(&self, stage: &str) -> PathBuf {
        self.root.join(stage)
    }

    pub fn stage_log(&self, stage: &str) -> PathBuf {
        self.root.join("logs").join(format!("{stage}.json"))
    }
}

/// Hex SHA-256 of a file, or of a directory's sorted (name, content hash) listing.
pub fn hash_path(path: &Path) -> Result<String> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    if meta.is_dir() {
        let mut names: Vec<_> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .map(|e| e.map(|e| e.file_name()))
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(path, e))?;
        names.sort();
        for name in names {
            hasher.update(name.as_encoded_bytes());
            hasher.update([0]);
            hasher.update(hash_path(&path.join(&name))?.as_bytes());
        }
    } else {
        let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut buf = [0u8; 1 << 16];
        loop {
            let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
        }
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Machine-readable record of one stage run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: String,
    pub config: serde_json::Value,
    /// Input path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl StageLog {
    pub fn new(stage: &str, config: &impl Serialize) -> Self {
        StageLog {
            stage: stage.to_string(),
            config: serde_json::to_value(config).expect("configs serialize"),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let hash = hash_path(path)?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    ensure_parent(path)?;
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_json_defaults_and_unknown_fields() {
        let c: RunConfig = serde_json::from_str(r#"{"tau": 4, "seeds": [1]}"#).unwrap();
        assert_eq!(c.tau, 4);
        assert_eq!(c.seeds, vec![1]);
        assert_eq!(c.streams, StreamId::ALL.to_vec());
        assert!(serde_json::from_str::<RunConfig>(r#"{"tua": 4}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"fusion": [["visual-clip", "textual-shot"]]}"#).unwrap();
        assert_eq!(subset_name(&c.fusion[0]), "visual-clip+textual-shot");
    }

    #[test]
    fn stream_config_resolution() {
        let mut c = RunConfig::default();
        assert_eq!(c.stream_config(StreamId::VISUAL_CLIP, 3).seed, 3);
        assert_eq!(c.stream_config(StreamId::VISUAL_CLIP, 3).alpha, 0.95);
        c.model = ModelKind::Mlp;
        assert_eq!(c.stream_config(StreamId::VISUAL_CLIP, 0).alpha, 0.98);
        c.stream_overrides.insert(
            StreamId::TEXTUAL_SHOT,
            StreamConfig {
                d_k: 32,
                ..StreamConfig::default()
            },
        );
        assert_eq!(c.stream_config(StreamId::TEXTUAL_SHOT, 0).d_k, 32);
        assert_eq!(c.stream_config(StreamId::VISUAL_SHOT, 0).d_k, 128);
    }

    #[test]
    fn validation() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("manifest.json");
        let mut c = RunConfig {
            manifest: manifest.clone(),
            ..RunConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::MissingArtifact { .. })));
        fs::write(&manifest, "{}").unwrap();
        assert!(c.validate().is_ok());
        c.seeds.clear();
        assert!(c.validate().is_err());
        c.seeds = vec![0];
        c.streams = vec![StreamId::VISUAL_CLIP, StreamId::VISUAL_CLIP];
        assert!(c.validate().is_err());
        c.streams = vec![StreamId::VISUAL_CLIP];
        c.fusion = vec![vec![StreamId::TEXTUAL_CLIP]];
        assert!(c.validate().is_err());
    }

    #[test]
    fn directory_hash_tracks_content() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a"), b"1").unwrap();
        fs::write(dir.path().join("b"), b"2").unwrap();
        let h1 = hash_path(dir.path()).unwrap();
        assert_eq!(h1, hash_path(dir.path()).unwrap());
        fs::write(dir.path().join("b"), b"3").unwrap();
        assert_ne!(h1, hash_path(dir.path()).unwrap());
        assert_eq!(
            hash_path(&dir.path().join("a")).unwrap(),
            "6b86b273ff34fce19d6b804eff5a3f5747ada4eaa22f1d49c01e52ddb7875b4b"
        );
    }
}
