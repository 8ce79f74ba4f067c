use std::fs;

use crate::features::{load_features, pool_shot_features, FeatureSequence};
use crate::hashmatch::frames::{read_frames, read_label_runs};
use crate::model::{to_matrix, StreamExample};
use crate::timeline::{detect_shots_naive, unit_labels, LabelTrack, ShotSource, VideoTimeline};
use crate::{Error, Result, Scale, StreamId};

use super::{EpisodeEntry, Layout, Manifest, RunConfig, Split};

/// Clip and shot segmentation of an episode.
///
/// Read from the entry's timeline file when present; otherwise the frame count
/// comes from the frames directory and shots from the naive cut detector.
pub fn load_timeline(manifest: &Manifest, entry: &EpisodeEntry, cut_threshold: f64) -> Result<VideoTimeline> {
    if let Some(rel) = &entry.timeline {
        let path = manifest.resolve(rel);
        let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact {
                path: path.clone(),
                hint: format!("timeline of episode {} not found", entry.id),
            },
            _ => Error::io(&path, e),
        })?;
        let stored: VideoTimeline = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        let rebuilt = VideoTimeline::new(
            stored.frame_count,
            manifest.fps,
            manifest.clip_len,
            stored.shot_bounds.clone(),
            stored.shot_source,
        )?;
        if rebuilt.clip_bounds != stored.clip_bounds {
            return Err(Error::invalid(format!(
                "{}: clip bounds disagree with clip_len {}",
                path.display(),
                manifest.clip_len
            )));
        }
        return Ok(rebuilt);
    }
    let rel = entry
        .frames
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("episode {} has neither a timeline nor frames", entry.id)))?;
    let frames = read_frames(&manifest.resolve(rel))?;
    let shots = detect_shots_naive(&frames, cut_threshold)?;
    VideoTimeline::new(
        frames.len(),
        manifest.fps,
        manifest.clip_len,
        shots,
        ShotSource::NaiveDetector,
    )
}

/// Editor labels written by the `labels` stage.
pub fn load_frame_labels(layout: &Layout, entry: &EpisodeEntry, frame_count: usize) -> Result<LabelTrack> {
    let labels = read_label_runs(&layout.labels(&entry.id))?;
    if labels.len() != frame_count {
        return Err(Error::invalid(format!(
            "episode {}: {} labelled frames, timeline has {frame_count}",
            entry.id,
            labels.len()
        )));
    }
    Ok(labels)
}

/// Features of one stream. Missing shot-scale features are mean-pooled from
/// the clip features of the same modality.
pub fn load_stream_features(
    manifest: &Manifest,
    entry: &EpisodeEntry,
    stream: StreamId,
    timeline: &VideoTimeline,
    l2_normalize: bool,
) -> Result<FeatureSequence> {
    let seq = match entry.features.get(&stream) {
        Some(rel) => load_features(&manifest.resolve(rel), Some(timeline))?,
        None if stream.scale == Scale::Shot => {
            let clip = StreamId {
                modality: stream.modality,
                scale: Scale::Clip,
            };
            let rel = entry
                .features
                .get(&clip)
                .ok_or_else(|| missing_features(entry, stream))?;
            pool_shot_features(&load_features(&manifest.resolve(rel), Some(timeline))?, timeline)?
        }
        None => return Err(missing_features(entry, stream)),
    };
    if seq.stream() != stream {
        return Err(Error::invalid(format!(
            "episode {}: file listed for {stream} holds {} features",
            entry.id,
            seq.stream()
        )));
    }
    Ok(if l2_normalize { seq.l2_normalized() } else { seq })
}

fn missing_features(entry: &EpisodeEntry, stream: StreamId) -> Error {
    Error::MissingArtifact {
        path: format!("<{} features of episode {}>", stream, entry.id).into(),
        hint: "the manifest lists no such feature file; run `synth` or add extracted features".into(),
    }
}

/// Training examples of `stream` for every episode in `split`.
pub fn stream_examples(
    manifest: &Manifest,
    run: &RunConfig,
    stream: StreamId,
    split: Split,
) -> Result<Vec<StreamExample>> {
    let layout = run.layout();
    manifest
        .split(split)
        .into_iter()
        .map(|entry| {
            let timeline = load_timeline(manifest, entry, run.cut_threshold)?;
            let frames = load_frame_labels(&layout, entry, timeline.frame_count)?;
            let feats = load_stream_features(manifest, entry, stream, &timeline, run.l2_normalize)?;
            Ok(StreamExample {
                id: entry.id.clone(),
                features: to_matrix(&feats),
                unit_labels: unit_labels(&frames, &timeline, stream.scale)?.labels().to_vec(),
                bounds: timeline.bounds(stream.scale)?.to_vec(),
                frame_labels: frames.labels().to_vec(),
            })
        })
        .collect()
}
