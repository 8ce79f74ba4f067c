//! Clip and shot units of a video and the labels attached to them.

mod subtitles;

pub use subtitles::{align_subtitles, parse_srt, SubtitleEntry, SubtitleTrack};

use serde::{Deserialize, Serialize};

use crate::hashmatch::GrayFrame;
use crate::{Error, Result, Scale};

pub const DEFAULT_CLIP_LEN: usize = 64;
pub const DEFAULT_FPS: f64 = 25.0;

/// Half-open frame interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn new(start: usize, end: usize) -> Self {
        Interval { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Frame used to attribute this interval to an enclosing unit.
    pub fn midpoint(&self) -> usize {
        (self.start + self.end) / 2
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.start <= frame && frame < self.end
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.start.max(other.start) < self.end.min(other.end)
    }
}

/// Checks that `bounds` are nonempty, sorted, disjoint and cover `[0, frame_count)` exactly.
pub fn validate_tiling(bounds: &[Interval], frame_count: usize) -> Result<()> {
    let mut next = 0;
    for (i, b) in bounds.iter().enumerate() {
        if b.start != next || b.is_empty() {
            return Err(Error::invalid(format!(
                "interval {i} [{}, {}) breaks the tiling at frame {next}",
                b.start, b.end
            )));
        }
        next = b.end;
    }
    if next != frame_count || bounds.is_empty() {
        return Err(Error::invalid(format!(
            "intervals cover [0, {next}) but the video has {frame_count} frames"
        )));
    }
    Ok(())
}

/// Consecutive clips of `clip_len` frames; a shorter final clip is kept.
pub fn segment_clips(frame_count: usize, clip_len: usize) -> Result<Vec<Interval>> {
    if frame_count == 0 {
        return Err(Error::invalid("video has no frames"));
    }
    if clip_len == 0 {
        return Err(Error::invalid("clip length must be positive"));
    }
    Ok((0..frame_count)
        .step_by(clip_len)
        .map(|s| Interval::new(s, (s + clip_len).min(frame_count)))
        .collect())
}

/// Shot intervals from cut indices; a cut at `j` starts a new shot at frame `j`.
/// Cuts at 0, at or past the end, and duplicates are ignored.
pub fn shots_from_cuts(cuts: &[usize], frame_count: usize) -> Result<Vec<Interval>> {
    if frame_count == 0 {
        return Err(Error::invalid("video has no frames"));
    }
    let mut cuts: Vec<usize> = cuts.iter().copied().filter(|&c| c > 0 && c < frame_count).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut bounds = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for c in cuts.into_iter().chain(std::iter::once(frame_count)) {
        bounds.push(Interval::new(start, c));
        start = c;
    }
    Ok(bounds)
}

pub fn cuts_from_shots(shots: &[Interval]) -> Vec<usize> {
    shots.iter().skip(1).map(|s| s.start).collect()
}

/// Threshold-based cut detector on mean absolute frame difference.
pub fn detect_shots_naive(frames: &[GrayFrame], cut_threshold: f64) -> Result<Vec<Interval>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::invalid("no frames for shot detection"))?;
    let mut cuts = Vec::new();
    for (j, pair) in frames.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if a.width() != first.width() || b.height() != first.height() || b.width() != first.width() {
            return Err(Error::invalid(format!("frame {} has a different size", j + 1)));
        }
        let total: u64 = a
            .pixels()
            .iter()
            .zip(b.pixels())
            .map(|(&x, &y)| x.abs_diff(y) as u64)
            .sum();
        if total as f64 / a.pixels().len() as f64 > cut_threshold {
            cuts.push(j + 1);
        }
    }
    shots_from_cuts(&cuts, frames.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShotSource {
    Ingested,
    NaiveDetector,
}

/// Clip and shot segmentation of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoTimeline {
    pub frame_count: usize,
    pub fps: f64,
    pub clip_bounds: Vec<Interval>,
    pub shot_bounds: Vec<Interval>,
    pub shot_source: ShotSource,
}

impl VideoTimeline {
    pub fn new(
        frame_count: usize,
        fps: f64,
        clip_len: usize,
        shot_bounds: Vec<Interval>,
        shot_source: ShotSource,
    ) -> Result<Self> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::invalid(format!("fps {fps} must be positive")));
        }
        let clip_bounds = segment_clips(frame_count, clip_len)?;
        validate_tiling(&shot_bounds, frame_count)?;
        Ok(VideoTimeline {
            frame_count,
            fps,
            clip_bounds,
            shot_bounds,
            shot_source,
        })
    }

    pub fn bounds(&self, scale: Scale) -> Result<&[Interval]> {
        match scale {
            Scale::Clip => Ok(&self.clip_bounds),
            Scale::Shot => Ok(&self.shot_bounds),
            Scale::Frame => Err(Error::invalid("frame scale has no unit bounds")),
        }
    }

    pub fn unit_count(&self, scale: Scale) -> usize {
        match scale {
            Scale::Clip => self.clip_bounds.len(),
            Scale::Shot => self.shot_bounds.len(),
            Scale::Frame => self.frame_count,
        }
    }

    /// For each shot, the clips whose midpoint frame lies inside it.
    pub fn clips_per_shot(&self) -> Vec<Vec<usize>> {
        assign_by_midpoint(&self.clip_bounds, &self.shot_bounds)
    }
}

/// Attributes each inner interval to the outer interval containing its midpoint.
pub fn assign_by_midpoint(inner: &[Interval], outer: &[Interval]) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); outer.len()];
    let mut o = 0;
    for (i, iv) in inner.iter().enumerate() {
        let mid = iv.midpoint();
        while o < outer.len() && outer[o].end <= mid {
            o += 1;
        }
        if o < outer.len() && outer[o].contains(mid) {
            groups[o].push(i);
        }
    }
    groups
}

/// Binary labels at one granularity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTrack {
    granularity: Scale,
    labels: Vec<u8>,
}

impl LabelTrack {
    pub fn new(granularity: Scale, labels: Vec<u8>) -> Result<Self> {
        if let Some(pos) = labels.iter().position(|&l| l > 1) {
            return Err(Error::invalid(format!("label {} at {pos} is not binary", labels[pos])));
        }
        Ok(LabelTrack { granularity, labels })
    }

    pub fn frames(labels: Vec<u8>) -> Result<Self> {
        Self::new(Scale::Frame, labels)
    }

    pub fn granularity(&self) -> Scale {
        self.granularity
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().map(|&l| l as usize).sum()
    }
}

#[inline]
fn one_third(positives: usize, size: usize) -> u8 {
    u8::from(3 * positives >= size)
}

/// One-third rule over frames: a unit is positive iff `3 * positives >= size`.
pub fn aggregate_labels(frame_labels: &LabelTrack, bounds: &[Interval], scale: Scale) -> Result<LabelTrack> {
    if frame_labels.granularity != Scale::Frame {
        return Err(Error::invalid("aggregation expects frame labels"));
    }
    validate_tiling(bounds, frame_labels.len())?;
    let labels = bounds
        .iter()
        .map(|b| {
            let pos = frame_labels.labels[b.start..b.end].iter().filter(|&&l| l == 1).count();
            one_third(pos, b.len())
        })
        .collect();
    LabelTrack::new(scale, labels)
}

/// Shot labels from the clip labels of the clips attributed to each shot.
///
/// A shot too short to contain any clip midpoint falls back to the one-third
/// rule over its own frames.
pub fn aggregate_shot_labels(frame_labels: &LabelTrack, timeline: &VideoTimeline) -> Result<LabelTrack> {
    let clips = aggregate_labels(frame_labels, &timeline.clip_bounds, Scale::Clip)?;
    validate_tiling(&timeline.shot_bounds, frame_labels.len())?;
    let labels = timeline
        .clips_per_shot()
        .iter()
        .zip(&timeline.shot_bounds)
        .map(|(members, shot)| {
            if members.is_empty() {
                let pos = frame_labels.labels[shot.start..shot.end]
                    .iter()
                    .filter(|&&l| l == 1)
                    .count();
                one_third(pos, shot.len())
            } else {
                let pos = members.iter().filter(|&&c| clips.labels[c] == 1).count();
                one_third(pos, members.len())
            }
        })
        .collect();
    LabelTrack::new(Scale::Shot, labels)
}

/// Unit labels for a stream scale.
pub fn unit_labels(frame_labels: &LabelTrack, timeline: &VideoTimeline, scale: Scale) -> Result<LabelTrack> {
    match scale {
        Scale::Clip => aggregate_labels(frame_labels, &timeline.clip_bounds, Scale::Clip),
        Scale::Shot => aggregate_shot_labels(frame_labels, timeline),
        Scale::Frame => Ok(frame_labels.clone()),
    }
}
