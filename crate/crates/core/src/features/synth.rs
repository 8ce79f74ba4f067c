//! Synthetic episodes with planted trailer segments.
//!
//! Each episode carries a shot layout with high-contrast cuts, frames whose
//! difference hashes are independent per frame, a trailer made of copies of
//! planted episode frames (optionally with salt-and-pepper noise), subtitles
//! that are denser inside planted segments, and Gaussian unit features whose
//! mean is shifted by `signal_strength` on positive units.
//!
//! Frames are rendered on demand from the episode seed, so large datasets do
//! not need to be held in memory.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::FeatureSequence;
use crate::hashmatch::{GrayFrame, HASH_COLS, HASH_ROWS};
use crate::timeline::{shots_from_cuts, Interval, LabelTrack, ShotSource, SubtitleEntry, SubtitleTrack, VideoTimeline};
use crate::{Error, Modality, Result, Scale, StreamId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_frames: usize,
    pub n_shots: usize,
    pub trailer_fraction: f64,
    pub signal_strength: f64,
    pub noise_rate: f64,
    pub d_visual: usize,
    pub d_text: usize,
    pub frame_width: usize,
    pub frame_height: usize,
    pub clip_len: usize,
    pub fps: f64,
    /// Plant whole clips instead of arbitrary frame runs.
    pub align_to_clips: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_frames: 2560,
            n_shots: 40,
            trailer_fraction: 0.1,
            signal_strength: 3.0,
            noise_rate: 0.0,
            d_visual: 32,
            d_text: 24,
            frame_width: 32,
            frame_height: 32,
            clip_len: 64,
            fps: 25.0,
            align_to_clips: true,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.n_frames == 0 || self.clip_len == 0 {
            return bad("n_frames and clip_len must be positive".into());
        }
        if self.n_shots == 0 || self.n_shots > self.n_frames {
            return bad(format!("n_shots {} must lie in [1, n_frames]", self.n_shots));
        }
        if !(self.trailer_fraction > 0.0 && self.trailer_fraction < 1.0) {
            return bad(format!("trailer_fraction {} outside (0, 1)", self.trailer_fraction));
        }
        if !(self.signal_strength >= 0.0 && self.signal_strength.is_finite()) {
            return bad("signal_strength must be finite and >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return bad(format!("noise_rate {} outside [0, 1]", self.noise_rate));
        }
        if self.d_visual == 0 || self.d_text == 0 {
            return bad("feature dimensions must be positive".into());
        }
        if self.frame_width < HASH_COLS || self.frame_height < HASH_ROWS {
            return bad(format!("frames must be at least {HASH_COLS}x{HASH_ROWS}"));
        }
        if self.fps.is_nan() || self.fps <= 0.0 {
            return bad("fps must be positive".into());
        }
        Ok(())
    }
}

// RNG stream tags.
const LAYOUT: u64 = 1;
const SUBTITLES: u64 = 2;
const FEATURES: u64 = 3;
const FRAME: u64 = 100;
const TRAILER_NOISE: u64 = 101;

fn rng_for(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 40) | index);
    rng
}

/// SplitMix64 finalizer, used to derive independent per-episode seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform pseudo-random 8-bit raster.
pub fn noise_frame(width: usize, height: usize, seed: u64) -> Result<GrayFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayFrame::new(width, height, (0..width * height).map(|_| rng.random()).collect())
}

/// `k` non-adjacent segments with the given lengths inside `[0, n_units)`.
fn place_segments(rng: &mut ChaCha8Rng, n_units: usize, lengths: &[usize]) -> Option<Vec<Interval>> {
    let total: usize = lengths.iter().sum();
    let k = lengths.len();
    let free = n_units.checked_sub(total + k.saturating_sub(1))?;
    let mut offsets: Vec<usize> = (0..k).map(|_| rng.random_range(0..=free)).collect();
    offsets.sort_unstable();
    let mut out = Vec::with_capacity(k);
    let mut used = 0;
    for (i, (&o, &len)) in offsets.iter().zip(lengths).enumerate() {
        let start = o + used + i;
        out.push(Interval::new(start, start + len));
        used += len;
    }
    Some(out)
}

fn split_evenly(total: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|i| total / parts + usize::from(i < total % parts))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct ShotLook {
    base: f64,
    freq_x: f64,
    freq_y: f64,
    phase: f64,
}

const TEXTURE_AMPLITUDE: f64 = 2.0;

/// One generated episode.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEpisode {
    pub config: SynthConfig,
    pub seed: u64,
    pub timeline: VideoTimeline,
    pub subtitles: SubtitleTrack,
    /// Planted segments in episode frames, in episode order.
    pub planted_segments: Vec<Interval>,
    /// Episode frame index behind each trailer frame.
    pub trailer_sources: Vec<usize>,
    pub frame_labels: LabelTrack,
    pub clip_labels: LabelTrack,
    pub shot_labels: LabelTrack,
    pub features: BTreeMap<StreamId, FeatureSequence>,
    looks: Vec<ShotLook>,
    shot_of_frame: Vec<u32>,
}

impl SyntheticEpisode {
    pub fn generate(config: &SynthConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let n = config.n_frames;
        let mut rng = rng_for(seed, LAYOUT, 0);

        // Shot layout.
        let min_len = (n / (3 * config.n_shots)).max(1);
        let extra = n - config.n_shots * min_len;
        let mut marks: Vec<usize> = (0..config.n_shots - 1).map(|_| rng.random_range(0..=extra)).collect();
        marks.sort_unstable();
        let cuts: Vec<usize> = marks.iter().enumerate().map(|(i, &m)| m + (i + 1) * min_len).collect();
        let shot_bounds = shots_from_cuts(&cuts, n)?;
        if shot_bounds.len() != config.n_shots {
            return Err(Error::invalid("shot layout collapsed; increase n_frames"));
        }
        let timeline = VideoTimeline::new(n, config.fps, config.clip_len, shot_bounds, ShotSource::Ingested)?;
        let looks = (0..config.n_shots)
            .map(|s| ShotLook {
                base: if s % 2 == 0 { 60.0 } else { 175.0 } + rng.random_range(0.0..20.0),
                freq_x: rng.random_range(0.05..0.3),
                freq_y: rng.random_range(0.05..0.3),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            })
            .collect();
        let mut shot_of_frame = vec![0u32; n];
        for (s, b) in timeline.shot_bounds.iter().enumerate() {
            shot_of_frame[b.start..b.end].fill(s as u32);
        }

        // Planted segments.
        let planted_frames = ((config.trailer_fraction * n as f64).round() as usize).max(1);
        let planted_segments = if config.align_to_clips {
            let full_clips = n / config.clip_len;
            let clips = ((planted_frames as f64 / config.clip_len as f64).round() as usize).max(1);
            let lengths = split_evenly(clips, clips.div_ceil(3));
            place_segments(&mut rng, full_clips, &lengths)
                .ok_or_else(|| Error::invalid("trailer does not fit into the episode's full clips"))?
                .into_iter()
                .map(|s| Interval::new(s.start * config.clip_len, s.end * config.clip_len))
                .collect()
        } else {
            let lengths = split_evenly(planted_frames, planted_frames.div_ceil(100));
            place_segments(&mut rng, n, &lengths).ok_or_else(|| Error::invalid("trailer longer than the episode"))?
        };
        let mut frame_labels = vec![0u8; n];
        for seg in &planted_segments {
            frame_labels[seg.start..seg.end].fill(1);
        }
        let mut order: Vec<usize> = (0..planted_segments.len()).collect();
        order.shuffle(&mut rng);
        let trailer_sources = order
            .iter()
            .flat_map(|&i| planted_segments[i].start..planted_segments[i].end)
            .collect();

        // Direct unit labels by counting.
        let clip_labels: Vec<u8> = timeline
            .clip_bounds
            .iter()
            .map(|c| {
                let pos: usize = frame_labels[c.start..c.end].iter().map(|&l| l as usize).sum();
                u8::from(pos * 3 >= c.len())
            })
            .collect();
        let shot_labels: Vec<u8> = timeline
            .shot_bounds
            .iter()
            .map(|s| {
                let (mut members, mut pos) = (0usize, 0usize);
                for (c, clip) in timeline.clip_bounds.iter().enumerate() {
                    let mid = (clip.start + clip.end) / 2;
                    if s.start <= mid && mid < s.end {
                        members += 1;
                        pos += clip_labels[c] as usize;
                    }
                }
                if members == 0 {
                    members = s.len();
                    pos = frame_labels[s.start..s.end].iter().map(|&l| l as usize).sum();
                }
                u8::from(pos * 3 >= members)
            })
            .collect();

        let subtitles = synth_subtitles(seed, n, &frame_labels)?;

        let frame_labels = LabelTrack::frames(frame_labels)?;
        let clip_labels = LabelTrack::new(Scale::Clip, clip_labels)?;
        let shot_labels = LabelTrack::new(Scale::Shot, shot_labels)?;

        let mut features = BTreeMap::new();
        for (k, stream) in StreamId::ALL.iter().enumerate() {
            let (bounds, labels) = match stream.scale {
                Scale::Clip => (&timeline.clip_bounds, clip_labels.labels()),
                _ => (&timeline.shot_bounds, shot_labels.labels()),
            };
            let dim = match stream.modality {
                Modality::Visual => config.d_visual,
                Modality::Textual => config.d_text,
            };
            let texts = match stream.modality {
                Modality::Textual => Some(crate::timeline::align_subtitles(&subtitles, bounds, n)?),
                Modality::Visual => None,
            };
            let mut frng = rng_for(seed, FEATURES, k as u64);
            let mut data = Vec::with_capacity(bounds.len() * dim);
            for (u, &y) in labels.iter().enumerate() {
                let shift = config.signal_strength * y as f64;
                let silent = texts.as_ref().is_some_and(|t| t[u].is_empty());
                for _ in 0..dim {
                    let z: f64 = frng.sample(StandardNormal);
                    data.push(if silent { 0.0 } else { (z + shift) as f32 });
                }
            }
            let seq = FeatureSequence::new(stream.modality, stream.scale, dim, data)?
                .with_provenance(format!("synthetic(seed={seed})"));
            features.insert(*stream, seq);
        }

        Ok(SyntheticEpisode {
            config: config.clone(),
            seed,
            timeline,
            subtitles,
            planted_segments,
            trailer_sources,
            frame_labels,
            clip_labels,
            shot_labels,
            features,
            looks,
            shot_of_frame,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.config.n_frames
    }

    pub fn trailer_len(&self) -> usize {
        self.trailer_sources.len()
    }

    /// Episode frame `index`. The 9x8 hash grid cells carry a per-frame
    /// random staircase, so each frame has its own difference hash.
    pub fn render_frame(&self, index: usize) -> GrayFrame {
        let (w, h) = (self.config.frame_width, self.config.frame_height);
        let look = &self.looks[self.shot_of_frame[index] as usize];
        let mut rng = rng_for(self.seed, FRAME, index as u64);
        let mut cells = [[0f64; HASH_COLS]; HASH_ROWS];
        for row in cells.iter_mut() {
            let bits: u8 = rng.random();
            for c in 0..HASH_COLS - 1 {
                let step = rng.random_range(8.0..14.0);
                row[c + 1] = if bits >> (7 - c) & 1 == 1 {
                    row[c] - step
                } else {
                    row[c] + step
                };
            }
            let mean = row.iter().sum::<f64>() / HASH_COLS as f64;
            row.iter_mut().for_each(|v| *v -= mean);
        }
        let mut pixels = Vec::with_capacity(w * h);
        for y in 0..h {
            let r = y * HASH_ROWS / h;
            for x in 0..w {
                let c = x * HASH_COLS / w;
                let texture = TEXTURE_AMPLITUDE * (look.freq_x * x as f64 + look.freq_y * y as f64 + look.phase).sin();
                let v = look.base + texture + cells[r][c];
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
        GrayFrame::new(w, h, pixels).expect("validated dimensions")
    }

    /// Trailer frame `index`: a planted episode frame with salt-and-pepper noise.
    pub fn render_trailer_frame(&self, index: usize) -> GrayFrame {
        let mut frame = self.render_frame(self.trailer_sources[index]);
        if self.config.noise_rate > 0.0 {
            let mut rng = rng_for(self.seed, TRAILER_NOISE, index as u64);
            for p in frame.pixels_mut() {
                if rng.random::<f64>() < self.config.noise_rate {
                    *p = if rng.random::<bool>() { 255 } else { 0 };
                }
            }
        }
        frame
    }

    pub fn planted_frames(&self) -> Vec<usize> {
        self.planted_segments.iter().flat_map(|s| s.start..s.end).collect()
    }
}

fn synth_subtitles(seed: u64, n: usize, frame_labels: &[u8]) -> Result<SubtitleTrack> {
    let mut rng = rng_for(seed, SUBTITLES, 0);
    let mut entries = Vec::new();
    let mut pos = 0usize;
    loop {
        let inside = frame_labels.get(pos).is_some_and(|&l| l == 1);
        pos += if inside {
            rng.random_range(0..8)
        } else {
            rng.random_range(20..150)
        };
        if pos >= n {
            break;
        }
        let end = (pos + rng.random_range(25..100)).min(n);
        let words: Vec<String> = (0..rng.random_range(3..9))
            .map(|_| format!("w{}", rng.random_range(0..500)))
            .collect();
        entries.push(SubtitleEntry {
            start_frame: pos,
            end_frame: end,
            text: words.join(" "),
        });
        pos = end;
    }
    SubtitleTrack::new(entries)
}

/// `n_episodes` episodes with seeds derived from `seed`.
pub fn synth_dataset(config: &SynthConfig, n_episodes: usize, seed: u64) -> Result<Vec<SyntheticEpisode>> {
    use rayon::prelude::*;
    if n_episodes == 0 {
        return Err(Error::invalid("dataset needs at least one episode"));
    }
    (0..n_episodes)
        .into_par_iter()
        .map(|i| SyntheticEpisode::generate(config, derive_seed(seed, i as u64)))
        .collect()
}
