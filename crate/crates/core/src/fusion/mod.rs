//! Frame-level lifting and late fusion of stream predictions.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::features::{decode_matrix, encode_matrix, read_bytes, MODALITY_MIXED};
use crate::model::ScoreTrack;
use crate::timeline::{validate_tiling, Interval};
use crate::{Error, FormatError, Result, Scale, StreamId};

/// Per-frame trailerness likelihoods and the streams they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScoreTrack {
    pub scores: Vec<f64>,
    pub streams: BTreeSet<StreamId>,
}

impl FrameScoreTrack {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Binary container (D = 1, frame scale) holding the scores as f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let data: Vec<f32> = self.scores.iter().map(|&s| s as f32).collect();
        encode_matrix(MODALITY_MIXED, Scale::Frame, 1, &data)
    }

    /// Writes `<path>` and the `<path>.json` sidecar listing the contributing streams.
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))?;
        let sidecar = sidecar_path(path);
        let json = serde_json::to_string_pretty(&Sidecar {
            streams: self.streams.iter().copied().collect(),
            frames: self.scores.len(),
        })
        .map_err(|e| Error::json(&sidecar, e))?;
        fs::write(&sidecar, json + "\n").map_err(|e| Error::io(&sidecar, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = decode_matrix(&read_bytes(
            path,
            "frame scores not found; run the `predict` stage first",
        )?)?;
        if raw.dim != 1 || raw.scale != Scale::Frame {
            return Err(FormatError::Malformed("score tracks are frame-scale with D = 1".into()).into());
        }
        let sidecar = sidecar_path(path);
        let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let meta: Sidecar = serde_json::from_str(&text).map_err(|e| Error::json(&sidecar, e))?;
        if meta.frames != raw.rows {
            return Err(FormatError::CountMismatch {
                expected: meta.frames,
                found: raw.rows,
            }
            .into());
        }
        Ok(FrameScoreTrack {
            scores: raw.data.iter().map(|&v| v as f64).collect(),
            streams: meta.streams.into_iter().collect(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    streams: Vec<StreamId>,
    frames: usize,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Gives every frame the score of the unit containing it.
pub fn upsample_to_frames(
    scores: &ScoreTrack,
    bounds: &[Interval],
    frame_count: usize,
    stream: StreamId,
) -> Result<FrameScoreTrack> {
    validate_tiling(bounds, frame_count)?;
    if scores.len() != bounds.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} units",
            scores.len(),
            bounds.len()
        )));
    }
    let mut out = Vec::with_capacity(frame_count);
    for (b, &s) in bounds.iter().zip(scores.scores()) {
        out.extend(std::iter::repeat_n(s, b.len()));
    }
    Ok(FrameScoreTrack {
        scores: out,
        streams: BTreeSet::from([stream]),
    })
}

/// Frame-wise arithmetic mean of equally long tracks.
pub fn fuse(tracks: &[&FrameScoreTrack]) -> Result<FrameScoreTrack> {
    let first = tracks.first().ok_or_else(|| Error::invalid("nothing to fuse"))?;
    if let Some(t) = tracks.iter().find(|t| t.len() != first.len()) {
        return Err(Error::invalid(format!(
            "track lengths differ: {} vs {}",
            first.len(),
            t.len()
        )));
    }
    // Running mean: exact when all inputs agree, so fusing copies is the identity.
    let mut scores = first.scores.clone();
    for (i, t) in tracks.iter().enumerate().skip(1) {
        let n = (i + 1) as f64;
        for (m, &x) in scores.iter_mut().zip(&t.scores) {
            *m += (x - *m) / n;
        }
    }
    let streams = tracks.iter().flat_map(|t| t.streams.iter().copied()).collect();
    Ok(FrameScoreTrack { scores, streams })
}

/// All nonempty subsets of `streams`, ordered by size and then lexicographically
/// by position: singles, pairs, triples, ...
pub fn stream_subsets(streams: &[StreamId]) -> Vec<Vec<StreamId>> {
    let n = streams.len();
    let mut subsets: Vec<Vec<usize>> = (1u32..(1 << n))
        .map(|mask| (0..n).filter(|i| mask >> i & 1 == 1).collect())
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets
        .into_iter()
        .map(|idx| idx.into_iter().map(|i| streams[i]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeline::Interval;
    use proptest::prelude::*;

    fn track(scores: Vec<f64>, s: StreamId) -> FrameScoreTrack {
        FrameScoreTrack {
            scores,
            streams: BTreeSet::from([s]),
        }
    }

    #[test]
    fn upsample_replicates() {
        let st = ScoreTrack::new(Scale::Clip, vec![0.3, 0.9]).unwrap();
        let out = upsample_to_frames(
            &st,
            &[Interval::new(0, 2), Interval::new(2, 3)],
            3,
            StreamId::VISUAL_CLIP,
        )
        .unwrap();
        assert_eq!(out.scores, vec![0.3, 0.3, 0.9]);
        let one = ScoreTrack::new(Scale::Shot, vec![0.7]).unwrap();
        let out = upsample_to_frames(&one, &[Interval::new(0, 5)], 5, StreamId::TEXTUAL_SHOT).unwrap();
        assert_eq!(out.scores, vec![0.7; 5]);
        assert!(upsample_to_frames(&one, &[Interval::new(0, 4)], 5, StreamId::TEXTUAL_SHOT).is_err());
        assert!(upsample_to_frames(&st, &[Interval::new(0, 5)], 5, StreamId::TEXTUAL_SHOT).is_err());
    }

    #[test]
    fn fuse_examples() {
        let a = track(vec![0.2; 4], StreamId::VISUAL_CLIP);
        let b = track(vec![0.6; 4], StreamId::TEXTUAL_SHOT);
        let f = fuse(&[&a, &b]).unwrap();
        for s in &f.scores {
            assert!((s - 0.4).abs() < 1e-15);
        }
        assert_eq!(f.streams.len(), 2);
        assert!(fuse(&[]).is_err());
        let short = track(vec![0.1; 3], StreamId::VISUAL_SHOT);
        assert!(fuse(&[&a, &short]).is_err());
    }

    #[test]
    fn fusing_copies_is_bitwise_identity() {
        let t = track(vec![0.1, 0.2, 0.3, 0.7, 0.9, 1.0 / 3.0], StreamId::VISUAL_CLIP);
        for k in 1..=4 {
            let copies: Vec<&FrameScoreTrack> = std::iter::repeat_n(&t, k).collect();
            let f = fuse(&copies).unwrap();
            assert_eq!(
                f.scores.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                t.scores.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn subsets_follow_table_structure() {
        let subsets = stream_subsets(&StreamId::ALL);
        assert_eq!(subsets.len(), 15);
        let sizes: Vec<usize> = subsets.iter().map(Vec::len).collect();
        assert_eq!(sizes.iter().filter(|&&s| s == 1).count(), 4);
        assert_eq!(sizes.iter().filter(|&&s| s == 2).count(), 6);
        assert_eq!(sizes.iter().filter(|&&s| s == 3).count(), 4);
        assert_eq!(sizes.iter().filter(|&&s| s == 4).count(), 1);
        assert_eq!(subsets[14], StreamId::ALL.to_vec());
    }

    #[test]
    fn save_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fused.trlf");
        let a = track(vec![0.25, 0.5, 0.75], StreamId::VISUAL_CLIP);
        let b = track(vec![0.25, 0.5, 0.75], StreamId::TEXTUAL_CLIP);
        let f = fuse(&[&a, &b]).unwrap();
        f.save(&path).unwrap();
        assert_eq!(FrameScoreTrack::load(&path).unwrap(), f);
        assert_eq!(fs::read(&path).unwrap()[5..7], [2, 2]);
    }

    proptest! {
        #[test]
        fn fuse_is_convex_symmetric_and_order_free(
            rows in proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, 20), 1..5)
        ) {
            let tracks: Vec<FrameScoreTrack> = rows.iter().enumerate()
                .map(|(i, r)| track(r.clone(), StreamId::ALL[i % 4])).collect();
            let refs: Vec<&FrameScoreTrack> = tracks.iter().collect();
            let f = fuse(&refs).unwrap();
            let mut rev = refs.clone();
            rev.reverse();
            let g = fuse(&rev).unwrap();
            for j in 0..20 {
                let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(f.scores[j] >= lo - 1e-12 && f.scores[j] <= hi + 1e-12);
                prop_assert!((f.scores[j] - g.scores[j]).abs() < 1e-12);
            }
            prop_assert_eq!(f.streams, g.streams);
        }

        #[test]
        fn upsample_introduces_no_new_values(scores in proptest::collection::vec(0.0f64..=1.0, 1..30), seed: u64) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut bounds = Vec::new();
            let mut s = 0;
            for _ in 0..scores.len() {
                let len = rng.random_range(1..10);
                bounds.push(Interval::new(s, s + len));
                s += len;
            }
            let st = ScoreTrack::new(Scale::Shot, scores.clone()).unwrap();
            let up = upsample_to_frames(&st, &bounds, s, StreamId::VISUAL_SHOT).unwrap();
            prop_assert!(up.scores.iter().all(|v| scores.contains(v)));
            // Mean-downsampling a piecewise-constant track recovers the unit scores.
            for (b, &want) in bounds.iter().zip(&scores) {
                let mean = up.scores[b.start..b.end].iter().sum::<f64>() / b.len() as f64;
                prop_assert!((mean - want).abs() < 1e-12);
            }
        }
    }
}
