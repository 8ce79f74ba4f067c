use super::FeatureSequence;
use crate::timeline::VideoTimeline;
use crate::{Error, FormatError, Result, Scale};

/// Shot features as the mean of the clip rows attributed to each shot.
///
/// Clips belong to the shot containing their midpoint frame. A shot holding
/// no clip midpoint takes the row of the clip that contains the shot's own
/// midpoint frame. Means are accumulated in f64 and stored as f32.
pub fn pool_shot_features(clip_feats: &FeatureSequence, timeline: &VideoTimeline) -> Result<FeatureSequence> {
    if clip_feats.scale != Scale::Clip {
        return Err(Error::invalid("shot pooling expects clip-scale features"));
    }
    if clip_feats.rows() != timeline.clip_bounds.len() {
        return Err(FormatError::CountMismatch {
            expected: timeline.clip_bounds.len(),
            found: clip_feats.rows(),
        }
        .into());
    }
    let dim = clip_feats.dim();
    let clip_len = timeline.clip_bounds[0].len();
    let mut out = Vec::with_capacity(timeline.shot_bounds.len() * dim);
    for (members, shot) in timeline.clips_per_shot().iter().zip(&timeline.shot_bounds) {
        if members.is_empty() {
            let fallback = shot.midpoint() / clip_len;
            out.extend_from_slice(clip_feats.row(fallback));
            continue;
        }
        let mut acc = vec![0f64; dim];
        for &c in members {
            for (a, &v) in acc.iter_mut().zip(clip_feats.row(c)) {
                *a += v as f64;
            }
        }
        let n = members.len() as f64;
        out.extend(acc.iter().map(|&a| (a / n) as f32));
    }
    Ok(FeatureSequence::new(clip_feats.modality, Scale::Shot, dim, out)?
        .with_provenance(format!("mean-pooled({})", clip_feats.provenance)))
}
