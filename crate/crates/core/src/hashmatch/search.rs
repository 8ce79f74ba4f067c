use rayon::prelude::*;

use super::{hamming, FrameHash};
use crate::timeline::LabelTrack;
use crate::{Error, Result};

/// Marker for "no trailer frame within the search radius".
pub const SENTINEL: u8 = 65;

const CHUNKS: usize = 4;
const CHUNK_BITS: u32 = 16;

/// Per episode frame, the Hamming distance to the nearest trailer frame.
///
/// Tables built by [`min_distance_table_mih`] may hold [`SENTINEL`] in place
/// of any distance larger than the search radius.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceTable {
    dists: Vec<u8>,
}

impl DistanceTable {
    pub fn new(dists: Vec<u8>) -> Result<Self> {
        if let Some(d) = dists.iter().find(|&&d| d > SENTINEL) {
            return Err(Error::invalid(format!("distance {d} out of range")));
        }
        Ok(DistanceTable { dists })
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.dists
    }

    pub fn len(&self) -> usize {
        self.dists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dists.is_empty()
    }
}

fn check_nonempty(episode: &[FrameHash], trailer: &[FrameHash]) -> Result<()> {
    if episode.is_empty() {
        return Err(Error::invalid("episode has no frames"));
    }
    if trailer.is_empty() {
        return Err(Error::invalid("trailer has no frames"));
    }
    Ok(())
}

#[inline]
fn nearest(query: FrameHash, trailer: &[FrameHash]) -> u8 {
    let mut best = 64;
    for &t in trailer {
        best = best.min(hamming(query, t));
        if best == 0 {
            break;
        }
    }
    best as u8
}

/// Exhaustive nearest-trailer-frame distances.
pub fn min_distance_table(episode: &[FrameHash], trailer: &[FrameHash]) -> Result<DistanceTable> {
    check_nonempty(episode, trailer)?;
    let dists = episode.iter().map(|&e| nearest(e, trailer)).collect();
    Ok(DistanceTable { dists })
}

/// [`min_distance_table`] with episode frames spread over the rayon pool.
/// Every entry is computed independently, so the result is identical.
pub fn min_distance_table_parallel(episode: &[FrameHash], trailer: &[FrameHash]) -> Result<DistanceTable> {
    check_nonempty(episode, trailer)?;
    let dists = episode.par_iter().map(|&e| nearest(e, trailer)).collect();
    Ok(DistanceTable { dists })
}

#[inline]
fn chunk(h: FrameHash, i: usize) -> usize {
    ((h.0 >> (CHUNK_BITS * (CHUNKS - 1 - i) as u32)) & 0xFFFF) as usize
}

/// Trailer ids bucketed by the value of one 16-bit substring.
struct ChunkIndex {
    offsets: Vec<u32>,
    ids: Vec<u32>,
}

impl ChunkIndex {
    fn build(trailer: &[FrameHash], i: usize) -> Self {
        let mut offsets = vec![0u32; (1 << CHUNK_BITS) + 1];
        for &t in trailer {
            offsets[chunk(t, i) + 1] += 1;
        }
        for k in 1..offsets.len() {
            offsets[k] += offsets[k - 1];
        }
        let mut fill = offsets.clone();
        let mut ids = vec![0u32; trailer.len()];
        for (id, &t) in trailer.iter().enumerate() {
            let slot = &mut fill[chunk(t, i)];
            ids[*slot as usize] = id as u32;
            *slot += 1;
        }
        ChunkIndex { offsets, ids }
    }

    fn bucket(&self, key: usize) -> &[u32] {
        &self.ids[self.offsets[key] as usize..self.offsets[key + 1] as usize]
    }
}

/// All 16-bit masks with at most `radius` set bits.
fn masks_within(radius: u32) -> Vec<u16> {
    let mut masks: Vec<u16> = (0..=u16::MAX).filter(|m| m.count_ones() <= radius).collect();
    masks.sort_by_key(|m| m.count_ones());
    masks
}

/// Multi-index hashing search with radius `tau`.
///
/// The hash is split into four 16-bit substrings. Two hashes within distance
/// `tau` must agree to within `tau / 4` bits on at least one substring, so
/// probing every bucket within that radius of each query substring finds all
/// trailer frames within `tau`. Entries at most `tau` are exact minima; every
/// larger minimum is reported as [`SENTINEL`].
pub fn min_distance_table_mih(episode: &[FrameHash], trailer: &[FrameHash], tau: u32) -> Result<DistanceTable> {
    if tau > 64 {
        return Err(Error::invalid(format!("tau {tau} outside [0, 64]")));
    }
    check_nonempty(episode, trailer)?;
    let radius = tau / CHUNKS as u32;
    let masks = masks_within(radius);
    let cap = |d: u32| if d <= tau { d as u8 } else { SENTINEL };

    // Probing costs CHUNKS * masks.len() lookups per query; past the size of
    // the trailer a linear scan is cheaper and prunes nothing anyway.
    if masks.len() * CHUNKS >= trailer.len() {
        let dists = episode.iter().map(|&e| cap(nearest(e, trailer) as u32)).collect();
        return Ok(DistanceTable { dists });
    }

    let index: Vec<ChunkIndex> = (0..CHUNKS).map(|i| ChunkIndex::build(trailer, i)).collect();
    let dists = episode
        .iter()
        .map(|&e| {
            let mut best = u32::MAX;
            'probe: for (i, idx) in index.iter().enumerate() {
                let key = chunk(e, i);
                for &m in &masks {
                    for &id in idx.bucket(key ^ m as usize) {
                        best = best.min(hamming(e, trailer[id as usize]));
                        if best == 0 {
                            break 'probe;
                        }
                    }
                }
            }
            cap(best)
        })
        .collect();
    Ok(DistanceTable { dists })
}

/// Frame labels: positive iff the nearest trailer frame is strictly closer than `tau`.
pub fn label_frames(table: &DistanceTable, tau: u32) -> Result<LabelTrack> {
    if tau > 64 {
        return Err(Error::invalid(format!("tau {tau} outside [0, 64]")));
    }
    let labels = table.dists.iter().map(|&d| u8::from((d as u32) < tau)).collect();
    LabelTrack::frames(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(episode: &[FrameHash], trailer: &[FrameHash]) -> Vec<u8> {
        let mut out = Vec::new();
        for e in episode {
            let mut best = 64;
            for t in trailer {
                let d = (e.0 ^ t.0).count_ones();
                if d < best {
                    best = d;
                }
            }
            out.push(best as u8);
        }
        out
    }

    fn random_hashes(rng: &mut ChaCha8Rng, n: usize) -> Vec<FrameHash> {
        (0..n).map(|_| FrameHash(rng.random())).collect()
    }

    /// Hashes near a few random centres so small distances actually occur.
    fn clustered_hashes(rng: &mut ChaCha8Rng, centres: &[FrameHash], n: usize) -> Vec<FrameHash> {
        (0..n)
            .map(|_| {
                let c = centres[rng.random_range(0..centres.len())];
                let flips = rng.random_range(0..14);
                let mut h = c.0;
                for _ in 0..flips {
                    h ^= 1 << rng.random_range(0..64);
                }
                FrameHash(h)
            })
            .collect()
    }

    #[test]
    fn small_examples() {
        let h = FrameHash(0x1234);
        assert_eq!(min_distance_table(&[h], &[h]).unwrap().as_slice(), &[0]);
        let t = min_distance_table(&[FrameHash(0), FrameHash(0xFF)], &[FrameHash(0)]).unwrap();
        assert_eq!(t.as_slice(), &[0, 8]);
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(min_distance_table(&[], &[FrameHash(0)]).is_err());
        assert!(min_distance_table(&[FrameHash(0)], &[]).is_err());
        assert!(min_distance_table_mih(&[FrameHash(0)], &[], 4).is_err());
        assert!(min_distance_table_mih(&[FrameHash(0)], &[FrameHash(0)], 65).is_err());
    }

    #[test]
    fn brute_force_matches_nested_loop_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let episode = random_hashes(&mut rng, 1000);
        let trailer = random_hashes(&mut rng, 100);
        let table = min_distance_table(&episode, &trailer).unwrap();
        assert_eq!(table.as_slice(), brute(&episode, &trailer).as_slice());
        let par = min_distance_table_parallel(&episode, &trailer).unwrap();
        assert_eq!(table, par);
    }

    #[test]
    fn mih_with_full_radius_is_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let episode = random_hashes(&mut rng, 300);
        let trailer = random_hashes(&mut rng, 50);
        assert_eq!(
            min_distance_table_mih(&episode, &trailer, 64).unwrap(),
            min_distance_table(&episode, &trailer).unwrap()
        );
    }

    #[test]
    fn mih_agrees_on_clustered_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let centres = random_hashes(&mut rng, 20);
        let episode = clustered_hashes(&mut rng, &centres, 3000);
        let trailer = clustered_hashes(&mut rng, &centres, 800);
        let reference = brute(&episode, &trailer);
        for tau in [0, 1, 3, 6, 10, 13, 20] {
            let fast = min_distance_table_mih(&episode, &trailer, tau).unwrap();
            let mut exact_hits = 0;
            for (j, (&f, &b)) in fast.as_slice().iter().zip(&reference).enumerate() {
                if b as u32 <= tau {
                    assert_eq!(f, b, "entry {j} tau {tau}");
                    exact_hits += 1;
                } else {
                    assert_eq!(f, SENTINEL, "entry {j} tau {tau}");
                }
            }
            if tau >= 6 {
                assert!(exact_hits > 0);
            }
        }
    }

    #[test]
    fn planted_copies_found_at_distance_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let episode = random_hashes(&mut rng, 2000);
        let planted: Vec<usize> = (100..150).chain(900..920).collect();
        let trailer: Vec<FrameHash> = planted.iter().map(|&i| episode[i]).collect();
        let table = min_distance_table_mih(&episode, &trailer, 1).unwrap();
        for &i in &planted {
            assert_eq!(table.as_slice()[i], 0);
        }
        let labels = label_frames(&table, 1).unwrap();
        let positives: Vec<usize> = labels
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == 1)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(positives, planted);
    }

    #[test]
    fn label_threshold_is_strict() {
        let table = DistanceTable::new(vec![0, 5, 12]).unwrap();
        assert_eq!(label_frames(&table, 10).unwrap().labels(), &[1, 1, 0]);
        assert_eq!(label_frames(&table, 0).unwrap().labels(), &[0, 0, 0]);
        assert_eq!(label_frames(&table, 5).unwrap().labels(), &[1, 0, 0]);
        let sentinel = DistanceTable::new(vec![SENTINEL, 3]).unwrap();
        assert_eq!(label_frames(&sentinel, 64).unwrap().labels(), &[0, 1]);
    }

    proptest! {
        #[test]
        fn labels_monotone_in_tau(dists in proptest::collection::vec(0u8..=64, 1..200), t1 in 0u32..=64, t2 in 0u32..=64) {
            let (lo, hi) = (t1.min(t2), t1.max(t2));
            let table = DistanceTable::new(dists).unwrap();
            let a = label_frames(&table, lo).unwrap();
            let b = label_frames(&table, hi).unwrap();
            for (x, y) in a.labels().iter().zip(b.labels()) {
                prop_assert!(x <= y);
            }
        }

        #[test]
        fn mih_matches_brute_force(seed: u64, tau in 0u32..=64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let centres = random_hashes(&mut rng, 4);
            let episode = clustered_hashes(&mut rng, &centres, 200);
            let trailer = clustered_hashes(&mut rng, &centres, 150);
            let reference = brute(&episode, &trailer);
            let fast = min_distance_table_mih(&episode, &trailer, tau).unwrap();
            for (&f, &b) in fast.as_slice().iter().zip(&reference) {
                if b as u32 <= tau { prop_assert_eq!(f, b); } else { prop_assert_eq!(f, SENTINEL); }
            }
        }
    }
}
