//! Frame-level trailer labels from perceptual hash matching.
//!
//! Every episode frame is hashed with a 64-bit difference hash and compared
//! against all frames of the episode's own trailer. A frame is labeled
//! positive when its nearest trailer frame is strictly closer than a Hamming
//! threshold.

mod dhash;
pub mod frames;
mod search;

pub use dhash::{compute_dhash, luma, GrayFrame, HASH_COLS, HASH_ROWS};
pub use search::{
    label_frames, min_distance_table, min_distance_table_mih, min_distance_table_parallel, DistanceTable, SENTINEL,
};

use std::fmt;

/// Default Hamming threshold used for labeling.
pub const DEFAULT_TAU: u32 = 10;

/// 64-bit perceptual hash of one frame. Bit `63 - (8 * row + col)` holds the
/// comparison of downsampled cell `(row, col)` against its right neighbour.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FrameHash(pub u64);

impl FrameHash {
    pub fn bits(self) -> u64 {
        self.0
    }
}

impl fmt::Debug for FrameHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FrameHash({:#018x})", self.0)
    }
}

impl fmt::Display for FrameHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// Number of differing bits.
#[inline]
pub fn hamming(a: FrameHash, b: FrameHash) -> u32 {
    (a.0 ^ b.0).count_ones()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hamming_examples() {
        let h = FrameHash(0xDEAD_BEEF_0123_4567);
        assert_eq!(hamming(h, h), 0);
        assert_eq!(hamming(FrameHash(0), FrameHash(u64::MAX)), 64);
        assert_eq!(hamming(FrameHash(0x0F), FrameHash(0)), 4);
    }

    proptest! {
        #[test]
        fn hamming_is_a_metric(a: u64, b: u64, c: u64) {
            let (a, b, c) = (FrameHash(a), FrameHash(b), FrameHash(c));
            prop_assert_eq!(hamming(a, a), 0);
            prop_assert_eq!(hamming(a, b), hamming(b, a));
            prop_assert!(hamming(a, c) <= hamming(a, b) + hamming(b, c));
            prop_assert!(hamming(a, b) <= 64);
        }
    }
}
