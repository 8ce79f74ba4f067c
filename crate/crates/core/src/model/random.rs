use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ScoreTrack;
use crate::{Error, Result, Scale};

/// I.i.d. uniform scores in the open interval (0, 1).
pub fn random_baseline(n: usize, seed: u64, scale: Scale) -> Result<ScoreTrack> {
    if n == 0 {
        return Err(Error::invalid("random baseline needs at least one unit"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScoreTrack::new(scale, (0..n).map(|_| rng.sample(Open01)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_open() {
        let a = random_baseline(1000, 9, Scale::Clip).unwrap();
        assert_eq!(a, random_baseline(1000, 9, Scale::Clip).unwrap());
        assert_ne!(a, random_baseline(1000, 10, Scale::Clip).unwrap());
        assert!(a.scores().iter().all(|&s| s > 0.0 && s < 1.0));
        assert!(random_baseline(0, 1, Scale::Clip).is_err());
    }

    #[test]
    fn mean_near_half() {
        let t = random_baseline(100_000, 1, Scale::Shot).unwrap();
        let mean = t.scores().iter().sum::<f64>() / t.len() as f64;
        assert!((mean - 0.5).abs() < 0.01);
    }
}
