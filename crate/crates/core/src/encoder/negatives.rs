//! Negative sampling: corrupt one side of each aligned pair.

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// For every positive pair, draws `n_per_pair` corruptions: the replaced side
/// is chosen uniformly, and the replacement id is drawn uniformly from that
/// side's pool, never equal to the id it replaces. Pairs are row indices into
/// the source/target entity lists. Deterministic under the rng state.
pub fn sample_negatives(
    positives: &[(usize, usize)],
    pool_s: usize,
    pool_t: usize,
    n_per_pair: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>> {
    if pool_s < 2 || pool_t < 2 {
        return Err(Error::Encoder("entity pools must have at least 2 entries".into()));
    }
    let mut out = Vec::with_capacity(positives.len() * n_per_pair);
    for &(s, t) in positives {
        for _ in 0..n_per_pair {
            if rng.gen_bool(0.5) {
                let mut s2 = rng.gen_range(0..pool_s);
                while s2 == s {
                    s2 = rng.gen_range(0..pool_s);
                }
                out.push((s2, t));
            } else {
                let mut t2 = rng.gen_range(0..pool_t);
                while t2 == t {
                    t2 = rng.gen_range(0..pool_t);
                }
                out.push((s, t2));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn count_is_n_per_pair_times_positives() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pos: Vec<(usize, usize)> = (0..5).map(|i| (i, i)).collect();
        let neg = sample_negatives(&pos, 20, 20, 10, &mut rng).unwrap();
        assert_eq!(neg.len(), 50);
    }

    #[test]
    fn pool_of_two_always_picks_the_other() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let neg = sample_negatives(&[(0, 0)], 2, 2, 20, &mut rng).unwrap();
        for (s, t) in neg {
            // One side was corrupted to the only alternative; the other kept.
            assert!((s, t) == (1, 0) || (s, t) == (0, 1));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let pos: Vec<(usize, usize)> = (0..4).map(|i| (i, 3 - i)).collect();
        let a = sample_negatives(&pos, 9, 9, 10, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = sample_negatives(&pos, 9, 9, 10, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupted_id_never_equals_original() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let neg = sample_negatives(&[(4, 7)], 10, 10, 200, &mut rng).unwrap();
        for (s, t) in neg {
            assert!((s, t) != (4, 7));
        }
    }

    #[test]
    fn tiny_pool_is_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(sample_negatives(&[(0, 0)], 1, 5, 3, &mut rng).is_err());
    }
}
