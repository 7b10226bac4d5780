//! Seeded random streams and exact Poisson sampling.
//!
//! Every (power step, position) cell of a scan draws from its own ChaCha8
//! stream: the key comes from the run seed, the stream id from the cell
//! indices. ChaCha is counter based, so a cell's counts do not depend on
//! the order in which cells are evaluated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

/// Independent generator for one scan cell.
pub fn cell_rng(seed: u64, step: u32, position: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((step as u64) << 32) | position as u64);
    rng
}

/// Derives a child seed, e.g. for replicated runs.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // SplitMix64 finalizer over the combined input
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const INVERSION_LIMIT: f64 = 30.0;

/// Exact Poisson draw: sequential inversion below a mean of 30, the
/// rejection sampler of `rand_distr` above.
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    if mean < INVERSION_LIMIT {
        let u: f64 = rng.random();
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
            if p < f64::MIN_POSITIVE && k as f64 > mean {
                break;
            }
        }
        k
    } else {
        let dist = Poisson::new(mean).expect("positive finite mean");
        dist.sample(rng) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| cell_rng(7, 1, 2).random()).collect();
        let mut r1 = cell_rng(7, 1, 2);
        let mut r2 = cell_rng(7, 1, 2);
        assert_eq!(r1.random::<u64>(), r2.random::<u64>());
        assert_eq!(a[0], a[1]);
        assert_ne!(cell_rng(7, 1, 2).random::<u64>(), cell_rng(7, 2, 1).random::<u64>());
        assert_ne!(cell_rng(7, 0, 0).random::<u64>(), cell_rng(8, 0, 0).random::<u64>());
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
    }

    #[test]
    fn poisson_moments() {
        for mean in [0.3, 4.0, 29.0, 31.0, 900.0] {
            let mut rng = cell_rng(11, 0, (mean * 10.0) as u32);
            let n = 40_000;
            let draws: Vec<f64> = (0..n).map(|_| sample_poisson(&mut rng, mean) as f64).collect();
            let m = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (mean / n as f64).sqrt();
            assert!((m - mean).abs() < 5.0 * se, "mean {mean}: {m}");
            assert!((var / mean - 1.0).abs() < 0.05, "mean {mean}: var {var}");
        }
        assert_eq!(sample_poisson(&mut cell_rng(0, 0, 0), 0.0), 0);
    }
}
