//! Seed derivation and the per-run random streams.
//!
//! Every run owns two independent ChaCha8 streams derived from one run seed:
//! one drives output sampling, the other drives reward noise. Keeping noise
//! on its own stream means a run with zero-scale noise samples exactly the
//! same outputs as a run with no noise at all, and runs that differ only in
//! noise scale see common random numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SAMPLE_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

/// SplitMix64 finalizer. Stable across platforms and releases.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-run seed: `splitmix64(base ^ splitmix64(index))`.
pub fn derive_seed(base_seed: u64, run_index: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(run_index))
}

/// The two random streams a training run consumes.
#[derive(Debug, Clone)]
pub struct RunRng {
    pub sample: ChaCha8Rng,
    pub noise: ChaCha8Rng,
}

impl RunRng {
    pub fn new(run_seed: u64) -> Self {
        let mut sample = ChaCha8Rng::seed_from_u64(run_seed);
        sample.set_stream(SAMPLE_STREAM);
        let mut noise = ChaCha8Rng::seed_from_u64(run_seed);
        noise.set_stream(NOISE_STREAM);
        Self { sample, noise }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        // pinned so a silent change to the mixer is caught
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn streams_differ() {
        let mut r = RunRng::new(5);
        let a: u64 = r.sample.random();
        let b: u64 = r.noise.random();
        assert_ne!(a, b);
    }
}
