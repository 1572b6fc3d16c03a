//! Seeded randomness helpers. All stochastic operations in the crate draw
//! from ChaCha20 streams so that every run is a pure function of its seed.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Derives an independent RNG for a named purpose from a global seed.
/// Different purposes get different ChaCha streams of the same seed.
pub fn derive_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids for the crate's RNG consumers.
pub mod streams {
    pub const MODEL_INIT: u64 = 1;
    pub const CORPUS: u64 = 2;
    pub const BATCHING: u64 = 3;
    pub const MASKING: u64 = 4;
    pub const CODEBOOK: u64 = 5;
    pub const DROPOUT: u64 = 6;
}

/// Standard normal draw via Box-Muller. Two uniforms per pair of draws;
/// the spare is cached by the caller if needed (we just discard it).
pub fn next_normal(rng: &mut ChaCha20Rng) -> f64 {
    // u1 in (0, 1] so the log is finite.
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Poisson draw by inversion (sequential search). Adequate for the span
/// mask's lambda of 10; expected iteration count is lambda + 1.
pub fn next_poisson(rng: &mut ChaCha20Rng, lambda: f64) -> u64 {
    debug_assert!(lambda > 0.0);
    let u: f64 = rng.random::<f64>();
    let mut k: u64 = 0;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
        // Guard against the astronomically unlikely tail where float
        // accumulation never reaches u.
        if k > 1000 {
            break;
        }
    }
    k
}

/// Fisher-Yates shuffle driven by the given RNG.
pub fn shuffle<T>(items: &mut [T], rng: &mut ChaCha20Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Serializable ChaCha20 state: seed, stream, and word position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha20Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}
