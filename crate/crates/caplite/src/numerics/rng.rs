//! Portable deterministic RNG.
//!
//! Algorithm (fixed for reproducibility, do not change):
//! - State: xoshiro256** (Blackman/Vigna, public domain reference code).
//! - Seeding: the four 64-bit state words are the first four outputs of
//!   splitmix64 run on the user seed, as the xoshiro authors recommend.
//! - Uniform doubles take the top 53 bits of one output: `(x >> 11) * 2^-53`,
//!   giving values in `[0, 1)`.
//! - Gaussians use the Box-Muller transform on two fresh uniforms (no cached
//!   spare, so the draw count per sample is fixed).
//!
//! Every stream the crate uses is derived from one user seed, so a run is
//! fully reproducible from `--seed` alone.

use super::Real;
use crate::error::{Error, Result};

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        Rng {
            s: [
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
            ],
        }
    }

    /// Independent substream `stream` of the master seed. Used to give the
    /// dataset generator, the initializer, each epoch's shuffle, dropout and
    /// sampling their own deterministic streams.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        Rng::new(
            seed ^ stream
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(stream),
        )
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller; consumes exactly two uniforms.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = (1.0 - self.uniform()).max(f64::MIN_POSITIVE); // avoid ln(0)
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `[0, n)`. `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "Rng::below(0)");
        (self.next_u64() % n as u64) as usize
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

/// Draw an index from a probability vector by inverse-CDF walk.
///
/// The vector is validated: entries must be non-negative and sum to 1 within
/// 1e-5. The walk is performed in f64 regardless of `T`.
pub fn sample_categorical<T: Real>(p: &[T], rng: &mut Rng) -> Result<usize> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution("empty vector".to_string()));
    }
    let mut sum = 0.0f64;
    for (i, &v) in p.iter().enumerate() {
        let v = v.as_f64();
        if v < 0.0 || !v.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "entry {i} is {v}, expected a finite non-negative value"
            )));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > 1e-5 {
        return Err(Error::InvalidDistribution(format!(
            "entries sum to {sum}, expected 1 within 1e-5"
        )));
    }
    let u = rng.uniform();
    let mut cum = 0.0f64;
    let mut last_nonzero = 0usize;
    for (i, &v) in p.iter().enumerate() {
        let v = v.as_f64();
        if v > 0.0 {
            last_nonzero = i;
        }
        cum += v;
        if u < cum {
            return Ok(i);
        }
    }
    // Rounding pushed the CDF fractionally below u; return the last live index.
    Ok(last_nonzero)
}
