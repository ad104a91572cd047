//! Counter-based random draws.
//!
//! Every draw is a pure function of `(seed, episode, step, stream)`, so the
//! sample for one factor never depends on how many draws other factors made.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Raw 64-bit output for the given counter tuple.
    pub fn bits(&self, episode: u64, step: u64, stream: u64) -> u64 {
        let mut h = mix(self.seed.wrapping_add(GOLDEN));
        for word in [episode, step, stream] {
            h = mix(h ^ word.wrapping_add(GOLDEN).wrapping_mul(GOLDEN));
        }
        h
    }

    /// Uniform variate in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&self, episode: u64, step: u64, stream: u64) -> f64 {
        (self.bits(episode, step, stream) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Inverse-CDF draw from a probability vector. Falls back to the last index
/// with positive mass when rounding leaves `u` past the cumulative total.
pub fn sample_categorical(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}
