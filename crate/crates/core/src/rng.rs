//! Counter-based noise streams.
//!
//! A stream is addressed by `(master_seed, trial_index)` and every step draws
//! a fixed number of uniforms from a fixed word offset, so the normals handed
//! out for `(master_seed, trial_index, step_index)` do not depend on what was
//! drawn before or on which thread runs the trial.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub master_seed: u64,
    pub trial_index: u64,
}

impl StreamId {
    pub fn new(master_seed: u64, trial_index: u64) -> Self {
        Self {
            master_seed,
            trial_index,
        }
    }
}

/// Standard-normal source with random access by step index.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    id: StreamId,
    rng: ChaCha8Rng,
    normals_per_step: usize,
    // step the underlying cipher is currently positioned at, if known
    cursor: Option<u64>,
}

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

impl NoiseStream {
    pub fn new(id: StreamId, normals_per_step: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(id.master_seed);
        rng.set_stream(id.trial_index);
        Self {
            id,
            rng,
            normals_per_step,
            cursor: Some(0),
        }
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    pub fn normals_per_step(&self) -> usize {
        self.normals_per_step
    }

    // Box-Muller consumes a pair of uniforms per pair of normals, so the
    // number of 32-bit words per step is fixed.
    fn words_per_step(&self) -> u128 {
        let pairs = self.normals_per_step.div_ceil(2) as u128;
        pairs * 2 * 2
    }

    /// Fills `out` with the standard normals belonging to `step`.
    ///
    /// `out.len()` must equal `normals_per_step`.
    pub fn normals(&mut self, step: u64, out: &mut [f64]) {
        assert_eq!(out.len(), self.normals_per_step, "normal buffer length");
        if self.cursor != Some(step) {
            self.rng.set_word_pos(step as u128 * self.words_per_step());
        }
        let mut chunks = out.chunks_mut(2);
        for pair in &mut chunks {
            let u1 = open01(self.rng.next_u64());
            let u2 = open01(self.rng.next_u64());
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (TWO_PI * u2).sin_cos();
            pair[0] = r * c;
            if pair.len() == 2 {
                pair[1] = r * s;
            }
        }
        self.cursor = step.checked_add(1);
    }
}

/// Maps 64 random bits to a double strictly inside (0, 1).
fn open01(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}
