//! Counter-based Gaussian streams.
//!
//! Every draw is addressed by `(key, stream, counter)`: the ChaCha8 key is
//! derived from the run seed, the stream selects a noise mode or a particle,
//! and the counter is the time step. Repositioning the generator on each
//! slot makes draws independent of traversal order, so replays and parallel
//! evaluation see identical numbers.
//!
//! Sub-seeds are derived with [`derive_seed`]: the top-level seed, a label
//! (`"noise"`, `"particles"`, `"init"`, ...) and an index (replica number)
//! are hashed with splitmix64 finalizers.

use std::f64::consts::PI;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Normals available per `(stream, counter)` slot.
pub const SLOT_NORMALS: usize = 16;
const SLOT_WORDS: u128 = (SLOT_NORMALS as u128) * 2;

pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// `mix(seed ^ mix(fnv(label) ^ mix(index)))`.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    mix64(seed ^ mix64(fnv1a(label) ^ mix64(index)))
}

#[derive(Clone, Debug)]
pub struct CounterNormals {
    rng: ChaCha8Rng,
}

impl CounterNormals {
    pub fn new(key: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(key),
        }
    }

    fn position(&mut self, stream: u64, counter: u64) {
        self.rng.set_stream(stream);
        self.rng.set_word_pos(counter as u128 * SLOT_WORDS);
    }

    /// Standard normals for one slot (Box-Muller on consecutive words).
    pub fn fill(&mut self, stream: u64, counter: u64, out: &mut [f64]) {
        assert!(out.len() <= SLOT_NORMALS, "slot holds at most {SLOT_NORMALS} normals");
        self.position(stream, counter);
        for pair in out.chunks_mut(2) {
            let a = self.rng.next_u64();
            let b = self.rng.next_u64();
            // u1 in (0, 1], u2 in [0, 1).
            let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
            let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (2.0 * PI * u2).sin_cos();
            pair[0] = r * c;
            if pair.len() > 1 {
                pair[1] = r * s;
            }
        }
    }

    /// Uniforms in `[0, 1)` for one slot.
    pub fn fill_uniform(&mut self, stream: u64, counter: u64, out: &mut [f64]) {
        assert!(out.len() <= 2 * SLOT_NORMALS);
        self.position(stream, counter);
        for u in out.iter_mut() {
            *u = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        }
    }
}
