//! Named, splittable random streams.
//!
//! A single root seed fans out into independent ChaCha8 streams addressed by
//! `(stream, major, minor)` coordinates, e.g. `(CurrentSampling, step, prompt)`.
//! Every unit of parallel work derives its own generator from its coordinates,
//! so results never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tag for a random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Parameter initialization and task generation.
    Init,
    /// Prompt shuffling and batching.
    Env,
    /// Rollouts from the current policy.
    CurrentSampling,
    /// Rollouts from the momentum policy.
    MomentumSampling,
    /// Held-out accuracy evaluation.
    Eval,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Init => 0x1d8e_4e27_c47d_124f,
            Stream::Env => 0x9e37_79b9_7f4a_7c15,
            Stream::CurrentSampling => 0xbf58_476d_1ce4_e5b9,
            Stream::MomentumSampling => 0x94d0_49bb_1331_11eb,
            Stream::Eval => 0x2545_f491_4f6c_dd1d,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Root seed of an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// 256-bit key for the stream at `(stream, major, minor)`.
    fn key(&self, stream: Stream, major: u64, minor: u64) -> [u8; 32] {
        let mut state = splitmix64(self.root ^ stream.tag());
        state = splitmix64(state ^ major.wrapping_mul(0xd6e8_feb8_6659_fd93));
        state = splitmix64(state ^ minor.wrapping_mul(0xa076_1d64_78bd_642f));
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        key
    }

    pub fn rng(&self, stream: Stream, major: u64, minor: u64) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key(stream, major, minor))
    }
}
