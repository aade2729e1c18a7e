//! Sub-seeding scheme.
//!
//! Every random draw in a simulation comes from a ChaCha8 stream whose seed
//! is a hash of `(master_seed, run, purpose, group, agent, step)`. The hash
//! is the SplitMix64 finalizer folded over the key words. No stream is
//! shared between two keys and no state carries between draws, so results
//! do not depend on the order in which runs, agents or conditions are
//! processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What the random stream is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Topology = 1,
    Truth = 2,
    Evidence = 3,
    Communication = 4,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Full key of a random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub run: u64,
    pub purpose: Purpose,
    pub group: u64,
    pub agent: u64,
    pub step: u64,
}

impl StreamKey {
    pub fn run_level(master_seed: u64, run: u64, purpose: Purpose) -> Self {
        StreamKey {
            master_seed,
            run,
            purpose,
            group: 0,
            agent: 0,
            step: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        [self.run, self.purpose as u64, self.group, self.agent, self.step]
            .into_iter()
            .fold(splitmix64(self.master_seed), |h, word| splitmix64(h ^ splitmix64(word)))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed())
    }
}
