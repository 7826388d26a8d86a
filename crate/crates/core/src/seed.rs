//! Counter-based seeding. Every random quantity is a pure function of
//! `(root, stream, index)`, so results never depend on how work is split
//! across threads.

use std::fmt;

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

pub type Rng = Xoshiro256PlusPlus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub root: u64,
    pub stream: u64,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mix(a: u64, b: u64) -> u64 {
    splitmix(splitmix(a) ^ b.rotate_left(17) ^ GOLDEN.wrapping_mul(b | 1))
}

impl Seed {
    pub fn new(root: u64) -> Self {
        Seed { root, stream: 0 }
    }

    pub fn with_stream(root: u64, stream: u64) -> Self {
        Seed { root, stream }
    }

    /// A child seed, e.g. one per Monte Carlo trial.
    pub fn derive(&self, index: u64) -> Seed {
        Seed {
            root: self.root,
            stream: mix(self.stream, index),
        }
    }

    /// Generator for item `index` (a matrix column, a coefficient block) under this seed.
    pub fn rng(&self, index: u64) -> Rng {
        Rng::seed_from_u64(mix(mix(self.root, self.stream), index))
    }
}

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.stream == 0 {
            write!(f, "{:#018x}", self.root)
        } else {
            write!(f, "{:#018x}/{:#018x}", self.root, self.stream)
        }
    }
}
