//! Counter-based derivation of independent random streams.
//!
//! Every random decision in a run is drawn from a stream keyed by
//! `(master_seed, round, slot, purpose)`, so the order in which devices are
//! trained (serially or on a thread pool) cannot change any draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Data = 2,
    Partition = 3,
    Sampling = 4,
    Plan = 5,
    LocalBatches = 6,
    Study = 7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub round: u64,
    pub slot: u64,
    pub purpose: Purpose,
}

impl RngStream {
    pub fn new(master_seed: u64, round: u64, slot: u64, purpose: Purpose) -> Self {
        Self {
            master_seed,
            round,
            slot,
            purpose,
        }
    }

    pub fn seed(&self) -> u64 {
        let mut h = splitmix64(self.master_seed);
        for word in [self.round, self.slot, self.purpose as u64] {
            h = splitmix64(h ^ word.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        }
        h
    }

    pub fn rng(&self) -> Rng {
        Rng::seed_from_u64(self.seed())
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
