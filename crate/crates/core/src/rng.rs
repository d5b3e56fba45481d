//! Named random streams derived from a single master seed.
//!
//! Every stream is a ChaCha8 generator whose key depends on
//! `(master seed, purpose)` and whose 64-bit stream id encodes
//! `(lane, slot)`. A lane is usually a queue index. Drawing from one stream
//! never perturbs another, so the arrival and channel sequences of a run are
//! fixed by the seed alone and two policies compared under the same seed see
//! the same arrivals and the same channel.
//!
//! Stream id layout: `lane << 40 | slot`, so slots must stay below 2^40 and
//! lanes below 2^24.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SLOT_BITS: u32 = 40;

/// What a stream is used for. Each purpose gets an independent key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Arrivals,
    Channel,
    Switching,
    Calibration,
    MonteCarlo,
}

impl Purpose {
    const ALL: [Purpose; 5] =
        [Purpose::Arrivals, Purpose::Channel, Purpose::Switching, Purpose::Calibration, Purpose::MonteCarlo];

    fn tag(self) -> u64 {
        match self {
            Purpose::Arrivals => 0x6172_7269_7661_6c73,
            Purpose::Channel => 0x6368_616e_6e65_6c00,
            Purpose::Switching => 0x7377_6974_6368_0000,
            Purpose::Calibration => 0x6361_6c69_6272_6174,
            Purpose::MonteCarlo => 0x6d6f_6e74_6563_6172,
        }
    }

    fn index(self) -> usize {
        match self {
            Purpose::Arrivals => 0,
            Purpose::Channel => 1,
            Purpose::Switching => 2,
            Purpose::Calibration => 3,
            Purpose::MonteCarlo => 4,
        }
    }
}

/// SplitMix64 finalizer, used only to spread `seed ^ tag` before keying.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives independent, reproducible random streams from one master seed.
#[derive(Debug, Clone)]
pub struct StreamFactory {
    seed: u64,
    bases: Vec<ChaCha8Rng>,
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        let bases = Purpose::ALL.iter().map(|p| ChaCha8Rng::seed_from_u64(mix(seed ^ p.tag()))).collect();
        Self { seed, bases }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The stream for `(purpose, lane, slot)`. Identical arguments always
    /// return a generator in the identical state.
    pub fn stream(&self, purpose: Purpose, lane: u64, slot: u64) -> ChaCha8Rng {
        debug_assert!(slot < 1 << SLOT_BITS, "slot index overflows stream id");
        debug_assert!(lane < 1 << (64 - SLOT_BITS), "lane overflows stream id");
        let mut rng = self.bases[purpose.index()].clone();
        rng.set_stream((lane << SLOT_BITS) | slot);
        rng.set_word_pos(0);
        rng
    }

    /// A long-lived sequential stream for one purpose (lane 0, slot 0).
    pub fn sequential(&self, purpose: Purpose) -> ChaCha8Rng {
        self.stream(purpose, (1 << (64 - SLOT_BITS)) - 1, 0)
    }
}
