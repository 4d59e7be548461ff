//! Seed derivation. Every random stream in the simulator is a ChaCha8 generator
//! keyed by the experiment seed, a stream tag, and up to two indices, so the
//! output never depends on scheduling or on how many streams were drawn before.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Named purposes for derived streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ClientProfiles = 1,
    GeneratorCell = 2,
    ModelInit = 3,
    ClientIngest = 4,
    ClientTrain = 5,
    CentralSplit = 6,
    CentralTrain = 7,
    Importance = 8,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes the seed with a stream tag and two indices into a 64-bit key.
pub fn derive_seed(seed: u64, stream: Stream, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ stream as u64);
    h = splitmix64(h ^ a);
    splitmix64(h ^ b.rotate_left(32))
}

pub fn substream(seed: u64, stream: Stream, a: u64, b: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, stream, a, b))
}
