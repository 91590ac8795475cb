//! Counter-style random streams.
//!
//! Every random draw in a run is taken from a stream addressed by the run seed
//! plus a path of tags (iteration, trial, rollout index, agent, ...). Streams
//! never share state, so results do not depend on the order in which trials
//! or rollouts are executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Domain tags separating the purposes a stream can serve.
pub mod tag {
    pub const PERTURBATION: u64 = 0x5045_5254;
    pub const ROLLOUT: u64 = 0x524f_4c4c;
    pub const VOTES: u64 = 0x564f_5445;
    pub const EVALUATION: u64 = 0x4556_414c;
    pub const BASELINE: u64 = 0x4241_5345;
    pub const DIAGNOSTIC: u64 = 0x4449_4147;
    pub const TRAJECTORY: u64 = 0x5452_414a;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed and a tag path into a single 64-bit key.
pub fn derive_key(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |h, &t| splitmix64(h ^ splitmix64(t.wrapping_add(0xA076_1D64_78BD_642F))))
}

/// Opens the stream addressed by `seed` and `path`.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let key = derive_key(seed, path);
    let mut bytes = [0u8; 32];
    for (i, chunk) in bytes.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix64(key ^ (i as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}
