//! Seeded noise streams.
//!
//! Every perturbation draws from its own ChaCha8 stream: the run seed selects
//! the key and a SHA-256 digest of the perturbation's identity selects the
//! stream, so results do not depend on the order jobs are executed in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type NoiseRng = ChaCha8Rng;

/// Stream id of a perturbation identity string.
pub fn stream_id(identity: &str) -> u64 {
    let digest = Sha256::digest(identity.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn stream_rng(seed: u64, identity: &str) -> NoiseRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(identity));
    rng
}

/// Identity of the occlusion driven by `prototype` on `sample_id`.
pub fn completeness_identity(sample_id: &str, prototype: usize) -> String {
    format!("completeness/{sample_id}/{prototype}")
}

pub fn continuity_identity(sample_id: &str) -> String {
    format!("continuity/{sample_id}")
}
