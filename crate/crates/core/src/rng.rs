//! Seed splitting.
//!
//! Every random stream in an experiment is derived from the single
//! experiment seed and a component name: the first eight bytes of
//! `SHA-256(seed as little-endian u64 || name)` seed a ChaCha8 generator.
//! Rerunning one component with the same seed and name reproduces its
//! stream regardless of what other components consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn derive_seed(seed: u64, component: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(component.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn component_rng(seed: u64, component: &str) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, component))
}
