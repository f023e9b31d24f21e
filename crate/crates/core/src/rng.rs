//! Per-run random streams.
//!
//! Each stream is seeded from a SHA-256 digest of the master seed and a list
//! of labels, so a run's draws depend only on its own identity and never on
//! which other runs exist or in which order they execute.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type RunRng = ChaCha8Rng;

pub fn derive_stream(master_seed: u64, labels: &[&str]) -> RunRng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    for label in labels {
        // length prefix keeps ("ab","c") and ("a","bc") apart
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}
