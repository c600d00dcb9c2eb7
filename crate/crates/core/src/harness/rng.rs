//! Labelled, stateless RNG substreams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The random stream type used throughout a run.
pub type SimRng = ChaCha8Rng;

/// Derives the substream named `label` from `master_seed`.
///
/// The key is `SHA-256(master_seed as little-endian u64 || label)`, so every
/// label maps to its own stream regardless of which other labels were forked
/// or in what order.
pub fn rng_fork(master_seed: u64, stream_label: &str) -> SimRng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(stream_label.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(key)
}

/// Standard stream labels.
pub mod labels {
    pub const TOPOLOGY: &str = "topology";
    pub const PU: &str = "pu";
    pub const FADING: &str = "fading";
    pub const INIT: &str = "init";
    pub const SELECTION: &str = "selection";

    pub fn action(agent: usize) -> String {
        format!("action:agent_{agent}")
    }
}
