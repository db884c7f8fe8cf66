//! Order-independent random substreams.
//!
//! Every stream is keyed by `(global_seed, sample_id, op_name)`; the key is
//! hashed with SHA-256 into a ChaCha8 seed, so a sample's randomness never
//! depends on which worker processed it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    key: [u8; 32],
}

impl RngStream {
    pub fn new(global_seed: u64, sample_id: &str, op_name: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"cuelab/rng/v1");
        h.update(global_seed.to_le_bytes());
        absorb(&mut h, sample_id.as_bytes());
        absorb(&mut h, op_name.as_bytes());
        Self {
            key: h.finalize().into(),
        }
    }

    /// Derives an independent stream for a named sub-task.
    pub fn child(&self, label: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"cuelab/rng/child");
        h.update(self.key);
        absorb(&mut h, label.as_bytes());
        Self {
            key: h.finalize().into(),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key)
    }

    /// A 64-bit seed drawn from the stream key.
    pub fn seed_u64(&self) -> u64 {
        u64::from_le_bytes(self.key[..8].try_into().expect("8 bytes"))
    }
}

fn absorb(h: &mut Sha256, bytes: &[u8]) {
    h.update((bytes.len() as u64).to_le_bytes());
    h.update(bytes);
}
