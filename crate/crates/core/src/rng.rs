//! Named random streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Derives independent, reproducible generators from a master seed and a stream name.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Streams {
    master: u64,
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, name: &str) -> Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.master.to_le_bytes());
        hasher.update(name.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest[..32]);
        Rng::from_seed(seed)
    }

    /// Stream used to construct environments.
    pub fn env(&self) -> Rng {
        self.stream("env")
    }

    /// Stream used to drive environment transitions and policy sampling.
    pub fn policy(&self) -> Rng {
        self.stream("policy")
    }

    /// Stream used by learners for their internal randomness.
    pub fn learner(&self) -> Rng {
        self.stream("learner")
    }

    /// Child streams for sub-components, e.g. `streams.child("source-3")`.
    pub fn child(&self, name: &str) -> Streams {
        let mut rng = self.stream(name);
        Streams::new(rand::Rng::random(&mut rng))
    }
}
