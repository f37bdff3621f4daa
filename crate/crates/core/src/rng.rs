//! Counter-based random substreams.
//!
//! A substream is addressed by `(master_seed, run_id, role)`. The master seed
//! keys a ChaCha8 generator and `(run_id, role)` selects its 64-bit stream
//! counter, so every run draws from its own sequence regardless of how runs
//! are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamRole {
    Rewards = 0,
    Coins = 1,
}

const ROLES: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Substream {
    pub master_seed: u64,
    pub run_id: u64,
    pub role: StreamRole,
}

impl Substream {
    pub fn new(master_seed: u64, run_id: u64, role: StreamRole) -> Self {
        Substream { master_seed, run_id, role }
    }

    /// Generator positioned at the start of this substream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.run_id.wrapping_mul(ROLES).wrapping_add(self.role as u64));
        rng
    }

    pub fn sibling(&self, role: StreamRole) -> Self {
        Substream { role, ..*self }
    }
}
