//! Seeded random streams.
//!
//! Every random draw in the crate comes from a [`Stream`]. Child streams are
//! derived from a master seed and a path of integer keys (replication index,
//! purpose tag, cell coordinates), so results never depend on the order in
//! which work is scheduled.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Hashes a master seed and a key path into a child seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |h, &k| splitmix64(h ^ splitmix64(k)))
}

#[derive(Debug, Clone)]
pub struct Stream {
    id: u64,
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            id: seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn derive(master: u64, path: &[u64]) -> Self {
        Self::from_seed(derive_seed(master, path))
    }

    /// The seed this stream was created from.
    pub fn id(&self) -> u64 {
        self.id
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| Stream::derive(7, &[1, 2]).random()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
    }
}
