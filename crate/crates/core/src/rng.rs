//! Keyed random streams.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::Dyadic;

/// Identifies one reproducible random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RngStreamKey {
    pub master_seed: u64,
    pub stream_id: u64,
    /// Starting word position inside the stream.
    pub counter: u64,
}

impl RngStreamKey {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        RngStreamKey {
            master_seed,
            stream_id,
            counter: 0,
        }
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        RngStreamKey { stream_id, counter: 0, ..self }
    }

    /// Derives a key in a separate namespace (e.g. auxiliary Monte-Carlo
    /// centering) so its streams never overlap the main replications.
    pub fn namespaced(self, namespace: u64) -> Self {
        let mixed = self.master_seed ^ namespace.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
        RngStreamKey::new(mixed, self.stream_id)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng.set_word_pos(self.counter as u128);
        rng
    }
}

/// Draws `u = m / 2^bits` with `m` uniform on `[1, 2^bits)`, so `u` lies in
/// `(0, 1)`.
pub fn uniform_dyadic<R: RngCore>(rng: &mut R, bits: u32) -> Dyadic {
    debug_assert!((1..=128).contains(&bits));
    loop {
        let m = if bits <= 64 {
            (rng.next_u64() >> (64 - bits)) as u128
        } else {
            let hi = (rng.next_u64() >> (128 - bits)) as u128;
            (hi << 64) | rng.next_u64() as u128
        };
        if m != 0 {
            return Dyadic::new(m, bits);
        }
    }
}

pub fn check_bits(bits: u32) -> Result<u32> {
    if (1..=128).contains(&bits) {
        Ok(bits)
    } else {
        Err(Error::config(format!("V precision must be 1..=128 bits, got {bits}")))
    }
}
