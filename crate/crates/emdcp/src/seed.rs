//! Counter-based seed derivation.
//!
//! Every randomized routine takes an explicit [`Seed`]. Child seeds are derived
//! by hashing `(parent, tag, index)` with SplitMix64 finalizers, so the stream a
//! routine sees depends only on its position in the call tree and never on
//! scheduling order. This is what keeps parallel and sequential runs identical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The RNG used throughout the crate.
pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(pub u64);

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Seed {
    /// Child seed for the `index`-th use of stream `tag`.
    pub fn derive(self, tag: u64, index: u64) -> Seed {
        Seed(mix(mix(self.0 ^ mix(tag)).wrapping_add(index)))
    }

    /// Child seed keyed by a static label; labels are hashed with FNV-1a.
    pub fn child(self, label: &str) -> Seed {
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        for b in label.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        self.derive(h, 0)
    }

    pub fn rng(self) -> Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
