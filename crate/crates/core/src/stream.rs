//! Counter-based random substreams.
//!
//! Every random quantity in the crate is addressed by `(seed, domain, stream,
//! position)`. The key of a ChaCha8 generator is built from the master seed
//! and the domain tag, the ChaCha stream id selects the trial (or draw), and
//! the word position selects the element within it. Any element can therefore
//! be regenerated in isolation, which makes results independent of how trials
//! are scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Separates independent consumers of the same master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    CompletionTimes,
    ProductPlacement,
    SystemDraw,
    Generator,
    Workload,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::CompletionTimes => 0x636f_6d70,
            Domain::ProductPlacement => 0x7072_6f64,
            Domain::SystemDraw => 0x7379_7374,
            Domain::Generator => 0x6765_6e65,
            Domain::Workload => 0x776f_726b,
        }
    }
}

/// Generator positioned at the start of `stream` within `domain`.
pub fn substream(seed: u64, domain: Domain, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.tag().to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Maps 64 random bits to the open interval (0, 1).
#[inline]
pub fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// The `index`-th open-unit uniform of a substream, without generating the
/// ones before it.
pub fn uniform_at(seed: u64, domain: Domain, stream: u64, index: u64) -> f64 {
    let mut rng = substream(seed, domain, stream);
    rng.set_word_pos(2 * index as u128);
    open_unit(rng.next_u64())
}
