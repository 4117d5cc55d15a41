//! Reproducible random streams.
//!
//! Every draw comes from ChaCha20 keyed by the master seed (expanded with
//! `SeedableRng::seed_from_u64`) with the 64-bit ChaCha stream id set to a
//! purpose-specific index. ChaCha20 is counter based, so streams never
//! overlap and a `(seed, stream)` pair replays the same sequence regardless
//! of which thread or in what order it is consumed.
//!
//! Stream id layout:
//!
//! | id                               | purpose                            |
//! |----------------------------------|------------------------------------|
//! | `0 .. 2^62`                      | dataset record `record_index`      |
//! | `2^63 | W << 32 | r`             | kurtosis realization `r` at window `W` |
//! | `2^63 | 2^62 | W << 32 | r`      | Gaussian-control realization       |
//! | `u64::MAX`                       | case-1 subcarrier split            |

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type StreamRng = ChaCha20Rng;

pub const CASE_SPLIT_STREAM: u64 = u64::MAX;
const KURTOSIS_BIT: u64 = 1 << 63;
const GAUSSIAN_BIT: u64 = 1 << 62;

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    pub fn record(master_seed: u64, record_index: u64) -> Self {
        assert!(record_index < GAUSSIAN_BIT, "record index too large");
        Self::new(master_seed, record_index)
    }

    pub fn kurtosis(master_seed: u64, window: usize, realization: u64, gaussian: bool) -> Self {
        assert!(window < 1 << 29 && realization < 1 << 32);
        let mut id = KURTOSIS_BIT | (window as u64) << 32 | realization;
        if gaussian {
            id |= GAUSSIAN_BIT;
        }
        Self::new(master_seed, id)
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}
