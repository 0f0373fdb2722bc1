//! Named RNG streams derived from one master seed.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed and placed on
//! its own 64-bit stream id, so draws in one stream never shift another. This
//! keeps per-client randomness independent of execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// UE horizontal distances.
    Geometry,
    /// UE CPU frequencies.
    Compute,
    /// Model initialization.
    Init,
    /// Dataset partitioning.
    Partition,
    /// Synthetic data generation.
    Data,
    /// Client selection for one round.
    Selection { round: u32 },
    /// Minibatch shuffling for one client in one round.
    Client { round: u32, ue: u32 },
}

impl Stream {
    fn id(self) -> u64 {
        // tag in the top byte, round in the next 24 bits, UE in the low 32
        let (tag, round, ue) = match self {
            Stream::Geometry => (1u64, 0u64, 0u64),
            Stream::Compute => (2, 0, 0),
            Stream::Init => (3, 0, 0),
            Stream::Partition => (4, 0, 0),
            Stream::Data => (5, 0, 0),
            Stream::Selection { round } => (6, round as u64, 0),
            Stream::Client { round, ue } => (7, round as u64, ue as u64),
        };
        (tag << 56) | ((round & 0xff_ffff) << 32) | ue
    }
}

pub fn stream(master_seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(which.id());
    rng
}
