//! Named, portable random streams.
//!
//! Every random quantity is drawn from a ChaCha20 generator. The 64-bit run
//! seed is expanded to a 256-bit key with `SeedableRng::seed_from_u64` (the
//! PCG32-based expansion documented by `rand_core`), and the 64-bit ChaCha
//! stream id is set to `(replica << 8) | purpose`. Distinct purposes and
//! replicas therefore never share a keystream, and a draw sequence depends
//! only on `(seed, replica, purpose)`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// One-line description written into output headers and sidecars.
pub const PRNG_DESCRIPTION: &str =
    "ChaCha20 (rand_chacha); key = seed_from_u64(seed); stream = (replica << 8) | purpose; normals = rand_distr::StandardNormal";

/// What a stream is used for. The discriminant is the low byte of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    GradientNoise = 1,
    Selection = 2,
    Init = 3,
    Data = 4,
    Minibatch = 5,
    Sampling = 6,
    Episodes = 7,
}

pub type Rng = ChaCha20Rng;

pub fn stream(seed: u64, replica: u64, purpose: Purpose) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((replica << 8) | purpose as u64);
    rng
}
