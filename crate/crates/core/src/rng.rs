//! Seeded random streams.
//!
//! Every random draw comes from ChaCha20 keyed by the master seed. Independent
//! purposes (design rows, true parameters, responses, projections, ...) and
//! independent trials use distinct ChaCha stream ids, so changing how many
//! numbers one purpose consumes never shifts the draws of another.
//!
//! Stream id layout: `trial << 8 | purpose`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Design = 1,
    TrueBeta = 2,
    Responses = 3,
    Projection = 4,
    TestDesign = 5,
    TestResponses = 6,
    Selection = 7,
    Init = 8,
}

pub fn stream(seed: u64, trial: u64, purpose: Purpose) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((trial << 8) | purpose as u64);
    rng
}
