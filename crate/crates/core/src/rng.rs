//! Seeded random streams.
//!
//! Every command derives all of its generators from one root seed. Each
//! consumer gets its own ChaCha8 stream selected by a purpose tag and an
//! index (training step, epoch, sample number), so drawing more numbers in
//! one place never shifts the draws made anywhere else.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::image::ImageGrid;

/// Purpose tag of a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Stream {
    /// Dataset order (indexed by epoch).
    Data = 1,
    /// Step indices and input noise of a training step (indexed by step).
    Train = 2,
    /// Reverse-chain noise (indexed by sample).
    Noise = 3,
    /// Prior draws (indexed by sample).
    Prior = 4,
    /// Monte-Carlo draws of ELBO evaluation (indexed by example).
    Eval = 5,
}

const INDEX_MASK: u64 = (1 << 56) - 1;

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 56) | (index & INDEX_MASK));
    rng
}

/// Image of i.i.d. `N(0, std²)` values.
pub fn normal_image(rng: &mut impl Rng, height: usize, width: usize, channels: usize, std: f64) -> ImageGrid {
    ImageGrid::from_fn(height, width, channels, |_, _, _| {
        std * rng.sample::<f64, _>(StandardNormal)
    })
}
