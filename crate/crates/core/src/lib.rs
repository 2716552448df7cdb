//! Inverse heat dissipation generative models.
//!
//! Images are degraded by running the heat equation on the pixel grid (solved
//! exactly in the cosine basis) and regenerated by a learned stochastic
//! reverse chain. The crate covers the forward process, a small autodiff
//! U-Net, training, sampling, ELBO evaluation and spectral diagnostics.

pub mod analysis;
pub mod cli;
pub mod dataio;
pub mod elbo;
pub mod error;
pub mod image;
pub mod neural;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod spectral;
pub mod training;

pub use error::{Error, Result};
pub use image::ImageGrid;
pub use schedule::{build_schedule, BlurSchedule};
pub use spectral::{
    dct2, dissipate, dissipate_many, euler_sharpen_step, frequency_grid, idct2, FrequencyGrid, SpectralImage,
};
