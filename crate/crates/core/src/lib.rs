//! Invisible watermarking for latent diffusion by Fourier-ring keys and
//! per-step null-text pivotal tuning.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: radix-2 FFT, seeded Gaussian streams, incomplete gamma and
//!   non-central chi-squared CDF.
//! * [`diffusion`]: noise schedule, a closed-form differentiable toy denoiser,
//!   classifier-free guidance, DDIM sampling and inversion, the latent/image
//!   codec and prompt embeddings.
//! * [`watermark`]: ring keys, Fourier embedding, extraction and the
//!   statistical test.
//! * [`tuning`]: saliency masks, the semantic and watermark losses, their
//!   gradient with respect to the null embedding and the full tuning loop.
//! * [`perturb`]: image-space attacks.
//! * [`harness`]: quality metrics, batch evaluation, ablations and reports.
//!
//! Latent-space math is generic over [`Scalar`] (`f32` or `f64`). The
//! statistical layer always works in `f64`. The aliases at the crate root
//! name the `f64` instantiations used by the pipeline and the CLI.

pub mod diffusion;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod perturb;
pub mod scalar;
pub mod tuning;
pub mod watermark;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Latent = diffusion::Latent<f64>;
pub type LatentF32 = diffusion::Latent<f32>;
pub type Embedding = diffusion::Embedding<f64>;
pub type EmbeddingF32 = diffusion::Embedding<f32>;
pub type Image = diffusion::Image<f64>;
pub type ImageF32 = diffusion::Image<f32>;
pub type ToyDenoiser = diffusion::ToyDenoiser<f64>;
pub type ToyDenoiserF32 = diffusion::ToyDenoiser<f32>;
pub type Trajectory = diffusion::Trajectory<f64>;
pub type Grid2D = numerics::Grid2D<f64>;
pub type ComplexGrid2D = numerics::ComplexGrid2D<f64>;
pub type SaliencyMask = tuning::SaliencyMask;
pub type NullTextSchedule = tuning::NullTextSchedule<f64>;
pub type TuneResult = tuning::TuneResult<f64>;

pub use diffusion::NoiseSchedule;
pub use numerics::SeededRng;
pub use tuning::TuningConfig;
pub use watermark::{VerificationReport, WatermarkKey};
