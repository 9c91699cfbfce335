//! Toy latent diffusion stack: schedule, differentiable denoiser, guidance,
//! DDIM sampling/inversion and the latent/image codec.

mod codec;
mod ddim;
mod denoiser;
mod latent;
mod schedule;

pub use codec::{decode, encode, null_embed, prompt_embed, LATENT_RANGE};
pub use ddim::{
    cfg_eps, ddim_inverse_step, ddim_step, forward_diffuse, guide, invert_trajectory,
    sample_trajectory, Nulls, DEFAULT_GUIDANCE,
};
pub use denoiser::{DenoiserParams, ToyDenoiser};
pub use latent::{Embedding, Image, Latent, Trajectory, EMBEDDING_NORM_BOUND};
pub use schedule::{NoiseSchedule, ScheduleParams};
