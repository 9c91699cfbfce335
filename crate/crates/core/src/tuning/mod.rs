//! Per-step null-embedding tuning that pulls the watermarked sampling
//! trajectory back towards the original image's inverted trajectory.

mod config;
mod objective;
mod pivotal;
mod saliency;

pub use config::{Optimizer, TuningConfig};
pub use objective::{embedding_grad, tuning_losses, Losses, StepObjective};
pub use pivotal::{pivotal_tune, NullTextSchedule, StepRecord, TuneResult};
pub use saliency::{saliency_mask, SaliencyMask};
