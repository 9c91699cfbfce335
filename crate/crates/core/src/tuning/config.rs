use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam,
    /// Plain gradient descent with step `lr`.
    Sgd,
}

/// Hyperparameters of the per-step null-embedding optimisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningConfig {
    /// Weight of the semantic (L2 to the original trajectory) loss.
    pub lambda1: f64,
    /// Weight of the watermark (masked L1 to the watermarked trajectory) loss.
    pub lambda2: f64,
    /// Optimiser iterations per timestep.
    pub n_iters: usize,
    pub guidance_w: f64,
    pub lr: f64,
    /// Fraction of latent cells the saliency mask keeps.
    pub saliency_q: f64,
    /// Ladder steps (counted from `z_T`) left untuned.
    pub start_step: usize,
    pub optimizer: Optimizer,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            lambda1: 1.50,
            lambda2: 0.0007,
            n_iters: 10,
            guidance_w: 7.5,
            lr: 0.01,
            saliency_q: 0.20,
            start_step: 0,
            optimizer: Optimizer::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::param("lambda", "loss weights must be >= 0"));
        }
        if !(self.saliency_q > 0.0 && self.saliency_q < 1.0) {
            return Err(Error::param("saliency_q", "must lie in (0, 1)"));
        }
        if !(self.lr > 0.0) || !self.guidance_w.is_finite() {
            return Err(Error::param("lr", "learning rate must be > 0 and guidance finite"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
            || !(self.adam_eps > 0.0)
        {
            return Err(Error::param("adam", "need beta1, beta2 in [0, 1) and eps > 0"));
        }
        Ok(())
    }
}
