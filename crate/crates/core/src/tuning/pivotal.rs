use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{saliency_mask, Losses, Optimizer, StepObjective, TuningConfig};
use crate::diffusion::{
    cfg_eps, ddim_step, decode, invert_trajectory, sample_trajectory, Embedding, Image, Latent,
    NoiseSchedule, Nulls, ToyDenoiser, Trajectory,
};
use crate::watermark::{embed, WatermarkKey};
use crate::{Error, Result, Scalar};

/// Tuned null embeddings, one per sampled step, noisiest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullTextSchedule<T> {
    pub nulls: Vec<Embedding<T>>,
}

impl<T: Scalar> NullTextSchedule<T> {
    pub fn len(&self) -> usize {
        self.nulls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nulls.is_empty()
    }

    pub fn as_nulls(&self) -> Nulls<'_, T> {
        Nulls::PerStep(&self.nulls)
    }
}

/// Loss history of one sampled step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// Loss before each optimiser update (`n_iters` entries, empty when untuned).
    pub losses: Vec<Losses>,
    /// Loss of the embedding actually used for the step.
    pub final_loss: Option<Losses>,
    pub mask_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TuneResult<T> {
    /// Inverted trajectory of the original image, `z*`.
    pub original: Trajectory<T>,
    /// Guided trajectory from the watermarked `z_T` with a zero null, `z_hat`.
    pub watermarked: Trajectory<T>,
    /// Trajectory driven by the tuned nulls, `z_bar`.
    pub trajectory: Trajectory<T>,
    pub nulls: NullTextSchedule<T>,
    pub image: Image<T>,
    pub records: Vec<StepRecord>,
}

impl<T: Scalar> TuneResult<T> {
    /// `step,iter,l_sem,l_wm,l_total`, one row per optimiser iteration.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("step,iter,l_sem,l_wm,l_total\n");
        for (k, rec) in self.records.iter().enumerate() {
            for (j, l) in rec.losses.iter().enumerate() {
                let _ = writeln!(out, "{k},{j},{:e},{:e},{:e}", l.l_sem, l.l_wm, l.l_total);
            }
        }
        out
    }
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
}

impl<T: Scalar> Adam<T> {
    fn new(dim: usize) -> Self {
        Adam {
            m: vec![T::zero(); dim],
            v: vec![T::zero(); dim],
            step: 0,
        }
    }

    fn update(&mut self, x: &mut Embedding<T>, g: &Embedding<T>, cfg: &TuningConfig) {
        self.step += 1;
        let (b1, b2) = (T::of(cfg.adam_beta1), T::of(cfg.adam_beta2));
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        let (lr, eps) = (T::of(cfg.lr), T::of(cfg.adam_eps));
        for i in 0..x.values.len() {
            let gi = g.values[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * gi;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * gi * gi;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            x.values[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

fn check_finite(l: &Losses, t: usize, iter: usize) -> Result<()> {
    if l.l_total.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss {
            t,
            iter,
            l_sem: l.l_sem,
            l_wm: l.l_wm,
        })
    }
}

/// Watermarks `z0_star` and tunes per-step null embeddings so the guided
/// trajectory from the watermarked `z_T` tracks the original one.
///
/// Steps whose index from the top is below `start_step` are not tuned and
/// keep the zero null.
pub fn pivotal_tune<T: Scalar>(
    d: &ToyDenoiser<T>,
    z0_star: &Latent<T>,
    key: &WatermarkKey,
    cond: &Embedding<T>,
    cfg: &TuningConfig,
    s: &NoiseSchedule,
) -> Result<TuneResult<T>> {
    cfg.validate()?;
    let original = invert_trajectory(d, z0_star, cond, s)?;
    let z_top = embed(original.top(), key)?;
    let zero = Embedding::zeros(d.dim());
    let watermarked = sample_trajectory(d, &z_top, cond, Nulls::Constant(&zero), cfg.guidance_w, s)?;

    let n = s.num_steps();
    let mut states = Vec::with_capacity(n + 1);
    let mut nulls = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    let mut z_bar = z_top;
    let mut null = zero.clone();
    for (k, &t) in s.steps[..n].iter().enumerate() {
        let tp = s.steps[k + 1];
        let next = if k < cfg.start_step || cfg.n_iters == 0 {
            records.push(StepRecord {
                t,
                losses: Vec::new(),
                final_loss: None,
                mask_fraction: 0.0,
            });
            let eps = cfg_eps(d, &z_bar, t, cond, &null, cfg.guidance_w)?;
            ddim_step(&z_bar, &eps, t, s)?
        } else {
            let z_star_prev = &original.states[k + 1].1;
            let z_hat_prev = &watermarked.states[k + 1].1;
            debug_assert_eq!(original.states[k + 1].0, tp);
            let mask = saliency_mask(z_hat_prev, z_star_prev, cfg.saliency_q)?;
            let obj = StepObjective::new(d, &z_bar, t, cond, z_star_prev, z_hat_prev, &mask, cfg, s)?;
            let mut adam = Adam::new(null.dim());
            let mut losses = Vec::with_capacity(cfg.n_iters);
            for j in 0..cfg.n_iters {
                let (l, g) = obj.loss_and_grad(&null)?;
                check_finite(&l, t, j)?;
                losses.push(l);
                match cfg.optimizer {
                    Optimizer::Adam => adam.update(&mut null, &g, cfg),
                    Optimizer::Sgd => {
                        let lr = T::of(cfg.lr);
                        null.values.iter_mut().zip(&g.values).for_each(|(x, gi)| *x -= lr * *gi);
                    }
                }
                null.clamp_norm();
            }
            let next = obj.predict(&null)?;
            let fin = obj.losses(&null)?;
            check_finite(&fin, t, cfg.n_iters)?;
            records.push(StepRecord {
                t,
                losses,
                final_loss: Some(fin),
                mask_fraction: mask.active_fraction(),
            });
            next
        };
        nulls.push(null.clone());
        states.push((t, std::mem::replace(&mut z_bar, next)));
    }
    states.push((0, z_bar));
    let trajectory = Trajectory { states };
    let image = decode(trajectory.data_end())?;
    Ok(TuneResult {
        original,
        watermarked,
        trajectory,
        nulls: NullTextSchedule { nulls },
        image,
        records,
    })
}
