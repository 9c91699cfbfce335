use serde::{Deserialize, Serialize};

use super::{SaliencyMask, TuningConfig};
use crate::diffusion::{ddim_step, guide, Embedding, Latent, NoiseSchedule, ToyDenoiser};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub l_sem: f64,
    pub l_wm: f64,
    pub l_total: f64,
}

fn check_mask<T: Scalar>(mask: &SaliencyMask, z: &Latent<T>) -> Result<()> {
    if (mask.channels, mask.height, mask.width) != z.shape() {
        return Err(Error::shape(z.shape(), (mask.channels, mask.height, mask.width)));
    }
    Ok(())
}

/// `l_sem = ||z_star - z_pred||_2^2`, `l_wm = ||mask . (z_hat - z_pred)||_1`,
/// both sum-reduced.
pub fn tuning_losses<T: Scalar>(
    z_pred: &Latent<T>,
    z_star: &Latent<T>,
    z_hat: &Latent<T>,
    mask: &SaliencyMask,
    cfg: &TuningConfig,
) -> Result<Losses> {
    z_pred.check_same_shape(z_star)?;
    z_pred.check_same_shape(z_hat)?;
    check_mask(mask, z_pred)?;
    let l_sem = z_star.dist_sqr(z_pred).as_f64();
    let l_wm: f64 = z_hat
        .data
        .iter()
        .zip(&z_pred.data)
        .enumerate()
        .filter(|&(i, _)| mask.active(i))
        .map(|(_, (&a, &b))| (a - b).abs().as_f64())
        .sum();
    Ok(Losses {
        l_sem,
        l_wm,
        l_total: cfg.lambda1 * l_sem + cfg.lambda2 * l_wm,
    })
}

/// One timestep of the tuning problem with everything that does not depend
/// on the null embedding precomputed.
pub struct StepObjective<'a, T> {
    d: &'a ToyDenoiser<T>,
    s: &'a NoiseSchedule,
    t: usize,
    z_bar: &'a Latent<T>,
    lin: Latent<T>,
    eps_cond: Latent<T>,
    z_star_prev: &'a Latent<T>,
    z_hat_prev: &'a Latent<T>,
    mask: &'a SaliencyMask,
    cfg: &'a TuningConfig,
    /// `d z_pred / d eps_null`, i.e. the DDIM eps coefficient times `1 - w`.
    null_gain: T,
}

impl<'a, T: Scalar> StepObjective<'a, T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        d: &'a ToyDenoiser<T>,
        z_bar: &'a Latent<T>,
        t: usize,
        cond: &Embedding<T>,
        z_star_prev: &'a Latent<T>,
        z_hat_prev: &'a Latent<T>,
        mask: &'a SaliencyMask,
        cfg: &'a TuningConfig,
        s: &'a NoiseSchedule,
    ) -> Result<Self> {
        z_bar.check_same_shape(z_star_prev)?;
        z_bar.check_same_shape(z_hat_prev)?;
        check_mask(mask, z_bar)?;
        let lin = d.linear_part(z_bar)?;
        let eps_cond = d.eps_from_linear(&lin, t, cond)?;
        let (_, b) = s.ddim_coeffs(t, s.prev(t)?);
        Ok(StepObjective {
            d,
            s,
            t,
            z_bar,
            lin,
            eps_cond,
            z_star_prev,
            z_hat_prev,
            mask,
            cfg,
            null_gain: T::of(b * (1.0 - cfg.guidance_w)),
        })
    }

    /// `z_{t-1}(z_bar_t, null, cond)`; same arithmetic as guided sampling.
    pub fn predict(&self, null: &Embedding<T>) -> Result<Latent<T>> {
        let w = self.cfg.guidance_w;
        let eps = if w == 1.0 {
            self.eps_cond.clone()
        } else {
            guide(&self.eps_cond, &self.d.eps_from_linear(&self.lin, self.t, null)?, w)
        };
        ddim_step(self.z_bar, &eps, self.t, self.s)
    }

    pub fn losses(&self, null: &Embedding<T>) -> Result<Losses> {
        let z_pred = self.predict(null)?;
        tuning_losses(&z_pred, self.z_star_prev, self.z_hat_prev, self.mask, self.cfg)
    }

    /// Loss at `null` and its gradient with respect to `null`.
    ///
    /// The mask is held constant and only the unconditional branch of the
    /// guidance depends on `null`. The L1 subgradient at zero is zero.
    pub fn loss_and_grad(&self, null: &Embedding<T>) -> Result<(Losses, Embedding<T>)> {
        let z_pred = self.predict(null)?;
        let losses = tuning_losses(&z_pred, self.z_star_prev, self.z_hat_prev, self.mask, self.cfg)?;
        let two_l1 = T::of(2.0 * self.cfg.lambda1);
        let l2 = T::of(self.cfg.lambda2);
        let mut cot = z_pred.clone();
        for (i, g) in cot.data.iter_mut().enumerate() {
            let pred = z_pred.data[i];
            let mut v = two_l1 * (pred - self.z_star_prev.data[i]);
            if self.mask.active(i) {
                let r = pred - self.z_hat_prev.data[i];
                if r > T::zero() {
                    v += l2;
                } else if r < T::zero() {
                    v -= l2;
                }
            }
            *g = v * self.null_gain;
        }
        let grad = self.d.vjp_from_linear(&self.lin, self.t, null, &cot)?;
        Ok((losses, grad))
    }
}

/// Gradient of the weighted tuning loss at one step with respect to the null embedding.
#[allow(clippy::too_many_arguments)]
pub fn embedding_grad<T: Scalar>(
    d: &ToyDenoiser<T>,
    z_bar_t: &Latent<T>,
    t: usize,
    null_t: &Embedding<T>,
    cond: &Embedding<T>,
    z_star_prev: &Latent<T>,
    z_hat_prev: &Latent<T>,
    mask: &SaliencyMask,
    cfg: &TuningConfig,
    s: &NoiseSchedule,
) -> Result<Embedding<T>> {
    let obj = StepObjective::new(d, z_bar_t, t, cond, z_star_prev, z_hat_prev, mask, cfg, s)?;
    Ok(obj.loss_and_grad(null_t)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(v: f64) -> Latent<f64> {
        Latent::new(1, 1, 1, vec![v]).unwrap()
    }

    #[test]
    fn zero_when_all_equal() {
        let z = cell(0.3);
        let cfg = TuningConfig::default();
        let l = tuning_losses(&z, &z, &z, &SaliencyMask::full(1, 1, 1), &cfg).unwrap();
        assert_eq!((l.l_sem, l.l_wm, l.l_total), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_mask_kills_watermark_term() {
        let cfg = TuningConfig::default();
        let l = tuning_losses(&cell(1.0), &cell(1.0), &cell(50.0), &SaliencyMask::empty(1, 1, 1), &cfg)
            .unwrap();
        assert_eq!(l.l_wm, 0.0);
    }

    #[test]
    fn single_cell_arithmetic() {
        let cfg = TuningConfig::default();
        let l = tuning_losses(&cell(1.0), &cell(0.0), &cell(2.0), &SaliencyMask::full(1, 1, 1), &cfg)
            .unwrap();
        assert_eq!(l.l_sem, 1.0);
        assert_eq!(l.l_wm, 1.0);
        assert!((l.l_total - (1.5 + 0.0007)).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let cfg = TuningConfig::default();
        let m = SaliencyMask::full(1, 1, 1);
        assert!(tuning_losses(&cell(1.0), &Latent::zeros(1, 1, 2), &cell(1.0), &m, &cfg).is_err());
        let m2 = SaliencyMask::full(1, 2, 1);
        assert!(tuning_losses(&cell(1.0), &cell(1.0), &cell(1.0), &m2, &cfg).is_err());
    }

    mod gradient {
        use super::super::*;
        use crate::diffusion::{DenoiserParams, ScheduleParams};
        use crate::numerics::{gaussian_grid, SeededRng};
        use crate::tuning::saliency_mask;

        // Central differences along random directions; h is small enough that
        // the L1 kinks are almost never crossed.
        #[test]
        fn matches_finite_differences() {
            let s = NoiseSchedule::linear(ScheduleParams::default()).unwrap();
            let d = ToyDenoiser::<f64>::new(
                DenoiserParams {
                    height: 8,
                    width: 8,
                    dim: 16,
                    ..Default::default()
                },
                &s,
            )
            .unwrap();
            let mut rng = SeededRng::new(77);
            let mut worst = 0.0f64;
            for inst in 0..20u64 {
                let t = s.steps[(inst as usize * 7) % s.num_steps()];
                let z = gaussian_grid::<f64>(&mut rng, 4, 8, 8);
                let z_star = gaussian_grid::<f64>(&mut rng, 4, 8, 8);
                let z_hat = gaussian_grid::<f64>(&mut rng, 4, 8, 8);
                let cond = Embedding::from_vec((0..16).map(|_| rng.standard_normal()).collect());
                let null = Embedding::from_vec((0..16).map(|_| 0.3 * rng.standard_normal()).collect());
                let mask = saliency_mask(&z_hat, &z_star, 0.2).unwrap();
                let cfg = TuningConfig {
                    lambda2: if inst % 2 == 0 { 0.0007 } else { 0.5 },
                    ..Default::default()
                };
                let obj = StepObjective::new(&d, &z, t, &cond, &z_star, &z_hat, &mask, &cfg, &s).unwrap();
                let g = obj.loss_and_grad(&null).unwrap().1;
                assert_eq!(g, embedding_grad(&d, &z, t, &null, &cond, &z_star, &z_hat, &mask, &cfg, &s).unwrap());
                for _ in 0..3 {
                    let v: Vec<f64> = (0..16).map(|_| rng.standard_normal()).collect();
                    let h = 1e-6;
                    let shift = |sgn: f64| {
                        Embedding::from_vec(null.values.iter().zip(&v).map(|(a, b)| a + sgn * h * b).collect())
                    };
                    let fd = (obj.losses(&shift(1.0)).unwrap().l_total
                        - obj.losses(&shift(-1.0)).unwrap().l_total)
                        / (2.0 * h);
                    let an: f64 = g.values.iter().zip(&v).map(|(a, b)| a * b).sum();
                    let rel = (fd - an).abs() / an.abs().max(1e-8);
                    worst = worst.max(rel);
                }
            }
            assert!(worst < 1e-4, "worst relative error {worst:e}");
        }

        #[test]
        fn unit_guidance_has_zero_gradient() {
            let s = NoiseSchedule::linear(ScheduleParams::default()).unwrap();
            let d = ToyDenoiser::<f64>::new(DenoiserParams { height: 8, width: 8, ..Default::default() }, &s).unwrap();
            let mut rng = SeededRng::new(1);
            let z = gaussian_grid::<f64>(&mut rng, 4, 8, 8);
            let cfg = TuningConfig { guidance_w: 1.0, ..Default::default() };
            let mask = SaliencyMask::full(4, 8, 8);
            let e = Embedding::zeros(d.dim());
            let g = embedding_grad(&d, &z, 1000, &e, &e, &z, &z, &mask, &cfg, &s).unwrap();
            assert!(g.values.iter().all(|&v| v == 0.0));
        }
    }
}
