use super::{Embedding, Latent, NoiseSchedule, ToyDenoiser, Trajectory};
use crate::numerics::{gaussian_grid, SeededRng};
use crate::{Error, Result, Scalar};

/// Classifier-free guidance scale used for generation.
pub const DEFAULT_GUIDANCE: f64 = 7.5;

/// Source of the unconditional embedding at each sampled step.
#[derive(Debug, Clone, Copy)]
pub enum Nulls<'a, T> {
    Constant(&'a Embedding<T>),
    /// One embedding per step, noisiest step first (`T` entries).
    PerStep(&'a [Embedding<T>]),
}

impl<'a, T: Scalar> Nulls<'a, T> {
    fn get(&self, step: usize) -> &'a Embedding<T> {
        match *self {
            Nulls::Constant(e) => e,
            Nulls::PerStep(list) => &list[step],
        }
    }
}

/// `z_t = sqrt(ab_t) z0 + sqrt(1 - ab_t) eps` with fresh `eps` from `rng`.
pub fn forward_diffuse<T: Scalar>(
    z0: &Latent<T>,
    t: usize,
    s: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<Latent<T>> {
    s.position(t)?;
    let ab = s.alpha_bar(t);
    let (c, h, w) = z0.shape();
    let noise = gaussian_grid::<T>(rng, c, h, w);
    Ok(z0.lin_comb(T::of(ab.sqrt()), &noise, T::of((1.0 - ab).sqrt())))
}

/// Affine combination of precomputed conditional and unconditional predictions.
pub fn guide<T: Scalar>(eps_cond: &Latent<T>, eps_null: &Latent<T>, w: f64) -> Latent<T> {
    eps_cond.lin_comb(T::of(w), eps_null, T::of(1.0 - w))
}

pub fn cfg_eps<T: Scalar>(
    d: &ToyDenoiser<T>,
    z: &Latent<T>,
    t: usize,
    cond: &Embedding<T>,
    null: &Embedding<T>,
    w: f64,
) -> Result<Latent<T>> {
    if !w.is_finite() {
        return Err(Error::NonFinite("guidance scale"));
    }
    let lin = d.linear_part(z)?;
    let eps_cond = d.eps_from_linear(&lin, t, cond)?;
    if w == 1.0 {
        return Ok(eps_cond);
    }
    let eps_null = d.eps_from_linear(&lin, t, null)?;
    Ok(guide(&eps_cond, &eps_null, w))
}

/// One deterministic DDIM move from `t` to the next less noisy ladder step.
pub fn ddim_step<T: Scalar>(
    z_t: &Latent<T>,
    eps: &Latent<T>,
    t: usize,
    s: &NoiseSchedule,
) -> Result<Latent<T>> {
    z_t.check_same_shape(eps)?;
    let to = s.prev(t)?;
    let (a, b) = s.ddim_coeffs(t, to);
    Ok(z_t.lin_comb(T::of(a), eps, T::of(b)))
}

/// First-order DDIM inversion from `t` to the next noisier ladder step.
pub fn ddim_inverse_step<T: Scalar>(
    z_t: &Latent<T>,
    eps: &Latent<T>,
    t: usize,
    s: &NoiseSchedule,
) -> Result<Latent<T>> {
    z_t.check_same_shape(eps)?;
    let to = s.next(t)?;
    let (a, b) = s.ddim_coeffs(t, to);
    Ok(z_t.lin_comb(T::of(a), eps, T::of(b)))
}

/// Guided DDIM sampling from `z_T` down to `z_0`, keeping every state.
pub fn sample_trajectory<T: Scalar>(
    d: &ToyDenoiser<T>,
    z_top: &Latent<T>,
    cond: &Embedding<T>,
    nulls: Nulls<'_, T>,
    w: f64,
    s: &NoiseSchedule,
) -> Result<Trajectory<T>> {
    d.check_latent(z_top)?;
    let n = s.num_steps();
    if let Nulls::PerStep(list) = nulls {
        if list.len() != n {
            return Err(Error::shape(n, list.len()));
        }
    }
    let mut states = Vec::with_capacity(n + 1);
    let mut z = z_top.clone();
    for (k, &t) in s.steps[..n].iter().enumerate() {
        let eps = cfg_eps(d, &z, t, cond, nulls.get(k), w)?;
        let next = ddim_step(&z, &eps, t, s)?;
        states.push((t, std::mem::replace(&mut z, next)));
    }
    states.push((0, z));
    Ok(Trajectory { states })
}

/// DDIM inversion at guidance 1 from `z_0` up to `z_T`.
///
/// The returned trajectory is ordered like a sampled one (noisiest first).
pub fn invert_trajectory<T: Scalar>(
    d: &ToyDenoiser<T>,
    z0: &Latent<T>,
    cond: &Embedding<T>,
    s: &NoiseSchedule,
) -> Result<Trajectory<T>> {
    d.check_latent(z0)?;
    let n = s.num_steps();
    let mut states = Vec::with_capacity(n + 1);
    let mut z = z0.clone();
    for &t in s.steps[1..].iter().rev() {
        let eps = d.denoise_eps(&z, t, cond)?;
        let next = ddim_inverse_step(&z, &eps, t, s)?;
        states.push((t, std::mem::replace(&mut z, next)));
    }
    states.push((s.top(), z));
    states.reverse();
    Ok(Trajectory { states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{DenoiserParams, ScheduleParams};

    fn setup(h: usize) -> (ToyDenoiser<f64>, NoiseSchedule) {
        let s = NoiseSchedule::default();
        let p = DenoiserParams {
            height: h,
            width: h,
            seed: 1,
            ..Default::default()
        };
        (ToyDenoiser::new(p, &s).unwrap(), s)
    }

    fn emb(seed: u64) -> Embedding<f64> {
        let mut rng = SeededRng::new(seed);
        let mut v: Vec<f64> = (0..32).map(|_| rng.standard_normal()).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        Embedding::from_vec(v)
    }

    fn max_abs_diff(a: &Latent<f64>, b: &Latent<f64>) -> f64 {
        a.data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn forward_diffuse_at_data_end_is_identity() {
        let s = NoiseSchedule::default();
        let z0 = gaussian_grid::<f64>(&mut SeededRng::new(1), 4, 8, 8);
        let zt = forward_diffuse(&z0, 0, &s, &mut SeededRng::new(2)).unwrap();
        assert_eq!(zt, z0);
        assert!(forward_diffuse(&z0, 1, &s, &mut SeededRng::new(2)).is_err());
        let a = forward_diffuse(&z0, 600, &s, &mut SeededRng::new(2)).unwrap();
        let b = forward_diffuse(&z0, 600, &s, &mut SeededRng::new(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_diffuse_second_moment() {
        let s = NoiseSchedule::default();
        let z0 = gaussian_grid::<f64>(&mut SeededRng::new(1), 4, 8, 8).scaled(2.0);
        let t = 400;
        let ab = s.alpha_bar(t);
        let expect = ab * z0.norm_sqr() + (1.0 - ab) * 256.0;
        let mean = (0..1000)
            .map(|seed| {
                forward_diffuse(&z0, t, &s, &mut SeededRng::new(seed))
                    .unwrap()
                    .norm_sqr()
            })
            .sum::<f64>()
            / 1000.0;
        assert!((mean - expect).abs() < 0.05 * expect, "{mean} vs {expect}");
    }

    #[test]
    fn cfg_special_cases() {
        let (d, _) = setup(8);
        let z = gaussian_grid::<f64>(&mut SeededRng::new(1), 4, 8, 8);
        let (c, n) = (emb(1), Embedding::zeros(32));
        let at_one = cfg_eps(&d, &z, 500, &c, &n, 1.0).unwrap();
        assert_eq!(at_one, d.denoise_eps(&z, 500, &c).unwrap());
        let same = cfg_eps(&d, &z, 500, &c, &c, 7.5).unwrap();
        assert!(max_abs_diff(&same, &at_one) < 1e-12);

        let ones = Latent::new(1, 2, 2, vec![1.0; 4]).unwrap();
        let zeros = Latent::zeros(1, 2, 2);
        assert!(guide(&ones, &zeros, 7.5).data.iter().all(|&v| v == 7.5));
        assert!(cfg_eps(&d, &z, 500, &c, &n, f64::NAN).is_err());
    }

    #[test]
    fn ddim_zero_eps_rescales() {
        let s = NoiseSchedule::default();
        let z = gaussian_grid::<f64>(&mut SeededRng::new(1), 4, 8, 8);
        let zero = Latent::zeros(4, 8, 8);
        let down = ddim_step(&z, &zero, 500, &s).unwrap();
        let r = (s.alpha_bar(480) / s.alpha_bar(500)).sqrt();
        assert!(max_abs_diff(&down, &z.scaled(r)) < 1e-14);
        let up = ddim_inverse_step(&z, &zero, 480, &s).unwrap();
        assert!(max_abs_diff(&up, &z.scaled(1.0 / r)) < 1e-14);
    }

    #[test]
    fn ddim_exact_prediction_is_consistent() {
        let s = NoiseSchedule::default();
        let x = gaussian_grid::<f64>(&mut SeededRng::new(1), 4, 8, 8);
        let e = gaussian_grid::<f64>(&mut SeededRng::new(2), 4, 8, 8);
        let (t, tp) = (700, 680);
        let noisy = |t: usize| {
            let ab = s.alpha_bar(t);
            x.lin_comb(ab.sqrt(), &e, (1.0 - ab).sqrt())
        };
        let stepped = ddim_step(&noisy(t), &e, t, &s).unwrap();
        assert!(max_abs_diff(&stepped, &noisy(tp)) < 1e-12);
    }

    #[test]
    fn ddim_is_linear() {
        let s = NoiseSchedule::default();
        let g = |seed| gaussian_grid::<f64>(&mut SeededRng::new(seed), 4, 8, 8);
        let (z1, z2, e1, e2) = (g(1), g(2), g(3), g(4));
        let (a, b) = (0.7, -1.3);
        let lhs = ddim_step(&z1.lin_comb(a, &z2, b), &e1.lin_comb(a, &e2, b), 300, &s).unwrap();
        let rhs = ddim_step(&z1, &e1, 300, &s)
            .unwrap()
            .lin_comb(a, &ddim_step(&z2, &e2, 300, &s).unwrap(), b);
        assert!(max_abs_diff(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn inverse_step_undoes_step() {
        let s = NoiseSchedule::default();
        let z = gaussian_grid::<f64>(&mut SeededRng::new(1), 4, 8, 8);
        let e = gaussian_grid::<f64>(&mut SeededRng::new(2), 4, 8, 8);
        for &t in &s.steps[..s.num_steps()] {
            let down = ddim_step(&z, &e, t, &s).unwrap();
            let back = ddim_inverse_step(&down, &e, s.prev(t).unwrap(), &s).unwrap();
            assert!(max_abs_diff(&back, &z) < 1e-12 * (1.0 / s.alpha_bar(t)).sqrt());
        }
        assert!(ddim_step(&z, &e, 0, &s).is_err());
        assert!(ddim_inverse_step(&z, &e, 1000, &s).is_err());
    }

    #[test]
    fn single_step_trajectory() {
        let s = NoiseSchedule::linear(ScheduleParams {
            t_sample: 1,
            ..Default::default()
        })
        .unwrap();
        let d = ToyDenoiser::<f64>::new(
            DenoiserParams {
                height: 8,
                width: 8,
                ..Default::default()
            },
            &s,
        )
        .unwrap();
        let z = gaussian_grid::<f64>(&mut SeededRng::new(1), 4, 8, 8);
        let tr = sample_trajectory(&d, &z, &emb(1), Nulls::Constant(&Embedding::zeros(32)), 7.5, &s)
            .unwrap();
        assert_eq!(tr.len(), 2);
        assert_eq!(tr.timesteps(), vec![1000, 0]);
    }

    #[test]
    fn zero_denoiser_chain_is_pure_rescale() {
        let (d, s) = setup(8);
        let d = d.zeroed();
        let z = gaussian_grid::<f64>(&mut SeededRng::new(1), 4, 8, 8);
        let tr = sample_trajectory(&d, &z, &emb(1), Nulls::Constant(&emb(2)), 7.5, &s).unwrap();
        let r = (s.alpha_bar(0) / s.alpha_bar(s.top())).sqrt();
        let expect = z.scaled(r);
        let rel = tr.data_end().relative_l2(&expect);
        assert!(rel < 1e-12, "rel {rel}");
    }

    #[test]
    fn cfg_collapses_when_null_is_cond() {
        let (d, s) = setup(8);
        let z = gaussian_grid::<f64>(&mut SeededRng::new(1), 4, 8, 8);
        let c = emb(3);
        let a = sample_trajectory(&d, &z, &c, Nulls::Constant(&c), 7.5, &s).unwrap();
        let b = sample_trajectory(&d, &z, &c, Nulls::Constant(&c), 1.0, &s).unwrap();
        let rel = a.data_end().relative_l2(b.data_end());
        assert!(rel < 1e-10, "rel {rel}");
        let again = sample_trajectory(&d, &z, &c, Nulls::Constant(&c), 7.5, &s).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn inversion_of_zero_is_zero() {
        let (d, s) = setup(8);
        let d = d.without_bias();
        let zero = Latent::zeros(4, 8, 8);
        let tr = invert_trajectory(&d, &zero, &Embedding::zeros(32), &s).unwrap();
        assert_eq!(tr.len(), s.num_steps() + 1);
        assert_eq!(tr.timesteps(), s.steps);
        assert!(tr.states.iter().all(|(_, z)| z.data.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn per_step_nulls_must_cover_ladder() {
        let (d, s) = setup(8);
        let z = gaussian_grid::<f64>(&mut SeededRng::new(1), 4, 8, 8);
        let short = vec![Embedding::zeros(32); 3];
        assert!(sample_trajectory(&d, &z, &emb(1), Nulls::PerStep(&short), 7.5, &s).is_err());
    }
}
