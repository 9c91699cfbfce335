use serde::{Deserialize, Serialize};

use super::jpeg_roundtrip;
use crate::diffusion::{
    cfg_eps, ddim_step, decode, encode, forward_diffuse, null_embed, Image, NoiseSchedule,
    ToyDenoiser,
};
use crate::numerics::SeededRng;
use crate::{Error, Result, Scalar};

/// Fraction of the sampling ladder re-noised by the default regeneration attack.
pub const REGENERATE_FRACTION: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationSpec {
    Jpeg { quality: u8 },
    /// Random axis-aligned window keeping `area_fraction` of the image, resized back.
    Crop { area_fraction: f64 },
    /// Gaussian blur with `sigma = radius / 2`.
    Blur { radius: usize },
    /// Additive `N(0, intensity^2)` noise on the `[0, 1]` range.
    Noise { intensity: f64 },
    Brightness { factor: f64 },
    /// Rotation by an angle drawn uniformly from `[-degrees, degrees]`.
    Rotate { degrees: f64 },
    /// Re-noise `steps` ladder steps and denoise back without the prompt.
    Regenerate { steps: usize },
}

impl PerturbationSpec {
    /// Short column label, e.g. `jpeg25`.
    pub fn label(&self) -> String {
        match *self {
            PerturbationSpec::Jpeg { quality } => format!("jpeg{quality}"),
            PerturbationSpec::Crop { area_fraction } => format!("crop{area_fraction}"),
            PerturbationSpec::Blur { radius } => format!("blur{radius}"),
            PerturbationSpec::Noise { intensity } => format!("noise{intensity}"),
            PerturbationSpec::Brightness { factor } => format!("brightness{factor}"),
            PerturbationSpec::Rotate { degrees } => format!("rotate{degrees}"),
            PerturbationSpec::Regenerate { steps } => format!("regen{steps}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::param(name, reason));
        match *self {
            PerturbationSpec::Jpeg { quality } if !(1..=100).contains(&quality) => {
                bad("quality", format!("must lie in 1..=100, got {quality}"))
            }
            PerturbationSpec::Crop { area_fraction: a } if !(a > 0.0 && a <= 1.0) => {
                bad("area_fraction", format!("must lie in (0, 1], got {a}"))
            }
            PerturbationSpec::Noise { intensity: i } if !(i >= 0.0 && i.is_finite()) => {
                bad("intensity", format!("must be finite and >= 0, got {i}"))
            }
            PerturbationSpec::Brightness { factor: f } if !(f > 0.0 && f.is_finite()) => {
                bad("factor", format!("must be positive, got {f}"))
            }
            PerturbationSpec::Rotate { degrees: d } if !d.is_finite() => {
                bad("degrees", "must be finite".into())
            }
            _ => Ok(()),
        }
    }
}

/// The default attack suite for a `t_sample`-step ladder.
pub fn severity_defaults_for(t_sample: usize) -> Vec<PerturbationSpec> {
    vec![
        PerturbationSpec::Jpeg { quality: 25 },
        PerturbationSpec::Crop { area_fraction: 0.75 },
        PerturbationSpec::Blur { radius: 4 },
        PerturbationSpec::Noise { intensity: 0.10 },
        PerturbationSpec::Brightness { factor: 2.0 },
        PerturbationSpec::Rotate { degrees: 75.0 },
        PerturbationSpec::Regenerate {
            steps: (REGENERATE_FRACTION * t_sample as f64).round() as usize,
        },
    ]
}

pub fn severity_defaults() -> Vec<PerturbationSpec> {
    severity_defaults_for(50)
}

/// Model access for the regeneration attack.
#[derive(Debug, Clone, Copy)]
pub struct RegenContext<'a, T> {
    pub denoiser: &'a ToyDenoiser<T>,
    pub schedule: &'a NoiseSchedule,
}

/// Index into `0..n` reflected about the edges without repeating them.
fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    (if i >= n { period - i } else { i }) as usize
}

fn crop<T: Scalar>(x: &Image<T>, area: f64, rng: &mut SeededRng) -> Image<T> {
    let (h, w) = (x.height, x.width);
    let side = area.sqrt();
    let ch = ((h as f64 * side).round() as usize).clamp(1, h);
    let cw = ((w as f64 * side).round() as usize).clamp(1, w);
    let top = (rng.uniform() * (h - ch + 1) as f64) as usize % (h - ch + 1);
    let left = (rng.uniform() * (w - cw + 1) as f64) as usize % (w - cw + 1);
    let mut out = x.clone();
    for r in 0..h {
        for c in 0..w {
            out.set(r, c, x.get(top + r * ch / h, left + c * cw / w));
        }
    }
    out
}

fn blur<T: Scalar>(x: &Image<T>, radius: usize) -> Image<T> {
    if radius == 0 {
        return x.clone();
    }
    let sigma = radius as f64 / 2.0;
    let half = 2 * radius as isize;
    let mut k: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    let (h, w) = (x.height, x.width);
    let mut rows = vec![0.0f64; h * w];
    for r in 0..h {
        for c in 0..w {
            rows[r * w + c] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * x.get(r, reflect(c as isize + i as isize - half, w)).as_f64())
                .sum();
        }
    }
    let mut out = x.clone();
    for r in 0..h {
        for c in 0..w {
            let v: f64 = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * rows[reflect(r as isize + i as isize - half, h) * w + c])
                .sum();
            out.set(r, c, T::of(v.clamp(0.0, 1.0)));
        }
    }
    out
}

fn rotate<T: Scalar>(x: &Image<T>, degrees: f64, rng: &mut SeededRng) -> Image<T> {
    let angle = if degrees == 0.0 {
        0.0
    } else {
        rng.uniform_range(-degrees.abs(), degrees.abs())
    };
    rotate_by(x, angle)
}

/// Bilinear rotation about the image centre by `angle` degrees.
fn rotate_by<T: Scalar>(x: &Image<T>, angle: f64) -> Image<T> {
    if angle == 0.0 {
        return x.clone();
    }
    let (sin, cos) = angle.to_radians().sin_cos();
    let (h, w) = (x.height, x.width);
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut out = x.clone();
    for r in 0..h {
        for c in 0..w {
            // Inverse map: sample the source at the output pixel rotated back.
            let (dy, dx) = (r as f64 - cy, c as f64 - cx);
            let sy = cos * dy - sin * dx + cy;
            let sx = sin * dy + cos * dx + cx;
            let (y0, x0) = (sy.floor(), sx.floor());
            let (fy, fx) = (sy - y0, sx - x0);
            let px = |yy: f64, xx: f64| {
                x.get(reflect(yy as isize, h), reflect(xx as isize, w)).as_f64()
            };
            let v = (1.0 - fy) * ((1.0 - fx) * px(y0, x0) + fx * px(y0, x0 + 1.0))
                + fy * ((1.0 - fx) * px(y0 + 1.0, x0) + fx * px(y0 + 1.0, x0 + 1.0));
            out.set(r, c, T::of(v.clamp(0.0, 1.0)));
        }
    }
    out
}

fn regenerate<T: Scalar>(
    x: &Image<T>,
    steps: usize,
    rng: &mut SeededRng,
    ctx: &RegenContext<'_, T>,
) -> Result<Image<T>> {
    let s = ctx.schedule;
    let d = ctx.denoiser;
    let level = steps.min(s.num_steps());
    if level == 0 {
        return Ok(x.clone());
    }
    let t_start = s.at_level(level);
    let mut z = forward_diffuse(&encode(x)?, t_start, s, rng)?;
    let null = null_embed::<T>(d.dim());
    for &t in &s.steps[s.position(t_start)?..s.num_steps()] {
        let eps = cfg_eps(d, &z, t, &null, &null, 1.0)?;
        z = ddim_step(&z, &eps, t, s)?;
    }
    decode(&z)
}

/// Applies one attack; the result stays in `[0, 1]` with the input's shape.
pub fn apply_perturbation<T: Scalar>(
    x: &Image<T>,
    spec: &PerturbationSpec,
    rng: &mut SeededRng,
    ctx: Option<&RegenContext<'_, T>>,
) -> Result<Image<T>> {
    spec.validate()?;
    if x.height == 0 || x.width == 0 {
        return Err(Error::shape("non-empty image", (x.height, x.width)));
    }
    Ok(match *spec {
        PerturbationSpec::Jpeg { quality } => jpeg_roundtrip(x, quality)?,
        PerturbationSpec::Crop { area_fraction } => crop(x, area_fraction, rng),
        PerturbationSpec::Blur { radius } => blur(x, radius),
        PerturbationSpec::Noise { intensity } => {
            let mut out = x.clone();
            for v in &mut out.data {
                let n = rng.standard_normal();
                *v = T::of((v.as_f64() + intensity * n).clamp(0.0, 1.0));
            }
            out
        }
        PerturbationSpec::Brightness { factor } => {
            let mut out = x.clone();
            for v in &mut out.data {
                *v = T::of((v.as_f64() * factor).clamp(0.0, 1.0));
            }
            out
        }
        PerturbationSpec::Rotate { degrees } => rotate(x, degrees, rng),
        PerturbationSpec::Regenerate { steps } => {
            let ctx = ctx.ok_or_else(|| {
                Error::param("ctx", "the regeneration attack needs a denoiser and schedule")
            })?;
            regenerate(x, steps, rng, ctx)?
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{DenoiserParams, ScheduleParams};
    use proptest::prelude::*;

    fn textured(h: usize, w: usize, seed: u64) -> Image<f64> {
        let mut rng = SeededRng::new(seed);
        let data = (0..h * w).map(|_| rng.uniform()).collect();
        Image::new(h, w, data).unwrap()
    }

    #[test]
    fn identities() {
        let x = textured(32, 32, 1);
        let mut rng = SeededRng::new(2);
        for spec in [
            PerturbationSpec::Noise { intensity: 0.0 },
            PerturbationSpec::Brightness { factor: 1.0 },
            PerturbationSpec::Rotate { degrees: 0.0 },
            PerturbationSpec::Crop { area_fraction: 1.0 },
            PerturbationSpec::Blur { radius: 0 },
        ] {
            assert_eq!(apply_perturbation(&x, &spec, &mut rng, None).unwrap(), x, "{spec:?}");
        }
    }

    #[test]
    fn jpeg_100_is_near_lossless() {
        let x = textured(64, 64, 3);
        let y = apply_perturbation(&x, &PerturbationSpec::Jpeg { quality: 100 }, &mut SeededRng::new(0), None)
            .unwrap();
        let worst = x.data.iter().zip(&y.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 0.02, "{worst}");
    }

    #[test]
    fn lower_quality_distorts_more() {
        let x = textured(64, 64, 4);
        let err = |q| {
            let y = jpeg_roundtrip(&x, q).unwrap();
            x.data.iter().zip(&y.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        };
        assert!(err(10) > err(50) && err(50) > err(95));
    }

    #[test]
    fn blur_keeps_constants() {
        for c in [0.0, 0.3, 1.0] {
            let x = Image::<f64>::filled(20, 24, c);
            let y = apply_perturbation(&x, &PerturbationSpec::Blur { radius: 4 }, &mut SeededRng::new(0), None)
                .unwrap();
            assert!(y.data.iter().all(|v| (v - c).abs() < 1e-12));
        }
    }

    #[test]
    fn blur_matches_direct_2d_convolution() {
        let x = textured(12, 10, 5);
        let y = blur(&x, 1);
        // Oracle: explicit 5x5 separable-product kernel with reflected indices.
        let k: Vec<f64> = (-2i32..=2).map(|i| (-(i * i) as f64 / 0.5).exp()).collect();
        let s: f64 = k.iter().sum();
        let refl = |i: i32, n: i32| if i < 0 { -i } else if i >= n { 2 * (n - 1) - i } else { i };
        for r in 0..12i32 {
            for c in 0..10i32 {
                let mut acc = 0.0;
                for a in -2i32..=2 {
                    for b in -2i32..=2 {
                        acc += k[(a + 2) as usize] * k[(b + 2) as usize]
                            * x.get(refl(r + a, 12) as usize, refl(c + b, 10) as usize);
                    }
                }
                assert!((y.get(r as usize, c as usize) - acc / (s * s)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rotate_180_flips() {
        // Inside bounds a half turn about the centre maps pixels exactly.
        let x = textured(9, 9, 6);
        let y = rotate_by(&x, 180.0);
        for r in 0..9 {
            for c in 0..9 {
                assert!((y.get(r, c) - x.get(8 - r, 8 - c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn crop_is_a_resized_window() {
        let x = textured(16, 16, 7);
        let y = apply_perturbation(&x, &PerturbationSpec::Crop { area_fraction: 0.25 }, &mut SeededRng::new(1), None)
            .unwrap();
        // 8x8 window upsampled by nearest neighbour: every 2x2 block is constant.
        for r in (0..16).step_by(2) {
            for c in (0..16).step_by(2) {
                let v = y.get(r, c);
                assert!([(0, 1), (1, 0), (1, 1)].iter().all(|&(a, b)| y.get(r + a, c + b) == v));
            }
        }
    }

    #[test]
    fn brightness_clamps() {
        let x = textured(8, 8, 8);
        let y = apply_perturbation(&x, &PerturbationSpec::Brightness { factor: 2.0 }, &mut SeededRng::new(0), None)
            .unwrap();
        for (a, b) in x.data.iter().zip(&y.data) {
            assert_eq!(*b, (a * 2.0).min(1.0));
        }
    }

    #[test]
    fn defaults() {
        let d = severity_defaults();
        assert_eq!(d.len(), 7);
        assert_eq!(d[0], PerturbationSpec::Jpeg { quality: 25 });
        assert_eq!(d[5], PerturbationSpec::Rotate { degrees: 75.0 });
        assert_eq!(d[6], PerturbationSpec::Regenerate { steps: 30 });
        let labels: Vec<String> = d.iter().map(|s| s.label()).collect();
        assert_eq!(labels[1], "crop0.75");
    }

    #[test]
    fn serde_is_tagged() {
        let s = serde_json::to_string(&PerturbationSpec::Blur { radius: 4 }).unwrap();
        assert_eq!(s, r#"{"kind":"blur","radius":4}"#);
        let back: PerturbationSpec = toml::from_str("kind = \"jpeg\"\nquality = 25").unwrap();
        assert_eq!(back, PerturbationSpec::Jpeg { quality: 25 });
    }

    #[test]
    fn rejects_bad_parameters_and_missing_context() {
        let x = textured(8, 8, 9);
        let mut rng = SeededRng::new(0);
        for spec in [
            PerturbationSpec::Jpeg { quality: 0 },
            PerturbationSpec::Crop { area_fraction: 0.0 },
            PerturbationSpec::Crop { area_fraction: 1.5 },
            PerturbationSpec::Noise { intensity: -0.1 },
            PerturbationSpec::Brightness { factor: 0.0 },
            PerturbationSpec::Rotate { degrees: f64::NAN },
            PerturbationSpec::Regenerate { steps: 3 },
        ] {
            assert!(apply_perturbation(&x, &spec, &mut rng, None).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn regenerate_runs_with_context() {
        let s = NoiseSchedule::linear(ScheduleParams { t_sample: 10, ..Default::default() }).unwrap();
        let d = ToyDenoiser::<f64>::new(DenoiserParams { height: 8, width: 8, ..Default::default() }, &s).unwrap();
        let ctx = RegenContext { denoiser: &d, schedule: &s };
        let x = textured(16, 16, 10);
        let spec = PerturbationSpec::Regenerate { steps: 6 };
        let a = apply_perturbation(&x, &spec, &mut SeededRng::new(3), Some(&ctx)).unwrap();
        let b = apply_perturbation(&x, &spec, &mut SeededRng::new(3), Some(&ctx)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, x);
        let zero = apply_perturbation(&x, &PerturbationSpec::Regenerate { steps: 0 }, &mut SeededRng::new(3), Some(&ctx))
            .unwrap();
        assert_eq!(zero, x);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn range_shape_and_determinism(seed in 0u64..1000, which in 0usize..6) {
            let x = textured(24, 16, seed);
            let spec = severity_defaults()[which];
            let a = apply_perturbation(&x, &spec, &mut SeededRng::new(seed), None).unwrap();
            let b = apply_perturbation(&x, &spec, &mut SeededRng::new(seed), None).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.same_shape(&x));
            prop_assert!(a.data.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
