use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::WatermarkKey;
use crate::diffusion::{encode, invert_trajectory, Embedding, Image, Latent, NoiseSchedule, ToyDenoiser};
use crate::numerics::{fft2, fftshift, ifftshift, noncentral_chi2_cdf, ComplexGrid2D, Direction};
use crate::{Error, Result, Scalar};

pub const DEFAULT_THRESHOLD: f64 = 0.01;

/// Outcome of one statistical watermark test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub eta: f64,
    pub sigma2: f64,
    pub dof: usize,
    pub noncentrality: f64,
    pub p_value: f64,
    pub decision: bool,
    pub threshold: f64,
}

/// Message read back from a latent: `y` on the independent half of the key
/// disc, and the per-component spectral variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub y: Vec<Complex64>,
    pub sigma2: f64,
}

fn check_key<T: Scalar>(z: &Latent<T>, key: &WatermarkKey) -> Result<()> {
    if z.height != key.height || z.width != key.width || key.channel >= z.channels {
        return Err(Error::shape(
            (format!(">{}", key.channel), key.height, key.width),
            z.shape(),
        ));
    }
    Ok(())
}

fn centred_spectrum<T: Scalar>(z: &Latent<T>, channel: usize) -> Result<ComplexGrid2D<f64>> {
    let plane = ComplexGrid2D {
        height: z.height,
        width: z.width,
        values: z
            .channel(channel)
            .iter()
            .map(|v| Complex64::new(v.as_f64(), 0.0))
            .collect(),
    };
    Ok(fftshift(&fft2(&plane, Direction::Forward)?))
}

/// Writes the key pattern into the key channel's spectrum; other channels and
/// unmasked coefficients are untouched.
pub fn embed<T: Scalar>(z_top: &Latent<T>, key: &WatermarkKey) -> Result<Latent<T>> {
    check_key(z_top, key)?;
    let mut spec = centred_spectrum(z_top, key.channel)?;
    for (&(r, c), &v) in key.mask_coords.iter().zip(&key.pattern) {
        spec.set(r, c, v);
    }
    let back = fft2(&ifftshift(&spec), Direction::Inverse)?;
    let (real, residual) = back.real_part();
    if residual > 1e-9 {
        return Err(Error::Degenerate(format!(
            "imaginary residual {residual:e} after embedding; pattern is not conjugate symmetric"
        )));
    }
    let mut out = z_top.clone();
    out.channel_mut(key.channel)
        .iter_mut()
        .zip(&real.values)
        .for_each(|(o, &v)| *o = T::of(v));
    Ok(out)
}

/// Full-disc readout (both halves of every conjugate pair).
pub fn extract_full<T: Scalar>(z: &Latent<T>, key: &WatermarkKey) -> Result<Vec<Complex64>> {
    check_key(z, key)?;
    let spec = centred_spectrum(z, key.channel)?;
    Ok(key.mask_coords.iter().map(|&(r, c)| spec.get(r, c)).collect())
}

pub fn extract<T: Scalar>(z: &Latent<T>, key: &WatermarkKey) -> Result<Extraction> {
    check_key(z, key)?;
    let spec = centred_spectrum(z, key.channel)?;
    let y = key
        .half_mask
        .iter()
        .map(|&i| {
            let (r, c) = key.mask_coords[i];
            spec.get(r, c)
        })
        .collect();
    let dc = (z.height / 2) * z.width + z.width / 2;
    let n = spec.values.len() - 1;
    let sigma2 = spec
        .values
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != dc)
        .map(|(_, v)| v.norm_sqr() / 2.0)
        .sum::<f64>()
        / n as f64;
    Ok(Extraction { y, sigma2 })
}

/// `(eta, p, dof, noncentrality)` for message `y` against pattern `w`.
///
/// Real and imaginary parts are independent `N(., sigma2)` components, so
/// `dof = 2 * len` and `lambda = sum |w|^2 / sigma2`.
pub fn score_pvalue(y: &[Complex64], w: &[Complex64], sigma2: f64) -> Result<(f64, f64, usize, f64)> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::Degenerate(format!(
            "spectral variance sigma2 = {sigma2}; cannot normalise"
        )));
    }
    if y.len() != w.len() || y.is_empty() {
        return Err(Error::shape(w.len(), y.len()));
    }
    let eta = y.iter().zip(w).map(|(a, b)| (b - a).norm_sqr()).sum::<f64>() / sigma2;
    let lambda = w.iter().map(|v| v.norm_sqr()).sum::<f64>() / sigma2;
    let dof = 2 * y.len();
    let p = noncentral_chi2_cdf(eta, dof, lambda)?;
    Ok((eta, p, dof, lambda))
}

/// Tests an estimated initial latent against the key.
pub fn verify_latent<T: Scalar>(
    z_top_est: &Latent<T>,
    key: &WatermarkKey,
    threshold: f64,
) -> Result<VerificationReport> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::param("threshold", format!("must be in (0, 1], got {threshold}")));
    }
    let ex = extract(z_top_est, key)?;
    let (eta, p, dof, lambda) = score_pvalue(&ex.y, &key.half_pattern(), ex.sigma2)?;
    Ok(VerificationReport {
        eta,
        sigma2: ex.sigma2,
        dof,
        noncentrality: lambda,
        p_value: p,
        decision: p < threshold,
        threshold,
    })
}

/// Encodes the image, inverts at guidance 1 and tests the recovered `z_T`.
pub fn verify<T: Scalar>(
    x: &Image<T>,
    d: &ToyDenoiser<T>,
    key: &WatermarkKey,
    cond: &Embedding<T>,
    s: &NoiseSchedule,
    threshold: f64,
) -> Result<VerificationReport> {
    let z0 = encode(x)?;
    let traj = invert_trajectory(d, &z0, cond, s)?;
    verify_latent(traj.top(), key, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_grid, SeededRng};

    fn key() -> WatermarkKey {
        WatermarkKey::generate(11, 10, 3, 64, 64).unwrap()
    }

    fn noise(seed: u64) -> Latent<f64> {
        gaussian_grid(&mut SeededRng::new(seed), 4, 64, 64)
    }

    #[test]
    fn write_then_read() {
        let k = key();
        let z = embed(&noise(1), &k).unwrap();
        let y = extract_full(&z, &k).unwrap();
        let dev = y
            .iter()
            .zip(&k.pattern)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-9, "dev {dev}");
        let ex = extract(&z, &k).unwrap();
        assert_eq!(ex.y.len(), k.half_mask.len());
    }

    #[test]
    fn other_channels_and_frequencies_untouched() {
        let k = key();
        let z = noise(2);
        let zw = embed(&z, &k).unwrap();
        for c in 0..3 {
            assert_eq!(z.channel(c), zw.channel(c));
        }
        let before = centred_spectrum(&z, 3).unwrap();
        let after = centred_spectrum(&zw, 3).unwrap();
        for r in 0..64 {
            for c in 0..64 {
                if !k.mask_coords.contains(&(r, c)) {
                    assert!((before.get(r, c) - after.get(r, c)).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn embed_is_idempotent() {
        let k = key();
        let once = embed(&noise(3), &k).unwrap();
        let twice = embed(&once, &k).unwrap();
        let dev = once
            .data
            .iter()
            .zip(&twice.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-12);
    }

    #[test]
    fn spectral_variance_of_white_noise() {
        // Unnormalised forward DFT of unit white noise: E|F|^2 = H*W, so each
        // real component has variance H*W/2.
        let ex = extract(&noise(4), &key()).unwrap();
        let analytic = 64.0 * 64.0 / 2.0;
        assert!((ex.sigma2 / analytic - 1.0).abs() < 0.1, "{}", ex.sigma2);
    }

    #[test]
    fn zero_latent_is_degenerate() {
        let k = key();
        let ex = extract(&Latent::<f64>::zeros(4, 64, 64), &k).unwrap();
        assert!(ex.y.iter().all(|v| v.norm() == 0.0));
        assert_eq!(ex.sigma2, 0.0);
        assert!(matches!(
            verify_latent(&Latent::<f64>::zeros(4, 64, 64), &k, 0.01),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn score_arithmetic() {
        let w = [Complex64::new(2.0, 0.0)];
        let (eta, _, dof, lambda) = score_pvalue(&[Complex64::new(0.0, 0.0)], &w, 1.0).unwrap();
        assert_eq!(eta, 4.0);
        assert_eq!(dof, 2);
        assert_eq!(lambda, 4.0);
        let (eta, p, _, _) = score_pvalue(&w, &w, 1.0).unwrap();
        assert_eq!((eta, p), (0.0, 0.0));
        assert!(score_pvalue(&w, &w, 0.0).is_err());
        assert!(score_pvalue(&w, &w, -1.0).is_err());
    }

    #[test]
    fn p_increases_with_eta() {
        let w: Vec<Complex64> = (0..20).map(|i| Complex64::new(i as f64 * 0.1, 0.0)).collect();
        let mut prev = -1.0;
        for step in 1..30 {
            let y: Vec<Complex64> = w.iter().map(|v| v + Complex64::new(step as f64 * 0.1, 0.0)).collect();
            let (_, p, _, _) = score_pvalue(&y, &w, 1.0).unwrap();
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn threshold_semantics() {
        let k = key();
        let z = noise(5);
        let r = verify_latent(&z, &k, 1.0).unwrap();
        assert!(r.p_value < 1.0 && r.decision);
        assert_eq!(r.decision, r.p_value < r.threshold);
        assert!(verify_latent(&z, &k, 0.0).is_err());
        assert!(verify_latent(&z, &k, 1.5).is_err());
    }

    #[test]
    fn shape_checks() {
        let k = key();
        assert!(embed(&Latent::<f64>::zeros(4, 32, 32), &k).is_err());
        assert!(embed(&Latent::<f64>::zeros(3, 64, 64), &k).is_err());
    }
}
