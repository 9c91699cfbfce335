use crate::diffusion::Image;
use crate::{Error, Result, Scalar};

pub const PSNR_CAP_DB: f64 = 100.0;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;
const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
/// First three standard MS-SSIM weights before renormalisation.
const MS_WEIGHTS: [f64; 3] = [0.0448, 0.2856, 0.3001];
/// Smallest side allowed at the coarsest MS-SSIM scale.
pub const MSSSIM_MIN_SIDE: usize = 32;

fn same_shape<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::shape((a.height, a.width), (b.height, b.width)));
    }
    Ok(())
}

pub fn psnr<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    same_shape(a, b)?;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2))
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window() -> Vec<f64> {
    let half = (WINDOW / 2) as f64;
    let k: Vec<f64> = (0..WINDOW)
        .map(|i| (-(i as f64 - half).powi(2) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter().map(|v| v / s).collect()
}

/// Mean SSIM and mean contrast-structure term over all valid windows.
fn ssim_parts(a: &[f64], b: &[f64], h: usize, w: usize) -> Result<(f64, f64)> {
    if h < WINDOW || w < WINDOW {
        return Err(Error::shape(format!(">= {WINDOW}x{WINDOW}"), (h, w)));
    }
    let k = gaussian_window();
    let (oh, ow) = (h - WINDOW + 1, w - WINDOW + 1);
    // Separable filtering: horizontal pass into (h, ow), then vertical into (oh, ow).
    let filter = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let mut rows = vec![0.0; h * ow];
        for r in 0..h {
            for c in 0..ow {
                rows[r * ow + c] = (0..WINDOW).map(|i| k[i] * f(r * w + c + i)).sum();
            }
        }
        let mut out = vec![0.0; oh * ow];
        for r in 0..oh {
            for c in 0..ow {
                out[r * ow + c] = (0..WINDOW).map(|i| k[i] * rows[(r + i) * ow + c]).sum();
            }
        }
        out
    };
    let mu_a = filter(&|i| a[i]);
    let mu_b = filter(&|i| b[i]);
    let aa = filter(&|i| a[i] * a[i]);
    let bb = filter(&|i| b[i] * b[i]);
    let ab = filter(&|i| a[i] * b[i]);
    let (mut s_sum, mut cs_sum) = (0.0, 0.0);
    for i in 0..oh * ow {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        let cs = (2.0 * cov + C2) / (va + vb + C2);
        let l = (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
        s_sum += l * cs;
        cs_sum += cs;
    }
    let n = (oh * ow) as f64;
    Ok((s_sum / n, cs_sum / n))
}

fn to_f64<T: Scalar>(x: &Image<T>) -> Vec<f64> {
    x.data.iter().map(|v| v.as_f64()).collect()
}

/// SSIM with an 11x11 Gaussian window (sigma 1.5) on the `[0, 1]` range, no padding.
pub fn ssim<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    same_shape(a, b)?;
    Ok(ssim_parts(&to_f64(a), &to_f64(b), a.height, a.width)?.0)
}

fn downsample(x: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (nh, nw) = (h / 2, w / 2);
    let mut out = vec![0.0; nh * nw];
    for r in 0..nh {
        for c in 0..nw {
            let i = 2 * r * w + 2 * c;
            out[r * nw + c] = (x[i] + x[i + 1] + x[i + w] + x[i + w + 1]) / 4.0;
        }
    }
    (out, nh, nw)
}

/// Three-scale MS-SSIM with renormalised weights.
///
/// Negative contrast-structure terms are clamped to zero before the
/// fractional powers, so the result lies in `[0, 1]`.
pub fn msssim<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    same_shape(a, b)?;
    let scales = MS_WEIGHTS.len();
    if a.height.min(a.width) >> (scales - 1) < MSSSIM_MIN_SIDE {
        return Err(Error::shape(
            format!("min side >= {}", MSSSIM_MIN_SIDE << (scales - 1)),
            (a.height, a.width),
        ));
    }
    let total: f64 = MS_WEIGHTS.iter().sum();
    let (mut xa, mut xb, mut h, mut w) = (to_f64(a), to_f64(b), a.height, a.width);
    let mut out = 1.0;
    for (j, wt) in MS_WEIGHTS.iter().enumerate() {
        let (s, cs) = ssim_parts(&xa, &xb, h, w)?;
        let term = if j + 1 == scales { s } else { cs };
        out *= term.max(0.0).powf(wt / total);
        if j + 1 < scales {
            let (na, nh, nw) = downsample(&xa, h, w);
            xb = downsample(&xb, h, w).0;
            xa = na;
            (h, w) = (nh, nw);
        }
    }
    Ok(out)
}
