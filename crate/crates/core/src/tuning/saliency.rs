use crate::diffusion::Latent;
use crate::{Error, Result, Scalar};

/// Binary spatial mask broadcast over every latent channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaliencyMask {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub plane: Vec<bool>,
}

impl SaliencyMask {
    pub fn empty(channels: usize, height: usize, width: usize) -> Self {
        SaliencyMask {
            channels,
            height,
            width,
            plane: vec![false; height * width],
        }
    }

    pub fn full(channels: usize, height: usize, width: usize) -> Self {
        SaliencyMask {
            channels,
            height,
            width,
            plane: vec![true; height * width],
        }
    }

    /// Whether flat latent index `i` (channel-major) is active.
    #[inline]
    pub fn active(&self, i: usize) -> bool {
        self.plane[i % (self.height * self.width)]
    }

    pub fn count(&self) -> usize {
        self.plane.iter().filter(|&&b| b).count()
    }

    pub fn active_fraction(&self) -> f64 {
        self.count() as f64 / self.plane.len() as f64
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }
}

/// Marks the cells where the watermarked and original latents differ most.
///
/// Channel-summed absolute difference, 3x3 circular box blur, then the
/// `round(q * H * W)` largest strictly positive cells (ties broken by index).
pub fn saliency_mask<T: Scalar>(z_hat: &Latent<T>, z_star: &Latent<T>, q: f64) -> Result<SaliencyMask> {
    z_hat.check_same_shape(z_star)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::param("q", format!("must lie in (0, 1), got {q}")));
    }
    let (c, h, w) = z_hat.shape();
    let n = h * w;
    let mut diff = vec![0.0f64; n];
    for ch in 0..c {
        for (i, (a, b)) in z_hat.channel(ch).iter().zip(z_star.channel(ch)).enumerate() {
            diff[i] += (*a - *b).abs().as_f64();
        }
    }
    if diff.iter().fold(0.0f64, |m, &v| m.max(v)) < 1e-9 {
        return Ok(SaliencyMask::empty(c, h, w));
    }

    let mut blurred = vec![0.0f64; n];
    for r in 0..h {
        for col in 0..w {
            let mut acc = 0.0;
            for dr in [h - 1, 0, 1] {
                for dc in [w - 1, 0, 1] {
                    acc += diff[((r + dr) % h) * w + (col + dc) % w];
                }
            }
            blurred[r * w + col] = acc / 9.0;
        }
    }

    let keep = (q * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).filter(|&i| blurred[i] > 0.0).collect();
    order.sort_by(|&a, &b| blurred[b].total_cmp(&blurred[a]).then(a.cmp(&b)));
    let mut mask = SaliencyMask::empty(c, h, w);
    for &i in order.iter().take(keep) {
        mask.plane[i] = true;
    }
    Ok(mask)
}
