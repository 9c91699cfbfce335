use sha2::{Digest, Sha256};

use super::{Embedding, Image, Latent};
use crate::numerics::SeededRng;
use crate::{Error, Result, Scalar};

/// Latent values in `[-LATENT_RANGE, LATENT_RANGE]` decode without clipping.
pub const LATENT_RANGE: f64 = 4.0;

const LATENT_CHANNELS: usize = 4;

/// 2x2 pixel shuffle of a 4-channel latent followed by `v -> (v + 4) / 8`, clamped to `[0, 1]`.
///
/// Channel `c` of cell `(i, j)` lands on pixel `(2i + c / 2, 2j + c % 2)`.
pub fn decode<T: Scalar>(z: &Latent<T>) -> Result<Image<T>> {
    if z.channels != LATENT_CHANNELS {
        return Err(Error::shape(
            (LATENT_CHANNELS, z.height, z.width),
            z.shape(),
        ));
    }
    let (h, w) = (z.height, z.width);
    let range = T::of(LATENT_RANGE);
    let two_range = range + range;
    let mut img = Image::filled(2 * h, 2 * w, T::zero());
    for c in 0..LATENT_CHANNELS {
        let plane = z.channel(c);
        for i in 0..h {
            for j in 0..w {
                let v = (plane[i * w + j] + range) / two_range;
                img.set(2 * i + c / 2, 2 * j + c % 2, v.max(T::zero()).min(T::one()));
            }
        }
    }
    Ok(img)
}

/// Exact inverse of the unclamped [`decode`] map.
pub fn encode<T: Scalar>(x: &Image<T>) -> Result<Latent<T>> {
    if !x.height.is_multiple_of(2) || !x.width.is_multiple_of(2) || x.height == 0 || x.width == 0 {
        return Err(Error::shape("even image dimensions", (x.height, x.width)));
    }
    let (h, w) = (x.height / 2, x.width / 2);
    let range = T::of(LATENT_RANGE);
    let two_range = range + range;
    let mut z = Latent::zeros(LATENT_CHANNELS, h, w);
    for c in 0..LATENT_CHANNELS {
        let plane = z.channel_mut(c);
        for i in 0..h {
            for j in 0..w {
                plane[i * w + j] = x.get(2 * i + c / 2, 2 * j + c % 2) * two_range - range;
            }
        }
    }
    Ok(z)
}

/// Unit-norm Gaussian embedding seeded by the SHA-256 of the UTF-8 prompt.
pub fn prompt_embed<T: Scalar>(prompt: &str, dim: usize) -> Embedding<T> {
    let digest = Sha256::digest(prompt.as_bytes());
    let mut seed_bytes = [0u8; 8];
    seed_bytes.copy_from_slice(&digest[..8]);
    let mut rng = SeededRng::new(u64::from_le_bytes(seed_bytes));
    let v: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Embedding::from_vec(v.iter().map(|&x| T::of(x / n)).collect())
}

/// Embedding of the empty prompt: the zero vector.
pub fn null_embed<T: Scalar>(dim: usize) -> Embedding<T> {
    Embedding::zeros(dim)
}
