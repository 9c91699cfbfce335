use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffusion::Latent;
use crate::Scalar;

/// Identifier of the stream construction below. Bump if it ever changes.
pub const RNG_ALGORITHM: &str = "chacha8-u53-boxmuller-v1";

/// Seeded stream of uniforms and standard normals.
///
/// ChaCha8 keyed by `seed_from_u64(seed)`; uniforms take the top 53 bits of
/// each 64-bit word mapped to (0, 1]; normals are Box-Muller pairs, both
/// halves used, in draw order. The output is platform independent.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for a labelled sub-task. Label order matters.
pub fn derive_seed(parent: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(parent), |acc, &l| splitmix64(acc ^ splitmix64(l)))
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn child(&self, label: u64) -> SeededRng {
        SeededRng::new(derive_seed(self.seed, &[label]))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on (0, 1].
    pub fn uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * (self.uniform() - f64::EPSILON / 2.0).max(0.0)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// `c x h x w` latent of i.i.d. standard normals, channel-major.
pub fn gaussian_grid<T: Scalar>(rng: &mut SeededRng, c: usize, h: usize, w: usize) -> Latent<T> {
    let data = (0..c * h * w)
        .map(|_| T::of(rng.standard_normal()))
        .collect();
    Latent::from_parts(c, h, w, data)
}
