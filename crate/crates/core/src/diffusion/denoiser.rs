use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Embedding, Latent, NoiseSchedule};
use crate::numerics::SeededRng;
use crate::{Error, Result, Scalar};

/// Everything needed to rebuild a [`ToyDenoiser`] bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiserParams {
    pub seed: u64,
    /// Embedding dimension `d`.
    pub dim: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Gain of the multiplicative embedding gate.
    pub gamma: f64,
    /// Gain of the additive embedding term.
    pub beta_add: f64,
    /// Std of the random part of each 3x3 kernel around the identity tap.
    pub kernel_jitter: f64,
    /// Std of the random part of the channel mix around the identity.
    pub mix_jitter: f64,
    /// Std (times `sqrt(d)`) of the gate projection entries.
    pub film_scale: f64,
    /// Std of the per-step gate biases.
    pub bias_scale: f64,
    /// Std (times `sqrt(d)`) of the additive projection entries.
    pub additive_scale: f64,
    /// Spectral norm `L` is rescaled to; must lie in `(0, 1]`.
    pub spectral_norm: f64,
}

impl Default for DenoiserParams {
    fn default() -> Self {
        DenoiserParams {
            seed: 0,
            dim: 32,
            channels: 4,
            height: 64,
            width: 64,
            gamma: 0.1,
            beta_add: 0.1,
            kernel_jitter: 0.01,
            mix_jitter: 0.01,
            film_scale: 0.1,
            bias_scale: 0.3,
            additive_scale: 0.3,
            spectral_norm: 0.96,
        }
    }
}

/// Closed-form differentiable stand-in for the noise predictor.
///
/// `eps(z, t, e) = L(z) * (1 + gamma * tanh(W_h e + b_t)) + beta_add * W_m e`,
/// where `L` is a per-channel circular 3x3 convolution followed by a channel
/// mix, the gate and the additive term are per channel and broadcast over
/// space. `L` is rescaled at construction to spectral norm `spectral_norm <= 1`.
#[derive(Debug, Clone)]
pub struct ToyDenoiser<T> {
    params: DenoiserParams,
    /// Ladder timesteps the biases are attached to, noisiest first.
    ladder: Vec<usize>,
    /// `kernels[c][3 * dr + dc]`, offsets `dr, dc` in `-1..=1`.
    kernels: Vec<[T; 9]>,
    /// Row-major `C x C`.
    mix: Vec<T>,
    /// Row-major `C x d`.
    w_gate: Vec<T>,
    /// `bias[k][c]` for ladder position `k`.
    bias: Vec<Vec<T>>,
    /// Row-major `C x d`.
    w_add: Vec<T>,
}

impl<T: Scalar> ToyDenoiser<T> {
    pub fn new(params: DenoiserParams, schedule: &NoiseSchedule) -> Result<Self> {
        let DenoiserParams {
            dim, channels: c, ..
        } = params;
        if !(params.spectral_norm > 0.0 && params.spectral_norm <= 1.0) {
            return Err(Error::param(
                "spectral_norm",
                format!("must be in (0, 1], got {}", params.spectral_norm),
            ));
        }
        if dim == 0 || c == 0 || params.height < 3 || params.width < 3 {
            return Err(Error::param(
                "denoiser shape",
                format!("{params:?} has an empty or too small dimension"),
            ));
        }
        let mut rng = SeededRng::new(params.seed);

        let mut kernels: Vec<[f64; 9]> = (0..c)
            .map(|_| {
                let mut k = [0.0; 9];
                for v in &mut k {
                    *v = params.kernel_jitter * rng.standard_normal();
                }
                k[4] += 1.0;
                k
            })
            .collect();
        let mix: Vec<f64> = (0..c * c)
            .map(|i| {
                let eye = if i / c == i % c { 1.0 } else { 0.0 };
                eye + params.mix_jitter * rng.standard_normal()
            })
            .collect();
        let sd_gate = params.film_scale / (dim as f64).sqrt();
        let w_gate: Vec<f64> = (0..c * dim).map(|_| sd_gate * rng.standard_normal()).collect();
        let bias: Vec<Vec<f64>> = schedule
            .steps
            .iter()
            .map(|_| (0..c).map(|_| params.bias_scale * rng.standard_normal()).collect())
            .collect();
        let sd_add = params.additive_scale / (dim as f64).sqrt();
        let w_add: Vec<f64> = (0..c * dim).map(|_| sd_add * rng.standard_normal()).collect();

        let norm = linear_spectral_norm(&kernels, &mix, params.height, params.width);
        // Slightly over-divide so rounding can never push the norm above 1.
        let scale = params.spectral_norm / (norm * (1.0 + 1e-12));
        for k in &mut kernels {
            k.iter_mut().for_each(|v| *v *= scale);
        }

        let cast = |v: &[f64]| v.iter().map(|&x| T::of(x)).collect::<Vec<T>>();
        Ok(ToyDenoiser {
            params,
            ladder: schedule.steps.clone(),
            kernels: kernels
                .iter()
                .map(|k| {
                    let mut out = [T::zero(); 9];
                    out.iter_mut().zip(k).for_each(|(o, &v)| *o = T::of(v));
                    out
                })
                .collect(),
            mix: cast(&mix),
            w_gate: cast(&w_gate),
            bias: bias.iter().map(|b| cast(b)).collect(),
            w_add: cast(&w_add),
        })
    }

    pub fn params(&self) -> &DenoiserParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn latent_shape(&self) -> (usize, usize, usize) {
        (self.params.channels, self.params.height, self.params.width)
    }

    pub fn check_latent(&self, z: &Latent<T>) -> Result<()> {
        if z.shape() != self.latent_shape() {
            return Err(Error::shape(self.latent_shape(), z.shape()));
        }
        Ok(())
    }

    fn check_embedding(&self, e: &Embedding<T>) -> Result<()> {
        if e.dim() != self.params.dim {
            return Err(Error::shape(self.params.dim, e.dim()));
        }
        Ok(())
    }

    fn ladder_pos(&self, t: usize) -> Result<usize> {
        self.ladder.iter().position(|&s| s == t).ok_or(Error::Timestep {
            t,
            reason: "not on the denoiser's ladder",
        })
    }

    /// Same-shape copy with every weight set to zero, so `eps == 0` everywhere.
    pub fn zeroed(&self) -> Self {
        let z = T::zero();
        ToyDenoiser {
            params: self.params,
            ladder: self.ladder.clone(),
            kernels: vec![[z; 9]; self.kernels.len()],
            mix: vec![z; self.mix.len()],
            w_gate: vec![z; self.w_gate.len()],
            bias: self.bias.iter().map(|b| vec![z; b.len()]).collect(),
            w_add: vec![z; self.w_add.len()],
        }
    }

    /// Copy with all per-step gate biases set to zero.
    pub fn without_bias(&self) -> Self {
        let mut out = self.clone();
        out.bias.iter_mut().for_each(|b| b.fill(T::zero()));
        out
    }

    /// The embedding-independent part `L(z)`.
    pub fn linear_part(&self, z: &Latent<T>) -> Result<Latent<T>> {
        self.check_latent(z)?;
        let (c, h, w) = z.shape();
        let mut conv = Latent::zeros(c, h, w);
        for ch in 0..c {
            let k = &self.kernels[ch];
            let src = z.channel(ch);
            let dst = conv.channel_mut(ch);
            for r in 0..h {
                let rows = [(r + h - 1) % h, r, (r + 1) % h];
                for col in 0..w {
                    let cols = [(col + w - 1) % w, col, (col + 1) % w];
                    let mut acc = T::zero();
                    for (i, &rr) in rows.iter().enumerate() {
                        let base = rr * w;
                        for (j, &cc) in cols.iter().enumerate() {
                            acc += k[3 * i + j] * src[base + cc];
                        }
                    }
                    dst[r * w + col] = acc;
                }
            }
        }
        let mut out = Latent::zeros(c, h, w);
        let n = h * w;
        for o in 0..c {
            for i in 0..c {
                let m = self.mix[o * c + i];
                if m == T::zero() {
                    continue;
                }
                let (dst, src) = (o * n, i * n);
                for p in 0..n {
                    out.data[dst + p] += m * conv.data[src + p];
                }
            }
        }
        Ok(out)
    }

    /// Pre-activation `W_h e + b_t` per channel.
    fn gate_preact(&self, pos: usize, e: &Embedding<T>) -> Vec<T> {
        let d = self.params.dim;
        (0..self.params.channels)
            .map(|c| {
                let row = &self.w_gate[c * d..(c + 1) * d];
                row.iter().zip(&e.values).map(|(&a, &b)| a * b).sum::<T>() + self.bias[pos][c]
            })
            .collect()
    }

    fn additive(&self, e: &Embedding<T>) -> Vec<T> {
        let d = self.params.dim;
        let beta = T::of(self.params.beta_add);
        (0..self.params.channels)
            .map(|c| {
                let row = &self.w_add[c * d..(c + 1) * d];
                beta * row.iter().zip(&e.values).map(|(&a, &b)| a * b).sum::<T>()
            })
            .collect()
    }

    /// Per-channel `(gate, offset)` so that `eps_c = gate_c * L(z)_c + offset_c`.
    pub fn channel_affine(&self, t: usize, e: &Embedding<T>) -> Result<(Vec<T>, Vec<T>)> {
        self.check_embedding(e)?;
        let pos = self.ladder_pos(t)?;
        let gamma = T::of(self.params.gamma);
        let gate = self
            .gate_preact(pos, e)
            .into_iter()
            .map(|u| T::one() + gamma * u.tanh())
            .collect();
        Ok((gate, self.additive(e)))
    }

    /// `eps` given a precomputed `L(z)`.
    pub fn eps_from_linear(&self, lin: &Latent<T>, t: usize, e: &Embedding<T>) -> Result<Latent<T>> {
        self.check_latent(lin)?;
        let (gate, offset) = self.channel_affine(t, e)?;
        let mut out = lin.clone();
        for c in 0..lin.channels {
            let (g, a) = (gate[c], offset[c]);
            out.channel_mut(c).iter_mut().for_each(|v| *v = *v * g + a);
        }
        Ok(out)
    }

    pub fn denoise_eps(&self, z: &Latent<T>, t: usize, e: &Embedding<T>) -> Result<Latent<T>> {
        let lin = self.linear_part(z)?;
        self.eps_from_linear(&lin, t, e)
    }

    /// `d <cotangent, eps(z, t, e)> / d e` given a precomputed `L(z)`.
    pub fn vjp_from_linear(
        &self,
        lin: &Latent<T>,
        t: usize,
        e: &Embedding<T>,
        cotangent: &Latent<T>,
    ) -> Result<Embedding<T>> {
        self.check_latent(lin)?;
        self.check_latent(cotangent)?;
        self.check_embedding(e)?;
        let pos = self.ladder_pos(t)?;
        let d = self.params.dim;
        let gamma = T::of(self.params.gamma);
        let beta = T::of(self.params.beta_add);
        let pre = self.gate_preact(pos, e);
        let mut grad = vec![T::zero(); d];
        for c in 0..self.params.channels {
            let cot = cotangent.channel(c);
            let dot: T = cot.iter().zip(lin.channel(c)).map(|(&a, &b)| a * b).sum();
            let total: T = cot.iter().copied().sum();
            let th = pre[c].tanh();
            let g_pre = dot * gamma * (T::one() - th * th);
            let g_add = total * beta;
            let wg = &self.w_gate[c * d..(c + 1) * d];
            let wa = &self.w_add[c * d..(c + 1) * d];
            for k in 0..d {
                grad[k] += g_pre * wg[k] + g_add * wa[k];
            }
        }
        Ok(Embedding::from_vec(grad))
    }

    pub fn denoise_eps_vjp(
        &self,
        z: &Latent<T>,
        t: usize,
        e: &Embedding<T>,
        cotangent: &Latent<T>,
    ) -> Result<Embedding<T>> {
        let lin = self.linear_part(z)?;
        self.vjp_from_linear(&lin, t, e, cotangent)
    }

    /// Largest singular value of `L`, recomputed from the stored weights.
    pub fn linear_norm(&self) -> f64 {
        let k: Vec<[f64; 9]> = self
            .kernels
            .iter()
            .map(|k| {
                let mut o = [0.0; 9];
                o.iter_mut().zip(k).for_each(|(o, v)| *o = v.as_f64());
                o
            })
            .collect();
        let m: Vec<f64> = self.mix.iter().map(|v| v.as_f64()).collect();
        linear_spectral_norm(&k, &m, self.params.height, self.params.width)
    }
}

/// Spectral norm of `mix . conv` under circular boundary conditions.
///
/// The operator block-diagonalises over spatial frequencies into
/// `C x C` blocks `M diag(K_hat(f))`; the answer is the largest block norm.
fn linear_spectral_norm(kernels: &[[f64; 9]], mix: &[f64], h: usize, w: usize) -> f64 {
    let c = kernels.len();
    let mut best: f64 = 0.0;
    let mut block = vec![Complex64::new(0.0, 0.0); c * c];
    for u in 0..h {
        for v in 0..w {
            let khat: Vec<Complex64> = kernels
                .iter()
                .map(|k| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for dr in 0..3 {
                        for dc in 0..3 {
                            let ang = -2.0
                                * std::f64::consts::PI
                                * (u as f64 * (dr as f64 - 1.0) / h as f64
                                    + v as f64 * (dc as f64 - 1.0) / w as f64);
                            acc += k[3 * dr + dc] * Complex64::from_polar(1.0, ang);
                        }
                    }
                    acc
                })
                .collect();
            for o in 0..c {
                for i in 0..c {
                    block[o * c + i] = mix[o * c + i] * khat[i];
                }
            }
            best = best.max(block_norm(&block, c));
        }
    }
    best
}

/// Largest singular value of a small complex matrix by power iteration on `B^H B`.
fn block_norm(b: &[Complex64], c: usize) -> f64 {
    let mut x: Vec<Complex64> = (0..c)
        .map(|i| Complex64::new(1.0 + 0.1 * i as f64, 0.05 * i as f64))
        .collect();
    let mut sigma2 = 0.0;
    for _ in 0..200 {
        let y: Vec<Complex64> = (0..c)
            .map(|o| (0..c).map(|i| b[o * c + i] * x[i]).sum())
            .collect();
        let z: Vec<Complex64> = (0..c)
            .map(|i| (0..c).map(|o| b[o * c + i].conj() * y[o]).sum())
            .collect();
        let nz = z.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let nx = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if nz == 0.0 {
            return 0.0;
        }
        let next = nz / nx;
        x = z.into_iter().map(|v| v / nz).collect();
        if (next - sigma2).abs() <= 1e-15 * next {
            sigma2 = next;
            break;
        }
        sigma2 = next;
    }
    sigma2.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gaussian_grid;

    fn setup() -> (ToyDenoiser<f64>, NoiseSchedule) {
        let s = NoiseSchedule::default();
        let p = DenoiserParams {
            height: 16,
            width: 16,
            seed: 3,
            ..Default::default()
        };
        (ToyDenoiser::new(p, &s).unwrap(), s)
    }

    fn random_embedding(seed: u64, d: usize) -> Embedding<f64> {
        let mut rng = SeededRng::new(seed);
        Embedding::from_vec((0..d).map(|_| rng.standard_normal()).collect())
    }

    #[test]
    fn zero_embedding_without_bias_is_linear_part() {
        let (d, s) = setup();
        let d = d.without_bias();
        let z = gaussian_grid(&mut SeededRng::new(1), 4, 16, 16);
        let eps = d.denoise_eps(&z, s.top(), &Embedding::zeros(32)).unwrap();
        assert_eq!(eps, d.linear_part(&z).unwrap());
    }

    #[test]
    fn zero_latent_gives_additive_term() {
        let (d, s) = setup();
        let e = random_embedding(2, 32);
        let eps = d.denoise_eps(&Latent::zeros(4, 16, 16), 500, &e).unwrap();
        let (_, offset) = d.channel_affine(500, &e).unwrap();
        for c in 0..4 {
            assert!(eps.channel(c).iter().all(|&v| v == offset[c]));
        }
        // Independent of the gate bias and the step.
        let eps2 = d.denoise_eps(&Latent::zeros(4, 16, 16), s.top(), &e).unwrap();
        assert_eq!(eps, eps2);
    }

    #[test]
    fn deterministic_per_seed() {
        let (d1, _) = setup();
        let (d2, _) = setup();
        let z = gaussian_grid(&mut SeededRng::new(1), 4, 16, 16);
        let e = random_embedding(5, 32);
        assert_eq!(
            d1.denoise_eps(&z, 40, &e).unwrap(),
            d2.denoise_eps(&z, 40, &e).unwrap()
        );
    }

    #[test]
    fn linear_part_has_unit_norm_bound() {
        let (d, _) = setup();
        let norm = d.linear_norm();
        let target = d.params().spectral_norm;
        assert!(norm <= target && norm > target - 1e-9, "norm {norm}");
        // Cross-check with power iteration on the full operator.
        let mut x = gaussian_grid::<f64>(&mut SeededRng::new(9), 4, 16, 16);
        let mut ratio = 0.0;
        for _ in 0..50 {
            let y = d.linear_part(&x).unwrap();
            ratio = (y.norm_sqr() / x.norm_sqr()).sqrt();
            x = y.scaled(1.0 / y.norm_sqr().sqrt());
        }
        assert!(ratio <= 1.0 + 1e-9, "ratio {ratio}");
    }

    #[test]
    fn rejects_shape_mismatch() {
        let (d, _) = setup();
        assert!(d.denoise_eps(&Latent::zeros(4, 8, 8), 0, &Embedding::zeros(32)).is_err());
        assert!(d.denoise_eps(&Latent::zeros(4, 16, 16), 0, &Embedding::zeros(8)).is_err());
        assert!(d.denoise_eps(&Latent::zeros(4, 16, 16), 3, &Embedding::zeros(32)).is_err());
        let cot = Latent::zeros(3, 16, 16);
        assert!(d
            .denoise_eps_vjp(&Latent::zeros(4, 16, 16), 0, &Embedding::zeros(32), &cot)
            .is_err());
    }

    #[test]
    fn vjp_zero_cotangent_and_linearity() {
        let (d, _) = setup();
        let z = gaussian_grid(&mut SeededRng::new(1), 4, 16, 16);
        let e = random_embedding(2, 32);
        let zero = d.denoise_eps_vjp(&z, 980, &e, &Latent::zeros(4, 16, 16)).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
        let cot = gaussian_grid(&mut SeededRng::new(4), 4, 16, 16);
        let g1 = d.denoise_eps_vjp(&z, 980, &e, &cot).unwrap();
        let g2 = d.denoise_eps_vjp(&z, 980, &e, &cot.scaled(2.0)).unwrap();
        for (a, b) in g1.values.iter().zip(&g2.values) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn f32_tracks_f64() {
        let s = NoiseSchedule::default();
        let p = DenoiserParams {
            height: 8,
            width: 8,
            ..Default::default()
        };
        let d64 = ToyDenoiser::<f64>::new(p, &s).unwrap();
        let d32 = ToyDenoiser::<f32>::new(p, &s).unwrap();
        let z64 = gaussian_grid::<f64>(&mut SeededRng::new(1), 4, 8, 8);
        let z32 = gaussian_grid::<f32>(&mut SeededRng::new(1), 4, 8, 8);
        let e64 = random_embedding(3, 32);
        let e32 = Embedding::from_vec(e64.values.iter().map(|&v| v as f32).collect());
        let a = d64.denoise_eps(&z64, 20, &e64).unwrap();
        let b = d32.denoise_eps(&z32, 20, &e32).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - *y as f64).abs() < 1e-5);
        }
    }
}
