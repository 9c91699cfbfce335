use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// `C x H x W` diffusion state, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Latent<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Latent {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(channels * height * width, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Latent::new"));
        }
        Ok(Latent {
            channels,
            height,
            width,
            data,
        })
    }

    pub(crate) fn from_parts(channels: usize, height: usize, width: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), channels * height * width);
        Latent {
            channels,
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn check_same_shape(&self, other: &Latent<T>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(self.shape(), other.shape()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: T, other: &Latent<T>, b: T) -> Latent<T> {
        debug_assert_eq!(self.shape(), other.shape());
        Latent::from_parts(
            self.channels,
            self.height,
            self.width,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&x, &y)| a * x + b * y)
                .collect(),
        )
    }

    pub fn scaled(&self, a: T) -> Latent<T> {
        self.map(|v| a * v)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Latent<T> {
        Latent::from_parts(
            self.channels,
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn norm_sqr(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn dist_sqr(&self, other: &Latent<T>) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum()
    }

    /// `||self - other|| / ||other||`.
    pub fn relative_l2(&self, other: &Latent<T>) -> T {
        (self.dist_sqr(other) / other.norm_sqr()).sqrt()
    }
}

/// Conditioning vector fed to the denoiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding<T> {
    pub values: Vec<T>,
}

/// Norm bound enforced on optimised embeddings.
pub const EMBEDDING_NORM_BOUND: f64 = 100.0;

impl<T: Scalar> Embedding<T> {
    pub fn zeros(dim: usize) -> Self {
        Embedding {
            values: vec![T::zero(); dim],
        }
    }

    pub fn from_vec(values: Vec<T>) -> Self {
        Embedding { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> T {
        self.values.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn dot(&self, other: &Embedding<T>) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    /// Rescales onto the ball of radius [`EMBEDDING_NORM_BOUND`] if outside it.
    pub fn clamp_norm(&mut self) {
        let bound = T::of(EMBEDDING_NORM_BOUND);
        let n = self.norm();
        if n > bound {
            let s = bound / n;
            self.values.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Single-channel image, row-major. Decoded pixels live in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image<T> {
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(height * width, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Image::new"));
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, v: T) -> Self {
        Image {
            height,
            width,
            data: vec![v; height * width],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.width + c] = v;
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.max(T::zero()).min(T::one());
        }
    }

    pub fn same_shape(&self, other: &Image<T>) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// Ordered diffusion states, one per ladder timestep, noisiest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub states: Vec<(usize, Latent<T>)>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn at(&self, t: usize) -> Option<&Latent<T>> {
        self.states.iter().find(|(s, _)| *s == t).map(|(_, z)| z)
    }

    /// State at ladder position `k`, counting from the data end (`k = 0` is `z_0`).
    pub fn from_data_end(&self, k: usize) -> &Latent<T> {
        &self.states[self.states.len() - 1 - k].1
    }

    /// The noisiest state `z_T`.
    pub fn top(&self) -> &Latent<T> {
        &self.states[0].1
    }

    /// The clean state `z_0`.
    pub fn data_end(&self) -> &Latent<T> {
        &self.states[self.states.len() - 1].1
    }

    pub fn timesteps(&self) -> Vec<usize> {
        self.states.iter().map(|(t, _)| *t).collect()
    }
}
