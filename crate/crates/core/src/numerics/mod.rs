//! Deterministic numerical kernels shared by the rest of the crate.

mod fft;
mod grid;
mod rng;
mod special;

pub use fft::{fft2, fftshift, ifftshift, Direction};
pub use grid::{ComplexGrid2D, Grid2D};
pub use rng::{derive_seed, gaussian_grid, SeededRng, RNG_ALGORITHM};
pub use special::{
    central_chi2_cdf, noncentral_chi2_cdf, reg_lower_incomplete_gamma, POISSON_TAIL_TOL,
};
