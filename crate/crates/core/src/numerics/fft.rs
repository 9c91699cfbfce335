use num_complex::Complex;

use super::ComplexGrid2D;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    /// Carries the `1/(H*W)` normalisation.
    Inverse,
}

fn check_pow2(height: usize, width: usize) -> Result<()> {
    let ok = |n: usize| n >= 2 && n.is_power_of_two();
    if ok(height) && ok(width) {
        Ok(())
    } else {
        Err(Error::Sizing { height, width })
    }
}

/// In-place iterative Cooley-Tukey on a strided line of length `n`.
fn fft_line<T: Scalar>(buf: &mut [Complex<T>], twiddles: &[Complex<T>]) {
    let n = buf.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = twiddles[k * stride];
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

fn twiddles<T: Scalar>(n: usize, direction: Direction) -> Vec<Complex<T>> {
    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    (0..n / 2)
        .map(|k| {
            // Angles in f64 so f32 grids still get correctly rounded twiddles.
            let theta = sign * 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            Complex::new(T::of(theta.cos()), T::of(theta.sin()))
        })
        .collect()
}

/// 2-D radix-2 DFT. Forward is unnormalised, inverse divides by `H*W`.
pub fn fft2<T: Scalar>(g: &ComplexGrid2D<T>, direction: Direction) -> Result<ComplexGrid2D<T>> {
    let (h, w) = (g.height, g.width);
    check_pow2(h, w)?;
    let mut out = g.clone();

    let tw_row = twiddles::<T>(w, direction);
    for row in out.values.chunks_exact_mut(w) {
        fft_line(row, &tw_row);
    }

    let tw_col = twiddles::<T>(h, direction);
    let mut col = vec![Complex::new(T::zero(), T::zero()); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = out.values[r * w + c];
        }
        fft_line(&mut col, &tw_col);
        for r in 0..h {
            out.values[r * w + c] = col[r];
        }
    }

    if direction == Direction::Inverse {
        let scale = T::one() / T::of((h * w) as f64);
        for v in &mut out.values {
            *v = *v * scale;
        }
    }
    Ok(out)
}

fn roll<T: Copy>(values: &[T], h: usize, w: usize, dr: usize, dc: usize) -> Vec<T> {
    let mut out = values.to_vec();
    for r in 0..h {
        for c in 0..w {
            out[((r + dr) % h) * w + (c + dc) % w] = values[r * w + c];
        }
    }
    out
}

/// Moves the zero frequency to `(H/2, W/2)`.
pub fn fftshift<T: Scalar>(g: &ComplexGrid2D<T>) -> ComplexGrid2D<T> {
    ComplexGrid2D {
        height: g.height,
        width: g.width,
        values: roll(&g.values, g.height, g.width, g.height / 2, g.width / 2),
    }
}

/// Inverse of [`fftshift`]; identical for even sizes but kept separate for clarity at call sites.
pub fn ifftshift<T: Scalar>(g: &ComplexGrid2D<T>) -> ComplexGrid2D<T> {
    let (h, w) = (g.height, g.width);
    ComplexGrid2D {
        height: h,
        width: w,
        values: roll(&g.values, h, w, h - h / 2, w - w / 2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Grid2D, SeededRng};

    fn random_grid(seed: u64, h: usize, w: usize) -> ComplexGrid2D<f64> {
        let mut rng = SeededRng::new(seed);
        ComplexGrid2D {
            height: h,
            width: w,
            values: (0..h * w)
                .map(|_| Complex::new(rng.standard_normal(), rng.standard_normal()))
                .collect(),
        }
    }

    /// O(N^2) DFT straight from the definition.
    fn naive_dft(g: &ComplexGrid2D<f64>) -> ComplexGrid2D<f64> {
        let (h, w) = (g.height, g.width);
        let mut out = ComplexGrid2D::zeros(h, w);
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex::new(0.0, 0.0);
                for r in 0..h {
                    for c in 0..w {
                        let ang = -2.0
                            * std::f64::consts::PI
                            * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                        acc += g.get(r, c) * Complex::new(ang.cos(), ang.sin());
                    }
                }
                out.set(u, v, acc);
            }
        }
        out
    }

    #[test]
    fn impulse_gives_flat_spectrum() {
        let mut g = ComplexGrid2D::<f64>::zeros(8, 8);
        g.set(0, 0, Complex::new(1.0, 0.0));
        let f = fft2(&g, Direction::Forward).unwrap();
        for v in &f.values {
            assert!((v.re - 1.0).abs() < 1e-15 && v.im.abs() < 1e-15);
        }
    }

    #[test]
    fn matches_naive_dft_on_rectangular_grid() {
        let g = random_grid(3, 4, 8);
        let fast = fft2(&g, Direction::Forward).unwrap();
        let slow = naive_dft(&g);
        for (a, b) in fast.values.iter().zip(&slow.values) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn round_trip_16() {
        let g = random_grid(11, 16, 16);
        let back = fft2(&fft2(&g, Direction::Forward).unwrap(), Direction::Inverse).unwrap();
        let err = g
            .values
            .iter()
            .zip(&back.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn round_trip_up_to_128() {
        for n in [2usize, 4, 32, 128] {
            let g = random_grid(n as u64, n, n);
            let back = fft2(&fft2(&g, Direction::Forward).unwrap(), Direction::Inverse).unwrap();
            let err = g
                .values
                .iter()
                .zip(&back.values)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-10, "n={n} err={err}");
        }
    }

    #[test]
    fn parseval_64() {
        let g = random_grid(5, 64, 64);
        let f = fft2(&g, Direction::Forward).unwrap();
        let e_space: f64 = g.values.iter().map(|v| v.norm_sqr()).sum();
        let e_freq: f64 = f.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / (64.0 * 64.0);
        assert!(((e_space - e_freq) / e_space).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_power_of_two() {
        let g = ComplexGrid2D::<f64>::zeros(6, 8);
        assert!(matches!(
            fft2(&g, Direction::Forward),
            Err(Error::Sizing { .. })
        ));
        let g = ComplexGrid2D::<f64>::zeros(1, 8);
        assert!(fft2(&g, Direction::Forward).is_err());
    }

    #[test]
    fn shift_centres_dc() {
        let mut g = ComplexGrid2D::<f64>::zeros(8, 8);
        g.set(0, 0, Complex::new(1.0, 0.0));
        let s = fftshift(&g);
        assert_eq!(s.get(4, 4), Complex::new(1.0, 0.0));
        assert_eq!(ifftshift(&s), g);
    }

    #[test]
    fn f32_round_trip() {
        let g = Grid2D::<f32>::from_vec(8, 8, (0..64).map(|i| (i as f32 * 0.37).sin()).collect())
            .unwrap()
            .to_complex();
        let back = fft2(&fft2(&g, Direction::Forward).unwrap(), Direction::Inverse).unwrap();
        for (a, b) in g.values.iter().zip(&back.values) {
            assert!((a - b).norm() < 1e-5);
        }
    }
}
