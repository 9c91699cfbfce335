use num_complex::Complex;

use crate::{Error, Result, Scalar};

/// Real grid stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D<T> {
    pub height: usize,
    pub width: usize,
    pub values: Vec<T>,
}

/// Complex grid stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid2D<T> {
    pub height: usize,
    pub width: usize,
    pub values: Vec<Complex<T>>,
}

impl<T: Scalar> Grid2D<T> {
    pub fn zeros(height: usize, width: usize) -> Self {
        Grid2D {
            height,
            width,
            values: vec![T::zero(); height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::shape(height * width, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Grid2D::from_vec"));
        }
        Ok(Grid2D {
            height,
            width,
            values,
        })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: T) {
        self.values[row * self.width + col] = v;
    }

    pub fn to_complex(&self) -> ComplexGrid2D<T> {
        ComplexGrid2D {
            height: self.height,
            width: self.width,
            values: self
                .values
                .iter()
                .map(|&re| Complex::new(re, T::zero()))
                .collect(),
        }
    }
}

impl<T: Scalar> ComplexGrid2D<T> {
    pub fn zeros(height: usize, width: usize) -> Self {
        ComplexGrid2D {
            height,
            width,
            values: vec![Complex::new(T::zero(), T::zero()); height * width],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex<T> {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: Complex<T>) {
        self.values[row * self.width + col] = v;
    }

    /// Real parts, together with the largest absolute imaginary part dropped.
    pub fn real_part(&self) -> (Grid2D<T>, T) {
        let mut residual = T::zero();
        let values = self
            .values
            .iter()
            .map(|c| {
                residual = residual.max(c.im.abs());
                c.re
            })
            .collect();
        (
            Grid2D {
                height: self.height,
                width: self.width,
                values,
            },
            residual,
        )
    }
}
