use std::f64::consts::PI;

use crate::diffusion::Image;
use crate::{Error, Result, Scalar};

/// Standard JPEG luminance quantisation table (Annex K), row-major.
pub const LUMA_QUANT: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

fn quant_table(quality: u8) -> [f64; 64] {
    let q = quality as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0.0; 64];
    for (o, &base) in out.iter_mut().zip(&LUMA_QUANT) {
        *o = ((base as u32 * scale + 50) / 100).clamp(1, 255) as f64;
    }
    out
}

fn dct_basis() -> [[f64; 8]; 8] {
    let mut c = [[0.0; 8]; 8];
    for (k, row) in c.iter_mut().enumerate() {
        let a = if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        for (n, v) in row.iter_mut().enumerate() {
            *v = a * (PI * (2 * n + 1) as f64 * k as f64 / 16.0).cos();
        }
    }
    c
}

/// 8x8 block DCT quantisation at the given quality, on the 0..255 scale.
///
/// Partial edge blocks are padded by edge replication.
pub fn jpeg_roundtrip<T: Scalar>(x: &Image<T>, quality: u8) -> Result<Image<T>> {
    if !(1..=100).contains(&quality) {
        return Err(Error::param("quality", format!("must lie in 1..=100, got {quality}")));
    }
    let q = quant_table(quality);
    let c = dct_basis();
    let (h, w) = (x.height, x.width);
    let mut out = x.clone();
    let mut block = [[0.0f64; 8]; 8];
    let mut tmp = [[0.0f64; 8]; 8];
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            for (i, row) in block.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    let p = x.get((by + i).min(h - 1), (bx + j).min(w - 1)).as_f64();
                    *v = p * 255.0 - 128.0;
                }
            }
            // Forward: C B C^T.
            for u in 0..8 {
                for j in 0..8 {
                    tmp[u][j] = (0..8).map(|i| c[u][i] * block[i][j]).sum();
                }
            }
            for u in 0..8 {
                for v in 0..8 {
                    let coef: f64 = (0..8).map(|j| tmp[u][j] * c[v][j]).sum();
                    let qi = q[u * 8 + v];
                    block[u][v] = (coef / qi).round() * qi;
                }
            }
            // Inverse: C^T F C.
            for i in 0..8 {
                for v in 0..8 {
                    tmp[i][v] = (0..8).map(|u| c[u][i] * block[u][v]).sum();
                }
            }
            for i in 0..8 {
                for j in 0..8 {
                    let (r, col) = (by + i, bx + j);
                    if r < h && col < w {
                        let p: f64 = (0..8).map(|v| tmp[i][v] * c[v][j]).sum();
                        out.set(r, col, T::of(((p + 128.0) / 255.0).clamp(0.0, 1.0)));
                    }
                }
            }
        }
    }
    Ok(out)
}
