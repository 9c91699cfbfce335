use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::numerics::{fft2, fftshift, Direction, Grid2D, SeededRng};
use crate::{Error, Result};

pub const KEY_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_RADIUS: usize = 10;
pub const DEFAULT_CHANNEL: usize = 3;

/// Ring pattern `W` on a centred disc `M` of one latent channel's spectrum.
///
/// Coordinates are on the centred spectrum (zero frequency at `(h/2, w/2)`).
/// The disc excludes the DC cell. Pattern values are constant on each
/// integer-radius ring and conjugate symmetric about the centre.
#[derive(Debug, Clone, PartialEq)]
pub struct WatermarkKey {
    pub seed: u64,
    pub channel: usize,
    pub radius: usize,
    pub height: usize,
    pub width: usize,
    pub mask_coords: Vec<(usize, usize)>,
    pub pattern: Vec<Complex64>,
    /// One value per ring index `r` (cells with `floor(dist) == r`).
    pub rings: Vec<Complex64>,
    /// Indices into `mask_coords` picking one cell of every conjugate pair.
    pub half_mask: Vec<usize>,
}

/// Centred-spectrum distance of `(row, col)` from the DC cell.
pub fn centre_dist(row: usize, col: usize, h: usize, w: usize) -> f64 {
    let dr = row as f64 - (h / 2) as f64;
    let dc = col as f64 - (w / 2) as f64;
    (dr * dr + dc * dc).sqrt()
}

/// Point reflection about the spectrum centre.
pub fn mirror(row: usize, col: usize, h: usize, w: usize) -> (usize, usize) {
    ((h - row) % h, (w - col) % w)
}

impl WatermarkKey {
    pub fn generate(seed: u64, radius: usize, channel: usize, h: usize, w: usize) -> Result<Self> {
        if 2 * radius >= h.min(w) {
            return Err(Error::param(
                "radius",
                format!("{radius} too large for a {h}x{w} spectrum"),
            ));
        }
        let mut rng = SeededRng::new(seed);
        let noise = Grid2D::from_vec(h, w, (0..h * w).map(|_| rng.standard_normal()).collect())?;
        let spec = fftshift(&fft2(&noise.to_complex(), Direction::Forward)?);

        let (cr, cc) = (h / 2, w / 2);
        let mut sums = vec![Complex64::new(0.0, 0.0); radius];
        let mut counts = vec![0usize; radius];
        let mut mask_coords = Vec::new();
        for r in 0..h {
            for c in 0..w {
                let d = centre_dist(r, c, h, w);
                if d < radius as f64 {
                    let ring = d.floor() as usize;
                    sums[ring] += spec.get(r, c);
                    counts[ring] += 1;
                    if (r, c) != (cr, cc) {
                        mask_coords.push((r, c));
                    }
                }
            }
        }
        // Each ring is a union of conjugate pairs, so the average is already
        // real up to rounding; symmetrising makes that exact.
        let rings: Vec<Complex64> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &n)| {
                if n == 0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    let m = s / n as f64;
                    (m + m.conj()) / 2.0
                }
            })
            .collect();
        Self::assemble(seed, channel, radius, h, w, mask_coords, rings)
    }

    fn assemble(
        seed: u64,
        channel: usize,
        radius: usize,
        h: usize,
        w: usize,
        mask_coords: Vec<(usize, usize)>,
        rings: Vec<Complex64>,
    ) -> Result<Self> {
        let pattern: Vec<Complex64> = mask_coords
            .iter()
            .map(|&(r, c)| rings[centre_dist(r, c, h, w).floor() as usize])
            .collect();
        let mut half_mask = Vec::with_capacity(mask_coords.len() / 2);
        for (i, &(r, c)) in mask_coords.iter().enumerate() {
            let (mr, mc) = mirror(r, c, h, w);
            // Keep the lexicographically smaller cell of each pair.
            if (r, c) < (mr, mc) {
                half_mask.push(i);
            } else if (r, c) == (mr, mc) {
                return Err(Error::Degenerate(format!(
                    "self-conjugate cell ({r}, {c}) inside the key disc"
                )));
            }
        }
        Ok(WatermarkKey {
            seed,
            channel,
            radius,
            height: h,
            width: w,
            mask_coords,
            pattern,
            rings,
            half_mask,
        })
    }

    /// Pattern values at the independent half of the mask.
    pub fn half_pattern(&self) -> Vec<Complex64> {
        self.half_mask.iter().map(|&i| self.pattern[i]).collect()
    }

    /// Short stable identifier for key stores.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(
            format!(
                "{}:{}:{}:{}:{}",
                self.seed, self.channel, self.radius, self.height, self.width
            )
            .as_bytes(),
        );
        for r in &self.rings {
            h.update(r.re.to_le_bytes());
            h.update(r.im.to_le_bytes());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_file(&self) -> KeyFile {
        KeyFile {
            version: KEY_FORMAT_VERSION,
            seed: self.seed,
            channel: self.channel,
            radius: self.radius,
            h: self.height,
            w: self.width,
            rings: self
                .rings
                .iter()
                .enumerate()
                .map(|(radius, v)| RingValue {
                    radius,
                    re: v.re,
                    im: v.im,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    /// Regenerates the key from its parameters and checks the stored rings.
    pub fn from_file(file: &KeyFile) -> Result<Self> {
        if file.version != KEY_FORMAT_VERSION {
            return Err(Error::Checksum(format!(
                "unsupported key format version {}",
                file.version
            )));
        }
        let key = Self::generate(file.seed, file.radius, file.channel, file.h, file.w)?;
        if file.rings.len() != key.rings.len() {
            return Err(Error::Checksum(format!(
                "expected {} rings, file has {}",
                key.rings.len(),
                file.rings.len()
            )));
        }
        for (stored, actual) in file.rings.iter().zip(&key.rings) {
            let ok = stored.re.to_bits() == actual.re.to_bits()
                && stored.im.to_bits() == actual.im.to_bits();
            if stored.radius >= key.rings.len() || !ok {
                return Err(Error::Checksum(format!(
                    "ring {} does not match the regenerated key",
                    stored.radius
                )));
            }
        }
        Ok(key)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: KeyFile = serde_json::from_str(s)?;
        Self::from_file(&file)
    }
}

/// On-disk key: the parameters plus ring values as a checksum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyFile {
    pub version: u32,
    pub seed: u64,
    pub channel: usize,
    pub radius: usize,
    pub h: usize,
    pub w: usize,
    pub rings: Vec<RingValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingValue {
    pub radius: usize,
    pub re: f64,
    pub im: f64,
}
