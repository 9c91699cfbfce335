//! Ring keys in the Fourier domain of the initial latent, and the
//! non-central chi-squared test that detects them.

mod auc;
mod detect;
mod key;

pub use auc::auc;
pub use detect::{
    embed, extract, extract_full, score_pvalue, verify, verify_latent, Extraction,
    VerificationReport, DEFAULT_THRESHOLD,
};
pub use key::{
    centre_dist, mirror, KeyFile, RingValue, WatermarkKey, DEFAULT_CHANNEL, DEFAULT_RADIUS,
    KEY_FORMAT_VERSION,
};

/// Generates the key for `(seed, radius, channel, h, w)`.
pub fn keygen(
    seed: u64,
    radius: usize,
    channel: usize,
    h: usize,
    w: usize,
) -> crate::Result<WatermarkKey> {
    WatermarkKey::generate(seed, radius, channel, h, w)
}
