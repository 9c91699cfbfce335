//! Image-space attacks used to probe watermark robustness.

mod jpeg;
mod spec;

pub use jpeg::{jpeg_roundtrip, LUMA_QUANT};
pub use spec::{
    apply_perturbation, severity_defaults, severity_defaults_for, PerturbationSpec, RegenContext,
    REGENERATE_FRACTION,
};
