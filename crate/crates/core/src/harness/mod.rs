//! Quality metrics, batch evaluation, ablation sweeps, key storage and reports.

mod ablation;
mod config;
mod eval;
mod keystore;
mod metrics;
mod report;

pub use ablation::{ablation_methods, run_ablation, AblationAxis};
pub use config::{AblationGrids, KeyParams, RunConfig, DEFAULT_OUTPUT_DIR, OUTPUT_DIR_ENV};
pub use eval::{
    default_methods, label_id, run_eval, with_threads, AucCell, CleanRecord, EvalContext,
    EvalReport, Failure, ImageRecord, Method, MetricsRow, CLEAN_COLUMN,
};
pub use keystore::{load_key_file, KeyStore};
pub use metrics::{msssim, psnr, ssim, MSSSIM_MIN_SIDE, PSNR_CAP_DB};
pub use report::{render_from_json, to_csv, to_json, to_svg, write_reports};
