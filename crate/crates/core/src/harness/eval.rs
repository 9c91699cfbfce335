use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{msssim, psnr, ssim};
use super::RunConfig;
use crate::diffusion::{
    decode, encode, null_embed, prompt_embed, sample_trajectory, Image, NoiseSchedule, Nulls,
    ToyDenoiser,
};
use crate::numerics::{derive_seed, gaussian_grid, SeededRng};
use crate::perturb::{apply_perturbation, RegenContext};
use crate::tuning::{pivotal_tune, TuningConfig};
use crate::watermark::{auc, keygen, verify, WatermarkKey};
use crate::{Error, Result};

pub const CLEAN_COLUMN: &str = "clean";

/// A labelled watermarking configuration evaluated side by side with others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub label: String,
    pub tuning: TuningConfig,
}

impl Method {
    pub fn new(label: impl Into<String>, tuning: TuningConfig) -> Self {
        Method {
            label: label.into(),
            tuning,
        }
    }

    /// Plain ring watermark: no tuning at all.
    pub fn tree_ring(base: &TuningConfig) -> Self {
        Method::new(
            "Tree-Ring",
            TuningConfig {
                n_iters: 0,
                ..*base
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucCell {
    pub column: String,
    pub auc: f64,
}

/// One table row: mean quality against the clean reference plus detection AUCs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub psnr: f64,
    pub ssim: f64,
    /// Absent when the images are too small for three scales.
    pub msssim: Option<f64>,
    pub auc: Vec<AucCell>,
    /// Mean over the perturbation columns (the clean column is excluded).
    pub auc_avg: f64,
    pub n_images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub prompt: String,
    pub seed: u64,
    pub method: String,
    pub psnr: f64,
    pub ssim: f64,
    pub msssim: Option<f64>,
    /// One p-value per report column.
    pub p_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanRecord {
    pub prompt: String,
    pub seed: u64,
    pub p_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub prompt: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub key_fingerprint: String,
    pub seeds: Vec<u64>,
    pub columns: Vec<String>,
    pub rows: Vec<MetricsRow>,
    pub images: Vec<ImageRecord>,
    pub clean: Vec<CleanRecord>,
    pub failures: Vec<Failure>,
    pub total_items: usize,
}

impl EvalReport {
    pub fn failure_fraction(&self) -> f64 {
        if self.total_items == 0 {
            return 0.0;
        }
        self.failures.len() as f64 / self.total_items as f64
    }

    pub fn row(&self, method: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// Stable 64-bit id of a string, used to derive per-item RNG streams.
pub fn label_id(s: &str) -> u64 {
    let d = Sha256::digest(s.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

const STREAM_LATENT: u64 = 1;
const STREAM_ATTACK: u64 = 2;

/// Everything shared by the items of one run.
pub struct EvalContext {
    pub cfg: RunConfig,
    pub schedule: NoiseSchedule,
    pub denoiser: ToyDenoiser<f64>,
    pub key: WatermarkKey,
}

impl EvalContext {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let schedule = NoiseSchedule::linear(cfg.schedule)?;
        let denoiser = ToyDenoiser::new(cfg.denoiser, &schedule)?;
        let key = keygen(
            cfg.key.seed,
            cfg.key.radius,
            cfg.key.channel,
            cfg.denoiser.height,
            cfg.denoiser.width,
        )?;
        Ok(EvalContext {
            cfg: cfg.clone(),
            schedule,
            denoiser,
            key,
        })
    }

    pub fn columns(&self) -> Vec<String> {
        std::iter::once(CLEAN_COLUMN.to_string())
            .chain(self.cfg.perturbations.iter().map(|p| p.label()))
            .collect()
    }

    pub fn item_seed(&self, prompt: &str, seed: u64) -> u64 {
        derive_seed(seed, &[label_id(prompt)])
    }

    /// The unwatermarked generation for `(prompt, seed)`.
    pub fn clean_image(&self, prompt: &str, seed: u64) -> Result<Image<f64>> {
        let d = &self.denoiser;
        let (c, h, w) = d.latent_shape();
        let mut rng = SeededRng::new(derive_seed(self.item_seed(prompt, seed), &[STREAM_LATENT]));
        let z_top = gaussian_grid::<f64>(&mut rng, c, h, w);
        let cond = prompt_embed(prompt, d.dim());
        let null = null_embed(d.dim());
        let traj = sample_trajectory(
            d,
            &z_top,
            &cond,
            Nulls::Constant(&null),
            self.cfg.tuning.guidance_w,
            &self.schedule,
        )?;
        decode(traj.data_end())
    }

    /// p-values of `img` and its attacked versions, one per column.
    pub fn column_pvalues(&self, img: &Image<f64>, prompt: &str, item: u64, stream: &str) -> Result<Vec<f64>> {
        let cond = prompt_embed(prompt, self.denoiser.dim());
        let regen = RegenContext {
            denoiser: &self.denoiser,
            schedule: &self.schedule,
        };
        let mut out = Vec::with_capacity(self.cfg.perturbations.len() + 1);
        let check = |x: &Image<f64>| {
            verify(x, &self.denoiser, &self.key, &cond, &self.schedule, self.cfg.threshold)
                .map(|r| r.p_value)
        };
        out.push(check(img)?);
        for p in &self.cfg.perturbations {
            let mut rng = SeededRng::new(derive_seed(
                item,
                &[STREAM_ATTACK, label_id(stream), label_id(&p.label())],
            ));
            let attacked = apply_perturbation(img, p, &mut rng, Some(&regen))?;
            out.push(check(&attacked)?);
        }
        Ok(out)
    }

    fn eval_item(&self, prompt: &str, seed: u64, methods: &[Method]) -> Result<(CleanRecord, Vec<ImageRecord>)> {
        let item = self.item_seed(prompt, seed);
        let x_clean = self.clean_image(prompt, seed)?;
        let clean = CleanRecord {
            prompt: prompt.to_string(),
            seed,
            p_values: self.column_pvalues(&x_clean, prompt, item, CLEAN_COLUMN)?,
        };
        let z0 = encode(&x_clean)?;
        let cond = prompt_embed(prompt, self.denoiser.dim());
        let mut records = Vec::with_capacity(methods.len());
        for m in methods {
            let r = pivotal_tune(&self.denoiser, &z0, &self.key, &cond, &m.tuning, &self.schedule)?;
            let img = r.image;
            records.push(ImageRecord {
                prompt: prompt.to_string(),
                seed,
                method: m.label.clone(),
                psnr: psnr(&img, &x_clean)?,
                ssim: ssim(&img, &x_clean)?,
                msssim: msssim(&img, &x_clean).ok(),
                p_values: self.column_pvalues(&img, prompt, item, &m.label)?,
            });
        }
        Ok((clean, records))
    }

    /// Runs every `(prompt, seed)` item for each method and aggregates the table.
    pub fn evaluate(&self, methods: &[Method]) -> Result<EvalReport> {
        if methods.is_empty() {
            return Err(Error::Config("no methods to evaluate".into()));
        }
        let items: Vec<(&str, u64)> = self
            .cfg
            .prompts
            .iter()
            .flat_map(|p| self.cfg.seeds.iter().map(move |&s| (p.as_str(), s)))
            .collect();
        let results: Vec<_> = items
            .par_iter()
            .map(|&(p, s)| (p, s, self.eval_item(p, s, methods)))
            .collect();

        let columns = self.columns();
        let mut clean = Vec::new();
        let mut images = Vec::new();
        let mut failures = Vec::new();
        for (prompt, seed, res) in results {
            match res {
                Ok((c, recs)) => {
                    clean.push(c);
                    images.extend(recs);
                }
                Err(e) => failures.push(Failure {
                    prompt: prompt.to_string(),
                    seed,
                    error: e.to_string(),
                }),
            }
        }

        let mut rows = Vec::new();
        if !clean.is_empty() {
            for m in methods {
                let recs: Vec<&ImageRecord> = images.iter().filter(|r| r.method == m.label).collect();
                let n = recs.len() as f64;
                let mean = |f: &dyn Fn(&ImageRecord) -> f64| recs.iter().map(|r| f(r)).sum::<f64>() / n;
                let msssim = recs
                    .iter()
                    .map(|r| r.msssim)
                    .collect::<Option<Vec<f64>>>()
                    .map(|v| v.iter().sum::<f64>() / n);
                let mut cells = Vec::with_capacity(columns.len());
                for (j, col) in columns.iter().enumerate() {
                    let wm: Vec<f64> = recs.iter().map(|r| r.p_values[j]).collect();
                    let cl: Vec<f64> = clean.iter().map(|r| r.p_values[j]).collect();
                    cells.push(AucCell {
                        column: col.clone(),
                        auc: auc(&wm, &cl)?,
                    });
                }
                let perturbed = &cells[1..];
                let auc_avg = if perturbed.is_empty() {
                    cells[0].auc
                } else {
                    perturbed.iter().map(|c| c.auc).sum::<f64>() / perturbed.len() as f64
                };
                rows.push(MetricsRow {
                    method: m.label.clone(),
                    psnr: mean(&|r| r.psnr),
                    ssim: mean(&|r| r.ssim),
                    msssim,
                    auc: cells,
                    auc_avg,
                    n_images: recs.len(),
                });
            }
        }

        Ok(EvalReport {
            config_hash: self.cfg.hash(),
            key_fingerprint: self.key.fingerprint(),
            seeds: self.cfg.seeds.clone(),
            columns,
            rows,
            images,
            clean,
            failures,
            total_items: items.len(),
        })
    }
}

/// Baseline ring watermark against full tuning.
pub fn default_methods(cfg: &RunConfig) -> Vec<Method> {
    vec![
        Method::tree_ring(&cfg.tuning),
        Method::new("PT-Mark", cfg.tuning),
    ]
}

pub fn run_eval(cfg: &RunConfig) -> Result<EvalReport> {
    EvalContext::new(cfg)?.evaluate(&default_methods(cfg))
}

/// Runs `f` on a pool of `threads` workers, or on the global pool for `None`.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}
