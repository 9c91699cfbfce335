use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use trajmark::diffusion::{prompt_embed, Image, NoiseSchedule, ToyDenoiser};
use trajmark::harness::{
    render_from_json, run_ablation, run_eval, with_threads, write_reports, AblationAxis,
    EvalContext, EvalReport, KeyStore, RunConfig,
};
use trajmark::numerics::SeededRng;
use trajmark::perturb::{apply_perturbation, PerturbationSpec, RegenContext};
use trajmark::tuning::{pivotal_tune, TuningConfig};
use trajmark::watermark::{keygen, verify};
use trajmark::{diffusion::encode, harness::load_key_file, Error};

#[derive(Parser)]
#[command(name = "trajmark", version, about = "Fourier-ring watermarking with null-text pivotal tuning")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML or JSON run config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed: overrides the key and denoiser seeds of the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; falls back to the config, then $TRAJMARK_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a key and store it under <out>/keys/.
    Keygen {
        #[command(flatten)]
        common: Common,
    },
    /// Generate a ring-watermarked image without tuning.
    Embed {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        prompt: String,
        /// Seed of the image's initial noise.
        #[arg(long, default_value_t = 0)]
        image_seed: u64,
    },
    /// Generate a watermarked image with per-step null tuning.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        prompt: String,
        #[arg(long, default_value_t = 0)]
        image_seed: u64,
    },
    /// Test an image for the watermark.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        prompt: String,
    },
    /// Apply one perturbation, given as JSON such as '{"kind":"jpeg","quality":25}'.
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        spec: String,
        #[arg(long, default_value_t = 0)]
        attack_seed: u64,
    },
    /// Evaluate baseline and tuned watermarking over the configured prompts and seeds.
    Eval {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep one ablation axis: lambda_grid, n_iters, start_step or modules.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: AblationAxis,
    },
    /// Re-render CSV and SVG from a saved JSON report.
    Report {
        #[arg(long)]
        json: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Batch failure budget exceeded.
struct BudgetExceeded(f64);

impl std::fmt::Debug for BudgetExceeded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.1}% of images failed", 100.0 * self.0)
    }
}

impl std::fmt::Display for BudgetExceeded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

impl std::error::Error for BudgetExceeded {}

fn load_config(c: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.key.seed = s;
        cfg.denoiser.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_image(path: &Path, img: &Image<f64>) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string(img)?).with_context(|| format!("writing {}", path.display()))
}

fn read_image(path: &Path) -> anyhow::Result<Image<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let img: Image<f64> = serde_json::from_str(&text)?;
    Ok(Image::new(img.height, img.width, img.data)?)
}

fn finish_batch(report: &EvalReport, cfg: &RunConfig, stem: &str) -> anyhow::Result<()> {
    let dir = cfg.resolved_output_dir();
    for p in write_reports(report, &dir, stem)? {
        println!("{}", p.display());
    }
    for f in &report.failures {
        eprintln!("failed: prompt {:?} seed {}: {}", f.prompt, f.seed, f.error);
    }
    let frac = report.failure_fraction();
    if frac > cfg.max_failure_fraction {
        return Err(BudgetExceeded(frac).into());
    }
    Ok(())
}

fn generate(common: &Common, prompt: &str, image_seed: u64, tuned: bool) -> anyhow::Result<()> {
    let mut cfg = load_config(common)?;
    cfg.prompts = vec![prompt.to_string()];
    let ctx = EvalContext::new(&cfg)?;
    let x = ctx.clean_image(prompt, image_seed)?;
    let cond = prompt_embed(prompt, ctx.denoiser.dim());
    let tuning = if tuned {
        cfg.tuning
    } else {
        TuningConfig {
            n_iters: 0,
            ..cfg.tuning
        }
    };
    let r = pivotal_tune(&ctx.denoiser, &encode(&x)?, &ctx.key, &cond, &tuning, &ctx.schedule)?;
    let dir = cfg.resolved_output_dir();
    std::fs::create_dir_all(&dir)?;
    let key_path = KeyStore::new(&dir).save(&ctx.key)?;
    let stem = if tuned { "tuned" } else { "embedded" };
    let img_path = dir.join(format!("{stem}-{image_seed}.json"));
    write_image(&img_path, &r.image)?;
    write_image(&dir.join(format!("clean-{image_seed}.json")), &x)?;
    println!("{}", key_path.display());
    println!("{}", img_path.display());
    if tuned {
        let losses = dir.join(format!("losses-{image_seed}.csv"));
        std::fs::write(&losses, r.loss_csv())?;
        std::fs::write(
            dir.join(format!("nulls-{image_seed}.json")),
            serde_json::to_string(&r.nulls)?,
        )?;
        println!("{}", losses.display());
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Keygen { common } => {
            let cfg = load_config(&common)?;
            let key = keygen(
                cfg.key.seed,
                cfg.key.radius,
                cfg.key.channel,
                cfg.denoiser.height,
                cfg.denoiser.width,
            )?;
            let path = KeyStore::new(cfg.resolved_output_dir()).save(&key)?;
            println!("{}", path.display());
        }
        Cmd::Embed { common, prompt, image_seed } => generate(&common, &prompt, image_seed, false)?,
        Cmd::Tune { common, prompt, image_seed } => generate(&common, &prompt, image_seed, true)?,
        Cmd::Verify { common, image, key, prompt } => {
            let cfg = load_config(&common)?;
            let key = load_key_file(&key)?;
            let s = NoiseSchedule::linear(cfg.schedule)?;
            let d = ToyDenoiser::<f64>::new(cfg.denoiser, &s)?;
            let x = read_image(&image)?;
            let report = verify(&x, &d, &key, &prompt_embed(&prompt, d.dim()), &s, cfg.threshold)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Cmd::Attack { common, image, spec, attack_seed } => {
            let cfg = load_config(&common)?;
            let spec: PerturbationSpec = serde_json::from_str(&spec)
                .map_err(|e| Error::Config(format!("perturbation spec: {e}")))?;
            let s = NoiseSchedule::linear(cfg.schedule)?;
            let d = ToyDenoiser::<f64>::new(cfg.denoiser, &s)?;
            let ctx = RegenContext { denoiser: &d, schedule: &s };
            let x = read_image(&image)?;
            let y = apply_perturbation(&x, &spec, &mut SeededRng::new(attack_seed), Some(&ctx))?;
            let dir = cfg.resolved_output_dir();
            std::fs::create_dir_all(&dir)?;
            let stem = image.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
            let out = dir.join(format!("{stem}-{}.json", spec.label()));
            write_image(&out, &y)?;
            println!("{}", out.display());
        }
        Cmd::Eval { common } => {
            let cfg = load_config(&common)?;
            let report = with_threads(common.threads, || run_eval(&cfg))??;
            finish_batch(&report, &cfg, "eval")?;
        }
        Cmd::Ablate { common, axis } => {
            let cfg = load_config(&common)?;
            let report = with_threads(common.threads, || run_ablation(&cfg, axis))??;
            finish_batch(&report, &cfg, &format!("ablate-{axis}"))?;
        }
        Cmd::Report { json, out } => {
            let dir = out.unwrap_or_else(|| json.parent().map(Path::to_path_buf).unwrap_or_default());
            for p in render_from_json(&json, &dir)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<BudgetExceeded>().is_some() {
                ExitCode::from(3)
            } else if matches!(e.downcast_ref::<Error>(), Some(Error::Config(_))) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
