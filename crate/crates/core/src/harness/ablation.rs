use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::eval::{EvalContext, EvalReport, Method};
use super::RunConfig;
use crate::tuning::TuningConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    /// Every `(lambda1, lambda2)` pair of the configured grids.
    LambdaGrid,
    NIters,
    StartStep,
    /// Baseline, tuning without the watermark loss, full tuning.
    Modules,
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda_grid" | "lambda-grid" => Ok(AblationAxis::LambdaGrid),
            "n_iters" | "n-iters" => Ok(AblationAxis::NIters),
            "start_step" | "start-step" => Ok(AblationAxis::StartStep),
            "modules" => Ok(AblationAxis::Modules),
            other => Err(Error::Config(format!("unknown ablation axis `{other}`"))),
        }
    }
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationAxis::LambdaGrid => "lambda_grid",
            AblationAxis::NIters => "n_iters",
            AblationAxis::StartStep => "start_step",
            AblationAxis::Modules => "modules",
        })
    }
}

pub fn ablation_methods(cfg: &RunConfig, axis: AblationAxis) -> Result<Vec<Method>> {
    let base = cfg.tuning;
    let g = &cfg.ablation;
    let need = |empty: bool, what: &str| {
        if empty {
            Err(Error::Config(format!("ablation grid `{what}` is empty")))
        } else {
            Ok(())
        }
    };
    Ok(match axis {
        AblationAxis::LambdaGrid => {
            need(g.lambda1.is_empty() || g.lambda2.is_empty(), "lambda1/lambda2")?;
            g.lambda1
                .iter()
                .flat_map(|&l1| {
                    g.lambda2.iter().map(move |&l2| {
                        Method::new(
                            format!("l1={l1:.2}/l2={l2:.4}"),
                            TuningConfig {
                                lambda1: l1,
                                lambda2: l2,
                                ..base
                            },
                        )
                    })
                })
                .collect()
        }
        AblationAxis::NIters => {
            need(g.n_iters.is_empty(), "n_iters")?;
            g.n_iters
                .iter()
                .map(|&n| Method::new(format!("N={n}"), TuningConfig { n_iters: n, ..base }))
                .collect()
        }
        AblationAxis::StartStep => {
            need(g.start_step.is_empty(), "start_step")?;
            g.start_step
                .iter()
                .map(|&k| {
                    Method::new(
                        format!("start={k}"),
                        TuningConfig {
                            start_step: k,
                            ..base
                        },
                    )
                })
                .collect()
        }
        AblationAxis::Modules => vec![
            Method::tree_ring(&base),
            Method::new("PT-Mark (w/o WP)", TuningConfig { lambda2: 0.0, ..base }),
            Method::new("PT-Mark", base),
        ],
    })
}

pub fn run_ablation(cfg: &RunConfig, axis: AblationAxis) -> Result<EvalReport> {
    let methods = ablation_methods(cfg, axis)?;
    EvalContext::new(cfg)?.evaluate(&methods)
}
