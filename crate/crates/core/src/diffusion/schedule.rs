use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Construction parameters of a linear-beta schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleParams {
    pub t_train: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub t_sample: usize,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams {
            t_train: 1000,
            beta_min: 1e-4,
            beta_max: 0.02,
            t_sample: 50,
        }
    }
}

/// Linear beta ladder with its cumulative products and the sampled timesteps.
///
/// Timesteps run `0..=t_train`; `alpha_bar(0) = 1` is the data end and
/// `alpha_bar(t) = prod_{i=1..t} (1 - beta_i)`. `steps` holds the `T + 1`
/// sampled timesteps in decreasing order, ending at `0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub params: ScheduleParams,
    /// `betas[t - 1]` is `beta_t`.
    pub betas: Vec<f64>,
    /// `alpha_bars[t]` for `t = 0..=t_train`.
    pub alpha_bars: Vec<f64>,
    pub steps: Vec<usize>,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule::linear(ScheduleParams::default()).expect("default schedule is valid")
    }
}

impl NoiseSchedule {
    pub fn linear(p: ScheduleParams) -> Result<Self> {
        let ScheduleParams {
            t_train,
            beta_min,
            beta_max,
            t_sample,
        } = p;
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::param(
                "beta range",
                format!("need 0 < beta_min <= beta_max < 1, got ({beta_min}, {beta_max})"),
            ));
        }
        if t_train == 0 || t_sample == 0 || t_sample > t_train {
            return Err(Error::param(
                "t_sample",
                format!("need 1 <= t_sample <= t_train, got {t_sample} / {t_train}"),
            ));
        }
        let betas: Vec<f64> = (0..t_train)
            .map(|i| {
                if t_train == 1 {
                    beta_min
                } else {
                    beta_min + (beta_max - beta_min) * i as f64 / (t_train - 1) as f64
                }
            })
            .collect();
        let mut alpha_bars = Vec::with_capacity(t_train + 1);
        let mut acc = 1.0;
        alpha_bars.push(acc);
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        // Evenly strided ladder; rounding keeps it exact when t_sample divides t_train.
        let steps: Vec<usize> = (0..=t_sample)
            .rev()
            .map(|k| ((k * t_train) as f64 / t_sample as f64).round() as usize)
            .collect();
        Ok(NoiseSchedule {
            params: p,
            betas,
            alpha_bars,
            steps,
        })
    }

    /// Number of sampled denoising steps `T`.
    pub fn num_steps(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    /// Position of `t` in `steps` (0 = noisiest).
    pub fn position(&self, t: usize) -> Result<usize> {
        self.steps
            .iter()
            .position(|&s| s == t)
            .ok_or(Error::Timestep {
                t,
                reason: "not on the sampled ladder",
            })
    }

    /// Ladder index counted from the data end: `0` for `t = 0`, `T` for the top.
    pub fn level(&self, t: usize) -> Result<usize> {
        Ok(self.num_steps() - self.position(t)?)
    }

    /// The next less noisy timestep.
    pub fn prev(&self, t: usize) -> Result<usize> {
        let k = self.position(t)?;
        self.steps.get(k + 1).copied().ok_or(Error::Timestep {
            t,
            reason: "already at the data end",
        })
    }

    /// The next noisier timestep.
    pub fn next(&self, t: usize) -> Result<usize> {
        let k = self.position(t)?;
        if k == 0 {
            return Err(Error::Timestep {
                t,
                reason: "already at the top of the ladder",
            });
        }
        Ok(self.steps[k - 1])
    }

    pub fn top(&self) -> usize {
        self.steps[0]
    }

    /// Ladder timestep at `level` (0 = data end).
    pub fn at_level(&self, level: usize) -> usize {
        self.steps[self.num_steps() - level.min(self.num_steps())]
    }

    /// `(a, b)` with `z_to = a * z_from + b * eps` for a DDIM move between two timesteps.
    pub fn ddim_coeffs(&self, from: usize, to: usize) -> (f64, f64) {
        let ab_from = self.alpha_bar(from);
        let ab_to = self.alpha_bar(to);
        let a = (ab_to / ab_from).sqrt();
        let b = (1.0 - ab_to).sqrt() - a * (1.0 - ab_from).sqrt();
        (a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reach_low_alpha_bar() {
        let s = NoiseSchedule::default();
        // Direct product, written out independently of the constructor.
        let mut prod = 1.0;
        for i in 0..1000 {
            prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * i as f64 / 999.0);
        }
        assert!((s.alpha_bar(1000) - prod).abs() < 1e-15);
        assert!(s.alpha_bar(s.top()) < 0.05);
        assert!((s.alpha_bar(0) - 1.0).abs() < 1e-3);
        assert_eq!(s.steps.len(), 51);
        assert_eq!(s.steps[0], 1000);
        assert_eq!(*s.steps.last().unwrap(), 0);
        assert!(s.steps.windows(2).all(|w| w[0] > w[1]));
        assert!(s.alpha_bars.windows(2).all(|w| w[1] < w[0]));
        assert!(s.betas.iter().all(|&b| b > 0.0 && b < 1.0));
    }

    #[test]
    fn full_ladder_when_sampling_every_step() {
        let s = NoiseSchedule::linear(ScheduleParams {
            t_train: 20,
            t_sample: 20,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(s.steps, (0..=20).rev().collect::<Vec<_>>());
    }

    #[test]
    fn constant_beta_is_geometric() {
        let beta = 0.01;
        let s = NoiseSchedule::linear(ScheduleParams {
            t_train: 100,
            beta_min: beta,
            beta_max: beta,
            t_sample: 10,
        })
        .unwrap();
        for t in 0..=100 {
            let expect = (1.0f64 - beta).powi(t as i32);
            assert!((s.alpha_bar(t) - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_ranges() {
        let bad = |p: ScheduleParams| NoiseSchedule::linear(p).is_err();
        let d = ScheduleParams::default();
        assert!(bad(ScheduleParams { beta_min: 0.0, ..d }));
        assert!(bad(ScheduleParams { beta_min: 0.03, ..d }));
        assert!(bad(ScheduleParams { beta_max: 1.0, ..d }));
        assert!(bad(ScheduleParams { t_sample: 0, ..d }));
        assert!(bad(ScheduleParams { t_sample: 1001, ..d }));
    }

    #[test]
    fn neighbours() {
        let s = NoiseSchedule::default();
        assert_eq!(s.prev(1000).unwrap(), 980);
        assert_eq!(s.next(980).unwrap(), 1000);
        assert!(s.prev(0).is_err());
        assert!(s.next(1000).is_err());
        assert!(s.position(7).is_err());
        assert_eq!(s.level(0).unwrap(), 0);
        assert_eq!(s.level(1000).unwrap(), 50);
        assert_eq!(s.at_level(30), 600);
    }
}
