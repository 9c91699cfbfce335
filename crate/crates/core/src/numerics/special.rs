use statrs::function::gamma::ln_gamma;

use crate::{Error, Result};

/// Remaining Poisson mass at which the non-central series stops.
pub const POISSON_TAIL_TOL: f64 = 1e-12;

const MAX_GAMMA_ITERS: usize = 10_000;
const MAX_POISSON_TERMS: usize = 100_000;

/// Regularised lower incomplete gamma `P(s, x)`.
///
/// Power series below `x = s + 1`, Lentz continued fraction for `Q` above.
pub fn reg_lower_incomplete_gamma(s: f64, x: f64) -> Result<f64> {
    if !s.is_finite() || !x.is_finite() {
        return Err(Error::NonFinite("reg_lower_incomplete_gamma"));
    }
    if s <= 0.0 {
        return Err(Error::param("s", format!("must be > 0, got {s}")));
    }
    if x < 0.0 {
        return Err(Error::param("x", format!("must be >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let log_prefix = s * x.ln() - x - ln_gamma(s);
    let p = if x < s + 1.0 {
        series(s, x, log_prefix)?
    } else {
        1.0 - continued_fraction(s, x, log_prefix)?
    };
    Ok(p.clamp(0.0, 1.0))
}

fn series(s: f64, x: f64, log_prefix: f64) -> Result<f64> {
    let mut ap = s;
    let mut term = 1.0 / s;
    let mut sum = term;
    for _ in 0..MAX_GAMMA_ITERS {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * f64::EPSILON {
            return Ok(sum * log_prefix.exp());
        }
    }
    Err(Error::Convergence {
        what: "incomplete gamma series",
        terms: MAX_GAMMA_ITERS,
        residual: term,
    })
}

fn continued_fraction(s: f64, x: f64, log_prefix: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_GAMMA_ITERS {
        let an = -(i as f64) * (i as f64 - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < f64::EPSILON {
            return Ok(log_prefix.exp() * h);
        }
    }
    Err(Error::Convergence {
        what: "incomplete gamma continued fraction",
        terms: MAX_GAMMA_ITERS,
        residual: h,
    })
}

/// Central chi-squared CDF with `k` degrees of freedom.
pub fn central_chi2_cdf(x: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::param("k", "degrees of freedom must be >= 1"));
    }
    reg_lower_incomplete_gamma(k as f64 / 2.0, x / 2.0)
}

/// Non-central chi-squared CDF as a Poisson mixture of central CDFs.
///
/// Summation starts at the Poisson mode and walks outwards, always taking the
/// heavier of the two frontier terms, until the unvisited Poisson mass drops
/// below [`POISSON_TAIL_TOL`].
pub fn noncentral_chi2_cdf(x: f64, k: usize, lambda_nc: f64) -> Result<f64> {
    if !x.is_finite() || !lambda_nc.is_finite() {
        return Err(Error::NonFinite("noncentral_chi2_cdf"));
    }
    if x < 0.0 {
        return Err(Error::param("x", format!("must be >= 0, got {x}")));
    }
    if lambda_nc < 0.0 {
        return Err(Error::param(
            "lambda_nc",
            format!("must be >= 0, got {lambda_nc}"),
        ));
    }
    if k == 0 {
        return Err(Error::param("k", "degrees of freedom must be >= 1"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if lambda_nc == 0.0 {
        return central_chi2_cdf(x, k);
    }

    let mu = lambda_nc / 2.0;
    let half_k = k as f64 / 2.0;
    let half_x = x / 2.0;
    let log_weight = |j: usize| -mu + j as f64 * mu.ln() - ln_gamma(j as f64 + 1.0);

    let mode = mu.floor() as usize;
    let mut up = mode;
    let mut down = mode.checked_sub(1);
    let mut w_up = log_weight(up).exp();
    let mut w_down = down.map(|j| log_weight(j).exp());

    let mut mass = 0.0;
    let mut acc = 0.0;
    let mut terms = 0;
    while 1.0 - mass >= POISSON_TAIL_TOL {
        if terms >= MAX_POISSON_TERMS {
            return Err(Error::Convergence {
                what: "non-central chi-squared Poisson series",
                terms,
                residual: 1.0 - mass,
            });
        }
        let take_up = match w_down {
            Some(wd) => w_up >= wd,
            None => true,
        };
        if take_up {
            acc += w_up * reg_lower_incomplete_gamma(half_k + up as f64, half_x)?;
            mass += w_up;
            up += 1;
            w_up = log_weight(up).exp();
        } else {
            let j = down.expect("down frontier present");
            let wd = w_down.expect("down weight present");
            acc += wd * reg_lower_incomplete_gamma(half_k + j as f64, half_x)?;
            mass += wd;
            down = j.checked_sub(1);
            w_down = down.map(|j| log_weight(j).exp());
        }
        terms += 1;
        // Both frontiers have underflowed: whatever mass is left is rounding.
        if w_up == 0.0 && w_down.is_none_or(|w| w == 0.0) {
            break;
        }
    }
    Ok(acc.clamp(0.0, 1.0))
}
