//! Degree-one covers in closed form.
//!
//! For M = 1 the constraint forces `q = α` and the inner equation reduces to
//! `ratio(x) = α` with `ρ = (1−x)/(1+x)` and
//! `ratio(x) = x/(1+x) · (1 − ρ^{k−1}) / (1 + ρ^k)`, which is increasing in x.

use super::{entropy_h, EnsembleParams, StationaryPoint};
use crate::error::{Error, Result};

fn rho_pow(x: f64, n: u64) -> f64 {
    let rho = (1.0 - x) / (1.0 + x);
    if n <= i32::MAX as u64 {
        rho.powi(n as i32)
    } else {
        rho.powf(n as f64)
    }
}

fn ratio(x: f64, k: u64) -> f64 {
    (x / (1.0 + x)) * (1.0 - rho_pow(x, k - 1)) / (1.0 + rho_pow(x, k))
}

/// Solves the M = 1 system at `alpha` by bisection in `ln x`.
pub fn solve_m1(params: &EnsembleParams, alpha: f64) -> Result<StationaryPoint> {
    if params.m != 1 {
        return Err(Error::domain("solve_m1 requires M = 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let k = params.k;
    let kf = k as f64;
    if k % 2 == 1 && alpha >= (kf - 1.0) / kf {
        return Err(Error::domain(format!(
            "for odd k the type q = {alpha} exceeds (k-1)/k and has no saddle point"
        )));
    }
    let residual = |s: f64| ratio(s.exp(), k) - alpha;

    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    let mut steps = 0;
    while residual(lo) >= 0.0 {
        lo -= 1.0;
        steps += 1;
        if steps > 800 {
            return Err(Error::solver(
                "could not bracket the M = 1 root from below",
                vec![lo],
            ));
        }
    }
    steps = 0;
    while residual(hi) <= 0.0 {
        hi += 1.0;
        steps += 1;
        if steps > 800 {
            return Err(Error::solver(
                "could not bracket the M = 1 root from above",
                vec![hi],
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * mid.abs().max(1.0) {
            break;
        }
    }
    let s = 0.5 * (lo + hi);
    let x = s.exp();
    let j = params.j as f64;
    let rk = rho_pow(x, k);
    let growth = (j / kf) * (kf * x.ln_1p() + ((1.0 + rk) / 2.0).ln())
        - j * alpha * s
        - (j - 1.0) * entropy_h(&[alpha])?;
    // The Lagrange condition with r = 1 reads (j−1) logit(α) − j ln x = λ α.
    let lambda = ((j - 1.0) * (alpha / (1.0 - alpha)).ln() - j * s) / alpha;
    let residual = (kf * (ratio(x, k) - alpha)).abs();
    Ok(StationaryPoint {
        alpha,
        q: vec![alpha],
        x0: vec![x],
        lambda,
        growth,
        residual,
    })
}
