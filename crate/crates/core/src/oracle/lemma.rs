//! Empirical check of coefficient asymptotics for powers of a positive
//! polynomial:
//!
//! ```text
//! (1/ℓ) ln Coeff[R(x)^ℓ, x^{ξℓ}]  →  ln R(x0) − Σ ξ_r ln x0_r
//! ```
//!
//! where `x0` is the positive solution of `x_r ∂R/∂x_r = ξ_r R`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::polynomial::{ln_bigint, SparsePoly};
use crate::tilted::{saddle_point, PositivePoly, SaddleOptions, TiltedModel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaRow {
    pub ell: usize,
    /// Exact coefficient in decimal.
    pub coefficient: String,
    /// `(1/ℓ) ln coefficient`; `None` when the coefficient is zero.
    pub value: Option<f64>,
    /// `limit − value`.
    pub gap: Option<f64>,
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub polynomial: String,
    pub xi: Vec<String>,
    /// Admissible ℓ are the multiples of this step.
    pub ell_step: usize,
    pub x0: Option<Vec<f64>>,
    pub limit: Option<f64>,
    pub rows: Vec<LemmaRow>,
    /// Every tested coefficient vanished.
    pub empty: bool,
    /// Gaps never grow by more than `ln ℓ / (2ℓ)` between consecutive rows.
    pub monotone: bool,
}

impl LemmaReport {
    pub fn row(&self, ell: usize) -> Option<&LemmaRow> {
        self.rows.iter().find(|r| r.ell == ell)
    }

    pub fn last_gap(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.gap)
    }
}

/// Smallest `L` with `ξ_r L` integral for every r.
fn ell_step(xi: &[BigRational]) -> Result<usize> {
    let mut l = BigInt::one();
    for v in xi {
        l = l.lcm(v.denom());
    }
    l.to_usize()
        .ok_or_else(|| Error::domain("denominators of xi are too large"))
}

/// Checks the asymptotics at admissible ℓ. With `ells = None` every
/// admissible ℓ up to `ell_max` is tested; otherwise only the listed ones
/// (each must be admissible and at most `ell_max`).
pub fn verify_lemma_asymptotics(
    r: &SparsePoly,
    xi: &[BigRational],
    ell_max: usize,
    ells: Option<&[usize]>,
) -> Result<LemmaReport> {
    let m = r.nvars();
    if xi.len() != m {
        return Err(Error::Dimension {
            expected: m,
            got: xi.len(),
        });
    }
    if r.is_zero() || !r.has_nonnegative_coefficients() {
        return Err(Error::domain(
            "R must be nonzero with nonnegative coefficients",
        ));
    }
    if xi.iter().any(|v| !v.is_positive()) {
        return Err(Error::domain("every xi_r must be positive"));
    }
    let step = ell_step(xi)?;
    let targets: Vec<usize> = match ells {
        Some(list) => {
            if let Some(bad) = list
                .iter()
                .find(|&&l| l == 0 || l % step != 0 || l > ell_max)
            {
                return Err(Error::domain(format!(
                    "ell = {bad} is not an admissible length (multiple of {step}, at most {ell_max})"
                )));
            }
            let mut v = list.to_vec();
            v.sort_unstable();
            v.dedup();
            v
        }
        None => (1..=ell_max / step).map(|i| i * step).collect(),
    };

    // Coefficients with exponent above ξ·ℓ_max never feed the tested ones.
    let bound: Vec<u32> = xi
        .iter()
        .map(|v| {
            (v * BigRational::from_integer(BigInt::from(ell_max)))
                .floor()
                .to_integer()
                .to_u32()
                .unwrap_or(u32::MAX)
        })
        .collect();
    let r_trunc = r.truncate(&bound)?;

    let xi_f: Vec<f64> = xi.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
    let model = PositivePoly::new(r)?;
    let y0 = saddle_point(&model, &xi_f, &vec![0.0; m], SaddleOptions::default()).ok();
    let limit = y0
        .as_ref()
        .map(|y| model.log_value(y) - xi_f.iter().zip(y).map(|(a, b)| a * b).sum::<f64>());

    let mut rows = Vec::with_capacity(targets.len());
    let mut power = SparsePoly::one(m);
    let mut done = 0usize;
    for &ell in &targets {
        while done < ell {
            power = power.try_mul(&r_trunc)?.truncate(&bound)?;
            done += 1;
        }
        let exponent: Vec<u32> = xi
            .iter()
            .map(|v| {
                (v * BigRational::from_integer(BigInt::from(ell)))
                    .to_integer()
                    .to_u32()
                    .unwrap_or(u32::MAX)
            })
            .collect();
        let c = power.coeff(&exponent)?;
        let value = (!c.is_zero()).then(|| ln_bigint(&c) / ell as f64);
        let gap = match (limit, value) {
            (Some(l), Some(v)) => Some(l - v),
            _ => None,
        };
        rows.push(LemmaRow {
            ell,
            coefficient: c.to_string(),
            value,
            gap,
            empty: c.is_zero(),
        });
    }

    let gaps: Vec<(usize, f64)> = rows
        .iter()
        .filter_map(|r| r.gap.map(|g| (r.ell, g)))
        .collect();
    let monotone = gaps
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 + (w[0].0 as f64).ln() / (2.0 * w[0].0 as f64));
    let empty = rows.iter().all(|r| r.empty);
    Ok(LemmaReport {
        polynomial: r.to_string(),
        xi: xi.iter().map(|v| v.to_string()).collect(),
        ell_step: step,
        x0: y0.map(|y| y.iter().map(|v| v.exp()).collect()),
        limit,
        rows,
        empty,
        monotone,
    })
}
