//! Log-coordinate view of a positive polynomial `R(x) = Σ c_u x^u`.
//!
//! With `x = exp(y)`, `ln R` is a log-sum-exp, its gradient is the mean of
//! the exponent vector under the tilted weights `c_u x^u / R(x)`, and its
//! Hessian is the covariance. The saddle-point equations
//! `x_r ∂R/∂x_r = ξ_r R` are the stationarity conditions of the convex
//! function `ln R(e^y) − ξ·y`, which [`saddle_point`] minimizes by damped Newton.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::polynomial::{ln_bigint, SparsePoly};
use crate::pwef::{ClosedFormPwef, SignedLogValue};

/// Log-coordinate evaluation of a polynomial with a positive value on the
/// positive orthant.
pub trait TiltedModel {
    fn dim(&self) -> usize;

    /// `ln R(e^y)`.
    fn log_value(&self, y: &[f64]) -> f64;

    /// `x_r ∂R/∂x_r / R` at `x = e^y`.
    fn mean(&self, y: &[f64]) -> Vec<f64>;

    /// `ln R(e^{y_new}) − ln R(e^{y_ref})`.
    fn log_ratio(&self, y_new: &[f64], y_ref: &[f64]) -> f64 {
        self.log_value(y_new) - self.log_value(y_ref)
    }

    /// Jacobian of [`mean`](Self::mean) with respect to `y`. The default uses
    /// central differences.
    fn covariance(&self, y: &[f64]) -> DMatrix<f64> {
        let m = self.dim();
        let mut cov = DMatrix::zeros(m, m);
        let mut yp = y.to_vec();
        for s in 0..m {
            let h = 1e-6 * (1.0 + y[s].abs());
            yp[s] = y[s] + h;
            let up = self.mean(&yp);
            yp[s] = y[s] - h;
            let dn = self.mean(&yp);
            yp[s] = y[s];
            for r in 0..m {
                cov[(r, s)] = (up[r] - dn[r]) / (2.0 * h);
            }
        }
        // Symmetrize away the finite-difference noise.
        (&cov + cov.transpose()) * 0.5
    }
}

/// A polynomial with nonnegative coefficients in log-sum-exp form.
#[derive(Debug, Clone)]
pub struct PositivePoly {
    dim: usize,
    /// Row-major `terms × dim` exponent table.
    exponents: Vec<f64>,
    log_coeffs: Vec<f64>,
}

impl PositivePoly {
    pub fn new(p: &SparsePoly) -> Result<Self> {
        if p.is_zero() {
            return Err(Error::domain("polynomial is identically zero"));
        }
        if !p.has_nonnegative_coefficients() {
            return Err(Error::domain("polynomial has a negative coefficient"));
        }
        let dim = p.nvars();
        let mut exponents = Vec::with_capacity(p.len() * dim);
        let mut log_coeffs = Vec::with_capacity(p.len());
        for (e, c) in p.terms() {
            exponents.extend(e.iter().map(|&a| a as f64));
            log_coeffs.push(ln_bigint(c));
        }
        Ok(PositivePoly {
            dim,
            exponents,
            log_coeffs,
        })
    }

    pub fn num_terms(&self) -> usize {
        self.log_coeffs.len()
    }

    fn exps(&self, i: usize) -> &[f64] {
        &self.exponents[i * self.dim..(i + 1) * self.dim]
    }

    /// Log-weights `ln c_u + u·y` and their maximum.
    fn log_weights(&self, y: &[f64]) -> (Vec<f64>, f64) {
        let mut max = f64::NEG_INFINITY;
        let w: Vec<f64> = (0..self.num_terms())
            .map(|i| {
                let a = self.log_coeffs[i]
                    + self.exps(i).iter().zip(y).map(|(e, v)| e * v).sum::<f64>();
                max = max.max(a);
                a
            })
            .collect();
        (w, max)
    }

    /// `(ln R, mean, covariance)` in one pass.
    pub fn moments(&self, y: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
        let (w, max) = self.log_weights(y);
        let mut z = 0.0;
        let mut mean = vec![0.0; self.dim];
        let mut second = DMatrix::<f64>::zeros(self.dim, self.dim);
        for (i, a) in w.iter().enumerate() {
            let p = (a - max).exp();
            z += p;
            let e = self.exps(i);
            for r in 0..self.dim {
                mean[r] += p * e[r];
                for s in 0..=r {
                    second[(r, s)] += p * e[r] * e[s];
                }
            }
        }
        for v in mean.iter_mut() {
            *v /= z;
        }
        let mut cov = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for s in 0..=r {
                let c = second[(r, s)] / z - mean[r] * mean[s];
                cov[(r, s)] = c;
                cov[(s, r)] = c;
            }
        }
        (max + z.ln(), mean, cov)
    }
}

impl TiltedModel for PositivePoly {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_value(&self, y: &[f64]) -> f64 {
        let (w, max) = self.log_weights(y);
        // Leave the largest term out of the sum so ln_1p keeps full precision
        // when it dominates.
        let top = w.iter().position(|&a| a == max).unwrap_or(0);
        let rest: f64 = w
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != top)
            .map(|(_, a)| (a - max).exp())
            .sum();
        max + rest.ln_1p()
    }

    /// Computed as `ln(1 + E_p[expm1(u·(y_new − y_ref))])` under the tilted
    /// distribution at `y_ref`, which avoids cancelling two nearly equal logs.
    fn log_ratio(&self, y_new: &[f64], y_ref: &[f64]) -> f64 {
        let (w, max) = self.log_weights(y_ref);
        let delta: Vec<f64> = y_new.iter().zip(y_ref).map(|(a, b)| a - b).collect();
        let mut z = 0.0;
        let mut acc = 0.0;
        for (i, a) in w.iter().enumerate() {
            let p = (a - max).exp();
            z += p;
            acc += p * self
                .exps(i)
                .iter()
                .zip(&delta)
                .map(|(e, d)| e * d)
                .sum::<f64>()
                .exp_m1();
        }
        (acc / z).ln_1p()
    }

    fn mean(&self, y: &[f64]) -> Vec<f64> {
        let (w, max) = self.log_weights(y);
        let mut z = 0.0;
        let mut mean = vec![0.0; self.dim];
        for (i, a) in w.iter().enumerate() {
            let p = (a - max).exp();
            z += p;
            for (m, e) in mean.iter_mut().zip(self.exps(i)) {
                *m += p * e;
            }
        }
        mean.iter().map(|m| m / z).collect()
    }

    fn covariance(&self, y: &[f64]) -> DMatrix<f64> {
        self.moments(y).2
    }
}

impl TiltedModel for ClosedFormPwef {
    fn dim(&self) -> usize {
        self.spec().m
    }

    fn log_value(&self, y: &[f64]) -> f64 {
        let x: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        match self.eval_b(&x) {
            Ok(SignedLogValue {
                sign: 1,
                log_magnitude,
            }) => log_magnitude,
            _ => f64::NAN,
        }
    }

    fn mean(&self, y: &[f64]) -> Vec<f64> {
        let x: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        let b = match self.eval_b(&x) {
            Ok(v) if v.sign == 1 => v.log_magnitude,
            _ => return vec![f64::NAN; y.len()],
        };
        (1..=y.len())
            .map(|r| match self.eval_db(&x, r) {
                Ok(d) => d.sign as f64 * (d.log_magnitude - b + y[r - 1]).exp(),
                Err(_) => f64::NAN,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SaddleOptions {
    /// Componentwise relative tolerance on `mean_r / ξ_r − 1`.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// `|y_r|` beyond this is taken as divergence (ξ outside the support).
    pub divergence: f64,
}

impl Default for SaddleOptions {
    fn default() -> Self {
        SaddleOptions {
            tol: 1e-11,
            max_iter: 200,
            max_halvings: 40,
            divergence: 700.0,
        }
    }
}

/// Maximum of `|mean_r / ξ_r − 1|`.
pub fn relative_mismatch(mean: &[f64], xi: &[f64]) -> f64 {
    mean.iter()
        .zip(xi)
        .map(|(m, x)| (m / x - 1.0).abs())
        .fold(0.0, f64::max)
}

fn grad_norm(mean: &[f64], xi: &[f64]) -> f64 {
    mean.iter()
        .zip(xi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Solves `mean(y) = ξ` for `y = ln x_0`, starting from `y0`.
pub fn saddle_point<T: TiltedModel + ?Sized>(
    model: &T,
    xi: &[f64],
    y0: &[f64],
    opts: SaddleOptions,
) -> Result<Vec<f64>> {
    let m = model.dim();
    if xi.len() != m || y0.len() != m {
        return Err(Error::Dimension {
            expected: m,
            got: xi.len().min(y0.len()),
        });
    }
    if xi.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::domain(
            "saddle-point targets must be strictly positive",
        ));
    }
    let objective =
        |y: &[f64]| model.log_value(y) - xi.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();

    let mut y = y0.to_vec();
    let mut phi = objective(&y);
    for _ in 0..opts.max_iter {
        let mean = model.mean(&y);
        if mean.iter().any(|v| !v.is_finite()) || !phi.is_finite() {
            return Err(Error::solver(
                "non-finite model value in saddle-point solve",
                y,
            ));
        }
        if relative_mismatch(&mean, xi) <= opts.tol {
            return Ok(y);
        }
        let grad = DVector::from_iterator(m, mean.iter().zip(xi).map(|(a, b)| a - b));
        let hess = model.covariance(&y);
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&(-&grad)),
            None => match hess.lu().solve(&(-&grad)) {
                Some(s) => s,
                None => {
                    return Err(Error::domain(
                        "target lies outside the support of the polynomial",
                    ))
                }
            },
        };
        let slope = grad.dot(&step);
        let dir = if slope < 0.0 { step } else { -grad.clone() };
        let slope = grad.dot(&dir);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = y.iter().zip(dir.iter()).map(|(a, d)| a + t * d).collect();
            let val = objective(&trial);
            // Near the root the decrease in the objective drops below its
            // rounding noise, so a smaller gradient also counts as progress.
            let armijo = val <= phi + 1e-4 * t * slope;
            let closer = val <= phi + 1e-12 * (1.0 + phi.abs())
                && grad_norm(&model.mean(&trial), xi) < 0.5 * grad_norm(&mean, xi);
            if val.is_finite() && (armijo || closer) {
                y = trial;
                phi = val;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // Numerically flat: accept if we are already close.
            if relative_mismatch(&mean, xi) <= opts.tol * 100.0 {
                return Ok(y);
            }
            return Err(Error::solver("line search failed in saddle-point solve", y));
        }
        if y.iter().any(|v| v.abs() > opts.divergence) {
            return Err(Error::domain(
                "saddle-point iterate diverged; target outside the support",
            ));
        }
    }
    Err(Error::solver("saddle-point solve did not converge", y))
}
