//! Damped Newton on the full stationarity system, with multi-start.
//!
//! Unknowns are `z = (y, t, λ)` with `y = ln x0` and
//! `q_r = e^{t_r} / (1 + Σ e^{t_s})`. The internal residual is
//!
//! ```text
//! ln mean_r(y) − ln k − ln q_r                          (r = 1..M)
//! (j−1) t_r − j y_r − λ (2 r S1 − α r²)                 (r = 1..M)
//! S1² / S2 − α
//! ```
//!
//! which has the same roots as the literal system but is better scaled.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{alpha_of_q, constraint_gradient, Problem, StationaryPoint};
use crate::error::{Error, Result};
use crate::tilted::TiltedModel;

/// `(ln q, q)` from the slack-softmax coordinates `t`.
fn softmax(t: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let top = t.iter().copied().fold(0.0f64, f64::max);
    let den = (-top).exp() + t.iter().map(|v| (v - top).exp()).sum::<f64>();
    let ln_den = den.ln();
    let lnq: Vec<f64> = t.iter().map(|v| v - top - ln_den).collect();
    let q = lnq.iter().map(|v| v.exp()).collect();
    (lnq, q)
}

fn to_logits(q: &[f64]) -> Vec<f64> {
    let slack = (1.0 - q.iter().sum::<f64>()).ln();
    q.iter().map(|v| v.ln() - slack).collect()
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(
        0.0,
        |a, b| if b.is_nan() { f64::NAN } else { a.max(b.abs()) },
    )
}

/// Damped Newton with a central-difference Jacobian and Armijo backtracking
/// on `½‖F‖²`. Returns the last accepted iterate.
fn newton<F>(
    residual: F,
    z0: Vec<f64>,
    max_iter: usize,
    max_halvings: usize,
    h: f64,
) -> Option<Vec<f64>>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = z0.len();
    let mut z = z0;
    let mut fz = residual(&z)?;
    let mut merit: f64 = fz.iter().map(|v| v * v).sum();
    for _ in 0..max_iter {
        if sup_norm(&fz) <= 1e-14 {
            break;
        }
        let mut jac = DMatrix::zeros(n, n);
        let mut zp = z.clone();
        for c in 0..n {
            zp[c] = z[c] + h;
            let up = residual(&zp)?;
            zp[c] = z[c] - h;
            let dn = residual(&zp)?;
            zp[c] = z[c];
            for r in 0..n {
                jac[(r, c)] = (up[r] - dn[r]) / (2.0 * h);
            }
        }
        let rhs = -DVector::from_column_slice(&fz);
        let step = jac.lu().solve(&rhs)?;
        if step.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..=max_halvings {
            let trial: Vec<f64> = z.iter().zip(step.iter()).map(|(a, d)| a + s * d).collect();
            if let Some(ft) = residual(&trial) {
                let mt: f64 = ft.iter().map(|v| v * v).sum();
                if mt.is_finite() && mt <= (1.0 - 1e-4 * s) * merit {
                    z = trial;
                    fz = ft;
                    merit = mt;
                    accepted = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Some(z)
}

impl Problem {
    fn full_residual(&self, z: &[f64], alpha: f64) -> Option<Vec<f64>> {
        let m = self.params.m;
        let j = self.params.j as f64;
        let ln_k = (self.params.k as f64).ln();
        let (y, rest) = z.split_at(m);
        let (t, lam) = rest.split_at(m);
        let lam = lam[0];
        if z.iter().any(|v| !v.is_finite()) || y.iter().any(|v| v.abs() > 700.0) {
            return None;
        }
        let (lnq, q) = softmax(t);
        if q.iter().any(|v| *v <= 0.0) {
            return None;
        }
        let mean = self.model.mean(y);
        if mean.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return None;
        }
        let grad_g = constraint_gradient(&q, alpha);
        let mut out: Vec<f64> = mean
            .iter()
            .zip(&lnq)
            .map(|(mr, lq)| mr.ln() - ln_k - lq)
            .collect();
        out.extend((0..m).map(|r| (j - 1.0) * t[r] - j * y[r] - lam * grad_g[r]));
        out.push(alpha_of_q(&q) - alpha);
        Some(out)
    }

    fn point_from(&self, z: &[f64], alpha: f64) -> Option<StationaryPoint> {
        let m = self.params.m;
        let (_, q) = softmax(&z[m..2 * m]);
        let y = &z[..m];
        let lambda = z[2 * m];
        let growth = self.growth_at(&q, y).ok()?;
        let residual = sup_norm(&self.residuals_at(&q, y, lambda, alpha));
        if !(growth.is_finite() && residual.is_finite()) {
            return None;
        }
        Some(StationaryPoint {
            alpha,
            q,
            x0: y.iter().map(|v| v.exp()).collect(),
            lambda,
            growth,
            residual,
        })
    }

    /// Least-squares multiplier for the Lagrange block at fixed `(q, y)`.
    fn lambda_fit(&self, q: &[f64], y: &[f64], alpha: f64) -> f64 {
        let j = self.params.j as f64;
        let t = to_logits(q);
        let b = constraint_gradient(q, alpha);
        let (num, den) = (0..q.len()).fold((0.0, 0.0), |(n, d), r| {
            let a = (j - 1.0) * t[r] - j * y[r];
            (n + a * b[r], d + b[r] * b[r])
        });
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// Initial iterate from a type `q` that already satisfies `g(q) = 0`.
    fn start_from_q(&self, q: &[f64], alpha: f64, y_hint: Option<&[f64]>) -> Option<Vec<f64>> {
        let y = self.solve_log_x0(q, y_hint).ok()?;
        let lambda = self.lambda_fit(q, &y, alpha);
        let mut z = y;
        z.extend(to_logits(q));
        z.push(lambda);
        Some(z)
    }

    /// Start types on `g = 0` at `alpha`: the uniform direction, flat and
    /// geometrically decaying directions dominated by each coordinate, then `multistart` seeded
    /// random directions.
    fn start_types(&self, alpha: f64) -> Vec<Vec<f64>> {
        let m = self.params.m;
        let onto = |d: &[f64]| -> Option<Vec<f64>> {
            let scale = alpha / alpha_of_q(d);
            let q: Vec<f64> = d.iter().map(|v| v * scale).collect();
            (q.iter().sum::<f64>() < 0.999).then_some(q)
        };
        let mut out = Vec::new();
        let mut structured = vec![vec![1.0; m]];
        if m > 1 {
            for r in 0..m {
                structured.push((0..m).map(|s| if s == r { 1.0 } else { 1e-3 }).collect());
                structured.push((0..m).map(|s| 1e-3f64.powi(s.abs_diff(r) as i32)).collect());
            }
        }
        out.extend(structured.iter().filter_map(|d| onto(d)));
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ (m as u64).rotate_left(32));
        let mut accepted = 0;
        let mut draws = 0;
        while accepted < self.config.multistart && draws < 64 * self.config.multistart.max(1) {
            draws += 1;
            let d: Vec<f64> = (0..m).map(|_| rng.gen_range(-9.0f64..3.0).exp()).collect();
            if let Some(q) = onto(&d) {
                out.push(q);
                accepted += 1;
            }
        }
        out
    }

    fn run_from(&self, z0: Vec<f64>, alpha: f64) -> Option<StationaryPoint> {
        let z = newton(
            |z| self.full_residual(z, alpha),
            z0,
            self.config.max_iter,
            self.config.max_halvings,
            self.config.fd_step,
        )?;
        self.point_from(&z, alpha)
            .filter(|p| p.residual <= self.config.tol_outer)
    }

    fn check_alpha(&self, alpha: f64) -> Result<()> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::domain(format!(
                "alpha must lie in (0, 1], got {alpha}"
            )));
        }
        Ok(())
    }

    /// Newton from a solution at a nearby `alpha`. The seed type is first
    /// rescaled onto the new constraint (α is homogeneous of degree one in
    /// q); if that leaves the simplex or fails, the seed is used as is.
    pub fn continue_from(&self, alpha: f64, seed: &StationaryPoint) -> Result<StationaryPoint> {
        self.check_alpha(alpha)?;
        let fail = || Error::solver("continuation step did not converge", seed.q.clone());
        if seed.q.len() != self.params.m || seed.x0.len() != self.params.m {
            return Err(fail());
        }
        let start = |q: &[f64]| {
            let mut z: Vec<f64> = seed.x0.iter().map(|v| v.ln()).collect();
            z.extend(to_logits(q));
            z.push(seed.lambda);
            z
        };
        let scale = alpha / seed.alpha;
        let scaled: Vec<f64> = seed.q.iter().map(|v| v * scale).collect();
        if scaled.iter().sum::<f64>() < 1.0 {
            if let Some(p) = self.run_from(start(&scaled), alpha) {
                return Ok(p);
            }
        }
        self.run_from(start(&seed.q), alpha).ok_or_else(fail)
    }

    /// Every distinct converged stationary point, best `G` first.
    pub fn solve_full_all(
        &self,
        alpha: f64,
        seed: Option<&StationaryPoint>,
    ) -> Result<Vec<StationaryPoint>> {
        self.check_alpha(alpha)?;
        let mut found: Vec<StationaryPoint> = Vec::new();
        if let Some(s) = seed {
            if let Ok(p) = self.continue_from(alpha, s) {
                found.push(p);
            }
        }
        let starts = self.start_types(alpha);
        for q in &starts {
            if let Some(p) = self
                .start_from_q(q, alpha, None)
                .and_then(|z| self.run_from(z, alpha))
            {
                found.push(p);
            }
        }
        if found.is_empty() {
            return Err(Error::solver(
                format!("no start converged at alpha = {alpha}"),
                starts.concat(),
            ));
        }
        found.sort_by(|a, b| b.growth.total_cmp(&a.growth));
        let mut distinct: Vec<StationaryPoint> = Vec::new();
        for p in found {
            let dup = distinct.iter().any(|d| {
                (d.growth - p.growth).abs() <= 1e-10 * d.growth.abs().max(1.0)
                    && d.q
                        .iter()
                        .zip(&p.q)
                        .all(|(a, b)| (a - b).abs() <= 1e-7 * a.abs().max(1e-12).max(b.abs()))
            });
            if !dup {
                distinct.push(p);
            }
        }
        Ok(distinct)
    }

    /// Stationary point with the largest `G` among all converged starts.
    pub fn solve_full(
        &self,
        alpha: f64,
        seed: Option<&StationaryPoint>,
    ) -> Result<StationaryPoint> {
        Ok(self.solve_full_all(alpha, seed)?.swap_remove(0))
    }

    /// Solves the system at `alpha`, using the closed form for M = 1.
    pub fn solve(&self, alpha: f64, seed: Option<&StationaryPoint>) -> Result<StationaryPoint> {
        if self.params.m == 1 {
            let mut p = super::solve_m1(&self.params, alpha)?;
            p.residual = self.max_residual(&p);
            return Ok(p);
        }
        self.solve_full(alpha, seed)
    }

    /// Maximizer of `f` without the weight constraint. There `λ = 0` and
    /// `t = j y / (j−1)`, so only the M inner equations remain.
    pub fn unconstrained_max(&self) -> Result<StationaryPoint> {
        let m = self.params.m;
        let j = self.params.j as f64;
        let ln_k = (self.params.k as f64).ln();
        let residual = |y: &[f64]| -> Option<Vec<f64>> {
            if y.iter().any(|v| !v.is_finite() || v.abs() > 700.0) {
                return None;
            }
            let t: Vec<f64> = y.iter().map(|v| j * v / (j - 1.0)).collect();
            let (lnq, _) = softmax(&t);
            let mean = self.model.mean(y);
            if mean.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return None;
            }
            Some(
                mean.iter()
                    .zip(&lnq)
                    .map(|(mr, lq)| mr.ln() - ln_k - lq)
                    .collect(),
            )
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(m as u64));
        let mut starts = vec![vec![0.0; m]];
        for _ in 0..self.config.multistart {
            starts.push((0..m).map(|_| rng.gen_range(-6.0..1.0)).collect());
        }
        let mut best: Option<StationaryPoint> = None;
        for y0 in starts {
            let Some(y) = newton(
                residual,
                y0,
                self.config.max_iter,
                self.config.max_halvings,
                self.config.fd_step,
            ) else {
                continue;
            };
            let t: Vec<f64> = y.iter().map(|v| j * v / (j - 1.0)).collect();
            let (_, q) = softmax(&t);
            let alpha = alpha_of_q(&q);
            let Ok(growth) = self.growth_at(&q, &y) else {
                continue;
            };
            let res = sup_norm(&self.residuals_at(&q, &y, 0.0, alpha));
            if !(res <= self.config.tol_outer) {
                continue;
            }
            if best.as_ref().is_none_or(|b| growth > b.growth) {
                best = Some(StationaryPoint {
                    alpha,
                    q,
                    x0: y.iter().map(|v| v.exp()).collect(),
                    lambda: 0.0,
                    growth,
                    residual: res,
                });
            }
        }
        best.ok_or_else(|| Error::solver("unconstrained maximization did not converge", Vec::new()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_m1, EnsembleParams, SolverConfig};

    fn problem(j: u32, k: u64, m: usize) -> Problem {
        Problem::new(
            EnsembleParams::new(j, k, m).unwrap(),
            SolverConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn softmax_round_trip() {
        let q = [0.2, 0.05, 0.3];
        let (lnq, back) = softmax(&to_logits(&q));
        for r in 0..3 {
            assert!((back[r] - q[r]).abs() < 1e-15);
            assert!((lnq[r] - q[r].ln()).abs() < 1e-13);
        }
        let (_, q) = softmax(&[800.0, -5.0]);
        assert!(q[0] <= 1.0 && q.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn full_system_reproduces_m1_closed_form() {
        let p = problem(3, 6, 1);
        for alpha in [0.02, 0.1, 0.4, 0.7] {
            let full = p.solve_full(alpha, None).unwrap();
            let closed = solve_m1(&p.params(), alpha).unwrap();
            assert!((full.growth - closed.growth).abs() < 1e-9);
            assert!((full.lambda - closed.lambda).abs() < 1e-6 * closed.lambda.abs().max(1.0));
        }
    }

    #[test]
    fn solutions_satisfy_constraint_and_residual() {
        for m in 2..=3 {
            let p = problem(3, 6, m);
            for alpha in [0.05, 0.2, 0.6] {
                let pt = p.solve_full(alpha, None).unwrap();
                assert!(pt.residual <= 1e-9, "m={m} a={alpha} res={}", pt.residual);
                assert!((alpha_of_q(&pt.q) - alpha).abs() < 1e-10);
                assert!(p.lagrange_check(&pt).unwrap() <= 1e-5);
            }
        }
    }

    #[test]
    fn continuation_tracks_solution() {
        let p = problem(4, 8, 2);
        let a = p.solve_full(0.3, None).unwrap();
        let b = p.continue_from(0.31, &a).unwrap();
        assert!(b.residual <= 1e-9);
        assert!((b.alpha - 0.31).abs() < 1e-15);
    }

    #[test]
    fn unconstrained_max_for_m1_is_half() {
        let p = problem(3, 6, 1);
        let u = p.unconstrained_max().unwrap();
        assert!((u.q[0] - 0.5).abs() < 1e-9);
        assert!((u.growth - 0.5 * 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn unconstrained_max_dominates_constrained() {
        let p = problem(3, 6, 2);
        let u = p.unconstrained_max().unwrap();
        for alpha in [0.1, 0.3, 0.6] {
            let pt = p.solve_full(alpha, None).unwrap();
            assert!(pt.growth <= u.growth + 1e-9);
        }
        let at = p.solve_full(u.alpha, None).unwrap();
        assert!((at.growth - u.growth).abs() < 1e-7);
    }

    #[test]
    fn bad_alpha_is_domain_error() {
        let p = problem(3, 6, 2);
        assert!(matches!(p.solve_full(0.0, None), Err(Error::Domain(_))));
        assert!(matches!(p.solve_full(1.5, None), Err(Error::Domain(_))));
    }
}
