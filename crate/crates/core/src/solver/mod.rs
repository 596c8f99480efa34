//! Stationarity system for the growth rate of degree-M pseudocodewords.
//!
//! For a normalized type `q` the inner system `x_r ∂B/∂x_r = k q_r B` fixes
//! `x0(q)`, and
//!
//! ```text
//! f(q) = (j/k) ln B(x0) − j Σ q_r ln x0_r − (j−1) h(q)
//! ```
//!
//! is maximized on `g(q) = (Σ r q_r)² − α Σ r² q_r = 0`. [`Problem::solve_full`]
//! solves the 2M+1 equations in `(ln x0, t, λ)` where
//! `t_r = ln(q_r / (1 − Σ q))`, which keeps `q > 0` and `Σ q < 1` structural.

mod full;
mod m1;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pwef::{build_b, ClosedFormPwef, PwefSpec};
use crate::tilted::{saddle_point, PositivePoly, SaddleOptions, TiltedModel};

pub use m1::solve_m1;

/// `(j, k, M)`: variable degree, check degree, cover degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct EnsembleParams {
    pub j: u32,
    pub k: u64,
    pub m: usize,
}

impl EnsembleParams {
    pub fn new(j: u32, k: u64, m: usize) -> Result<Self> {
        if j < 2 {
            return Err(Error::domain(format!(
                "variable degree j must be >= 2, got {j}"
            )));
        }
        if k <= j as u64 {
            return Err(Error::domain(format!(
                "check degree k must exceed j (design rate below one), got j={j} k={k}"
            )));
        }
        PwefSpec::new(m, k)?;
        Ok(EnsembleParams { j, k, m })
    }

    pub fn pwef_spec(&self) -> PwefSpec {
        PwefSpec {
            m: self.m,
            k: self.k,
        }
    }

    pub fn with_m(&self, m: usize) -> Result<Self> {
        Self::new(self.j, self.k, m)
    }
}

/// How `B^{(M)}` is evaluated inside the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Evaluation {
    /// Expanded when the expansion is small, closed form otherwise.
    #[default]
    Auto,
    /// Exact expansion, evaluated as a sum of positive terms.
    Expanded,
    /// Signed-log closed form; never expands the k-th powers.
    ClosedForm,
}

/// Largest expansion (terms of `P^k`) used by [`Evaluation::Auto`].
pub const AUTO_EXPANSION_TERMS: u128 = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub tol_inner: f64,
    pub tol_outer: f64,
    pub tol_threshold: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Central-difference step for the Jacobian of the full system.
    pub fd_step: f64,
    pub multistart: usize,
    pub seed: u64,
    pub evaluation: Evaluation,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_inner: 1e-11,
            tol_outer: 1e-9,
            tol_threshold: 1e-7,
            max_iter: 60,
            max_halvings: 12,
            fd_step: 1e-6,
            multistart: 8,
            seed: 0x5eed_2009,
            evaluation: Evaluation::Auto,
        }
    }
}

/// One solved point of the stationarity system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryPoint {
    pub alpha: f64,
    pub q: Vec<f64>,
    pub x0: Vec<f64>,
    pub lambda: f64,
    /// Growth rate in nats.
    #[serde(rename = "G")]
    pub growth: f64,
    pub residual: f64,
}

/// `−Σ q_r ln q_r − (1 − Σq) ln(1 − Σq)`, with `0 ln 0 = 0`.
pub fn entropy_h(q: &[f64]) -> Result<f64> {
    if q.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::domain("entropy arguments must be nonnegative"));
    }
    let total: f64 = q.iter().sum();
    if total > 1.0 {
        return Err(Error::domain(format!(
            "entropy arguments sum to {total} > 1"
        )));
    }
    let xlogx = |v: f64| if v > 0.0 { v * v.ln() } else { 0.0 };
    Ok(-q.iter().map(|&v| xlogx(v)).sum::<f64>() - xlogx(1.0 - total))
}

/// Normalized AWGN-pseudoweight of a type: `(Σ r q_r)² / Σ r² q_r`.
pub fn alpha_of_q(q: &[f64]) -> f64 {
    let (s1, s2) = moments(q);
    s1 * s1 / s2
}

/// `g(q) = (Σ r q_r)² − α Σ r² q_r`.
pub fn constraint_g(q: &[f64], alpha: f64) -> f64 {
    let (s1, s2) = moments(q);
    s1 * s1 - alpha * s2
}

/// `∂g/∂q_r = 2 r Σ s q_s − α r²`.
pub fn constraint_gradient(q: &[f64], alpha: f64) -> Vec<f64> {
    let (s1, _) = moments(q);
    (1..=q.len())
        .map(|r| {
            let r = r as f64;
            2.0 * r * s1 - alpha * r * r
        })
        .collect()
}

fn moments(q: &[f64]) -> (f64, f64) {
    q.iter().enumerate().fold((0.0, 0.0), |(a, b), (i, &v)| {
        let r = (i + 1) as f64;
        (a + r * v, b + r * r * v)
    })
}

/// Evaluator behind a [`Problem`].
#[derive(Debug, Clone)]
pub enum PwefModel {
    Expanded(PositivePoly),
    ClosedForm(ClosedFormPwef),
}

impl PwefModel {
    pub fn new(spec: PwefSpec, evaluation: Evaluation) -> Result<Self> {
        let expand = match evaluation {
            Evaluation::Expanded => true,
            Evaluation::ClosedForm => false,
            Evaluation::Auto => expansion_terms(spec) <= AUTO_EXPANSION_TERMS,
        };
        if expand {
            Ok(PwefModel::Expanded(PositivePoly::new(&build_b(spec)?)?))
        } else {
            Ok(PwefModel::ClosedForm(ClosedFormPwef::new(spec)))
        }
    }

    pub fn is_expanded(&self) -> bool {
        matches!(self, PwefModel::Expanded(_))
    }
}

/// Number of monomials of total degree at most k in M variables.
fn expansion_terms(spec: PwefSpec) -> u128 {
    let mut acc: u128 = 1;
    for i in 1..=spec.m as u128 {
        acc = acc.saturating_mul(spec.k as u128 + i) / i;
    }
    acc
}

impl TiltedModel for PwefModel {
    fn dim(&self) -> usize {
        match self {
            PwefModel::Expanded(p) => p.dim(),
            PwefModel::ClosedForm(c) => c.dim(),
        }
    }

    fn log_value(&self, y: &[f64]) -> f64 {
        match self {
            PwefModel::Expanded(p) => p.log_value(y),
            PwefModel::ClosedForm(c) => c.log_value(y),
        }
    }

    fn log_ratio(&self, y_new: &[f64], y_ref: &[f64]) -> f64 {
        match self {
            PwefModel::Expanded(p) => p.log_ratio(y_new, y_ref),
            PwefModel::ClosedForm(c) => c.log_ratio(y_new, y_ref),
        }
    }

    fn mean(&self, y: &[f64]) -> Vec<f64> {
        match self {
            PwefModel::Expanded(p) => p.mean(y),
            PwefModel::ClosedForm(c) => c.mean(y),
        }
    }

    fn covariance(&self, y: &[f64]) -> DMatrix<f64> {
        match self {
            PwefModel::Expanded(p) => p.covariance(y),
            PwefModel::ClosedForm(c) => c.covariance(y),
        }
    }
}

/// An ensemble together with its solver configuration and a ready evaluator.
#[derive(Debug, Clone)]
pub struct Problem {
    params: EnsembleParams,
    config: SolverConfig,
    model: PwefModel,
}

impl Problem {
    pub fn new(params: EnsembleParams, config: SolverConfig) -> Result<Self> {
        let model = PwefModel::new(params.pwef_spec(), config.evaluation)?;
        Ok(Problem {
            params,
            config,
            model,
        })
    }

    pub fn params(&self) -> EnsembleParams {
        self.params
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn model(&self) -> &PwefModel {
        &self.model
    }

    fn check_q(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.params.m {
            return Err(Error::Dimension {
                expected: self.params.m,
                got: q.len(),
            });
        }
        if q.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::domain("every q_r must be strictly positive"));
        }
        let total: f64 = q.iter().sum();
        if total >= 1.0 {
            return Err(Error::domain(format!(
                "q must satisfy sum < 1, got {total}"
            )));
        }
        Ok(())
    }

    pub(crate) fn saddle_options(&self) -> SaddleOptions {
        SaddleOptions {
            tol: self.config.tol_inner,
            ..SaddleOptions::default()
        }
    }

    /// `ln x0(q)`, optionally warm-started.
    pub fn solve_log_x0(&self, q: &[f64], start: Option<&[f64]>) -> Result<Vec<f64>> {
        self.check_q(q)?;
        let k = self.params.k as f64;
        let xi: Vec<f64> = q.iter().map(|v| k * v).collect();
        let zeros = vec![0.0; q.len()];
        let opts = self.saddle_options();
        if let Some(s) = start {
            if let Ok(y) = saddle_point(&self.model, &xi, s, opts) {
                return Ok(y);
            }
        }
        saddle_point(&self.model, &xi, &zeros, opts)
    }

    /// The unique positive solution of `x_r ∂B/∂x_r = k q_r B`.
    pub fn solve_x0(&self, q: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .solve_log_x0(q, None)?
            .iter()
            .map(|v| v.exp())
            .collect())
    }

    /// `f(q)` given `ln x0`.
    pub fn growth_at(&self, q: &[f64], log_x0: &[f64]) -> Result<f64> {
        let j = self.params.j as f64;
        let k = self.params.k as f64;
        let cross: f64 = q.iter().zip(log_x0).map(|(a, b)| a * b).sum();
        Ok((j / k) * self.model.log_value(log_x0) - j * cross - (j - 1.0) * entropy_h(q)?)
    }

    pub fn f_of_q(&self, q: &[f64]) -> Result<f64> {
        let y = self.solve_log_x0(q, None)?;
        self.growth_at(q, &y)
    }

    /// Envelope gradient `∂f/∂q_r = (j−1) ln(q_r/(1−Σq)) − j ln x0_r`.
    pub fn gradient_f(&self, q: &[f64]) -> Result<Vec<f64>> {
        let y = self.solve_log_x0(q, None)?;
        let j = self.params.j as f64;
        let slack = (1.0 - q.iter().sum::<f64>()).ln();
        Ok(q.iter()
            .zip(&y)
            .map(|(qr, yr)| (j - 1.0) * (qr.ln() - slack) - j * yr)
            .collect())
    }

    /// `growth_at(q_new, y_new) − growth_at(q, y)`, evaluated term by term
    /// so that nearby arguments do not lose precision to cancellation.
    pub fn growth_difference(&self, q_new: &[f64], y_new: &[f64], q: &[f64], y: &[f64]) -> f64 {
        let j = self.params.j as f64;
        let k = self.params.k as f64;
        // (a + d) ln(a + d) − a ln a
        let dxlogx = |a: f64, d: f64| {
            let a_new = a + d;
            if a == 0.0 {
                return if a_new > 0.0 { a_new * a_new.ln() } else { 0.0 };
            }
            d * a_new.ln() + a * (d / a).ln_1p()
        };
        let mut cross = 0.0;
        let mut ent = 0.0;
        let mut dsum = 0.0;
        for r in 0..q.len() {
            let d = q_new[r] - q[r];
            cross += q[r] * (y_new[r] - y[r]) + d * y_new[r];
            ent += dxlogx(q[r], d);
            dsum += d;
        }
        let slack = 1.0 - q.iter().sum::<f64>();
        ent += dxlogx(slack, -dsum);
        (j / k) * self.model.log_ratio(y_new, y) - j * cross + (j - 1.0) * ent
    }

    /// Finite-difference gradient of [`f_of_q`](Self::f_of_q): central
    /// differences at `h` and `h/2` combined by Richardson extrapolation,
    /// with `h` a thousandth of the distance from `q_r` to the simplex
    /// boundary. Differences of `f` are formed term by term.
    pub fn gradient_f_fd(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.check_q(q)?;
        let y = self.solve_log_x0(q, None)?;
        let slack = 1.0 - q.iter().sum::<f64>();
        let mut grad = Vec::with_capacity(q.len());
        let mut qp = q.to_vec();
        let central = |r: usize, h: f64, qp: &mut Vec<f64>| -> Result<f64> {
            qp[r] = q[r] + h;
            let up = self.growth_difference(qp, &self.solve_log_x0(qp, Some(&y))?, q, &y);
            let h_up = qp[r] - q[r];
            qp[r] = q[r] - h;
            let dn = self.growth_difference(qp, &self.solve_log_x0(qp, Some(&y))?, q, &y);
            let h_dn = q[r] - qp[r];
            qp[r] = q[r];
            Ok((up - dn) / (h_up + h_dn))
        };
        for r in 0..q.len() {
            let h = 1e-3 * q[r].min(slack);
            let coarse = central(r, h, &mut qp)?;
            let fine = central(r, 0.5 * h, &mut qp)?;
            grad.push((4.0 * fine - coarse) / 3.0);
        }
        Ok(grad)
    }

    /// Literal residuals of the 2M+1 equations at `point`: the inner
    /// equations divided by `B(x0)`, the Lagrange conditions, and `g(q)`.
    pub fn residuals(&self, point: &StationaryPoint) -> Vec<f64> {
        let y: Vec<f64> = point.x0.iter().map(|v| v.ln()).collect();
        self.residuals_at(&point.q, &y, point.lambda, point.alpha)
    }

    pub(crate) fn residuals_at(&self, q: &[f64], y: &[f64], lambda: f64, alpha: f64) -> Vec<f64> {
        let j = self.params.j as f64;
        let k = self.params.k as f64;
        let mean = self.model.mean(y);
        let slack = (1.0 - q.iter().sum::<f64>()).ln();
        let grad_g = constraint_gradient(q, alpha);
        let mut out: Vec<f64> = mean.iter().zip(q).map(|(m, qr)| m - k * qr).collect();
        out.extend(
            q.iter()
                .zip(y)
                .zip(&grad_g)
                .map(|((qr, yr), gg)| (j - 1.0) * (qr.ln() - slack) - j * yr - lambda * gg),
        );
        out.push(constraint_g(q, alpha));
        out
    }

    /// Maximum absolute literal residual.
    pub fn max_residual(&self, point: &StationaryPoint) -> f64 {
        self.residuals(point).iter().fold(0.0, |acc, v| {
            if v.is_nan() {
                f64::NAN
            } else {
                acc.max(v.abs())
            }
        })
    }

    /// Relative mismatch of the Lagrange condition `∇f = λ ∇g`, with `∇f`
    /// from finite differences of `f`. Gradients below `1e-3` in sup norm
    /// are compared absolutely against that floor.
    pub fn lagrange_check(&self, point: &StationaryPoint) -> Result<f64> {
        let grad_f = self.gradient_f_fd(&point.q)?;
        let grad_g = constraint_gradient(&point.q, point.alpha);
        let sup = |v: &mut dyn Iterator<Item = f64>| v.fold(0.0f64, |a, b| a.max(b.abs()));
        let diff = sup(&mut grad_f
            .iter()
            .zip(&grad_g)
            .map(|(a, b)| a - point.lambda * b));
        let scale = sup(&mut grad_f.iter().copied())
            .max(sup(&mut grad_g.iter().map(|b| point.lambda * b)))
            .max(1e-3);
        Ok(diff / scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(j: u32, k: u64, m: usize) -> Problem {
        Problem::new(
            EnsembleParams::new(j, k, m).unwrap(),
            SolverConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(EnsembleParams::new(1, 6, 1).is_err());
        assert!(EnsembleParams::new(3, 3, 1).is_err());
        assert!(EnsembleParams::new(3, 6, 0).is_err());
        assert!(EnsembleParams::new(3, 6, 9).is_err());
        assert!(EnsembleParams::new(3, 6, 2).is_ok());
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy_h(&[0.0]).unwrap(), 0.0);
        assert_eq!(entropy_h(&[0.0, 0.0]).unwrap(), 0.0);
        assert!((entropy_h(&[0.5]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((entropy_h(&[1.0 / 3.0, 1.0 / 3.0]).unwrap() - 3f64.ln()).abs() < 1e-15);
        for m in 1..=6 {
            let q = vec![1.0 / (m as f64 + 1.0); m];
            assert!((entropy_h(&q).unwrap() - ((m + 1) as f64).ln()).abs() < 1e-14);
        }
        assert!(entropy_h(&[-0.1]).is_err());
        assert!(entropy_h(&[0.6, 0.5]).is_err());
    }

    #[test]
    fn alpha_and_constraint() {
        let q = [0.2, 0.1];
        let a = alpha_of_q(&q);
        assert!((a - 0.16 / 0.6).abs() < 1e-15);
        assert!(constraint_g(&q, a).abs() < 1e-15);
        // α is homogeneous of degree one
        assert!((alpha_of_q(&[0.1, 0.05]) - a / 2.0).abs() < 1e-15);
    }

    #[test]
    fn x0_at_half_is_one_for_m1() {
        let p = problem(3, 6, 1);
        let x0 = p.solve_x0(&[0.5]).unwrap();
        assert!((x0[0] - 1.0).abs() < 1e-12);
        let f = p.f_of_q(&[0.5]).unwrap();
        assert!((f - 0.5 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn x0_small_q_expansion() {
        // x0² ≈ q / (k−1) to leading order for M = 1.
        let p = problem(3, 6, 1);
        let mut prev = f64::INFINITY;
        for q in [1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
            let x = p.solve_x0(&[q]).unwrap()[0];
            assert!(x < prev);
            prev = x;
            let approx = (q / 5.0).sqrt();
            assert!(
                ((x - approx) / approx).abs() < 10.0 * q,
                "q={q} x={x} approx={approx}"
            );
        }
    }

    #[test]
    fn f_tends_to_zero_with_q() {
        for m in 1..=3 {
            let p = problem(3, 6, m);
            let q = vec![1e-7; m];
            assert!(p.f_of_q(&q).unwrap().abs() < 1e-4);
        }
    }

    #[test]
    fn inner_residual_is_tight() {
        for m in 1..=3 {
            let p = problem(4, 8, m);
            let q: Vec<f64> = (0..m).map(|r| 0.2 / (r as f64 + 1.0)).collect();
            let y = p.solve_log_x0(&q, None).unwrap();
            let mean = p.model().mean(&y);
            for (mr, qr) in mean.iter().zip(&q) {
                assert!((mr / (8.0 * qr) - 1.0).abs() <= 1e-11);
            }
        }
    }

    #[test]
    fn inner_solve_is_unique_across_starts() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let p = problem(3, 6, 3);
        let q = [0.15, 0.1, 0.05];
        let reference = p.solve_log_x0(&q, None).unwrap();
        for _ in 0..20 {
            let start: Vec<f64> = (0..3).map(|_| rng.gen_range(-4.0..3.0)).collect();
            let y = p.solve_log_x0(&q, Some(&start)).unwrap();
            for (a, b) in y.iter().zip(&reference) {
                assert!((a.exp() - b.exp()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn q_outside_domain_is_rejected() {
        let p = problem(3, 6, 2);
        assert!(matches!(p.solve_x0(&[0.6, 0.5]), Err(Error::Domain(_))));
        assert!(matches!(p.solve_x0(&[0.0, 0.5]), Err(Error::Domain(_))));
        assert!(matches!(p.solve_x0(&[0.1]), Err(Error::Dimension { .. })));
        // odd k: k q_1 = k − 1/2 sits outside the support hull
        let p = problem(3, 7, 1);
        assert!(matches!(p.solve_x0(&[6.5 / 7.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn envelope_gradient_matches_finite_differences() {
        for (j, k) in [(3, 6), (4, 8)] {
            for m in 1..=3 {
                let p = problem(j, k, m);
                let q: Vec<f64> = (0..m).map(|r| 0.12 / (r as f64 + 1.0).powi(2)).collect();
                let an = p.gradient_f(&q).unwrap();
                let fd = p.gradient_f_fd(&q).unwrap();
                for (a, b) in an.iter().zip(&fd) {
                    assert!(
                        (a - b).abs() <= 1e-6 * a.abs().max(1.0),
                        "j={j} k={k} m={m} {an:?} {fd:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn closed_form_and_expanded_evaluators_give_same_f() {
        let params = EnsembleParams::new(3, 12, 2).unwrap();
        let closed = Problem::new(
            params,
            SolverConfig {
                evaluation: Evaluation::ClosedForm,
                ..SolverConfig::default()
            },
        )
        .unwrap();
        let expanded = Problem::new(
            params,
            SolverConfig {
                evaluation: Evaluation::Expanded,
                ..SolverConfig::default()
            },
        )
        .unwrap();
        assert!(!closed.model().is_expanded());
        assert!(expanded.model().is_expanded());
        for q in [[0.2, 0.1], [0.05, 0.3], [0.3, 0.02]] {
            let a = closed.f_of_q(&q).unwrap();
            let b = expanded.f_of_q(&q).unwrap();
            assert!((a - b).abs() < 1e-10, "{q:?}: {a} vs {b}");
        }
    }

    #[test]
    fn auto_evaluation_switches_on_size() {
        assert!(problem(3, 6, 3).model().is_expanded());
        assert!(!problem(3, 1000, 3).model().is_expanded());
    }
}
