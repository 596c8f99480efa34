//! Growth-rate curves `G_M(α)` and thresholds `α*_M = inf{α > 0 : G_M(α) ≥ 0}`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::solver::{EnsembleParams, Problem, SolverConfig, StationaryPoint};

/// Points in the coarse threshold scan: `α_i = i / 201`, `i = 1..=200`.
pub const THRESHOLD_SCAN_POINTS: usize = 200;

/// Early exit of the threshold bisection: `|G| ≤ 1e-6` once the bracket is
/// this narrow.
const THRESHOLD_G_TOL: f64 = 1e-6;
const THRESHOLD_EARLY_WIDTH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Nats,
    Bits,
}

impl Units {
    pub fn convert(self, nats: f64) -> f64 {
        match self {
            Units::Nats => nats,
            Units::Bits => nats / std::f64::consts::LN_2,
        }
    }

    pub fn column(self) -> &'static str {
        match self {
            Units::Nats => "G_nats",
            Units::Bits => "G_bits",
        }
    }
}

/// One grid point of a curve; `point` is `None` when the solve failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub point: Option<StationaryPoint>,
    /// Failure reason; empty on success.
    pub failure: String,
}

impl CurvePoint {
    pub fn ok(&self) -> bool {
        self.point.is_some()
    }

    pub fn growth(&self) -> Option<f64> {
        self.point.as_ref().map(|p| p.growth)
    }

    fn from_result(alpha: f64, r: Result<StationaryPoint>) -> Self {
        match r {
            Ok(p) => CurvePoint {
                alpha,
                point: Some(p),
                failure: String::new(),
            },
            Err(e) => CurvePoint {
                alpha,
                point: None,
                failure: e.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveMetadata {
    pub config: SolverConfig,
    pub evaluator: &'static str,
    /// α of the unconstrained maximizer of `f`, when it was computed.
    pub alpha_hat: Option<f64>,
    pub failed_points: usize,
    /// Approximate α of sign changes after the first one on the grid.
    pub later_crossings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthCurve {
    pub params: EnsembleParams,
    pub points: Vec<CurvePoint>,
    pub alpha_star: Option<f64>,
    pub metadata: CurveMetadata,
}

impl GrowthCurve {
    pub fn failed(&self) -> usize {
        self.points.iter().filter(|p| !p.ok()).count()
    }

    /// Largest solved `G` on the grid.
    pub fn max_growth(&self) -> Option<&StationaryPoint> {
        self.points
            .iter()
            .filter_map(|p| p.point.as_ref())
            .max_by(|a, b| a.growth.total_cmp(&b.growth))
    }

    pub fn to_csv(&self, units: Units) -> String {
        let m = self.params.m;
        let mut out = String::from("alpha,");
        out.push_str(units.column());
        for r in 1..=m {
            let _ = write!(out, ",q_{r}");
        }
        for r in 1..=m {
            let _ = write!(out, ",x0_{r}");
        }
        out.push_str(",lambda,residual,status\n");
        for cp in &self.points {
            let _ = write!(out, "{}", fmt17(cp.alpha));
            match &cp.point {
                Some(p) => {
                    let _ = write!(out, ",{}", fmt17(units.convert(p.growth)));
                    for v in p.q.iter().chain(&p.x0) {
                        let _ = write!(out, ",{}", fmt17(*v));
                    }
                    let _ = writeln!(out, ",{},{},ok", fmt17(p.lambda), fmt17(p.residual));
                }
                None => {
                    for _ in 0..(2 * m + 3) {
                        out.push_str(",NaN");
                    }
                    out.push_str(",failed\n");
                }
            }
        }
        out
    }

    pub fn to_json(&self, units: Units) -> String {
        let rows: Vec<serde_json::Value> = self
            .points
            .iter()
            .map(|cp| match &cp.point {
                Some(p) => serde_json::json!({
                    "alpha": cp.alpha,
                    units.column(): units.convert(p.growth),
                    "q": p.q,
                    "x0": p.x0,
                    "lambda": p.lambda,
                    "residual": p.residual,
                    "status": "ok",
                }),
                None => serde_json::json!({
                    "alpha": cp.alpha,
                    "status": "failed",
                    "reason": cp.failure,
                }),
            })
            .collect();
        let doc = serde_json::json!({
            "params": self.params,
            "units": units,
            "alpha_star": self.alpha_star,
            "metadata": self.metadata,
            "points": rows,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("curve serializes");
        s.push('\n');
        s
    }
}

/// 17 significant digits.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "NaN".to_string()
    }
}

/// Ready-to-run gnuplot script plotting a CSV written by [`GrowthCurve::to_csv`].
pub fn gnuplot_script(csv_path: &str, params: &EnsembleParams, units: Units) -> String {
    format!(
        "set datafile separator ','\n\
         set key top left\n\
         set xlabel 'alpha'\n\
         set ylabel '{col}'\n\
         set title '({j},{k}) ensemble, M = {m}'\n\
         set grid\n\
         plot '{csv_path}' using 1:2 skip 1 with lines title 'G_{m}', 0 with lines dt 2 notitle\n",
        col = units.column(),
        j = params.j,
        k = params.k,
        m = params.m,
    )
}

/// `G_M(alpha)` with its stationary point.
pub fn growth_rate(problem: &Problem, alpha: f64) -> Result<StationaryPoint> {
    problem.solve(alpha, None)
}

/// Solves every α of `alphas` (increasing). For M ≥ 2 a serial continuation
/// pass from the unconstrained maximizer provides seeds, then every point is
/// re-solved with seed plus multi-start in parallel.
fn solve_grid(
    problem: &Problem,
    alphas: &[f64],
    exec: Execution,
) -> (Vec<CurvePoint>, Option<f64>) {
    if problem.params().m == 1 {
        let pts = exec.map(alphas, |&a| {
            CurvePoint::from_result(a, problem.solve(a, None))
        });
        return (pts, Some(0.5));
    }
    let hat = problem.unconstrained_max().ok();
    let alpha_hat = hat.as_ref().map(|h| h.alpha);
    let seeds = continuation_seeds(problem, alphas, alpha_hat);
    let idx: Vec<usize> = (0..alphas.len()).collect();
    let pts = exec.map(&idx, |&i| {
        CurvePoint::from_result(alphas[i], problem.solve_full(alphas[i], seeds[i].as_ref()))
    });
    (pts, alpha_hat)
}

fn continuation_seeds(
    problem: &Problem,
    alphas: &[f64],
    alpha_hat: Option<f64>,
) -> Vec<Option<StationaryPoint>> {
    let n = alphas.len();
    let mut seeds: Vec<Option<StationaryPoint>> = vec![None; n];
    if n == 0 {
        return seeds;
    }
    let target = alpha_hat.unwrap_or(alphas[n / 2]);
    let start = (0..n)
        .min_by(|&a, &b| {
            (alphas[a] - target)
                .abs()
                .total_cmp(&(alphas[b] - target).abs())
        })
        .unwrap_or(0);
    seeds[start] = problem.solve_full(alphas[start], None).ok();
    let step = |prev: &Option<StationaryPoint>, a: f64| -> Option<StationaryPoint> {
        match prev {
            Some(p) => problem.continue_from(a, p).ok(),
            None => None,
        }
    };
    for i in start + 1..n {
        seeds[i] = step(&seeds[i - 1], alphas[i]);
    }
    for i in (0..start).rev() {
        seeds[i] = step(&seeds[i + 1], alphas[i]);
    }
    seeds
}

/// Uniform grid with exact endpoints.
pub fn alpha_grid(alpha_min: f64, alpha_max: f64, steps: usize) -> Result<Vec<f64>> {
    if !(alpha_min > 0.0 && alpha_min < alpha_max && alpha_max <= 1.0) {
        return Err(Error::domain(format!(
            "alpha range must satisfy 0 < min < max <= 1, got {alpha_min}:{alpha_max}"
        )));
    }
    if steps < 2 {
        return Err(Error::domain(format!("steps must be >= 2, got {steps}")));
    }
    let h = (alpha_max - alpha_min) / (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| {
            if i == steps - 1 {
                alpha_max
            } else {
                alpha_min + i as f64 * h
            }
        })
        .collect())
}

/// Sign changes between consecutive solved grid points, as bracket indices.
fn sign_changes(points: &[CurvePoint]) -> Vec<usize> {
    points
        .windows(2)
        .enumerate()
        .filter_map(|(i, w)| match (w[0].growth(), w[1].growth()) {
            (Some(a), Some(b)) if (a < 0.0) != (b < 0.0) => Some(i),
            _ => None,
        })
        .collect()
}

fn interpolate_zero(a: &CurvePoint, b: &CurvePoint) -> f64 {
    let (ga, gb) = (a.growth().unwrap_or(0.0), b.growth().unwrap_or(0.0));
    if ga == gb {
        return 0.5 * (a.alpha + b.alpha);
    }
    a.alpha + (b.alpha - a.alpha) * ga / (ga - gb)
}

pub fn sweep(
    problem: &Problem,
    alpha_min: f64,
    alpha_max: f64,
    steps: usize,
    exec: Execution,
) -> Result<GrowthCurve> {
    let alphas = alpha_grid(alpha_min, alpha_max, steps)?;
    let (points, alpha_hat) = solve_grid(problem, &alphas, exec);
    if points.iter().all(|p| !p.ok()) {
        return Err(Error::Sweep);
    }
    let changes = sign_changes(&points);
    let mut alpha_star = None;
    let mut later = Vec::new();
    for (n, &i) in changes.iter().enumerate() {
        let rising = points[i].growth().is_some_and(|g| g < 0.0);
        if n == 0 && rising {
            alpha_star = bisect(problem, &points[i], &points[i + 1])
                .ok()
                .map(|b| b.alpha_star);
        } else {
            later.push(interpolate_zero(&points[i], &points[i + 1]));
        }
    }
    let failed_points = points.iter().filter(|p| !p.ok()).count();
    Ok(GrowthCurve {
        params: problem.params(),
        points,
        alpha_star,
        metadata: CurveMetadata {
            config: *problem.config(),
            evaluator: evaluator_name(problem),
            alpha_hat,
            failed_points,
            later_crossings: later,
        },
    })
}

fn evaluator_name(problem: &Problem) -> &'static str {
    if problem.params().m == 1 {
        "m1-closed-form"
    } else if problem.model().is_expanded() {
        "expanded"
    } else {
        "closed-form"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdStatus {
    Found,
    /// No sign change; every solved scan point had `G ≥ 0`.
    NonnegativeEverywhere,
    /// No sign change; every solved scan point had `G < 0`.
    NegativeEverywhere,
    /// The first sign change is next to failed scan points, or bisection failed.
    SolverFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub params: EnsembleParams,
    pub status: ThresholdStatus,
    pub alpha_star: Option<f64>,
    /// `G` at the last bisection midpoint.
    pub growth_at_star: Option<f64>,
    /// Final bracket `[lo, hi]` with `G(lo) < 0 ≤ G(hi)`.
    pub bracket: Option<(f64, f64)>,
    pub later_crossings: Vec<f64>,
    pub scanned: usize,
    pub failed: usize,
    pub detail: String,
}

struct Bisection {
    alpha_star: f64,
    growth: f64,
    lo: f64,
    hi: f64,
}

fn bisect(problem: &Problem, lo: &CurvePoint, hi: &CurvePoint) -> Result<Bisection> {
    let tol = problem.config().tol_threshold;
    let mut lo_pt = lo.point.clone().ok_or(Error::Sweep)?;
    let mut hi_pt = hi.point.clone().ok_or(Error::Sweep)?;
    let mut last_growth = hi_pt.growth;
    while hi_pt.alpha - lo_pt.alpha > tol {
        let mid = 0.5 * (lo_pt.alpha + hi_pt.alpha);
        let seed = if problem.params().m == 1 {
            None
        } else {
            Some(&lo_pt)
        };
        let p = problem.solve(mid, seed)?;
        last_growth = p.growth;
        let early =
            p.growth.abs() <= THRESHOLD_G_TOL && hi_pt.alpha - lo_pt.alpha <= THRESHOLD_EARLY_WIDTH;
        if p.growth < 0.0 {
            lo_pt = p;
        } else {
            hi_pt = p;
        }
        if early {
            break;
        }
    }
    let alpha_star = 0.5 * (lo_pt.alpha + hi_pt.alpha);
    Ok(Bisection {
        alpha_star,
        growth: last_growth,
        lo: lo_pt.alpha,
        hi: hi_pt.alpha,
    })
}

/// Coarse scan over `α_i = i/201`, then bisection inside the first bracket
/// where `G` turns nonnegative.
pub fn threshold(problem: &Problem, exec: Execution) -> ThresholdReport {
    let n = THRESHOLD_SCAN_POINTS;
    let alphas: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
    let (points, _) = solve_grid(problem, &alphas, exec);
    let failed = points.iter().filter(|p| !p.ok()).count();
    let mut report = ThresholdReport {
        params: problem.params(),
        status: ThresholdStatus::SolverFailure,
        alpha_star: None,
        growth_at_star: None,
        bracket: None,
        later_crossings: Vec::new(),
        scanned: n,
        failed,
        detail: String::new(),
    };

    // α* is an infimum: the first solved point with G ≥ 0 decides.
    let Some(first_nonneg) = points
        .iter()
        .position(|p| p.growth().is_some_and(|g| g >= 0.0))
    else {
        if failed == n {
            report.detail = "every scan point failed".into();
        } else {
            report.status = ThresholdStatus::NegativeEverywhere;
            report.detail = format!("G < 0 at all {} solved scan points", n - failed);
        }
        return report;
    };
    report.later_crossings = sign_changes(&points)
        .into_iter()
        .filter(|&i| i > first_nonneg)
        .map(|i| interpolate_zero(&points[i], &points[i + 1]))
        .collect();
    if first_nonneg == 0 {
        report.status = ThresholdStatus::NonnegativeEverywhere;
        report.detail = format!("G >= 0 already at alpha = {}", alphas[0]);
        return report;
    }
    let prev = &points[first_nonneg - 1];
    if !prev.ok() {
        report.detail = format!(
            "scan point alpha = {} below the first nonnegative G failed: {}",
            prev.alpha, prev.failure
        );
        return report;
    }
    match bisect(problem, prev, &points[first_nonneg]) {
        Ok(b) => {
            report.status = ThresholdStatus::Found;
            report.alpha_star = Some(b.alpha_star);
            report.growth_at_star = Some(b.growth);
            report.bracket = Some((b.lo, b.hi));
        }
        Err(e) => report.detail = format!("bisection failed: {e}"),
    }
    report
}

/// Convenience: builds the problem and runs [`threshold`].
pub fn threshold_for(
    params: EnsembleParams,
    config: SolverConfig,
    exec: Execution,
) -> Result<ThresholdReport> {
    Ok(threshold(&Problem::new(params, config)?, exec))
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
    fn grid_endpoints() {
        let g = alpha_grid(0.1, 0.3, 2).unwrap();
        assert_eq!(g, vec![0.1, 0.3]);
        let g = alpha_grid(0.01, 0.99, 99).unwrap();
        assert_eq!(g.len(), 99);
        assert_eq!(g[98], 0.99);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(alpha_grid(0.0, 0.5, 3).is_err());
        assert!(alpha_grid(0.5, 0.4, 3).is_err());
        assert!(alpha_grid(0.1, 1.2, 3).is_err());
        assert!(alpha_grid(0.1, 0.2, 1).is_err());
    }

    #[test]
    fn units() {
        assert_eq!(Units::Bits.convert(std::f64::consts::LN_2), 1.0);
        assert_eq!(Units::Nats.convert(0.25), 0.25);
    }

    #[test]
    fn m1_growth_small_alpha_is_negative() {
        for (j, k) in [(3, 6), (4, 8), (3, 9)] {
            let p = problem(j, k, 1);
            assert!(growth_rate(&p, 1e-3).unwrap().growth < 0.0);
        }
    }

    #[test]
    fn m1_curve_and_threshold() {
        let p = problem(3, 6, 1);
        let curve = sweep(&p, 0.01, 0.99, 99, Execution::Sequential).unwrap();
        assert_eq!(curve.failed(), 0);
        let star = curve.alpha_star.unwrap();
        assert!((star - 0.0227).abs() < 5e-4, "{star}");
        let best = curve.max_growth().unwrap();
        assert!((best.growth - 0.5 * 2f64.ln()).abs() < 1e-5);
        assert!((best.alpha - 0.5).abs() < 0.011);

        let t = threshold(&p, Execution::Sequential);
        assert_eq!(t.status, ThresholdStatus::Found);
        assert!((t.alpha_star.unwrap() - star).abs() < 1e-6);
        let (lo, hi) = t.bracket.unwrap();
        assert!(hi - lo <= 1e-6);
    }

    #[test]
    fn csv_layout() {
        let p = problem(3, 6, 2);
        let curve = sweep(&p, 0.2, 0.3, 2, Execution::Sequential).unwrap();
        let csv = curve.to_csv(Units::Nats);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "alpha,G_nats,q_1,q_2,x0_1,x0_2,lambda,residual,status"
        );
        assert_eq!(lines.len(), 3);
        for l in &lines[1..] {
            assert_eq!(l.split(',').count(), 9);
            assert!(l.ends_with(",ok"));
        }
        assert!(csv.ends_with('\n') && !csv.contains('\r'));
        let bits = curve.to_csv(Units::Bits);
        assert!(bits.starts_with("alpha,G_bits,"));
        let json: serde_json::Value = serde_json::from_str(&curve.to_json(Units::Nats)).unwrap();
        assert_eq!(json["points"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn failed_points_are_marked() {
        let cp = CurvePoint::from_result(0.5, Err(Error::Sweep));
        let curve = GrowthCurve {
            params: EnsembleParams::new(3, 6, 1).unwrap(),
            points: vec![cp],
            alpha_star: None,
            metadata: CurveMetadata {
                config: SolverConfig::default(),
                evaluator: "m1-closed-form",
                alpha_hat: None,
                failed_points: 1,
                later_crossings: vec![],
            },
        };
        let csv = curve.to_csv(Units::Nats);
        assert_eq!(
            csv.lines().nth(1).unwrap(),
            "5.0000000000000000e-1,NaN,NaN,NaN,NaN,NaN,failed"
        );
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let p = problem(3, 6, 2);
        let a = sweep(&p, 0.1, 0.5, 5, Execution::Sequential).unwrap();
        let b = sweep(&p, 0.1, 0.5, 5, Execution::Parallel).unwrap();
        assert_eq!(a.to_csv(Units::Nats), b.to_csv(Units::Nats));
    }
}
