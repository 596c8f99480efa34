use pseudoweight::growth::{self, ThresholdStatus, Units};
use pseudoweight::solver::{alpha_of_q, constraint_g, solve_m1, Evaluation};
use pseudoweight::{EnsembleParams, Execution, Problem, SolverConfig};

fn problem(j: u32, k: u64, m: usize) -> Problem {
    Problem::new(
        EnsembleParams::new(j, k, m).unwrap(),
        SolverConfig::default(),
    )
    .unwrap()
}

#[test]
fn m2_point_is_stationary() {
    let p = problem(3, 6, 2);
    let pt = p.solve(0.3, None).unwrap();
    assert!(constraint_g(&pt.q, 0.3).abs() < 1e-9);
    assert!((alpha_of_q(&pt.q) - 0.3).abs() < 1e-9);
    assert!(p.max_residual(&pt) <= 1e-9);
    assert!(p.lagrange_check(&pt).unwrap() <= 1e-5);
}

#[test]
fn higher_degree_never_loses_growth() {
    // Scaled codewords are degree-M pseudocodewords of the same weight.
    for a in [0.05, 0.2, 0.5] {
        let g1 = solve_m1(&EnsembleParams::new(3, 6, 1).unwrap(), a)
            .unwrap()
            .growth;
        let g2 = problem(3, 6, 2).solve(a, None).unwrap().growth;
        assert!(g2 >= g1 - 1e-9, "alpha={a}: {g2} < {g1}");
    }
}

#[test]
fn continuation_follows_the_branch() {
    let p = problem(4, 8, 2);
    let a = p.solve(0.2, None).unwrap();
    let b = p.continue_from(0.21, &a).unwrap();
    assert!((b.alpha - 0.21).abs() < 1e-12);
    assert!(p.max_residual(&b) <= 1e-9);
    assert!((b.growth - a.growth).abs() < 0.05);
}

#[test]
fn closed_form_and_expanded_agree() {
    let params = EnsembleParams::new(3, 6, 2).unwrap();
    let cfg = |evaluation| SolverConfig {
        evaluation,
        ..SolverConfig::default()
    };
    let e = Problem::new(params, cfg(Evaluation::Expanded)).unwrap();
    let c = Problem::new(params, cfg(Evaluation::ClosedForm)).unwrap();
    let q = [0.1, 0.05];
    let (fe, fc) = (e.f_of_q(&q).unwrap(), c.f_of_q(&q).unwrap());
    assert!((fe - fc).abs() < 1e-10, "{fe} vs {fc}");
}

#[test]
fn sweep_is_the_same_sequential_and_parallel() {
    let p = problem(3, 6, 2);
    let s = growth::sweep(&p, 0.05, 0.9, 12, Execution::Sequential).unwrap();
    let q = growth::sweep(&p, 0.05, 0.9, 12, Execution::Parallel).unwrap();
    assert_eq!(s.to_csv(Units::Bits), q.to_csv(Units::Bits));
    assert_eq!(s.failed(), 0);
}

#[test]
fn m1_thresholds() {
    let r = growth::threshold(&problem(4, 8, 1), Execution::Parallel);
    assert_eq!(r.status, ThresholdStatus::Found);
    assert!((r.alpha_star.unwrap() - 0.0627).abs() < 5e-4);
}

#[test]
fn json_output_parses() {
    let p = problem(3, 6, 1);
    let c = growth::sweep(&p, 0.1, 0.5, 5, Execution::Sequential).unwrap();
    let v: serde_json::Value = serde_json::from_str(&c.to_json(Units::Nats)).unwrap();
    assert!(v.is_object());
}

#[test]
fn bad_inputs() {
    let p = problem(3, 6, 2);
    assert!(p.solve(0.0, None).is_err());
    assert!(p.solve(1.5, None).is_err());
    assert!(EnsembleParams::new(3, 6, 0).is_err());
}
