use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;

use pseudoweight::growth::{self, ThresholdStatus, Units};
use pseudoweight::oracle::{self, VerifyReport};
use pseudoweight::pwef::{build_b, build_t};
use pseudoweight::solver::Evaluation;
use pseudoweight::{EnsembleParams, Error, Execution, Problem, PwefSpec, SolverConfig, SparsePoly};

const EXIT_DISAGREE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "pseudoweight",
    version,
    about = "AWGN-pseudoweight growth rates of regular LDPC ensembles"
)]
struct Cli {
    /// Worker threads for sweeps and oracle scans (default: available parallelism).
    #[arg(long, global = true, env = "PSEUDOWEIGHT_THREADS")]
    threads: Option<usize>,

    /// Progress and diagnostics on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact degree-M PWEF of the single parity-check code.
    Pwef(PwefArgs),
    /// Cross-check against brute-force oracles.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Growth-rate curve over an alpha grid.
    Growth(GrowthArgs),
    /// Threshold alpha*_M where the growth rate turns nonnegative.
    Threshold(ThresholdArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Part {
    B,
    T,
}

#[derive(Args, Debug)]
struct PwefArgs {
    #[arg(long = "M")]
    m: usize,
    #[arg(long)]
    k: u64,
    #[arg(long, value_enum, default_value = "b", ignore_case = true)]
    part: Part,
    /// Print one exact coefficient, e.g. `2,1`.
    #[arg(long, value_delimiter = ',')]
    coeff: Option<Vec<u32>>,
    /// Write the dump to this file instead of stdout.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum VerifyCommand {
    /// Cone+parity type counts against the S-set and the expanded PWEF.
    SSet(SpcArgs),
    /// Projected M-cover codewords against the cone+parity set.
    Cover {
        #[command(flatten)]
        spc: SpcArgs,
        /// Pin the first edge of each check to the identity permutation.
        #[arg(long)]
        fix_first_edge: bool,
    },
    /// Coefficient asymptotics of R^ℓ against the saddle-point limit.
    Lemma(LemmaArgs),
}

#[derive(Args, Debug)]
struct SpcArgs {
    #[arg(long = "M")]
    m: usize,
    #[arg(long)]
    k: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LemmaArgs {
    /// Polynomial with nonnegative coefficients, e.g. "1 + 6*x1^2 + x1^4".
    #[arg(long = "R")]
    r: String,
    /// Comma-separated rationals, e.g. `1/2` or `9/5,3/10`.
    #[arg(long, value_delimiter = ',')]
    xi: Vec<String>,
    #[arg(long)]
    ell_max: usize,
    /// Only test these ℓ (each admissible).
    #[arg(long, value_delimiter = ',')]
    ells: Option<Vec<usize>>,
    /// Largest acceptable gap at the last tested ℓ.
    #[arg(long, default_value_t = 0.05)]
    gap_tol: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    #[arg(long)]
    j: u32,
    #[arg(long)]
    k: u64,
    #[arg(long = "M")]
    m: usize,
    #[arg(long, default_value_t = 1e-11)]
    tol_inner: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol_outer: f64,
    #[arg(long, default_value_t = 1e-7)]
    tol_threshold: f64,
    /// Random multi-start directions per solve.
    #[arg(long, default_value_t = 8)]
    multistart: usize,
    #[arg(long, default_value_t = SolverConfig::default().seed)]
    seed: u64,
    #[arg(long, value_enum, default_value = "auto")]
    evaluation: EvalArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EvalArg {
    Auto,
    Expanded,
    ClosedForm,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum UnitsArg {
    Nats,
    Bits,
}

#[derive(Args, Debug)]
struct GrowthArgs {
    #[command(flatten)]
    solver: SolverArgs,
    /// `min:max:steps`
    #[arg(long)]
    alpha: String,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long, value_enum, default_value = "nats")]
    units: UnitsArg,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write a gnuplot script for the CSV (requires --output).
    #[arg(long)]
    gnuplot: Option<PathBuf>,
    /// List grid points where several stationary points tie within 1e-9 (stderr).
    #[arg(long)]
    report_ties: bool,
}

#[derive(Args, Debug)]
struct ThresholdArgs {
    #[command(flatten)]
    solver: SolverArgs,
}

/// An error with its process exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        Failure {
            code: EXIT_USAGE,
            err,
        }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::SolverFailure { .. } | Error::Sweep => EXIT_PARTIAL,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            err: err.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    if cli.threads == Some(0) {
        return Err(anyhow!("--threads must be positive").into());
    }
    let exec = Execution::with_threads(cli.threads);
    match &cli.command {
        Command::Pwef(a) => cmd_pwef(a),
        Command::Verify(v) => cmd_verify(v, exec),
        Command::Growth(a) => cmd_growth(a, exec, cli.verbose),
        Command::Threshold(a) => cmd_threshold(a, exec, cli.verbose),
    }
}

fn emit(path: Option<&PathBuf>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn cmd_pwef(a: &PwefArgs) -> Result<u8, Failure> {
    let spec = PwefSpec::new(a.m, a.k)?;
    let poly = match a.part {
        Part::B => build_b(spec)?,
        Part::T => build_t(spec),
    };
    match &a.coeff {
        Some(u) => {
            if u.len() != a.m {
                return Err(anyhow!("--coeff needs {} entries, got {}", a.m, u.len()).into());
            }
            emit(None, &format!("{}\n", poly.coeff(u)?))?;
        }
        None => emit(a.dump.as_ref(), &poly.dump())?,
    }
    Ok(0)
}

fn report_exit(report: &VerifyReport) -> u8 {
    if report.agree {
        0
    } else {
        EXIT_DISAGREE
    }
}

fn cmd_verify(v: &VerifyCommand, exec: Execution) -> Result<u8, Failure> {
    match v {
        VerifyCommand::SSet(s) => {
            let report = oracle::verify_s_set(PwefSpec::new(s.m, s.k)?, exec)?;
            emit(s.output.as_ref(), &report.to_json())?;
            Ok(report_exit(&report))
        }
        VerifyCommand::Cover {
            spc,
            fix_first_edge,
        } => {
            let report = oracle::verify_cover(PwefSpec::new(spc.m, spc.k)?, *fix_first_edge, exec)?;
            emit(spc.output.as_ref(), &report.to_json())?;
            Ok(report_exit(&report))
        }
        VerifyCommand::Lemma(l) => cmd_lemma(l),
    }
}

/// `a/b`, an integer, or a finite decimal, as an exact rational.
fn parse_rational(s: &str) -> anyhow::Result<BigRational> {
    let s = s.trim();
    if let Some((int, frac)) = s.split_once('.') {
        let digits = format!("{int}{frac}");
        let scale = format!("1{}", "0".repeat(frac.len()));
        return format!("{digits}/{scale}")
            .parse()
            .map_err(|_| anyhow!("invalid rational '{s}'"));
    }
    s.parse().map_err(|_| anyhow!("invalid rational '{s}'"))
}

fn cmd_lemma(l: &LemmaArgs) -> Result<u8, Failure> {
    let xi =
        l.xi.iter()
            .map(|s| parse_rational(s))
            .collect::<anyhow::Result<Vec<_>>>()?;
    if xi.is_empty() {
        return Err(anyhow!("--xi is required").into());
    }
    let r = SparsePoly::parse_expr(&l.r, xi.len())?;
    let lemma = oracle::verify_lemma_asymptotics(&r, &xi, l.ell_max, l.ells.as_deref())?;
    let mut mismatches = Vec::new();
    if lemma.empty {
        mismatches
            .push(serde_json::json!({ "reason": "empty set: every tested coefficient is zero" }));
    }
    if !lemma.monotone {
        mismatches.push(serde_json::json!({ "reason": "gap does not shrink with ell" }));
    }
    if let Some(g) = lemma.last_gap() {
        if g.abs() > l.gap_tol {
            mismatches.push(serde_json::json!({ "reason": "final gap above tolerance", "gap": g, "tol": l.gap_tol }));
        }
    }
    let report = VerifyReport {
        instance: serde_json::json!({
            "R": lemma.polynomial,
            "xi": lemma.xi,
            "ell_max": l.ell_max,
            "ell_step": lemma.ell_step,
            "x0": lemma.x0,
            "limit": lemma.limit,
            "empty": lemma.empty,
            "rows": lemma.rows,
        }),
        method_a: "exact coefficient of R^ell, (1/ell) ln".into(),
        method_b: "saddle-point limit ln R(x0) - sum xi_r ln x0_r".into(),
        agree: mismatches.is_empty(),
        mismatches,
    };
    emit(l.output.as_ref(), &report.to_json())?;
    Ok(report_exit(&report))
}

fn build_problem(s: &SolverArgs) -> Result<Problem, Failure> {
    for (name, v) in [
        ("tol-inner", s.tol_inner),
        ("tol-outer", s.tol_outer),
        ("tol-threshold", s.tol_threshold),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(anyhow!("--{name} must be positive, got {v}").into());
        }
    }
    let params = EnsembleParams::new(s.j, s.k, s.m)?;
    let config = SolverConfig {
        tol_inner: s.tol_inner,
        tol_outer: s.tol_outer,
        tol_threshold: s.tol_threshold,
        multistart: s.multistart,
        seed: s.seed,
        evaluation: match s.evaluation {
            EvalArg::Auto => Evaluation::Auto,
            EvalArg::Expanded => Evaluation::Expanded,
            EvalArg::ClosedForm => Evaluation::ClosedForm,
        },
        ..SolverConfig::default()
    };
    Ok(Problem::new(params, config)?)
}

fn parse_range(s: &str) -> anyhow::Result<(f64, f64, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, steps] = parts.as_slice() else {
        bail!("--alpha expects min:max:steps, got '{s}'");
    };
    let lo: f64 = lo
        .trim()
        .parse()
        .with_context(|| format!("bad alpha min '{lo}'"))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .with_context(|| format!("bad alpha max '{hi}'"))?;
    let steps: usize = steps
        .trim()
        .parse()
        .with_context(|| format!("bad step count '{steps}'"))?;
    Ok((lo, hi, steps))
}

fn cmd_growth(a: &GrowthArgs, exec: Execution, verbose: bool) -> Result<u8, Failure> {
    let (lo, hi, steps) = parse_range(&a.alpha)?;
    growth::alpha_grid(lo, hi, steps)?;
    if a.gnuplot.is_some() && a.output.is_none() {
        return Err(
            anyhow!("--gnuplot needs --output so the script can reference the data file").into(),
        );
    }
    let problem = build_problem(&a.solver)?;
    let units = match a.units {
        UnitsArg::Nats => Units::Nats,
        UnitsArg::Bits => Units::Bits,
    };
    let curve = growth::sweep(&problem, lo, hi, steps, exec)?;
    let text = match a.format {
        Format::Csv => curve.to_csv(units),
        Format::Json => curve.to_json(units),
    };
    emit(a.output.as_ref(), &text)?;
    if let (Some(script), Some(data)) = (&a.gnuplot, &a.output) {
        let body = growth::gnuplot_script(&data.to_string_lossy(), &curve.params, units);
        fs::write(script, body).with_context(|| format!("writing {}", script.display()))?;
    }
    if verbose {
        eprintln!(
            "solved {}/{} points; alpha_star = {:?}",
            curve.points.len() - curve.failed(),
            curve.points.len(),
            curve.alpha_star
        );
    }
    if a.report_ties && problem.params().m > 1 {
        for cp in curve.points.iter().filter(|p| p.ok()) {
            let all = problem.solve_full_all(cp.alpha, cp.point.as_ref())?;
            let best = all[0].growth;
            let ties: Vec<_> = all.iter().filter(|p| best - p.growth <= 1e-9).collect();
            if ties.len() > 1 {
                for t in ties {
                    eprintln!("tie alpha={} G={} q={:?}", cp.alpha, t.growth, t.q);
                }
            }
        }
    }
    if curve.failed() > 0 {
        eprintln!(
            "warning: {} grid point(s) failed; rows marked 'failed'",
            curve.failed()
        );
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

/// `v` with 8 significant digits in positional notation.
fn sig8(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let decimals = (7 - v.abs().log10().floor() as i32).max(0) as usize;
    format!("{v:.decimals$}")
}

fn cmd_threshold(a: &ThresholdArgs, exec: Execution, verbose: bool) -> Result<u8, Failure> {
    let problem = build_problem(&a.solver)?;
    let report = growth::threshold(&problem, exec);
    if verbose {
        eprintln!(
            "scanned {} points ({} failed); bracket {:?}; later crossings {:?}",
            report.scanned, report.failed, report.bracket, report.later_crossings
        );
    }
    match report.status {
        ThresholdStatus::Found => {
            let star = report.alpha_star.unwrap_or(f64::NAN);
            emit(None, &format!("alpha_star={}\n", sig8(star)))?;
            Ok(0)
        }
        ThresholdStatus::NonnegativeEverywhere | ThresholdStatus::NegativeEverywhere => {
            let which = if report.status == ThresholdStatus::NonnegativeEverywhere {
                "G>=0"
            } else {
                "G<0"
            };
            emit(
                None,
                &format!(
                    "no_threshold scanned={} failed={} sign={which} detail=\"{}\"\n",
                    report.scanned, report.failed, report.detail
                ),
            )?;
            Ok(0)
        }
        ThresholdStatus::SolverFailure => {
            eprintln!("error: {}", report.detail);
            Ok(EXIT_PARTIAL)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_significant_digits() {
        assert_eq!(sig8(0.022733470100), "0.022733470");
        assert_eq!(sig8(0.5), "0.50000000");
        assert_eq!(sig8(1.25), "1.2500000");
    }

    #[test]
    fn rationals() {
        assert_eq!(
            parse_rational("1/2").unwrap(),
            parse_rational("0.5").unwrap()
        );
        assert_eq!(
            parse_rational("1.8").unwrap(),
            parse_rational("9/5").unwrap()
        );
        assert_eq!(parse_rational("3").unwrap(), parse_rational("6/2").unwrap());
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("0.01:0.99:99").unwrap(), (0.01, 0.99, 99));
        assert!(parse_range("0.1:0.2").is_err());
        assert!(parse_range("a:0.2:3").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
