use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pseudoweight"))
        .args(args)
        .env_remove("PSEUDOWEIGHT_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn pwef_coefficient() {
    let o = run(&["pwef", "--M", "2", "--k", "3", "--coeff", "2,1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "3");
}

#[test]
fn pwef_dump_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.txt");
    let o = run(&[
        "pwef",
        "--M",
        "3",
        "--k",
        "6",
        "--part",
        "T",
        "--dump",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.contains("30\t1,0,1"), "{text}");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(
        run(&["pwef", "--M", "0", "--k", "3"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["pwef", "--M", "2", "--k", "3", "--coeff", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&[
            "growth",
            "--j",
            "3",
            "--k",
            "6",
            "--M",
            "1",
            "--alpha",
            "0.5:0.1:3"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        run(&["verify", "cover", "--M", "3", "--k", "8"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
}

#[test]
fn verify_s_set_agrees() {
    let o = run(&["verify", "s-set", "--M", "2", "--k", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["agree"], true);
}

#[test]
fn verify_cover_reports_the_extra_cone_vector() {
    let o = run(&[
        "verify",
        "cover",
        "--M",
        "2",
        "--k",
        "3",
        "--fix-first-edge",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["mismatches"][0]["z"], serde_json::json!([2, 2, 2]));
}

#[test]
fn verify_lemma() {
    let o = run(&[
        "verify",
        "lemma",
        "--R",
        "1 + 15*x1^2 + 15*x1^4 + x1^6",
        "--xi",
        "9/5",
        "--ell-max",
        "120",
        "--ells",
        "20,50,100,120",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let bad = run(&[
        "verify",
        "lemma",
        "--R",
        "1 + x1^2",
        "--xi",
        "1/2",
        "--ell-max",
        "10",
        "--ells",
        "2,6,10",
    ]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn growth_csv_with_gnuplot() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("g.csv");
    let gp = dir.path().join("g.gp");
    let o = run(&[
        "growth",
        "--j",
        "3",
        "--k",
        "6",
        "--M",
        "2",
        "--alpha",
        "0.1:0.5:5",
        "--units",
        "bits",
        "--output",
        csv.to_str().unwrap(),
        "--gnuplot",
        gp.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "alpha,G_bits,q_1,q_2,x0_1,x0_2,lambda,residual,status"
    );
    assert_eq!(lines.count(), 5);
    assert!(std::fs::read_to_string(&gp).unwrap().contains("g.csv"));
}

#[test]
fn growth_is_reproducible_across_thread_counts() {
    let args = [
        "growth",
        "--j",
        "4",
        "--k",
        "8",
        "--M",
        "2",
        "--alpha",
        "0.05:0.6:6",
        "--format",
        "json",
    ];
    let a = run(&[&["--threads", "1"], &args[..]].concat());
    let b = run(&[&["--threads", "3"], &args[..]].concat());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn threshold_m1() {
    let o = run(&["threshold", "--j", "3", "--k", "6", "--M", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let v: f64 = out
        .trim()
        .strip_prefix("alpha_star=")
        .unwrap()
        .parse()
        .unwrap();
    assert!((v - 0.0227).abs() < 5e-4, "{out}");
}
