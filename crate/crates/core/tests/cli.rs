use martingale_bounds::cli;

fn run(args: &[&str]) -> (i32, String, String) {
    let argv = std::iter::once("mtbounds").chain(args.iter().copied()).map(String::from).collect();
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn zeta_and_constant_print_seven_digits() {
    assert_eq!(run(&["zeta", "--p", "2"]).1.trim(), "1.6449341");
    assert_eq!(run(&["sharpness", "--constant-c"]).1.trim(), "0.3108032");
}

#[test]
fn domain_errors_exit_two_with_json() {
    let (code, _, err) = run(&["zeta", "--p", "1"]);
    assert_eq!(code, 2);
    let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["error"], "domain");
}

#[test]
fn unknown_flags_exit_sixty_four() {
    assert_eq!(run(&["zeta", "--p", "2", "--nope"]).0, 64);
    assert_eq!(run(&["no-such-command"]).0, 64);
    assert_eq!(run(&["--help"]).0, 0);
}

#[test]
fn stochastic_commands_need_a_seed() {
    let (code, _, err) = run(&["simulate", "--generator", r#"{"family":"rademacher"}"#, "--n", "4", "--reps", "10"]);
    assert_eq!(code, 2);
    assert!(err.contains("--seed"));
}

#[test]
fn martingale_bound_with_adjudication_reports_schema() {
    let (code, out, _) = run(&[
        "bound-martingale",
        "--generator",
        r#"{"family":"gaussian","variances":[1.0]}"#,
        "--n",
        "16",
        "--p",
        "3",
        "--reps",
        "5000",
        "--seed",
        "1",
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    for key in ["bound", "empirical", "halfwidth", "verdict", "p", "n", "generator", "seed"] {
        assert!(!v[key].is_null(), "missing {key}");
    }
    assert_eq!(v["verdict"], "holds");
    // (p - 1) |g|_3 with E|g|^3 = 2 sqrt(2 / pi)
    let g3 = (2.0 * (2.0 / std::f64::consts::PI).sqrt()).powf(1.0 / 3.0);
    assert!((v["bound"].as_f64().unwrap() - 2.0 * g3).abs() < 1e-12);
}

#[test]
fn transform_bound_on_bounded_quadruple() {
    let (code, out, _) = run(&[
        "bound-transform",
        "--generator",
        r#"{"family":"rademacher"}"#,
        "--multiplier",
        r#"{"family":"constant","value":2.0}"#,
        "--n",
        "8",
        "--p",
        "3",
        "--alpha",
        "inf",
        "--beta",
        "1",
        "--lambda",
        "inf",
        "--mu",
        "1",
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((v["bound"].as_f64().unwrap() - 4.0).abs() < 1e-12);
    assert_eq!(v["quadruple"]["alpha"], "inf");
}

#[test]
fn outputs_are_not_overwritten_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["--out", out, "zeta", "--p", "3"]).0, 0);
    assert_eq!(run(&["--out", out, "zeta", "--p", "3"]).0, 2);
    assert_eq!(run(&["--out", out, "--force", "zeta", "--p", "4"]).0, 0);
    let text = std::fs::read_to_string(dir.path().join("zeta.txt")).unwrap();
    assert_eq!(text.trim(), "1.0823232");
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"p": 2, "precision": 3}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    assert_eq!(run(&["--config", cfg, "zeta"]).1.trim(), "1.645");
    assert_eq!(run(&["--config", cfg, "zeta", "--p", "4"]).1.trim(), "1.082");
}

#[test]
fn identical_runs_give_identical_artifacts() {
    let args = ["simulate", "--generator", r#"{"family":"predictable_variance","feedback":0.5,"cap":4.0}"#, "--n", "8", "--reps", "300", "--seed", "4"];
    let a = run(&args).1;
    let mut with_threads = args.to_vec();
    with_threads.extend(["--threads", "2"]);
    assert_eq!(a, run(&with_threads).1);
}

#[test]
fn sharpness_report_has_the_documented_columns() {
    let (code, out, _) = run(&["sharpness", "--p", "2", "--levels", "4"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("p,M,numerator,denominator,ratio,limit_formula,series_prefix,series_tail_bound\n2,4,"));
}

#[test]
fn entropy_holder_and_model_verdicts() {
    let (_, out, _) = run(&["entropy", "--holder", "1,0.5,2"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["condition"], false);
    let (_, out, _) = run(&["entropy", "--model", r#"{"model":"power","c":1.0,"gamma":2.0}"#]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v[2]["criterion"], "dudley");
    assert_eq!(v[2]["verdict"], "diverges");
}

#[test]
fn report_flattens_verify_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _, _) = run(&["--out", out, "verify", "--preset", "quick", "--reps", "200", "--seed", "3"]);
    assert_eq!(code, 0);
    let verify = dir.path().join("verify.json");
    let (code, csv, _) = run(&["report", "--verify", verify.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(csv.starts_with("kind,generator,p,n,bound,empirical,halfwidth,verdict"));
    assert_eq!(csv.lines().count(), 1 + 4 * 2 * 2 * 5);
}
