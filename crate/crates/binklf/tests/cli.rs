use std::fs;
use std::path::Path;

use binklf::cli::run_cli;

fn cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_cli(
        std::iter::once("binklf").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

fn rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn scenarios_lists_builtins() {
    let (code, out, _) = cli(&["scenarios"]);
    assert_eq!(code, 0);
    for name in ["o2", "o2-literal", "nonlinear"] {
        assert!(out.lines().any(|l| l.starts_with(name)), "{out}");
    }
}

#[test]
fn run_nonlinear_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stdout, err) = cli(&[
        "run",
        "--scenario",
        "nonlinear",
        "--seed",
        "0",
        "--out",
        out,
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("nbklf"));
    let trace = dir.path().join("trace.csv");
    assert_eq!(rows(&trace), 300);
    assert_eq!(
        header(&trace),
        "k,x_true_1,x_true_2,x_hat_1,x_hat_2,m_k,tr_phi"
    );
}

#[test]
fn run_o2_with_explicit_filter() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _, err) = cli(&[
        "run",
        "--scenario",
        "o2",
        "--filter",
        "switch-klf",
        "--steps",
        "25",
        "--out",
        out,
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(rows(&dir.path().join("trace.csv")), 25);
}

#[test]
fn mc_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _, err) = cli(&[
        "mc",
        "--scenario",
        "o2",
        "--runs",
        "4",
        "--steps",
        "30",
        "--seed",
        "3",
        "--threads",
        "2",
        "--out",
        out,
    ]);
    assert_eq!(code, 0, "{err}");
    let d = dir.path();
    assert_eq!(
        header(&d.join("rmse.csv")),
        "k,rmse_lbklf,rmse_open_loop,rmse_clairvoyant,rmse_switch_klf"
    );
    assert_eq!(
        header(&d.join("mk.csv")),
        "k,mean_mk_lbklf,mean_mk_open_loop,mean_mk_clairvoyant,mean_mk_switch_klf"
    );
    assert_eq!(rows(&d.join("rmse.csv")), 30);
    assert_eq!(rows(&d.join("timing.csv")), 4);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["runs"], 4);
    assert_eq!(summary["successful_runs"], 4);
    assert_eq!(summary["filters"].as_array().unwrap().len(), 4);
    assert_eq!(summary["trajectory_digest"].as_str().unwrap().len(), 16);
}

#[test]
fn thread_count_does_not_change_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let (code, _, err) = cli(&[
            "mc",
            "--scenario",
            "nonlinear",
            "--runs",
            "6",
            "--steps",
            "40",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{err}");
        (
            fs::read(out.join("rmse.csv")).unwrap(),
            fs::read(out.join("mk.csv")).unwrap(),
        )
    };
    assert_eq!(run("1", "one"), run("3", "three"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "scenario = \"o2\"\nfilters = [\"lbklf\", \"open_loop\"]\nruns = 3\nsteps = 50\nseed = 5\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let (code, _, err) = cli(&[
        "mc",
        "--config",
        cfg.to_str().unwrap(),
        "--steps",
        "12",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(rows(&out.join("rmse.csv")), 12);
    assert_eq!(header(&out.join("rmse.csv")), "k,rmse_lbklf,rmse_open_loop");
}

#[test]
fn usage_errors_exit_2() {
    let (code, _, err) = cli(&["run", "--scenario", "nope"]);
    assert_eq!(code, 2);
    assert!(err.contains("nope"), "{err}");

    assert_eq!(cli(&["mc", "--scenario", "o2", "--filters", "kalman"]).0, 2);
    assert_eq!(cli(&["run"]).0, 2);
    assert_eq!(cli(&["bogus"]).0, 2);
    // The linear filter cannot run on the nonlinear model.
    assert_eq!(
        cli(&["run", "--scenario", "nonlinear", "--filter", "lbklf"]).0,
        2
    );
    assert_eq!(cli(&["mc", "--scenario", "o2", "--runs", "0"]).0, 2);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "scenario = \"o2\"\nrunz = 3\n").unwrap();
    assert_eq!(cli(&["mc", "--config", cfg.to_str().unwrap()]).0, 2);
    assert_eq!(
        cli(&[
            "mc",
            "--config",
            dir.path().join("missing.toml").to_str().unwrap()
        ])
        .0,
        1
    );
}

#[test]
fn invalid_scenario_values_exit_2() {
    let (code, _, err) = cli(&["run", "--scenario", "nonlinear", "--phi0", "-1"]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("phi0"), "{err}");
}

#[test]
fn help_goes_to_stdout() {
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("verify"));
}

#[test]
fn verify_single_suite() {
    let (code, out, _) = cli(&[
        "verify",
        "--suite",
        "dominance",
        "--instances",
        "5",
        "--samples",
        "100",
    ]);
    assert_eq!(code, 0, "{out}");
    assert!(out.starts_with("PASS dominance"), "{out}");
    assert_eq!(out.lines().count(), 1);
}

#[test]
fn verify_all_suites() {
    let (code, out, _) = cli(&[
        "verify",
        "--instances",
        "4",
        "--samples",
        "50",
        "--directions",
        "10",
        "--seed",
        "9",
    ]);
    assert_eq!(code, 0, "{out}");
    assert_eq!(
        out.lines().filter(|l| l.starts_with("PASS")).count(),
        4,
        "{out}"
    );
}
