use std::path::Path;
use std::process::{Command, Output};

fn medmarg(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_medmarg"));
    cmd.args(args);
    cmd
}

fn run(args: &[&str]) -> Output {
    medmarg(args).output().expect("binary runs")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn marginal_prints_six_decimal_values() {
    let output = run(&[
        "marginal", "--family", "exp", "--prior", "uniform01", "--x", "2", "--kind", "median",
    ]);
    assert!(output.status.success());
    assert_eq!(stdout_of(&output).trim(), "0.632121");

    let output = run(&[
        "marginal", "--family", "exp", "--prior", "uniform01", "--x", "1", "--kind", "mean",
    ]);
    assert_eq!(stdout_of(&output).trim(), "0.367879");
}

#[test]
fn marginal_accepts_negative_points_and_point_mass_priors() {
    let output = run(&[
        "marginal",
        "--family",
        "normal-sd",
        "--prior",
        "point:1",
        "--x",
        "-1.6448536269514727",
        "--kind",
        "mean",
    ]);
    assert!(output.status.success());
    assert_eq!(stdout_of(&output).trim(), "0.050000");
}

#[test]
fn bad_tokens_and_grids_are_usage_errors() {
    for args in [
        vec!["marginal", "--family", "exp", "--prior", "beta", "--x", "1", "--kind", "mean"],
        vec!["power", "--prior", "exp-on-variance", "--grid", "0:1"],
        vec!["power", "--prior", "exp-on-variance", "--grid", "0:1:1"],
        vec!["power", "--prior", "exp-on-variance", "--grid", "3:1:10"],
        vec!["approx", "--algorithm", "m3", "--family", "exp", "--prior", "exp"],
        vec!["marginal", "--family", "exp", "--prior", "uniform01", "--x", "1"],
    ] {
        let output = run(&args);
        assert_eq!(output.status.code(), Some(1), "args {args:?}");
    }
}

#[test]
fn impossible_estimation_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.txt");
    std::fs::write(&data, "1000\n").unwrap();
    let output = run(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--family",
        "normal-var",
        "--prior",
        "exp",
        "--bounds",
        "-1:1",
    ]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("numerical failure"), "stderr: {stderr}");
}

#[test]
fn verify_reports_all_pass() {
    let output = run(&["verify"]);
    assert!(output.status.success());
    let stdout = stdout_of(&output);
    assert_eq!(stdout.matches(": pass").count(), 4, "stdout: {stdout}");
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn power_csv_follows_the_column_schema() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(&[
        "power",
        "--prior",
        "exp-on-variance",
        "--alpha",
        "0.05",
        "--grid",
        "-3:0:61",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let text = std::fs::read_to_string(dir.path().join("power.csv")).unwrap();
    let mut lines = text.lines();
    let meta: Vec<&str> = lines.by_ref().take_while(|l| l.starts_with('#')).collect();
    assert!(meta.contains(&"# subcommand=power"));
    assert!(meta.contains(&"# grid=-3:0:61"));
    assert!(meta.contains(&"# alpha=0.05"));
    let header = meta.len();
    let all: Vec<&str> = text.lines().collect();
    assert_eq!(
        all[header],
        "mu,power_median,power_mean,power_known_sigma_0.4,power_known_sigma_1"
    );
    assert_eq!(all.len() - header - 1, 61);
    for row in &all[header + 1..] {
        assert_eq!(row.split(',').count(), 5);
        for field in row.split(',') {
            field.parse::<f64>().expect("numeric field");
        }
    }
}

#[test]
fn figure_one_writes_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(&[
        "figures",
        "--which",
        "1",
        "--k",
        "200",
        "--seed",
        "42",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "fig1.svg",
            "fig1_b1.csv",
            "fig1_exact_mean.csv",
            "fig1_exact_median.csv",
            "fig1_m1.csv",
        ]
    );
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn reruns_with_one_seed_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap().to_string();
    let args = [
        "approx", "--algorithm", "m2", "--family", "exp", "--prior", "exp", "--grid", "0.5:6:11",
        "--k", "50", "--l", "40", "--seed", "3", "--out", &out,
    ];
    assert!(run(&args).status.success());
    let first = read(dir.path(), "approx_m2.csv");
    assert!(run(&args).status.success());
    assert_eq!(first, read(dir.path(), "approx_m2.csv"));

    let mut reseeded: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    let seed_at = reseeded.iter().position(|a| a == "3").unwrap();
    reseeded[seed_at] = "4".to_string();
    let reseeded: Vec<&str> = reseeded.iter().map(String::as_str).collect();
    assert!(run(&reseeded).status.success());
    assert_ne!(first, read(dir.path(), "approx_m2.csv"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    std::fs::write(&config, "k=250\nseed=9\n\n# comment\n").unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(run(&[
        "approx", "--algorithm", "m1", "--family", "exp", "--prior", "exp", "--k", "100",
        "--config", config.to_str().unwrap(), "--out", out,
    ])
    .status
    .success());
    let text = String::from_utf8(read(dir.path(), "approx_m1.csv")).unwrap();
    assert!(text.contains("# k=100"), "flag beats config");
    assert!(text.contains("# seed=9"), "config beats default");

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "mystery=1\n").unwrap();
    let output = run(&["verify", "--config", bad.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn environment_variable_sets_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let output = medmarg(&[
        "approx", "--algorithm", "b1", "--family", "exp", "--prior", "uniform01", "--k", "60",
    ])
    .env("MEDMARG_OUT_DIR", dir.path())
    .output()
    .unwrap();
    assert!(output.status.success());
    assert!(dir.path().join("approx_b1.csv").exists());
}

#[test]
fn svg_figures_carry_one_polyline_and_legend_entry_per_curve() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(&[
        "figures", "--which", "3", "--out", dir.path().to_str().unwrap(),
    ])
    .status
    .success());
    let svg = String::from_utf8(read(dir.path(), "fig3.svg")).unwrap();
    assert!(svg.starts_with("<svg "));
    assert!(svg.contains(r#"width="800" height="600""#));
    assert_eq!(svg.matches("<polyline").count(), 6);
    for name in [
        "uniform_median",
        "uniform_mean",
        "exp_median",
        "exp_mean",
        "known_sigma_0.4",
        "known_sigma_1",
    ] {
        assert!(svg.contains(&format!(">{name}</text>")), "legend {name}");
        assert!(
            dir.path().join(format!("fig3_{name}.csv")).exists(),
            "curve file {name}"
        );
    }
}

#[test]
fn csv_values_use_nine_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(&[
        "figures", "--which", "1", "--k", "50", "--out", dir.path().to_str().unwrap(),
    ])
    .status
    .success());
    let text = String::from_utf8(read(dir.path(), "fig1_exact_median.csv")).unwrap();
    let row = text
        .lines()
        .find(|l| l.starts_with("5.00000000e-2"))
        .expect("x = 0.05 row");
    assert_eq!(row, "5.00000000e-2,2.46900880e-2");
}

#[test]
fn estimate_reports_both_objectives_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.txt");
    std::fs::write(&data, "-0.4\n0.2\n0.9\n").unwrap();
    let output = run(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--family",
        "normal-sd",
        "--prior",
        "uniform01",
    ]);
    assert!(output.status.success());
    let stdout = stdout_of(&output);
    assert!(stdout.contains("mean_objective: theta_hat="));
    assert!(stdout.contains("median_objective: theta_hat="));
    assert_eq!(stdout.matches("converged=true").count(), 2);
}
