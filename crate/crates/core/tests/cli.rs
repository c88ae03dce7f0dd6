use std::path::Path;
use std::process::{Command, Output};

fn mlppde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlppde"))
        .args(args)
        .env_remove("MLPPDE_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no `{key}=` line in:\n{text}"))
}

#[test]
fn solve_constant_prints_exact_value() {
    let o = mlppde(&["solve", "--f", "zero", "--g", "constant:7", "--n", "2", "--M", "3", "--d", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(field(&out, "estimate"), "7");
    assert!(out.contains("ledger f_evals="));
    assert!(out.contains("# root_seed=0"));
}

#[test]
fn full_flag_set_is_valid() {
    let o = mlppde(&[
        "solve",
        "--problem",
        "heat",
        "--d",
        "10",
        "--T",
        "1",
        "--f",
        "allen-cahn",
        "--g",
        "constant:0.5",
        "--n",
        "3",
        "--M",
        "3",
        "--seed",
        "42",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let value: f64 = field(&stdout(&o), "estimate").parse().unwrap();
    assert!(value.is_finite());
    assert!(stderr(&o).starts_with("warning:"));
}

#[test]
fn invalid_dimension_is_single_line_error() {
    let o = mlppde(&["solve", "--d", "0", "--n", "1", "--M", "1"]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error key=d:"), "{err}");
    assert!(err.contains("d >= 1"));
    assert!(stdout(&o).is_empty());
}

#[test]
fn unknown_flag_and_unknown_file_key_rejected() {
    let o = mlppde(&["solve", "--bogus", "1"]);
    assert!(!o.status.success());
    assert_eq!(stderr(&o).lines().count(), 1);
    assert!(stderr(&o).contains("--bogus"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "n = 1\nM = 1\nwidth = 3\n").unwrap();
    let o = mlppde(&["solve", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error key=width:"), "{}", stderr(&o));
}

#[test]
fn type_mismatch_names_key() {
    let o = mlppde(&["solve", "--n", "1", "--M", "two"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error key=M:"), "{}", stderr(&o));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# base settings\nseeds = 20\nn = 1\nM = 1\ng = constant:2 # trailing comment\n",
    )
    .unwrap();
    let o = mlppde(&["solve", "--config", cfg.to_str().unwrap(), "--seeds", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("# seeds=5"), "{out}");
    assert_eq!(field(&out, "estimate"), "2");
}

#[test]
fn seed_falls_back_to_environment() {
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_mlppde"));
        c.args(["solve", "--f", "linear:0.5", "--g", "norm_sq", "--d", "3", "--n", "2", "--M", "2"]);
        c.env_remove("MLPPDE_SEED");
        if let Some(v) = env {
            c.env("MLPPDE_SEED", v);
        }
        if let Some(v) = flag {
            c.args(["--seed", v]);
        }
        stdout(&c.output().unwrap())
    };
    assert!(run(Some("99"), None).contains("# root_seed=99"));
    assert!(run(Some("99"), Some("5")).contains("# root_seed=5"));
    assert_eq!(field(&run(Some("5"), None), "estimate"), field(&run(None, Some("5")), "estimate"));
}

#[test]
fn verify_cost_hand_count() {
    let o = mlppde(&["verify-cost", "--n", "2", "--M", "2", "--d", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("measured=(12,8,12) predicted=(12,8,12) PASS"));
}

#[test]
fn rate_recovers_synthetic_slope() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("summary.csv");
    let mut text = String::from("# synthetic\nn,M,rmse,mean_cost_total,slope_fit_running\n");
    for k in 1..=5 {
        let cost = 10f64.powi(k);
        text.push_str(&format!("{k},{k},{},{cost},\n", cost.powf(-0.5)));
    }
    std::fs::write(&path, text).unwrap();
    let o = mlppde(&["rate", "--input", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let slope: f64 = field(&stdout(&o), "slope").parse().unwrap();
    assert!((slope + 0.5).abs() < 1e-12);
}

fn rows_without_wall_time(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .filter(|l| !l.starts_with("# threads=") && !l.starts_with("# output="))
        .map(|l| {
            if l.starts_with('#') {
                l.to_string()
            } else {
                l.rsplit_once(',').unwrap().0.to_string()
            }
        })
        .collect()
}

#[test]
fn study_writes_reproducible_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = mlppde(&[
            "study",
            "--f",
            "linear:1",
            "--g",
            "constant:1",
            "--T",
            "1",
            "--reference",
            "ode",
            "--levels",
            "1:3",
            "--seeds",
            "4",
            "--seed",
            "7",
            "--threads",
            threads,
            "--output",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let a = run("a", "1");
    let b = run("b", "2");
    let rows = rows_without_wall_time(&a.join("rows.csv"));
    assert_eq!(rows, rows_without_wall_time(&b.join("rows.csv")));
    assert!(rows.iter().any(|l| l == "# root_seed=7"));
    assert!(rows.iter().any(|l| l.starts_with("# build=")));
    assert!(rows.iter().any(|l| l.starts_with("# f=linear:1")));
    let header = rows.iter().find(|l| !l.starts_with('#')).unwrap();
    assert!(*header == "problem,d,T,t,n,M,seed,estimate,reference,abs_error,f_evals,g_evals,scalar_draws");
    assert_eq!(rows.iter().filter(|l| !l.starts_with('#')).count(), 1 + 3 * 4);

    let summary = std::fs::read_to_string(a.join("summary.csv")).unwrap();
    assert!(summary.contains("n,M,rmse,mean_cost_total,slope_fit_running"));
    assert!(summary.contains("# root_seed=7"));
}

#[test]
fn oracle_subcommand() {
    let o = mlppde(&[
        "oracle",
        "--oracle",
        "ode-picard",
        "--f",
        "linear:1",
        "--g",
        "constant:1",
        "--T",
        "1",
        "--n",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: f64 = field(&stdout(&o), "value").parse().unwrap();
    assert!((v - 2.5).abs() < 1e-12);

    let o = mlppde(&["oracle", "--oracle", "hopf", "--d", "2", "--g", "norm_sq", "--x", "2,0"]);
    let v: f64 = field(&stdout(&o), "value").parse().unwrap();
    assert!((v - 4.0 / 3.0).abs() < 1e-6);

    let o = mlppde(&[
        "oracle",
        "--oracle",
        "cole-hopf",
        "--d",
        "2",
        "--g",
        "dot:1;1",
        "--lambda",
        "1",
        "--T",
        "0.5",
        "--samples",
        "20000",
    ]);
    let mean: f64 = field(&stdout(&o), "mean").parse().unwrap();
    let se: f64 = field(&stdout(&o), "std_error").parse().unwrap();
    assert!((mean + 1.0).abs() <= 4.0 * se);

    let o = mlppde(&["oracle", "--oracle", "feynman-kac", "--f", "allen-cahn", "--g", "sum"]);
    assert!(!o.status.success());
    assert_eq!(stderr(&o).lines().count(), 1);
}
