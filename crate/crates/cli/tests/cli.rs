use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use pkf_cli::{commands, Experiment, RunConfig, PRESETS};

fn pkf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pkf")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> String {
    let out = pkf(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn presets_round_trip() {
    for (name, _) in PRESETS {
        let cfg = RunConfig::preset(name).unwrap();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg, "{name}");
        assert_eq!(back.to_toml().unwrap(), text);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let out = out.to_str().unwrap();
        run_ok(&["simulate", "--preset", "uganda_sirh", "--steps", "400", "--seed", "17", "--out", out]);
        run_ok(&["filter", "--preset", "uganda_sirh", "--steps", "400", "--seed", "17", "--out", out]);
        run_ok(&["benchmark", "--preset", "uganda_sirh", "--steps", "300", "--trials", "2", "--out", out]);
        run_ok(&["steady-state", "--preset", "contagious", "--out", out]);
        run_ok(&["derive-params", "--preset", "uganda_sirh", "--out", out]);
    }
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 9, "{names:?}");
    for name in names {
        assert_eq!(read(&a.join(&name)), read(&b.join(&name)), "{name:?}");
    }

    let c = dir.path().join("c");
    run_ok(&["simulate", "--preset", "uganda_sirh", "--steps", "400", "--seed", "18", "--out", c.to_str().unwrap()]);
    assert_ne!(read(&a.join("trajectory.csv")), read(&c.join("trajectory.csv")));
}

#[test]
fn filter_files_share_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["filter", "--preset", "uganda_sirh", "--steps", "250", "--out", out]);
    let rows = |name: &str| -> Vec<Vec<String>> {
        let mut r = csv::Reader::from_path(dir.path().join(name)).unwrap();
        assert_eq!(
            r.headers().unwrap().iter().collect::<Vec<_>>(),
            ["step", "component", "truth", "estimate", "p_diag", "observation"]
        );
        r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
    };
    let pkf = rows("estimates_pkf.csv");
    let kf = rows("estimates_kf.csv");
    assert_eq!(pkf.len(), 4 * 250);
    assert_eq!(kf.len(), pkf.len());
    let column = |rows: &[Vec<String>], i: usize| rows.iter().map(|r| r[i].clone()).collect::<Vec<_>>();
    assert_eq!(column(&pkf, 2), column(&kf, 2));
    assert_eq!(column(&pkf, 5), column(&kf, 5));
    assert_ne!(column(&pkf, 3), column(&kf, 3));
    // only I and H are observed
    assert!(pkf.iter().all(|r| r[5].is_empty() == (r[1] == "S" || r[1] == "R")));
}

#[test]
fn benchmark_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let text = RunConfig::preset("uganda_sirh")
        .unwrap()
        .to_toml()
        .unwrap()
        .replace("noise_multipliers = [1.0, 2.0, 4.0]", "noise_multipliers = [1.0]");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let start = Instant::now();
    run_ok(&["benchmark", "--config", &cfg, "--trials", "1", "--steps", "100", "--out", out.to_str().unwrap()]);
    assert!(start.elapsed().as_secs_f64() < 1.0, "{:?}", start.elapsed());

    let mut r = csv::Reader::from_path(out.join("rmse.csv")).unwrap();
    let filters: Vec<String> = r.records().map(|x| x.unwrap()[0].to_string()).collect();
    assert_eq!(filters.len(), 3 * 4);
    assert!(filters.iter().any(|f| f == "oracle"));
    let cov = std::fs::read_to_string(out.join("coverage.csv")).unwrap();
    assert!(cov.starts_with("filter,noise_multiplier,component,coverage,n_trials,n_steps\n"));
    assert!(out.join("rmse.dat").exists());
}

#[test]
fn derive_params_prints_rates() {
    let dir = tempfile::tempdir().unwrap();
    let text = run_ok(&["derive-params", "--preset", "uganda_sir", "--out", dir.path().to_str().unwrap()]);
    assert!(text.contains("d_R        0.000142433"), "{text}");
    let mut r = csv::Reader::from_path(dir.path().join("derived_rates.csv")).unwrap();
    let d_r: f64 = r
        .records()
        .map(|x| x.unwrap())
        .find(|x| &x[0] == "d_R")
        .unwrap()[1]
        .parse()
        .unwrap();
    assert_eq!(d_r, (0.077 - 0.029) / 337.0);

    let sirh = run_ok(&["derive-params", "--preset", "uganda_sirh", "--out", dir.path().to_str().unwrap()]);
    assert!(sirh.contains(&format!("h          {}", commands::sig6(3.0 / 22.34 / 337.0))), "{sirh}");
}

#[test]
fn steady_state_of_empty_population_is_zero() {
    let mut cfg = RunConfig::preset("uganda_sirh").unwrap();
    let dir = tempfile::tempdir().unwrap();
    cfg.inputs.births_per_day = 0.0;
    cfg.output_dir = dir.path().to_path_buf();
    let report = commands::steady_state(&Experiment::new(cfg).unwrap(), &mut std::io::sink()).unwrap();
    assert!(report.closed_form.iter().all(|v| *v == 0.0));
    assert!(report.numeric.iter().all(|v| *v == 0.0));
}

#[test]
fn noise_free_simulation_reaches_steady_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        output_dir: dir.path().to_path_buf(),
        ..RunConfig::preset("uganda_sir").unwrap()
    };
    let exp = Experiment::new(cfg).unwrap();
    let report = commands::simulate(&exp, &mut std::io::sink()).unwrap();
    let last = report.trajectory.truth.last().unwrap();
    for i in 0..3 {
        let rel = (last[i] - exp.steady_state[i]).abs() / exp.steady_state[i];
        assert!(rel < 1e-3, "component {i}: {rel}");
    }
}

#[test]
fn annual_deaths_match_published_scale() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::preset("uganda_sirh").unwrap();
    cfg.noise_multipliers = vec![0.0];
    cfg.initial = pkf_cli::config::StateSpec::Named(pkf_cli::config::NamedState::Zero);
    cfg.n_steps = 3650;
    cfg.output_dir = dir.path().to_path_buf();
    let report = commands::filter(&Experiment::new(cfg).unwrap(), &mut std::io::sink()).unwrap();
    let deaths = report.annual_deaths.unwrap();
    assert!((deaths.sepsis - 11000.0).abs() <= 0.3 * 11000.0, "{deaths:?}");
    assert!((deaths.hydrocephalus - 3300.0).abs() <= 0.3 * 3300.0, "{deaths:?}");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = pkf(&["steady-state"]);
    assert_eq!(out.status.code(), Some(2));

    let text = PRESETS[0].1.replace("infant_days = 365.0", "infant_days = 28.0");
    let cfg = write_config(dir.path(), &text);
    let out = pkf(&["derive-params", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("infant_days"));

    let cfg = write_config(dir.path(), &format!("typo_key = 3\n{}", PRESETS[0].1));
    let out = pkf(&["steady-state", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo_key"));

    assert_eq!(pkf(&["simulate", "--preset", "no_such_preset"]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3_with_step() {
    let dir = tempfile::tempdir().unwrap();
    // B = 0 and V = 0 make the innovation covariance singular at the first update
    let text = PRESETS[1]
        .1
        .replace("c_i = 0.0071428571428571435", "c_i = 0.0")
        .replace("c_h = 0.0017804154302670622", "c_h = 0.0")
        .replace("reference = \"steady_state\"", "reference = \"zero\"");
    let cfg = write_config(dir.path(), &text);
    let out = pkf(&["filter", "--config", &cfg, "--steps", "10", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step 1"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unwritable_output_fails() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = pkf(&["simulate", "--preset", "uganda_sir", "--out", blocker.join("sub").to_str().unwrap()]);
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(1));
}
