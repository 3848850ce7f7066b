use std::path::{Path, PathBuf};
use std::process::Command as Proc;

use levicool::cli::{self, execute, Command, EXIT_ALL_UNSTABLE, EXIT_CONFIG, EXIT_NUMERICAL};
use levicool::config::{parse_config, RunConfig};

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("{name}.toml"))
}

fn config(name: &str) -> RunConfig {
    parse_config(&config_path(name)).unwrap()
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn bin() -> Proc {
    Proc::new(env!("CARGO_BIN_EXE_levicool"))
}

#[test]
fn config_round_trip() {
    for name in [
        "sweep_prolate",
        "sweep_oblate",
        "sweep_near_spherical",
        "shape_grid",
        "spectra",
        "simulate",
    ] {
        let cfg = config(name);
        let text = cfg.to_toml_string().unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back, "{name}");
        assert_eq!(text, back.to_toml_string().unwrap(), "{name}");
    }
}

#[test]
fn config_rejects_bad_input() {
    let base = std::fs::read_to_string(config_path("sweep_prolate")).unwrap();
    let unknown = base.replace("[cavity]", "[cavity]\nfinesse = 3.0");
    assert!(RunConfig::from_toml_str(&unknown).is_err());
    let unordered = base.replace("[40.0, 60.0, 140.0]", "[140.0, 60.0, 40.0]");
    assert!(RunConfig::from_toml_str(&unordered).is_err());
    let psi = base.replace(
        "ellipticity_rad = 0.5235987755982988",
        "ellipticity_rad = 1.0",
    );
    assert!(RunConfig::from_toml_str(&psi).is_err());
}

#[test]
fn sweep_has_one_row_per_grid_point() {
    let cfg = config("sweep_prolate");
    assert_eq!(cfg.sweep.ellipticity.unwrap().steps, 101);
    let rows = cli::run_ellipticity_sweep(&cfg, Some(1)).unwrap();
    let mut buf = Vec::new();
    cli::write_sweep_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines = data_lines(&text);
    assert_eq!(lines.len(), 102);
    let width = lines[0].split(',').count();
    assert!(lines.iter().all(|l| l.split(',').count() == width));
    let first: f64 = lines[1].split(',').next().unwrap().parse().unwrap();
    let last: f64 = lines[101].split(',').next().unwrap().parse().unwrap();
    assert_eq!(first, 0.0);
    // values are written with 11 significant digits
    assert!((last - std::f64::consts::FRAC_PI_4).abs() < 1e-10);
}

#[test]
fn spectra_without_corrections_has_only_base_columns() {
    let mut cfg = config("spectra");
    cfg.spectra.langevin = None;
    cfg.spectra.points = 257;
    cfg.spectra.corrections = false;
    let out = tempfile::tempdir().unwrap();
    execute(Command::Spectra, &cfg, out.path(), 1, Some(1)).unwrap();
    let text = std::fs::read_to_string(out.path().join("spectra.csv")).unwrap();
    let lines = data_lines(&text);
    assert_eq!(lines[0], "omega_rad_s,S0_mode1,S0_mode2");
    assert_eq!(lines.len(), 258);
    assert!(!out.path().join("spectra_langevin.csv").exists());

    cfg.spectra.corrections = true;
    execute(Command::Spectra, &cfg, out.path(), 1, Some(1)).unwrap();
    let text = std::fs::read_to_string(out.path().join("spectra.csv")).unwrap();
    assert_eq!(
        data_lines(&text)[0],
        "omega_rad_s,S0_mode1,S0_mode2,Scor_alpha,Scor_beta,Scor_gamma"
    );
}

#[test]
fn zero_duration_writes_header_only() {
    let mut cfg = config("simulate");
    cfg.simulate.duration_periods = 0.0;
    let out = tempfile::tempdir().unwrap();
    execute(Command::Simulate, &cfg, out.path(), 1, Some(1)).unwrap();
    let text = std::fs::read_to_string(out.path().join("trajectory.csv")).unwrap();
    assert_eq!(data_lines(&text).len(), 1);
}

#[test]
fn spectra_at_unstable_point_names_the_mode() {
    let mut cfg = config("spectra");
    cfg.spectra.langevin = None;
    cfg.tweezer.ellipticity_rad = std::f64::consts::FRAC_PI_4;
    let out = tempfile::tempdir().unwrap();
    let err = execute(Command::Spectra, &cfg, out.path(), 1, Some(1)).unwrap_err();
    assert_eq!(err.code, EXIT_NUMERICAL);
    assert!(err.message.contains("alpha"), "{}", err.message);
}

#[test]
fn all_unstable_sweep_exit_code() {
    let mut cfg = config("sweep_prolate");
    let r = cfg.sweep.ellipticity.as_mut().unwrap();
    r.start = std::f64::consts::FRAC_PI_4;
    r.steps = 2;
    let out = tempfile::tempdir().unwrap();
    let err = execute(Command::SweepEllipticity, &cfg, out.path(), 1, Some(1)).unwrap_err();
    assert_eq!(err.code, EXIT_ALL_UNSTABLE);
    assert!(out.path().join("sweep_ellipticity.csv").exists());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = 1\n[particle]\ndiameters_nm = [1.0]\n").unwrap();
    let st = bin()
        .args(["linearize", "--config"])
        .arg(&bad)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(EXIT_CONFIG));

    let missing = dir.path().join("missing.toml");
    let st = bin()
        .args(["linearize", "--config"])
        .arg(&missing)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(EXIT_CONFIG));

    let out = dir.path().join("lin");
    let o = bin()
        .args(["linearize", "--config"])
        .arg(config_path("sweep_prolate"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for f in ["linearize.csv", "couplings.csv", "normal_modes.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 3);
}
