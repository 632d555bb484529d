use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn chb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chb"))
        .args(args)
        .env("CHB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = chb(&["validate", "--out", path(dir.path())]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    assert!(!stdout.contains("FAIL"));
    assert!(dir.path().join("validate.txt").exists());
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.cfg");
    let out = chb(&["run", "--config", path(&missing), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.cfg"));
}

#[test]
fn invalid_value_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "grid.nx = 16\nphys.nu = -1\n").unwrap();
    let out = chb(&["run", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2: phys.nu must be ≥ 0"), "{err}");
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_chb"))
        .args(["validate"])
        .env("CHB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_diagnostics_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "grid.nx = 16\ngrid.ny = 16\nphys.eps = 0.1\nsolver.t_end = 0.02\nsolver.snapshot_every = 10\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = chb(&["run", "--config", path(&cfg), "--out", path(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,mass,energy,grad_mu_sq,visc_diss,darcy_diss,residual,phi_l2,phi_h1"
    );
    assert_eq!(lines.count(), 21);
    for step in [0, 10, 20] {
        assert!(out_dir.join(format!("phi_{step:08}.chbf")).exists());
        assert!(out_dir.join(format!("u_{step:08}.chbf")).exists());
    }

    // same config, same bytes
    let again = dir.path().join("again");
    chb(&["run", "--config", path(&cfg), "--out", path(&again)]);
    assert_eq!(csv, fs::read_to_string(again.join("diagnostics.csv")).unwrap());
}

#[test]
fn sweep_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    fs::write(
        &cfg,
        "# small grid, short horizon\ngrid.nx = 16\ngrid.ny = 16\nphys.eps = 0.15\ninit.kind = smooth\ninit.amplitude = 0.4\nsweep.t_end = 0.05\n",
    )
    .unwrap();
    let out = chb(&["sweep", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "nu,sup_phi_diff_h1_sq,int_u_diff_sq,runtime_s");
    assert_eq!(lines.count(), 4);
    let report = fs::read_to_string(dir.path().join("sweep_report.txt")).unwrap();
    assert!(report.contains("slope") && report.contains("C_T"));
}

#[test]
fn file_initial_condition_grid_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("a.cfg");
    fs::write(&cfg, "grid.nx = 8\ngrid.ny = 8\nsolver.t_end = 0\nsolver.snapshot_every = 1\n").unwrap();
    let first = dir.path().join("first");
    assert_eq!(chb(&["run", "--config", path(&cfg), "--out", path(&first)]).status.code(), Some(0));
    let snap = first.join("phi_00000000.chbf");
    assert!(snap.exists());

    let cfg2 = dir.path().join("b.cfg");
    fs::write(
        &cfg2,
        format!("grid.nx = 16\ngrid.ny = 16\nsolver.t_end = 0\ninit.kind = file\ninit.path = {}\n", snap.display()),
    )
    .unwrap();
    let out = chb(&["run", "--config", path(&cfg2), "--out", path(&dir.path().join("second"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid"));
}

#[test]
fn depend_probe_equilibrium_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    fs::write(
        &cfg,
        "grid.nx = 8\ngrid.ny = 8\nphys.eps = 0.3\nsolver.dt = 0.01\ninit.kind = smooth\ninit.amplitude = 0.5\n\
         depend.t_end = 0.05\nequilibrium.t_end = 2\nprobe.t_max = 0.5\nprobe.radii = 1, 2\n",
    )
    .unwrap();
    for (cmd, file) in [
        ("depend", "depend_report.txt"),
        ("equilibrium", "equilibrium_report.txt"),
        ("probe", "probe_report.txt"),
    ] {
        let out = chb(&[cmd, "--config", path(&cfg), "--out", path(dir.path())]);
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(dir.path().join(file).exists(), "{cmd}");
    }
}
