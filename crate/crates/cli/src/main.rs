use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::{info, warn};

use chb_core::chb::run;
use chb_core::config::{load_config, RunConfig};
use chb_core::equilibrium::{relaxation_study, write_relaxation_report};
use chb_core::experiments::{continuous_dependence, dissipativity_probe, perturbation, viscosity_sweep};
use chb_core::initial::make_initial;
use chb_core::output::{ensure_dir, write_diagnostics, write_report, write_run};
use chb_core::validate::{all_passed, run_validation};
use chb_core::ChbError;

const EXIT_FAILED_CHECK: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "chb", version, about = "Cahn–Hilliard–Brinkman / Hele-Shaw phase-field solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Configuration file (flat `key = value`); defaults are used when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output.dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Single simulation: diagnostics CSV and snapshots.
    Run(Common),
    /// Viscosity sweep against the ν = 0 reference.
    Sweep(Common),
    /// Continuous dependence on the initial data.
    Depend(Common),
    /// Long relaxation run, stationary limit and decay-rate fit.
    Equilibrium(Common),
    /// Absorbing-ball probe over several initial radii.
    Probe(Common),
    /// Invariant suite on small grids.
    Validate(Common),
}

enum Failure {
    Config(String),
    Numerical(String),
    Check,
}

impl From<ChbError> for Failure {
    fn from(e: ChbError) -> Self {
        if e.is_config_error() || matches!(e, ChbError::Io { .. } | ChbError::GridMismatch(_)) {
            Failure::Config(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), Failure> {
    let cfg = match &common.config {
        Some(p) => load_config(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    ensure_dir(&out)?;
    Ok((cfg, out))
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("CHB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Config(format!("CHB_THREADS must be a positive integer (got `{v}`)")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(format!("cannot size thread pool: {e}")))
}

fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let phi0 = make_initial(&cfg.init, &cfg.grid, cfg.solver.bc, cfg.phys.eps)?;
    let result = run(&phi0, &cfg.phys, &cfg.potential, &cfg.solver)?;
    let files = write_run(out, &result)?;
    let m0 = phi0.mean();
    let drift = result.stats.means.iter().fold(0.0f64, |d, m| d.max((m - m0).abs()));
    let mut s = String::new();
    s.push_str(&format!("steps {}\n", result.stats.steps));
    s.push_str(&format!("t_final {:.6e}\n", result.final_state.t));
    if let Some(e) = result.stats.energies.last() {
        s.push_str(&format!("energy_final {e:.16e}\n"));
    }
    s.push_str(&format!("mass_drift {drift:.3e}\n"));
    s.push_str(&format!("max_identity_error {:.3e}\n", result.stats.max_identity_error));
    s.push_str(&format!("max_cfl {:.3e}\n", result.stats.max_cfl));
    s.push_str(&format!("flow_iterations {}\n", result.stats.flow_iterations));
    if let Some(e) = &result.failure {
        s.push_str(&format!("failure {e}\n"));
    }
    write_report(&out.join("summary.txt"), &s)?;
    info!("wrote {} files to {}", files.len() + 1, out.display());
    match result.failure {
        Some(e) => Err(Failure::Numerical(e.to_string())),
        None => Ok(()),
    }
}

fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let phi0 = make_initial(&cfg.init, &cfg.grid, cfg.solver.bc, cfg.phys.eps)?;
    let solver = chb_core::chb::SolverConfig {
        t_end: cfg.sweep.t_end,
        ..cfg.solver.clone()
    };
    let s = viscosity_sweep(&phi0, &cfg.sweep.nu_list, &cfg.phys, &cfg.potential, &solver)?;
    s.write_csv(&out.join("sweep.csv"))?;
    write_report(&out.join("sweep_report.txt"), &s.report())?;
    print!("{}", s.report());
    Ok(())
}

fn cmd_depend(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let phi1 = make_initial(&cfg.init, &cfg.grid, cfg.solver.bc, cfg.phys.eps)?;
    let phi2 = phi1.add(&perturbation(&cfg.grid, cfg.solver.bc, cfg.depend.delta, cfg.depend.seed));
    let solver = chb_core::chb::SolverConfig {
        t_end: cfg.depend.t_end,
        ..cfg.solver.clone()
    };
    let r = continuous_dependence(&phi1, &phi2, &cfg.phys, &cfg.potential, &solver)?;
    let rows: Vec<_> = r.times.iter().zip(&r.gap).collect();
    let mut csv = String::from("t,gap_h1_sq\n");
    for (t, g) in rows {
        csv.push_str(&format!("{t:.16e},{g:.16e}\n"));
    }
    write_report(&out.join("depend.csv"), &csv)?;
    let mut s = String::new();
    s.push_str(&format!("delta0 {:.6e}\n", r.delta0));
    s.push_str(&format!("max_gap {:.6e}\n", r.max_gap()));
    s.push_str(&format!("amplification {:.6e}\n", r.amplification));
    s.push_str(&format!("k_fit {:.6e}\n", r.k_fit));
    s.push_str(&format!("velocity_gap_integral {:.6e}\n", r.velocity_gap_integral));
    s.push_str(&format!("within_bound {}\n", r.within_bound()));
    write_report(&out.join("depend_report.txt"), &s)?;
    print!("{s}");
    Ok(())
}

fn cmd_equilibrium(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let phi0 = make_initial(&cfg.init, &cfg.grid, cfg.solver.bc, cfg.phys.eps)?;
    let solver = chb_core::chb::SolverConfig {
        t_end: cfg.equilibrium.t_end,
        ..cfg.solver.clone()
    };
    let study = relaxation_study(
        &phi0,
        &cfg.phys,
        &cfg.potential,
        &solver,
        cfg.equilibrium.window,
        cfg.equilibrium.tol,
    )?;
    write_diagnostics(&out.join("diagnostics.csv"), &study.records)?;
    write_relaxation_report(&study, &out.join("equilibrium_report.txt"))?;
    let mut csv = String::from("t,phi_distance_h1\n");
    for (t, d) in &study.phi_distance {
        csv.push_str(&format!("{t:.16e},{d:.16e}\n"));
    }
    write_report(&out.join("phi_distance.csv"), &csv)?;
    match &study.fit {
        Ok(fit) => fit.write_csv(&out.join("rate_fit.csv"))?,
        Err(e) => warn!("no decay fit: {e}"),
    }
    println!(
        "final residual {:.3e}, final ‖u‖₁ {:.3e}, energy monotone {}",
        study.final_residual, study.final_velocity, study.energy_monotone
    );
    Ok(())
}

fn cmd_probe(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let solver = chb_core::chb::SolverConfig {
        t_end: cfg.probe.t_max,
        ..cfg.solver.clone()
    };
    let r = dissipativity_probe(
        &cfg.grid,
        &cfg.probe.radii,
        cfg.probe.mean,
        &cfg.phys,
        &cfg.potential,
        &solver,
    )?;
    let mut csv = String::from("radius,t,phi_h1\n");
    for (radius, series) in r.radii.iter().zip(&r.norms) {
        for (t, n) in series {
            csv.push_str(&format!("{radius:.16e},{t:.16e},{n:.16e}\n"));
        }
    }
    write_report(&out.join("probe.csv"), &csv)?;
    write_report(&out.join("probe_report.txt"), &r.report())?;
    print!("{}", r.report());
    Ok(())
}

fn cmd_validate(out: &Path) -> Result<(), Failure> {
    let checks = run_validation();
    let mut text = String::new();
    for c in &checks {
        println!("{}", c.line());
        text.push_str(&c.line());
        text.push('\n');
    }
    write_report(&out.join("validate.txt"), &text)?;
    if all_passed(&checks) {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    init_threads()?;
    let t0 = Instant::now();
    let (name, common) = match &cli.command {
        Command::Run(c) => ("run", c),
        Command::Sweep(c) => ("sweep", c),
        Command::Depend(c) => ("depend", c),
        Command::Equilibrium(c) => ("equilibrium", c),
        Command::Probe(c) => ("probe", c),
        Command::Validate(c) => ("validate", c),
    };
    let (cfg, out) = load(common)?;
    info!("{name}: output in {}", out.display());
    let r = match cli.command {
        Command::Run(_) => cmd_run(&cfg, &out),
        Command::Sweep(_) => cmd_sweep(&cfg, &out),
        Command::Depend(_) => cmd_depend(&cfg, &out),
        Command::Equilibrium(_) => cmd_equilibrium(&cfg, &out),
        Command::Probe(_) => cmd_probe(&cfg, &out),
        Command::Validate(_) => cmd_validate(&out),
    };
    info!("{name} finished in {:.2}s", t0.elapsed().as_secs_f64());
    r
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(Failure::Check) => {
            eprintln!("validation failed");
            ExitCode::from(EXIT_FAILED_CHECK)
        }
    }
}
