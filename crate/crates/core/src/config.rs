//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! grid.nx = 64
//! phys.nu = 1e-2
//! sweep.nu_list = 1e-1, 1e-2, 1e-3
//! ```
//!
//! Unknown keys, duplicates and out-of-range values are rejected with the
//! offending line number. Absent keys take their defaults.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::chb::SolverConfig;
use crate::flow::PhysParams;
use crate::grid::{GridSpec, ScalarBc};
use crate::initial::{InitKind, InitSpec};
use crate::potential::Potential;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based; 0 when the error is not tied to a line.
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            write!(f, "{}", self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub nu_list: Vec<f64>,
    pub t_end: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            nu_list: vec![1e-1, 1e-2, 1e-3, 1e-4],
            t_end: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DependConfig {
    /// H¹ size of the perturbation.
    pub delta: f64,
    pub seed: u64,
    pub t_end: f64,
}

impl Default for DependConfig {
    fn default() -> Self {
        DependConfig {
            delta: 1e-6,
            seed: 7,
            t_end: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumConfig {
    pub t_end: f64,
    /// Tolerance of the stationary polish of the final state.
    pub tol: f64,
    /// Fit window; `None` uses the whole run.
    pub window: Option<(f64, f64)>,
}

impl Default for EquilibriumConfig {
    fn default() -> Self {
        EquilibriumConfig {
            t_end: 50.0,
            tol: 1e-10,
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub radii: Vec<f64>,
    pub mean: f64,
    pub t_max: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            radii: vec![1.0, 2.0, 4.0],
            mean: 0.0,
            t_max: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub phys: PhysParams,
    pub potential: Potential,
    pub solver: SolverConfig,
    pub init: InitSpec,
    pub output_dir: PathBuf,
    pub sweep: SweepConfig,
    pub depend: DependConfig,
    pub equilibrium: EquilibriumConfig,
    pub probe: ProbeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: GridSpec::unit_square(64).expect("valid default grid"),
            phys: PhysParams::default(),
            potential: Potential::Quartic,
            solver: SolverConfig::default(),
            init: InitSpec::default(),
            output_dir: PathBuf::from("out"),
            sweep: SweepConfig::default(),
            depend: DependConfig::default(),
            equilibrium: EquilibriumConfig::default(),
            probe: ProbeConfig::default(),
        }
    }
}

const KEYS: &[&str] = &[
    "grid.nx",
    "grid.ny",
    "grid.lx",
    "grid.ly",
    "phys.nu",
    "phys.eta",
    "phys.mobility",
    "phys.eps",
    "phys.gamma",
    "potential.kind",
    "potential.coeffs",
    "solver.dt",
    "solver.t_end",
    "solver.stab",
    "solver.bc",
    "solver.cadence",
    "solver.snapshot_every",
    "flow.tol",
    "flow.max_iters",
    "init.kind",
    "init.value",
    "init.mean",
    "init.amplitude",
    "init.seed",
    "init.modes",
    "init.width",
    "init.center",
    "init.path",
    "output.dir",
    "sweep.nu_list",
    "sweep.t_end",
    "depend.delta",
    "depend.seed",
    "depend.t_end",
    "equilibrium.t_end",
    "equilibrium.tol",
    "equilibrium.window",
    "probe.radii",
    "probe.mean",
    "probe.t_max",
];

struct Parser {
    lines: HashMap<String, usize>,
}

impl Parser {
    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.lines.get(key).copied().unwrap_or(0),
            key: key.to_string(),
            message: message.into(),
        }
    }
}

fn parse_f64(p: &Parser, key: &str, v: &str) -> Result<f64, ConfigError> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(p.err(key, format!("{key} must be a finite number (got `{v}`)"))),
    }
}

fn parse_usize(p: &Parser, key: &str, v: &str) -> Result<usize, ConfigError> {
    v.parse::<usize>()
        .map_err(|_| p.err(key, format!("{key} must be a non-negative integer (got `{v}`)")))
}

fn parse_u64(p: &Parser, key: &str, v: &str) -> Result<u64, ConfigError> {
    v.parse::<u64>()
        .map_err(|_| p.err(key, format!("{key} must be a non-negative integer (got `{v}`)")))
}

fn parse_list(p: &Parser, key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    let v = v.trim().trim_start_matches('[').trim_end_matches(']');
    if v.trim().is_empty() {
        return Err(p.err(key, format!("{key} must not be empty")));
    }
    v.split(',').map(|s| parse_f64(p, key, s.trim())).collect()
}

fn positive(p: &Parser, key: &str, x: f64) -> Result<f64, ConfigError> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(p.err(key, format!("{key} must be > 0")))
    }
}

fn non_negative(p: &Parser, key: &str, x: f64) -> Result<f64, ConfigError> {
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(p.err(key, format!("{key} must be ≥ 0")))
    }
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

/// Parses and validates a configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut entries: Vec<(String, String)> = Vec::new();
    let mut lines = HashMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError {
                line,
                key: String::new(),
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError {
                line,
                message: format!("unknown key `{key}`"),
                key,
            });
        }
        if lines.insert(key.clone(), line).is_some() {
            return Err(ConfigError {
                line,
                message: format!("duplicate key `{key}`"),
                key,
            });
        }
        if value.is_empty() {
            return Err(ConfigError {
                line,
                message: format!("missing value for `{key}`"),
                key,
            });
        }
        entries.push((key, value));
    }
    let p = Parser { lines };
    let mut cfg = RunConfig::default();
    let (mut nx, mut ny, mut lx, mut ly) = (64usize, 64usize, 1.0f64, 1.0f64);
    let mut pot_kind = "quartic".to_string();
    let mut coeffs: Option<Vec<f64>> = None;

    for (key, v) in &entries {
        let key = key.as_str();
        let v = v.as_str();
        match key {
            "grid.nx" => nx = parse_usize(&p, key, v)?,
            "grid.ny" => ny = parse_usize(&p, key, v)?,
            "grid.lx" => lx = positive(&p, key, parse_f64(&p, key, v)?)?,
            "grid.ly" => ly = positive(&p, key, parse_f64(&p, key, v)?)?,
            "phys.nu" => cfg.phys.nu = non_negative(&p, key, parse_f64(&p, key, v)?)?,
            "phys.eta" => cfg.phys.eta = non_negative(&p, key, parse_f64(&p, key, v)?)?,
            "phys.mobility" => cfg.phys.mobility = positive(&p, key, parse_f64(&p, key, v)?)?,
            "phys.eps" => cfg.phys.eps = positive(&p, key, parse_f64(&p, key, v)?)?,
            "phys.gamma" => cfg.phys.gamma = positive(&p, key, parse_f64(&p, key, v)?)?,
            "potential.kind" => {
                if v != "quartic" && v != "polynomial" {
                    return Err(p.err(key, format!("potential.kind must be quartic or polynomial (got `{v}`)")));
                }
                pot_kind = v.to_string();
            }
            "potential.coeffs" => coeffs = Some(parse_list(&p, key, v)?),
            "solver.dt" => cfg.solver.dt = positive(&p, key, parse_f64(&p, key, v)?)?,
            "solver.t_end" => cfg.solver.t_end = non_negative(&p, key, parse_f64(&p, key, v)?)?,
            "solver.stab" => {
                cfg.solver.stab = if v == "auto" {
                    None
                } else {
                    Some(non_negative(&p, key, parse_f64(&p, key, v)?)?)
                }
            }
            "solver.bc" => {
                cfg.solver.bc = match v {
                    "neumann" => ScalarBc::Neumann,
                    "periodic" => ScalarBc::Periodic,
                    _ => return Err(p.err(key, format!("solver.bc must be neumann or periodic (got `{v}`)"))),
                }
            }
            "solver.cadence" => {
                let c = parse_usize(&p, key, v)?;
                if c == 0 {
                    return Err(p.err(key, "solver.cadence must be ≥ 1"));
                }
                cfg.solver.cadence = c;
            }
            "solver.snapshot_every" => {
                let c = parse_usize(&p, key, v)?;
                cfg.solver.snapshot_every = (c > 0).then_some(c);
            }
            "flow.tol" => cfg.solver.flow_tol = positive(&p, key, parse_f64(&p, key, v)?)?,
            "flow.max_iters" => {
                let c = parse_usize(&p, key, v)?;
                if c == 0 {
                    return Err(p.err(key, "flow.max_iters must be ≥ 1"));
                }
                cfg.solver.flow_max_iters = c;
            }
            "init.kind" => {
                cfg.init.kind = InitKind::parse(v).ok_or_else(|| {
                    p.err(
                        key,
                        format!("init.kind must be one of constant, spinodal, smooth, stripe, file (got `{v}`)"),
                    )
                })?
            }
            "init.value" => cfg.init.value = parse_f64(&p, key, v)?,
            "init.mean" => cfg.init.mean = parse_f64(&p, key, v)?,
            "init.amplitude" => cfg.init.amplitude = non_negative(&p, key, parse_f64(&p, key, v)?)?,
            "init.seed" => cfg.init.seed = parse_u64(&p, key, v)?,
            "init.modes" => {
                let m = parse_usize(&p, key, v)?;
                if m == 0 {
                    return Err(p.err(key, "init.modes must be ≥ 1"));
                }
                cfg.init.modes = m;
            }
            "init.width" => cfg.init.width = positive(&p, key, parse_f64(&p, key, v)?)?,
            "init.center" => cfg.init.center = parse_f64(&p, key, v)?,
            "init.path" => cfg.init.path = Some(PathBuf::from(unquote(v))),
            "output.dir" => cfg.output_dir = PathBuf::from(unquote(v)),
            "sweep.nu_list" => {
                let l = parse_list(&p, key, v)?;
                if l.iter().any(|&x| x <= 0.0) {
                    return Err(p.err(key, "sweep.nu_list values must be > 0"));
                }
                if l.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(p.err(key, "sweep.nu_list must be strictly decreasing"));
                }
                cfg.sweep.nu_list = l;
            }
            "sweep.t_end" => cfg.sweep.t_end = positive(&p, key, parse_f64(&p, key, v)?)?,
            "depend.delta" => cfg.depend.delta = positive(&p, key, parse_f64(&p, key, v)?)?,
            "depend.seed" => cfg.depend.seed = parse_u64(&p, key, v)?,
            "depend.t_end" => cfg.depend.t_end = positive(&p, key, parse_f64(&p, key, v)?)?,
            "equilibrium.t_end" => cfg.equilibrium.t_end = positive(&p, key, parse_f64(&p, key, v)?)?,
            "equilibrium.tol" => cfg.equilibrium.tol = positive(&p, key, parse_f64(&p, key, v)?)?,
            "equilibrium.window" => {
                cfg.equilibrium.window = if v == "auto" {
                    None
                } else {
                    let l = parse_list(&p, key, v)?;
                    if l.len() != 2 || !(l[0] >= 0.0 && l[1] > l[0]) {
                        return Err(p.err(key, "equilibrium.window must be `auto` or `lo, hi` with 0 ≤ lo < hi"));
                    }
                    Some((l[0], l[1]))
                }
            }
            "probe.radii" => {
                let l = parse_list(&p, key, v)?;
                if l.iter().any(|&x| x <= 0.0) {
                    return Err(p.err(key, "probe.radii values must be > 0"));
                }
                cfg.probe.radii = l;
            }
            "probe.mean" => cfg.probe.mean = parse_f64(&p, key, v)?,
            "probe.t_max" => cfg.probe.t_max = positive(&p, key, parse_f64(&p, key, v)?)?,
            _ => unreachable!("key list and match arms agree"),
        }
    }

    // cross-key checks
    if nx < 4 {
        return Err(p.err("grid.nx", "grid.nx must be ≥ 4"));
    }
    if ny < 4 {
        return Err(p.err("grid.ny", "grid.ny must be ≥ 4"));
    }
    cfg.grid = GridSpec::new(nx, ny, lx, ly).map_err(|e| p.err("grid.nx", e.to_string()))?;
    if cfg.phys.nu == 0.0 && cfg.phys.eta == 0.0 {
        let key = if p.lines.contains_key("phys.eta") { "phys.eta" } else { "phys.nu" };
        return Err(p.err(key, "phys.eta must be > 0 when phys.nu = 0"));
    }
    if cfg.solver.bc == ScalarBc::Periodic && cfg.phys.eta == 0.0 {
        let key = if p.lines.contains_key("phys.eta") { "phys.eta" } else { "solver.bc" };
        return Err(p.err(key, "phys.eta must be > 0 when solver.bc = periodic"));
    }
    cfg.potential = match (pot_kind.as_str(), coeffs) {
        ("quartic", None) => Potential::Quartic,
        ("quartic", Some(_)) => {
            return Err(p.err("potential.coeffs", "potential.coeffs requires potential.kind = polynomial"))
        }
        (_, None) => return Err(p.err("potential.kind", "missing required key potential.coeffs")),
        (_, Some(c)) => Potential::polynomial(c).map_err(|e| p.err("potential.coeffs", e.to_string()))?,
    };
    if cfg.init.kind == InitKind::File {
        match &cfg.init.path {
            None => return Err(p.err("init.kind", "missing required key init.path")),
            Some(path) if !path.exists() => {
                return Err(p.err("init.path", format!("init.path `{}` does not exist", path.display())))
            }
            Some(_) => {}
        }
    }
    if let Some(r) = cfg
        .probe
        .radii
        .iter()
        .find(|&&r| r * r < cfg.probe.mean * cfg.probe.mean * cfg.grid.area())
    {
        return Err(p.err(
            "probe.radii",
            format!("probe radius {r} is smaller than the H¹ norm of the mean state"),
        ));
    }
    Ok(cfg)
}

/// Reads and parses a configuration file; an unreadable file is a
/// configuration error.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        line: 0,
        key: String::new(),
        message: format!("cannot read config {}: {e}", path.display()),
    })?;
    parse_config(&text)
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Serializes every key; `parse_config(&to_text(c)) == c`.
pub fn to_text(c: &RunConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    kv("grid.nx", c.grid.nx().to_string());
    kv("grid.ny", c.grid.ny().to_string());
    kv("grid.lx", c.grid.lx().to_string());
    kv("grid.ly", c.grid.ly().to_string());
    kv("phys.nu", c.phys.nu.to_string());
    kv("phys.eta", c.phys.eta.to_string());
    kv("phys.mobility", c.phys.mobility.to_string());
    kv("phys.eps", c.phys.eps.to_string());
    kv("phys.gamma", c.phys.gamma.to_string());
    match &c.potential {
        Potential::Quartic => kv("potential.kind", "quartic".into()),
        Potential::Polynomial(co) => {
            kv("potential.kind", "polynomial".into());
            kv("potential.coeffs", list(co));
        }
    }
    kv("solver.dt", c.solver.dt.to_string());
    kv("solver.t_end", c.solver.t_end.to_string());
    kv("solver.stab", c.solver.stab.map_or("auto".into(), |s| s.to_string()));
    kv(
        "solver.bc",
        match c.solver.bc {
            ScalarBc::Neumann => "neumann".into(),
            ScalarBc::Periodic => "periodic".into(),
        },
    );
    kv("solver.cadence", c.solver.cadence.to_string());
    kv("solver.snapshot_every", c.solver.snapshot_every.unwrap_or(0).to_string());
    kv("flow.tol", c.solver.flow_tol.to_string());
    kv("flow.max_iters", c.solver.flow_max_iters.to_string());
    kv("init.kind", c.init.kind.name().into());
    kv("init.value", c.init.value.to_string());
    kv("init.mean", c.init.mean.to_string());
    kv("init.amplitude", c.init.amplitude.to_string());
    kv("init.seed", c.init.seed.to_string());
    kv("init.modes", c.init.modes.to_string());
    kv("init.width", c.init.width.to_string());
    kv("init.center", c.init.center.to_string());
    if let Some(p) = &c.init.path {
        kv("init.path", format!("\"{}\"", p.display()));
    }
    kv("output.dir", format!("\"{}\"", c.output_dir.display()));
    kv("sweep.nu_list", list(&c.sweep.nu_list));
    kv("sweep.t_end", c.sweep.t_end.to_string());
    kv("depend.delta", c.depend.delta.to_string());
    kv("depend.seed", c.depend.seed.to_string());
    kv("depend.t_end", c.depend.t_end.to_string());
    kv("equilibrium.t_end", c.equilibrium.t_end.to_string());
    kv("equilibrium.tol", c.equilibrium.tol.to_string());
    kv(
        "equilibrium.window",
        c.equilibrium.window.map_or("auto".into(), |(a, b)| format!("{a}, {b}")),
    );
    kv("probe.radii", list(&c.probe.radii));
    kv("probe.mean", c.probe.mean.to_string());
    kv("probe.t_max", c.probe.t_max.to_string());
    out
}
