//! Stationary states of the Cahn–Hilliard energy at fixed mean, and decay
//! rate estimation along relaxing trajectories.

use std::io::Write;
use std::path::Path;

use log::debug;

use crate::chb::{chemical_potential, energy, energy_increases, DiagnosticsRecord, SimState, SolverConfig, Stepper};
use crate::error::{ChbError, Result};
use crate::flow::PhysParams;
use crate::grid::{h1_norm, l2_norm, laplacian, ScalarField};
use crate::potential::{Potential, STAB_RANGE_PAD};
use crate::spectral::HelmholtzOperator;

/// Fewest usable points accepted by [`fit_decay`].
pub const MIN_FIT_POINTS: usize = 5;
/// Values below this are treated as converged and dropped from fits.
pub const FIT_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct StationaryState {
    pub z: ScalarField,
    /// The constant `⟨μ⟩ = ⟨f(z)⟩/ε`.
    pub lagrange_const: f64,
    /// `‖μ − ⟨μ⟩‖`
    pub residual: f64,
    pub mean: f64,
    pub iterations: usize,
    /// Energy after every accepted iteration (starting with `z0`).
    pub energies: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub dt0: f64,
    pub dt_max: f64,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        StationaryOptions {
            tol: 1e-10,
            max_iters: 20_000,
            dt0: 1e-3,
            dt_max: 1e6,
        }
    }
}

/// `‖P₀μ(z)‖`, the distance of `z` from being stationary.
pub fn stationarity_residual(z: &ScalarField, pot: &Potential, eps: f64) -> f64 {
    l2_norm(&chemical_potential(z, pot, eps).mean_free())
}

pub fn solve_stationary(z0: &ScalarField, pot: &Potential, eps: f64, tol: f64) -> Result<StationaryState> {
    solve_stationary_with(
        z0,
        pot,
        eps,
        &StationaryOptions {
            tol,
            ..Default::default()
        },
    )
}

/// Runs the mass-conserving `H⁻¹` gradient flow (the Cahn–Hilliard flow
/// without convection) with stabilized steps that double after every
/// energy-decreasing step, until the stationarity residual is below `tol`.
pub fn solve_stationary_with(
    z0: &ScalarField,
    pot: &Potential,
    eps: f64,
    opts: &StationaryOptions,
) -> Result<StationaryState> {
    if !z0.is_finite() {
        return Err(ChbError::NonFinite("initial guess".into()));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(ChbError::param("eps", "must be > 0"));
    }
    if !(opts.tol > 0.0 && opts.dt0 > 0.0 && opts.dt_max >= opts.dt0) {
        return Err(ChbError::param("equilibrium", "tol, dt0 > 0 and dt_max >= dt0 required"));
    }
    let grid = *z0.grid();
    let bc = z0.bc();
    let mean = z0.mean();
    let mut z = z0.clone();
    let mut e = energy(&z, pot, eps);
    let mut energies = vec![e];
    let mut dt = opts.dt0;
    let (mut lo, mut hi) = (z.min(), z.max());
    let mut stab = pot.stabilization(lo, hi);
    let mut residual = stationarity_residual(&z, pot, eps);
    let mut best = residual;
    let mut iterations = 0;
    while residual > opts.tol {
        if iterations >= opts.max_iters {
            return Err(ChbError::StationaryNotConverged {
                iterations,
                residual: best,
            });
        }
        iterations += 1;
        let explicit = z.map(|s| pot.f(s)).axpy(-stab, &z).scaled(1.0 / eps);
        let rhs = z.scaled(1.0 / dt).add(&laplacian(&explicit));
        let op = HelmholtzOperator::new(grid, bc, 1.0 / dt, -stab / eps, eps)?;
        let next = op.solve(&rhs, Some(mean))?;
        let (nlo, nhi) = (next.min(), next.max());
        if !(nlo.is_finite() && nhi.is_finite()) {
            return Err(ChbError::BlowUp {
                step: iterations,
                detail: "non-finite iterate in stationary solve".into(),
            });
        }
        if nlo < lo - STAB_RANGE_PAD || nhi > hi + STAB_RANGE_PAD {
            // The curvature bound no longer covers the iterate: widen and retry.
            lo = lo.min(nlo);
            hi = hi.max(nhi);
            stab = stab.max(pot.stabilization(lo, hi));
            dt = (0.5 * dt).max(opts.dt0);
            continue;
        }
        let e_next = energy(&next, pot, eps);
        if e_next > e + 1e-14 * e.abs().max(1.0) {
            dt = (0.5 * dt).max(opts.dt0);
            stab *= 1.5;
            debug!("stationary solve: energy rose, retry with τ = {dt:e}, S = {stab:e}");
            continue;
        }
        z = next;
        e = e_next;
        energies.push(e);
        residual = stationarity_residual(&z, pot, eps);
        best = best.min(residual);
        dt = (2.0 * dt).min(opts.dt_max);
    }
    let lagrange_const = z.map(|s| pot.f(s)).mean() / eps;
    Ok(StationaryState {
        z,
        lagrange_const,
        residual,
        mean,
        iterations,
        energies,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayModel {
    /// `c (1 + t)^(−e)`
    Algebraic,
    /// `c e^(−λt)`
    Exponential,
}

impl DecayModel {
    pub fn name(self) -> &'static str {
        match self {
            DecayModel::Algebraic => "algebraic",
            DecayModel::Exponential => "exponential",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelFit {
    /// `e` for the algebraic model, `λ` for the exponential one.
    pub exponent: f64,
    pub prefactor: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Algebraic exponent `e = θ/(1 − 2θ)`.
    pub exponent: f64,
    pub theta_hat: f64,
    pub prefactor: f64,
    /// R² of the log–log fit.
    pub r2: f64,
    pub window: (f64, f64),
    pub points: usize,
    pub exponential: ModelFit,
    pub preferred: DecayModel,
}

impl RateFit {
    pub fn algebraic(&self) -> ModelFit {
        ModelFit {
            exponent: self.exponent,
            prefactor: self.prefactor,
            r2: self.r2,
        }
    }

    /// Writes the two model rows as CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["model", "exponent", "theta_hat", "prefactor", "r2", "window_lo", "window_hi"])?;
        let (lo, hi) = self.window;
        let alg = self.algebraic();
        for (model, fit, theta) in [
            (DecayModel::Algebraic, alg, self.theta_hat),
            (DecayModel::Exponential, self.exponential, f64::NAN),
        ] {
            w.write_record([
                model.name().to_string(),
                format!("{:.16e}", fit.exponent),
                format!("{:.16e}", theta),
                format!("{:.16e}", fit.prefactor),
                format!("{:.16e}", fit.r2),
                format!("{lo:.16e}"),
                format!("{hi:.16e}"),
            ])?;
        }
        w.flush().map_err(|e| ChbError::io(path, e))?;
        Ok(())
    }
}

/// Least-squares line `y = a + b x`; returns `(b, a, R²)`.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
        syy += (yi - my) * (yi - my);
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (yi - a - b * xi).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (b, a, r2)
}

/// Fits `v(t) ≈ c (1+t)^(−e)` over `window` (inclusive) and an exponential
/// model for comparison. Points below [`FIT_FLOOR`] are skipped.
pub fn fit_decay(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, v)| t >= window.0 && t <= window.1 && v.is_finite() && v >= FIT_FLOOR)
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(ChbError::InsufficientData {
            found: pts.len(),
            needed: MIN_FIT_POINTS,
        });
    }
    let vmax = pts.iter().fold(0.0_f64, |m, p| m.max(p.1));
    let vmin = pts.iter().fold(f64::INFINITY, |m, p| m.min(p.1));
    if vmax - vmin <= 1e-12 * vmax {
        return Err(ChbError::NoDecay);
    }
    let ln_v: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let ln_t: Vec<f64> = pts.iter().map(|p| (1.0 + p.0).ln()).collect();
    let t: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let (slope, icpt, r2) = line_fit(&ln_t, &ln_v);
    if !(slope < 0.0) {
        return Err(ChbError::NoDecay);
    }
    let (eslope, eicpt, er2) = line_fit(&t, &ln_v);
    let exponent = -slope;
    let preferred = if er2 > r2 {
        DecayModel::Exponential
    } else {
        DecayModel::Algebraic
    };
    Ok(RateFit {
        exponent,
        theta_hat: exponent / (1.0 + 2.0 * exponent),
        prefactor: icpt.exp(),
        r2,
        window: (pts[0].0, pts[pts.len() - 1].0),
        points: pts.len(),
        exponential: ModelFit {
            exponent: -eslope,
            prefactor: eicpt.exp(),
            r2: er2,
        },
        preferred,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityDecayReport {
    pub passed: bool,
    /// `e/4` with `e` the fitted algebraic exponent.
    pub exponent: f64,
    /// Constant fitted on the first half of the window.
    pub prefactor: f64,
    /// Largest `v(t) / (c (1+t)^(−e/4))` over the window.
    pub worst_ratio: f64,
    pub final_norm: f64,
    pub message: String,
}

/// Below this the final velocity counts as vanished.
pub const VELOCITY_FLOOR: f64 = 1e-8;

/// Checks `v(t) ≤ c (1+t)^(−e/4)` on the fit window, with `c` fitted on the
/// window's first half, and that the last value is below [`VELOCITY_FLOOR`].
pub fn velocity_decay_check(series: &[(f64, f64)], fit: &RateFit) -> VelocityDecayReport {
    let exponent = fit.exponent / 4.0;
    let (lo, hi) = fit.window;
    let mid = 0.5 * (lo + hi);
    let envelope = |t: f64| (1.0 + t).powf(-exponent);
    let prefactor = series
        .iter()
        .filter(|p| p.0 >= lo && p.0 <= mid)
        .fold(0.0_f64, |m, &(t, v)| m.max(v / envelope(t)));
    let slack = 1e-9;
    let mut worst_ratio = 0.0_f64;
    let mut bound_ok = true;
    for &(t, v) in series.iter().filter(|p| p.0 >= lo && p.0 <= hi) {
        let bound = prefactor * envelope(t);
        if v > bound * (1.0 + slack) + 1e-300 {
            bound_ok = false;
        }
        if bound > 0.0 {
            worst_ratio = worst_ratio.max(v / bound);
        } else if v > 0.0 {
            worst_ratio = f64::INFINITY;
        }
    }
    let final_norm = series.last().map_or(0.0, |p| p.1);
    let floor_ok = final_norm < VELOCITY_FLOOR;
    let passed = bound_ok && floor_ok && final_norm.is_finite();
    let message = match (bound_ok, floor_ok) {
        (true, true) => format!("‖u‖₁ ≤ {prefactor:.3e}(1+t)^(-{exponent:.3e}), final {final_norm:.3e}"),
        (false, _) => format!("envelope violated (worst ratio {worst_ratio:.3e})"),
        (true, false) => format!("final ‖u‖₁ = {final_norm:.3e} not below {VELOCITY_FLOOR:e}"),
    };
    VelocityDecayReport {
        passed,
        exponent,
        prefactor,
        worst_ratio,
        final_norm,
        message,
    }
}

/// A long relaxation run with the distance to its own limit.
#[derive(Debug)]
pub struct RelaxationStudy {
    pub records: Vec<DiagnosticsRecord>,
    /// `(t, ‖φ(t) − φ⋆‖₁)` at the sampled times.
    pub phi_distance: Vec<(f64, f64)>,
    /// `(t, ‖u(t)‖₁)` at every step.
    pub velocity: Vec<(f64, f64)>,
    /// Every step's energy (including the initial state).
    pub energies: Vec<f64>,
    pub limit: StationaryState,
    /// Stationarity residual of the last simulated state.
    pub final_residual: f64,
    pub final_velocity: f64,
    pub energy_monotone: bool,
    pub fit: Result<RateFit>,
    pub velocity_check: Option<VelocityDecayReport>,
}

/// Steps at which φ is sampled: every step up to 64, then geometrically.
fn sampled(step: usize, next_geo: &mut f64) -> bool {
    if step <= 64 {
        return true;
    }
    if step as f64 >= *next_geo {
        while *next_geo <= step as f64 {
            *next_geo *= 1.03;
        }
        return true;
    }
    false
}

/// Runs the coupled system from `phi0` to `cfg.t_end`, takes the end state
/// (polished by [`solve_stationary`] to `limit_tol`) as `φ⋆`, and fits the
/// decay of `‖φ(t) − φ⋆‖₁` over `window` (default: the whole run).
pub fn relaxation_study(
    phi0: &ScalarField,
    params: &PhysParams,
    pot: &Potential,
    cfg: &SolverConfig,
    window: Option<(f64, f64)>,
    limit_tol: f64,
) -> Result<RelaxationStudy> {
    let mut stepper = Stepper::new(*phi0.grid(), *params, pot.clone(), cfg.clone())?;
    let n = cfg.n_steps();
    let mut state = SimState::initial(phi0.clone());
    let mut samples: Vec<(f64, ScalarField)> = vec![(0.0, phi0.clone())];
    let mut velocity = Vec::with_capacity(n);
    let mut energies = vec![energy(phi0, pot, params.eps)];
    let mut records = Vec::new();
    let mut next_geo = 64.0;
    for k in 0..n {
        let rep = stepper.advance(&state)?;
        let rec = stepper.record(state.t, &state.phi, &rep.mu, &rep.flow.u);
        velocity.push((state.t, rec.u_h1));
        if k % cfg.cadence == 0 {
            records.push(rec);
        }
        state = rep.next;
        energies.push(energy(&state.phi, pot, params.eps));
        if sampled(state.step, &mut next_geo) {
            samples.push((state.t, state.phi.clone()));
        }
    }
    // velocity at the final state
    let mu = stepper.chemical_potential(&state.phi);
    let (_, flow) = stepper.flow_for(&state.phi, &mu, Some(&state.p))?;
    let last = stepper.record(state.t, &state.phi, &mu, &flow.u);
    velocity.push((state.t, last.u_h1));
    records.push(last);

    let final_residual = stationarity_residual(&state.phi, pot, params.eps);
    let limit = solve_stationary(&state.phi, pot, params.eps, limit_tol)?;
    let phi_distance: Vec<(f64, f64)> = samples
        .iter()
        .map(|(t, phi)| (*t, h1_norm(&phi.sub(&limit.z))))
        .collect();
    let energy_monotone = energy_increases(&energies) == 0;
    let window = window.unwrap_or((0.0, state.t));
    let fit = fit_decay(&phi_distance, window);
    let velocity_check = fit.as_ref().ok().map(|f| velocity_decay_check(&velocity, f));
    Ok(RelaxationStudy {
        records,
        phi_distance,
        final_velocity: last.u_h1,
        velocity,
        energies,
        limit,
        final_residual,
        energy_monotone,
        fit,
        velocity_check,
    })
}

/// Writes the fit (or the reason there is none) as a short text report.
pub fn write_relaxation_report(study: &RelaxationStudy, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| ChbError::io(path, e))?;
    let mut s = String::new();
    s.push_str(&format!("final_residual {:.6e}\n", study.final_residual));
    s.push_str(&format!("final_velocity_h1 {:.6e}\n", study.final_velocity));
    s.push_str(&format!("limit_residual {:.6e}\n", study.limit.residual));
    s.push_str(&format!("energy_monotone {}\n", study.energy_monotone));
    match &study.fit {
        Ok(fit) => {
            s.push_str(&format!(
                "algebraic exponent {:.6e} theta_hat {:.6e} prefactor {:.6e} r2 {:.6}\n",
                fit.exponent, fit.theta_hat, fit.prefactor, fit.r2
            ));
            s.push_str(&format!(
                "exponential rate {:.6e} prefactor {:.6e} r2 {:.6}\n",
                fit.exponential.exponent, fit.exponential.prefactor, fit.exponential.r2
            ));
            s.push_str(&format!("preferred {}\n", fit.preferred.name()));
            s.push_str(&format!("window {:.6e} {:.6e} ({} points)\n", fit.window.0, fit.window.1, fit.points));
        }
        Err(e) => s.push_str(&format!("fit unavailable: {e}\n")),
    }
    if let Some(v) = &study.velocity_check {
        s.push_str(&format!("velocity_check {} {}\n", v.passed, v.message));
    }
    f.write_all(s.as_bytes()).map_err(|e| ChbError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, ScalarBc};

    #[test]
    fn constant_is_stationary() {
        let g = GridSpec::unit_square(8).unwrap();
        let z0 = ScalarField::constant(g, ScalarBc::Neumann, 0.3);
        let s = solve_stationary(&z0, &Potential::Quartic, 1.0, 1e-10).unwrap();
        assert_eq!(s.iterations, 0);
        assert_eq!(s.residual, 0.0);
        assert!((s.lagrange_const - Potential::Quartic.f(0.3)).abs() < 1e-15);
    }

    #[test]
    fn power_law_is_recovered() {
        let series: Vec<(f64, f64)> = (0..50)
            .map(|k| {
                let t = k as f64;
                (t, 3.0 * (1.0 + t).powf(-0.5))
            })
            .collect();
        let fit = fit_decay(&series, (0.0, 100.0)).unwrap();
        assert!((fit.exponent - 0.5).abs() < 1e-6 * 0.5);
        assert!((fit.theta_hat - 0.25).abs() < 1e-6);
        assert!((fit.prefactor - 3.0).abs() < 1e-9);
        assert_eq!(fit.preferred, DecayModel::Algebraic);
    }

    #[test]
    fn exponential_is_preferred_for_exponential_data() {
        let series: Vec<(f64, f64)> = (0..50).map(|k| (0.2 * k as f64, (-(0.2 * k as f64)).exp())).collect();
        let fit = fit_decay(&series, (0.0, 100.0)).unwrap();
        assert_eq!(fit.preferred, DecayModel::Exponential);
        assert!((fit.exponential.exponent - 1.0).abs() < 1e-9);
        assert!(fit.r2 < fit.exponential.r2);
    }

    #[test]
    fn degenerate_series() {
        let flat: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 2.0)).collect();
        assert!(matches!(fit_decay(&flat, (0.0, 10.0)), Err(ChbError::NoDecay)));
        let few: Vec<(f64, f64)> = (0..4).map(|k| (k as f64, 1.0 / (1.0 + k as f64))).collect();
        assert!(matches!(
            fit_decay(&few, (0.0, 10.0)),
            Err(ChbError::InsufficientData { found: 4, .. })
        ));
        let tiny: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 1e-14)).collect();
        assert!(matches!(fit_decay(&tiny, (0.0, 10.0)), Err(ChbError::InsufficientData { found: 0, .. })));
    }

    fn reference_fit() -> RateFit {
        let series: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, (1.0 + k as f64).powf(-1.0))).collect();
        fit_decay(&series, (0.0, 19.0)).unwrap()
    }

    #[test]
    fn velocity_check_examples() {
        let fit = reference_fit();
        let zero: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, 0.0)).collect();
        assert!(velocity_decay_check(&zero, &fit).passed);

        let mut bad: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, 1e-9 * (-(k as f64)).exp())).collect();
        assert!(velocity_decay_check(&bad, &fit).passed);
        bad[17].1 = 10.0 * bad[3].1;
        assert!(!velocity_decay_check(&bad, &fit).passed);
    }
}
