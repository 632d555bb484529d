//! The coupled Cahn–Hilliard / flow time stepper.
//!
//! One step of the scheme:
//!
//! 1. `μⁿ = −εΔ_h φⁿ + f(φⁿ)/ε`
//! 2. `(uⁿ, pⁿ)` from the Brinkman (ν > 0) or Darcy (ν = 0) solve with the
//!    capillary force `−γ avg(φⁿ) ∇μⁿ`
//! 3. `[I/τ + MεΔ_h² − (MS/ε)Δ_h] φⁿ⁺¹ = φⁿ/τ − ∇·(φⁿuⁿ) + MΔ_h[(f(φⁿ) − Sφⁿ)/ε]`
//!
//! Step 3 is a single transform solve. With `S ≥ max f′/2` on the range
//! visited by φ the Cahn–Hilliard part is unconditionally energy stable;
//! in automatic mode `S` is chosen from the observed range, never
//! decreases, and a step is redone with a larger `S` if φⁿ⁺¹ leaves the
//! padded range the bound was computed on.

use std::sync::Arc;

use log::{debug, warn};

use crate::error::{ChbError, Result};
use crate::flow::{capillary_force, energy_identity, FlowSolution, FlowSolver, PhysParams};
use crate::flow::{DEFAULT_FLOW_MAX_ITERS, DEFAULT_FLOW_TOL};
use crate::grid::{
    divergence, dot_faces, face_average, face_product, grad_norm_sq, gradient_to_faces,
    h1_norm, h1_norm_faces, l2_norm, l2_norm_faces, laplacian, vector_grad_norm_sq, GridSpec,
    MacVector, ScalarBc, ScalarField, VectorBc,
};
use crate::potential::{Potential, STAB_RANGE_PAD};
use crate::spectral::{scalar_basis, HelmholtzOperator, Separable2d};

/// |φ| above this aborts the run.
pub const BLOWUP_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Fixed stabilization; `None` picks it from the observed φ range.
    pub stab: Option<f64>,
    pub bc: ScalarBc,
    pub flow_tol: f64,
    pub flow_max_iters: usize,
    /// Diagnostics are kept every `cadence` steps (and at the final step).
    pub cadence: usize,
    /// Snapshots are kept every `snapshot_every` steps, if set.
    pub snapshot_every: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: 1e-3,
            t_end: 1.0,
            stab: None,
            bc: ScalarBc::Neumann,
            flow_tol: DEFAULT_FLOW_TOL,
            flow_max_iters: DEFAULT_FLOW_MAX_ITERS,
            cadence: 1,
            snapshot_every: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(ChbError::param("solver.dt", "must be > 0"));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(ChbError::param("solver.t_end", "must be >= 0"));
        }
        if let Some(s) = self.stab {
            if !(s.is_finite() && s >= 0.0) {
                return Err(ChbError::param("solver.stab", "must be >= 0"));
            }
        }
        if !(self.flow_tol.is_finite() && self.flow_tol > 0.0) {
            return Err(ChbError::param("flow.tol", "must be > 0"));
        }
        if self.flow_max_iters == 0 {
            return Err(ChbError::param("flow.max_iters", "must be > 0"));
        }
        if self.cadence == 0 {
            return Err(ChbError::param("solver.cadence", "must be > 0"));
        }
        if self.snapshot_every == Some(0) {
            return Err(ChbError::param("solver.snapshot_every", "must be > 0"));
        }
        Ok(())
    }

    /// Number of steps to reach `t_end` (the last step may overshoot by < τ/2... never: rounded).
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub phi: ScalarField,
    pub u: MacVector,
    pub p: ScalarField,
    pub t: f64,
    pub step: usize,
}

impl SimState {
    pub fn initial(phi: ScalarField) -> Self {
        let grid = *phi.grid();
        let bc = phi.bc();
        let vbc = match bc {
            ScalarBc::Neumann => VectorBc::NoPenetration,
            ScalarBc::Periodic => VectorBc::Periodic,
        };
        SimState {
            u: MacVector::zeros(grid, vbc),
            p: ScalarField::zeros(grid, bc),
            phi,
            t: 0.0,
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// ⟨φ⟩·|Ω|
    pub mass: f64,
    pub energy: f64,
    /// ‖∇μ‖²
    pub grad_mu_sq: f64,
    /// ν‖∇u‖²
    pub visc_diss: f64,
    /// η‖u‖²
    pub darcy_diss: f64,
    /// Backward dissipation residual of the step ending here (0 for the first record).
    pub residual: f64,
    pub phi_l2: f64,
    pub phi_h1: f64,
    /// ‖u‖₁ (faces)
    pub u_h1: f64,
    /// ‖μ − ⟨μ⟩‖, the stationarity residual.
    pub mu_osc: f64,
}

/// `μ = −εΔ_h φ + f(φ)/ε`
pub fn chemical_potential(phi: &ScalarField, pot: &Potential, eps: f64) -> ScalarField {
    let lap = laplacian(phi);
    let inv_eps = 1.0 / eps;
    let mut mu = lap.scaled(-eps);
    ndarray::Zip::from(mu.values_mut())
        .and(phi.values())
        .for_each(|m, &p| *m += pot.f(p) * inv_eps);
    mu
}

/// `E(φ) = ε/2 ‖∇φ‖² + ⟨F(φ), 1⟩/ε`
pub fn energy(phi: &ScalarField, pot: &Potential, eps: f64) -> f64 {
    let bulk: f64 = phi.values().iter().map(|&s| pot.big_f(s)).sum::<f64>() * phi.grid().cell_area();
    0.5 * eps * grad_norm_sq(phi) + bulk / eps
}

/// `∇·(avg(φ) u)`; conservative, so its cell sum vanishes for admissible `u`.
pub fn convective_divergence(phi: &ScalarField, u: &MacVector) -> Result<ScalarField> {
    phi.grid().ensure_same(u.grid(), "convective divergence")?;
    let mut flux = face_product(&face_average(phi), u);
    flux.enforce_boundary();
    let mut out = divergence(&flux);
    if phi.bc() == ScalarBc::Neumann {
        // keep the scalar boundary convention of φ
        out = ScalarField::from_raw(*phi.grid(), ScalarBc::Neumann, out.into_values());
    }
    Ok(out)
}

/// External source terms added to the phase equation (evaluated at
/// `t_{n+1}`) and to the momentum balance (evaluated at `t_n`).
pub trait SourceTerms {
    fn phi_source(&self, grid: &GridSpec, t: f64) -> ScalarField;
    fn force_source(&self, grid: &GridSpec, t: f64) -> MacVector;
}

/// Everything computed while advancing one step from `φⁿ`.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub next: SimState,
    /// μⁿ
    pub mu: ScalarField,
    /// The capillary force of step n.
    pub force: MacVector,
    /// (uⁿ, pⁿ)
    pub flow: FlowSolution,
    pub stab: f64,
    /// `τ·max|u| / min(h)`; the convection guard asks for ≤ 1/2.
    pub cfl: f64,
}

/// Reusable stepper holding the transform tables for one grid and parameter set.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: GridSpec,
    params: PhysParams,
    pot: Potential,
    cfg: SolverConfig,
    basis: Arc<Separable2d>,
    flow: FlowSolver,
    op: Option<HelmholtzOperator>,
    stab: f64,
}

impl Stepper {
    pub fn new(grid: GridSpec, params: PhysParams, pot: Potential, cfg: SolverConfig) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let flow = FlowSolver::from_params(grid, cfg.bc, &params, cfg.flow_tol, cfg.flow_max_iters)?;
        Ok(Stepper {
            grid,
            params,
            pot,
            basis: Arc::new(scalar_basis(&grid, cfg.bc)),
            cfg,
            flow,
            op: None,
            stab: 0.0,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn params(&self) -> &PhysParams {
        &self.params
    }

    pub fn potential(&self) -> &Potential {
        &self.pot
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn flow_solver(&self) -> &FlowSolver {
        &self.flow
    }

    /// Current stabilization constant.
    pub fn stab(&self) -> f64 {
        self.cfg.stab.unwrap_or(self.stab)
    }

    pub fn chemical_potential(&self, phi: &ScalarField) -> ScalarField {
        chemical_potential(phi, &self.pot, self.params.eps)
    }

    /// Capillary force and flow for a given φ (and its μ).
    pub fn flow_for(
        &self,
        phi: &ScalarField,
        mu: &ScalarField,
        warm: Option<&ScalarField>,
    ) -> Result<(MacVector, FlowSolution)> {
        let force = capillary_force(phi, mu, self.params.gamma)?;
        let sol = self.flow.solve(&force, warm)?;
        Ok((force, sol))
    }

    fn operator(&mut self, stab: f64) -> Result<&HelmholtzOperator> {
        let p = &self.params;
        let b = -p.mobility * stab / p.eps;
        let rebuild = match &self.op {
            Some(op) => op.coefficients().1 != b,
            None => true,
        };
        if rebuild {
            self.op = Some(HelmholtzOperator::with_basis(
                self.basis.clone(),
                self.grid,
                self.cfg.bc,
                1.0 / self.cfg.dt,
                b,
                p.mobility * p.eps,
            )?);
        }
        Ok(self.op.as_ref().unwrap())
    }

    fn ch_solve(
        &mut self,
        phi: &ScalarField,
        conv: &ScalarField,
        fphi: &ScalarField,
        source: Option<&ScalarField>,
        stab: f64,
    ) -> Result<ScalarField> {
        let (m, eps, dt) = (self.params.mobility, self.params.eps, self.cfg.dt);
        let explicit = fphi.axpy(-stab, phi).scaled(1.0 / eps);
        let mut rhs = phi
            .scaled(1.0 / dt)
            .sub(conv)
            .axpy(m, &laplacian(&explicit));
        if let Some(src) = source {
            rhs = rhs.add(src);
        }
        let mean = phi.mean() + dt * source.map_or(0.0, |s| s.mean());
        self.operator(stab)?.solve(&rhs, Some(mean))
    }

    /// Advances `state` by one step.
    pub fn advance(&mut self, state: &SimState) -> Result<StepReport> {
        self.advance_with_sources(state, None)
    }

    /// Advances one step with optional external sources.
    pub fn advance_with_sources(
        &mut self,
        state: &SimState,
        sources: Option<&dyn SourceTerms>,
    ) -> Result<StepReport> {
        let phi = &state.phi;
        self.grid.ensure_same(phi.grid(), "stepper state")?;
        if !phi.is_finite() {
            return Err(ChbError::BlowUp {
                step: state.step,
                detail: "non-finite φ".into(),
            });
        }
        let mu = self.chemical_potential(phi);
        let mut force = capillary_force(phi, &mu, self.params.gamma)?;
        if let Some(src) = sources {
            force = force.add(&src.force_source(&self.grid, state.t));
        }
        let flow = self.flow.solve(&force, Some(&state.p))?;
        let conv = convective_divergence(phi, &flow.u)?;
        let phi_src = sources.map(|src| src.phi_source(&self.grid, (state.step + 1) as f64 * self.cfg.dt));
        let fphi = phi.map(|s| self.pot.f(s));

        let (mut lo, mut hi) = (phi.min(), phi.max());
        let mut stab = match self.cfg.stab {
            Some(s) => {
                let need = self.pot.stabilization(lo, hi);
                if s < need {
                    debug!("step {}: stab {s} below the bound {need} for range [{lo}, {hi}]", state.step);
                }
                s
            }
            None => {
                self.stab = self.stab.max(self.pot.stabilization(lo, hi));
                self.stab
            }
        };
        let mut next = self.ch_solve(phi, &conv, &fphi, phi_src.as_ref(), stab)?;
        if self.cfg.stab.is_none() {
            // Redo if φⁿ⁺¹ left the range the bound was computed for.
            for _ in 0..4 {
                let (nlo, nhi) = (next.min(), next.max());
                if !(nlo.is_finite() && nhi.is_finite())
                    || (nlo >= lo - STAB_RANGE_PAD && nhi <= hi + STAB_RANGE_PAD)
                {
                    break;
                }
                lo = lo.min(nlo);
                hi = hi.max(nhi);
                let s = self.pot.stabilization(lo, hi);
                if s <= stab {
                    break;
                }
                self.stab = s;
                stab = s;
                next = self.ch_solve(phi, &conv, &fphi, phi_src.as_ref(), stab)?;
            }
        }

        let step = state.step + 1;
        if !next.is_finite() {
            return Err(ChbError::BlowUp {
                step,
                detail: "non-finite φ".into(),
            });
        }
        let m = next.max_abs();
        if m > BLOWUP_THRESHOLD {
            return Err(ChbError::BlowUp {
                step,
                detail: format!("max |φ| = {m:e}"),
            });
        }
        let hmin = self.grid.hx().min(self.grid.hy());
        let cfl = self.cfg.dt * flow.u.max_abs() / hmin;
        Ok(StepReport {
            next: SimState {
                phi: next,
                u: flow.u.clone(),
                p: flow.p.clone(),
                t: step as f64 * self.cfg.dt,
                step,
            },
            mu,
            force,
            flow,
            stab,
            cfl,
        })
    }

    /// Diagnostics of a state given its μ and u (the residual field is left at 0).
    pub fn record(&self, t: f64, phi: &ScalarField, mu: &ScalarField, u: &MacVector) -> DiagnosticsRecord {
        let p = &self.params;
        DiagnosticsRecord {
            t,
            mass: phi.integral(),
            energy: energy(phi, &self.pot, p.eps),
            grad_mu_sq: grad_norm_sq(mu),
            visc_diss: if p.nu > 0.0 {
                p.nu * vector_grad_norm_sq(u)
            } else {
                0.0
            },
            darcy_diss: p.eta * dot_faces(u, u),
            residual: 0.0,
            phi_l2: l2_norm(phi),
            phi_h1: h1_norm(phi),
            u_h1: if u.bc() == VectorBc::NoSlip || u.bc() == VectorBc::Periodic {
                h1_norm_faces(u)
            } else {
                // Darcy velocities carry no tangential trace; use the L² norm.
                l2_norm_faces(u)
            },
            mu_osc: l2_norm(&mu.mean_free()),
        }
    }
}

/// One step from scratch (builds the transform tables each call).
pub fn ch_step(state: &SimState, params: &PhysParams, pot: &Potential, cfg: &SolverConfig) -> Result<SimState> {
    let mut stepper = Stepper::new(*state.phi.grid(), *params, pot.clone(), cfg.clone())?;
    Ok(stepper.advance(state)?.next)
}

#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub steps: usize,
    /// Energy of every state φ⁰ … φⁿ.
    pub energies: Vec<f64>,
    /// Mean of every state.
    pub means: Vec<f64>,
    pub flow_iterations: usize,
    pub max_cfl: f64,
    pub cfl_violations: usize,
    /// max |ν‖∇u‖² + η‖u‖² − ⟨F,u⟩| / (‖F‖‖u‖) over all flow solves.
    pub max_identity_error: f64,
    pub max_divergence: f64,
    pub final_stab: f64,
}

#[derive(Debug)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    /// `(step, φ, u)` at the snapshot cadence.
    pub snapshots: Vec<(usize, ScalarField, MacVector)>,
    pub final_state: SimState,
    pub stats: RunStats,
    /// Set when the run stopped early; diagnostics up to that point are kept.
    pub failure: Option<ChbError>,
}

impl RunOutput {
    pub fn into_result(self) -> Result<RunOutput> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

fn identity_error(u: &MacVector, force: &MacVector, params: &PhysParams) -> f64 {
    let (lhs, rhs) = energy_identity(u, force, params.nu, params.eta);
    let scale = l2_norm_faces(force) * l2_norm_faces(u);
    if scale > 0.0 {
        (lhs - rhs).abs() / scale
    } else {
        (lhs - rhs).abs()
    }
}

/// Runs to `cfg.t_end`, keeping diagnostics every `cfg.cadence` steps.
pub fn run(phi0: &ScalarField, params: &PhysParams, pot: &Potential, cfg: &SolverConfig) -> Result<RunOutput> {
    let mut stepper = Stepper::new(*phi0.grid(), *params, pot.clone(), cfg.clone())?;
    if !phi0.is_finite() {
        return Err(ChbError::NonFinite("initial φ".into()));
    }
    let phi0 = if phi0.bc() == cfg.bc {
        phi0.clone()
    } else {
        ScalarField::from_values(*phi0.grid(), cfg.bc, phi0.values().to_owned())?
    };
    run_with(&mut stepper, SimState::initial(phi0), cfg.n_steps())
}

/// Runs `n_steps` from `state` with an existing stepper.
pub fn run_with(stepper: &mut Stepper, mut state: SimState, n_steps: usize) -> Result<RunOutput> {
    let cfg = stepper.config().clone();
    let params = *stepper.params();
    let dt = cfg.dt;
    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let mut stats = RunStats::default();
    let mut failure = None;
    let mut cfl_warned = false;
    // (E, flow dissipation) of the previous state, for the backward residual
    let mut prev: Option<(f64, f64)> = None;

    let keep = |rec: DiagnosticsRecord, step: usize, last: bool, records: &mut Vec<DiagnosticsRecord>| {
        if step % cfg.cadence == 0 || last {
            records.push(rec);
        }
    };

    for n in 0..=n_steps {
        let last = n == n_steps;
        let (mu, force, flow, report) = if last {
            let mu = stepper.chemical_potential(&state.phi);
            match stepper.flow_for(&state.phi, &mu, Some(&state.p)) {
                Ok((force, flow)) => (mu, force, flow, None),
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        } else {
            match stepper.advance(&state) {
                Ok(r) => (r.mu.clone(), r.force.clone(), r.flow.clone(), Some(r)),
                Err(e) => {
                    // diagnostics of the last good state are still recorded
                    let mu = stepper.chemical_potential(&state.phi);
                    let mut rec = stepper.record(state.t, &state.phi, &mu, &state.u);
                    if let Some((e_prev, d_prev)) = prev {
                        rec.residual = (rec.energy - e_prev) / dt + params.mobility * rec.grad_mu_sq + d_prev;
                    }
                    records.push(rec);
                    failure = Some(e);
                    break;
                }
            }
        };

        stats.flow_iterations += flow.iterations;
        stats.max_divergence = stats.max_divergence.max(flow.divergence_norm);
        stats.max_identity_error = stats.max_identity_error.max(identity_error(&flow.u, &force, &params));

        let mut rec = stepper.record(state.t, &state.phi, &mu, &flow.u);
        if let Some((e_prev, d_prev)) = prev {
            rec.residual = (rec.energy - e_prev) / dt + params.mobility * rec.grad_mu_sq + d_prev;
        }
        prev = Some((rec.energy, (rec.visc_diss + rec.darcy_diss) / params.gamma));
        stats.energies.push(rec.energy);
        stats.means.push(state.phi.mean());
        keep(rec, n, last, &mut records);
        if let Some(every) = cfg.snapshot_every {
            if n % every == 0 || last {
                snapshots.push((state.step, state.phi.clone(), flow.u.clone()));
            }
        }

        match report {
            Some(r) => {
                stats.max_cfl = stats.max_cfl.max(r.cfl);
                if r.cfl > 0.5 {
                    stats.cfl_violations += 1;
                    if !cfl_warned {
                        warn!("step {}: convection CFL number {:.3} exceeds 1/2", state.step, r.cfl);
                        cfl_warned = true;
                    }
                }
                stats.final_stab = r.stab;
                stats.steps += 1;
                state = r.next;
            }
            None => {
                state.u = flow.u;
                state.p = flow.p;
            }
        }
    }
    Ok(RunOutput {
        records,
        snapshots,
        final_state: state,
        stats,
        failure,
    })
}

/// Relative slack granted to energy comparisons: once a trajectory has
/// settled, E is flat and only summation round-off (≈ 1e-14·|E| at N = 64)
/// moves it.
pub const ENERGY_ROUNDOFF: f64 = 1e-13;

/// Number of steps where `E_{n+1} > E_n + ENERGY_ROUNDOFF·max(1, |E_n|)`.
pub fn energy_increases(energies: &[f64]) -> usize {
    energies
        .windows(2)
        .filter(|w| w[1] > w[0] + ENERGY_ROUNDOFF * w[0].abs().max(1.0))
        .count()
}

/// Largest `(E_{n+1} − E_n)/max(1, |E_n|)` (negative if E strictly decreases).
pub fn max_relative_energy_increase(energies: &[f64]) -> f64 {
    energies
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0].abs().max(1.0))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `(E_{n+1} − E_n)/τ + M‖∇μ_{n+1}‖² + (ν‖∇u_n‖² + η‖u_n‖²)/γ` for records one step apart.
///
/// With `M = γ = 1` this is the plain discrete energy law.
pub fn dissipation_audit(series: &[DiagnosticsRecord], tau: f64, params: &PhysParams) -> Result<Vec<f64>> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(ChbError::param("tau", "must be > 0"));
    }
    let mut out = Vec::with_capacity(series.len().saturating_sub(1));
    for (k, w) in series.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        if ((b.t - a.t) - tau).abs() > 1e-9 * tau {
            return Err(ChbError::NonUniformSpacing { index: k + 1 });
        }
        out.push(
            (b.energy - a.energy) / tau
                + params.mobility * b.grad_mu_sq
                + (a.visc_diss + a.darcy_diss) / params.gamma,
        );
    }
    Ok(out)
}

/// Helper for tests and the validator: the velocity a given φ would drive.
pub fn velocity_of(stepper: &Stepper, phi: &ScalarField) -> Result<MacVector> {
    let mu = stepper.chemical_potential(phi);
    Ok(stepper.flow_for(phi, &mu, None)?.1.u)
}

/// Gradient of μ on faces (exposed for the dependence experiments).
pub fn mu_gradient(stepper: &Stepper, phi: &ScalarField) -> MacVector {
    gradient_to_faces(&stepper.chemical_potential(phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};

    fn noise(grid: GridSpec, amp: f64, seed: u64) -> ScalarField {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ScalarField::from_fn(grid, ScalarBc::Neumann, |_, _| amp * rng.random_range(-1.0..1.0))
    }

    #[test]
    fn chemical_potential_examples() {
        let g = GridSpec::unit_square(8).unwrap();
        let q = Potential::Quartic;
        let one = ScalarField::constant(g, ScalarBc::Neumann, 1.0);
        assert!(chemical_potential(&one, &q, 1.0).max_abs() < 1e-14);
        let half = ScalarField::constant(g, ScalarBc::Neumann, 0.5);
        let mu = chemical_potential(&half, &q, 1.0);
        assert!(mu.values().iter().all(|v| (v + 1.5).abs() < 1e-14));

        let pi = std::f64::consts::PI;
        let phi = ScalarField::from_fn(g, ScalarBc::Neumann, |x, _| (pi * x).cos());
        let lam = 2.0 / (g.hx() * g.hx()) * (1.0 - (pi * g.hx()).cos());
        let mu = chemical_potential(&phi, &q, 1.0);
        for (m, p) in mu.values().iter().zip(phi.values()) {
            assert!((m - (lam * p + q.f(*p))).abs() < 1e-12);
        }
    }

    #[test]
    fn convective_divergence_is_conservative() {
        let g = GridSpec::new(10, 8, 1.0, 0.7).unwrap();
        let phi = noise(g, 1.0, 3);
        let q = noise(g, 1.0, 4);
        let u = gradient_to_faces(&q);
        let c = convective_divergence(&phi, &u).unwrap();
        assert!(c.integral().abs() < 1e-12 * l2_norm(&phi) * l2_norm_faces(&u));
        let zero = MacVector::zeros(g, VectorBc::NoPenetration);
        assert_eq!(convective_divergence(&phi, &zero).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn constants_are_fixed_points() {
        let g = GridSpec::unit_square(16).unwrap();
        let phi = ScalarField::constant(g, ScalarBc::Neumann, 0.3);
        let next = ch_step(
            &SimState::initial(phi.clone()),
            &PhysParams::default(),
            &Potential::Quartic,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(next.phi.sub(&phi).max_abs() < 1e-14);
        assert_eq!(next.u.max_abs(), 0.0);
        assert_eq!(next.step, 1);
    }

    #[test]
    fn short_spinodal_run_conserves_mass_and_dissipates() {
        let g = GridSpec::unit_square(32).unwrap();
        let phi0 = noise(g, 0.5, 7);
        let params = PhysParams {
            eps: 0.05,
            ..Default::default()
        };
        let cfg = SolverConfig {
            dt: 1e-4,
            t_end: 0.01,
            ..Default::default()
        };
        let out = run(&phi0, &params, &Potential::Quartic, &cfg).unwrap().into_result().unwrap();
        let m0 = out.stats.means[0];
        for m in &out.stats.means {
            assert!((m - m0).abs() <= 1e-12 * (1.0 + m0.abs()));
        }
        for w in out.stats.energies.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} > {}", w[1], w[0]);
        }
        assert!(out.stats.max_identity_error < 1e-8);
        assert_eq!(out.records.len(), cfg.n_steps() + 1);
    }

    #[test]
    fn audit_of_constant_trajectory_is_zero() {
        let g = GridSpec::unit_square(8).unwrap();
        let phi0 = ScalarField::constant(g, ScalarBc::Neumann, 0.0);
        let cfg = SolverConfig {
            t_end: 0.05,
            ..Default::default()
        };
        let params = PhysParams::default();
        let out = run(&phi0, &params, &Potential::Quartic, &cfg).unwrap();
        let res = dissipation_audit(&out.records, cfg.dt, &params).unwrap();
        assert!(res.iter().all(|r| r.abs() < 1e-12));
        let e = out.records[0].energy;
        assert!((e - 1.0).abs() < 1e-14);
        let mut bad = out.records.clone();
        bad.remove(3);
        assert!(matches!(
            dissipation_audit(&bad, cfg.dt, &params),
            Err(ChbError::NonUniformSpacing { index: 3 })
        ));
    }
}
