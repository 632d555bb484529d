//! Manufactured smooth solutions of the full coupled system, for measuring
//! the observed orders of the discretization.
//!
//! ```text
//! φ_e = m + A(t) cos(ax) cos(by)
//! ψ_e = s(t) sin²(ax) sin²(by),   u_e = (∂yψ_e, −∂xψ_e)
//! p_e = P(t) cos(ax) cos(by)
//! ```
//!
//! with `a = π/lx`, `b = π/ly`. `φ_e` and `μ_e` satisfy the Neumann
//! conditions, `u_e` vanishes on the walls, and the sources are computed
//! analytically so the discrete error is the truncation error alone.
//! The default mean keeps φ_e where `f′ > 0`, so the exact solution is
//! linearly stable and errors are not amplified by spinodal growth.

use crate::chb::{SimState, SolverConfig, SourceTerms, Stepper};
use crate::error::{ChbError, Result};
use crate::flow::PhysParams;
use crate::grid::{l2_norm, GridSpec, MacVector, ScalarBc, ScalarField, VectorBc};
use crate::potential::Potential;
use ndarray::Array2;
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct Manufactured {
    pub params: PhysParams,
    pub pot: Potential,
    pub lx: f64,
    pub ly: f64,
    pub mean: f64,
}

/// Pointwise values of the exact solution.
struct Point {
    phi: f64,
    phi_x: f64,
    phi_y: f64,
    lap_mu: f64,
    mu_x: f64,
    mu_y: f64,
}

impl Manufactured {
    pub fn new(params: PhysParams, pot: Potential, lx: f64, ly: f64) -> Self {
        Manufactured {
            params,
            pot,
            lx,
            ly,
            mean: 1.0,
        }
    }

    fn amp(t: f64) -> f64 {
        0.2 + 0.1 * (2.0 * t).sin()
    }

    fn amp_dt(t: f64) -> f64 {
        0.2 * (2.0 * t).cos()
    }

    fn stream(t: f64) -> f64 {
        0.3 * t.cos()
    }

    fn pressure(t: f64) -> f64 {
        0.2 * (1.0 + t)
    }

    fn ab(&self) -> (f64, f64) {
        (PI / self.lx, PI / self.ly)
    }

    fn point(&self, x: f64, y: f64, t: f64) -> Point {
        let (a, b) = self.ab();
        let k2 = a * a + b * b;
        let eps = self.params.eps;
        let amp = Self::amp(t);
        let (cx, sx, cy, sy) = ((a * x).cos(), (a * x).sin(), (b * y).cos(), (b * y).sin());
        let phi = self.mean + amp * cx * cy;
        let phi_x = -amp * a * sx * cy;
        let phi_y = -amp * b * cx * sy;
        let lap_phi = -amp * k2 * cx * cy;
        let grad_sq = phi_x * phi_x + phi_y * phi_y;
        let (df, d2f) = (self.pot.df(phi), self.pot.d2f(phi));
        let lap_mu = -eps * amp * k2 * k2 * cx * cy + (df * lap_phi + d2f * grad_sq) / eps;
        let mu_x = -eps * amp * k2 * a * sx * cy + df * phi_x / eps;
        let mu_y = -eps * amp * k2 * b * cx * sy + df * phi_y / eps;
        Point {
            phi,
            phi_x,
            phi_y,
            lap_mu,
            mu_x,
            mu_y,
        }
    }

    /// `(u, v)` of the exact velocity at a point.
    fn velocity(&self, x: f64, y: f64, t: f64) -> (f64, f64) {
        let (a, b) = self.ab();
        let s = Self::stream(t);
        let (sx, sy) = ((a * x).sin(), (b * y).sin());
        (
            s * b * sx * sx * (2.0 * b * y).sin(),
            -s * a * (2.0 * a * x).sin() * sy * sy,
        )
    }

    pub fn exact_phi(&self, grid: &GridSpec, t: f64) -> ScalarField {
        ScalarField::from_fn(*grid, ScalarBc::Neumann, |x, y| self.point(x, y, t).phi)
    }

    pub fn exact_velocity(&self, grid: &GridSpec, t: f64) -> MacVector {
        let ux = Array2::from_shape_fn(grid.ux_shape(), |(j, i)| {
            self.velocity(i as f64 * grid.hx(), grid.y_center(j), t).0
        });
        let uy = Array2::from_shape_fn(grid.uy_shape(), |(j, i)| {
            self.velocity(grid.x_center(i), j as f64 * grid.hy(), t).1
        });
        let mut v = MacVector::from_raw(*grid, VectorBc::NoSlip, ux, uy);
        v.enforce_boundary();
        v
    }

    /// Momentum source `−νΔu_e + ηu_e + ∇p_e + γφ_e∇μ_e` at face `(x, y)`;
    /// `axis` 0 is x, 1 is y.
    fn force_at(&self, x: f64, y: f64, t: f64, axis: usize) -> f64 {
        let (a, b) = self.ab();
        let PhysParams { nu, eta, gamma, .. } = self.params;
        let s = Self::stream(t);
        let pr = Self::pressure(t);
        let (cx, sx, cy, sy) = ((a * x).cos(), (a * x).sin(), (b * y).cos(), (b * y).sin());
        let (u, v) = self.velocity(x, y, t);
        let pt = self.point(x, y, t);
        if axis == 0 {
            let uxx = s * b * (2.0 * b * y).sin() * 2.0 * a * a * (2.0 * a * x).cos();
            let uyy = -s * b * sx * sx * 4.0 * b * b * (2.0 * b * y).sin();
            let px = -pr * a * sx * cy;
            -nu * (uxx + uyy) + eta * u + px + gamma * pt.phi * pt.mu_x
        } else {
            let vxx = 4.0 * s * a * a * a * (2.0 * a * x).sin() * sy * sy;
            let vyy = -s * a * (2.0 * a * x).sin() * 2.0 * b * b * (2.0 * b * y).cos();
            let py = -pr * b * cx * sy;
            -nu * (vxx + vyy) + eta * v + py + gamma * pt.phi * pt.mu_y
        }
    }

    /// Smallest and largest φ_e over `[0, t_end]` (sampled).
    pub fn phi_range(&self, t_end: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..=200 {
            let amp = Self::amp(t_end * k as f64 / 200.0).abs();
            lo = lo.min(self.mean - amp);
            hi = hi.max(self.mean + amp);
        }
        (lo, hi)
    }
}

impl SourceTerms for Manufactured {
    fn phi_source(&self, grid: &GridSpec, t: f64) -> ScalarField {
        let (a, b) = self.ab();
        let m = self.params.mobility;
        let amp_dt = Self::amp_dt(t);
        ScalarField::from_fn(*grid, ScalarBc::Neumann, |x, y| {
            let pt = self.point(x, y, t);
            let (u, v) = self.velocity(x, y, t);
            amp_dt * (a * x).cos() * (b * y).cos() + u * pt.phi_x + v * pt.phi_y - m * pt.lap_mu
        })
    }

    fn force_source(&self, grid: &GridSpec, t: f64) -> MacVector {
        let ux = Array2::from_shape_fn(grid.ux_shape(), |(j, i)| {
            self.force_at(i as f64 * grid.hx(), grid.y_center(j), t, 0)
        });
        let uy = Array2::from_shape_fn(grid.uy_shape(), |(j, i)| {
            self.force_at(grid.x_center(i), j as f64 * grid.hy(), t, 1)
        });
        let mut v = MacVector::from_raw(*grid, VectorBc::NoPenetration, ux, uy);
        v.enforce_boundary();
        v
    }
}

/// Runs the sourced system from `φ_e(0)` to `t_end`, returning `φ(t_end)`.
pub fn solve_manufactured(ms: &Manufactured, n: usize, dt: f64, t_end: f64) -> Result<ScalarField> {
    let grid = GridSpec::new(n, n, ms.lx, ms.ly)?;
    let (lo, hi) = ms.phi_range(t_end);
    let cfg = SolverConfig {
        dt,
        t_end,
        stab: Some(ms.pot.stabilization(lo, hi)),
        ..Default::default()
    };
    let steps = cfg.n_steps();
    if ((steps as f64) * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(ChbError::param("solver.dt", "t_end must be a multiple of dt"));
    }
    let mut stepper = Stepper::new(grid, ms.params, ms.pot.clone(), cfg)?;
    let mut state = SimState::initial(ms.exact_phi(&grid, 0.0));
    for _ in 0..steps {
        state = stepper.advance_with_sources(&state, Some(ms))?.next;
    }
    Ok(state.phi)
}

#[derive(Debug, Clone)]
pub struct OrderStudy {
    /// Grid sizes (space) or time steps (time).
    pub levels: Vec<f64>,
    pub errors: Vec<f64>,
    /// `log2(e_k / e_{k+1})`
    pub orders: Vec<f64>,
}

impl OrderStudy {
    fn from_errors(levels: Vec<f64>, errors: Vec<f64>) -> Self {
        let orders = errors
            .windows(2)
            .map(|w| (w[0] / w[1]).log2())
            .collect();
        OrderStudy {
            levels,
            errors,
            orders,
        }
    }

    pub fn min_order(&self) -> f64 {
        self.orders.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Spatial order on grids `sizes` (each refinement halves h). The O(τ)
/// temporal error is removed by Richardson extrapolation in τ, so a fixed
/// moderate τ can be used on every grid.
pub fn space_order(ms: &Manufactured, sizes: &[usize], dt: f64, t_end: f64) -> Result<OrderStudy> {
    let mut errors = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let coarse = solve_manufactured(ms, n, dt, t_end)?;
        let fine = solve_manufactured(ms, n, 0.5 * dt, t_end)?;
        let extrapolated = fine.scaled(2.0).sub(&coarse);
        let exact = ms.exact_phi(extrapolated.grid(), t_end);
        errors.push(l2_norm(&extrapolated.sub(&exact)));
    }
    Ok(OrderStudy::from_errors(
        sizes.iter().map(|&n| n as f64).collect(),
        errors,
    ))
}

/// Temporal order on one grid from successive differences of runs with
/// `dt, dt/2, dt/4, …` (`levels + 1` runs give `levels` differences).
pub fn time_order(ms: &Manufactured, n: usize, dt: f64, levels: usize, t_end: f64) -> Result<OrderStudy> {
    let mut sols = Vec::with_capacity(levels + 1);
    let mut taus = Vec::with_capacity(levels + 1);
    for k in 0..=levels {
        let tau = dt / (1u64 << k) as f64;
        sols.push(solve_manufactured(ms, n, tau, t_end)?);
        taus.push(tau);
    }
    let errors = sols.windows(2).map(|w| l2_norm(&w[0].sub(&w[1]))).collect();
    taus.pop();
    Ok(OrderStudy::from_errors(taus, errors))
}
