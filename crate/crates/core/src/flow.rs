//! Velocity solvers for the momentum balance
//!
//! ```text
//! −ν Δu + η u + ∇p = F,   ∇·u = 0
//! ```
//!
//! with no-slip walls for `ν > 0` (Brinkman) and `u·n = 0` for the Darcy
//! limit `ν = 0`.
//!
//! The Brinkman saddle point is solved by preconditioned conjugate gradients
//! on the pressure Schur complement `S = −D A⁻¹ G`, `A = η − νΔ_h`, where
//! each `A⁻¹` is an exact sine-basis solve per velocity component. The
//! preconditioner `ν I + η (−Δ_h)⁻¹` inverts `S` exactly when `A` commutes
//! with the gradient (periodic case) and keeps the iteration count flat in
//! `ν`, `η` and `h` otherwise.

use std::sync::Arc;

use ndarray::{s, Array2};

use crate::error::{ChbError, Result};
use crate::grid::{
    divergence, dot_cells, dot_faces, face_average, face_product, gradient_to_faces, l2_norm,
    l2_norm_faces, vector_grad_norm_sq, vector_laplacian, GridSpec, MacVector, ScalarBc,
    ScalarField, VectorBc,
};
use crate::spectral::{Basis1d, BasisKind, PoissonSolver, Separable2d};

pub const DEFAULT_FLOW_TOL: f64 = 1e-10;
pub const DEFAULT_FLOW_MAX_ITERS: usize = 10_000;

/// ν, η, M, ε, γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysParams {
    pub nu: f64,
    pub eta: f64,
    pub mobility: f64,
    pub eps: f64,
    pub gamma: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams {
            nu: 1.0,
            eta: 1.0,
            mobility: 1.0,
            eps: 1.0,
            gamma: 1.0,
        }
    }
}

impl PhysParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("phys.nu", self.nu),
            ("phys.eta", self.eta),
            ("phys.mobility", self.mobility),
            ("phys.eps", self.eps),
            ("phys.gamma", self.gamma),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(ChbError::param(name, "must be finite"));
            }
        }
        if self.nu < 0.0 {
            return Err(ChbError::param("phys.nu", "must be >= 0"));
        }
        if self.eta < 0.0 {
            return Err(ChbError::param("phys.eta", "must be >= 0"));
        }
        if self.nu == 0.0 && self.eta <= 0.0 {
            return Err(ChbError::param("phys.eta", "must be > 0 when nu = 0"));
        }
        if self.mobility <= 0.0 {
            return Err(ChbError::param("phys.mobility", "must be > 0"));
        }
        if self.eps <= 0.0 {
            return Err(ChbError::param("phys.eps", "must be > 0"));
        }
        if self.gamma <= 0.0 {
            return Err(ChbError::param("phys.gamma", "must be > 0"));
        }
        Ok(())
    }

    pub fn is_darcy(&self) -> bool {
        self.nu == 0.0
    }
}

#[derive(Debug, Clone)]
pub struct FlowSolution {
    pub u: MacVector,
    /// Mean-zero pressure.
    pub p: ScalarField,
    pub momentum_residual: f64,
    pub divergence_norm: f64,
    pub iterations: usize,
}

/// `−γ·avg(φ)·∇μ` on faces.
pub fn capillary_force(phi: &ScalarField, mu: &ScalarField, gamma: f64) -> Result<MacVector> {
    phi.grid().ensure_same(mu.grid(), "capillary force")?;
    let grad_mu = gradient_to_faces(mu);
    let avg = face_average(phi);
    Ok(face_product(&avg, &grad_mu).scaled(-gamma))
}

/// Brinkman and Darcy solvers sharing precomputed transform tables for one
/// grid and one `(ν, η)` pair.
#[derive(Clone)]
pub struct FlowSolver {
    grid: GridSpec,
    bc: ScalarBc,
    nu: f64,
    eta: f64,
    tol: f64,
    max_iters: usize,
    ux_basis: Arc<Separable2d>,
    uy_basis: Arc<Separable2d>,
    ux_inv: Array2<f64>,
    uy_inv: Array2<f64>,
    poisson: PoissonSolver,
}

impl std::fmt::Debug for FlowSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlowSolver")
            .field("grid", &self.grid)
            .field("bc", &self.bc)
            .field("nu", &self.nu)
            .field("eta", &self.eta)
            .field("tol", &self.tol)
            .finish()
    }
}

impl FlowSolver {
    pub fn new(
        grid: GridSpec,
        bc: ScalarBc,
        nu: f64,
        eta: f64,
        tol: f64,
        max_iters: usize,
    ) -> Result<Self> {
        if !(nu.is_finite() && nu >= 0.0) {
            return Err(ChbError::param("phys.nu", "must be >= 0"));
        }
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(ChbError::param("phys.eta", "must be >= 0"));
        }
        if nu + eta <= 0.0 {
            return Err(ChbError::param("phys.eta", "nu + eta must be > 0"));
        }
        if bc == ScalarBc::Periodic && eta <= 0.0 {
            // constants solve the homogeneous problem: the mean flow is undetermined
            return Err(ChbError::param("phys.eta", "must be > 0 with periodic boundaries"));
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err(ChbError::param("flow.tol", "must be > 0"));
        }
        if max_iters == 0 {
            return Err(ChbError::param("flow.max_iters", "must be > 0"));
        }
        let (nx, ny, hx, hy) = (grid.nx(), grid.ny(), grid.hx(), grid.hy());
        let (ux_basis, uy_basis) = match bc {
            ScalarBc::Neumann => (
                Separable2d::new(
                    Basis1d::new(BasisKind::DirichletFace, nx, hx),
                    Basis1d::new(BasisKind::DirichletCell, ny, hy),
                ),
                Separable2d::new(
                    Basis1d::new(BasisKind::DirichletCell, nx, hx),
                    Basis1d::new(BasisKind::DirichletFace, ny, hy),
                ),
            ),
            ScalarBc::Periodic => {
                let b = Separable2d::new(
                    Basis1d::new(BasisKind::Periodic, nx, hx),
                    Basis1d::new(BasisKind::Periodic, ny, hy),
                );
                (b.clone(), b)
            }
        };
        let ux_inv = ux_basis.eigenvalue_table().mapv(|l| 1.0 / (eta + nu * l));
        let uy_inv = uy_basis.eigenvalue_table().mapv(|l| 1.0 / (eta + nu * l));
        Ok(FlowSolver {
            grid,
            bc,
            nu,
            eta,
            tol,
            max_iters,
            ux_basis: Arc::new(ux_basis),
            uy_basis: Arc::new(uy_basis),
            ux_inv,
            uy_inv,
            poisson: PoissonSolver::new(grid, bc)?,
        })
    }

    pub fn from_params(
        grid: GridSpec,
        bc: ScalarBc,
        params: &PhysParams,
        tol: f64,
        max_iters: usize,
    ) -> Result<Self> {
        Self::new(grid, bc, params.nu, params.eta, tol, max_iters)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn velocity_bc(&self) -> VectorBc {
        match (self.bc, self.nu > 0.0) {
            (ScalarBc::Periodic, _) => VectorBc::Periodic,
            (ScalarBc::Neumann, true) => VectorBc::NoSlip,
            (ScalarBc::Neumann, false) => VectorBc::NoPenetration,
        }
    }

    /// Dispatches on ν: Brinkman for ν > 0, Darcy otherwise.
    pub fn solve(&self, force: &MacVector, warm_pressure: Option<&ScalarField>) -> Result<FlowSolution> {
        if self.nu > 0.0 {
            self.brinkman(force, warm_pressure)
        } else {
            self.darcy(force)
        }
    }

    fn prepare_force(&self, force: &MacVector) -> Result<MacVector> {
        self.grid.ensure_same(force.grid(), "flow force")?;
        if !force.is_finite() {
            return Err(ChbError::NonFinite("flow force".into()));
        }
        Ok(force.clone().with_bc(self.velocity_bc()))
    }

    /// `(η − νΔ_h)⁻¹` applied component-wise on the unknown faces.
    fn helmholtz_inverse(&self, rhs: &MacVector) -> MacVector {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let bc = self.velocity_bc();
        let mut out = MacVector::zeros(self.grid, bc);
        let (ox, oy) = out.components_mut();
        match self.bc {
            ScalarBc::Neumann => {
                let ix = rhs.ux().slice(s![.., 1..nx]).to_owned();
                ox.slice_mut(s![.., 1..nx])
                    .assign(&self.ux_basis.apply_symbol(&ix, &self.ux_inv));
                let iy = rhs.uy().slice(s![1..ny, ..]).to_owned();
                oy.slice_mut(s![1..ny, ..])
                    .assign(&self.uy_basis.apply_symbol(&iy, &self.uy_inv));
            }
            ScalarBc::Periodic => {
                let ix = rhs.ux().slice(s![.., 0..nx]).to_owned();
                ox.slice_mut(s![.., 0..nx])
                    .assign(&self.ux_basis.apply_symbol(&ix, &self.ux_inv));
                let iy = rhs.uy().slice(s![0..ny, ..]).to_owned();
                oy.slice_mut(s![0..ny, ..])
                    .assign(&self.uy_basis.apply_symbol(&iy, &self.uy_inv));
            }
        }
        out.enforce_boundary();
        out
    }

    /// Interior-face gradient with the velocity boundary convention.
    fn pressure_gradient(&self, p: &ScalarField) -> MacVector {
        gradient_to_faces(p).with_bc(self.velocity_bc())
    }

    fn precondition(&self, r: &ScalarField) -> ScalarField {
        let z = self.poisson.solve_projected(r);
        z.scaled(self.eta).axpy(self.nu, &r.mean_free())
    }

    /// Momentum residual `‖−νΔu + ηu + ∇p − F‖` over faces.
    pub fn momentum_residual(&self, u: &MacVector, p: &ScalarField, force: &MacVector) -> f64 {
        let mut r = u.scaled(self.eta).add(&self.pressure_gradient(p)).sub(force);
        if self.nu > 0.0 {
            r.axpy_in_place(-self.nu, &vector_laplacian(u));
        }
        r.enforce_boundary();
        l2_norm_faces(&r)
    }

    pub fn brinkman(&self, force: &MacVector, warm_pressure: Option<&ScalarField>) -> Result<FlowSolution> {
        if self.nu <= 0.0 {
            return Err(ChbError::UseDarcySolve);
        }
        let f = self.prepare_force(force)?;
        // Split off the gradient part exactly: F = ∇q + F_s with ∇·F_s = 0.
        // The iteration then only sees F_s, whose size is comparable to
        // (η + νλ)u even when F is nearly a pure gradient.
        let q = self.poisson.solve_projected(&divergence(&f).scaled(-1.0));
        let fs = f.sub(&self.pressure_gradient(&q));
        let fs_norm = l2_norm_faces(&fs);
        if fs_norm == 0.0 || fs_norm <= 1e-15 * l2_norm_faces(&f) {
            let u = MacVector::zeros(self.grid, self.velocity_bc());
            let momentum_residual = self.momentum_residual(&u, &q, &f);
            return Ok(FlowSolution {
                u,
                p: q,
                momentum_residual,
                divergence_norm: 0.0,
                iterations: 0,
            });
        }
        let f = fs;
        let threshold = self.tol * fs_norm.min(1.0);

        let mut p = match warm_pressure {
            Some(w) if w.grid() == &self.grid && w.is_finite() => w.sub(&q).mean_free(),
            _ => ScalarField::zeros(self.grid, self.bc),
        };
        let mut u = self.helmholtz_inverse(&f.sub(&self.pressure_gradient(&p)));
        let mut r = divergence(&u).scaled(-1.0);
        let mut rnorm = l2_norm(&r);
        let mut best = rnorm;
        let mut iterations = 0;
        if rnorm > threshold {
            let mut z = self.precondition(&r);
            let mut d = z.clone();
            let mut rz = dot_cells(&r, &z);
            loop {
                if iterations >= self.max_iters {
                    return Err(ChbError::FlowNotConverged {
                        iterations,
                        residual: best,
                    });
                }
                iterations += 1;
                let w = self.helmholtz_inverse(&self.pressure_gradient(&d));
                let sd = divergence(&w).scaled(-1.0);
                let dsd = dot_cells(&d, &sd);
                if !(dsd > 0.0) {
                    // Schur complement lost positivity: round-off floor.
                    break;
                }
                let alpha = rz / dsd;
                p = p.axpy(alpha, &d);
                u.axpy_in_place(-alpha, &w);
                r = divergence(&u).scaled(-1.0);
                rnorm = l2_norm(&r);
                best = best.min(rnorm);
                if rnorm <= threshold {
                    break;
                }
                z = self.precondition(&r);
                let rz_new = dot_cells(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                d = z.axpy(beta, &d);
            }
            if rnorm > threshold {
                return Err(ChbError::FlowNotConverged {
                    iterations,
                    residual: best,
                });
            }
        }
        u.enforce_boundary();
        let p = p.add(&q).mean_free();
        let full = self.prepare_force(force)?;
        let momentum_residual = self.momentum_residual(&u, &p, &full);
        Ok(FlowSolution {
            u,
            p,
            momentum_residual,
            divergence_norm: rnorm,
            iterations,
        })
    }

    pub fn darcy(&self, force: &MacVector) -> Result<FlowSolution> {
        if self.eta <= 0.0 {
            return Err(ChbError::param("phys.eta", "darcy solve requires eta > 0"));
        }
        let f = self.prepare_force(force)?;
        let p = self.poisson.solve_projected(&divergence(&f).scaled(-1.0));
        let mut u = f.sub(&self.pressure_gradient(&p)).scaled(1.0 / self.eta);
        u.enforce_boundary();
        let divergence_norm = l2_norm(&divergence(&u));
        let momentum_residual = self.momentum_residual(&u, &p, &f);
        Ok(FlowSolution {
            u,
            p,
            momentum_residual,
            divergence_norm,
            iterations: 0,
        })
    }
}

/// One-shot Brinkman solve (no-slip walls, or periodic if the force is periodic).
pub fn brinkman_solve(force: &MacVector, params: &PhysParams, tol: f64) -> Result<FlowSolution> {
    if params.nu <= 0.0 {
        return Err(ChbError::UseDarcySolve);
    }
    let bc = force.bc().scalar_bc();
    FlowSolver::from_params(*force.grid(), bc, params, tol, DEFAULT_FLOW_MAX_ITERS)?
        .brinkman(force, None)
}

/// One-shot Darcy solve with `u·n = 0`.
pub fn darcy_solve(force: &MacVector, params: &PhysParams, tol: f64) -> Result<FlowSolution> {
    if params.eta <= 0.0 {
        return Err(ChbError::param("phys.eta", "darcy solve requires eta > 0"));
    }
    if params.nu != 0.0 {
        return Err(ChbError::param("phys.nu", "darcy solve requires nu = 0"));
    }
    let bc = force.bc().scalar_bc();
    let sol = FlowSolver::from_params(*force.grid(), bc, params, tol, DEFAULT_FLOW_MAX_ITERS)?
        .darcy(force)?;
    if sol.divergence_norm > tol * l2_norm_faces(force).max(1.0) {
        return Err(ChbError::FlowNotConverged {
            iterations: 0,
            residual: sol.divergence_norm,
        });
    }
    Ok(sol)
}

/// Both sides of the velocity energy identity `ν‖∇u‖² + η‖u‖² = ⟨F, u⟩`.
pub fn energy_identity(u: &MacVector, force: &MacVector, nu: f64, eta: f64) -> (f64, f64) {
    let visc = if nu > 0.0 {
        nu * vector_grad_norm_sq(u)
    } else {
        0.0
    };
    let lhs = visc + eta * dot_faces(u, u);
    let rhs = dot_faces(&force.clone().with_bc(u.bc()), u);
    (lhs, rhs)
}
