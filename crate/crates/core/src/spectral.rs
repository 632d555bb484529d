//! Fast direct solvers for `a·I + b·Δ_h + c·Δ_h²` by separable
//! diagonalization.
//!
//! The mirrored-ghost Laplacian is diagonal in the DCT-II basis, the
//! face-located Dirichlet Laplacian in DST-I and the cell-located Dirichlet
//! (sign-flipped ghost) one in DST-II. Periodic operators use an explicit
//! orthonormal real-Fourier matrix.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustdct::{DctPlanner, Dst1, TransformType2And3};

use crate::error::{ChbError, Result};
use crate::grid::{laplacian, GridSpec, ScalarBc, ScalarField};

/// The 1D second-difference closure a basis diagonalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// `n` cells, mirrored ghosts (zero normal difference).
    NeumannCell,
    /// `n - 1` interior faces, zero at both end faces.
    DirichletFace,
    /// `n` cells, ghost = −value (zero trace halfway to the ghost).
    DirichletCell,
    /// `n` cells with wrap-around.
    Periodic,
}

#[derive(Clone)]
enum Plan {
    Type23(Arc<dyn TransformType2And3<f64>>),
    Dst1(Arc<dyn Dst1<f64>>),
    /// Rows are orthonormal basis vectors.
    Dense(Array2<f64>),
}

/// One-dimensional eigenbasis of `−Δ_h` for a given closure.
#[derive(Clone)]
pub struct Basis1d {
    kind: BasisKind,
    len: usize,
    eigenvalues: Vec<f64>,
    plan: Plan,
}

impl Basis1d {
    /// `cells` is the number of grid cells along the axis; `h` its spacing.
    pub fn new(kind: BasisKind, cells: usize, h: f64) -> Self {
        let n = cells;
        let r = 2.0 / (h * h);
        let mut planner = DctPlanner::new();
        let (len, eigenvalues, plan) = match kind {
            BasisKind::NeumannCell => (
                n,
                (0..n)
                    .map(|k| r * (1.0 - (PI * k as f64 / n as f64).cos()))
                    .collect(),
                Plan::Type23(planner.plan_dct2(n)),
            ),
            BasisKind::DirichletFace => (
                n - 1,
                (1..n)
                    .map(|k| r * (1.0 - (PI * k as f64 / n as f64).cos()))
                    .collect(),
                Plan::Dst1(planner.plan_dst1(n - 1)),
            ),
            BasisKind::DirichletCell => (
                n,
                (1..=n)
                    .map(|k| r * (1.0 - (PI * k as f64 / n as f64).cos()))
                    .collect(),
                Plan::Type23(planner.plan_dst2(n)),
            ),
            BasisKind::Periodic => {
                let (q, lam) = periodic_basis(n, r);
                (n, lam, Plan::Dense(q))
            }
        };
        Basis1d {
            kind,
            len,
            eigenvalues,
            plan,
        }
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Eigenvalues of `−Δ_h`, in coefficient order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Whether coefficient 0 is the constant mode.
    pub fn has_constant_mode(&self) -> bool {
        matches!(self.kind, BasisKind::NeumannCell | BasisKind::Periodic)
    }

    pub fn forward(&self, buf: &mut [f64], scratch: &mut Vec<f64>) {
        match &self.plan {
            Plan::Type23(p) => {
                let scratch = scratch_slice(scratch, p.get_scratch_len());
                match self.kind {
                    BasisKind::NeumannCell => p.process_dct2_with_scratch(buf, scratch),
                    _ => p.process_dst2_with_scratch(buf, scratch),
                }
            }
            Plan::Dst1(p) => {
                let scratch = scratch_slice(scratch, p.get_scratch_len());
                p.process_dst1_with_scratch(buf, scratch)
            }
            Plan::Dense(q) => dense_apply(q, false, buf, scratch),
        }
    }

    /// Exact inverse of [`Basis1d::forward`].
    pub fn inverse(&self, buf: &mut [f64], scratch: &mut Vec<f64>) {
        match &self.plan {
            Plan::Type23(p) => {
                let scratch = scratch_slice(scratch, p.get_scratch_len());
                match self.kind {
                    BasisKind::NeumannCell => p.process_dct3_with_scratch(buf, scratch),
                    _ => p.process_dst3_with_scratch(buf, scratch),
                }
                let s = 2.0 / self.len as f64;
                buf.iter_mut().for_each(|v| *v *= s);
            }
            Plan::Dst1(p) => {
                let scratch = scratch_slice(scratch, p.get_scratch_len());
                p.process_dst1_with_scratch(buf, scratch);
                let s = 2.0 / (self.len + 1) as f64;
                buf.iter_mut().for_each(|v| *v *= s);
            }
            Plan::Dense(q) => dense_apply(q, true, buf, scratch),
        }
    }
}

/// Some rustdct algorithms (DST-I via a padded FFT) rely on untouched
/// scratch entries being zero, so the buffer is cleared per call when it is
/// shared between plans.
fn scratch_slice(scratch: &mut Vec<f64>, len: usize) -> &mut [f64] {
    if scratch.len() < len {
        scratch.resize(len, 0.0);
    }
    let s = &mut scratch[..len];
    s.fill(0.0);
    s
}

fn dense_apply(q: &Array2<f64>, transpose: bool, buf: &mut [f64], scratch: &mut Vec<f64>) {
    let n = buf.len();
    scratch.clear();
    scratch.extend_from_slice(buf);
    for (k, out) in buf.iter_mut().enumerate() {
        let mut acc = 0.0;
        for m in 0..n {
            let w = if transpose { q[[m, k]] } else { q[[k, m]] };
            acc += w * scratch[m];
        }
        *out = acc;
    }
}

fn periodic_basis(n: usize, r: f64) -> (Array2<f64>, Vec<f64>) {
    let mut q = Array2::zeros((n, n));
    let mut lam = vec![0.0; n];
    let nf = n as f64;
    let mut row = 0;
    let mut push = |q: &mut Array2<f64>, lam: &mut Vec<f64>, k: usize, f: &dyn Fn(f64) -> f64| {
        for m in 0..n {
            q[[row, m]] = f(m as f64);
        }
        lam[row] = r * (1.0 - (2.0 * PI * k as f64 / nf).cos());
        row += 1;
    };
    push(&mut q, &mut lam, 0, &|_| 1.0 / nf.sqrt());
    let a = (2.0 / nf).sqrt();
    for k in 1..n.div_ceil(2) {
        let w = 2.0 * PI * k as f64 / nf;
        push(&mut q, &mut lam, k, &|m| a * (w * m).cos());
        push(&mut q, &mut lam, k, &|m| a * (w * m).sin());
    }
    if n % 2 == 0 {
        push(&mut q, &mut lam, n / 2, &|m| {
            if (m as usize) % 2 == 0 {
                1.0 / nf.sqrt()
            } else {
                -1.0 / nf.sqrt()
            }
        });
    }
    (q, lam)
}

/// Tensor-product basis for arrays of shape `(by.len(), bx.len())`.
#[derive(Clone)]
pub struct Separable2d {
    bx: Basis1d,
    by: Basis1d,
}

impl std::fmt::Debug for Separable2d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Separable2d")
            .field("x", &(self.bx.kind(), self.bx.len()))
            .field("y", &(self.by.kind(), self.by.len()))
            .finish()
    }
}

impl Separable2d {
    pub fn new(bx: Basis1d, by: Basis1d) -> Self {
        Separable2d { bx, by }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.by.len(), self.bx.len())
    }

    pub fn bx(&self) -> &Basis1d {
        &self.bx
    }

    pub fn by(&self) -> &Basis1d {
        &self.by
    }

    /// `λ_{k,l}` of `−Δ_h` per mode.
    pub fn eigenvalue_table(&self) -> Array2<f64> {
        let (lx, ly) = (self.bx.eigenvalues(), self.by.eigenvalues());
        Array2::from_shape_fn(self.shape(), |(l, k)| lx[k] + ly[l])
    }

    pub fn has_constant_mode(&self) -> bool {
        self.bx.has_constant_mode() && self.by.has_constant_mode()
    }

    pub fn forward(&self, a: &mut Array2<f64>) {
        transform_lanes(a, &self.bx, &self.by, false);
    }

    pub fn inverse(&self, a: &mut Array2<f64>) {
        transform_lanes(a, &self.bx, &self.by, true);
    }

    /// Applies `g(λ)` as a multiplier: `x = Q g(Λ) Qᵀ rhs`.
    pub fn apply_symbol(&self, rhs: &Array2<f64>, symbol: &Array2<f64>) -> Array2<f64> {
        let mut a = rhs.to_owned();
        self.forward(&mut a);
        a *= symbol;
        self.inverse(&mut a);
        a
    }
}

fn transform_lanes(a: &mut Array2<f64>, bx: &Basis1d, by: &Basis1d, inverse: bool) {
    let mut scratch = Vec::new();
    let apply = |basis: &Basis1d, buf: &mut [f64], scratch: &mut Vec<f64>| {
        if inverse {
            basis.inverse(buf, scratch);
        } else {
            basis.forward(buf, scratch);
        }
    };
    let (rows, cols) = a.dim();
    if !a.is_standard_layout() {
        *a = a.as_standard_layout().into_owned();
    }
    // x lanes are contiguous rows
    for lane in a.as_slice_mut().unwrap().chunks_exact_mut(cols) {
        apply(bx, lane, &mut scratch);
    }
    // y lanes through one transposed copy
    let mut t = a.t().as_standard_layout().into_owned();
    for lane in t.as_slice_mut().unwrap().chunks_exact_mut(rows) {
        apply(by, lane, &mut scratch);
    }
    a.assign(&t.t());
}

/// The constant-coefficient operator `a·I + b·Δ_h + c·Δ_h²` on cell fields.
///
/// Its symbol is `σ = a − b·λ + c·λ²` for eigenvalues `λ ≥ 0` of `−Δ_h`.
#[derive(Clone)]
pub struct HelmholtzOperator {
    grid: GridSpec,
    a: f64,
    b: f64,
    c: f64,
    bc: ScalarBc,
    basis: Arc<Separable2d>,
    lambda: Array2<f64>,
    inv_symbol: Array2<f64>,
    singular: bool,
}

impl std::fmt::Debug for HelmholtzOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HelmholtzOperator")
            .field("grid", &self.grid)
            .field("a", &self.a)
            .field("b", &self.b)
            .field("c", &self.c)
            .field("bc", &self.bc)
            .field("singular", &self.singular)
            .finish()
    }
}

/// Cell-centered basis for a scalar boundary condition.
pub fn scalar_basis(grid: &GridSpec, bc: ScalarBc) -> Separable2d {
    let kind = match bc {
        ScalarBc::Neumann => BasisKind::NeumannCell,
        ScalarBc::Periodic => BasisKind::Periodic,
    };
    Separable2d::new(
        Basis1d::new(kind, grid.nx(), grid.hx()),
        Basis1d::new(kind, grid.ny(), grid.hy()),
    )
}

impl HelmholtzOperator {
    pub fn new(grid: GridSpec, bc: ScalarBc, a: f64, b: f64, c: f64) -> Result<Self> {
        Self::with_basis(Arc::new(scalar_basis(&grid, bc)), grid, bc, a, b, c)
    }

    /// Reuses precomputed transform plans (e.g. when only the coefficients change).
    pub fn with_basis(
        basis: Arc<Separable2d>,
        grid: GridSpec,
        bc: ScalarBc,
        a: f64,
        b: f64,
        c: f64,
    ) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b), ("c", c)] {
            if !v.is_finite() {
                return Err(ChbError::param(name, "coefficient must be finite"));
            }
        }
        let lambda = basis.eigenvalue_table();
        let symbol = lambda.mapv(|l| a - b * l + c * l * l);
        let scale = symbol.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        let tiny = 1e-14 * scale.max(f64::MIN_POSITIVE);
        let singular = basis.has_constant_mode() && symbol[[0, 0]].abs() <= tiny;
        let mut inv_symbol = Array2::zeros(symbol.dim());
        for ((idx, s), inv) in symbol.indexed_iter().zip(inv_symbol.iter_mut()) {
            if idx == (0, 0) && singular {
                continue;
            }
            if s.abs() <= tiny {
                return Err(ChbError::param(
                    "symbol",
                    format!("operator symbol vanishes at mode {idx:?}"),
                ));
            }
            *inv = 1.0 / s;
        }
        Ok(HelmholtzOperator {
            grid,
            a,
            b,
            c,
            bc,
            basis,
            lambda,
            inv_symbol,
            singular,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn bc(&self) -> ScalarBc {
        self.bc
    }

    pub fn coefficients(&self) -> (f64, f64, f64) {
        (self.a, self.b, self.c)
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn basis(&self) -> &Arc<Separable2d> {
        &self.basis
    }

    /// Eigenvalues of `−Δ_h` per mode.
    pub fn eigenvalues(&self) -> &Array2<f64> {
        &self.lambda
    }

    /// Stencil application `a f + b Δ_h f + c Δ_h² f` (no transforms).
    pub fn apply(&self, f: &ScalarField) -> ScalarField {
        let lf = laplacian(f);
        let mut out = f.scaled(self.a).axpy(self.b, &lf);
        if self.c != 0.0 {
            out = out.axpy(self.c, &laplacian(&lf));
        }
        out
    }

    /// Solves `op(x) = rhs`.
    ///
    /// For a singular operator (zero symbol on the constant mode) the rhs
    /// must be mean-zero and `mean_constraint` supplies the mean of `x`. For
    /// a regular operator a supplied constraint overrides the mean of `x`.
    pub fn solve(&self, rhs: &ScalarField, mean_constraint: Option<f64>) -> Result<ScalarField> {
        self.grid.ensure_same(rhs.grid(), "helmholtz solve")?;
        if !rhs.is_finite() {
            return Err(ChbError::NonFinite("non-finite input".into()));
        }
        if let Some(m) = mean_constraint {
            if !m.is_finite() {
                return Err(ChbError::NonFinite("mean constraint".into()));
            }
        }
        if self.singular {
            let mean = rhs.mean();
            let scale = rhs.max_abs();
            if mean.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
                return Err(ChbError::IncompatibleSingular { mean });
            }
            if mean_constraint.is_none() {
                return Err(ChbError::MissingMeanConstraint);
            }
        }
        let mut a = rhs.values().to_owned();
        self.basis.forward(&mut a);
        a *= &self.inv_symbol;
        if mean_constraint.is_some() && self.basis.has_constant_mode() {
            a[[0, 0]] = 0.0;
        }
        self.basis.inverse(&mut a);
        if let Some(m) = mean_constraint {
            // measured rather than assumed: the inverse transform leaves an
            // O(eps) mean that otherwise accumulates over long runs
            let shift = m - a.sum() / a.len() as f64;
            a.mapv_inplace(|v| v + shift);
        }
        Ok(ScalarField::from_raw(self.grid, self.bc, a))
    }
}

/// Mean-zero Neumann (or periodic) Poisson inverse `(−Δ_h)⁻¹`.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    op: HelmholtzOperator,
}

impl PoissonSolver {
    pub fn new(grid: GridSpec, bc: ScalarBc) -> Result<Self> {
        Ok(PoissonSolver {
            op: HelmholtzOperator::new(grid, bc, 0.0, -1.0, 0.0)?,
        })
    }

    /// Solves `−Δ_h x = rhs` for mean-zero `rhs`, returning the mean-zero `x`.
    pub fn solve(&self, rhs: &ScalarField) -> Result<ScalarField> {
        self.op.solve(rhs, Some(0.0))
    }

    /// Same as [`PoissonSolver::solve`] but projects out the mean of `rhs`
    /// first, for residuals whose mean is zero only up to round-off.
    pub fn solve_projected(&self, rhs: &ScalarField) -> ScalarField {
        let mut a = rhs.values().to_owned();
        let basis = self.op.basis();
        basis.forward(&mut a);
        a *= &self.op.inv_symbol;
        a[[0, 0]] = 0.0;
        basis.inverse(&mut a);
        ScalarField::from_raw(*rhs.grid(), rhs.bc(), a)
    }
}

/// ‖f‖_{H⁻¹} = ⟨f, (−Δ_h)⁻¹ f⟩^½ for mean-zero `f`.
pub fn hm1_norm(f: &ScalarField) -> Result<f64> {
    let mean = f.mean();
    if mean.abs() > 1e-12 * f.max_abs().max(f64::MIN_POSITIVE) {
        return Err(ChbError::MeanZeroRequired { mean });
    }
    let poisson = PoissonSolver::new(*f.grid(), f.bc())?;
    let x = poisson.solve_projected(f);
    Ok(crate::grid::dot_cells(f, &x).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Applies the 1D second difference (negated) directly from its closure.
    fn neg_second_difference(kind: BasisKind, x: &[f64], h: f64) -> Vec<f64> {
        let n = x.len();
        let at = |i: isize| -> f64 {
            match kind {
                BasisKind::NeumannCell => x[i.clamp(0, n as isize - 1) as usize],
                BasisKind::DirichletFace => {
                    if i < 0 || i >= n as isize {
                        0.0
                    } else {
                        x[i as usize]
                    }
                }
                BasisKind::DirichletCell => {
                    if i < 0 {
                        -x[0]
                    } else if i >= n as isize {
                        -x[n - 1]
                    } else {
                        x[i as usize]
                    }
                }
                BasisKind::Periodic => x[i.rem_euclid(n as isize) as usize],
            }
        };
        (0..n as isize)
            .map(|i| -(at(i + 1) - 2.0 * at(i) + at(i - 1)) / (h * h))
            .collect()
    }

    #[test]
    fn transforms_round_trip() {
        for kind in [
            BasisKind::NeumannCell,
            BasisKind::DirichletFace,
            BasisKind::DirichletCell,
            BasisKind::Periodic,
        ] {
            for cells in [4, 7, 16] {
                let b = Basis1d::new(kind, cells, 0.1);
                let x = random_vec(b.len(), cells as u64);
                let mut y = x.clone();
                let mut s = Vec::new();
                b.forward(&mut y, &mut s);
                b.inverse(&mut y, &mut s);
                for (a, c) in x.iter().zip(&y) {
                    assert!((a - c).abs() < 1e-13, "{kind:?} {cells}");
                }
            }
        }
    }

    #[test]
    fn bases_diagonalize_their_closures() {
        // x = inverse(e_k) must satisfy −Δx = λ_k x.
        for kind in [
            BasisKind::NeumannCell,
            BasisKind::DirichletFace,
            BasisKind::DirichletCell,
            BasisKind::Periodic,
        ] {
            let h = 0.3;
            let b = Basis1d::new(kind, 9, h);
            let mut s = Vec::new();
            for k in 0..b.len() {
                let mut e = vec![0.0; b.len()];
                e[k] = 1.0;
                b.inverse(&mut e, &mut s);
                let lx = neg_second_difference(kind, &e, h);
                let lam = b.eigenvalues()[k];
                for (a, c) in lx.iter().zip(&e) {
                    assert!((a - lam * c).abs() < 1e-11 * lam.max(1.0), "{kind:?} k={k}");
                }
            }
        }
    }

    #[test]
    fn identity_operator_returns_rhs() {
        let g = GridSpec::new(8, 6, 1.0, 1.0).unwrap();
        let op = HelmholtzOperator::new(g, ScalarBc::Neumann, 1.0, 0.0, 0.0).unwrap();
        let r = ScalarField::from_fn(g, ScalarBc::Neumann, |x, y| x * x - y);
        let x = op.solve(&r, None).unwrap();
        for (a, b) in x.values().iter().zip(r.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn poisson_inverts_cosine_mode() {
        let g = GridSpec::new(16, 8, 2.0, 1.0).unwrap();
        let lam = 2.0 / (g.hx() * g.hx()) * (1.0 - (PI * g.hx() / g.lx()).cos());
        let mode = ScalarField::from_fn(g, ScalarBc::Neumann, |x, _| (PI * x / g.lx()).cos());
        let op = HelmholtzOperator::new(g, ScalarBc::Neumann, 0.0, -1.0, 0.0).unwrap();
        assert!(op.is_singular());
        // op = −Δ here, so the rhs is +λ·mode for x = mode.
        let x = op.solve(&mode.scaled(lam), Some(0.0)).unwrap();
        for (a, b) in x.values().iter().zip(mode.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        // and the oracle: −Δ x reproduces the rhs
        let back = laplacian(&x).scaled(-1.0);
        for (a, b) in back.values().iter().zip(mode.values()) {
            assert!((a - lam * b).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_solve_errors() {
        let g = GridSpec::unit_square(8).unwrap();
        let op = HelmholtzOperator::new(g, ScalarBc::Neumann, 0.0, -1.0, 0.0).unwrap();
        let one = ScalarField::constant(g, ScalarBc::Neumann, 1.0);
        assert!(matches!(
            op.solve(&one, Some(0.0)),
            Err(ChbError::IncompatibleSingular { .. })
        ));
        let zero = ScalarField::zeros(g, ScalarBc::Neumann);
        assert!(matches!(
            op.solve(&zero, None),
            Err(ChbError::MissingMeanConstraint)
        ));
        let mut nan = zero.clone();
        nan.values_mut()[[0, 0]] = f64::NAN;
        assert!(matches!(op.solve(&nan, Some(0.0)), Err(ChbError::NonFinite(_))));
    }

    #[test]
    fn mean_constraint_is_exact() {
        let g = GridSpec::new(8, 8, 1.0, 1.0).unwrap();
        let op = HelmholtzOperator::new(g, ScalarBc::Neumann, 0.0, 2.0, -0.5).unwrap();
        let r = ScalarField::from_fn(g, ScalarBc::Neumann, |x, y| (3.0 * x).sin() * y).mean_free();
        let x = op.solve(&r, Some(0.7)).unwrap();
        assert!((x.mean() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn round_trip_apply_solve() {
        for bc in [ScalarBc::Neumann, ScalarBc::Periodic] {
            let g = GridSpec::new(12, 10, 1.0, 0.9).unwrap();
            let op = HelmholtzOperator::new(g, bc, 3.0, -0.2, 1e-3).unwrap();
            let r = ScalarField::from_fn(g, bc, |x, y| (5.0 * x).cos() + y * y);
            let x = op.solve(&r, None).unwrap();
            let back = op.apply(&x);
            let err = back.sub(&r).max_abs();
            assert!(err < 1e-11 * r.max_abs(), "{bc:?} {err}");
        }
    }

    #[test]
    fn hm1_requires_mean_zero() {
        let g = GridSpec::unit_square(8).unwrap();
        let f = ScalarField::constant(g, ScalarBc::Neumann, 1.0);
        assert!(matches!(hm1_norm(&f), Err(ChbError::MeanZeroRequired { .. })));
        assert_eq!(hm1_norm(&ScalarField::zeros(g, ScalarBc::Neumann)).unwrap(), 0.0);
    }

    #[test]
    fn hm1_of_cosine_mode() {
        let g = GridSpec::unit_square(16).unwrap();
        let f = ScalarField::from_fn(g, ScalarBc::Neumann, |x, _| (PI * x).cos());
        let lam = 2.0 / (g.hx() * g.hx()) * (1.0 - (PI * g.hx()).cos());
        let expect = crate::grid::l2_norm(&f) / lam.sqrt();
        assert!((hm1_norm(&f).unwrap() - expect).abs() < 1e-13);
    }

    #[test]
    fn mixed_bases_share_scratch() {
        // DST-II lanes followed by DST-I lanes on one scratch buffer.
        for n in [24usize, 32, 64] {
            let h = 1.0 / n as f64;
            let s2 = Separable2d::new(
                Basis1d::new(BasisKind::DirichletCell, n, h),
                Basis1d::new(BasisKind::DirichletFace, n, h),
            );
            let x = Array2::from_shape_vec(s2.shape(), random_vec(n * (n - 1), 5)).unwrap();
            let y = s2.apply_symbol(&x, &Array2::from_elem(s2.shape(), 1.0));
            let err = (&y - &x).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            assert!(err < 1e-12, "n={n}: {err}");
        }
    }
}
