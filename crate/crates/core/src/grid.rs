//! Uniform 2D MAC grid on the rectangle `[0, lx] × [0, ly]`.
//!
//! Scalars live at cell centers, velocity components on cell faces. All
//! arrays are stored row-major with `y` as the outer index, so a cell value
//! is addressed as `values[[j, i]]` with `i` along `x`.
//!
//! Homogeneous Neumann conditions are realized by mirrored ghost cells: the
//! normal difference across the wall is zero, so the boundary normal faces of
//! every gradient vanish. The cell Laplacian is defined as
//! `divergence ∘ gradient_to_faces`, which keeps summation-by-parts exact.

use ndarray::{s, Array2, Zip};

use crate::error::{ChbError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(ChbError::InvalidGrid(format!(
                "cell counts must be >= 4 (got {nx} x {ny})"
            )));
        }
        if !(lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0) {
            return Err(ChbError::InvalidGrid(format!(
                "side lengths must be positive and finite (got {lx} x {ly})"
            )));
        }
        let grid = GridSpec { nx, ny, lx, ly };
        if !(grid.hx() > 0.0 && grid.hy() > 0.0 && grid.hx().is_finite() && grid.hy().is_finite())
        {
            return Err(ChbError::InvalidGrid("degenerate spacing".into()));
        }
        Ok(grid)
    }

    /// `n × n` cells on the unit square.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    /// |Ω|
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn x_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx()
    }

    pub fn y_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy()
    }

    pub fn cell_shape(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    pub fn ux_shape(&self) -> (usize, usize) {
        (self.ny, self.nx + 1)
    }

    pub fn uy_shape(&self) -> (usize, usize) {
        (self.ny + 1, self.nx)
    }

    pub(crate) fn ensure_same(&self, other: &GridSpec, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(ChbError::GridMismatch(format!(
                "{what}: {}x{} on {}x{} vs {}x{} on {}x{}",
                self.nx, self.ny, self.lx, self.ly, other.nx, other.ny, other.lx, other.ly
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarBc {
    Neumann,
    /// Only meant for spectral-exactness testing.
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorBc {
    /// `u = 0` on the wall: normal faces zero, tangential ghosts mirrored with
    /// a sign flip.
    NoSlip,
    /// `u·n = 0`: normal faces zero, tangential ghosts mirrored as-is.
    NoPenetration,
    /// Face `nx` (resp. row `ny`) duplicates face `0`.
    Periodic,
}

impl VectorBc {
    pub fn scalar_bc(self) -> ScalarBc {
        match self {
            VectorBc::Periodic => ScalarBc::Periodic,
            _ => ScalarBc::Neumann,
        }
    }

    /// Wire tag used by the snapshot format.
    pub fn tag(self) -> u8 {
        match self {
            VectorBc::NoSlip => 0,
            VectorBc::NoPenetration => 1,
            VectorBc::Periodic => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(VectorBc::NoSlip),
            1 => Some(VectorBc::NoPenetration),
            2 => Some(VectorBc::Periodic),
            _ => None,
        }
    }
}

/// Cell-centered scalar field (φ, μ, p).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Array2<f64>,
    bc: ScalarBc,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec, bc: ScalarBc) -> Self {
        ScalarField {
            grid,
            values: Array2::zeros(grid.cell_shape()),
            bc,
        }
    }

    pub fn constant(grid: GridSpec, bc: ScalarBc, c: f64) -> Self {
        ScalarField {
            grid,
            values: Array2::from_elem(grid.cell_shape(), c),
            bc,
        }
    }

    /// Samples `f(x, y)` at cell centers.
    pub fn from_fn(grid: GridSpec, bc: ScalarBc, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let values =
            Array2::from_shape_fn(grid.cell_shape(), |(j, i)| f(grid.x_center(i), grid.y_center(j)));
        ScalarField { grid, values, bc }
    }

    pub fn from_values(grid: GridSpec, bc: ScalarBc, values: Array2<f64>) -> Result<Self> {
        if values.dim() != grid.cell_shape() {
            return Err(ChbError::GridMismatch(format!(
                "scalar array shape {:?}, expected {:?}",
                values.dim(),
                grid.cell_shape()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(ChbError::NonFinite("scalar field values".into()));
        }
        Ok(ScalarField { grid, values, bc })
    }

    pub(crate) fn from_raw(grid: GridSpec, bc: ScalarBc, values: Array2<f64>) -> Self {
        debug_assert_eq!(values.dim(), grid.cell_shape());
        ScalarField { grid, values, bc }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn bc(&self) -> ScalarBc {
        self.bc
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.values.sum()
    }

    /// ⟨f⟩ = |Ω|⁻¹ ∫ f, accumulated relative to the first value so that
    /// constant fields have exactly their value as mean.
    pub fn mean(&self) -> f64 {
        let v0 = self.values.first().copied().unwrap_or(0.0);
        v0 + compensated_sum(self.values.iter().map(|v| v - v0)) / self.values.len() as f64
    }

    pub fn integral(&self) -> f64 {
        self.values.sum() * self.grid.cell_area()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::from_raw(self.grid, self.bc, self.values.mapv(f))
    }

    pub fn scaled(&self, k: f64) -> ScalarField {
        self.map(|v| k * v)
    }

    /// Subtracts the mean (constant fields map to exact zeros).
    pub fn mean_free(&self) -> ScalarField {
        let m = self.mean();
        self.map(|v| v - m)
    }

    /// `self + k·other`
    pub fn axpy(&self, k: f64, other: &ScalarField) -> ScalarField {
        let mut values = self.values.clone();
        values.scaled_add(k, &other.values);
        ScalarField::from_raw(self.grid, self.bc, values)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        ScalarField::from_raw(self.grid, self.bc, &self.values - &other.values)
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        ScalarField::from_raw(self.grid, self.bc, &self.values + &other.values)
    }
}

/// Face-centered vector field on the MAC grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MacVector {
    grid: GridSpec,
    ux: Array2<f64>,
    uy: Array2<f64>,
    bc: VectorBc,
}

impl MacVector {
    pub fn zeros(grid: GridSpec, bc: VectorBc) -> Self {
        MacVector {
            grid,
            ux: Array2::zeros(grid.ux_shape()),
            uy: Array2::zeros(grid.uy_shape()),
            bc,
        }
    }

    /// Validating constructor: shapes must match, values be finite, and the
    /// boundary normal faces must satisfy `bc`.
    pub fn from_components(
        grid: GridSpec,
        bc: VectorBc,
        ux: Array2<f64>,
        uy: Array2<f64>,
    ) -> Result<Self> {
        if ux.dim() != grid.ux_shape() || uy.dim() != grid.uy_shape() {
            return Err(ChbError::GridMismatch(format!(
                "face array shapes {:?}/{:?}, expected {:?}/{:?}",
                ux.dim(),
                uy.dim(),
                grid.ux_shape(),
                grid.uy_shape()
            )));
        }
        if !(ux.iter().all(|v| v.is_finite()) && uy.iter().all(|v| v.is_finite())) {
            return Err(ChbError::NonFinite("face field values".into()));
        }
        let v = MacVector { grid, ux, uy, bc };
        let (nx, ny) = (grid.nx(), grid.ny());
        let ok = match bc {
            VectorBc::Periodic => {
                (0..ny).all(|j| v.ux[[j, 0]] == v.ux[[j, nx]])
                    && (0..nx).all(|i| v.uy[[0, i]] == v.uy[[ny, i]])
            }
            _ => {
                (0..ny).all(|j| v.ux[[j, 0]] == 0.0 && v.ux[[j, nx]] == 0.0)
                    && (0..nx).all(|i| v.uy[[0, i]] == 0.0 && v.uy[[ny, i]] == 0.0)
            }
        };
        if !ok {
            return Err(ChbError::param(
                "bc",
                format!("boundary faces violate {bc:?} condition"),
            ));
        }
        Ok(v)
    }

    pub(crate) fn from_raw(grid: GridSpec, bc: VectorBc, ux: Array2<f64>, uy: Array2<f64>) -> Self {
        debug_assert_eq!(ux.dim(), grid.ux_shape());
        debug_assert_eq!(uy.dim(), grid.uy_shape());
        MacVector { grid, ux, uy, bc }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn bc(&self) -> VectorBc {
        self.bc
    }

    pub fn ux(&self) -> &Array2<f64> {
        &self.ux
    }

    pub fn uy(&self) -> &Array2<f64> {
        &self.uy
    }

    pub fn with_bc(mut self, bc: VectorBc) -> Self {
        self.bc = bc;
        self.enforce_boundary();
        self
    }

    /// Zeroes boundary normal faces (walls) or re-syncs duplicated faces (periodic).
    pub fn enforce_boundary(&mut self) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        match self.bc {
            VectorBc::Periodic => {
                for j in 0..ny {
                    self.ux[[j, nx]] = self.ux[[j, 0]];
                }
                for i in 0..nx {
                    self.uy[[ny, i]] = self.uy[[0, i]];
                }
            }
            _ => {
                for j in 0..ny {
                    self.ux[[j, 0]] = 0.0;
                    self.ux[[j, nx]] = 0.0;
                }
                for i in 0..nx {
                    self.uy[[0, i]] = 0.0;
                    self.uy[[ny, i]] = 0.0;
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.ux.iter().all(|v| v.is_finite()) && self.uy.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.ux
            .iter()
            .chain(self.uy.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, k: f64) -> MacVector {
        MacVector::from_raw(self.grid, self.bc, self.ux.mapv(|v| k * v), self.uy.mapv(|v| k * v))
    }

    pub fn sub(&self, other: &MacVector) -> MacVector {
        MacVector::from_raw(self.grid, self.bc, &self.ux - &other.ux, &self.uy - &other.uy)
    }

    pub fn add(&self, other: &MacVector) -> MacVector {
        MacVector::from_raw(self.grid, self.bc, &self.ux + &other.ux, &self.uy + &other.uy)
    }

    /// `self + k·other`
    pub fn axpy(&self, k: f64, other: &MacVector) -> MacVector {
        let mut out = self.clone();
        out.axpy_in_place(k, other);
        out
    }

    pub(crate) fn axpy_in_place(&mut self, k: f64, other: &MacVector) {
        self.ux.scaled_add(k, &other.ux);
        self.uy.scaled_add(k, &other.uy);
    }

    pub(crate) fn components_mut(&mut self) -> (&mut Array2<f64>, &mut Array2<f64>) {
        (&mut self.ux, &mut self.uy)
    }
}

/// Face gradient of a cell field. Boundary normal faces are zero under
/// Neumann conditions (mirrored ghosts), wrapped under periodic ones.
pub fn gradient_to_faces(f: &ScalarField) -> MacVector {
    let g = *f.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (rhx, rhy) = (1.0 / g.hx(), 1.0 / g.hy());
    let v = f.values();
    let mut ux = Array2::zeros(g.ux_shape());
    let mut uy = Array2::zeros(g.uy_shape());
    Zip::from(ux.slice_mut(s![.., 1..nx]))
        .and(v.slice(s![.., 1..]))
        .and(v.slice(s![.., ..nx - 1]))
        .for_each(|o, &a, &b| *o = (a - b) * rhx);
    Zip::from(uy.slice_mut(s![1..ny, ..]))
        .and(v.slice(s![1.., ..]))
        .and(v.slice(s![..ny - 1, ..]))
        .for_each(|o, &a, &b| *o = (a - b) * rhy);
    let bc = match f.bc() {
        ScalarBc::Neumann => VectorBc::NoPenetration,
        ScalarBc::Periodic => {
            for j in 0..ny {
                let w = (v[[j, 0]] - v[[j, nx - 1]]) * rhx;
                ux[[j, 0]] = w;
                ux[[j, nx]] = w;
            }
            for i in 0..nx {
                let w = (v[[0, i]] - v[[ny - 1, i]]) * rhy;
                uy[[0, i]] = w;
                uy[[ny, i]] = w;
            }
            VectorBc::Periodic
        }
    };
    MacVector::from_raw(g, bc, ux, uy)
}

/// Per-cell flux difference `(ux[i+1]-ux[i])/hx + (uy[j+1]-uy[j])/hy`.
pub fn divergence(v: &MacVector) -> ScalarField {
    let g = *v.grid();
    let (rhx, rhy) = (1.0 / g.hx(), 1.0 / g.hy());
    let (ux, uy) = (v.ux(), v.uy());
    let (nx, ny) = (g.nx(), g.ny());
    let mut out = Array2::zeros(g.cell_shape());
    Zip::from(&mut out)
        .and(ux.slice(s![.., 1..]))
        .and(ux.slice(s![.., ..nx]))
        .and(uy.slice(s![1.., ..]))
        .and(uy.slice(s![..ny, ..]))
        .for_each(|o, &e, &w, &n, &so| *o = (e - w) * rhx + (n - so) * rhy);
    ScalarField::from_raw(g, v.bc().scalar_bc(), out)
}

/// Five-point Laplacian with mirrored-ghost Neumann (or periodic) closure.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let mut out = divergence(&gradient_to_faces(f));
    out.bc = f.bc();
    out
}

/// Two-cell arithmetic mean onto faces. Boundary faces take the adjacent
/// cell value (mirrored ghost) or wrap under periodic conditions.
pub fn face_average(f: &ScalarField) -> MacVector {
    let g = *f.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let v = f.values();
    let mut ux = Array2::zeros(g.ux_shape());
    let mut uy = Array2::zeros(g.uy_shape());
    Zip::from(ux.slice_mut(s![.., 1..nx]))
        .and(v.slice(s![.., 1..]))
        .and(v.slice(s![.., ..nx - 1]))
        .for_each(|o, &a, &b| *o = 0.5 * (a + b));
    Zip::from(uy.slice_mut(s![1..ny, ..]))
        .and(v.slice(s![1.., ..]))
        .and(v.slice(s![..ny - 1, ..]))
        .for_each(|o, &a, &b| *o = 0.5 * (a + b));
    let bc = match f.bc() {
        ScalarBc::Neumann => {
            for j in 0..ny {
                ux[[j, 0]] = v[[j, 0]];
                ux[[j, nx]] = v[[j, nx - 1]];
            }
            for i in 0..nx {
                uy[[0, i]] = v[[0, i]];
                uy[[ny, i]] = v[[ny - 1, i]];
            }
            VectorBc::NoPenetration
        }
        ScalarBc::Periodic => {
            for j in 0..ny {
                let w = 0.5 * (v[[j, 0]] + v[[j, nx - 1]]);
                ux[[j, 0]] = w;
                ux[[j, nx]] = w;
            }
            for i in 0..nx {
                let w = 0.5 * (v[[0, i]] + v[[ny - 1, i]]);
                uy[[0, i]] = w;
                uy[[ny, i]] = w;
            }
            VectorBc::Periodic
        }
    };
    // Averages are face samples, not a velocity: skip the wall-zero invariant.
    MacVector::from_raw(g, bc, ux, uy)
}

/// Face-wise product `a ⊙ b` keeping the boundary convention of `b`.
pub(crate) fn face_product(a: &MacVector, b: &MacVector) -> MacVector {
    MacVector::from_raw(*b.grid(), b.bc(), &a.ux * &b.ux, &a.uy * &b.uy)
}

/// Component-wise Laplacian of a face field. Boundary normal faces stay
/// zero for wall conditions; tangential ghosts follow `v.bc()`.
pub fn vector_laplacian(v: &MacVector) -> MacVector {
    let g = *v.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (rhx2, rhy2) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    let (ux, uy) = (v.ux(), v.uy());
    let mut lx = Array2::zeros(g.ux_shape());
    let mut ly = Array2::zeros(g.uy_shape());
    match v.bc() {
        VectorBc::Periodic => {
            for j in 0..ny {
                let (jm, jp) = ((j + ny - 1) % ny, (j + 1) % ny);
                for i in 0..nx {
                    let (im, ip) = ((i + nx - 1) % nx, (i + 1) % nx);
                    let c = ux[[j, i]];
                    lx[[j, i]] = (ux[[j, ip]] - 2.0 * c + ux[[j, im]]) * rhx2
                        + (ux[[jp, i]] - 2.0 * c + ux[[jm, i]]) * rhy2;
                    let c = uy[[j, i]];
                    ly[[j, i]] = (uy[[j, ip]] - 2.0 * c + uy[[j, im]]) * rhx2
                        + (uy[[jp, i]] - 2.0 * c + uy[[jm, i]]) * rhy2;
                }
            }
            for j in 0..ny {
                lx[[j, nx]] = lx[[j, 0]];
            }
            for i in 0..nx {
                ly[[ny, i]] = ly[[0, i]];
            }
        }
        wall => {
            let sign = if wall == VectorBc::NoSlip { -1.0 } else { 1.0 };
            wall_laplacian(&ux.view(), &mut lx, sign, rhx2, rhy2);
            // uy is ux with the roles of x and y exchanged
            let mut lyt = Array2::zeros((nx, ny + 1));
            wall_laplacian(&uy.t(), &mut lyt, sign, rhy2, rhx2);
            ly.assign(&lyt.t());
        }
    }
    MacVector::from_raw(g, v.bc(), lx, ly)
}

/// Laplacian of an x-face component `u` (shape `(rows, cols + 1)`) with zero
/// normal faces at both ends of each row and tangential ghosts `sign·u`
/// beyond the first and last rows.
fn wall_laplacian(
    u: &ndarray::ArrayView2<f64>,
    out: &mut Array2<f64>,
    sign: f64,
    rn2: f64,
    rt2: f64,
) {
    let (rows, cols1) = u.dim();
    let nc = cols1 - 1;
    Zip::from(out.slice_mut(s![.., 1..nc]))
        .and(u.slice(s![.., 2..]))
        .and(u.slice(s![.., 1..nc]))
        .and(u.slice(s![.., ..nc - 1]))
        .for_each(|o, &e, &c, &w| *o = (e - 2.0 * c + w) * rn2);
    if rows > 1 {
        Zip::from(out.slice_mut(s![1..rows - 1, 1..nc]))
            .and(u.slice(s![2.., 1..nc]))
            .and(u.slice(s![1..rows - 1, 1..nc]))
            .and(u.slice(s![..rows - 2, 1..nc]))
            .for_each(|o, &a, &c, &b| *o += (a - 2.0 * c + b) * rt2);
    }
    for i in 1..nc {
        let c = u[[0, i]];
        let above = if rows > 1 { u[[1, i]] } else { sign * c };
        out[[0, i]] += (above - 2.0 * c + sign * c) * rt2;
        if rows > 1 {
            let c = u[[rows - 1, i]];
            out[[rows - 1, i]] += (sign * c - 2.0 * c + u[[rows - 2, i]]) * rt2;
        }
    }
}

/// ⟨f, g⟩ = Σ f g hx hy
pub fn dot_cells(f: &ScalarField, g: &ScalarField) -> f64 {
    Zip::from(f.values())
        .and(g.values())
        .fold(0.0, |acc, a, b| acc + a * b)
        * f.grid().cell_area()
}

/// ⟨U, V⟩ over distinct faces, each weighted by hx hy. Duplicated periodic
/// faces are counted once.
pub fn dot_faces(u: &MacVector, v: &MacVector) -> f64 {
    let g = u.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (xcols, yrows) = match u.bc() {
        VectorBc::Periodic => (nx, ny),
        _ => (nx + 1, ny + 1),
    };
    let sx = Zip::from(u.ux().slice(ndarray::s![.., ..xcols]))
        .and(v.ux().slice(ndarray::s![.., ..xcols]))
        .fold(0.0, |acc, a, b| acc + a * b);
    let sy = Zip::from(u.uy().slice(ndarray::s![..yrows, ..]))
        .and(v.uy().slice(ndarray::s![..yrows, ..]))
        .fold(0.0, |acc, a, b| acc + a * b);
    (sx + sy) * g.cell_area()
}

pub fn l2_norm(f: &ScalarField) -> f64 {
    dot_cells(f, f).sqrt()
}

/// ‖∇f‖² on faces.
pub fn grad_norm_sq(f: &ScalarField) -> f64 {
    let g = gradient_to_faces(f);
    dot_faces(&g, &g)
}

/// ‖f‖₁ = (‖f‖² + ‖∇f‖²)^½
pub fn h1_norm(f: &ScalarField) -> f64 {
    (dot_cells(f, f) + grad_norm_sq(f)).sqrt()
}

pub fn l2_norm_faces(v: &MacVector) -> f64 {
    dot_faces(v, v).sqrt()
}

/// ‖∇u‖² = ⟨−Δ_h u, u⟩ with the ghost closure of `u.bc()`.
pub fn vector_grad_norm_sq(v: &MacVector) -> f64 {
    -dot_faces(&vector_laplacian(v), v)
}

pub fn h1_norm_faces(v: &MacVector) -> f64 {
    (dot_faces(v, v) + vector_grad_norm_sq(v)).sqrt()
}

/// Neumaier summation. Plain summation of ~10⁴ O(1) terms loses ~1e-14 in the
/// mean, which feeds back into the mass constraint over long runs.
pub fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pseudo_random(grid: GridSpec, bc: ScalarBc, seed: u64) -> ScalarField {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ScalarField::from_fn(grid, bc, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn grid_rejects_small_or_degenerate() {
        assert!(GridSpec::new(3, 8, 1.0, 1.0).is_err());
        assert!(GridSpec::new(8, 8, 0.0, 1.0).is_err());
        assert!(GridSpec::new(8, 8, 1.0, f64::NAN).is_err());
        let g = GridSpec::new(8, 4, 2.0, 1.0).unwrap();
        assert_eq!(g.hx(), 0.25);
        assert_eq!(g.hy(), 0.25);
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let g = GridSpec::new(7, 5, 1.3, 0.7).unwrap();
        let f = ScalarField::constant(g, ScalarBc::Neumann, 2.5);
        assert!(laplacian(&f).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cosine_is_a_neumann_eigenfunction() {
        let g = GridSpec::new(16, 12, 2.0, 1.5).unwrap();
        let f = ScalarField::from_fn(g, ScalarBc::Neumann, |x, _| (PI * x / g.lx()).cos());
        let lam = 2.0 / (g.hx() * g.hx()) * (1.0 - (PI * g.hx() / g.lx()).cos());
        let lf = laplacian(&f);
        for (a, b) in lf.values().iter().zip(f.values().iter()) {
            assert!((a + lam * b).abs() < 1e-12 * lam, "{a} vs {}", -lam * b);
        }
    }

    #[test]
    fn laplacian_integrates_to_zero() {
        let g = GridSpec::new(9, 11, 1.0, 2.0).unwrap();
        let f = pseudo_random(g, ScalarBc::Neumann, 3);
        let s = laplacian(&f).integral();
        assert!(s.abs() <= 1e-12 * l2_norm(&f) * 1e3, "{s}");
    }

    #[test]
    fn gradient_of_linear_field_on_4x4() {
        let g = GridSpec::unit_square(4).unwrap();
        let f = ScalarField::from_fn(g, ScalarBc::Neumann, |x, _| x);
        let gr = gradient_to_faces(&f);
        for j in 0..4 {
            assert_eq!(gr.ux()[[j, 0]], 0.0);
            assert_eq!(gr.ux()[[j, 4]], 0.0);
            for i in 1..4 {
                assert!((gr.ux()[[j, i]] - 1.0).abs() < 1e-14);
            }
        }
        assert!(gr.uy().iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn gradient_and_divergence_are_negative_adjoints() {
        for bc in [ScalarBc::Neumann, ScalarBc::Periodic] {
            let g = GridSpec::new(10, 7, 1.0, 0.8).unwrap();
            let f = pseudo_random(g, bc, 11);
            let h = pseudo_random(g, bc, 12);
            let vbc = if bc == ScalarBc::Neumann {
                VectorBc::NoSlip
            } else {
                VectorBc::Periodic
            };
            let v = gradient_to_faces(&h).with_bc(vbc);
            let lhs = dot_faces(&gradient_to_faces(&f), &v);
            let rhs = -dot_cells(&f, &divergence(&v));
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0), "{bc:?}: {lhs} {rhs}");
        }
    }

    #[test]
    fn divergence_of_admissible_field_integrates_to_zero() {
        let g = GridSpec::new(8, 8, 1.0, 1.0).unwrap();
        let v = gradient_to_faces(&pseudo_random(g, ScalarBc::Neumann, 5));
        let s = divergence(&v).integral();
        assert!(s.abs() < 1e-12 * l2_norm_faces(&v));
    }

    #[test]
    fn summation_by_parts() {
        let g = GridSpec::new(12, 9, 1.0, 1.0).unwrap();
        let f = pseudo_random(g, ScalarBc::Neumann, 1);
        let h = pseudo_random(g, ScalarBc::Neumann, 2);
        let lhs = -dot_cells(&laplacian(&f), &h);
        let rhs = dot_faces(&gradient_to_faces(&f), &gradient_to_faces(&h));
        assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
    }

    #[test]
    fn norms_of_simple_fields() {
        let g = GridSpec::unit_square(8).unwrap();
        let zero = ScalarField::zeros(g, ScalarBc::Neumann);
        assert_eq!(l2_norm(&zero), 0.0);
        assert_eq!(h1_norm(&zero), 0.0);
        let one = ScalarField::constant(g, ScalarBc::Neumann, 1.0);
        assert!((l2_norm(&one) - 1.0).abs() < 1e-15);
        assert!((h1_norm(&one) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn from_components_checks_walls() {
        let g = GridSpec::unit_square(4).unwrap();
        let mut ux = Array2::zeros(g.ux_shape());
        let uy = Array2::zeros(g.uy_shape());
        ux[[1, 0]] = 1.0;
        assert!(MacVector::from_components(g, VectorBc::NoSlip, ux.clone(), uy.clone()).is_err());
        ux[[1, 0]] = 0.0;
        ux[[1, 2]] = 1.0;
        assert!(MacVector::from_components(g, VectorBc::NoSlip, ux, uy).is_ok());
    }

    #[test]
    fn noslip_grad_norm_includes_wall_shear() {
        // single interior ux face next to the bottom wall: the mirrored ghost
        // makes the wall value zero, so the y-difference contributes.
        let g = GridSpec::unit_square(4).unwrap();
        let mut v = MacVector::zeros(g, VectorBc::NoSlip);
        v.components_mut().0[[0, 2]] = 1.0;
        let slip = v.clone().with_bc(VectorBc::NoPenetration);
        assert!(vector_grad_norm_sq(&v) > vector_grad_norm_sq(&slip));
        assert!(vector_grad_norm_sq(&slip) > 0.0);
    }
}
