//! Initial-condition generators.

use std::f64::consts::{PI, SQRT_2};
use std::path::PathBuf;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ChbError, Result};
use crate::grid::{GridSpec, ScalarBc, ScalarField};
use crate::snapshot::read_scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Constant,
    /// `mean + amplitude·U(−1, 1)` per cell, mean corrected.
    Spinodal,
    /// A few seeded cosine modes: smooth and compatible with the boundary conditions.
    Smooth,
    /// `tanh((width/2 − |x − center|)/(√2 ε))`
    Stripe,
    File,
}

impl InitKind {
    pub fn name(self) -> &'static str {
        match self {
            InitKind::Constant => "constant",
            InitKind::Spinodal => "spinodal",
            InitKind::Smooth => "smooth",
            InitKind::Stripe => "stripe",
            InitKind::File => "file",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "constant" => InitKind::Constant,
            "spinodal" => InitKind::Spinodal,
            "smooth" => InitKind::Smooth,
            "stripe" => InitKind::Stripe,
            "file" => InitKind::File,
            _ => return None,
        })
    }
}

/// All generator parameters; each kind reads the ones it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct InitSpec {
    pub kind: InitKind,
    pub value: f64,
    pub mean: f64,
    pub amplitude: f64,
    pub seed: u64,
    pub modes: usize,
    pub width: f64,
    pub center: f64,
    pub path: Option<PathBuf>,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            kind: InitKind::Spinodal,
            value: 0.0,
            mean: 0.0,
            amplitude: 0.01,
            seed: 42,
            modes: 3,
            width: 0.5,
            center: 0.5,
            path: None,
        }
    }
}

impl InitSpec {
    pub fn constant(value: f64) -> Self {
        InitSpec {
            kind: InitKind::Constant,
            value,
            ..Default::default()
        }
    }

    pub fn spinodal(mean: f64, amplitude: f64, seed: u64) -> Self {
        InitSpec {
            kind: InitKind::Spinodal,
            mean,
            amplitude,
            seed,
            ..Default::default()
        }
    }

    pub fn smooth(mean: f64, amplitude: f64, modes: usize, seed: u64) -> Self {
        InitSpec {
            kind: InitKind::Smooth,
            mean,
            amplitude,
            modes,
            seed,
            ..Default::default()
        }
    }

    pub fn stripe(width: f64, center: f64) -> Self {
        InitSpec {
            kind: InitKind::Stripe,
            width,
            center,
            ..Default::default()
        }
    }
}

/// Builds φ₀ on `grid`; `eps` sets the stripe interface width.
pub fn make_initial(spec: &InitSpec, grid: &GridSpec, bc: ScalarBc, eps: f64) -> Result<ScalarField> {
    let g = *grid;
    Ok(match spec.kind {
        InitKind::Constant => ScalarField::constant(g, bc, spec.value),
        InitKind::Spinodal => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let noise = ScalarField::from_fn(g, bc, |_, _| spec.amplitude * rng.random_range(-1.0..=1.0));
            noise.mean_free().map(|v| v + spec.mean)
        }
        InitKind::Smooth => {
            if spec.modes == 0 {
                return Err(ChbError::param("init.modes", "must be >= 1"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let m = spec.modes;
            let mut coeffs = Vec::with_capacity(m * m);
            for k in 0..=m {
                for l in 0..=m {
                    if k + l == 0 {
                        continue;
                    }
                    let c: f64 = rng.random_range(-1.0..=1.0);
                    coeffs.push((k, l, c / (1.0 + (k * k + l * l) as f64)));
                }
            }
            let (kx, ky) = match bc {
                ScalarBc::Neumann => (PI / g.lx(), PI / g.ly()),
                ScalarBc::Periodic => (2.0 * PI / g.lx(), 2.0 * PI / g.ly()),
            };
            let shape = ScalarField::from_fn(g, bc, |x, y| {
                coeffs
                    .iter()
                    .map(|&(k, l, c)| c * (k as f64 * kx * x).cos() * (l as f64 * ky * y).cos())
                    .sum()
            })
            .mean_free();
            let scale = shape.max_abs();
            let scale = if scale > 0.0 { spec.amplitude / scale } else { 0.0 };
            shape.map(|v| scale * v + spec.mean)
        }
        InitKind::Stripe => {
            if !(spec.width > 0.0) {
                return Err(ChbError::param("init.width", "must be > 0"));
            }
            let d = SQRT_2 * eps;
            ScalarField::from_fn(g, bc, |x, _| ((0.5 * spec.width - (x - spec.center).abs()) / d).tanh())
        }
        InitKind::File => {
            let path = spec
                .path
                .as_ref()
                .ok_or_else(|| ChbError::param("init.path", "required for init.kind = file"))?;
            let f = read_scalar(path, bc)?;
            if f.grid() != grid {
                return Err(ChbError::GridMismatch(format!(
                    "{} holds a {}x{} grid on [0,{}]x[0,{}], configured {}x{} on [0,{}]x[0,{}]",
                    path.display(),
                    f.grid().nx(),
                    f.grid().ny(),
                    f.grid().lx(),
                    f.grid().ly(),
                    g.nx(),
                    g.ny(),
                    g.lx(),
                    g.ly()
                )));
            }
            f
        }
    })
}
