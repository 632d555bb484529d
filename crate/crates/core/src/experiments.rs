//! Paired and swept runs: continuous dependence on the initial datum, the
//! vanishing-viscosity limit against the Darcy flow, and an absorbing-ball
//! probe.

use std::path::Path;
use std::time::Instant;

use log::info;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chb::{SimState, SolverConfig, Stepper};
use crate::error::{ChbError, Result};
use crate::flow::PhysParams;
use crate::grid::{h1_norm, h1_norm_faces, l2_norm_faces, GridSpec, ScalarField, VectorBc};
use crate::potential::Potential;

/// Relative tolerance on equal initial means.
pub const MEAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct DependenceResult {
    /// `‖φ₁(0) − φ₂(0)‖₁²`
    pub delta0: f64,
    /// Times of the gap samples (every step, starting at 0).
    pub times: Vec<f64>,
    /// `‖φ₁(t) − φ₂(t)‖₁²`
    pub gap: Vec<f64>,
    /// `max gap / delta0` (0 when the data coincide).
    pub amplification: f64,
    /// `Σ τ ‖u₁ − u₂‖²` in H¹ (Brinkman) or L² (Darcy).
    pub velocity_gap_integral: f64,
    /// Smallest `K ≥ 0` with `gap(t) ≤ delta0 e^{Kt}` on the samples.
    pub k_fit: f64,
}

impl DependenceResult {
    pub fn max_gap(&self) -> f64 {
        self.gap.iter().copied().fold(0.0, f64::max)
    }

    /// `gap(t) ≤ delta0·e^{K t}` (with round-off slack) at every sample.
    pub fn within_bound(&self) -> bool {
        self.k_fit.is_finite()
            && self
                .times
                .iter()
                .zip(&self.gap)
                .all(|(&t, &g)| g <= self.delta0 * (self.k_fit * t).exp() * (1.0 + 1e-12) + 1e-300)
    }
}

fn check_means(a: &ScalarField, b: &ScalarField) -> Result<()> {
    let (ma, mb) = (a.mean(), b.mean());
    if (ma - mb).abs() > MEAN_TOL * (1.0 + ma.abs().max(mb.abs())) {
        return Err(ChbError::MeanMismatch(ma, mb));
    }
    Ok(())
}

fn velocity_gap(a: &crate::grid::MacVector, b: &crate::grid::MacVector) -> f64 {
    let d = a.sub(b);
    if d.bc() == VectorBc::NoPenetration {
        l2_norm_faces(&d).powi(2)
    } else {
        h1_norm_faces(&d).powi(2)
    }
}

/// Runs two trajectories in lockstep and records their H¹ gap.
pub fn continuous_dependence(
    phi1: &ScalarField,
    phi2: &ScalarField,
    params: &PhysParams,
    pot: &Potential,
    cfg: &SolverConfig,
) -> Result<DependenceResult> {
    phi1.grid().ensure_same(phi2.grid(), "continuous dependence")?;
    check_means(phi1, phi2)?;
    let grid = *phi1.grid();
    let mut s1 = Stepper::new(grid, *params, pot.clone(), cfg.clone())?;
    let mut s2 = s1.clone();
    let mut a = SimState::initial(phi1.clone());
    let mut b = SimState::initial(phi2.clone());
    let delta0 = h1_norm(&phi1.sub(phi2)).powi(2);
    let mut times = vec![0.0];
    let mut gap = vec![delta0];
    let mut velocity_gap_integral = 0.0;
    for _ in 0..cfg.n_steps() {
        let ra = s1.advance(&a)?;
        let rb = s2.advance(&b)?;
        velocity_gap_integral += cfg.dt * velocity_gap(&ra.flow.u, &rb.flow.u);
        a = ra.next;
        b = rb.next;
        times.push(a.t);
        gap.push(h1_norm(&a.phi.sub(&b.phi)).powi(2));
    }
    let (amplification, k_fit) = if delta0 > 0.0 {
        let amp = gap.iter().fold(0.0_f64, |m, &g| m.max(g / delta0));
        let k = times
            .iter()
            .zip(&gap)
            .filter(|(t, _)| **t > 0.0)
            .map(|(t, g)| (g / delta0).ln() / t)
            .fold(0.0_f64, f64::max);
        (amp, k)
    } else {
        (0.0, 0.0)
    };
    Ok(DependenceResult {
        delta0,
        times,
        gap,
        amplification,
        velocity_gap_integral,
        k_fit,
    })
}

/// A mean-zero perturbation of H¹ norm `delta` built from seeded uniform
/// noise (smoothed once so its gradient stays moderate).
pub fn perturbation(grid: &GridSpec, bc: crate::grid::ScalarBc, delta: f64, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = ScalarField::from_fn(*grid, bc, |_, _| rng.random_range(-1.0..1.0));
    let smooth = noise.axpy(0.125 * grid.hx().min(grid.hy()).powi(2), &crate::grid::laplacian(&noise));
    let g = smooth.mean_free();
    let n = h1_norm(&g);
    g.scaled(delta / n)
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub nu_list: Vec<f64>,
    /// `sup_t ‖φ_ν − φ₀‖₁²` against the Darcy run.
    pub diff_sq: Vec<f64>,
    /// `Σ τ ‖u_ν − u₀‖²`
    pub u_diff_int: Vec<f64>,
    pub runtime_s: Vec<f64>,
    pub reference_runtime_s: f64,
    /// Least-squares slope of `ln diff_sq` against `ln ν` above the floor.
    pub slope: f64,
    /// `max diff_sq / ν^½` above the floor.
    pub c_t: f64,
    /// First index at the numerical noise floor, if any.
    pub floor_from: Option<usize>,
    /// Reference run mass drift and energy monotonicity.
    pub reference_mass_drift: f64,
    pub reference_energy_monotone: bool,
}

impl SweepResult {
    /// Indices above the floor.
    pub fn resolved(&self) -> std::ops::Range<usize> {
        0..self.floor_from.unwrap_or(self.nu_list.len())
    }

    /// `diff_sq` strictly decreasing as ν decreases over the resolved points.
    pub fn monotone(&self) -> bool {
        self.diff_sq[self.resolved()].windows(2).all(|w| w[1] < w[0])
    }

    /// `diff_sq ≤ C ν^½` at every resolved point.
    pub fn bound_holds(&self) -> bool {
        self.c_t.is_finite()
            && self
                .resolved()
                .all(|k| self.diff_sq[k] <= self.c_t * self.nu_list[k].sqrt() * (1.0 + 1e-12))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["nu", "sup_phi_diff_h1_sq", "int_u_diff_sq", "runtime_s"])?;
        for k in 0..self.nu_list.len() {
            w.write_record([
                format!("{:.16e}", self.nu_list[k]),
                format!("{:.16e}", self.diff_sq[k]),
                format!("{:.16e}", self.u_diff_int[k]),
                format!("{:.16e}", self.runtime_s[k]),
            ])?;
        }
        w.flush().map_err(|e| ChbError::io(path, e))?;
        Ok(())
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("slope {:.6}\n", self.slope));
        s.push_str(&format!("C_T {:.6e}\n", self.c_t));
        s.push_str(&format!("monotone {}\n", self.monotone()));
        s.push_str(&format!("bound_holds {}\n", self.bound_holds()));
        match self.floor_from {
            Some(k) => s.push_str(&format!("floor reached at nu = {:e}\n", self.nu_list[k])),
            None => s.push_str("floor not reached\n"),
        }
        s.push_str(&format!("reference_mass_drift {:.3e}\n", self.reference_mass_drift));
        s.push_str(&format!("reference_energy_monotone {}\n", self.reference_energy_monotone));
        s.push_str(&format!("reference_runtime_s {:.3}\n", self.reference_runtime_s));
        s
    }
}

/// Squared differences at or below this are round-off.
pub const SWEEP_NOISE_FLOOR: f64 = 1e-24;

/// Runs the Darcy reference (ν = 0) and every ν in `nu_list` (strictly
/// decreasing, positive) in lockstep from the same `phi0` up to `cfg.t_end`.
pub fn viscosity_sweep(
    phi0: &ScalarField,
    nu_list: &[f64],
    params: &PhysParams,
    pot: &Potential,
    cfg: &SolverConfig,
) -> Result<SweepResult> {
    if nu_list.is_empty() {
        return Err(ChbError::param("sweep.nu_list", "must not be empty"));
    }
    if nu_list.iter().any(|&nu| !(nu.is_finite() && nu > 0.0)) {
        return Err(ChbError::param("sweep.nu_list", "values must be > 0"));
    }
    if nu_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ChbError::param("sweep.nu_list", "must be strictly decreasing"));
    }
    let grid = *phi0.grid();
    let reference_params = PhysParams { nu: 0.0, ..*params };
    let mut reference = Stepper::new(grid, reference_params, pot.clone(), cfg.clone())?;
    let mut runs: Vec<(Stepper, SimState, f64)> = nu_list
        .iter()
        .map(|&nu| {
            let p = PhysParams { nu, ..*params };
            Stepper::new(grid, p, pot.clone(), cfg.clone())
                .map(|s| (s, SimState::initial(phi0.clone()), 0.0))
                .map_err(|e| ChbError::SweepRunFailed {
                    nu,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let mut ref_state = SimState::initial(phi0.clone());
    let mass0 = phi0.mean();
    let mut mass_drift = 0.0_f64;
    let mut ref_energy = crate::chb::energy(phi0, pot, params.eps);
    let mut energy_monotone = true;
    let mut reference_runtime_s = 0.0;
    let mut diff_sq = vec![0.0_f64; nu_list.len()];
    let mut u_diff_int = vec![0.0; nu_list.len()];

    for _ in 0..cfg.n_steps() {
        let t0 = Instant::now();
        let rep = reference.advance(&ref_state)?;
        reference_runtime_s += t0.elapsed().as_secs_f64();
        let u_ref = rep.flow.u;
        ref_state = rep.next;
        mass_drift = mass_drift.max((ref_state.phi.mean() - mass0).abs());
        let e = crate::chb::energy(&ref_state.phi, pot, params.eps);
        energy_monotone &= crate::chb::energy_increases(&[ref_energy, e]) == 0;
        ref_energy = e;

        let steps: Vec<Result<(f64, f64)>> = runs
            .par_iter_mut()
            .zip(nu_list.par_iter())
            .map(|((stepper, state, runtime), &nu)| {
                let t0 = Instant::now();
                let rep = stepper.advance(state).map_err(|e| ChbError::SweepRunFailed {
                    nu,
                    source: Box::new(e),
                })?;
                *runtime += t0.elapsed().as_secs_f64();
                let du = rep.flow.u.sub(&u_ref);
                *state = rep.next;
                let dphi = h1_norm(&state.phi.sub(&ref_state.phi)).powi(2);
                Ok((dphi, l2_norm_faces(&du).powi(2)))
            })
            .collect();
        for (k, r) in steps.into_iter().enumerate() {
            let (dphi, du) = r?;
            diff_sq[k] = diff_sq[k].max(dphi);
            u_diff_int[k] += cfg.dt * du;
        }
    }

    let h2 = grid.hx().min(grid.hy()).powi(2);
    let mut floor_from = None;
    for k in 0..nu_list.len() {
        let at_round_off = diff_sq[k] <= SWEEP_NOISE_FLOOR;
        // Below the resolvable boundary-layer scale and no longer improving.
        let stagnant = k > 0 && nu_list[k] < params.eta * h2 && diff_sq[k] >= 0.9 * diff_sq[k - 1];
        if at_round_off || stagnant {
            floor_from = Some(k);
            break;
        }
    }
    let resolved = floor_from.unwrap_or(nu_list.len());
    let (slope, c_t) = if resolved >= 2 {
        let x: Vec<f64> = nu_list[..resolved].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = diff_sq[..resolved].iter().map(|v| v.ln()).collect();
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let c = (0..resolved)
            .map(|k| diff_sq[k] / nu_list[k].sqrt())
            .fold(0.0_f64, f64::max);
        (sxy / sxx, c)
    } else {
        (f64::NAN, f64::NAN)
    };
    let runtime_s = runs.iter().map(|r| r.2).collect();
    info!("sweep: slope {slope:.4}, C_T {c_t:.4e}, floor {floor_from:?}");
    Ok(SweepResult {
        nu_list: nu_list.to_vec(),
        diff_sq,
        u_diff_int,
        runtime_s,
        reference_runtime_s,
        slope,
        c_t,
        floor_from,
        reference_mass_drift: mass_drift,
        reference_energy_monotone: energy_monotone,
    })
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub radii: Vec<f64>,
    pub mean: f64,
    /// `(t, ‖φ(t)‖₁)` per radius, every step.
    pub norms: Vec<Vec<(f64, f64)>>,
    /// `1.05 ×` the largest terminal norm.
    pub r_i: f64,
    /// First time after which the norm stays within `r_i` (None: never).
    pub entry_times: Vec<Option<f64>>,
    pub terminal: Vec<f64>,
    /// Norm changed by less than 1e-3 (relative) over the last quarter.
    pub settled: Vec<bool>,
}

impl ProbeReport {
    /// `(max − min)/max` of the terminal norms.
    pub fn terminal_spread(&self) -> f64 {
        let hi = self.terminal.iter().copied().fold(0.0, f64::max);
        let lo = self.terminal.iter().copied().fold(f64::INFINITY, f64::min);
        (hi - lo) / hi
    }

    pub fn all_entered(&self) -> bool {
        self.entry_times.iter().all(Option::is_some)
    }

    pub fn report(&self) -> String {
        let mut s = format!("mean {}\nR_I {:.6e}\nspread {:.3e}\n", self.mean, self.r_i, self.terminal_spread());
        for k in 0..self.radii.len() {
            s.push_str(&format!(
                "radius {} entry {} terminal {:.6e} settled {}\n",
                self.radii[k],
                self.entry_times[k].map_or("none".to_string(), |t| format!("{t:.4}")),
                self.terminal[k],
                self.settled[k]
            ));
        }
        s
    }
}

/// Fixed mean-zero profile dominated by the first x-mode.
fn probe_shape(grid: &GridSpec, bc: crate::grid::ScalarBc) -> ScalarField {
    let (lx, ly) = (grid.lx(), grid.ly());
    ScalarField::from_fn(*grid, bc, |x, y| {
        let cx = (std::f64::consts::PI * x / lx).cos();
        let cy = (std::f64::consts::PI * y / ly).cos();
        cx + 0.1 * cy + 0.05 * cx * cy
    })
    .mean_free()
}

/// `mean + s·g` with `s` chosen so the H¹ norm equals `radius`.
pub fn probe_initial(grid: &GridSpec, bc: crate::grid::ScalarBc, mean: f64, radius: f64) -> Result<ScalarField> {
    let g = probe_shape(grid, bc);
    let base = mean * mean * grid.area();
    if radius * radius < base {
        return Err(ChbError::param(
            "probe.radii",
            format!("radius {radius} is below the norm of the mean state ({:.4})", base.sqrt()),
        ));
    }
    let s = ((radius * radius - base) / h1_norm(&g).powi(2)).sqrt();
    Ok(g.scaled(s).map(|v| v + mean))
}

/// For each radius runs from [`probe_initial`] to `cfg.t_end` and records
/// when `‖φ‖₁` enters the common ball.
pub fn dissipativity_probe(
    grid: &GridSpec,
    radii: &[f64],
    mean: f64,
    params: &PhysParams,
    pot: &Potential,
    cfg: &SolverConfig,
) -> Result<ProbeReport> {
    if radii.is_empty() {
        return Err(ChbError::param("probe.radii", "must not be empty"));
    }
    let initial: Vec<ScalarField> = radii
        .iter()
        .map(|&r| probe_initial(grid, cfg.bc, mean, r))
        .collect::<Result<_>>()?;
    let norms: Vec<Vec<(f64, f64)>> = initial
        .into_par_iter()
        .map(|phi0| -> Result<Vec<(f64, f64)>> {
            let mut stepper = Stepper::new(*grid, *params, pot.clone(), cfg.clone())?;
            let mut state = SimState::initial(phi0);
            let mut series = vec![(0.0, h1_norm(&state.phi))];
            for _ in 0..cfg.n_steps() {
                state = stepper.advance(&state)?.next;
                series.push((state.t, h1_norm(&state.phi)));
            }
            Ok(series)
        })
        .collect::<Result<_>>()?;
    let terminal: Vec<f64> = norms.iter().map(|s| s.last().unwrap().1).collect();
    let r_i = 1.05 * terminal.iter().copied().fold(0.0, f64::max);
    let entry_times = norms
        .iter()
        .map(|s| {
            // last sample outside the ball; entry is the next sample
            match s.iter().rposition(|p| p.1 > r_i) {
                None => Some(0.0),
                Some(k) if k + 1 < s.len() => Some(s[k + 1].0),
                Some(_) => None,
            }
        })
        .collect();
    let settled = norms
        .iter()
        .map(|s| {
            let q = s.len() - s.len() / 4 - 1;
            let tail = &s[q..];
            let hi = tail.iter().map(|p| p.1).fold(0.0, f64::max);
            let lo = tail.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            hi - lo <= 1e-3 * hi
        })
        .collect();
    Ok(ProbeReport {
        radii: radii.to_vec(),
        mean,
        norms,
        r_i,
        entry_times,
        terminal,
        settled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ScalarBc;

    #[test]
    fn probe_initial_has_requested_radius() {
        let g = GridSpec::unit_square(16).unwrap();
        for (mean, r) in [(0.0, 1.0), (0.5, 2.0), (-0.3, 4.0)] {
            let phi = probe_initial(&g, ScalarBc::Neumann, mean, r).unwrap();
            assert!((h1_norm(&phi) - r).abs() < 1e-12 * r);
            assert!((phi.mean() - mean).abs() < 1e-14);
        }
        assert!(probe_initial(&g, ScalarBc::Neumann, 2.0, 1.0).is_err());
    }

    #[test]
    fn perturbation_is_normalized_and_mean_free() {
        let g = GridSpec::unit_square(16).unwrap();
        let p = perturbation(&g, ScalarBc::Neumann, 1e-6, 3);
        assert!((h1_norm(&p) - 1e-6).abs() < 1e-18);
        assert!(p.mean().abs() < 1e-20);
        assert_eq!(p, perturbation(&g, ScalarBc::Neumann, 1e-6, 3));
    }

    #[test]
    fn sweep_rejects_bad_lists() {
        let g = GridSpec::unit_square(8).unwrap();
        let phi = ScalarField::zeros(g, ScalarBc::Neumann);
        let p = PhysParams::default();
        let cfg = SolverConfig::default();
        for list in [vec![], vec![1e-2, 1e-1], vec![1e-1, 0.0]] {
            assert!(viscosity_sweep(&phi, &list, &p, &Potential::Quartic, &cfg).is_err());
        }
    }

    #[test]
    fn identical_data_have_zero_gap() {
        let g = GridSpec::unit_square(8).unwrap();
        let phi = ScalarField::from_fn(g, ScalarBc::Neumann, |x, y| 0.1 * (3.0 * x).cos() * (2.0 * y).sin());
        let cfg = SolverConfig {
            t_end: 0.01,
            ..Default::default()
        };
        let r = continuous_dependence(&phi, &phi, &PhysParams::default(), &Potential::Quartic, &cfg).unwrap();
        assert_eq!(r.max_gap(), 0.0);
        assert_eq!(r.velocity_gap_integral, 0.0);
        let shifted = phi.map(|v| v + 0.1);
        assert!(matches!(
            continuous_dependence(&phi, &shifted, &PhysParams::default(), &Potential::Quartic, &cfg),
            Err(ChbError::MeanMismatch(..))
        ));
    }
}
