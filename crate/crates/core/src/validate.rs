//! Quick invariant suite on small grids, one check per property.

use std::f64::consts::PI;
use std::time::Instant;

use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chb::{energy_increases, run, SolverConfig};
use crate::config::{parse_config, to_text, RunConfig};
use crate::equilibrium::{fit_decay, solve_stationary};
use crate::error::Result;
use crate::experiments::{continuous_dependence, perturbation, viscosity_sweep};
use crate::flow::{energy_identity, FlowSolver, PhysParams};
use crate::grid::{
    divergence, dot_cells, dot_faces, gradient_to_faces, l2_norm, l2_norm_faces, laplacian, GridSpec, MacVector,
    ScalarBc, ScalarField, VectorBc,
};
use crate::initial::{make_initial, InitSpec};
use crate::manufactured::{space_order, time_order, Manufactured};
use crate::output::diagnostics_csv;
use crate::potential::Potential;
use crate::spectral::{scalar_basis, HelmholtzOperator};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Check {
    pub fn line(&self) -> String {
        format!(
            "{} {:<44} {} ({:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

type Outcome = Result<(bool, String)>;

fn random_scalar(g: GridSpec, bc: ScalarBc, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScalarField::from_fn(g, bc, |_, _| rng.random_range(-1.0..1.0))
}

fn random_faces(g: GridSpec, bc: VectorBc, seed: u64) -> MacVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ux = Array2::from_shape_fn(g.ux_shape(), |_| rng.random_range(-1.0..1.0));
    let uy = Array2::from_shape_fn(g.uy_shape(), |_| rng.random_range(-1.0..1.0));
    let mut v = MacVector::from_raw(g, bc, ux, uy);
    v.enforce_boundary();
    v
}

fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn boundary_normal_zero(u: &MacVector) -> bool {
    let (nx, ny) = (u.grid().nx(), u.grid().ny());
    (0..ny).all(|j| u.ux()[[j, 0]] == 0.0 && u.ux()[[j, nx]] == 0.0)
        && (0..nx).all(|i| u.uy()[[0, i]] == 0.0 && u.uy()[[ny, i]] == 0.0)
}

// ---- grid ----

fn summation_by_parts() -> Outcome {
    let g = GridSpec::new(12, 10, 1.0, 0.8)?;
    let f = random_scalar(g, ScalarBc::Neumann, 1);
    let h = random_scalar(g, ScalarBc::Neumann, 2);
    let lhs = -dot_cells(&laplacian(&f), &h);
    let (gf, gh) = (gradient_to_faces(&f), gradient_to_faces(&h));
    let rhs = dot_faces(&gf, &gh);
    let rel = (lhs - rhs).abs() / (l2_norm_faces(&gf) * l2_norm_faces(&gh));
    Ok((rel <= 1e-12, format!("relative gap {rel:.2e}")))
}

fn div_grad_is_laplacian() -> Outcome {
    let mut worst: f64 = 0.0;
    for bc in [ScalarBc::Neumann, ScalarBc::Periodic] {
        let g = GridSpec::new(12, 10, 1.0, 0.8)?;
        let f = random_scalar(g, bc, 3);
        let lap = laplacian(&f);
        let d = divergence(&gradient_to_faces(&f));
        worst = worst.max(d.sub(&lap).max_abs() / lap.max_abs());
    }
    Ok((worst <= 1e-14, format!("relative gap {worst:.2e}")))
}

fn mean_annihilation() -> Outcome {
    let g = GridSpec::new(12, 10, 1.0, 0.8)?;
    let mut worst: f64 = 0.0;
    for bc in [ScalarBc::Neumann, ScalarBc::Periodic] {
        let lap = laplacian(&random_scalar(g, bc, 4));
        worst = worst.max(lap.mean().abs() / lap.max_abs());
    }
    for bc in [VectorBc::NoSlip, VectorBc::NoPenetration, VectorBc::Periodic] {
        let d = divergence(&random_faces(g, bc, 5));
        worst = worst.max(d.mean().abs() / d.max_abs());
    }
    Ok((worst <= 1e-12, format!("max |mean|/scale {worst:.2e}")))
}

fn laplacian_second_order() -> Outcome {
    let mut errors = Vec::new();
    for n in [16, 32, 64, 128] {
        let g = GridSpec::unit_square(n)?;
        let f = ScalarField::from_fn(g, ScalarBc::Neumann, |x, y| (PI * x).cos() * (2.0 * PI * y).cos());
        let exact = f.scaled(-5.0 * PI * PI);
        errors.push(l2_norm(&laplacian(&f).sub(&exact)));
    }
    let o = orders(&errors);
    Ok((min_of(&o) >= 1.9, format!("orders {o:.3?}")))
}

// ---- spectral ----

fn helmholtz_round_trip() -> Outcome {
    let mut worst: f64 = 0.0;
    for bc in [ScalarBc::Neumann, ScalarBc::Periodic] {
        let g = GridSpec::new(12, 10, 1.0, 0.9)?;
        for (a, b, c) in [(1.0, -1.0, 1.0), (3.0, -0.2, 1e-3), (1.0, 0.0, 0.0)] {
            let op = HelmholtzOperator::new(g, bc, a, b, c)?;
            let r = random_scalar(g, bc, 6);
            let back = op.apply(&op.solve(&r, None)?);
            worst = worst.max(back.sub(&r).max_abs() / r.max_abs());
        }
    }
    Ok((worst <= 1e-11, format!("relative gap {worst:.2e}")))
}

fn helmholtz_mean_preservation() -> Outcome {
    let mut worst: f64 = 0.0;
    for bc in [ScalarBc::Neumann, ScalarBc::Periodic] {
        let g = GridSpec::new(8, 8, 1.0, 1.0)?;
        for (b, c) in [(2.0, -0.5), (-1.0, 0.0), (0.3, 4.0)] {
            let op = HelmholtzOperator::new(g, bc, 0.0, b, c)?;
            let r = random_scalar(g, bc, 7).mean_free();
            for m in [0.7, -0.25, 0.0] {
                worst = worst.max((op.solve(&r, Some(m))?.mean() - m).abs());
            }
        }
    }
    Ok((worst <= f64::EPSILON, format!("max |mean − m| {worst:.2e}")))
}

fn transform_orthogonality() -> Outcome {
    let mut worst: f64 = 0.0;
    for bc in [ScalarBc::Neumann, ScalarBc::Periodic] {
        let g = GridSpec::new(12, 10, 1.0, 0.9)?;
        let basis = scalar_basis(&g, bc);
        let f = random_scalar(g, bc, 8);
        let mut a = f.values().clone();
        basis.forward(&mut a);
        basis.inverse(&mut a);
        let err = (&a - f.values()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(err / f.max_abs());
    }
    Ok((worst <= 1e-13, format!("relative gap {worst:.2e}")))
}

// ---- potential ----

fn potentials() -> Result<Vec<Potential>> {
    Ok(vec![Potential::Quartic, Potential::polynomial(vec![0.25, 0.0, -0.5, 0.1, 0.25])?])
}

fn f_is_derivative_of_big_f() -> Outcome {
    // |F'''| ≤ 51 on [−2.1, 2.1] for both potentials, so C = 10 bounds the h² term
    let c = 10.0;
    let mut worst: f64 = 0.0;
    for pot in potentials()? {
        for h in [1e-4, 1e-5] {
            for k in 0..1000 {
                let s = -2.0 + 4.0 * k as f64 / 999.0;
                let fd = (pot.big_f(s + h) - pot.big_f(s - h)) / (2.0 * h);
                // truncation C h² plus cancellation round-off in the difference quotient
                let roundoff = 4.0 * f64::EPSILON * pot.big_f(s).abs().max(1.0) / h;
                worst = worst.max((pot.f(s) - fd).abs() / (c * h * h + roundoff));
            }
        }
    }
    Ok((worst <= 1.0, format!("max error / (C h² + round-off) {worst:.3}")))
}

fn cubic_growth() -> Outcome {
    let mut worst: f64 = 0.0;
    for pot in potentials()? {
        for k in 0..=2000 {
            let s = -10.0 + 0.01 * k as f64;
            worst = worst.max(pot.f(s).abs() / (1.0 + s.abs().powi(3)));
        }
    }
    Ok((worst.is_finite() && worst <= 100.0, format!("sup |f|/(1+|s|³) {worst:.3}")))
}

fn curvature_bounded_below() -> Outcome {
    let mut lo = f64::INFINITY;
    for pot in potentials()? {
        for k in 0..=4000 {
            lo = lo.min(pot.df(-2.0 + 0.001 * k as f64));
        }
    }
    Ok((lo.is_finite(), format!("inf f′ on [−2, 2] = {lo:.3}")))
}

// ---- flow ----

fn flow_cases() -> Result<Vec<(FlowSolver, MacVector, &'static str)>> {
    let g = GridSpec::new(16, 12, 1.0, 0.75)?;
    Ok(vec![
        (
            FlowSolver::new(g, ScalarBc::Neumann, 1.0, 1.0, 1e-10, 10_000)?,
            random_faces(g, VectorBc::NoSlip, 9),
            "brinkman",
        ),
        (
            FlowSolver::new(g, ScalarBc::Neumann, 1e-3, 1.0, 1e-10, 10_000)?,
            random_faces(g, VectorBc::NoSlip, 10),
            "brinkman ν=1e-3",
        ),
        (
            FlowSolver::new(g, ScalarBc::Neumann, 0.0, 1.0, 1e-10, 10_000)?,
            random_faces(g, VectorBc::NoPenetration, 11),
            "darcy",
        ),
        (
            FlowSolver::new(g, ScalarBc::Periodic, 0.5, 2.0, 1e-10, 10_000)?,
            random_faces(g, VectorBc::Periodic, 12),
            "periodic",
        ),
    ])
}

fn velocity_energy_balance() -> Outcome {
    let mut worst: f64 = 0.0;
    for (solver, force, _) in flow_cases()? {
        let sol = solver.solve(&force, None)?;
        let (lhs, rhs) = energy_identity(&sol.u, &force, solver.nu(), solver.eta());
        worst = worst.max((lhs - rhs).abs() / (l2_norm_faces(&force) * l2_norm_faces(&sol.u)));
    }
    Ok((worst <= 1e-8, format!("max relative gap {worst:.2e}")))
}

fn velocity_divergence_free() -> Outcome {
    let mut worst: f64 = 0.0;
    for (solver, force, _) in flow_cases()? {
        let sol = solver.solve(&force, None)?;
        worst = worst.max(l2_norm(&divergence(&sol.u)));
    }
    Ok((worst <= 1e-10, format!("max ‖div u‖ {worst:.2e}")))
}

fn no_penetration_exact() -> Outcome {
    let mut ok = true;
    for (solver, force, name) in flow_cases()? {
        if name == "periodic" {
            continue;
        }
        ok &= boundary_normal_zero(&solver.solve(&force, None)?.u);
    }
    Ok((ok, "boundary normal faces bitwise 0".into()))
}

fn darcy_is_brinkman_limit() -> Outcome {
    let g = GridSpec::new(16, 16, 1.0, 1.0)?;
    let force = random_faces(g, VectorBc::NoPenetration, 13);
    let darcy = FlowSolver::new(g, ScalarBc::Neumann, 0.0, 1.0, 1e-12, 10_000)?.solve(&force, None)?;
    let mut gaps = Vec::new();
    for k in 1..=6 {
        let nu = 10f64.powi(-k);
        let b = FlowSolver::new(g, ScalarBc::Neumann, nu, 1.0, 1e-12, 10_000)?.solve(&force, None)?;
        gaps.push(l2_norm_faces(&b.u.with_bc(VectorBc::NoPenetration).sub(&darcy.u)));
    }
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);

    // periodic shear mode: the gap is F·νλ/(η(η+νλ)) exactly
    let n = 16;
    let g = GridSpec::unit_square(n)?;
    let h = g.hy();
    let ux = Array2::from_shape_fn(g.ux_shape(), |(j, _)| (2.0 * PI * (j as f64 + 0.5) * h).sin());
    let force = MacVector::from_components(g, VectorBc::Periodic, ux, Array2::zeros(g.uy_shape()))?;
    let lam = 2.0 / (h * h) * (1.0 - (2.0 * PI / n as f64).cos());
    let eta = 1.0;
    let darcy = FlowSolver::new(g, ScalarBc::Periodic, 0.0, eta, 1e-12, 10_000)?.solve(&force, None)?;
    let mut rate_err: f64 = 0.0;
    for k in 1..=6 {
        let nu = 10f64.powi(-k);
        let b = FlowSolver::new(g, ScalarBc::Periodic, nu, eta, 1e-12, 10_000)?.solve(&force, None)?;
        let gap = l2_norm_faces(&b.u.sub(&darcy.u));
        let exact = l2_norm_faces(&force) * nu * lam / (eta * (eta + nu * lam));
        rate_err = rate_err.max((gap - exact).abs() / exact);
    }
    Ok((
        monotone && rate_err <= 1e-6,
        format!("gaps {}, periodic rate error {rate_err:.1e}", sci(&gaps)),
    ))
}

// ---- chb ----

fn spinodal_run() -> Result<(crate::chb::RunOutput, f64)> {
    let g = GridSpec::unit_square(32)?;
    let params = PhysParams {
        eps: 0.1,
        ..Default::default()
    };
    let phi0 = make_initial(&InitSpec::spinodal(0.1, 0.01, 42), &g, ScalarBc::Neumann, params.eps)?;
    let cfg = SolverConfig {
        dt: 1e-3,
        t_end: 0.2,
        ..Default::default()
    };
    let m0 = phi0.mean();
    Ok((run(&phi0, &params, &Potential::Quartic, &cfg)?.into_result()?, m0))
}

fn chb_run_invariants(out: &crate::chb::RunOutput, m0: f64) -> Vec<(&'static str, bool, String)> {
    let drift = out.stats.means.iter().fold(0.0f64, |d, m| d.max((m - m0).abs()));
    let inc = energy_increases(&out.stats.energies);
    let cfl_flagged = (out.stats.cfl_violations > 0) == (out.stats.max_cfl > 0.5);
    let transient = out
        .records
        .iter()
        .filter(|r| r.t <= 0.05)
        .fold(0.0f64, |m, r| m.max(r.phi_h1));
    let later = out
        .records
        .iter()
        .filter(|r| r.t > 0.05)
        .fold(0.0f64, |m, r| m.max(r.phi_h1));
    vec![
        (
            "chb: mass conserved at every step",
            drift <= 1e-12 * (1.0 + m0.abs()),
            format!("max drift {drift:.2e} over {} steps", out.stats.steps),
        ),
        (
            "chb: energy non-increasing",
            inc == 0,
            format!("{inc} increases beyond round-off"),
        ),
        (
            "chb: convection bound enforced or flagged",
            cfl_flagged,
            format!(
                "max τ|u|/h {:.2e}, {} flagged steps",
                out.stats.max_cfl, out.stats.cfl_violations
            ),
        ),
        (
            "chb: H¹ norm bounded",
            later <= 2.0 * transient,
            format!("sup after transient {later:.3}, transient max {transient:.3}"),
        ),
    ]
}

fn constant_fixed_point() -> Outcome {
    let g = GridSpec::new(16, 12, 1.0, 0.75)?;
    let params = PhysParams {
        eps: 0.1,
        ..Default::default()
    };
    let phi0 = ScalarField::constant(g, ScalarBc::Neumann, 0.3);
    let cfg = SolverConfig {
        dt: 1e-2,
        t_end: 0.1,
        ..Default::default()
    };
    let out = run(&phi0, &params, &Potential::Quartic, &cfg)?.into_result()?;
    let dphi = out.final_state.phi.sub(&phi0).max_abs();
    let u = out.final_state.u.max_abs();
    Ok((dphi == 0.0 && u == 0.0, format!("max |Δφ| {dphi:.1e}, max |u| {u:.1e}")))
}

fn manufactured_orders() -> Outcome {
    let params = PhysParams {
        eps: 0.3,
        ..Default::default()
    };
    let ms = Manufactured::new(params, Potential::Quartic, 1.0, 1.0);
    let space = space_order(&ms, &[16, 32, 64, 128], 0.01, 0.1)?;
    let time = time_order(&ms, 32, 0.02, 4, 0.2)?;
    Ok((
        space.min_order() >= 1.9 && time.min_order() >= 0.9,
        format!("space {:.3?}, time {:.3?}", space.orders, time.orders),
    ))
}

// ---- equilibrium ----

fn stationary_solve() -> Result<Vec<(&'static str, bool, String)>> {
    let g = GridSpec::unit_square(16)?;
    let z0 = ScalarField::from_fn(g, ScalarBc::Neumann, |x, y| 0.1 + 0.5 * (PI * x).cos() + 0.1 * (PI * y).cos());
    let m0 = z0.mean();
    let st = solve_stationary(&z0, &Potential::Quartic, 0.1, 1e-9)?;
    let drift = (st.mean - m0).abs().max((st.z.mean() - m0).abs());
    let inc = energy_increases(&st.energies);
    Ok(vec![
        (
            "equilibrium: stationary solve keeps the mean",
            drift <= 1e-12,
            format!("drift {drift:.2e} over {} iterations", st.iterations),
        ),
        (
            "equilibrium: stationary solve energy decreasing",
            inc == 0,
            format!("{inc} increases, residual {:.1e}", st.residual),
        ),
    ])
}

fn power_law_fit() -> Outcome {
    let series: Vec<(f64, f64)> = (0..60).map(|k| (k as f64, 2.5 * (1.0 + k as f64).powf(-1.5))).collect();
    let fit = fit_decay(&series, (0.0, 100.0))?;
    let rel = (fit.exponent - 1.5).abs() / 1.5;
    Ok((rel <= 1e-6, format!("exponent {:.9}, relative error {rel:.1e}", fit.exponent)))
}

// ---- experiments ----

fn small_setup() -> Result<(ScalarField, PhysParams, SolverConfig)> {
    let g = GridSpec::unit_square(16)?;
    let params = PhysParams {
        eps: 0.15,
        ..Default::default()
    };
    let phi0 = make_initial(&InitSpec::smooth(0.05, 0.4, 3, 3), &g, ScalarBc::Neumann, params.eps)?;
    let cfg = SolverConfig {
        dt: 1e-3,
        t_end: 0.05,
        ..Default::default()
    };
    Ok((phi0, params, cfg))
}

fn deterministic_csv() -> Outcome {
    let (phi0, params, cfg) = small_setup()?;
    let a = diagnostics_csv(&run(&phi0, &params, &Potential::Quartic, &cfg)?.into_result()?.records)?;
    let b = diagnostics_csv(&run(&phi0, &params, &Potential::Quartic, &cfg)?.into_result()?.records)?;
    Ok((a == b, format!("{} bytes", a.len())))
}

fn sweep_reference() -> Outcome {
    let (phi0, params, cfg) = small_setup()?;
    let s = viscosity_sweep(&phi0, &[1e-1, 1e-2], &params, &Potential::Quartic, &cfg)?;
    Ok((
        s.reference_mass_drift <= 1e-12 && s.reference_energy_monotone,
        format!(
            "mass drift {:.1e}, energy monotone {}",
            s.reference_mass_drift, s.reference_energy_monotone
        ),
    ))
}

fn swapped_dependence() -> Outcome {
    let (phi0, params, cfg) = small_setup()?;
    let phi1 = phi0.add(&perturbation(phi0.grid(), phi0.bc(), 1e-3, 7));
    let pot = Potential::Quartic;
    let a = continuous_dependence(&phi0, &phi1, &params, &pot, &cfg)?;
    let b = continuous_dependence(&phi1, &phi0, &params, &pot, &cfg)?;
    Ok((a.gap == b.gap, format!("{} samples, max gap {:.2e}", a.gap.len(), a.max_gap())))
}

// ---- cli_io ----

fn seeded_initial_data() -> Outcome {
    let g = GridSpec::unit_square(16)?;
    let s = InitSpec::spinodal(0.0, 0.05, 42);
    let a = make_initial(&s, &g, ScalarBc::Neumann, 0.1)?;
    let b = make_initial(&s, &g, ScalarBc::Neumann, 0.1)?;
    Ok((a == b && a.mean().abs() <= 1e-16, format!("mean {:.1e}", a.mean())))
}

fn config_round_trip() -> Outcome {
    let mut c = RunConfig::default();
    c.phys.nu = 1e-3;
    c.solver.stab = Some(2.5);
    c.sweep.nu_list = vec![0.3, 0.03];
    c.equilibrium.window = Some((0.5, 20.0));
    let ok = [RunConfig::default(), c]
        .iter()
        .all(|c| parse_config(&to_text(c)).as_ref() == Ok(c));
    Ok((ok, "parse(to_text(c)) == c".into()))
}

fn timed(name: &'static str, f: impl FnOnce() -> Outcome) -> Check {
    let t0 = Instant::now();
    let (passed, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Check {
        name,
        passed,
        detail,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

fn timed_many(name: &'static str, f: impl FnOnce() -> Result<Vec<(&'static str, bool, String)>>) -> Vec<Check> {
    let t0 = Instant::now();
    match f() {
        Ok(v) => {
            let seconds = t0.elapsed().as_secs_f64() / v.len().max(1) as f64;
            v.into_iter()
                .map(|(name, passed, detail)| Check {
                    name,
                    passed,
                    detail,
                    seconds,
                })
                .collect()
        }
        Err(e) => vec![Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
            seconds: t0.elapsed().as_secs_f64(),
        }],
    }
}

/// Runs every check; the whole suite takes a few seconds.
pub fn run_validation() -> Vec<Check> {
    let mut out = vec![
        timed("grid: summation by parts", summation_by_parts),
        timed("grid: divergence of gradient is laplacian", div_grad_is_laplacian),
        timed("grid: mean annihilation", mean_annihilation),
        timed("grid: laplacian second order", laplacian_second_order),
        timed("spectral: apply(solve(r)) = r", helmholtz_round_trip),
        timed("spectral: mean constraint preserved", helmholtz_mean_preservation),
        timed("spectral: transform orthogonality", transform_orthogonality),
        timed("potential: f is the derivative of F", f_is_derivative_of_big_f),
        timed("potential: cubic growth", cubic_growth),
        timed("potential: f′ bounded below", curvature_bounded_below),
        timed("flow: velocity energy balance", velocity_energy_balance),
        timed("flow: divergence free", velocity_divergence_free),
        timed("flow: no penetration exact", no_penetration_exact),
        timed("flow: darcy is the brinkman limit", darcy_is_brinkman_limit),
    ];
    out.extend(timed_many("chb: spinodal run", || {
        let (run, m0) = spinodal_run()?;
        Ok(chb_run_invariants(&run, m0))
    }));
    out.push(timed("chb: constant states are fixed points", constant_fixed_point));
    out.push(timed("chb: manufactured convergence orders", manufactured_orders));
    out.extend(timed_many("equilibrium: stationary solve", stationary_solve));
    out.push(timed("equilibrium: power-law fit exact", power_law_fit));
    out.push(timed("experiments: deterministic diagnostics", deterministic_csv));
    out.push(timed("experiments: sweep reference consistent", sweep_reference));
    out.push(timed("experiments: swapped dependence identical", swapped_dependence));
    out.push(timed("cli: seeded initial data reproducible", seeded_initial_data));
    out.push(timed("cli: config round trip", config_round_trip));
    out
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}
