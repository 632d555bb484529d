//! End-to-end examples: closed-form flow modes, one-step oracles, relaxation
//! runs and initial-data generators.

use std::f64::consts::{PI, SQRT_2};

use chb_core::chb::{
    chemical_potential, convective_divergence, energy, run, SimState, SolverConfig, SourceTerms, Stepper,
};
use chb_core::equilibrium::{solve_stationary, stationarity_residual};
use chb_core::experiments::{continuous_dependence, perturbation};
use chb_core::flow::{capillary_force, FlowSolver, PhysParams};
use chb_core::grid::{gradient_to_faces, h1_norm, l2_norm, laplacian, GridSpec, MacVector, ScalarBc, ScalarField, VectorBc};
use chb_core::initial::{make_initial, InitKind, InitSpec};
use chb_core::potential::Potential;
use chb_core::snapshot::write_scalar;
use chb_core::spectral::HelmholtzOperator;
use chb_core::ChbError;
use ndarray::Array2;

fn params(eps: f64) -> PhysParams {
    PhysParams {
        eps,
        ..Default::default()
    }
}

/// Discrete curl of a nodal stream function: exactly divergence-free.
fn curl_field(g: &GridSpec, psi: impl Fn(f64, f64) -> f64) -> MacVector {
    let (hx, hy) = (g.hx(), g.hy());
    // wrapped node indices keep the periodic copies bitwise equal
    let node = |i: usize, j: usize| psi((i % g.nx()) as f64 * hx, (j % g.ny()) as f64 * hy);
    let ux = Array2::from_shape_fn(g.ux_shape(), |(j, i)| -(node(i, j + 1) - node(i, j)) / hy);
    let uy = Array2::from_shape_fn(g.uy_shape(), |(j, i)| (node(i + 1, j) - node(i, j)) / hx);
    MacVector::from_components(*g, VectorBc::Periodic, ux, uy).unwrap()
}

fn symbol(h: f64, k: f64) -> f64 {
    2.0 / (h * h) * (1.0 - (k * h).cos())
}

#[test]
fn periodic_brinkman_fourier_mode() {
    let g = GridSpec::new(16, 16, 1.0, 1.0).unwrap();
    let (kx, ky) = (2.0 * PI, 4.0 * PI);
    let force = curl_field(&g, |x, y| (kx * x + ky * y).cos());
    let lam = symbol(g.hx(), kx) + symbol(g.hy(), ky);
    for (nu, eta) in [(1.0, 1.0), (1e-3, 2.0), (0.3, 1e-3)] {
        let sol = FlowSolver::new(g, ScalarBc::Periodic, nu, eta, 1e-13, 1000)
            .unwrap()
            .solve(&force, None)
            .unwrap();
        let expect = force.scaled(1.0 / (nu * lam + eta));
        let err = sol.u.sub(&expect).max_abs() / expect.max_abs();
        assert!(err <= 1e-10, "nu {nu} eta {eta}: {err:e}");
        assert!(sol.p.max_abs() <= 1e-10 * force.max_abs(), "pressure {}", sol.p.max_abs());
    }
    // without friction the mean periodic flow is undetermined
    assert!(FlowSolver::new(g, ScalarBc::Periodic, 0.3, 0.0, 1e-13, 1000).is_err());
}

#[test]
fn gradient_forces_give_no_flow() {
    let g = GridSpec::new(12, 10, 1.0, 0.8).unwrap();
    let q = ScalarField::from_fn(g, ScalarBc::Neumann, |x, y| (3.0 * x).sin() * (2.0 * y).cos() + x * y);
    let force = gradient_to_faces(&q).with_bc(VectorBc::NoPenetration);
    for nu in [0.0, 1.0] {
        let sol = FlowSolver::new(g, ScalarBc::Neumann, nu, 1.0, 1e-12, 1000)
            .unwrap()
            .solve(&force, None)
            .unwrap();
        assert!(sol.u.max_abs() <= 1e-11, "nu {nu}: {}", sol.u.max_abs());
        let dp = sol.p.sub(&q.mean_free()).max_abs();
        assert!(dp <= 1e-10, "nu {nu}: pressure off by {dp:e}");
    }
}

/// Reference: 100 substeps of τ/100, explicit in everything except the
/// constant-coefficient `Mε Δ²` term (forward Euler on that term would need
/// substeps ~1e-7 at N = 32).
fn micro_step(phi0: &ScalarField, p: &PhysParams, pot: &Potential, tau: f64) -> ScalarField {
    let g = *phi0.grid();
    let substeps = 100;
    let dt = tau / substeps as f64;
    let flow = FlowSolver::from_params(g, ScalarBc::Neumann, p, 1e-12, 10_000).unwrap();
    let op = HelmholtzOperator::new(g, ScalarBc::Neumann, 1.0, 0.0, dt * p.mobility * p.eps).unwrap();
    let mut phi = phi0.clone();
    for _ in 0..substeps {
        let mu = chemical_potential(&phi, pot, p.eps);
        let u = flow.solve(&capillary_force(&phi, &mu, p.gamma).unwrap(), None).unwrap().u;
        let conv = convective_divergence(&phi, &u).unwrap();
        let f = phi.map(|s| pot.f(s) / p.eps);
        let rhs = phi.axpy(dt * p.mobility, &laplacian(&f)).axpy(-dt, &conv);
        phi = op.solve(&rhs, None).unwrap();
    }
    phi
}

#[test]
fn one_step_against_micro_stepped_reference() {
    // low modes, small amplitude: the cubic term then feeds no stiff modes
    // (τ·growth rate ≪ 1), so the one-step comparison is in its asymptotic regime
    const MODES: usize = 1;
    let g = GridSpec::unit_square(32).unwrap();
    let p = params(0.3);
    let pot = Potential::Quartic;
    let phi0 = make_initial(&InitSpec::smooth(0.1, 0.05, MODES, 5), &g, ScalarBc::Neumann, p.eps).unwrap();
    let taus = [1e-3, 5e-4, 2.5e-4];
    let mut diffs = Vec::new();
    for tau in taus {
        let cfg = SolverConfig {
            dt: tau,
            flow_tol: 1e-12,
            ..Default::default()
        };
        let mut stepper = Stepper::new(g, p, pot.clone(), cfg).unwrap();
        let ours = stepper.advance(&SimState::initial(phi0.clone())).unwrap().next.phi;
        diffs.push(l2_norm(&ours.sub(&micro_step(&phi0, &p, &pot, tau))));
    }
    // ‖diff‖/τ is the consistency error; it must vanish at first order
    let rates: Vec<f64> = diffs
        .windows(2)
        .zip(taus.windows(2))
        .map(|(d, t)| ((d[0] / t[0]) / (d[1] / t[1])).log2())
        .collect();
    let raw: Vec<f64> = diffs.windows(2).map(|d| (d[0] / d[1]).log2()).collect();
    println!("diffs {diffs:?} order(diff/τ) {rates:?} order(diff) {raw:?}");
    assert!(rates.iter().all(|&r| r >= 0.9), "{rates:?}");
    assert!(raw.iter().all(|&r| r >= 0.9), "{raw:?}");
}

struct ShearForce {
    amplitude: f64,
}

impl SourceTerms for ShearForce {
    fn phi_source(&self, grid: &GridSpec, _t: f64) -> ScalarField {
        ScalarField::zeros(*grid, ScalarBc::Periodic)
    }

    fn force_source(&self, grid: &GridSpec, _t: f64) -> MacVector {
        let a = self.amplitude;
        curl_field(grid, |_, y| a * (2.0 * PI * y).cos() / (2.0 * PI))
    }
}

#[test]
fn brinkman_vs_darcy_one_step_closed_form() {
    // φ⁰ varies in x only, so its capillary force is a gradient plus a
    // constant; the shear source is the only mode the two flows treat
    // differently, by the factor η/(νλ + η).
    let g = GridSpec::unit_square(16).unwrap();
    let eps = 0.3;
    let (nu, eta, dt, stab) = (0.1, 1.0, 1e-2, 2.0);
    let phi0 = ScalarField::from_fn(g, ScalarBc::Periodic, |x, _| 0.2 + 0.3 * (2.0 * PI * x).cos());
    let src = ShearForce { amplitude: 0.7 };
    let step = |nu: f64| {
        let p = PhysParams {
            nu,
            eta,
            eps,
            ..Default::default()
        };
        let cfg = SolverConfig {
            dt,
            stab: Some(stab),
            bc: ScalarBc::Periodic,
            flow_tol: 1e-13,
            ..Default::default()
        };
        let mut s = Stepper::new(g, p, Potential::Quartic, cfg).unwrap();
        s.advance_with_sources(&SimState::initial(phi0.clone()), Some(&src))
            .unwrap()
            .next
            .phi
    };
    let (phi_b, phi_d) = (step(nu), step(0.0));

    let shear = src.force_source(&g, 0.0);
    let lam = symbol(g.hy(), 2.0 * PI);
    let du = shear.scaled(1.0 / (nu * lam + eta) - 1.0 / eta);
    let conv = convective_divergence(&phi0, &du).unwrap();
    let op = HelmholtzOperator::new(g, ScalarBc::Periodic, 1.0 / dt, -stab / eps, eps).unwrap();
    let predicted = op.solve(&conv.scaled(-1.0), Some(0.0)).unwrap();
    let got = phi_b.sub(&phi_d);
    let err = got.sub(&predicted).max_abs() / predicted.max_abs();
    assert!(predicted.max_abs() > 1e-6);
    assert!(err <= 1e-8, "relative error {err:e}");
}

#[test]
fn stripe_relaxes_to_a_one_dimensional_equilibrium() {
    let g = GridSpec::unit_square(32).unwrap();
    let p = params(0.1);
    let phi0 = make_initial(&InitSpec::stripe(0.5, 0.5), &g, ScalarBc::Neumann, p.eps).unwrap();
    let cfg = SolverConfig {
        dt: 1e-2,
        t_end: 5.0,
        cadence: 50,
        ..Default::default()
    };
    let out = run(&phi0, &p, &Potential::Quartic, &cfg).unwrap().into_result().unwrap();
    let last = out.records.last().unwrap();
    let res = stationarity_residual(&out.final_state.phi, &Potential::Quartic, p.eps);
    println!("‖u‖₁ {:e}, residual {res:e}", last.u_h1);
    assert!(last.u_h1 < 1e-6);
    assert!(res < 1e-6);
    // still a stripe: profile independent of y
    let v = out.final_state.phi.values();
    let spread = (0..32).map(|i| (0..32).map(|j| (v[[j, i]] - v[[0, i]]).abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
    assert!(spread < 1e-10);
}

#[test]
fn zero_state_keeps_constant_energy() {
    let g = GridSpec::unit_square(16).unwrap();
    let p = params(0.5);
    let phi0 = ScalarField::zeros(g, ScalarBc::Neumann);
    let cfg = SolverConfig {
        dt: 0.05,
        t_end: 1.0,
        ..Default::default()
    };
    let out = run(&phi0, &p, &Potential::Quartic, &cfg).unwrap().into_result().unwrap();
    let e0 = g.area() * Potential::Quartic.big_f(0.0) / p.eps;
    assert_eq!(energy(&phi0, &Potential::Quartic, p.eps), e0);
    assert!(out.stats.energies.iter().all(|&e| (e - e0).abs() <= 1e-14 * e0));
    assert_eq!(out.final_state.phi.max_abs(), 0.0);
}

#[test]
fn stationary_solve_leaves_the_unstable_state() {
    let g = GridSpec::unit_square(32).unwrap();
    let eps = 0.1;
    let tol = 1e-9;
    let z0 = ScalarField::from_fn(g, ScalarBc::Neumann, |x, y| 0.01 * (PI * x).cos() * (1.0 + 0.3 * (PI * y).cos()));
    let m0 = z0.mean();
    let st = solve_stationary(&z0, &Potential::Quartic, eps, tol).unwrap();
    assert!(st.residual <= tol);
    assert!(st.z.max_abs() > 0.5, "stayed near 0: {}", st.z.max_abs());
    let drift = (st.z.mean() - m0).abs();
    // summation round-off over 1024 cells of size O(1)
    assert!(drift <= 1e-14, "mean drift {drift:e}");
    // independent evaluation of the residual
    let mu = laplacian(&st.z).scaled(-eps).add(&st.z.map(|s| Potential::Quartic.f(s) / eps));
    let osc = mu.mean_free();
    assert!(l2_norm(&osc) <= tol);
    assert!((mu.mean() - st.lagrange_const).abs() <= 1e-9);
}

#[test]
fn swapped_arguments_give_identical_gaps() {
    let g = GridSpec::unit_square(16).unwrap();
    let p = params(0.15);
    let a = make_initial(&InitSpec::spinodal(0.0, 0.05, 1), &g, ScalarBc::Neumann, p.eps).unwrap();
    let b = a.add(&perturbation(&g, ScalarBc::Neumann, 1e-4, 3));
    let cfg = SolverConfig {
        dt: 1e-3,
        t_end: 0.05,
        ..Default::default()
    };
    let ab = continuous_dependence(&a, &b, &p, &Potential::Quartic, &cfg).unwrap();
    let ba = continuous_dependence(&b, &a, &p, &Potential::Quartic, &cfg).unwrap();
    assert_eq!(ab.gap, ba.gap);
    assert_eq!(ab.velocity_gap_integral, ba.velocity_gap_integral);
    let same = continuous_dependence(&a, &a, &p, &Potential::Quartic, &cfg).unwrap();
    assert!(same.max_gap() <= 1e-12);
}

#[test]
fn mismatched_means_are_rejected() {
    let g = GridSpec::unit_square(8).unwrap();
    let a = ScalarField::constant(g, ScalarBc::Neumann, 0.1);
    let b = ScalarField::constant(g, ScalarBc::Neumann, 0.2);
    let r = continuous_dependence(&a, &b, &params(1.0), &Potential::Quartic, &SolverConfig::default());
    assert!(matches!(r, Err(ChbError::MeanMismatch(..))));
}

fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - 2f64.ln()
}

#[test]
fn stripe_mean_matches_quadrature_oracle() {
    let eps = 0.1;
    let (w, c) = (0.5, 0.4);
    let g = GridSpec::unit_square(64).unwrap();
    let f = make_initial(&InitSpec::stripe(w, c), &g, ScalarBc::Neumann, eps).unwrap();
    assert!(f.min() >= -1.0 && f.max() <= 1.0);
    // ∫₀^S tanh((a − s)/d) ds = d (ln cosh(a/d) − ln cosh((a − S)/d))
    let (a, d) = (0.5 * w, SQRT_2 * eps);
    let side = |s: f64| d * (ln_cosh(a / d) - ln_cosh((a - s) / d));
    let exact = side(c) + side(1.0 - c);
    assert!((f.mean() - exact).abs() <= 1e-3, "{} vs {exact}", f.mean());
}

#[test]
fn file_initial_data_checks_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("phi.chbf");
    let g8 = GridSpec::unit_square(8).unwrap();
    let f = ScalarField::from_fn(g8, ScalarBc::Neumann, |x, y| x - y);
    write_scalar(&path, &f).unwrap();
    let spec = InitSpec {
        kind: InitKind::File,
        path: Some(path),
        ..Default::default()
    };
    assert_eq!(make_initial(&spec, &g8, ScalarBc::Neumann, 0.1).unwrap(), f);
    let g16 = GridSpec::unit_square(16).unwrap();
    assert!(matches!(
        make_initial(&spec, &g16, ScalarBc::Neumann, 0.1),
        Err(ChbError::GridMismatch(_))
    ));
}

#[test]
fn identical_configs_give_identical_diagnostics() {
    let g = GridSpec::unit_square(16).unwrap();
    let p = params(0.1);
    let phi0 = make_initial(&InitSpec::spinodal(0.0, 0.01, 42), &g, ScalarBc::Neumann, p.eps).unwrap();
    let cfg = SolverConfig {
        dt: 1e-3,
        t_end: 0.05,
        ..Default::default()
    };
    let csv = || {
        let out = run(&phi0, &p, &Potential::Quartic, &cfg).unwrap();
        chb_core::output::diagnostics_csv(&out.records).unwrap()
    };
    assert_eq!(csv(), csv());
    assert!(h1_norm(&phi0) > 0.0);
}

