use std::f64::consts::PI;

use nalgebra::DVector;

use perideval::analysis::{
    bellman_bound, check_spectral_gap, fourier_oracle_for, random_ordered_pair, stability_report, HypothesisMode,
};
use perideval::ivp::{mild_residual, solve_ivp, HistorySegment};
use perideval::nonlinearity::{Forcing, NonlinearitySpec};
use perideval::operators::{spectrum, Generator};
use perideval::periodic::{apply_nemytskii, periodic_linear_solve, picard_solve, PicardOptions};
use perideval::problems::{discretize_laplacian_1d, load_problem, Boundary, EllipticSpec1D};

fn scalar_problem(c1: f64, c2: f64, tau: f64) -> (Generator, NonlinearitySpec) {
    let gen = Generator::scalar(1.0).unwrap();
    let f = NonlinearitySpec::affine(c1, c2, Forcing::constant(1.0, 1.0, 1).unwrap(), tau).unwrap();
    (gen, f)
}

fn fourier_problem() -> (Generator, NonlinearitySpec) {
    let omega = 2.0 * PI;
    let forcing = Forcing::new(1.0, 1.0, 0.0, omega, DVector::from_element(1, 1.0)).unwrap();
    (
        Generator::scalar(2.0).unwrap(),
        NonlinearitySpec::affine(0.5, 0.5, forcing, PI).unwrap(),
    )
}

#[test]
fn converged_residual_is_within_twice_tol() {
    let (gen, f) = fourier_problem();
    let tol = 1e-10;
    let res = picard_solve(
        &gen,
        &f,
        2.0 * PI,
        128,
        PicardOptions {
            tol,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(res.converged);
    // independent evaluation of Q
    let qu = periodic_linear_solve(&gen, &apply_nemytskii(&f, &res.solution, false).unwrap()).unwrap();
    let residual = (qu.values() - res.solution.values()).amax();
    assert!(residual <= 2.0 * tol, "{residual}");
}

#[test]
fn picard_grid_convergence_is_second_order() {
    let (gen, f) = fourier_problem();
    let errors: Vec<f64> = [64, 128, 256, 512]
        .iter()
        .map(|&m| {
            let oracle = fourier_oracle_for(&gen, &f, m).unwrap();
            let res = picard_solve(&gen, &f, 2.0 * PI, m, PicardOptions::default()).unwrap();
            (res.solution.values() - oracle.values()).amax()
        })
        .collect();
    for w in errors.windows(2) {
        assert!(w[0] / w[1] >= 3.0, "{errors:?}");
    }
}

#[test]
fn oracle_equivalence_on_elliptic_generator() {
    let text = "\
label = heat
omega = 1
steps_M = 512
tau = 0.5
nonlinearity.kind = affine
nonlinearity.C1 = 0.3
nonlinearity.C2 = 0.2
forcing.a = 1
forcing.b = 0.5
forcing.phase = 0.3
elliptic.n = 20
elliptic.L = 3.141592653589793
elliptic.diffusion = 1
elliptic.a0 = 0
elliptic.boundary = dirichlet
";
    let spec = load_problem(text).unwrap();
    let gen = spec.generator();
    let f = &spec.nonlinearity;
    let lambda1 = spectrum(gen).unwrap().lambda1;
    assert!(
        check_spectral_gap(f.c1, f.c2, f.delay_tau, lambda1, HypothesisMode::H2)
            .unwrap()
            .satisfied
    );
    let oracle = fourier_oracle_for(gen, f, 512).unwrap();
    let res = picard_solve(gen, f, spec.omega, 512, PicardOptions::default()).unwrap();
    let rel = (res.solution.values() - oracle.values()).amax() / oracle.sup_norm();
    assert!(rel <= 1e-4, "{rel}");
}

#[test]
fn oracle_equivalence_on_diagonal_generator() {
    let gen = Generator::diagonal(&[1.0, 4.0, 9.0]).unwrap();
    let profile = DVector::from_column_slice(&[1.0, 0.5, 0.25]);
    let forcing = Forcing::new(2.0, 1.5, 1.0, 1.0, profile).unwrap();
    let f = NonlinearitySpec::affine(0.4, 0.3, forcing, 0.25).unwrap();
    let oracle = fourier_oracle_for(&gen, &f, 512).unwrap();
    let res = picard_solve(&gen, &f, 1.0, 512, PicardOptions::default()).unwrap();
    let rel = (res.solution.values() - oracle.values()).amax() / oracle.sup_norm();
    assert!(rel <= 1e-4, "{rel}");
}

#[test]
fn mild_residual_examples() {
    let gen = Generator::scalar(1.0).unwrap();
    let dt = 1e-3;
    let steps = 1000;

    let zero = NonlinearitySpec::affine(0.0, 0.0, Forcing::constant(0.0, 1.0, 1).unwrap(), 1.0).unwrap();
    let hist = HistorySegment::constant(1.0, steps, DVector::from_element(1, 1.0)).unwrap();
    let traj = solve_ivp(&gen, &zero, &hist, 1.0, dt).unwrap();
    assert!((traj.values[1000][0] - (-1.0f64).exp()).abs() < 1e-6);
    let r = mild_residual(&gen, &zero, &traj, &hist, &[0.5, 1.0]).unwrap();
    assert!(r <= 1e-10, "{r}");

    let (gen, f) = scalar_problem(0.3, 0.2, 1.0);
    let hist = HistorySegment::constant(1.0, steps, DVector::from_element(1, 2.0)).unwrap();
    let traj = solve_ivp(&gen, &f, &hist, 3.0, dt).unwrap();
    let times: Vec<f64> = (1..=6).map(|k| k as f64 * 0.5).collect();
    let r = mild_residual(&gen, &f, &traj, &hist, &times).unwrap();
    assert!(r <= 1e-10, "{r}");

    let hist = HistorySegment::from_fn(1.0, steps, |s| DVector::from_element(1, 1.0 + s.sin().abs())).unwrap();
    let traj = solve_ivp(&gen, &f, &hist, 2.0, dt).unwrap();
    let r = mild_residual(&gen, &f, &traj, &hist, &[1.0, 2.0]).unwrap();
    assert!(r <= 1e-6, "{r}");
}

#[test]
fn stability_from_zero_history() {
    let (gen, f) = scalar_problem(0.2, 0.1, 1.0);
    let dt = 1e-3;
    let orbit = picard_solve(
        &gen,
        &f,
        1.0,
        1000,
        PicardOptions {
            tol: 1e-13,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(orbit.converged);
    let zero = HistorySegment::constant(1.0, 1000, DVector::zeros(1)).unwrap();
    let report = stability_report(&gen, &f, &orbit.solution, &[zero], 40.0, dt).unwrap();
    let sigma = 1.0 - (0.2 + 0.1 * 1f64.exp());
    assert!((report.sigma_theory - sigma).abs() < 1e-12);
    assert!(report.all_decayed && report.passed);
    assert!(report.measured_rate.unwrap() >= 0.9 * sigma);
}

#[test]
fn orbit_history_stays_on_orbit() {
    let gen = Generator::scalar(1.0).unwrap();
    let forcing = Forcing::new(1.0, 0.8, 0.4, 1.0, DVector::from_element(1, 1.0)).unwrap();
    let f = NonlinearitySpec::saturating(0.2, 0.1, forcing, 0.5).unwrap();
    let dt = 1.0 / 200.0;
    let orbit = picard_solve(
        &gen,
        &f,
        1.0,
        200,
        PicardOptions {
            tol: 1e-13,
            ..Default::default()
        },
    )
    .unwrap();
    let hist = HistorySegment::from_periodic(&orbit.solution, 0.5).unwrap();
    let report = stability_report(&gen, &f, &orbit.solution, &[hist], 10.0, dt).unwrap();
    let curve = &report.histories[0].curve;
    assert!(
        curve.iter().all(|&d| d <= 1e-8),
        "{}",
        curve.iter().cloned().fold(0.0, f64::max)
    );
}

#[test]
fn ordered_histories_both_decay_and_stay_ordered() {
    let spec = EllipticSpec1D::uniform(15, PI, 1.0, 0.0, Boundary::Dirichlet).unwrap();
    let gen = discretize_laplacian_1d(&spec).unwrap();
    let profile = perideval::problems::first_eigenfunction(&gen);
    let forcing = Forcing::new(1.0, 0.5, 0.0, 1.0, profile).unwrap();
    let f = NonlinearitySpec::affine(0.3, 0.2, forcing, 0.5).unwrap();
    let dt = 1.0 / 32.0;
    let orbit = picard_solve(
        &gen,
        &f,
        1.0,
        32,
        PicardOptions {
            tol: 1e-13,
            ..Default::default()
        },
    )
    .unwrap();
    let (low, high) = random_ordered_pair(15, 0.5, dt, 9, 3.0).unwrap();
    let u1 = solve_ivp(&gen, &f, &low, 30.0, dt).unwrap();
    let u2 = solve_ivp(&gen, &f, &high, 30.0, dt).unwrap();
    for (a, b) in u1.values.iter().zip(&u2.values) {
        assert!((a - b).max() <= 1e-8);
    }
    let report = stability_report(&gen, &f, &orbit.solution, &[low, high], 30.0, dt).unwrap();
    assert!(report.all_decayed && report.passed, "{report:?}");
}

#[test]
fn bellman_trajectory_dominates_weighted_deviation() {
    // saturating scalar problem, history above the orbit
    let gen = Generator::scalar(1.0).unwrap();
    let (c1, c2, tau) = (0.2, 0.1, 1.0);
    let f = NonlinearitySpec::saturating(c1, c2, Forcing::constant(1.0, 1.0, 1).unwrap(), tau).unwrap();
    let dt = 1e-3;
    let steps = 1000;
    let orbit = picard_solve(
        &gen,
        &f,
        1.0,
        steps,
        PicardOptions {
            tol: 1e-13,
            ..Default::default()
        },
    )
    .unwrap();
    let u_star = &orbit.solution;
    let hist_values: Vec<DVector<f64>> = (0..=steps)
        .map(|i| {
            let s = -tau + i as f64 * dt;
            u_star.at_index(i as i64 - steps as i64) + DVector::from_element(1, 1.0 + 0.5 * (3.0 * s).cos())
        })
        .collect();
    let hist = HistorySegment::new(tau, hist_values).unwrap();
    let t_end = 10.0;
    let report = stability_report(&gen, &f, u_star, std::slice::from_ref(&hist), t_end, dt).unwrap();
    let curve = &report.histories[0].curve;

    let lambda1 = 1.0;
    let weighted: Vec<DVector<f64>> = hist
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let s = -tau + i as f64 * dt;
            let d = (v - u_star.at_index(i as i64 - steps as i64)).amax();
            DVector::from_element(1, (lambda1 * s).exp() * d)
        })
        .collect();
    let weighted = HistorySegment::new(tau, weighted).unwrap();
    let bell = bellman_bound(&weighted, c1, c2 * (lambda1 * tau).exp(), t_end, dt).unwrap();
    assert!(bell.holds);
    for (j, d) in curve.iter().enumerate() {
        let w = (lambda1 * j as f64 * dt).exp() * d;
        assert!(
            w <= bell.trajectory.values[j][0] + 1e-6,
            "t={} w={w} bound={}",
            j as f64 * dt,
            bell.trajectory.values[j][0]
        );
    }
}

#[test]
fn dirichlet_eigenvalue_ladder() {
    let lambda = |n: usize| {
        let g =
            discretize_laplacian_1d(&EllipticSpec1D::uniform(n, PI, 1.0, 0.0, Boundary::Dirichlet).unwrap()).unwrap();
        assert!(g.metzler_ok() && g.self_adjoint());
        spectrum(&g).unwrap().lambda1
    };
    let ladder = [24usize, 49, 99, 199];
    let diffs: Vec<f64> = ladder.iter().map(|&n| (lambda(n) - lambda(2 * n + 1)).abs()).collect();
    for w in diffs.windows(2) {
        let r = w[0] / w[1];
        assert!((3.5..=4.5).contains(&r), "{diffs:?}");
    }
}

#[test]
fn every_shipped_style_problem_runs() {
    let base = "\
label = robin
omega = 0.5
steps_M = 20
tau = 0.1
nonlinearity.kind = saturating
nonlinearity.C1 = 0.02
nonlinearity.C2 = 0.03
forcing.a = 1
forcing.b = -1
forcing.phase = 2
elliptic.n = 12
elliptic.L = 2
elliptic.diffusion = 0.5
elliptic.a0 = 0.1
elliptic.boundary = robin:0
";
    let spec = load_problem(base).unwrap();
    assert!(spectrum(spec.generator()).unwrap().exp_stable);
    let res = picard_solve(
        spec.generator(),
        &spec.nonlinearity,
        spec.omega,
        spec.steps_m,
        PicardOptions::default(),
    )
    .unwrap();
    assert!(res.converged);
    assert!(res.solution.min_entry() >= 0.0);
}
