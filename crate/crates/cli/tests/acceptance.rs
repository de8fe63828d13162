//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::Parser;
use nalgebra::DVector;
use serde_json::Value;

use perideval::analysis::{bellman_bound, fourier_oracle_for, random_ordered_pair};
use perideval::ivp::{solve_ivp, HistorySegment};
use perideval::operators::{spectrum, Generator};
use perideval::periodic::{monodromy_inverse, neumann_inverse, picard_solve, spectral_radius_p, PicardOptions};
use perideval::problems::{discretize_laplacian_1d, load_problem, Boundary, EllipticSpec1D, ProblemSpec};
use perideval_cli::{run, Cli, RunRecord, EXIT_CHECK_FAILED, EXIT_OK};

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn problem(name: &str) -> ProblemSpec {
    load_problem(&std::fs::read_to_string(example(name)).unwrap()).unwrap()
}

fn cli(args: &[&str], out: &Path) -> RunRecord {
    let mut argv = vec!["perideval".to_string(), "--out-dir".into(), out.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    run(&Cli::parse_from(argv))
}

fn dirichlet(n: usize, length: f64) -> Generator {
    discretize_laplacian_1d(&EllipticSpec1D::uniform(n, length, 1.0, 0.0, Boundary::Dirichlet).unwrap()).unwrap()
}

fn verdict(criterion: u32, ok: bool, elapsed: Duration, limit: Duration, detail: String) {
    let within = elapsed <= limit;
    let pass = ok && within;
    println!(
        "criterion {criterion}: {} ({detail}; {:.3}s of {:.0}s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs_f64()
    );
    assert!(ok, "criterion {criterion} failed: {detail}");
    assert!(within, "criterion {criterion} exceeded {limit:?}: {elapsed:?}");
}

fn output(rec: &RunRecord, key: &str) -> f64 {
    rec.outputs.get(key).and_then(Value::as_f64).unwrap_or(f64::NAN)
}

#[test]
fn criterion_01_spectral_radius_bound() {
    let start = Instant::now();
    let cases = [
        ("[1]", Generator::scalar(1.0).unwrap(), true),
        ("[2]", Generator::scalar(2.0).unwrap(), false),
        ("diag(1,4,9)", Generator::diagonal(&[1.0, 4.0, 9.0]).unwrap(), true),
        ("dirichlet n=99", dirichlet(99, PI), false),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, gen, tight) in &cases {
        let nu0_abs = spectrum(gen).unwrap().lambda1;
        let r = spectral_radius_p(gen, 1.0, 64).unwrap();
        let bound_ok = r <= 1.0 / nu0_abs + 1e-6;
        let tight_ok = !tight || (r - 1.0).abs() <= 1e-6;
        ok &= bound_ok && tight_ok;
        detail.push(format!("{name}: r={r:.9} bound={:.9}", 1.0 / nu0_abs));
    }
    verdict(1, ok, start.elapsed(), Duration::from_secs(10), detail.join(", "));
}

#[test]
fn criterion_02_neumann_equivalence() {
    let start = Instant::now();
    let gens = [
        Generator::scalar(1.0).unwrap(),
        Generator::scalar(2.0).unwrap(),
        Generator::diagonal(&[1.0, 4.0, 9.0]).unwrap(),
        dirichlet(99, PI),
        problem("coupled_pair.cfg").generator().clone(),
        problem("heat_robin.cfg").generator().clone(),
    ];
    let mut worst: f64 = 0.0;
    for gen in &gens {
        let direct = monodromy_inverse(gen, 1.0).unwrap();
        let series = neumann_inverse(gen, 1.0, 60).unwrap();
        worst = worst.max((&series.matrix - &direct).amax());
    }
    verdict(
        2,
        worst <= 1e-12,
        start.elapsed(),
        Duration::from_secs(1),
        format!("max entry difference {worst:e} over {} generators", gens.len()),
    );
}

#[test]
fn criterion_03_fourier_oracle() {
    let start = Instant::now();
    let spec = problem("fourier_affine.cfg");
    let gen = spec.generator();
    let f = &spec.nonlinearity;
    assert_eq!((gen.matrix()[(0, 0)], f.c1, f.c2), (2.0, 0.5, 0.5));
    let discrepancy = |m: usize| {
        let oracle = fourier_oracle_for(gen, f, m).unwrap();
        let res = picard_solve(gen, f, spec.omega, m, PicardOptions::default()).unwrap();
        assert!(res.converged);
        (res.solution.values() - oracle.values()).amax() / oracle.sup_norm()
    };
    let fine = discrepancy(512);
    let coarse = discrepancy(256);
    let ratio = coarse / fine;
    verdict(
        3,
        fine <= 1e-4 && ratio >= 3.0,
        start.elapsed(),
        Duration::from_secs(5),
        format!("relative error M=512 {fine:e}, M=256 {coarse:e}, ratio {ratio:.3}"),
    );
}

#[test]
fn criterion_04_constant_fixed_point() {
    let start = Instant::now();
    let spec = problem("scalar_affine.cfg");
    let res = picard_solve(
        spec.generator(),
        &spec.nonlinearity,
        spec.omega,
        spec.steps_m,
        PicardOptions::default(),
    )
    .unwrap();
    let err = res.solution.values().map(|v| (v - 2.0).abs()).max();
    verdict(
        4,
        res.converged && err <= 1e-8 && res.iterations <= 60,
        start.elapsed(),
        Duration::from_secs(1),
        format!("max |u - 2| = {err:e} after {} iterations", res.iterations),
    );
}

#[test]
fn criterion_05_threshold_sharpness() {
    let start = Instant::now();
    let spec = problem("threshold.cfg");
    let opts = PicardOptions {
        max_iter: 200,
        ..PicardOptions::default()
    };
    let res = picard_solve(spec.generator(), &spec.nonlinearity, spec.omega, spec.steps_m, opts).unwrap();
    let sup = res.solution.sup_norm();
    let dir = tempfile::tempdir().unwrap();
    let rec = cli(
        &["oracle", "--config", example("threshold.cfg").to_str().unwrap()],
        dir.path(),
    );
    let resonance =
        rec.exit_code == EXIT_CHECK_FAILED && rec.outputs.get("resonance_mode").and_then(Value::as_i64) == Some(0);
    verdict(
        5,
        !res.converged && sup > 1e6 && resonance,
        start.elapsed(),
        Duration::from_secs(1),
        format!(
            "converged={} sup-norm after {} iterations = {sup:.6}, oracle exit {} resonance at m=0: {resonance}",
            res.converged, res.iterations, rec.exit_code
        ),
    );
}

#[test]
fn criterion_06_stability_rate() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = example("scalar_stability.cfg");
    let rec = cli(
        &[
            "stability",
            "--config",
            cfg.to_str().unwrap(),
            "--histories",
            "8",
            "--t-end",
            "40",
            "--dt",
            "1e-3",
        ],
        dir.path(),
    );
    let sigma = output(&rec, "sigma_theory");
    let rate = output(&rec, "measured_rate");
    let all_decayed = rec.outputs.get("all_decayed").and_then(Value::as_bool) == Some(true);
    let want_sigma = 1.0 - (0.2 + 0.1 * 1f64.exp());
    verdict(
        6,
        rec.exit_code == EXIT_OK
            && (sigma - want_sigma).abs() <= 1e-12
            && (sigma - 0.52817).abs() <= 1e-5
            && rate >= 0.9 * sigma
            && all_decayed,
        start.elapsed(),
        Duration::from_secs(30),
        format!("sigma_theory {sigma:.6}, measured_rate {rate:.6}, all_decayed {all_decayed}"),
    );
}

#[test]
fn criterion_07_positivity_and_monotonicity() {
    let start = Instant::now();
    let catalog = [
        "scalar_affine.cfg",
        "scalar_stability.cfg",
        "threshold.cfg",
        "fourier_affine.cfg",
        "heat_dirichlet.cfg",
        "heat_robin.cfg",
        "coupled_pair.cfg",
    ];
    let mut ok = true;
    let mut worst_pos: f64 = 0.0;
    let mut worst_mono: f64 = 0.0;
    let mut worst_order: f64 = 0.0;
    let mut pairs = 0;
    for name in catalog {
        let spec = problem(name);
        let gen = spec.generator();
        assert!(gen.metzler_ok(), "{name}");
        let f = &spec.nonlinearity;
        let opts = PicardOptions {
            max_iter: 200,
            ..PicardOptions::default()
        };
        let res = picard_solve(gen, f, spec.omega, spec.steps_m, opts).unwrap();
        worst_pos = worst_pos.min(res.positivity_violation);
        worst_mono = worst_mono.min(res.monotonicity_violation);
        ok &= res.positivity_violation >= -1e-10 && res.monotonicity_violation >= -1e-10;

        let dt = spec.dt();
        let t_end = 3.0 * spec.omega;
        for k in 0..20 {
            let (low, high) = random_ordered_pair(gen.dimension(), f.delay_tau, dt, spec.seed + k, 3.0).unwrap();
            let u1 = solve_ivp(gen, f, &low, t_end, dt).unwrap();
            let u2 = solve_ivp(gen, f, &high, t_end, dt).unwrap();
            for (a, b) in u1.values.iter().zip(&u2.values) {
                worst_order = worst_order.max((a - b).max());
            }
            pairs += 1;
        }
    }
    ok &= worst_order <= 1e-8;
    verdict(
        7,
        ok,
        start.elapsed(),
        Duration::from_secs(60),
        format!(
            "worst iterate entry {worst_pos:e}, worst decrease {worst_mono:e}, worst u1 - u2 {worst_order:e} over {pairs} pairs"
        ),
    );
}

#[test]
fn criterion_08_gronwall_oracle() {
    let start = Instant::now();
    let hist = HistorySegment::constant(1.0, 1000, DVector::from_element(1, 1.0)).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for (c1, c2) in [(1.0, 0.0), (0.5, 0.5), (0.0, 1.0)] {
        let res = bellman_bound(&hist, c1, c2, 10.0, 1e-3).unwrap();
        let mut excess = f64::NEG_INFINITY;
        let mut rel_gap: f64 = 0.0;
        for (j, v) in res.trajectory.values.iter().enumerate() {
            let bound = ((c1 + c2) * res.trajectory.time(j)).exp();
            excess = excess.max(v[0] - bound);
            rel_gap = rel_gap.max((v[0] - bound).abs() / bound);
        }
        ok &= excess <= 1e-6;
        if c2 == 0.0 {
            ok &= rel_gap <= 1e-4;
        }
        detail.push(format!(
            "({c1},{c2}): max excess {excess:e}, max relative gap {rel_gap:e}"
        ));
    }
    verdict(8, ok, start.elapsed(), Duration::from_secs(5), detail.join("; "));
}

#[test]
fn criterion_09_eigenvalue_convergence() {
    let start = Instant::now();
    let errors: Vec<f64> = [24, 49, 99, 199]
        .iter()
        .map(|&n| (spectrum(&dirichlet(n, PI)).unwrap().lambda1 - 1.0).abs())
        .collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let unit = spectrum(&dirichlet(199, 1.0)).unwrap().lambda1;
    let ok = ratios.iter().all(|r| (3.5..=4.5).contains(r)) && (unit - PI * PI).abs() <= 1e-3;
    verdict(
        9,
        ok,
        start.elapsed(),
        Duration::from_secs(5),
        format!("error ratios {ratios:.4?}, L=1 n=199 lambda1 = {unit:.6}"),
    );
}

#[test]
fn criterion_10_elliptic_end_to_end() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = example("heat_dirichlet.cfg");
    let cfg = cfg.to_str().unwrap();
    let spec = problem("heat_dirichlet.cfg");
    assert_eq!(spec.generator().dimension(), 99);
    assert_eq!((spec.omega, spec.steps_m, spec.nonlinearity.delay_tau), (1.0, 64, 0.5));

    let h2 = cli(&["check", "--config", cfg, "--mode", "H2"], dir.path());
    let h3 = cli(&["check", "--config", cfg, "--mode", "H3"], dir.path());
    let periodic = cli(&["periodic", "--config", cfg], dir.path());
    let residual = output(&periodic, "residual");
    let stability = cli(
        &["stability", "--config", cfg, "--t-end", "40", "--dt", "0.015625"],
        dir.path(),
    );
    let ok = h2.exit_code == EXIT_OK
        && h3.exit_code == EXIT_OK
        && periodic.exit_code == EXIT_OK
        && residual <= 1e-8
        && stability.exit_code == EXIT_OK;
    verdict(
        10,
        ok,
        start.elapsed(),
        Duration::from_secs(120),
        format!(
            "check H2 exit {}, H3 exit {}, periodic exit {} residual {residual:e}, stability exit {} rate {:.4} vs sigma {:.4}",
            h2.exit_code,
            h3.exit_code,
            periodic.exit_code,
            stability.exit_code,
            output(&stability, "measured_rate"),
            output(&stability, "sigma_theory")
        ),
    );
}
