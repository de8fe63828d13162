//! Hypothesis checks and quantitative verification: spectral-gap conditions,
//! the order condition on `F`, the Bellman delay inequality, a closed-form
//! Fourier oracle for linear delay modes, and measured stability rates.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ivp::{solve_ivp, HistorySegment, Trajectory};
use crate::nonlinearity::{Forcing, NonlinearityKind, NonlinearitySpec};
use crate::operators::{phi1_scalar, phi2_scalar, spectrum, Generator};
use crate::periodic::PeriodicTrajectory;

/// Which order hypothesis to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HypothesisMode {
    H1,
    H2,
    H3,
}

impl FromStr for HypothesisMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim_end_matches('\'') {
            "H1" | "h1" => Ok(HypothesisMode::H1),
            "H2" | "h2" => Ok(HypothesisMode::H2),
            "H3" | "h3" => Ok(HypothesisMode::H3),
            _ => Err(Error::validation("mode", format!("expected H1, H2 or H3, got `{s}`"))),
        }
    }
}

impl fmt::Display for HypothesisMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub mode: HypothesisMode,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    pub tau: f64,
    pub nu0_abs: f64,
    pub margin: f64,
    pub sigma: Option<f64>,
    pub satisfied: bool,
}

/// Compares the order constants against `|nu0| = lambda1`.
///
/// H1/H2 need `C1 + C2 < |nu0|`; H3 needs `C1 + C2 e^{|nu0| tau} < |nu0|`,
/// in which case `sigma = |nu0| - (C1 + C2 e^{|nu0| tau})` is the guaranteed
/// decay rate. The primed variants stated in terms of `lambda1` are the same
/// checks.
pub fn check_spectral_gap(c1: f64, c2: f64, tau: f64, nu0_abs: f64, mode: HypothesisMode) -> Result<GapReport> {
    for (name, v) in [("C1", c1), ("C2", c2)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::validation(name, format!("must be finite and >= 0, got {v}")));
        }
    }
    if !nu0_abs.is_finite() {
        return Err(Error::validation("nu0_abs", "must be finite"));
    }
    if mode == HypothesisMode::H3 && (!(tau > 0.0) || !tau.is_finite()) {
        return Err(Error::validation("tau", format!("H3 needs tau > 0, got {tau}")));
    }
    let load = match mode {
        HypothesisMode::H1 | HypothesisMode::H2 => c1 + c2,
        HypothesisMode::H3 => c1 + c2 * (nu0_abs * tau).exp(),
    };
    let margin = nu0_abs - load;
    let satisfied = margin > 0.0;
    let sigma = (mode == HypothesisMode::H3 && satisfied).then_some(margin);
    Ok(GapReport {
        mode,
        c1,
        c2,
        tau,
        nu0_abs,
        margin,
        sigma,
        satisfied,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub samples: usize,
    pub violations: usize,
    /// Largest `(F(t,x2,y2) - F(t,x1,y1)) - (C1 (x2-x1) + C2 (y2-y1))` seen; negative means slack.
    pub worst_violation: f64,
    pub passed: bool,
    pub seed: u64,
    pub note: &'static str,
}

/// Radius of the sampling box `[0, R]^n`.
pub const ORDER_SAMPLE_RADIUS: f64 = 10.0;

/// Random falsifier for the one-sided order condition with constants `(c1, c2)`.
pub fn check_order_condition(
    f: &NonlinearitySpec,
    c1: f64,
    c2: f64,
    n_samples: usize,
    seed: u64,
) -> Result<CheckReport> {
    if n_samples == 0 {
        return Err(Error::validation("n_samples", "must be >= 1"));
    }
    let n = f.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ordered = |rng: &mut ChaCha8Rng| -> (DVector<f64>, DVector<f64>) {
        let mut lo = DVector::zeros(n);
        let mut hi = DVector::zeros(n);
        for i in 0..n {
            let a: f64 = rng.random_range(0.0..=ORDER_SAMPLE_RADIUS);
            let b: f64 = rng.random_range(0.0..=ORDER_SAMPLE_RADIUS);
            lo[i] = a.min(b);
            hi[i] = a.max(b);
        }
        (lo, hi)
    };
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..n_samples {
        let (x1, x2) = ordered(&mut rng);
        let (y1, y2) = ordered(&mut rng);
        let t = rng.random_range(0.0..f.omega());
        let f1 = f.eval(t, &x1, &y1)?;
        let f2 = f.eval(t, &x2, &y2)?;
        for i in 0..n {
            let rhs = c1 * (x2[i] - x1[i]) + c2 * (y2[i] - y1[i]);
            let excess = (f2[i] - f1[i]) - rhs;
            worst = worst.max(excess);
            if excess > 1e-12 * (1.0 + rhs.abs() + f2[i].abs()) {
                violations += 1;
            }
        }
    }
    Ok(CheckReport {
        samples: n_samples,
        violations,
        worst_violation: worst,
        passed: violations == 0,
        seed,
        note: "random sampling can falsify the order condition but cannot prove it",
    })
}

#[derive(Debug, Clone)]
pub struct BellmanResult {
    /// Saturated solution on `[0, t_end]`.
    pub trajectory: Trajectory,
    /// `||phi||_{[-tau, 0]} e^{(c1 + c2) t}` at each grid time.
    pub bound: Vec<f64>,
    /// `min_t (bound - phi)`.
    pub min_margin: f64,
    pub holds: bool,
}

/// Integrates the extremal case of the Bellman delay inequality,
/// `phi(t) = phi(0) + c1 int_0^t phi + c2 int_0^t phi(s - tau) ds`, and checks
/// `phi(t) <= ||phi||_{[-tau,0]} e^{(c1 + c2) t}` at every grid point.
///
/// The `c1` part is propagated exactly by `e^{c1 dt}`; the delayed term uses
/// the trapezoid-weighted exponential quadrature. The integral in the
/// inequality runs over `[0, t]`.
pub fn bellman_bound(phi_history: &HistorySegment, c1: f64, c2: f64, t_end: f64, dt: f64) -> Result<BellmanResult> {
    for (name, v) in [("c1", c1), ("c2", c2)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::validation(name, format!("must be finite and >= 0, got {v}")));
        }
    }
    if phi_history.dim() != 1 {
        return Err(Error::Structural("Bellman history must be scalar".into()));
    }
    if !(t_end > 0.0) || !(dt > 0.0) {
        return Err(Error::validation("t_end/dt", "must be > 0"));
    }
    if (phi_history.dt() - dt).abs() > 1e-9 * dt {
        return Err(Error::Configuration(format!(
            "history spacing {} differs from dt = {dt}",
            phi_history.dt()
        )));
    }
    let shift = phi_history.steps();
    let steps = ((t_end / dt).round() as usize).max(1);
    let z = c1 * dt;
    let growth = z.exp();
    let w_left = c2 * dt * (phi1_scalar(z) - phi2_scalar(z));
    let w_right = c2 * dt * phi2_scalar(z);

    let mut all: Vec<f64> = phi_history.values().iter().map(|v| v[0]).collect();
    all.reserve(steps);
    for j in 0..steps {
        let next = growth * all[shift + j] + w_left * all[j] + w_right * all[j + 1];
        all.push(next);
    }
    let values: Vec<f64> = all.split_off(shift);
    let norm = phi_history.sup_norm();
    let mut bound = Vec::with_capacity(values.len());
    let mut min_margin = f64::INFINITY;
    let mut holds = true;
    for (j, &v) in values.iter().enumerate() {
        let b = norm * ((c1 + c2) * j as f64 * dt).exp();
        min_margin = min_margin.min(b - v);
        // absolute slack plus relative roundoff of e^{dt} raised to the j-th power
        if v > b + 1e-8 + 1e-12 * b {
            holds = false;
        }
        bound.push(b);
    }
    Ok(BellmanResult {
        trajectory: Trajectory {
            t_start: 0.0,
            dt,
            values: values.into_iter().map(|v| DVector::from_element(1, v)).collect(),
        },
        bound,
        min_margin,
        holds,
    })
}

/// Fourier coefficients `(m, h_m)` of `a + b sin(2 pi t / omega + phase)`.
pub fn forcing_fourier_coeffs(forcing: &Forcing) -> Vec<(i64, Complex64)> {
    let mut out = vec![(0, Complex64::new(forcing.a, 0.0))];
    if forcing.b != 0.0 {
        // b sin(x + p) = b (e^{i(x+p)} - e^{-i(x+p)}) / (2i)
        let c = Complex64::from_polar(forcing.b, forcing.phase) / Complex64::new(0.0, 2.0);
        out.push((1, c));
        out.push((-1, c.conj()));
    }
    out
}

/// Closed-form periodic solution of the scalar delay mode
/// `u' + lambda u = C1 u + C2 u(t - tau) + h(t)`:
/// `u_m = h_m / (i m W + lambda - C1 - C2 e^{-i m W tau})`, `W = 2 pi / omega`.
pub fn fourier_periodic_oracle(
    eigenvalue_lambda: f64,
    c1: f64,
    c2: f64,
    tau: f64,
    omega: f64,
    forcing_coeffs: &[(i64, Complex64)],
    steps: usize,
) -> Result<PeriodicTrajectory> {
    let freq = 2.0 * PI / omega;
    let scale = eigenvalue_lambda.abs() + c1.abs() + c2.abs();
    let mut modes = Vec::with_capacity(forcing_coeffs.len());
    for &(m, h) in forcing_coeffs {
        let mw = m as f64 * freq;
        let denom = Complex64::new(eigenvalue_lambda - c1, mw) - c2 * Complex64::from_polar(1.0, -mw * tau);
        if denom.norm() <= 1e-12 * (scale + mw.abs()).max(1.0) {
            return Err(Error::Resonance {
                mode: m,
                magnitude: denom.norm(),
            });
        }
        modes.push((mw, h / denom));
    }
    PeriodicTrajectory::from_fn(omega, steps, 1, |t| {
        let v: Complex64 = modes
            .iter()
            .map(|&(mw, c)| c * Complex64::from_polar(1.0, mw * t))
            .sum();
        DVector::from_element(1, v.re)
    })
}

/// Oracle for an affine problem over a self-adjoint generator, applied
/// eigenmode by eigenmode.
pub fn fourier_oracle_for(gen: &Generator, f: &NonlinearitySpec, steps: usize) -> Result<PeriodicTrajectory> {
    if f.kind != NonlinearityKind::Affine {
        return Err(Error::Configuration(
            "the Fourier oracle needs an affine nonlinearity".into(),
        ));
    }
    let omega = f.omega();
    let coeffs = forcing_fourier_coeffs(&f.forcing);
    let (vals, vecs) = gen.eigen_decomposition()?;
    let n = gen.dimension();
    let mut out = DMatrix::zeros(n, steps);
    for k in 0..n {
        let v = vecs.column(k);
        let weight = v.dot(&f.forcing.profile);
        if weight == 0.0 {
            continue;
        }
        let mode = fourier_periodic_oracle(vals[k], f.c1, f.c2, f.delay_tau, omega, &coeffs, steps)?;
        for j in 0..steps {
            out.column_mut(j).axpy(weight * mode.values()[(0, j)], &v, 1.0);
        }
    }
    PeriodicTrajectory::new(omega, out)
}

#[derive(Debug, Clone, Serialize)]
pub struct HistoryDecay {
    /// `max_{s in [-tau, 0]} ||phi(s) - u*(s)||_sup`.
    pub initial_deviation: f64,
    pub final_deviation: f64,
    /// Least-squares decay rate over the fit window, if enough points lie above the floor.
    pub rate: Option<f64>,
    pub decayed: bool,
    #[serde(skip)]
    pub curve: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub sigma_theory: f64,
    /// Smallest fitted rate over the histories.
    pub measured_rate: Option<f64>,
    pub fit_window: [f64; 2],
    pub histories_tested: usize,
    pub all_decayed: bool,
    pub passed: bool,
    pub failed_history: Option<usize>,
    pub dt: f64,
    pub histories: Vec<HistoryDecay>,
}

/// Deviations below this are excluded from the rate fit.
pub const DEVIATION_FLOOR: f64 = 1e-12;
/// Fraction of `sigma_theory` the measured rate must reach.
pub const RATE_SLACK: f64 = 0.9;

/// Runs each history forward and measures the exponential attraction rate
/// towards the periodic solution `u_star`.
///
/// `u_star` must live on a grid with step `dt` so that the deviation is read
/// without interpolation.
pub fn stability_report(
    gen: &Generator,
    f: &NonlinearitySpec,
    u_star: &PeriodicTrajectory,
    histories: &[HistorySegment],
    t_end: f64,
    dt: f64,
) -> Result<StabilityReport> {
    let lambda1 = spectrum(gen)?.lambda1;
    let gap = check_spectral_gap(f.c1, f.c2, f.delay_tau, lambda1, HypothesisMode::H3)?;
    let Some(sigma) = gap.sigma else {
        return Err(Error::Hypothesis(format!(
            "H3 (C1 + C2 e^(lambda1 tau) = {} >= lambda1 = {lambda1})",
            lambda1 - gap.margin
        )));
    };
    if (u_star.dt() - dt).abs() > 1e-9 * dt {
        return Err(Error::Configuration(format!(
            "periodic solution step {} differs from dt = {dt}",
            u_star.dt()
        )));
    }
    let window = [t_end / 2.0, t_end];

    let runs: Vec<Result<HistoryDecay>> = histories
        .par_iter()
        .map(|hist| {
            let traj = solve_ivp(gen, f, hist, t_end, dt)?;
            let shift = hist.steps() as i64;
            let initial = hist
                .values()
                .iter()
                .enumerate()
                .map(|(i, v)| (v - u_star.at_index(i as i64 - shift)).amax())
                .fold(0.0, f64::max);
            let curve: Vec<f64> = traj
                .values
                .iter()
                .enumerate()
                .map(|(j, v)| (v - u_star.at_index(j as i64)).amax())
                .collect();
            let rate = fit_rate(&traj, &curve, window);
            let final_deviation = *curve.last().unwrap_or(&0.0);
            let decayed = if initial <= DEVIATION_FLOOR {
                final_deviation <= 1e-8
            } else {
                final_deviation < initial * 1e-3
            };
            Ok(HistoryDecay {
                initial_deviation: initial,
                final_deviation,
                rate,
                decayed,
                curve,
            })
        })
        .collect();

    let mut decays = Vec::with_capacity(runs.len());
    let mut failed_history = None;
    for (i, r) in runs.into_iter().enumerate() {
        match r {
            Ok(d) => decays.push(d),
            Err(Error::Divergence { .. }) => {
                failed_history.get_or_insert(i);
            }
            Err(e) => return Err(e),
        }
    }
    let all_decayed = failed_history.is_none() && decays.iter().all(|d| d.decayed);
    let measured_rate = decays.iter().filter_map(|d| d.rate).reduce(f64::min);
    let passed = all_decayed && measured_rate.is_none_or(|r| r >= RATE_SLACK * sigma);
    Ok(StabilityReport {
        sigma_theory: sigma,
        measured_rate,
        fit_window: window,
        histories_tested: histories.len(),
        all_decayed,
        passed,
        failed_history,
        dt,
        histories: decays,
    })
}

// slope of -log d(t) over the window
fn fit_rate(traj: &Trajectory, curve: &[f64], window: [f64; 2]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .enumerate()
        .map(|(j, &d)| (traj.time(j), d))
        .filter(|&(t, d)| t >= window[0] - 1e-12 && t <= window[1] + 1e-12 && d > DEVIATION_FLOOR)
        .map(|(t, d)| (t, d.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(-sxy / sxx)
}

/// Seeded smooth nonnegative histories `alpha_i + beta_i cos(gamma_i s)` with `alpha_i >= |beta_i|`.
pub fn random_histories(
    dim: usize,
    tau: f64,
    dt: f64,
    count: usize,
    seed: u64,
    scale: f64,
) -> Result<Vec<HistorySegment>> {
    let steps = (tau / dt).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let params: Vec<(f64, f64, f64)> = (0..dim)
                .map(|_| {
                    let alpha: f64 = rng.random_range(0.0..=scale);
                    let beta = rng.random_range(-1.0..=1.0) * alpha;
                    let gamma = rng.random_range(0.0..=4.0 * PI / tau);
                    (alpha, beta, gamma)
                })
                .collect();
            HistorySegment::from_fn(tau, steps, |s| {
                DVector::from_iterator(dim, params.iter().map(|&(a, b, g)| (a + b * (g * s).cos()).max(0.0)))
            })
        })
        .collect()
}

/// A seeded pair of histories with `phi1 <= phi2` entrywise.
pub fn random_ordered_pair(
    dim: usize,
    tau: f64,
    dt: f64,
    seed: u64,
    scale: f64,
) -> Result<(HistorySegment, HistorySegment)> {
    let mut pair = random_histories(dim, tau, dt, 2, seed, scale)?;
    let extra = pair.pop().expect("two histories");
    let low = pair.pop().expect("two histories");
    let high = low.values().iter().zip(extra.values()).map(|(a, b)| a + b).collect();
    Ok((low, HistorySegment::new(tau, high)?))
}
