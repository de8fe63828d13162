//! The periodic solution operator `P`, the substitution operator `F(u)(t)`,
//! and Picard iteration on their composition.
//!
//! Time is discretized on a uniform grid `t_j = j * omega / M`. The linear
//! periodic problem `u' + A u = h` is advanced with the exponential-trapezoid
//! rule (forcing linearly interpolated over each step) and closed
//! periodically with `(I - T(omega))^{-1}`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expm::norm1;
use crate::nonlinearity::NonlinearitySpec;
use crate::operators::{semigroup_matrix, spectrum, Generator, StepOperators};

/// An `omega`-periodic vector function sampled at `t_j = j * omega / M`,
/// stored column-per-time in an `n x M` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicTrajectory {
    omega: f64,
    values: DMatrix<f64>,
}

impl PeriodicTrajectory {
    pub fn new(omega: f64, values: DMatrix<f64>) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::validation("omega", format!("must be > 0, got {omega}")));
        }
        if values.ncols() == 0 || values.nrows() == 0 {
            return Err(Error::Structural(
                "trajectory needs at least one step and one component".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("values", "trajectory entries must be finite"));
        }
        Ok(PeriodicTrajectory { omega, values })
    }

    pub fn zeros(dim: usize, omega: f64, steps: usize) -> Result<Self> {
        Self::new(omega, DMatrix::zeros(dim, steps))
    }

    /// Samples `f` at every grid time.
    pub fn from_fn(omega: f64, steps: usize, dim: usize, f: impl Fn(f64) -> DVector<f64>) -> Result<Self> {
        let dt = omega / steps as f64;
        let mut values = DMatrix::zeros(dim, steps);
        for j in 0..steps {
            let v = f(j as f64 * dt);
            if v.len() != dim {
                return Err(Error::Structural(format!(
                    "sample has length {}, expected {dim}",
                    v.len()
                )));
            }
            values.set_column(j, &v);
        }
        Self::new(omega, values)
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn steps(&self) -> usize {
        self.values.ncols()
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn dt(&self) -> f64 {
        self.omega / self.steps() as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    /// Value at grid index `j`, taken modulo `M`.
    pub fn at_index(&self, j: i64) -> DVector<f64> {
        let m = self.steps() as i64;
        self.values.column(j.rem_euclid(m) as usize).into_owned()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.amax()
    }

    pub fn min_entry(&self) -> f64 {
        self.values.min()
    }
}

/// How the delayed argument `u(t_j - tau)` is read from the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayRead {
    /// `tau = shift * dt`.
    Exact { shift: usize },
    /// `tau = (shift + frac) * dt`, linearly interpolated.
    Interpolated { shift: usize, frac: f64 },
}

impl DelayRead {
    /// Resolves `tau` against step `dt`; non-integer ratios are rejected
    /// unless `interpolate` is set.
    pub fn new(tau: f64, dt: f64, interpolate: bool) -> Result<Self> {
        let ratio = tau / dt;
        let k = ratio.round();
        if k >= 1.0 && (ratio - k).abs() <= 1e-9 * ratio.max(1.0) {
            return Ok(DelayRead::Exact { shift: k as usize });
        }
        if interpolate {
            let shift = ratio.floor();
            return Ok(DelayRead::Interpolated {
                shift: shift as usize,
                frac: ratio - shift,
            });
        }
        Err(Error::Configuration(format!(
            "delay tau = {tau} is not an integer multiple of the step {dt} (ratio {ratio}); enable delay interpolation or change the grid"
        )))
    }

    fn read_periodic(&self, values: &DMatrix<f64>, j: usize, out: &mut [f64]) {
        let m = values.ncols() as i64;
        let col = |shift: usize| values.column((j as i64 - shift as i64).rem_euclid(m) as usize);
        match *self {
            DelayRead::Exact { shift } => out.copy_from_slice(col(shift).as_slice()),
            DelayRead::Interpolated { shift, frac } => {
                let a = col(shift);
                let b = col(shift + 1);
                for i in 0..out.len() {
                    out[i] = (1.0 - frac) * a[i] + frac * b[i];
                }
            }
        }
    }
}

/// `F(u)(t_j) = F(t_j, u(t_j), u(t_j - tau))` with wraparound delay reads.
pub fn apply_nemytskii(f: &NonlinearitySpec, u: &PeriodicTrajectory, interpolate: bool) -> Result<PeriodicTrajectory> {
    let delay = DelayRead::new(f.delay_tau, u.dt(), interpolate)?;
    Ok(PeriodicTrajectory {
        omega: u.omega,
        values: nemytskii_values(f, u, delay)?,
    })
}

fn nemytskii_values(f: &NonlinearitySpec, u: &PeriodicTrajectory, delay: DelayRead) -> Result<DMatrix<f64>> {
    let n = u.dim();
    if f.dimension() != n {
        return Err(Error::Structural(format!(
            "nonlinearity dimension {} does not match trajectory dimension {n}",
            f.dimension()
        )));
    }
    let mut out = DMatrix::zeros(n, u.steps());
    let mut delayed = vec![0.0; n];
    for j in 0..u.steps() {
        delay.read_periodic(&u.values, j, &mut delayed);
        let x = u.values.column(j);
        f.eval_into(u.time(j), x.as_slice(), &delayed, out.column_mut(j).as_mut_slice())?;
    }
    Ok(out)
}

fn require_exp_stable(gen: &Generator) -> Result<crate::operators::SpectrumInfo> {
    let spec = spectrum(gen)?;
    if !spec.exp_stable {
        return Err(Error::NotExponentiallyStable { lambda1: spec.lambda1 });
    }
    Ok(spec)
}

/// `(I - T(omega))^{-1}` by a dense solve.
pub fn monodromy_inverse(gen: &Generator, omega: f64) -> Result<DMatrix<f64>> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Domain(format!("omega must be > 0, got {omega}")));
    }
    let spec = require_exp_stable(gen)?;
    let n = gen.dimension();
    let lhs = DMatrix::identity(n, n) - semigroup_matrix(gen, omega)?;
    let inv = lhs.clone().try_inverse();
    let condition = inv.as_ref().map_or(f64::INFINITY, |inv| norm1(&lhs) * norm1(inv));
    match inv {
        Some(inv) if condition <= 1e12 && inv.iter().all(|v| v.is_finite()) => Ok(inv),
        _ => {
            let worst = spec
                .eigenvalues
                .iter()
                .min_by(|a, b| {
                    let da = (1.0 - (-*a * omega).exp()).norm();
                    let db = (1.0 - (-*b * omega).exp()).norm();
                    da.total_cmp(&db)
                })
                .copied()
                .unwrap_or_default();
            Err(Error::Singular {
                condition,
                eigenvalue: format!("{} + {}i", worst.re, worst.im),
            })
        }
    }
}

/// Truncated Neumann series `sum_{k < terms} T(k omega)`.
#[derive(Debug, Clone)]
pub struct NeumannSum {
    pub matrix: DMatrix<f64>,
    /// `e^{nu0 terms omega} / (1 - e^{nu0 omega})`.
    pub tail_bound: f64,
}

/// Partial sums of `(I - T(omega))^{-1} = sum_k T(k omega)`; an oracle for [`monodromy_inverse`].
pub fn neumann_inverse(gen: &Generator, omega: f64, terms: usize) -> Result<NeumannSum> {
    let spec = require_exp_stable(gen)?;
    if terms == 0 {
        return Err(Error::Domain("Neumann series needs at least one term".into()));
    }
    let n = gen.dimension();
    let step = semigroup_matrix(gen, omega)?;
    let mut power = DMatrix::identity(n, n);
    let mut sum = power.clone();
    for _ in 1..terms {
        power = &step * &power;
        sum += &power;
    }
    let tail_bound = (spec.nu0 * terms as f64 * omega).exp() / (1.0 - (spec.nu0 * omega).exp());
    Ok(NeumannSum {
        matrix: sum,
        tail_bound,
    })
}

/// Discrete periodic solution operator for a fixed generator and grid.
#[derive(Debug, Clone)]
pub struct PeriodicSolver {
    ops: StepOperators,
    closure: DMatrix<f64>,
    omega: f64,
    steps: usize,
}

impl PeriodicSolver {
    pub fn new(gen: &Generator, omega: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Domain("grid needs at least one step".into()));
        }
        let closure = monodromy_inverse(gen, omega)?;
        let ops = StepOperators::new(gen, omega / steps as f64)?;
        Ok(PeriodicSolver {
            ops,
            closure,
            omega,
            steps,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn dt(&self) -> f64 {
        self.ops.dt
    }

    pub fn step_operators(&self) -> &StepOperators {
        &self.ops
    }

    /// Applies the discrete `P` to forcing samples (`n x M`).
    pub fn apply(&self, forcing: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, m) = forcing.shape();
        debug_assert_eq!(m, self.steps);
        debug_assert_eq!(n, self.ops.dimension());
        // per-step quadrature q_j = left h_j + right h_{j+1}
        let mut shifted = DMatrix::zeros(n, m);
        for j in 0..m {
            shifted.set_column(j, &forcing.column((j + 1) % m));
        }
        let quad = &self.ops.left * forcing + &self.ops.right * shifted;

        let e = &self.ops.propagator;
        let mut acc = DVector::zeros(n);
        let mut tmp = DVector::zeros(n);
        for j in 0..m {
            tmp.gemv(1.0, e, &acc, 0.0);
            tmp += quad.column(j);
            std::mem::swap(&mut acc, &mut tmp);
        }
        let mut out = DMatrix::zeros(n, m);
        let mut u = &self.closure * acc;
        out.set_column(0, &u);
        for j in 0..m - 1 {
            tmp.gemv(1.0, e, &u, 0.0);
            tmp += quad.column(j);
            std::mem::swap(&mut u, &mut tmp);
            out.set_column(j + 1, &u);
        }
        out
    }

    pub fn solve(&self, forcing: &PeriodicTrajectory) -> Result<PeriodicTrajectory> {
        if forcing.steps() != self.steps || forcing.dim() != self.ops.dimension() {
            return Err(Error::Structural(format!(
                "forcing grid {}x{} does not match solver {}x{}",
                forcing.dim(),
                forcing.steps(),
                self.ops.dimension(),
                self.steps
            )));
        }
        if (forcing.omega() - self.omega).abs() > 1e-12 * self.omega {
            return Err(Error::Configuration(format!(
                "forcing period {} differs from solver period {}",
                forcing.omega(),
                self.omega
            )));
        }
        PeriodicTrajectory::new(self.omega, self.apply(forcing.values()))
    }
}

/// Periodic mild solution of `u' + A u = h` on the forcing's grid.
pub fn periodic_linear_solve(gen: &Generator, forcing: &PeriodicTrajectory) -> Result<PeriodicTrajectory> {
    PeriodicSolver::new(gen, forcing.omega(), forcing.steps())?.solve(forcing)
}

/// Power-iteration estimate of the spectral radius of the discrete `P`.
pub fn spectral_radius_p(gen: &Generator, omega: f64, steps: usize) -> Result<f64> {
    const MAX_ITER: usize = 10_000;
    let solver = PeriodicSolver::new(gen, omega, steps)?;
    let mut h = DMatrix::from_element(gen.dimension(), steps, 1.0);
    let mut prev = f64::NAN;
    let mut ratio = f64::NAN;
    for _ in 0..MAX_ITER {
        let g = solver.apply(&h);
        let norm = g.amax();
        if norm == 0.0 {
            return Ok(0.0);
        }
        ratio = norm / h.amax();
        if (ratio - prev).abs() <= 1e-8 {
            return Ok(ratio);
        }
        prev = ratio;
        h = g / norm;
    }
    Err(Error::Numerical {
        method: "power iteration on P".into(),
        iterations: MAX_ITER,
        detail: format!("last ratio {ratio}, previous {prev}"),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub interpolate_delay: bool,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            tol: 1e-10,
            max_iter: 10_000,
            interpolate_delay: false,
        }
    }
}

/// Iterates beyond this sup-norm are declared divergent.
pub const PICARD_DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct PeriodicSolveResult {
    pub solution: PeriodicTrajectory,
    pub iterations: usize,
    /// `||u - Q u||_sup` for the returned `u`.
    pub residual: f64,
    /// Most negative entry over all iterates, clamped to `<= 0`.
    pub positivity_violation: f64,
    /// Most negative entry of `u^{k+1} - u^k` over all iterations, clamped to `<= 0`.
    pub monotonicity_violation: f64,
    /// `||u^{k+1} - u^k||_sup` per iteration.
    pub increments: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PicardSummary {
    pub iterations: usize,
    pub residual: f64,
    pub positivity_violation: f64,
    pub monotonicity_violation: f64,
    pub sup_norm: f64,
    pub converged: bool,
}

impl PeriodicSolveResult {
    pub fn summary(&self) -> PicardSummary {
        PicardSummary {
            iterations: self.iterations,
            residual: self.residual,
            positivity_violation: self.positivity_violation,
            monotonicity_violation: self.monotonicity_violation,
            sup_norm: self.solution.sup_norm(),
            converged: self.converged,
        }
    }
}

/// Picard iteration `u <- P(F(u))` from `u = 0`.
///
/// Stops once `||u^{k+1} - u^k||_sup <= tol` and the fixed-point residual of
/// the current iterate is also within `tol`. Reaching `max_iter` or the
/// divergence bound yields `converged = false`.
pub fn picard_solve(
    gen: &Generator,
    f: &NonlinearitySpec,
    omega: f64,
    steps: usize,
    opts: PicardOptions,
) -> Result<PeriodicSolveResult> {
    if f.dimension() != gen.dimension() {
        return Err(Error::Structural(format!(
            "nonlinearity dimension {} does not match generator dimension {}",
            f.dimension(),
            gen.dimension()
        )));
    }
    let solver = PeriodicSolver::new(gen, omega, steps)?;
    let delay = DelayRead::new(f.delay_tau, solver.dt(), opts.interpolate_delay)?;
    let q = |u: &PeriodicTrajectory| -> Result<PeriodicTrajectory> {
        let forcing = nemytskii_values(f, u, delay)?;
        PeriodicTrajectory::new(omega, solver.apply(&forcing)).map_err(|_| Error::Divergence {
            last_finite_time: omega,
        })
    };

    let mut u = PeriodicTrajectory::zeros(gen.dimension(), omega, steps)?;
    let mut positivity_violation: f64 = 0.0;
    let mut monotonicity_violation: f64 = 0.0;
    let mut increments = Vec::new();
    let mut next = match q(&u) {
        Ok(v) => v,
        Err(Error::Divergence { .. }) => return Ok(diverged(u, 0, increments, 0.0, 0.0)),
        Err(e) => return Err(e),
    };
    let mut iterations = 0;
    loop {
        iterations += 1;
        let diff = &next.values - &u.values;
        let inc = diff.amax();
        increments.push(inc);
        monotonicity_violation = monotonicity_violation.min(diff.min());
        positivity_violation = positivity_violation.min(next.min_entry());
        u = next;
        if !(u.sup_norm() <= PICARD_DIVERGENCE_BOUND) {
            return Ok(diverged(
                u,
                iterations,
                increments,
                positivity_violation,
                monotonicity_violation,
            ));
        }
        // residual of u equals the next increment
        next = match q(&u) {
            Ok(v) => v,
            Err(Error::Divergence { .. }) => {
                return Ok(diverged(
                    u,
                    iterations,
                    increments,
                    positivity_violation,
                    monotonicity_violation,
                ))
            }
            Err(e) => return Err(e),
        };
        let residual = (&next.values - &u.values).amax();
        if (inc <= opts.tol && residual <= opts.tol) || iterations >= opts.max_iter {
            let converged = residual <= opts.tol && positivity_violation >= -1e-10;
            return Ok(PeriodicSolveResult {
                solution: u,
                iterations,
                residual,
                positivity_violation,
                monotonicity_violation,
                increments,
                converged,
            });
        }
    }
}

fn diverged(
    u: PeriodicTrajectory,
    iterations: usize,
    increments: Vec<f64>,
    positivity_violation: f64,
    monotonicity_violation: f64,
) -> PeriodicSolveResult {
    PeriodicSolveResult {
        solution: u,
        iterations,
        residual: f64::INFINITY,
        positivity_violation,
        monotonicity_violation,
        increments,
        converged: false,
    }
}
