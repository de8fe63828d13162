//! Delay initial value problem `u' + A u = F(t, u(t), u(t - tau))`, `u = phi`
//! on `[-tau, 0]`, solved in mild form by an exponential method of steps.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::nonlinearity::{NonlinearitySpec, CONE_TOLERANCE};
use crate::operators::{semigroup_apply, Generator, StepOperators};
use crate::periodic::PeriodicTrajectory;

/// States beyond this sup-norm count as blow-up.
pub const DIVERGENCE_BOUND: f64 = 1e12;

const CORRECTOR_MAX_ITER: usize = 50;

/// Initial history on the uniform grid `-tau = s_0 < ... < s_steps = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySegment {
    tau: f64,
    values: Vec<DVector<f64>>,
}

impl HistorySegment {
    pub fn new(tau: f64, values: Vec<DVector<f64>>) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::validation("tau", format!("must be > 0, got {tau}")));
        }
        if values.len() < 2 {
            return Err(Error::Structural("history needs at least two samples".into()));
        }
        let n = values[0].len();
        if n == 0 || values.iter().any(|v| v.len() != n) {
            return Err(Error::Structural(
                "history samples must share a nonzero dimension".into(),
            ));
        }
        for v in &values {
            if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !(**x >= -CONE_TOLERANCE)) {
                return Err(Error::ConeViolation { index, value });
            }
        }
        Ok(HistorySegment { tau, values })
    }

    pub fn constant(tau: f64, steps: usize, value: DVector<f64>) -> Result<Self> {
        Self::new(tau, vec![value; steps + 1])
    }

    /// Samples `f(s)` for `s` on the grid over `[-tau, 0]`.
    pub fn from_fn(tau: f64, steps: usize, f: impl Fn(f64) -> DVector<f64>) -> Result<Self> {
        let ds = tau / steps as f64;
        Self::new(tau, (0..=steps).map(|i| f(-tau + i as f64 * ds)).collect())
    }

    /// Restriction of a periodic trajectory to `[-tau, 0]` on its own grid.
    pub fn from_periodic(orbit: &PeriodicTrajectory, tau: f64) -> Result<Self> {
        let ratio = tau / orbit.dt();
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio {
            return Err(Error::Configuration(format!(
                "tau = {tau} is not a multiple of the orbit step {}",
                orbit.dt()
            )));
        }
        let steps = steps as i64;
        Self::new(tau, (-steps..=0).map(|j| orbit.at_index(j)).collect())
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.tau / self.steps() as f64
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    /// `max_s ||phi(s)||_sup`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }
}

/// Solution samples `u(t_start + j dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t_start: f64,
    pub dt: f64,
    pub values: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t_start + j as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.values.len() - 1)
    }
}

fn check_alignment(f: &NonlinearitySpec, history: &HistorySegment, dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("dt must be > 0, got {dt}")));
    }
    if (f.delay_tau - history.tau).abs() > 1e-12 * f.delay_tau {
        return Err(Error::Configuration(format!(
            "history covers tau = {} but the nonlinearity delay is {}",
            history.tau, f.delay_tau
        )));
    }
    let ratio = history.tau / dt;
    if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio.round() < 1.0 {
        return Err(Error::Configuration(format!(
            "tau / dt = {ratio} is not an integer (tau = {}, dt = {dt})",
            history.tau
        )));
    }
    if (history.dt() - dt).abs() > 1e-9 * dt {
        return Err(Error::Configuration(format!(
            "history spacing {} differs from dt = {dt}",
            history.dt()
        )));
    }
    if f.dimension() != history.dim() {
        return Err(Error::Structural(format!(
            "history dimension {} does not match nonlinearity dimension {}",
            history.dim(),
            f.dimension()
        )));
    }
    Ok(())
}

fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::Domain(format!("t_end must be > 0, got {t_end}")));
    }
    Ok(((t_end / dt).round() as usize).max(1))
}

/// Advances the mild solution on `[0, t_end]` with step `dt`.
///
/// Each step is `u_{j+1} = T(dt) u_j + left F_j + right F_{j+1}`. The
/// implicit endpoint value is found by an exponential-Euler predictor and
/// trapezoid corrections repeated to convergence; delayed arguments are
/// read from stored grid values.
pub fn solve_ivp(
    gen: &Generator,
    f: &NonlinearitySpec,
    history: &HistorySegment,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    check_alignment(f, history, dt)?;
    if gen.dimension() != f.dimension() {
        return Err(Error::Structural(format!(
            "generator dimension {} does not match nonlinearity dimension {}",
            gen.dimension(),
            f.dimension()
        )));
    }
    let steps = step_count(t_end, dt)?;
    let ops = StepOperators::new(gen, dt)?;
    let shift = history.steps();
    let n = gen.dimension();

    // all[i] = u(t_{i - shift})
    let mut all: Vec<DVector<f64>> = Vec::with_capacity(shift + steps + 1);
    all.extend(history.values.iter().cloned());

    let mut f_now = DVector::zeros(n);
    f.eval_into(0.0, all[shift].as_slice(), all[0].as_slice(), f_now.as_mut_slice())?;
    let mut f_next = DVector::zeros(n);
    let mut base = DVector::zeros(n);
    let mut cand = DVector::zeros(n);
    let mut prev = DVector::zeros(n);

    for j in 0..steps {
        let t_next = (j + 1) as f64 * dt;
        let u_now = &all[shift + j];
        // base = T(dt) u_j + left F_j
        base.gemv(1.0, &ops.propagator, u_now, 0.0);
        base.gemv(1.0, &ops.left, &f_now, 1.0);
        // predictor: T(dt) u_j + euler F_j
        cand.gemv(1.0, &ops.propagator, u_now, 0.0);
        cand.gemv(1.0, &ops.euler, &f_now, 1.0);

        let delayed = all[j + 1].clone();
        for _ in 0..CORRECTOR_MAX_ITER {
            f.eval_into(t_next, cand.as_slice(), delayed.as_slice(), f_next.as_mut_slice())
                .map_err(|e| match e {
                    Error::ConeViolation { .. } if !cand.iter().all(|v| v.is_finite()) => Error::Divergence {
                        last_finite_time: j as f64 * dt,
                    },
                    other => other,
                })?;
            prev.copy_from(&cand);
            cand.copy_from(&base);
            cand.gemv(1.0, &ops.right, &f_next, 1.0);
            let change = (&cand - &prev).amax();
            if !(change > 1e-15 * cand.amax().max(1.0)) {
                break;
            }
        }
        if !cand.iter().all(|v| v.is_finite()) || cand.amax() > DIVERGENCE_BOUND {
            return Err(Error::Divergence {
                last_finite_time: j as f64 * dt,
            });
        }
        all.push(cand.clone());
        std::mem::swap(&mut f_now, &mut f_next);
    }

    Ok(Trajectory {
        t_start: 0.0,
        dt,
        values: all.split_off(shift),
    })
}

/// A-posteriori check of the mild-solution identity
/// `u(t) = T(t) u(0) + int_0^t T(t - s) F(s, u(s), u(s - tau)) ds`.
///
/// The convolution is evaluated on a grid four times finer than the
/// trajectory, with states linearly interpolated between stored samples.
/// Returns the largest sup-norm defect over `check_times`.
pub fn mild_residual(
    gen: &Generator,
    f: &NonlinearitySpec,
    traj: &Trajectory,
    history: &HistorySegment,
    check_times: &[f64],
) -> Result<f64> {
    const REFINE: usize = 4;
    check_alignment(f, history, traj.dt)?;
    let shift = history.steps();
    let mut indices = Vec::with_capacity(check_times.len());
    for &t in check_times {
        let r = (t - traj.t_start) / traj.dt;
        let j = r.round();
        if j < 0.0 || j as usize >= traj.len() || (r - j).abs() > 1e-9 * r.max(1.0) {
            return Err(Error::Domain(format!(
                "check time {t} is not a grid time inside [{}, {}]",
                traj.t_start,
                traj.t_end()
            )));
        }
        indices.push(j as usize);
    }
    let Some(&last) = indices.iter().max() else {
        return Ok(0.0);
    };

    let all: Vec<&DVector<f64>> = history.values.iter().chain(traj.values.iter().skip(1)).collect();
    let n = gen.dimension();
    let h = traj.dt / REFINE as f64;
    let ops = StepOperators::new(gen, h)?;
    // state at refined index i counted from the start of `all`
    let interp = |i: usize, out: &mut DVector<f64>| {
        let (q, r) = (i / REFINE, i % REFINE);
        if r == 0 {
            out.copy_from(all[q]);
        } else {
            let w = r as f64 / REFINE as f64;
            out.copy_from(all[q]);
            *out *= 1.0 - w;
            out.axpy(w, all[q + 1], 1.0);
        }
    };
    let eval = |i: usize, x: &mut DVector<f64>, y: &mut DVector<f64>, out: &mut DVector<f64>| -> Result<()> {
        let s = i as f64 * h;
        interp(i + shift * REFINE, x);
        interp(i, y);
        f.eval_into(traj.t_start + s, x.as_slice(), y.as_slice(), out.as_mut_slice())
    };

    let (mut x, mut y) = (DVector::zeros(n), DVector::zeros(n));
    let mut g_left = DVector::zeros(n);
    let mut g_right = DVector::zeros(n);
    let mut acc = DVector::zeros(n);
    let mut tmp = DVector::zeros(n);
    let mut conv_at = vec![DVector::zeros(n); last + 1];
    eval(0, &mut x, &mut y, &mut g_left)?;
    for i in 0..last * REFINE {
        eval(i + 1, &mut x, &mut y, &mut g_right)?;
        tmp.gemv(1.0, &ops.propagator, &acc, 0.0);
        tmp.gemv(1.0, &ops.left, &g_left, 1.0);
        tmp.gemv(1.0, &ops.right, &g_right, 1.0);
        std::mem::swap(&mut acc, &mut tmp);
        std::mem::swap(&mut g_left, &mut g_right);
        if (i + 1) % REFINE == 0 {
            conv_at[(i + 1) / REFINE].copy_from(&acc);
        }
    }

    let u0 = &traj.values[0];
    let mut worst: f64 = 0.0;
    for &j in &indices {
        let t = j as f64 * traj.dt;
        let free = semigroup_apply(gen, t, u0)?;
        let defect = &traj.values[j] - free - &conv_at[j];
        worst = worst.max(defect.amax());
    }
    Ok(worst)
}
