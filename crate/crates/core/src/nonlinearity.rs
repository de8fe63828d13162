//! Catalog of order-preserving nonlinearities `F(t, x, y)`.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};

/// Entries below this are treated as cone violations rather than roundoff.
pub const CONE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NonlinearityKind {
    /// `C1 x + C2 y + h0(t)`.
    Affine,
    /// `C1 x/(1+x) + C2 y/(1+y) + h0(t)`, componentwise.
    Saturating,
}

/// Nonnegative periodic forcing `h0(t) = (a + b sin(2 pi t / omega + phase)) * profile`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Forcing {
    pub a: f64,
    pub b: f64,
    pub phase: f64,
    pub omega: f64,
    #[serde(skip)]
    pub profile: DVector<f64>,
}

impl Forcing {
    pub fn new(a: f64, b: f64, phase: f64, omega: f64, profile: DVector<f64>) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && phase.is_finite()) {
            return Err(Error::validation("forcing", "coefficients must be finite"));
        }
        if a < b.abs() {
            return Err(Error::validation(
                "forcing.a",
                format!("need a >= |b| for a nonnegative forcing, got a = {a}, b = {b}"),
            ));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::validation("omega", format!("must be > 0, got {omega}")));
        }
        if let Some((i, &v)) = profile
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(Error::validation(
                "forcing.profile",
                format!("entry {i} = {v} must be finite and >= 0"),
            ));
        }
        Ok(Forcing {
            a,
            b,
            phase,
            omega,
            profile,
        })
    }

    /// `h0 == c` with a flat profile.
    pub fn constant(c: f64, omega: f64, dim: usize) -> Result<Self> {
        Self::new(c, 0.0, 0.0, omega, DVector::from_element(dim, 1.0))
    }

    /// Scalar time profile `a + b sin(2 pi t / omega + phase)`.
    pub fn amplitude(&self, t: f64) -> f64 {
        // reduce t modulo omega first so t and t + omega give identical bits
        let s = t.rem_euclid(self.omega);
        self.a + self.b * (2.0 * PI * s / self.omega + self.phase).sin()
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        &self.profile * self.amplitude(t).max(0.0)
    }
}

/// A catalog nonlinearity together with its order constants and delay.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonlinearitySpec {
    pub kind: NonlinearityKind,
    pub c1: f64,
    pub c2: f64,
    pub forcing: Forcing,
    pub delay_tau: f64,
}

impl NonlinearitySpec {
    pub fn new(kind: NonlinearityKind, c1: f64, c2: f64, forcing: Forcing, delay_tau: f64) -> Result<Self> {
        for (name, v) in [("C1", c1), ("C2", c2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::validation(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(delay_tau > 0.0) || !delay_tau.is_finite() {
            return Err(Error::validation("tau", format!("must be > 0, got {delay_tau}")));
        }
        Ok(NonlinearitySpec {
            kind,
            c1,
            c2,
            forcing,
            delay_tau,
        })
    }

    pub fn affine(c1: f64, c2: f64, forcing: Forcing, delay_tau: f64) -> Result<Self> {
        Self::new(NonlinearityKind::Affine, c1, c2, forcing, delay_tau)
    }

    pub fn saturating(c1: f64, c2: f64, forcing: Forcing, delay_tau: f64) -> Result<Self> {
        Self::new(NonlinearityKind::Saturating, c1, c2, forcing, delay_tau)
    }

    pub fn dimension(&self) -> usize {
        self.forcing.profile.len()
    }

    pub fn omega(&self) -> f64 {
        self.forcing.omega
    }

    /// `F(t, x, y)`, with `x`, `y` required to lie in the cone up to roundoff.
    pub fn eval(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dimension();
        if x.len() != n || y.len() != n {
            return Err(Error::Structural(format!(
                "state length {} / {} does not match nonlinearity dimension {n}",
                x.len(),
                y.len()
            )));
        }
        let mut out = DVector::zeros(n);
        self.eval_into(t, x.as_slice(), y.as_slice(), out.as_mut_slice())?;
        Ok(out)
    }

    pub(crate) fn eval_into(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) -> Result<()> {
        let amp = self.forcing.amplitude(t).max(0.0);
        for i in 0..out.len() {
            let xi = cone_entry(x[i], i)?;
            let yi = cone_entry(y[i], i)?;
            let h = amp * self.forcing.profile[i];
            out[i] = match self.kind {
                NonlinearityKind::Affine => self.c1 * xi + self.c2 * yi + h,
                NonlinearityKind::Saturating => self.c1 * xi / (1.0 + xi) + self.c2 * yi / (1.0 + yi) + h,
            };
        }
        Ok(())
    }
}

fn cone_entry(v: f64, index: usize) -> Result<f64> {
    if v < -CONE_TOLERANCE || v.is_nan() {
        return Err(Error::ConeViolation { index, value: v });
    }
    Ok(v.max(0.0))
}

/// Evaluates the catalog formula; see [`NonlinearitySpec::eval`].
pub fn nonlinearity_eval(f: &NonlinearitySpec, t: f64, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    f.eval(t, x, y)
}
