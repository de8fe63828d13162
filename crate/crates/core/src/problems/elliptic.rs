use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::Generator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Dirichlet,
    /// `b0 u + du/dn = 0` with the outward normal derivative.
    Robin {
        b0: f64,
    },
}

/// `-diffusion u'' + a0(x) u` on `(0, L)`.
///
/// Dirichlet grids use `n` interior points with `h = L / (n + 1)`. Robin
/// grids carry the `n` nodes `x_i = i h`, `h = L / (n - 1)`, including both
/// endpoints, and close the boundary rows with a centered ghost point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipticSpec1D {
    pub interior_points: usize,
    pub length: f64,
    pub diffusion: f64,
    pub potential_a0: Vec<f64>,
    pub boundary: Boundary,
}

impl EllipticSpec1D {
    pub fn new(n: usize, length: f64, diffusion: f64, potential_a0: Vec<f64>, boundary: Boundary) -> Result<Self> {
        let spec = EllipticSpec1D {
            interior_points: n,
            length,
            diffusion,
            potential_a0,
            boundary,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Constant potential `a0`.
    pub fn uniform(n: usize, length: f64, diffusion: f64, a0: f64, boundary: Boundary) -> Result<Self> {
        Self::new(n, length, diffusion, vec![a0; n], boundary)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.interior_points;
        if n == 0 {
            return Err(Error::validation("elliptic.n", "must be >= 1"));
        }
        if matches!(self.boundary, Boundary::Robin { .. }) && n < 2 {
            return Err(Error::validation("elliptic.n", "Robin grids need at least 2 nodes"));
        }
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(Error::validation(
                "elliptic.L",
                format!("must be > 0, got {}", self.length),
            ));
        }
        if !(self.diffusion > 0.0) || !self.diffusion.is_finite() {
            return Err(Error::validation(
                "elliptic.diffusion",
                format!("must be > 0, got {}", self.diffusion),
            ));
        }
        if self.potential_a0.len() != n {
            return Err(Error::validation(
                "elliptic.a0",
                format!("expected {n} samples, got {}", self.potential_a0.len()),
            ));
        }
        if let Some(v) = self.potential_a0.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::validation(
                "elliptic.a0",
                format!("must be finite and >= 0, got {v}"),
            ));
        }
        if let Boundary::Robin { b0 } = self.boundary {
            if !(b0 >= 0.0) || !b0.is_finite() {
                return Err(Error::validation(
                    "elliptic.boundary",
                    format!("Robin b0 must be >= 0, got {b0}"),
                ));
            }
            if b0 == 0.0 && self.potential_a0.iter().all(|&v| v == 0.0) {
                return Err(Error::validation(
                    "elliptic.boundary",
                    "Robin boundary with b0 = 0 needs a nonzero potential a0 (otherwise lambda1 = 0)",
                ));
            }
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        match self.boundary {
            Boundary::Dirichlet => self.length / (self.interior_points as f64 + 1.0),
            Boundary::Robin { .. } => self.length / (self.interior_points as f64 - 1.0),
        }
    }
}

/// Finite-difference generator `diffusion * tridiag(-1, 2, -1) / h^2 + diag(a0)`.
pub fn discretize_laplacian_1d(spec: &EllipticSpec1D) -> Result<Generator> {
    spec.validate()?;
    let n = spec.interior_points;
    let h = spec.step();
    let k = spec.diffusion / (h * h);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = 2.0 * k + spec.potential_a0[i];
        if i > 0 {
            m[(i, i - 1)] = -k;
        }
        if i + 1 < n {
            m[(i, i + 1)] = -k;
        }
    }
    if let Boundary::Robin { b0 } = spec.boundary {
        // ghost point u_{-1} = u_1 - 2 h b0 u_0 (and mirrored at x = L)
        m[(0, 0)] += 2.0 * h * b0 * k;
        m[(0, 1)] = -2.0 * k;
        m[(n - 1, n - 1)] += 2.0 * h * b0 * k;
        m[(n - 1, n - 2)] = -2.0 * k;
    }
    Generator::new(m)
}

/// Positive eigenvector for `lambda1`, normalized to max 1, by inverse
/// iteration from the all-ones vector. Falls back to all ones when `A` is
/// singular or the iteration leaves the cone.
pub fn first_eigenfunction(gen: &Generator) -> DVector<f64> {
    let n = gen.dimension();
    let ones = DVector::from_element(n, 1.0);
    let lu = gen.matrix().clone().lu();
    let mut x = ones.clone();
    for _ in 0..500 {
        let Some(y) = lu.solve(&x) else {
            return ones;
        };
        let scale = y.amax();
        if !(scale > 0.0) || !scale.is_finite() {
            return ones;
        }
        // keep the sign that makes the largest entry positive
        let sign = if y.max() >= -y.min() { 1.0 } else { -1.0 };
        let y = y * (sign / scale);
        let change = (&y - &x).amax();
        x = y;
        if change < 1e-14 {
            break;
        }
    }
    if x.min() < -1e-12 {
        return ones;
    }
    x.map(|v| v.max(0.0))
}
