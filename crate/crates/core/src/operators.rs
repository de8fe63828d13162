//! Generators `A`, the semigroup `T(t) = exp(-A t)`, its integral, and the
//! spectral quantities `lambda1` and `nu0`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expm::expm;

const EIGEN_MAX_ITER: usize = 10_000;

/// A finite-dimensional operator `A` whose negative generates `T(t)`.
#[derive(Debug, Clone)]
pub struct Generator {
    matrix: DMatrix<f64>,
    self_adjoint: bool,
    metzler_ok: bool,
    eigen: OnceLock<Option<SymmetricEigen<f64, nalgebra::Dyn>>>,
}

impl Generator {
    /// Builds a generator from a dense matrix, computing the sign-pattern
    /// and symmetry flags. The matrix is stored as given.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let (r, c) = matrix.shape();
        if r != c {
            return Err(Error::Structural(format!("generator must be square, got {r}x{c}")));
        }
        if r == 0 {
            return Err(Error::Structural("generator must have dimension >= 1".into()));
        }
        if let Some((idx, v)) = matrix.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::validation(
                "matrix",
                format!("entry ({}, {}) is not finite ({v})", idx % r, idx / r),
            ));
        }
        let metzler_ok = (0..r).all(|i| (0..r).all(|j| i == j || matrix[(i, j)] <= 0.0));
        let max = matrix.amax();
        let asym = (&matrix - matrix.transpose()).amax();
        let self_adjoint = asym <= 1e-12 * max;
        Ok(Generator {
            matrix,
            self_adjoint,
            metzler_ok,
            eigen: OnceLock::new(),
        })
    }

    /// Builds a generator from row vectors; ragged input is a structural error.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Structural("generator must have dimension >= 1".into()));
        }
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != n) {
            return Err(Error::Structural(format!(
                "row {i} has {} entries, expected {n} for a square matrix",
                row.len()
            )));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    pub fn scalar(lambda: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, lambda))
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn self_adjoint(&self) -> bool {
        self.self_adjoint
    }

    /// All off-diagonal entries are `<= 0`, so `exp(-A t) >= 0` entrywise.
    pub fn metzler_ok(&self) -> bool {
        self.metzler_ok
    }

    fn symmetric_eigen(&self) -> Option<&SymmetricEigen<f64, nalgebra::Dyn>> {
        if !self.self_adjoint {
            return None;
        }
        self.eigen
            .get_or_init(|| {
                let sym = (&self.matrix + self.matrix.transpose()) * 0.5;
                SymmetricEigen::try_new(sym, f64::EPSILON, EIGEN_MAX_ITER)
            })
            .as_ref()
    }

    /// Eigen-decomposition of a self-adjoint generator.
    pub fn eigen_decomposition(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if !self.self_adjoint {
            return Err(Error::Domain(
                "eigen-decomposition path requires a self-adjoint generator".into(),
            ));
        }
        let eig = self.symmetric_eigen().ok_or_else(|| Error::Numerical {
            method: "symmetric eigen-solver".into(),
            iterations: EIGEN_MAX_ITER,
            detail: format!("dimension {}", self.dimension()),
        })?;
        Ok((eig.eigenvalues.clone(), eig.eigenvectors.clone()))
    }

    /// Applies a scalar function of `A` through the eigen-decomposition.
    fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
        let eig = self.symmetric_eigen().ok_or_else(|| Error::Numerical {
            method: "symmetric eigen-solver".into(),
            iterations: EIGEN_MAX_ITER,
            detail: format!("dimension {}", self.dimension()),
        })?;
        let v = &eig.eigenvectors;
        let mut scaled = v.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(eig.eigenvalues[k]);
        }
        Ok(scaled * v.transpose())
    }
}

/// Spectral metadata of a generator.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumInfo {
    /// Eigenvalues sorted by ascending real part, as `(re, im)` pairs.
    #[serde(serialize_with = "serialize_complex")]
    pub eigenvalues: Vec<Complex64>,
    pub lambda1: f64,
    pub nu0: f64,
    pub exp_stable: bool,
}

fn serialize_complex<S: serde::Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

/// Spectrum of `A`, `lambda1 = min Re sigma(A)` and the growth exponent `nu0 = -lambda1`.
pub fn spectrum(gen: &Generator) -> Result<SpectrumInfo> {
    let mut eigenvalues: Vec<Complex64> = if gen.self_adjoint() {
        let (vals, _) = gen.eigen_decomposition()?;
        vals.iter().map(|&v| Complex64::new(v, 0.0)).collect()
    } else {
        let schur =
            Schur::try_new(gen.matrix().clone(), f64::EPSILON, EIGEN_MAX_ITER).ok_or_else(|| Error::Numerical {
                method: "Schur eigen-solver".into(),
                iterations: EIGEN_MAX_ITER,
                detail: format!("dimension {}", gen.dimension()),
            })?;
        schur.complex_eigenvalues().iter().copied().collect()
    };
    eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let lambda1 = eigenvalues[0].re;
    Ok(SpectrumInfo {
        eigenvalues,
        lambda1,
        nu0: -lambda1,
        exp_stable: lambda1 > 0.0,
    })
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// The matrix `T(t) = exp(-A t)`.
pub fn semigroup_matrix(gen: &Generator, t: f64) -> Result<DMatrix<f64>> {
    check_time(t)?;
    let n = gen.dimension();
    if t == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    if gen.self_adjoint() {
        gen.spectral_map(|lam| (-lam * t).exp())
    } else {
        Ok(expm(&(gen.matrix() * -t)))
    }
}

/// `T(t) x`.
pub fn semigroup_apply(gen: &Generator, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(gen, x)?;
    check_time(t)?;
    if t == 0.0 {
        return Ok(x.clone());
    }
    Ok(semigroup_matrix(gen, t)? * x)
}

/// `int_0^t T(s) x ds`, which equals `A^{-1}(I - T(t)) x` for invertible `A`.
pub fn phi1_apply(gen: &Generator, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(gen, x)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("phi1 needs t > 0, got {t}")));
    }
    let (_, w1, _) = phi_matrices(gen, t)?;
    let out = w1 * x;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            method: "phi1".into(),
            iterations: 0,
            detail: "overflow".into(),
        });
    }
    Ok(out)
}

fn check_dim(gen: &Generator, x: &DVector<f64>) -> Result<()> {
    if x.len() != gen.dimension() {
        return Err(Error::Structural(format!(
            "vector has length {}, generator has dimension {}",
            x.len(),
            gen.dimension()
        )));
    }
    Ok(())
}

/// `phi_1(z) = (e^z - 1)/z`, continuous at 0.
pub(crate) fn phi1_scalar(z: f64) -> f64 {
    if z.abs() < 0.5 {
        series(z, 1)
    } else {
        z.exp_m1() / z
    }
}

/// `phi_2(z) = (e^z - 1 - z)/z^2`, continuous at 0.
pub(crate) fn phi2_scalar(z: f64) -> f64 {
    if z.abs() < 0.5 {
        series(z, 2)
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

// sum_{j>=0} z^j / (j + k)!
fn series(z: f64, k: u32) -> f64 {
    let mut denom: f64 = (1..=k).map(f64::from).product();
    let mut term = 1.0 / denom;
    let mut acc = term;
    for j in 1..30u32 {
        denom = f64::from(j + k);
        term *= z / denom;
        acc += term;
        if term.abs() < 1e-18 * acc.abs() {
            break;
        }
    }
    acc
}

/// `(T(t), t*phi1(-A t), t*phi2(-A t))`.
pub(crate) fn phi_matrices(gen: &Generator, t: f64) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = gen.dimension();
    if gen.self_adjoint() {
        let e = gen.spectral_map(|lam| (-lam * t).exp())?;
        let p1 = gen.spectral_map(|lam| t * phi1_scalar(-lam * t))?;
        let p2 = gen.spectral_map(|lam| t * phi2_scalar(-lam * t))?;
        return Ok((e, p1, p2));
    }
    // exp([[X, I, 0], [0, 0, I], [0, 0, 0]]) has top block row [e^X, phi1(X), phi2(X)].
    let mut block = DMatrix::zeros(3 * n, 3 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(gen.matrix() * -t));
    for i in 0..n {
        block[(i, n + i)] = 1.0;
        block[(n + i, 2 * n + i)] = 1.0;
    }
    let ex = expm(&block);
    let e = ex.view((0, 0), (n, n)).into_owned();
    let p1 = ex.view((0, n), (n, n)) * t;
    let p2 = ex.view((0, 2 * n), (n, n)) * t;
    Ok((e, p1, p2))
}

/// One-step exponential-trapezoid operators for a fixed step `dt`.
///
/// For forcing linearly interpolated between `h_j` and `h_{j+1}`,
/// `int_0^dt T(dt - s) h(t_j + s) ds = left * h_j + right * h_{j+1}`.
#[derive(Debug, Clone)]
pub struct StepOperators {
    pub dt: f64,
    /// `T(dt)`.
    pub propagator: DMatrix<f64>,
    /// `dt (phi1 - phi2)(-A dt)`, weight of the left endpoint.
    pub left: DMatrix<f64>,
    /// `dt phi2(-A dt)`, weight of the right endpoint.
    pub right: DMatrix<f64>,
    /// `dt phi1(-A dt)`, the exponential-Euler weight.
    pub euler: DMatrix<f64>,
}

impl StepOperators {
    pub fn new(gen: &Generator, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Domain(format!("step must be > 0, got {dt}")));
        }
        let (propagator, euler, right) = phi_matrices(gen, dt)?;
        let left = &euler - &right;
        Ok(StepOperators {
            dt,
            propagator,
            left,
            right,
            euler,
        })
    }

    pub fn dimension(&self) -> usize {
        self.propagator.nrows()
    }
}

/// Constant `M` in `||T(t)|| <= M e^{nu0 t}`.
///
/// Self-adjoint generators give `M = 1` in the Euclidean norm. Otherwise
/// `max ||T(t)||_inf e^{-nu0 t}` is sampled over `t` in `[0, 10 omega]`.
pub fn growth_constant(gen: &Generator, spec: &SpectrumInfo, omega: f64) -> Result<f64> {
    if gen.self_adjoint() {
        return Ok(1.0);
    }
    const SAMPLES: usize = 400;
    let horizon = 10.0 * omega;
    let step = horizon / SAMPLES as f64;
    let t_step = semigroup_matrix(gen, step)?;
    let mut t_k = DMatrix::identity(gen.dimension(), gen.dimension());
    let mut best: f64 = 1.0;
    for k in 1..=SAMPLES {
        t_k = &t_step * t_k;
        let t = k as f64 * step;
        let inf_norm = t_k
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        best = best.max(inf_norm * (-spec.nu0 * t).exp());
    }
    Ok(best)
}
