//! Dense matrix exponential by scaling and squaring with diagonal Padé
//! approximants of degree 7, 9 or 13.
//!
//! Degree selection follows the 1-norm thresholds of Higham's 2005 analysis,
//! restricted to degrees of at least 7 so that the backward error bound is
//! always below unit roundoff for the chosen scaling.

use nalgebra::DMatrix;

const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

const PADE_7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

pub(crate) fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(m)` for a square matrix.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "expm needs a square matrix");
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let ident = DMatrix::<f64>::identity(n, n);
    let nrm = norm1(m);
    if nrm == 0.0 {
        return ident;
    }

    if nrm <= THETA_7 {
        return solve_pade(&odd_even_low(m, &PADE_7, &ident));
    }
    if nrm <= THETA_9 {
        return solve_pade(&odd_even_low(m, &PADE_9, &ident));
    }

    let s = ((nrm / THETA_13).log2().ceil()).max(0.0) as i32;
    let scaled = m * 2f64.powi(-s);
    let mut r = solve_pade(&odd_even_13(&scaled, &ident));
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

// (U, V) for low degree approximants, where p(x) = V + U and q(x) = V - U.
fn odd_even_low(a: &DMatrix<f64>, b: &[f64], ident: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let a2 = a * a;
    let m = b.len() - 1;
    // powers of a^2: I, a^2, a^4, ...
    let mut pow = ident.clone();
    let mut u_inner = DMatrix::zeros(a.nrows(), a.ncols());
    let mut v = DMatrix::zeros(a.nrows(), a.ncols());
    let mut k = 0;
    while 2 * k <= m {
        if 2 * k < m {
            u_inner += &pow * b[2 * k + 1];
        }
        v += &pow * b[2 * k];
        pow = &pow * &a2;
        k += 1;
    }
    (a * u_inner, v)
}

fn odd_even_13(a: &DMatrix<f64>, ident: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = &PADE_13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_hi = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u_lo = &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + ident * b[1];
    let u = a * (&a6 * u_hi + u_lo);
    let v_hi = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * v_hi + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + ident * b[0];
    (u, v)
}

fn solve_pade((u, v): &(DMatrix<f64>, DMatrix<f64>)) -> DMatrix<f64> {
    let q = v - u;
    let p = v + u;
    q.lu()
        .solve(&p)
        .expect("Pade denominator is nonsingular for scaled arguments")
}
