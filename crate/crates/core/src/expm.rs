//! Matrix exponential by scaling and squaring with diagonal Padé approximants.
//!
//! Degree selection and the backward-error thresholds follow Higham, "The
//! Scaling and Squaring Method for the Matrix Exponential Revisited" (2005):
//! the lowest degree in {3, 5, 7, 9, 13} whose threshold bounds the 1-norm is
//! used, otherwise the matrix is scaled by `2^-s` to fit degree 13.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::solve;

const THETA: [(usize, f64); 5] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
    (13, 5.371920351148152e0),
];

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
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
const B13: [f64; 14] = [
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

/// Largest number of squarings accepted before reporting overflow.
const MAX_SQUARINGS: i32 = 1000;

/// Maximum absolute column sum.
pub fn one_norm(a: &Array2<C64>) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn scaled(m: &Array2<C64>, b: f64) -> Array2<C64> {
    m.mapv(|z| z * b)
}

fn add_identity(m: &mut Array2<C64>, b: f64) {
    for i in 0..m.nrows() {
        m[[i, i]] += b;
    }
}

/// Numerator/denominator pieces `(U, V)` of the low-degree approximants.
fn pade_low(a: &Array2<C64>, b: &[f64]) -> (Array2<C64>, Array2<C64>) {
    let n = a.nrows();
    let a2 = a.dot(a);
    let mut powers = vec![Array2::<C64>::eye(n), a2.clone()];
    while powers.len() * 2 < b.len() {
        let next = powers.last().unwrap().dot(&a2);
        powers.push(next);
    }
    let mut u = Array2::<C64>::zeros((n, n));
    let mut v = Array2::<C64>::zeros((n, n));
    for (k, p) in powers.iter().enumerate() {
        u = u + scaled(p, b[2 * k + 1]);
        v = v + scaled(p, b[2 * k]);
    }
    (a.dot(&u), v)
}

fn pade13(a: &Array2<C64>) -> (Array2<C64>, Array2<C64>) {
    let b = &B13;
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);

    let inner_u = scaled(&a6, b[13]) + scaled(&a4, b[11]) + scaled(&a2, b[9]);
    let mut u = a6.dot(&inner_u) + scaled(&a6, b[7]) + scaled(&a4, b[5]) + scaled(&a2, b[3]);
    add_identity(&mut u, b[1]);
    let u = a.dot(&u);

    let inner_v = scaled(&a6, b[12]) + scaled(&a4, b[10]) + scaled(&a2, b[8]);
    let mut v = a6.dot(&inner_v) + scaled(&a6, b[6]) + scaled(&a4, b[4]) + scaled(&a2, b[2]);
    add_identity(&mut v, b[0]);
    (u, v)
}

/// Computes `exp(a)` for a square complex matrix.
///
/// `exp(0)` is returned as the exact identity. Non-finite input, a norm that
/// would need more than a thousand squarings, or a non-finite result is
/// reported as [`Error::Overflow`].
pub fn matrix_exponential(a: &Array2<C64>) -> Result<Array2<C64>> {
    let (n, c) = a.dim();
    if n != c {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: c,
        });
    }
    let norm = one_norm(a);
    if !norm.is_finite() || a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Overflow { norm });
    }
    if norm == 0.0 {
        return Ok(Array2::eye(n));
    }

    let (u, v, squarings) = match THETA.iter().find(|(_, theta)| norm <= *theta) {
        Some((3, _)) => {
            let (u, v) = pade_low(a, &B3);
            (u, v, 0)
        }
        Some((5, _)) => {
            let (u, v) = pade_low(a, &B5);
            (u, v, 0)
        }
        Some((7, _)) => {
            let (u, v) = pade_low(a, &B7);
            (u, v, 0)
        }
        Some((9, _)) => {
            let (u, v) = pade_low(a, &B9);
            (u, v, 0)
        }
        _ => {
            let s = (norm / THETA[4].1).log2().ceil().max(0.0) as i32;
            if s > MAX_SQUARINGS {
                return Err(Error::Overflow { norm });
            }
            let (u, v) = pade13(&scaled(a, 2f64.powi(-s)));
            (u, v, s)
        }
    };

    let mut result = solve(&(&v - &u), &(&v + &u))?;
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    if result.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Overflow { norm });
    }
    Ok(result)
}
