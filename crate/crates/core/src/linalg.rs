//! Dense complex matrix helpers shared by the rest of the crate.
//!
//! Everything here works on `faer::Mat<c64>`; the domain newtypes in the other
//! modules wrap these matrices and enforce their invariants.

use faer::{Col, Mat, Side};

use crate::error::{FlabError, Result};

pub use faer::c64;

pub(crate) const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: c64 = c64 { re: 1.0, im: 0.0 };

/// Single-qubit Pauli axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_char(c: char) -> Option<Axis> {
        match c.to_ascii_uppercase() {
            'X' => Some(Axis::X),
            'Y' => Some(Axis::Y),
            'Z' => Some(Axis::Z),
            _ => None,
        }
    }

    /// Image of the local basis state `bit` and the amplitude picked up.
    #[inline]
    pub(crate) fn act(self, bit: usize) -> (usize, c64) {
        match (self, bit) {
            (Axis::X, b) => (b ^ 1, ONE),
            (Axis::Y, 0) => (1, c64::new(0.0, 1.0)),
            (Axis::Y, _) => (0, c64::new(0.0, -1.0)),
            (Axis::Z, 0) => (0, ONE),
            (Axis::Z, _) => (1, c64::new(-1.0, 0.0)),
        }
    }

    /// The 2x2 Pauli matrix.
    pub fn matrix(self) -> Mat<c64> {
        Mat::from_fn(2, 2, |r, c| {
            let (img, amp) = self.act(c);
            if img == r {
                amp
            } else {
                ZERO
            }
        })
    }
}

/// Bit position of 1-based `site` in a chain of `n` qubits. Site 1 is the
/// most significant bit of the computational-basis index.
#[inline]
pub fn site_shift(site: usize, n: usize) -> usize {
    n - site
}

pub fn identity(n: usize) -> Mat<c64> {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

pub fn max_abs_diff(a: &Mat<c64>, b: &Mat<c64>) -> f64 {
    assert_eq!(a.nrows(), b.nrows());
    assert_eq!(a.ncols(), b.ncols());
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    worst
}

pub fn max_abs_diff_col(a: &Col<c64>, b: &Col<c64>) -> f64 {
    assert_eq!(a.nrows(), b.nrows());
    (0..a.nrows())
        .map(|i| (a[i] - b[i]).norm())
        .fold(0.0, f64::max)
}

/// Largest entry of `M - M^dagger`.
pub fn hermitian_deviation(m: &Mat<c64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Largest entry of `U^dagger U - I`.
pub fn unitary_deviation(u: &Mat<c64>) -> f64 {
    let g = u.adjoint() * u;
    max_abs_diff(&g, &identity(u.nrows()))
}

pub fn kron(a: &Mat<c64>, b: &Mat<c64>) -> Mat<c64> {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

pub fn trace(m: &Mat<c64>) -> c64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

pub fn norm_col(v: &Col<c64>) -> f64 {
    (0..v.nrows()).map(|i| v[i].norm_sqr()).sum::<f64>().sqrt()
}

pub fn inner(a: &Col<c64>, b: &Col<c64>) -> c64 {
    (0..a.nrows()).map(|i| a[i].conj() * b[i]).sum()
}

/// Operator 2-norm (largest singular value).
pub fn spectral_norm(m: &Mat<c64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let s = m
        .singular_values()
        .map_err(|e| FlabError::Eigen(format!("{e:?}")))?;
    Ok(s.first().copied().unwrap_or(0.0))
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: &Mat<c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| FlabError::Eigen(format!("{e:?}")))?;
    let values = (0..m.nrows()).map(|i| evd.S()[i].re).collect();
    Ok((values, evd.U().to_owned()))
}

pub fn hermitian_eigenvalues(m: &Mat<c64>) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| FlabError::Eigen(format!("{e:?}")))
}

/// `V diag(f(e)) V^dagger` for an eigendecomposition `(e, V)`.
pub fn spectral_function(values: &[f64], vectors: &Mat<c64>, f: impl Fn(f64) -> c64) -> Mat<c64> {
    let n = vectors.nrows();
    let phases: Vec<c64> = values.iter().map(|&e| f(e)).collect();
    let scaled = Mat::from_fn(n, values.len(), |i, j| vectors[(i, j)] * phases[j]);
    &scaled * vectors.adjoint()
}

/// Symmetric (Loewdin) re-orthonormalization to first order, valid when the
/// columns are already orthonormal up to small errors.
pub(crate) fn loewdin_polish(b: &Mat<c64>) -> Mat<c64> {
    let n = b.ncols();
    let g = b.adjoint() * b;
    let correction = Mat::from_fn(n, n, |i, j| {
        let delta = if i == j { g[(i, j)] - ONE } else { g[(i, j)] };
        if i == j {
            ONE - delta * 0.5
        } else {
            -delta * 0.5
        }
    });
    b * &correction
}

/// Wrap an angle into `[-pi, pi)`.
#[inline]
pub fn wrap_phase(theta: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut t = (theta + PI).rem_euclid(TAU) - PI;
    if t >= PI {
        t -= TAU;
    }
    t
}

/// Distance between two angles on the circle, in `[0, pi]`.
#[inline]
pub fn circular_distance(a: f64, b: f64) -> f64 {
    wrap_phase(a - b).abs()
}
