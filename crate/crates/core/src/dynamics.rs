//! Time evolution, observables, reduced states and entanglement.

use std::f64::consts::TAU;

use faer::{Col, Mat};

use crate::error::{FlabError, Result};
use crate::floquet::{FloquetSystem, SpectralDecomposition};
use crate::linalg::{
    c64, hermitian_deviation, hermitian_eigenvalues, identity, site_shift, trace, wrap_phase, Axis,
    ZERO,
};
use crate::spin_model::{pauli_string_matrix, HermitianMatrix};
use crate::states::{eigenspace_overlaps, OverlapDecomposition, StateVector};

/// Tolerance for density-matrix invariants and the entropy clamping window.
pub const DENSITY_TOL: f64 = 1e-10;

/// Hermitian observable together with its operator norm.
#[derive(Debug, Clone)]
pub struct Observable {
    matrix: HermitianMatrix,
    norm: f64,
}

impl Observable {
    pub fn new(matrix: HermitianMatrix) -> Result<Self> {
        let norm = hermitian_eigenvalues(matrix.as_mat())?
            .iter()
            .fold(0.0f64, |m, e| m.max(e.abs()));
        Ok(Observable { matrix, norm })
    }

    /// Product of Pauli operators on distinct 1-based sites.
    pub fn pauli_string(n: usize, ops: &[(usize, Axis)]) -> Result<Self> {
        let matrix = pauli_string_matrix(n, ops)?;
        Ok(Observable { matrix, norm: 1.0 })
    }

    /// Rescaled to unit operator norm.
    pub fn normalized(&self) -> Result<Self> {
        if self.norm == 0.0 {
            return Err(FlabError::InvalidArgument(
                "cannot normalize the zero observable".into(),
            ));
        }
        let m = self.matrix.as_mat();
        let scaled = Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] / self.norm);
        Ok(Observable {
            matrix: HermitianMatrix::new(scaled)?,
            norm: 1.0,
        })
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn as_mat(&self) -> &Mat<c64> {
        self.matrix.as_mat()
    }
}

/// Unit-trace positive semidefinite Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Mat<c64>);

impl DensityMatrix {
    pub fn new(m: Mat<c64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(FlabError::ShapeMismatch {
                what: "density matrix",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let deviation = hermitian_deviation(&m);
        if !(deviation <= DENSITY_TOL) {
            return Err(FlabError::NotHermitian { deviation });
        }
        let tr = trace(&m);
        if !((tr.re - 1.0).abs() <= DENSITY_TOL && tr.im.abs() <= DENSITY_TOL) {
            return Err(FlabError::InvalidArgument(format!(
                "density matrix trace {tr} != 1"
            )));
        }
        let min = hermitian_eigenvalues(&m)?.first().copied().unwrap_or(0.0);
        if min < -DENSITY_TOL {
            return Err(FlabError::NegativeEigenvalue(min));
        }
        Ok(DensityMatrix(m))
    }

    pub(crate) fn from_trusted(m: Mat<c64>) -> Self {
        DensityMatrix(m)
    }

    pub fn pure(state: &StateVector) -> Self {
        let v = state.as_col();
        DensityMatrix(Mat::from_fn(v.nrows(), v.nrows(), |i, j| {
            v[i] * v[j].conj()
        }))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let m = identity(dim);
        DensityMatrix(Mat::from_fn(dim, dim, |i, j| m[(i, j)] / dim as f64))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat<c64> {
        &self.0
    }

    pub fn into_inner(self) -> Mat<c64> {
        self.0
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        hermitian_eigenvalues(&self.0)
    }

    /// Entrywise mean; a convex combination of density matrices is one.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a DensityMatrix>) -> Result<DensityMatrix> {
        let mut iter = items.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| FlabError::InvalidArgument("mean of no matrices".into()))?;
        // deviations from the first item, so identical inputs average exactly
        let mut acc = Mat::<c64>::zeros(first.dim(), first.dim());
        let mut count = 1usize;
        for rho in iter {
            if rho.dim() != first.dim() {
                return Err(FlabError::DimensionMismatch {
                    expected: first.dim(),
                    found: rho.dim(),
                });
            }
            acc += &rho.0 - &first.0;
            count += 1;
        }
        let inv = 1.0 / count as f64;
        Ok(DensityMatrix(Mat::from_fn(
            acc.nrows(),
            acc.ncols(),
            |i, j| first.0[(i, j)] + acc[(i, j)] * inv,
        )))
    }
}

/// `sum_j c_j lambda_j^m |j>`.
pub fn stroboscopic_state(
    overlaps: &OverlapDecomposition,
    decomp: &SpectralDecomposition,
    m: u64,
) -> Result<StateVector> {
    let coords = overlaps.coordinates();
    if coords.len() != decomp.dim() {
        return Err(FlabError::DimensionMismatch {
            expected: decomp.dim(),
            found: coords.len(),
        });
    }
    let evolved = evolved_coordinates(coords, decomp, m);
    let b = decomp.basis();
    let mut out = Col::<c64>::zeros(b.nrows());
    for (k, &a) in evolved.iter().enumerate() {
        if a != ZERO {
            for i in 0..b.nrows() {
                out[i] += b[(i, k)] * a;
            }
        }
    }
    Ok(StateVector::from_trusted(out))
}

/// Coordinates multiplied by `lambda^m = exp(-i E m)` with the phase reduced mod 2pi.
pub(crate) fn evolved_coordinates(
    coords: &[c64],
    decomp: &SpectralDecomposition,
    m: u64,
) -> Vec<c64> {
    let phases = decomp.quasienergies();
    let labels = decomp.cluster_assignments();
    coords
        .iter()
        .zip(labels)
        .map(|(&a, &label)| {
            let theta = stroboscopic_phase(phases[label], m);
            a * c64::new(theta.cos(), -theta.sin())
        })
        .collect()
}

/// `E m mod 2pi`, split to keep the product accurate for large `m`.
#[inline]
pub(crate) fn stroboscopic_phase(e: f64, m: u64) -> f64 {
    let hi = (m >> 20) as f64 * (1u64 << 20) as f64;
    let lo = (m & ((1 << 20) - 1)) as f64;
    wrap_phase((e * hi).rem_euclid(TAU) + e * lo)
}

/// `U(0, t) |psi0>`: eigenphases for whole periods, exact piece exponentials inside a period.
pub fn state_at(
    state0: &StateVector,
    system: &FloquetSystem,
    decomp: &SpectralDecomposition,
    t: f64,
) -> Result<StateVector> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(FlabError::InvalidArgument(format!(
            "t = {t} must be finite and >= 0"
        )));
    }
    let overlaps = eigenspace_overlaps(state0, decomp)?;
    let whole = t.floor();
    let strob = stroboscopic_state(&overlaps, decomp, whole as u64)?;
    let frac = t - whole;
    if frac == 0.0 {
        return Ok(strob);
    }
    let u = system.propagator_to(frac)?;
    let v = u.as_mat() * strob.as_col();
    Ok(StateVector::from_trusted(v))
}

/// `<psi| A |psi>`.
pub fn observable_expectation(a: &Observable, state: &StateVector) -> Result<f64> {
    state.check_dim(a.dim())?;
    let v = state.as_col();
    let av = a.as_mat() * v;
    Ok((0..v.nrows()).map(|i| (v[i].conj() * av[i]).re).sum())
}

/// Validated, sorted list of 1-based sites.
pub fn normalize_subsystem(subsystem: &[usize], n: usize) -> Result<Vec<usize>> {
    if subsystem.is_empty() {
        return Err(FlabError::InvalidArgument("subsystem is empty".into()));
    }
    let mut sites = subsystem.to_vec();
    sites.sort_unstable();
    for w in sites.windows(2) {
        if w[0] == w[1] {
            return Err(FlabError::InvalidArgument(format!(
                "site {} repeated in subsystem",
                w[0]
            )));
        }
    }
    if sites[0] == 0 || *sites.last().unwrap() > n {
        return Err(FlabError::InvalidArgument(format!(
            "subsystem sites must lie in 1..={n}"
        )));
    }
    Ok(sites)
}

/// Index maps splitting a full basis index into (subsystem, environment) parts.
#[derive(Debug, Clone)]
pub(crate) struct Bipartition {
    pub sub_index: Vec<usize>,
    pub env_index: Vec<usize>,
    pub d_sub: usize,
    pub d_env: usize,
}

impl Bipartition {
    pub fn new(sites: &[usize], n: usize) -> Self {
        let in_sub: Vec<bool> = (1..=n).map(|s| sites.contains(&s)).collect();
        let dim = 1usize << n;
        let mut sub_index = vec![0; dim];
        let mut env_index = vec![0; dim];
        for i in 0..dim {
            let (mut a, mut b) = (0usize, 0usize);
            // walk sites from 1 (most significant) to n
            for site in 1..=n {
                let bit = (i >> site_shift(site, n)) & 1;
                if in_sub[site - 1] {
                    a = (a << 1) | bit;
                } else {
                    b = (b << 1) | bit;
                }
            }
            sub_index[i] = a;
            env_index[i] = b;
        }
        Bipartition {
            sub_index,
            env_index,
            d_sub: 1 << sites.len(),
            d_env: 1 << (n - sites.len()),
        }
    }

    /// `tr_env |v><v|` for a (not necessarily normalized) vector given by `amp(i)`.
    pub fn reduce(&self, amp: impl Fn(usize) -> c64) -> Mat<c64> {
        let mut psi = Mat::<c64>::zeros(self.d_sub, self.d_env);
        for i in 0..self.sub_index.len() {
            psi[(self.sub_index[i], self.env_index[i])] = amp(i);
        }
        &psi * psi.adjoint()
    }
}

/// `tr_{complement} |psi><psi|`; subsystem sites are ordered by site index, site order kept.
pub fn reduced_density_matrix(state: &StateVector, subsystem: &[usize]) -> Result<DensityMatrix> {
    let n = state.n_qubits();
    if state.dim() != 1 << n {
        return Err(FlabError::InvalidArgument(
            "state dimension is not a power of two".into(),
        ));
    }
    let sites = normalize_subsystem(subsystem, n)?;
    let part = Bipartition::new(&sites, n);
    let v = state.as_col();
    Ok(DensityMatrix(part.reduce(|i| v[i])))
}

/// `-sum p ln p` over the spectrum, with `0 ln 0 = 0`.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    let mut s = 0.0;
    for p in rho.eigenvalues()? {
        if p < -DENSITY_TOL {
            return Err(FlabError::NegativeEigenvalue(p));
        }
        if p > 0.0 {
            s -= p * p.ln();
        }
    }
    Ok(s)
}

/// Trace norm `||rho1 - rho2||_1`.
pub fn trace_distance(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    if rho1.dim() != rho2.dim() {
        return Err(FlabError::DimensionMismatch {
            expected: rho1.dim(),
            found: rho2.dim(),
        });
    }
    let diff = &rho1.0 - &rho2.0;
    Ok(hermitian_eigenvalues(&diff)?.iter().map(|e| e.abs()).sum())
}

/// The `d^2` clock-shift operators, ordered by `d j1 + j2`.
pub fn clock_shift_basis(d: usize) -> Result<Vec<Mat<c64>>> {
    if d < 2 {
        return Err(FlabError::InvalidArgument(
            "clock-shift basis needs d >= 2".into(),
        ));
    }
    let scale = 1.0 / (d as f64).sqrt();
    let mut out = Vec::with_capacity(d * d);
    for j1 in 0..d {
        for j2 in 0..d {
            let mut m = Mat::<c64>::zeros(d, d);
            for k in 0..d {
                let theta = TAU * (j2 * k) as f64 / d as f64;
                m[((j1 + k) % d, k)] = c64::new(theta.cos(), theta.sin()) * scale;
            }
            out.push(m);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floquet::{spectral_decomposition, DEFAULT_CLUSTER_TOL};
    use crate::linalg::max_abs_diff;
    use crate::spin_model::{make_model_b, sample_model_b, DriveSchedule, DEFAULT_INTERVAL};
    use crate::states::{sample_haar_product_state, stream_rng};

    fn random_system(n: usize, seed: u64) -> (FloquetSystem, SpectralDecomposition) {
        let mut rng = stream_rng(seed, 0);
        let p = sample_model_b(n, DEFAULT_INTERVAL, &mut rng).unwrap();
        let sys = FloquetSystem::new(&make_model_b(&p, n).unwrap()).unwrap();
        let d = spectral_decomposition(&sys.floquet_operator(), DEFAULT_CLUSTER_TOL).unwrap();
        (sys, d)
    }

    fn col_diff(a: &StateVector, b: &StateVector) -> f64 {
        (0..a.dim())
            .map(|i| (a.amplitude(i) - b.amplitude(i)).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn expectation_basics() {
        let z1 = Observable::pauli_string(2, &[(1, Axis::Z)]).unwrap();
        let zero = StateVector::basis_state(2, 0).unwrap();
        assert!((observable_expectation(&z1, &zero).unwrap() - 1.0).abs() < 1e-15);
        let plus = StateVector::product(&[[c64::new(1.0, 0.0), c64::new(1.0, 0.0)]]).unwrap();
        let z = Observable::pauli_string(1, &[(1, Axis::Z)]).unwrap();
        assert!(observable_expectation(&z, &plus).unwrap().abs() < 1e-15);
        assert!((z.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn stroboscopic_matches_repeated_application() {
        let (sys, d) = random_system(3, 4);
        let psi = sample_haar_product_state(3, &mut stream_rng(4, 1)).unwrap();
        let o = eigenspace_overlaps(&psi, &d).unwrap();
        let s0 = stroboscopic_state(&o, &d, 0).unwrap();
        assert!(col_diff(&s0, &psi) < 1e-12);
        let uf = sys.floquet_operator();
        let mut v = psi.as_col().clone();
        for _ in 0..137 {
            v = uf.as_mat() * &v;
        }
        let s = stroboscopic_state(&o, &d, 137).unwrap();
        assert!(col_diff(&s, &StateVector::from_trusted(v)) < 1e-8);
    }

    #[test]
    fn state_at_consistency() {
        let (sys, d) = random_system(3, 9);
        let psi = sample_haar_product_state(3, &mut stream_rng(9, 1)).unwrap();
        let o = eigenspace_overlaps(&psi, &d).unwrap();
        let a = state_at(&psi, &sys, &d, 5.0).unwrap();
        let b = stroboscopic_state(&o, &d, 5).unwrap();
        assert!(col_diff(&a, &b) < 1e-10);
        let c = state_at(&psi, &sys, &d, 3.7).unwrap();
        assert!((c.norm() - 1.0).abs() < 1e-10);

        let zero = FloquetSystem::new(&DriveSchedule::zero(2).unwrap()).unwrap();
        let dz = spectral_decomposition(&zero.floquet_operator(), DEFAULT_CLUSTER_TOL).unwrap();
        let p2 = sample_haar_product_state(2, &mut stream_rng(9, 2)).unwrap();
        assert!(col_diff(&state_at(&p2, &zero, &dz, 0.25).unwrap(), &p2) < 1e-14);
    }

    #[test]
    fn rdm_examples() {
        let s = StateVector::basis_state(2, 0).unwrap();
        let r = reduced_density_matrix(&s, &[1]).unwrap();
        assert!((r.as_mat()[(0, 0)].re - 1.0).abs() < 1e-15);
        let h = 0.5f64.sqrt();
        let bell =
            StateVector::from_vec(vec![c64::new(h, 0.0), ZERO, ZERO, c64::new(h, 0.0)]).unwrap();
        let r = reduced_density_matrix(&bell, &[1]).unwrap();
        assert!(max_abs_diff(r.as_mat(), DensityMatrix::maximally_mixed(2).as_mat()) < 1e-15);
        assert!((von_neumann_entropy(&r).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(reduced_density_matrix(&bell, &[]).is_err());
        assert!(reduced_density_matrix(&bell, &[3]).is_err());
        assert!(reduced_density_matrix(&bell, &[1, 1]).is_err());
    }

    #[test]
    fn entropy_examples() {
        let pure = DensityMatrix::pure(&StateVector::basis_state(1, 1).unwrap());
        assert!(von_neumann_entropy(&pure).unwrap().abs() < 1e-12);
        let rho = DensityMatrix::new(Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => c64::new(0.25, 0.0),
            (1, 1) => c64::new(0.75, 0.0),
            _ => ZERO,
        }))
        .unwrap();
        assert!((von_neumann_entropy(&rho).unwrap() - 0.562335).abs() < 1e-6);
        let bad = DensityMatrix::from_trusted(Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => c64::new(1.1, 0.0),
            (1, 1) => c64::new(-0.1, 0.0),
            _ => ZERO,
        }));
        assert!(matches!(
            von_neumann_entropy(&bad),
            Err(FlabError::NegativeEigenvalue(_))
        ));
    }

    #[test]
    fn trace_distance_examples() {
        let a = DensityMatrix::pure(&StateVector::basis_state(1, 0).unwrap());
        let b = DensityMatrix::pure(&StateVector::basis_state(1, 1).unwrap());
        assert!((trace_distance(&a, &b).unwrap() - 2.0).abs() < 1e-14);
        assert!(trace_distance(&a, &a).unwrap().abs() < 1e-15);
        let c = DensityMatrix::maximally_mixed(4);
        assert!(trace_distance(&a, &c).is_err());
    }

    #[test]
    fn clock_shift_two_dim() {
        let basis = clock_shift_basis(2).unwrap();
        assert_eq!(basis.len(), 4);
        let s = 0.5f64.sqrt();
        let want = Mat::from_fn(2, 2, |i, j| if i == j { c64::new(s, 0.0) } else { ZERO });
        assert!(max_abs_diff(&basis[0], &want) < 1e-15);
        // (0,1) is Z/sqrt2, (1,0) is X/sqrt2, (1,1) is X Z / sqrt2
        let z = Axis::Z.matrix();
        let x = Axis::X.matrix();
        let xz = &x * &z;
        for (m, p) in [(&basis[1], &z), (&basis[2], &x), (&basis[3], &xz)] {
            let scaled = Mat::from_fn(2, 2, |i, j| p[(i, j)] * s);
            assert!(max_abs_diff(m, &scaled) < 1e-15);
        }
        assert!(clock_shift_basis(1).is_err());
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(identity(2)).is_err());
        let nonherm = Mat::from_fn(2, 2, |i, j| {
            if i < j {
                c64::new(0.1, 0.0)
            } else if i == j {
                c64::new(0.5, 0.0)
            } else {
                ZERO
            }
        });
        assert!(matches!(
            DensityMatrix::new(nonherm),
            Err(FlabError::NotHermitian { .. })
        ));
    }

    #[test]
    fn large_period_phase_reduction() {
        let e = 2.345678901234;
        for m in [0u64, 1, 7, 1 << 20, (1 << 20) + 3, 123_456_789] {
            let direct = wrap_phase(e * m as f64);
            assert!(crate::linalg::circular_distance(stroboscopic_phase(e, m), direct) < 1e-6);
        }
    }
}
