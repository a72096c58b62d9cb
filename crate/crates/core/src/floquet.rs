//! Propagators, the Floquet operator and its quasienergy spectrum.
//!
//! Quasienergies follow `lambda = exp(-i E)` with `E` on the branch `[-pi, pi)`.
//! All phase comparisons use the circular metric.

use std::f64::consts::TAU;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{FlabError, Result};
use crate::linalg::{
    c64, circular_distance, hermitian_eigen, identity, loewdin_polish, spectral_function,
    unitary_deviation, wrap_phase,
};
use crate::spin_model::{build_piece_matrix, DriveSchedule, HermitianMatrix};

/// Unitarity tolerance (max-entry norm of `U^dagger U - I`).
pub const UNITARY_TOL: f64 = 1e-10;
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-8;
pub const DEFAULT_RATIO_TOL: f64 = 1e-8;
/// Inter-cluster gaps below this multiple of `cluster_tol` mark a decomposition marginal.
pub const MARGINAL_FACTOR: f64 = 10.0;
/// Largest number of distinct eigenvalues for which all pairwise ratios are enumerated.
pub const MAX_RATIO_CLUSTERS: usize = 16384;

#[derive(Debug, Clone)]
pub struct UnitaryMatrix(Mat<c64>);

impl UnitaryMatrix {
    pub fn new(m: Mat<c64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(FlabError::ShapeMismatch {
                what: "square matrix",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let deviation = unitary_deviation(&m);
        if !(deviation <= UNITARY_TOL) {
            return Err(FlabError::NotUnitary { deviation });
        }
        Ok(UnitaryMatrix(m))
    }

    pub(crate) fn from_trusted(m: Mat<c64>) -> Self {
        UnitaryMatrix(m)
    }

    pub fn identity(dim: usize) -> Self {
        UnitaryMatrix(identity(dim))
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

    pub fn unitarity_error(&self) -> f64 {
        unitary_deviation(&self.0)
    }

    /// `self * rhs` (apply `rhs` first).
    pub fn then_after(&self, rhs: &UnitaryMatrix) -> UnitaryMatrix {
        UnitaryMatrix(&self.0 * &rhs.0)
    }

    pub fn adjoint(&self) -> UnitaryMatrix {
        UnitaryMatrix(self.0.adjoint().to_owned())
    }

    /// `self^k` by repeated squaring.
    pub fn pow(&self, mut k: u64) -> UnitaryMatrix {
        let mut result = identity(self.dim());
        let mut base = self.0.clone();
        while k > 0 {
            if k & 1 == 1 {
                result = &result * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        UnitaryMatrix(result)
    }
}

/// Eigendecomposition of one Hamiltonian piece, reused for partial exponentials.
#[derive(Debug, Clone)]
struct PieceEigen {
    values: Vec<f64>,
    vectors: Mat<c64>,
}

impl PieceEigen {
    fn new(h: &HermitianMatrix) -> Result<Self> {
        let (values, vectors) = hermitian_eigen(h.as_mat())?;
        Ok(PieceEigen { values, vectors })
    }

    fn propagator(&self, dt: f64) -> Mat<c64> {
        if dt == 0.0 || self.values.iter().all(|&e| e == 0.0) {
            return identity(self.vectors.nrows());
        }
        spectral_function(&self.values, &self.vectors, |e| {
            let phase = -e * dt;
            c64::new(phase.cos(), phase.sin())
        })
    }
}

/// `exp(-i H dt)` via the eigendecomposition of `H`.
pub fn hermitian_propagator(h: &HermitianMatrix, dt: f64) -> Result<UnitaryMatrix> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(FlabError::InvalidArgument(format!(
            "dt = {dt} must be finite and >= 0"
        )));
    }
    let eig = PieceEigen::new(h)?;
    UnitaryMatrix::new(eig.propagator(dt))
}

/// A drive schedule with its piece spectra and cumulative propagators cached.
#[derive(Debug, Clone)]
pub struct FloquetSystem {
    schedule: DriveSchedule,
    pieces: Vec<PieceEigen>,
    /// `prefix[j] = U(0, t_j)`.
    prefix: Vec<Mat<c64>>,
}

impl FloquetSystem {
    pub fn new(schedule: &DriveSchedule) -> Result<Self> {
        let n = schedule.n_qubits();
        let mut pieces = Vec::with_capacity(schedule.pieces().len());
        let mut prefix = vec![identity(schedule.dim())];
        for piece in schedule.pieces() {
            let h = build_piece_matrix(piece, n)?;
            let eig = PieceEigen::new(&h)?;
            let step = eig.propagator(piece.duration);
            let next = &step * prefix.last().unwrap();
            prefix.push(next);
            pieces.push(eig);
        }
        Ok(FloquetSystem {
            schedule: schedule.clone(),
            pieces,
            prefix,
        })
    }

    pub fn schedule(&self) -> &DriveSchedule {
        &self.schedule
    }

    pub fn dim(&self) -> usize {
        self.schedule.dim()
    }

    pub fn floquet_operator(&self) -> UnitaryMatrix {
        UnitaryMatrix::from_trusted(self.prefix.last().unwrap().clone())
    }

    /// `U(0, x)` for `x` in `[0, 1]`.
    pub fn propagator_to(&self, x: f64) -> Result<UnitaryMatrix> {
        if !(0.0..=1.0).contains(&x) {
            return Err(FlabError::InvalidArgument(format!(
                "x = {x} outside [0, 1]"
            )));
        }
        let b = self.schedule.boundaries();
        if x == 1.0 {
            return Ok(self.floquet_operator());
        }
        let j = b.partition_point(|&t| t <= x) - 1;
        let dt = x - b[j];
        if dt == 0.0 {
            return Ok(UnitaryMatrix::from_trusted(self.prefix[j].clone()));
        }
        let partial = self.pieces[j].propagator(dt);
        Ok(UnitaryMatrix::from_trusted(&partial * &self.prefix[j]))
    }

    /// `U(0, x_k) R` for every offset, sharing one change of frame per piece:
    /// with `H_j = V diag(e) V^dagger`, `U(0, x) R = V diag(exp(-i e dt)) (V^dagger U(0, t_j) R)`.
    pub fn evolve_frames(&self, offsets: &[f64], rhs: &Mat<c64>) -> Result<Vec<Mat<c64>>> {
        if rhs.nrows() != self.dim() {
            return Err(FlabError::DimensionMismatch {
                expected: self.dim(),
                found: rhs.nrows(),
            });
        }
        let b = self.schedule.boundaries();
        let mut frames: Vec<Option<Mat<c64>>> = vec![None; self.pieces.len()];
        let mut out = Vec::with_capacity(offsets.len());
        for &x in offsets {
            if !(0.0..=1.0).contains(&x) {
                return Err(FlabError::InvalidArgument(format!(
                    "x = {x} outside [0, 1]"
                )));
            }
            if x == 1.0 {
                out.push(self.prefix.last().unwrap() * rhs);
                continue;
            }
            let j = b.partition_point(|&t| t <= x) - 1;
            let piece = &self.pieces[j];
            let g =
                frames[j].get_or_insert_with(|| piece.vectors.adjoint() * (&self.prefix[j] * rhs));
            let dt = x - b[j];
            let phases: Vec<c64> = piece
                .values
                .iter()
                .map(|&e| c64::new((-e * dt).cos(), (-e * dt).sin()))
                .collect();
            let scaled = Mat::from_fn(g.nrows(), g.ncols(), |i, k| g[(i, k)] * phases[i]);
            out.push(&piece.vectors * &scaled);
        }
        Ok(out)
    }

    /// `U(0, t)` for any `t >= 0`, as `U(0, t - floor(t)) U_F^floor(t)`.
    pub fn propagator_at(&self, t: f64) -> Result<UnitaryMatrix> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(FlabError::InvalidArgument(format!(
                "t = {t} must be finite and >= 0"
            )));
        }
        let whole = t.floor();
        let frac = self.propagator_to(t - whole)?;
        let periods = self.floquet_operator().pow(whole as u64);
        Ok(frac.then_after(&periods))
    }
}

/// Product of piece propagators in time order (piece 1 is the rightmost factor).
pub fn floquet_operator(schedule: &DriveSchedule) -> Result<UnitaryMatrix> {
    Ok(FloquetSystem::new(schedule)?.floquet_operator())
}

pub fn propagator_to(schedule: &DriveSchedule, x: f64) -> Result<UnitaryMatrix> {
    FloquetSystem::new(schedule)?.propagator_to(x)
}

/// Eigenspace decomposition `U = sum_j lambda_j Pi_j` of a unitary.
///
/// Basis columns are grouped by cluster: cluster `j` owns columns
/// `offsets[j]..offsets[j + 1]`, and those columns are an orthonormal basis of
/// the range of `Pi_j`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    basis: Mat<c64>,
    offsets: Vec<usize>,
    /// Quasienergy of every basis column (unclustered values).
    eigenphases: Vec<f64>,
    /// Cluster label of every basis column.
    cluster_of: Vec<usize>,
    /// Representative quasienergy of each cluster.
    cluster_phases: Vec<f64>,
    eigenvalues: Vec<c64>,
    cluster_tol: f64,
    min_cluster_gap: f64,
    marginal: bool,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Number of distinct eigenvalues `s`.
    pub fn n_clusters(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn multiplicity(&self, j: usize) -> usize {
        self.offsets[j + 1] - self.offsets[j]
    }

    pub fn eigenphases(&self) -> &[f64] {
        &self.eigenphases
    }

    pub fn cluster_assignments(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn quasienergies(&self) -> &[f64] {
        &self.cluster_phases
    }

    pub fn distinct_eigenvalues(&self) -> &[c64] {
        &self.eigenvalues
    }

    pub fn cluster_tol(&self) -> f64 {
        self.cluster_tol
    }

    /// Smallest circular distance between eigenphases in different clusters
    /// (`+inf` when `s = 1`).
    pub fn min_cluster_gap(&self) -> f64 {
        self.min_cluster_gap
    }

    pub fn is_marginal(&self) -> bool {
        self.marginal
    }

    pub fn require_not_marginal(&self) -> Result<()> {
        if self.marginal {
            return Err(FlabError::MarginalDecomposition {
                gap: self.min_cluster_gap,
                tol: self.cluster_tol,
            });
        }
        Ok(())
    }

    /// Orthonormal basis of eigenspace `j`.
    pub fn cluster_basis(&self, j: usize) -> MatRef<'_, c64> {
        let (a, b) = (self.offsets[j], self.offsets[j + 1]);
        self.basis.as_ref().subcols(a, b - a)
    }

    /// All basis columns, grouped by cluster.
    pub fn basis(&self) -> &Mat<c64> {
        &self.basis
    }

    pub fn cluster_range(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    /// Dense projector `Pi_j`.
    pub fn projector(&self, j: usize) -> Mat<c64> {
        let q = self.cluster_basis(j);
        q * q.adjoint()
    }

    /// Eigenvalue attached to each basis column (cluster representative).
    pub fn column_eigenvalues(&self) -> Vec<c64> {
        self.cluster_of
            .iter()
            .map(|&c| self.eigenvalues[c])
            .collect()
    }

    /// `sum_j lambda_j Pi_j`.
    pub fn reconstruct(&self) -> Mat<c64> {
        self.apply_function(|lambda| lambda)
    }

    /// `sum_j f(lambda_j) Pi_j`.
    pub fn apply_function(&self, f: impl Fn(c64) -> c64) -> Mat<c64> {
        let lam: Vec<c64> = self.column_eigenvalues().into_iter().map(f).collect();
        let n = self.dim();
        let scaled = Mat::from_fn(n, n, |i, k| self.basis[(i, k)] * lam[k]);
        &scaled * self.basis.adjoint()
    }

    /// `sum_j d_j lambda_j^k`, which should equal `tr(U^k)`.
    pub fn power_sum(&self, k: i32) -> c64 {
        (0..self.n_clusters())
            .map(|j| self.eigenvalues[j].powi(k) * self.multiplicity(j) as f64)
            .sum()
    }

    /// JSON-friendly summary combining the spectrum and its degeneracy metrics.
    pub fn report(&self, metrics: &DegeneracyMetrics) -> SpectralReport {
        SpectralReport {
            eigenphases: self.cluster_phases.clone(),
            multiplicities: self.multiplicities(),
            d1: metrics.d1,
            d2: metrics.d2,
            gap_margin: finite_or_none(metrics.gap_margin),
            min_level_spacing: finite_or_none(metrics.min_level_spacing),
            cluster_tol: self.cluster_tol,
            ratio_tol: metrics.ratio_tol,
            marginal: self.marginal,
        }
    }
}

fn finite_or_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Group sorted-by-angle phases into clusters by single linkage on the
/// circle. Returns clusters as lists of indices into `phases` plus the
/// smallest gap that separates two clusters.
fn cluster_phases(phases: &[f64], tol: f64) -> (Vec<Vec<usize>>, f64) {
    let n = phases.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| phases[a].total_cmp(&phases[b]).then(a.cmp(&b)));
    if n == 1 {
        return (vec![order], f64::INFINITY);
    }
    // gap after position i in sorted order (last one wraps around)
    let gaps: Vec<f64> = (0..n)
        .map(|i| {
            if i + 1 < n {
                phases[order[i + 1]] - phases[order[i]]
            } else {
                phases[order[0]] + TAU - phases[order[n - 1]]
            }
        })
        .collect();
    let cuts: Vec<usize> = (0..n).filter(|&i| gaps[i] > tol).collect();
    if cuts.len() <= 1 {
        // a single cut cannot separate anything on a circle
        return (vec![order], f64::INFINITY);
    }
    let min_gap = cuts.iter().map(|&i| gaps[i]).fold(f64::INFINITY, f64::min);
    // start right after the last cut so that the walk ends on a cut
    let start = (cuts[cuts.len() - 1] + 1) % n;
    let mut clusters = Vec::with_capacity(cuts.len());
    let mut current = Vec::new();
    for step in 0..n {
        let pos = (start + step) % n;
        current.push(order[pos]);
        if gaps[pos] > tol {
            clusters.push(std::mem::take(&mut current));
        }
    }
    debug_assert!(current.is_empty());
    (clusters, min_gap)
}

/// Circular mean of a set of angles.
fn circular_mean(angles: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = angles.fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    wrap_phase(s.atan2(c))
}

/// Orthonormal basis for one cluster of eigenvectors.
///
/// The raw eigenvectors of a near-degenerate cluster are not individually
/// stable but their span is; a thin QR recovers it. If the raw vectors are
/// numerically dependent the span is rebuilt from the right singular vectors
/// of `U - lambda I` with the smallest singular values.
fn cluster_basis_from(
    u: &Mat<c64>,
    raw: &Mat<c64>,
    members: &[usize],
    lambda: c64,
) -> Result<Mat<c64>> {
    let dim = raw.nrows();
    let cols = Mat::from_fn(dim, members.len(), |i, k| raw[(i, members[k])]);
    if members.len() == 1 {
        let norm = cols.col(0).norm_l2();
        return Ok(Mat::from_fn(dim, 1, |i, _| cols[(i, 0)] / norm));
    }
    let qr = cols.qr();
    let r = qr.thin_R();
    let diag: Vec<f64> = (0..members.len()).map(|i| r[(i, i)].norm()).collect();
    let rmax = diag.iter().cloned().fold(0.0, f64::max);
    let rmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if rmin > 1e-6 * rmax {
        return Ok(qr.compute_thin_Q());
    }
    let shifted = Mat::from_fn(dim, dim, |i, k| {
        if i == k {
            u[(i, k)] - lambda
        } else {
            u[(i, k)]
        }
    });
    let svd = shifted
        .svd()
        .map_err(|e| FlabError::Eigen(format!("{e:?}")))?;
    let v = svd.V();
    let d = members.len();
    Ok(Mat::from_fn(dim, d, |i, k| v[(i, dim - d + k)]))
}

/// Cluster the eigenvalues of `U` and build orthonormal eigenspace bases.
pub fn spectral_decomposition(
    u: &UnitaryMatrix,
    cluster_tol: f64,
) -> Result<SpectralDecomposition> {
    if !(cluster_tol > 0.0) {
        return Err(FlabError::InvalidArgument("cluster_tol must be > 0".into()));
    }
    let m = u.as_mat();
    let dim = m.nrows();
    let evd = m.eigen().map_err(|e| FlabError::Eigen(format!("{e:?}")))?;
    let raw_values: Vec<c64> = (0..dim).map(|i| evd.S()[i]).collect();
    let raw_vectors = evd.U().to_owned();
    let phases: Vec<f64> = raw_values.iter().map(|z| wrap_phase(-z.arg())).collect();

    let (clusters, min_gap) = cluster_phases(&phases, cluster_tol);
    let mut basis = Mat::<c64>::zeros(dim, dim);
    let mut offsets = Vec::with_capacity(clusters.len() + 1);
    let mut eigenphases = Vec::with_capacity(dim);
    let mut cluster_of = Vec::with_capacity(dim);
    let mut cluster_phases_out = Vec::with_capacity(clusters.len());
    let mut eigenvalues = Vec::with_capacity(clusters.len());
    let mut col = 0;
    offsets.push(0);
    for (label, members) in clusters.iter().enumerate() {
        let rep = circular_mean(members.iter().map(|&i| phases[i]));
        let lambda = c64::new(rep.cos(), -rep.sin());
        let q = cluster_basis_from(m, &raw_vectors, members, lambda)?;
        for k in 0..members.len() {
            basis.col_mut(col + k).copy_from(q.col(k));
            eigenphases.push(phases[members[k]]);
            cluster_of.push(label);
        }
        col += members.len();
        offsets.push(col);
        cluster_phases_out.push(rep);
        eigenvalues.push(lambda);
    }
    let basis = loewdin_polish(&basis);
    Ok(SpectralDecomposition {
        basis,
        offsets,
        eigenphases,
        cluster_of,
        cluster_phases: cluster_phases_out,
        eigenvalues,
        cluster_tol,
        min_cluster_gap: min_gap,
        marginal: min_gap < MARGINAL_FACTOR * cluster_tol,
    })
}

/// Degeneracy measures of a Floquet spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyMetrics {
    /// `2^-N sum_j d_j^2`.
    pub d1: f64,
    /// Largest number of ordered pairs `(j, k)`, `j != k`, sharing the ratio `lambda_k / lambda_j`.
    pub d2: usize,
    /// Smallest separation between distinct eigenphase differences (mod 2pi).
    pub gap_margin: f64,
    /// Smallest circular distance between distinct eigenphases.
    pub min_level_spacing: f64,
    pub ratio_tol: f64,
}

impl DegeneracyMetrics {
    pub fn is_generic(&self) -> bool {
        self.d1 == 1.0 && self.d2 == 1
    }
}

/// Group the sorted circular values and return (largest run, smallest gap
/// between runs). Values must be wrapped to `[-pi, pi)`.
fn circular_runs(sorted: &[f64], tol: f64) -> (usize, f64) {
    let n = sorted.len();
    if n == 0 {
        return (0, f64::INFINITY);
    }
    let mut runs = Vec::new();
    let mut min_gap = f64::INFINITY;
    let mut len = 1usize;
    for w in sorted.windows(2) {
        let gap = w[1] - w[0];
        if gap <= tol {
            len += 1;
        } else {
            runs.push(len);
            min_gap = min_gap.min(gap);
            len = 1;
        }
    }
    runs.push(len);
    if runs.len() > 1 {
        let wrap = sorted[0] + TAU - sorted[n - 1];
        if wrap <= tol {
            let last = runs.pop().unwrap();
            runs[0] += last;
        } else {
            min_gap = min_gap.min(wrap);
        }
    }
    let largest = runs.iter().copied().max().unwrap_or(0);
    if runs.len() <= 1 {
        min_gap = f64::INFINITY;
    }
    (largest, min_gap)
}

/// D1, D2 and the margins that tell how close the counts are to changing.
pub fn degeneracy_metrics(
    decomp: &SpectralDecomposition,
    ratio_tol: f64,
) -> Result<DegeneracyMetrics> {
    if !(ratio_tol > 0.0) {
        return Err(FlabError::InvalidArgument("ratio_tol must be > 0".into()));
    }
    decomp.require_not_marginal()?;
    degeneracy_metrics_unchecked(decomp, ratio_tol)
}

/// As [`degeneracy_metrics`] but also for marginal decompositions, whose
/// counts depend on the tolerance.
pub fn degeneracy_metrics_unchecked(
    decomp: &SpectralDecomposition,
    ratio_tol: f64,
) -> Result<DegeneracyMetrics> {
    if !(ratio_tol > 0.0) {
        return Err(FlabError::InvalidArgument("ratio_tol must be > 0".into()));
    }
    let s = decomp.n_clusters();
    if s > MAX_RATIO_CLUSTERS {
        return Err(FlabError::BudgetExceeded {
            requested: s,
            budget: MAX_RATIO_CLUSTERS,
        });
    }
    let dim = decomp.dim() as f64;
    let d1 = decomp
        .multiplicities()
        .iter()
        .map(|&d| (d * d) as f64)
        .sum::<f64>()
        / dim;
    let e = decomp.quasienergies();
    let mut diffs = Vec::with_capacity(s * s.saturating_sub(1));
    for j in 0..s {
        for k in 0..s {
            if j != k {
                diffs.push(wrap_phase(e[j] - e[k]));
            }
        }
    }
    diffs.sort_by(f64::total_cmp);
    let (largest, gap_margin) = circular_runs(&diffs, ratio_tol);
    Ok(DegeneracyMetrics {
        d1,
        d2: largest.max(1),
        gap_margin,
        min_level_spacing: decomp.min_cluster_gap(),
        ratio_tol,
    })
}

/// Wire format of a spectrum summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub eigenphases: Vec<f64>,
    pub multiplicities: Vec<usize>,
    #[serde(rename = "D1")]
    pub d1: f64,
    #[serde(rename = "D2")]
    pub d2: usize,
    pub gap_margin: Option<f64>,
    pub min_level_spacing: Option<f64>,
    pub cluster_tol: f64,
    pub ratio_tol: f64,
    pub marginal: bool,
}

/// Circular distance helper re-exported for callers matching phases.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    circular_distance(a, b)
}
