//! Product-state sampling and the eigenspace expansion of an initial state.

use faer::{Col, Mat};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{FlabError, Result};
use crate::floquet::SpectralDecomposition;
use crate::linalg::{c64, inner, norm_col, ZERO};
use crate::spin_model::{HermitianMatrix, DEFAULT_MAX_QUBITS};

pub const NORM_TOL: f64 = 1e-12;
/// Eigenspace weights at or below this are dropped from an overlap decomposition.
pub const OVERLAP_CUTOFF: f64 = 1e-14;

/// Independent generator for sample `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Normalized pure state on `2^N` amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Col<c64>);

impl StateVector {
    pub fn new(amps: Col<c64>) -> Result<Self> {
        let norm = norm_col(&amps);
        if !((norm - 1.0).abs() <= NORM_TOL) {
            return Err(FlabError::InvalidArgument(format!(
                "state norm {norm} differs from 1"
            )));
        }
        Ok(StateVector(amps))
    }

    pub fn from_vec(amps: Vec<c64>) -> Result<Self> {
        Self::new(Col::from_fn(amps.len(), |i| amps[i]))
    }

    /// Rescale a nonzero vector to unit norm.
    pub fn normalized(amps: Col<c64>) -> Result<Self> {
        let norm = norm_col(&amps);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(FlabError::InvalidArgument(
                "cannot normalize a zero vector".into(),
            ));
        }
        Ok(StateVector(Col::from_fn(amps.nrows(), |i| amps[i] / norm)))
    }

    pub(crate) fn from_trusted(amps: Col<c64>) -> Self {
        StateVector(amps)
    }

    /// Computational basis state `|index>`.
    pub fn basis_state(n_qubits: usize, index: usize) -> Result<Self> {
        if n_qubits > DEFAULT_MAX_QUBITS {
            return Err(FlabError::TooManyQubits {
                n: n_qubits,
                cap: DEFAULT_MAX_QUBITS,
            });
        }
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(FlabError::InvalidArgument(format!(
                "basis index {index} >= {dim}"
            )));
        }
        Ok(StateVector(Col::from_fn(dim, |i| {
            if i == index {
                c64::new(1.0, 0.0)
            } else {
                ZERO
            }
        })))
    }

    /// `|phi_1> (x) ... (x) |phi_N>` with site 1 as the most significant qubit.
    pub fn product(sites: &[[c64; 2]]) -> Result<Self> {
        let n = sites.len();
        if n == 0 {
            return Err(FlabError::InvalidArgument(
                "product state needs at least one site".into(),
            ));
        }
        if n > DEFAULT_MAX_QUBITS {
            return Err(FlabError::TooManyQubits {
                n,
                cap: DEFAULT_MAX_QUBITS,
            });
        }
        let mut amps = vec![c64::new(1.0, 0.0)];
        for q in sites {
            amps = amps.iter().flat_map(|&a| [a * q[0], a * q[1]]).collect();
        }
        Self::normalized(Col::from_fn(amps.len(), |i| amps[i]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn as_col(&self) -> &Col<c64> {
        &self.0
    }

    pub fn amplitude(&self, i: usize) -> c64 {
        self.0[i]
    }

    pub fn norm(&self) -> f64 {
        norm_col(&self.0)
    }

    pub fn inner(&self, other: &StateVector) -> c64 {
        inner(&self.0, &other.0)
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(FlabError::DimensionMismatch {
                expected: dim,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

/// Haar-random single-qubit state from two complex Gaussians.
pub fn sample_haar_qubit<R: Rng + ?Sized>(rng: &mut R) -> [c64; 2] {
    loop {
        let a = c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        let b = c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if norm > 0.0 {
            return [a / norm, b / norm];
        }
    }
}

pub fn sample_haar_product_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<StateVector> {
    if n == 0 {
        return Err(FlabError::InvalidArgument("N must be >= 1".into()));
    }
    if n > DEFAULT_MAX_QUBITS {
        return Err(FlabError::TooManyQubits {
            n,
            cap: DEFAULT_MAX_QUBITS,
        });
    }
    let sites: Vec<[c64; 2]> = (0..n).map(|_| sample_haar_qubit(rng)).collect();
    StateVector::product(&sites)
}

/// Expansion `|psi> = sum_j c_j |j>` over the eigenspaces of a decomposition.
///
/// The state is stored through its coordinates in the decomposition's basis,
/// so `|j>` is `B_j a_j / c_j` with `B_j` the basis block of eigenspace `j`.
#[derive(Debug, Clone)]
pub struct OverlapDecomposition {
    weights: Vec<f64>,
    coords: Vec<c64>,
    offsets: Vec<usize>,
}

impl OverlapDecomposition {
    /// `c_j` for every eigenspace (zero for dropped components).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    /// Eigenspaces that carry weight above the cutoff.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.weights.len()).filter(|&j| self.weights[j] > 0.0)
    }

    /// Coordinates `B^dagger psi` with dropped components zeroed.
    pub fn coordinates(&self) -> &[c64] {
        &self.coords
    }

    /// The normalized component `|j>`, or `None` if `c_j` was dropped.
    pub fn component(&self, decomp: &SpectralDecomposition, j: usize) -> Option<Col<c64>> {
        let c = self.weights[j];
        if c == 0.0 {
            return None;
        }
        let range = self.offsets[j]..self.offsets[j + 1];
        let q = decomp.cluster_basis(j);
        let mut out = Col::<c64>::zeros(q.nrows());
        for (k, col) in range.clone().enumerate() {
            let a = self.coords[col] / c;
            for i in 0..q.nrows() {
                out[i] += q[(i, k)] * a;
            }
        }
        Some(out)
    }

    /// `sum_j c_j |j>`.
    pub fn reconstruct(&self, decomp: &SpectralDecomposition) -> Col<c64> {
        let b = decomp.basis();
        let mut out = Col::<c64>::zeros(b.nrows());
        for (k, &a) in self.coords.iter().enumerate() {
            if a != ZERO {
                for i in 0..b.nrows() {
                    out[i] += b[(i, k)] * a;
                }
            }
        }
        out
    }
}

pub fn eigenspace_overlaps(
    state: &StateVector,
    decomp: &SpectralDecomposition,
) -> Result<OverlapDecomposition> {
    state.check_dim(decomp.dim())?;
    let psi = Mat::from_fn(state.dim(), 1, |i, _| state.amplitude(i));
    let a = decomp.basis().adjoint() * &psi;
    let s = decomp.n_clusters();
    let mut weights = Vec::with_capacity(s);
    let mut coords: Vec<c64> = (0..a.nrows()).map(|i| a[(i, 0)]).collect();
    let mut offsets = Vec::with_capacity(s + 1);
    offsets.push(0);
    for j in 0..s {
        let range = decomp.cluster_range(j);
        offsets.push(range.end);
        let c = coords[range.clone()]
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt();
        if c > OVERLAP_CUTOFF {
            weights.push(c);
        } else {
            weights.push(0.0);
            coords[range].iter_mut().for_each(|z| *z = ZERO);
        }
    }
    Ok(OverlapDecomposition {
        weights,
        coords,
        offsets,
    })
}

/// Inverse participation ratio `1 / sum_j c_j^4`.
pub fn effective_dimension(overlaps: &OverlapDecomposition) -> f64 {
    1.0 / overlaps.weights.iter().map(|c| c.powi(4)).sum::<f64>()
}

/// `sum_j <psi| Pi_j A Pi_j |psi>`.
pub fn diagonal_ensemble_expectation(
    overlaps: &OverlapDecomposition,
    decomp: &SpectralDecomposition,
    a: &HermitianMatrix,
) -> Result<f64> {
    if a.dim() != decomp.dim() {
        return Err(FlabError::DimensionMismatch {
            expected: decomp.dim(),
            found: a.dim(),
        });
    }
    let support: Vec<usize> = overlaps.support().collect();
    let dim = decomp.dim();
    let b = decomp.basis();
    // column t holds Pi_j |psi> for the t-th supported eigenspace
    let mut projected = Mat::<c64>::zeros(dim, support.len());
    for (t, &j) in support.iter().enumerate() {
        for col in decomp.cluster_range(j) {
            let coef = overlaps.coords[col];
            for i in 0..dim {
                projected[(i, t)] += b[(i, col)] * coef;
            }
        }
    }
    let applied = a.as_mat() * &projected;
    let mut total = 0.0;
    for t in 0..support.len() {
        total += (0..dim)
            .map(|i| (projected[(i, t)].conj() * applied[(i, t)]).re)
            .sum::<f64>();
    }
    Ok(total)
}
