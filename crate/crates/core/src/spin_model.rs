//! Qubit-chain Hamiltonians and piecewise-constant drive schedules.
//!
//! Basis convention: site 1 is the most significant bit of the
//! computational-basis index, so `|q_1 q_2 ... q_N>` has index
//! `sum_l q_l 2^(N-l)`. Partial traces and observables rely on this ordering.

use faer::Mat;
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{FlabError, Result};
use crate::linalg::{c64, hermitian_deviation, site_shift, Axis, ZERO};

/// Default cap on the number of qubits for dense matrices (2^14 = 16384).
pub const DEFAULT_MAX_QUBITS: usize = 14;

/// Tolerance on `sum(durations) == 1`.
pub const DURATION_SUM_TOL: f64 = 1e-12;

/// Hermiticity tolerance (max-entry norm) enforced by [`HermitianMatrix::new`].
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Default coefficient sampling box.
pub const DEFAULT_INTERVAL: Interval = Interval {
    low: -20.0,
    high: 20.0,
};

/// Dense Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianMatrix(Mat<c64>);

impl HermitianMatrix {
    pub fn new(m: Mat<c64>) -> Result<Self> {
        Self::with_tolerance(m, HERMITIAN_TOL)
    }

    pub fn with_tolerance(m: Mat<c64>, tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(FlabError::ShapeMismatch {
                what: "square matrix",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let deviation = hermitian_deviation(&m);
        if !(deviation <= tol) {
            return Err(FlabError::NotHermitian { deviation });
        }
        Ok(HermitianMatrix(m))
    }

    pub fn zeros(dim: usize) -> Self {
        HermitianMatrix(Mat::zeros(dim, dim))
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
}

/// Coefficients of one Hamiltonian piece.
///
/// `on_site[l][u]` multiplies `sigma_{l+1}^u`; `coupling[l][3u + v]` multiplies
/// `sigma_{l+1}^u sigma_{l+2}^v`. Zero coefficients encode absent terms.
#[derive(Debug, Clone, PartialEq)]
pub struct PieceSpec {
    pub on_site: Vec<[f64; 3]>,
    pub coupling: Vec<[f64; 9]>,
    pub duration: f64,
}

impl PieceSpec {
    pub fn zeros(n_qubits: usize, duration: f64) -> Self {
        PieceSpec {
            on_site: vec![[0.0; 3]; n_qubits],
            coupling: vec![[0.0; 9]; n_qubits.saturating_sub(1)],
            duration,
        }
    }

    /// Number of sites implied by the coefficient arrays.
    pub fn n_sites(&self) -> usize {
        self.on_site.len()
    }

    pub fn set_field(&mut self, site: usize, axis: Axis, value: f64) {
        self.on_site[site - 1][axis.index()] = value;
    }

    pub fn set_coupling(&mut self, bond: usize, u: Axis, v: Axis, value: f64) {
        self.coupling[bond - 1][3 * u.index() + v.index()] = value;
    }

    pub fn field(&self, site: usize, axis: Axis) -> f64 {
        self.on_site[site - 1][axis.index()]
    }

    pub fn coupling_coeff(&self, bond: usize, u: Axis, v: Axis) -> f64 {
        self.coupling[bond - 1][3 * u.index() + v.index()]
    }

    /// Coefficient-wise `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &PieceSpec, b: f64) -> PieceSpec {
        PieceSpec {
            on_site: self
                .on_site
                .iter()
                .zip(&other.on_site)
                .map(|(x, y)| std::array::from_fn(|k| a * x[k] + b * y[k]))
                .collect(),
            coupling: self
                .coupling
                .iter()
                .zip(&other.coupling)
                .map(|(x, y)| std::array::from_fn(|k| a * x[k] + b * y[k]))
                .collect(),
            duration: self.duration,
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.on_site.len() != n_qubits {
            return Err(FlabError::ShapeMismatch {
                what: "on-site coefficients",
                expected: n_qubits,
                found: self.on_site.len(),
            });
        }
        let bonds = n_qubits.saturating_sub(1);
        if self.coupling.len() != bonds {
            return Err(FlabError::ShapeMismatch {
                what: "coupling coefficients",
                expected: bonds,
                found: self.coupling.len(),
            });
        }
        let finite = self.on_site.iter().flatten().all(|x| x.is_finite())
            && self.coupling.iter().flatten().all(|x| x.is_finite());
        if !finite {
            return Err(FlabError::InvalidArgument(
                "non-finite Hamiltonian coefficient".into(),
            ));
        }
        Ok(())
    }
}

/// One period of a piecewise-constant Hamiltonian, period normalized to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveSchedule {
    n_qubits: usize,
    pieces: Vec<PieceSpec>,
    boundaries: Vec<f64>,
}

impl DriveSchedule {
    /// Build from explicit boundaries `0 = t_0 < ... < t_n = 1`. Piece
    /// durations are overwritten with `t_j - t_{j-1}`.
    pub fn from_boundaries(
        n_qubits: usize,
        boundaries: Vec<f64>,
        mut pieces: Vec<PieceSpec>,
    ) -> Result<Self> {
        if n_qubits == 0 {
            return Err(FlabError::InvalidArgument("n_qubits must be >= 1".into()));
        }
        if boundaries.len() != pieces.len() + 1 || pieces.is_empty() {
            return Err(FlabError::InvalidSchedule(format!(
                "{} boundaries for {} pieces",
                boundaries.len(),
                pieces.len()
            )));
        }
        if boundaries[0] != 0.0 || *boundaries.last().unwrap() != 1.0 {
            return Err(FlabError::InvalidSchedule(
                "boundaries must start at 0 and end at 1".into(),
            ));
        }
        if boundaries.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FlabError::InvalidSchedule(
                "boundaries must be strictly increasing".into(),
            ));
        }
        for (j, piece) in pieces.iter_mut().enumerate() {
            piece.validate(n_qubits)?;
            piece.duration = boundaries[j + 1] - boundaries[j];
        }
        Ok(DriveSchedule {
            n_qubits,
            pieces,
            boundaries,
        })
    }

    /// Build from pieces carrying their own durations; the durations must
    /// sum to 1 within [`DURATION_SUM_TOL`].
    pub fn from_durations(n_qubits: usize, pieces: Vec<PieceSpec>) -> Result<Self> {
        if pieces.iter().any(|p| !(p.duration > 0.0)) {
            return Err(FlabError::InvalidSchedule(
                "piece durations must be positive".into(),
            ));
        }
        let total: f64 = pieces.iter().map(|p| p.duration).sum();
        if (total - 1.0).abs() > DURATION_SUM_TOL {
            return Err(FlabError::InvalidSchedule(format!(
                "durations sum to {total}, not 1"
            )));
        }
        let mut boundaries = Vec::with_capacity(pieces.len() + 1);
        let mut t = 0.0;
        boundaries.push(t);
        for p in &pieces[..pieces.len().saturating_sub(1)] {
            t += p.duration;
            boundaries.push(t);
        }
        boundaries.push(1.0);
        Self::from_boundaries(n_qubits, boundaries, pieces)
    }

    /// A single all-zero piece on `[0, 1)`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        Self::from_boundaries(
            n_qubits,
            vec![0.0, 1.0],
            vec![PieceSpec::zeros(n_qubits, 1.0)],
        )
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1usize << self.n_qubits
    }

    pub fn pieces(&self) -> &[PieceSpec] {
        &self.pieces
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Interior switching times `t_1 .. t_{n-1}`.
    pub fn interior_boundaries(&self) -> &[f64] {
        &self.boundaries[1..self.boundaries.len() - 1]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ScheduleJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ScheduleJson = serde_json::from_str(text)?;
        raw.try_into()
    }
}

/// Wire format: `{n_qubits, boundaries, pieces: [{on_site: [[x,y,z]..], coupling: [[xx,xy,..,zz]..]}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleJson {
    pub n_qubits: usize,
    pub boundaries: Vec<f64>,
    pub pieces: Vec<PieceJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceJson {
    pub on_site: Vec<Vec<f64>>,
    pub coupling: Vec<Vec<f64>>,
}

impl From<&DriveSchedule> for ScheduleJson {
    fn from(s: &DriveSchedule) -> Self {
        ScheduleJson {
            n_qubits: s.n_qubits,
            boundaries: s.boundaries.clone(),
            pieces: s
                .pieces
                .iter()
                .map(|p| PieceJson {
                    on_site: p.on_site.iter().map(|r| r.to_vec()).collect(),
                    coupling: p.coupling.iter().map(|r| r.to_vec()).collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ScheduleJson> for DriveSchedule {
    type Error = FlabError;

    fn try_from(raw: ScheduleJson) -> Result<Self> {
        fn rows<const W: usize>(what: &'static str, v: Vec<Vec<f64>>) -> Result<Vec<[f64; W]>> {
            v.into_iter()
                .map(|r| {
                    <[f64; W]>::try_from(r.as_slice()).map_err(|_| FlabError::ShapeMismatch {
                        what,
                        expected: W,
                        found: r.len(),
                    })
                })
                .collect()
        }
        let pieces = raw
            .pieces
            .into_iter()
            .map(|p| {
                Ok(PieceSpec {
                    on_site: rows::<3>("on-site row", p.on_site)?,
                    coupling: rows::<9>("coupling row", p.coupling)?,
                    duration: 0.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        DriveSchedule::from_boundaries(raw.n_qubits, raw.boundaries, pieces)
    }
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n == 0 {
        return Err(FlabError::InvalidArgument("N must be >= 1".into()));
    }
    if n > cap {
        return Err(FlabError::TooManyQubits { n, cap });
    }
    Ok(())
}

/// Dense matrix of one Hamiltonian piece, using the default dimension cap.
pub fn build_piece_matrix(piece: &PieceSpec, n: usize) -> Result<HermitianMatrix> {
    build_piece_matrix_with_cap(piece, n, DEFAULT_MAX_QUBITS)
}

pub fn build_piece_matrix_with_cap(
    piece: &PieceSpec,
    n: usize,
    max_qubits: usize,
) -> Result<HermitianMatrix> {
    check_cap(n, max_qubits)?;
    piece.validate(n)?;
    let dim = 1usize << n;
    let mut m = Mat::<c64>::zeros(dim, dim);
    for (l0, fields) in piece.on_site.iter().enumerate() {
        let shift = site_shift(l0 + 1, n);
        for axis in Axis::ALL {
            let h = fields[axis.index()];
            if h == 0.0 {
                continue;
            }
            for i in 0..dim {
                let bit = (i >> shift) & 1;
                let (nb, amp) = axis.act(bit);
                let j = (i & !(1 << shift)) | (nb << shift);
                m[(j, i)] += amp * h;
            }
        }
    }
    for (l0, couplings) in piece.coupling.iter().enumerate() {
        let s1 = site_shift(l0 + 1, n);
        let s2 = site_shift(l0 + 2, n);
        for u in Axis::ALL {
            for v in Axis::ALL {
                let jc = couplings[3 * u.index() + v.index()];
                if jc == 0.0 {
                    continue;
                }
                for i in 0..dim {
                    let (b1, a1) = u.act((i >> s1) & 1);
                    let (b2, a2) = v.act((i >> s2) & 1);
                    let j = (i & !(1 << s1) & !(1 << s2)) | (b1 << s1) | (b2 << s2);
                    m[(j, i)] += a1 * a2 * jc;
                }
            }
        }
    }
    HermitianMatrix::new(m)
}

/// Dense matrix of a Pauli string `prod_k sigma_{site_k}^{axis_k}` (distinct sites).
pub fn pauli_string_matrix(n: usize, ops: &[(usize, Axis)]) -> Result<HermitianMatrix> {
    check_cap(n, DEFAULT_MAX_QUBITS)?;
    let mut seen = vec![false; n + 1];
    for &(site, _) in ops {
        if site == 0 || site > n {
            return Err(FlabError::InvalidArgument(format!(
                "site {site} outside 1..={n}"
            )));
        }
        if std::mem::replace(&mut seen[site], true) {
            return Err(FlabError::InvalidArgument(format!(
                "site {site} repeated in Pauli string"
            )));
        }
    }
    let dim = 1usize << n;
    let mut m = Mat::<c64>::zeros(dim, dim);
    for i in 0..dim {
        let mut j = i;
        let mut amp = c64::new(1.0, 0.0);
        for &(site, axis) in ops {
            let shift = site_shift(site, n);
            let (nb, a) = axis.act((j >> shift) & 1);
            j = (j & !(1 << shift)) | (nb << shift);
            amp *= a;
        }
        m[(j, i)] = amp;
    }
    debug_assert!(m.col(0).iter().filter(|z| **z != ZERO).count() == 1);
    HermitianMatrix::new(m)
}

/// Coefficients of the two-step kicked model:
/// `H'_1 = sum h_z sigma^z + sum J sigma^z sigma^z` on `[0, 1/2)`,
/// `H'_2 = sum h_x sigma^x` on `[1/2, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBParams {
    pub h_x: Vec<f64>,
    pub h_z: Vec<f64>,
    #[serde(rename = "J")]
    pub j: Vec<f64>,
}

impl ModelBParams {
    pub fn zeros(n: usize) -> Self {
        ModelBParams {
            h_x: vec![0.0; n],
            h_z: vec![0.0; n],
            j: vec![0.0; n.saturating_sub(1)],
        }
    }

    /// All coefficients multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        ModelBParams {
            h_x: self.h_x.iter().map(|x| x * factor).collect(),
            h_z: self.h_z.iter().map(|x| x * factor).collect(),
            j: self.j.iter().map(|x| x * factor).collect(),
        }
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(FlabError::ShapeMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// The two-piece kicked Ising schedule.
pub fn make_model_b(params: &ModelBParams, n: usize) -> Result<DriveSchedule> {
    check_len("h_x", n, params.h_x.len())?;
    check_len("h_z", n, params.h_z.len())?;
    check_len("J", n.saturating_sub(1), params.j.len())?;
    let mut first = PieceSpec::zeros(n, 0.5);
    let mut second = PieceSpec::zeros(n, 0.5);
    for l in 1..=n {
        first.set_field(l, Axis::Z, params.h_z[l - 1]);
        second.set_field(l, Axis::X, params.h_x[l - 1]);
    }
    for l in 1..n {
        first.set_coupling(l, Axis::Z, Axis::Z, params.j[l - 1]);
    }
    DriveSchedule::from_boundaries(n, vec![0.0, 0.5, 1.0], vec![first, second])
}

/// Structural description `(n, T, alpha, gamma)` of a family of schedules.
///
/// `alpha[j][u]` enables on-site terms of axis `u` in piece `j`;
/// `gamma[j][3u + v]` enables `sigma^u sigma^v` couplings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleDescriptor {
    pub boundaries: Vec<f64>,
    pub alpha: Vec<[u8; 3]>,
    pub gamma: Vec<[u8; 9]>,
}

impl EnsembleDescriptor {
    pub fn n_pieces(&self) -> usize {
        self.alpha.len()
    }

    /// The kicked Ising family: `alpha_1^z = gamma_1^{zz} = alpha_2^x = 1`, `T = (0, 1/2, 1)`.
    pub fn model_b() -> Self {
        let mut alpha = vec![[0u8; 3]; 2];
        let mut gamma = vec![[0u8; 9]; 2];
        alpha[0][Axis::Z.index()] = 1;
        gamma[0][3 * Axis::Z.index() + Axis::Z.index()] = 1;
        alpha[1][Axis::X.index()] = 1;
        EnsembleDescriptor {
            boundaries: vec![0.0, 0.5, 1.0],
            alpha,
            gamma,
        }
    }

    /// `alpha_1^x = alpha_1^z = gamma_1^{zz} = 1`.
    pub fn has_generic_first_piece(&self) -> bool {
        !self.alpha.is_empty()
            && self.alpha[0][Axis::X.index()] == 1
            && self.alpha[0][Axis::Z.index()] == 1
            && self.gamma[0][3 * Axis::Z.index() + Axis::Z.index()] == 1
    }

    fn validate(&self) -> Result<()> {
        let n = self.alpha.len();
        if n == 0 {
            return Err(FlabError::InvalidSchedule("ensemble has no pieces".into()));
        }
        check_len("gamma", n, self.gamma.len())?;
        check_len("boundaries", n + 1, self.boundaries.len())?;
        let flags_ok = self
            .alpha
            .iter()
            .flatten()
            .chain(self.gamma.iter().flatten())
            .all(|&f| f <= 1);
        if !flags_ok {
            return Err(FlabError::InvalidArgument("flags must be 0 or 1".into()));
        }
        Ok(())
    }
}

/// Per-piece coefficient arrays `h_{j,l}^u` and `J_{j,l}^{u,v}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleCoefficients {
    pub on_site: Vec<Vec<[f64; 3]>>,
    pub coupling: Vec<Vec<[f64; 9]>>,
}

/// Realize one member of an ensemble: disabled terms are forced to zero.
pub fn make_ensemble_schedule(
    desc: &EnsembleDescriptor,
    coeffs: &EnsembleCoefficients,
    n: usize,
) -> Result<DriveSchedule> {
    desc.validate()?;
    let pieces_n = desc.n_pieces();
    check_len("on-site piece count", pieces_n, coeffs.on_site.len())?;
    check_len("coupling piece count", pieces_n, coeffs.coupling.len())?;
    let mut pieces = Vec::with_capacity(pieces_n);
    for j in 0..pieces_n {
        check_len("on-site sites", n, coeffs.on_site[j].len())?;
        check_len(
            "coupling bonds",
            n.saturating_sub(1),
            coeffs.coupling[j].len(),
        )?;
        let on_site = coeffs.on_site[j]
            .iter()
            .map(|row| std::array::from_fn(|u| if desc.alpha[j][u] == 1 { row[u] } else { 0.0 }))
            .collect();
        let coupling = coeffs.coupling[j]
            .iter()
            .map(|row| std::array::from_fn(|uv| if desc.gamma[j][uv] == 1 { row[uv] } else { 0.0 }))
            .collect();
        pieces.push(PieceSpec {
            on_site,
            coupling,
            duration: 0.0,
        });
    }
    DriveSchedule::from_boundaries(n, desc.boundaries.clone(), pieces)
}

/// Closed interval used for uniform coefficient sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite()) {
            return Err(FlabError::InvalidArgument(
                "interval bounds must be finite".into(),
            ));
        }
        if low > high {
            return Err(FlabError::InvalidArgument(format!(
                "empty interval [{low}, {high}]"
            )));
        }
        Ok(Interval { low, high })
    }

    fn sampler(&self) -> Result<Uniform<f64>> {
        Interval::new(self.low, self.high)?;
        Ok(Uniform::new_inclusive(self.low, self.high))
    }
}

impl Default for Interval {
    fn default() -> Self {
        DEFAULT_INTERVAL
    }
}

/// Independent uniform draws for every kicked-model coefficient
/// (order: `h_x`, then `h_z`, then `J`).
pub fn sample_model_b<R: Rng + ?Sized>(
    n: usize,
    bounds: Interval,
    rng: &mut R,
) -> Result<ModelBParams> {
    let dist = bounds.sampler()?;
    let h_x = (0..n).map(|_| dist.sample(rng)).collect();
    let h_z = (0..n).map(|_| dist.sample(rng)).collect();
    let j = (0..n.saturating_sub(1)).map(|_| dist.sample(rng)).collect();
    Ok(ModelBParams { h_x, h_z, j })
}

/// Independent uniform draws for every ensemble coefficient, including the
/// ones the flags disable.
pub fn sample_ensemble<R: Rng + ?Sized>(
    desc: &EnsembleDescriptor,
    n: usize,
    bounds: Interval,
    rng: &mut R,
) -> Result<EnsembleCoefficients> {
    desc.validate()?;
    let dist = bounds.sampler()?;
    let mut on_site = Vec::with_capacity(desc.n_pieces());
    let mut coupling = Vec::with_capacity(desc.n_pieces());
    for _ in 0..desc.n_pieces() {
        on_site.push(
            (0..n)
                .map(|_| std::array::from_fn(|_| dist.sample(rng)))
                .collect(),
        );
        coupling.push(
            (0..n.saturating_sub(1))
                .map(|_| std::array::from_fn(|_| dist.sample(rng)))
                .collect(),
        );
    }
    Ok(EnsembleCoefficients { on_site, coupling })
}
