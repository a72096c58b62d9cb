//! Finite-M periodicity statistics for sampled trajectories.
//!
//! A trajectory is sampled at `m + x_k` for periods `m = 0..M` and offsets
//! `x_k` inside one period. The reference profile is the time average over
//! periods, and a period's distance is the quadrature of the squared deviation
//! (scalar signals) or of the trace distance (density-matrix signals).

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::dynamics::evolved_coordinates;
use crate::dynamics::{
    normalize_subsystem, trace_distance, Bipartition, DensityMatrix, Observable,
};
use crate::error::{FlabError, Result};
use crate::floquet::{FloquetSystem, SpectralDecomposition};
use crate::linalg::c64;
use crate::spin_model::DriveSchedule;
use crate::states::{eigenspace_overlaps, StateVector};

pub const DEFAULT_SAMPLES_PER_PERIOD: usize = 32;
/// Default cap on `M * K` trajectory evaluations.
pub const DEFAULT_EVAL_BUDGET: usize = 20_000_000;
/// Grid points closer than this to a piece boundary count as hitting it.
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Periods evolved together in one matrix product.
const PERIOD_CHUNK: usize = 256;

/// Quantities a signal can take: they can be averaged and compared.
pub trait SignalValue: Clone {
    fn mean_of(items: &[&Self]) -> Result<Self>;
    /// Integrand of the per-period distance.
    fn distance(&self, reference: &Self) -> Result<f64>;
}

impl SignalValue for f64 {
    fn mean_of(items: &[&Self]) -> Result<Self> {
        if items.is_empty() {
            return Err(FlabError::InvalidArgument("mean of no values".into()));
        }
        // shifted by the first value so a constant signal has an exact mean
        let x0 = *items[0];
        Ok(x0 + items.iter().map(|&&x| x - x0).sum::<f64>() / items.len() as f64)
    }

    fn distance(&self, reference: &Self) -> Result<f64> {
        Ok((self - reference).powi(2))
    }
}

impl SignalValue for DensityMatrix {
    fn mean_of(items: &[&Self]) -> Result<Self> {
        DensityMatrix::mean(items.iter().copied())
    }

    fn distance(&self, reference: &Self) -> Result<f64> {
        trace_distance(self, reference)
    }
}

/// `x_k = (k + 1/2) / K`.
pub fn midpoint_grid(k: usize) -> Vec<f64> {
    (0..k).map(|i| (i as f64 + 0.5) / k as f64).collect()
}

/// Reject grids that place a sample on an interior piece boundary.
pub fn validate_grid(schedule: &DriveSchedule, offsets: &[f64]) -> Result<()> {
    check_offsets(offsets)?;
    for &x in offsets {
        if schedule
            .interior_boundaries()
            .iter()
            .any(|&t| (x - t).abs() < BOUNDARY_TOL)
        {
            return Err(FlabError::GridHitsBoundary { x });
        }
    }
    Ok(())
}

fn check_offsets(offsets: &[f64]) -> Result<()> {
    if offsets.is_empty() {
        return Err(FlabError::InvalidArgument("K must be >= 1".into()));
    }
    if !offsets.iter().all(|x| (0.0..1.0).contains(x)) {
        return Err(FlabError::InvalidArgument(
            "offsets must lie in [0, 1)".into(),
        ));
    }
    if offsets.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FlabError::InvalidArgument(
            "offsets must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Values of a trajectory at `m + x_k`, stored row-major (`M` rows of `K`).
#[derive(Debug, Clone)]
pub struct PeriodSampledSignal<T> {
    offsets: Vec<f64>,
    values: Vec<T>,
}

impl<T: SignalValue> PeriodSampledSignal<T> {
    pub fn new(offsets: Vec<f64>, values: Vec<T>) -> Result<Self> {
        check_offsets(&offsets)?;
        let k = offsets.len();
        if values.is_empty() || !values.len().is_multiple_of(k) {
            return Err(FlabError::ShapeMismatch {
                what: "signal values (multiple of K)",
                expected: k,
                found: values.len(),
            });
        }
        Ok(PeriodSampledSignal { offsets, values })
    }

    /// Number of periods `M`.
    pub fn n_periods(&self) -> usize {
        self.values.len() / self.offsets.len()
    }

    /// Samples per period `K`.
    pub fn samples_per_period(&self) -> usize {
        self.offsets.len()
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn value(&self, m: usize, k: usize) -> &T {
        &self.values[m * self.offsets.len() + k]
    }

    pub fn row(&self, m: usize) -> &[T] {
        let k = self.offsets.len();
        &self.values[m * k..(m + 1) * k]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// View the signal with period `p` (in units of the drive period): `p`
    /// consecutive rows become one row, and trailing periods that do not fill
    /// a block are dropped.
    pub fn reblock(&self, p: usize) -> Result<Self> {
        let m = self.n_periods();
        if p == 0 || m / p == 0 {
            return Err(FlabError::InvalidArgument(format!(
                "cannot re-block {m} periods into blocks of {p}"
            )));
        }
        let offsets = (0..p)
            .flat_map(|r| self.offsets.iter().map(move |x| (r as f64 + x) / p as f64))
            .collect();
        let used = (m / p) * p * self.offsets.len();
        Ok(PeriodSampledSignal {
            offsets,
            values: self.values[..used].to_vec(),
        })
    }
}

/// Evolves one initial state along a fixed grid of in-period offsets.
///
/// For offset `x_k` the frame `W_k = U(0, x_k) B` is cached, so the state at
/// `m + x_k` is `W_k (lambda^m * a)` with `a = B^dagger psi0`.
pub struct SignalSampler<'a> {
    decomp: &'a SpectralDecomposition,
    coords: Vec<c64>,
    offsets: Vec<f64>,
    frames: Vec<Mat<c64>>,
    budget: usize,
    n_qubits: usize,
}

impl<'a> SignalSampler<'a> {
    pub fn new(
        system: &FloquetSystem,
        decomp: &'a SpectralDecomposition,
        state0: &StateVector,
        offsets: Vec<f64>,
    ) -> Result<Self> {
        validate_grid(system.schedule(), &offsets)?;
        if decomp.dim() != system.dim() {
            return Err(FlabError::DimensionMismatch {
                expected: system.dim(),
                found: decomp.dim(),
            });
        }
        let overlaps = eigenspace_overlaps(state0, decomp)?;
        let frames = system.evolve_frames(&offsets, decomp.basis())?;
        Ok(SignalSampler {
            decomp,
            coords: overlaps.coordinates().to_vec(),
            offsets,
            frames,
            budget: DEFAULT_EVAL_BUDGET,
            n_qubits: system.schedule().n_qubits(),
        })
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    fn check_budget(&self, m: usize) -> Result<()> {
        if m == 0 {
            return Err(FlabError::InvalidArgument("M must be >= 1".into()));
        }
        let requested = m.saturating_mul(self.offsets.len());
        if requested > self.budget {
            return Err(FlabError::BudgetExceeded {
                requested,
                budget: self.budget,
            });
        }
        Ok(())
    }

    /// Eigenbasis coordinates for periods `start..start + len`, one column per period.
    fn coordinate_block(&self, start: usize, len: usize) -> Mat<c64> {
        let dim = self.coords.len();
        let mut out = Mat::<c64>::zeros(dim, len);
        for c in 0..len {
            let evolved = evolved_coordinates(&self.coords, self.decomp, (start + c) as u64);
            for i in 0..dim {
                out[(i, c)] = evolved[i];
            }
        }
        out
    }

    /// Visit the states `psi(m + x_k)` in blocks: `f(k, m_start, states)` where
    /// column `c` of `states` is the state at period `m_start + c`.
    fn for_each_block(
        &self,
        m: usize,
        mut f: impl FnMut(usize, usize, &Mat<c64>) -> Result<()>,
    ) -> Result<()> {
        let mut start = 0;
        while start < m {
            let len = PERIOD_CHUNK.min(m - start);
            let phi = self.coordinate_block(start, len);
            for (k, w) in self.frames.iter().enumerate() {
                let states = w * &phi;
                f(k, start, &states)?;
            }
            start += len;
        }
        Ok(())
    }

    pub fn scalar(&self, a: &Observable, m: usize) -> Result<PeriodSampledSignal<f64>> {
        self.check_budget(m)?;
        if a.dim() != self.coords.len() {
            return Err(FlabError::DimensionMismatch {
                expected: self.coords.len(),
                found: a.dim(),
            });
        }
        let kk = self.offsets.len();
        let mut values = vec![0.0; m * kk];
        self.for_each_block(m, |k, start, states| {
            let applied = a.as_mat() * states;
            for c in 0..states.ncols() {
                let v: f64 = (0..states.nrows())
                    .map(|i| (states[(i, c)].conj() * applied[(i, c)]).re)
                    .sum();
                values[(start + c) * kk + k] = v;
            }
            Ok(())
        })?;
        PeriodSampledSignal::new(self.offsets.clone(), values)
    }

    pub fn reduced(
        &self,
        subsystem: &[usize],
        m: usize,
    ) -> Result<PeriodSampledSignal<DensityMatrix>> {
        self.check_budget(m)?;
        let sites = normalize_subsystem(subsystem, self.n_qubits)?;
        let part = Bipartition::new(&sites, self.n_qubits);
        let kk = self.offsets.len();
        let mut values: Vec<Option<DensityMatrix>> = vec![None; m * kk];
        self.for_each_block(m, |k, start, states| {
            for c in 0..states.ncols() {
                let rho = part.reduce(|i| states[(i, c)]);
                values[(start + c) * kk + k] = Some(DensityMatrix::from_trusted(rho));
            }
            Ok(())
        })?;
        PeriodSampledSignal::new(
            self.offsets.clone(),
            values.into_iter().map(Option::unwrap).collect(),
        )
    }
}

/// `<psi(m + x_k)| A |psi(m + x_k)>` on the midpoint grid.
pub fn sample_scalar_signal(
    state0: &StateVector,
    system: &FloquetSystem,
    decomp: &SpectralDecomposition,
    a: &Observable,
    m: usize,
    k: usize,
) -> Result<PeriodSampledSignal<f64>> {
    SignalSampler::new(system, decomp, state0, midpoint_grid(k))?.scalar(a, m)
}

/// Reduced density matrices of `subsystem` on the midpoint grid.
pub fn sample_rdm_signal(
    state0: &StateVector,
    system: &FloquetSystem,
    decomp: &SpectralDecomposition,
    subsystem: &[usize],
    m: usize,
    k: usize,
) -> Result<PeriodSampledSignal<DensityMatrix>> {
    SignalSampler::new(system, decomp, state0, midpoint_grid(k))?.reduced(subsystem, m)
}

/// Pointwise mean over periods.
pub fn reference_profile<T: SignalValue>(signal: &PeriodSampledSignal<T>) -> Result<Vec<T>> {
    let m = signal.n_periods();
    if m < 2 {
        return Err(FlabError::InvalidArgument(
            "reference profile needs M >= 2".into(),
        ));
    }
    (0..signal.samples_per_period())
        .map(|k| {
            let column: Vec<&T> = (0..m).map(|r| signal.value(r, k)).collect();
            T::mean_of(&column)
        })
        .collect()
}

/// Midpoint-rule distance of every period from the profile.
pub fn period_distances<T: SignalValue>(
    signal: &PeriodSampledSignal<T>,
    profile: &[T],
) -> Result<Vec<f64>> {
    let k = signal.samples_per_period();
    if profile.len() != k {
        return Err(FlabError::ShapeMismatch {
            what: "reference profile",
            expected: k,
            found: profile.len(),
        });
    }
    (0..signal.n_periods())
        .map(|m| {
            let mut total = 0.0;
            for (v, r) in signal.row(m).iter().zip(profile) {
                total += v.distance(r)?;
            }
            Ok(total / k as f64)
        })
        .collect()
}

/// Fraction of periods with distance at most `eps`.
pub fn good_fraction_at(distances: &[f64], eps: f64) -> f64 {
    distances.iter().filter(|&&d| d <= eps).count() as f64 / distances.len() as f64
}

/// Smallest `eps >= 0` with `#{m : d_m <= eps} / M >= 1 - eps`.
///
/// The left side is a right-continuous step function and the right side is
/// continuous and decreasing, so the minimum sits either on a distance value
/// or where `1 - eps` meets a level `i / M`.
pub fn epsilon_hat(distances: &[f64]) -> Result<f64> {
    if distances.is_empty() {
        return Err(FlabError::InvalidArgument(
            "epsilon_hat needs M >= 1".into(),
        ));
    }
    if distances.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
        return Err(FlabError::InvalidArgument(
            "distances must be finite and >= 0".into(),
        ));
    }
    let m = distances.len();
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let count = |eps: f64| sorted.partition_point(|&d| d <= eps);
    // level crossings: eps = (M - i) / M needs at least i good periods
    let mut best = 1.0f64;
    for i in 0..=m {
        let eps = (m - i) as f64 / m as f64;
        if eps < best && count(eps) >= i {
            best = eps;
        }
    }
    for (idx, &d) in sorted.iter().enumerate() {
        if d >= best {
            break;
        }
        // all entries up to the last duplicate of d are good
        let good = sorted[idx..].partition_point(|&x| x <= d) + idx;
        if good as f64 >= (1.0 - d) * m as f64 - 1e-12 * m as f64 {
            best = d;
            break;
        }
    }
    Ok(best)
}

/// `sqrt(D2 / D_eff)`.
pub fn theory_bound_scalar(d2: usize, d_eff: f64) -> f64 {
    (d2 as f64 / d_eff).sqrt()
}

/// `(d_S^2 D2 / D_eff)^(1/4)`.
pub fn theory_bound_rdm(d_s: usize, d2: usize, d_eff: f64) -> f64 {
    ((d_s * d_s) as f64 * d2 as f64 / d_eff).powf(0.25)
}

/// Finite-M allowance `5 (D2/D_eff + 1/D_eff) / sqrt(M)`.
pub fn slack(m: usize, d2: usize, d_eff: f64) -> f64 {
    5.0 * (d2 as f64 / d_eff + 1.0 / d_eff) / (m as f64).sqrt()
}

/// Threshold on `|S|` below which the reduced-state bound shrinks with `N`.
pub const SUBSYSTEM_FRACTION: f64 = 0.29248;

pub fn subsystem_within_threshold(l: usize, n: usize) -> bool {
    l as f64 <= SUBSYSTEM_FRACTION * n as f64
}

/// Summary of one periodicity measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicityReport {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub epsilon_hat: f64,
    pub theory_bound: f64,
    pub slack: f64,
    pub bound_satisfied: bool,
    pub mean_distance: f64,
    /// `D2 / D_eff + slack`, the allowance for `mean_distance`.
    pub equilibration_bound: f64,
    pub equilibration_satisfied: bool,
    #[serde(rename = "D2")]
    pub d2: usize,
    pub d_eff: f64,
    pub distances: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_profile: Option<Vec<f64>>,
}

impl PeriodicityReport {
    fn build(
        m: usize,
        k: usize,
        distances: Vec<f64>,
        theory_bound: f64,
        d2: usize,
        d_eff: f64,
    ) -> Result<Self> {
        let eps = epsilon_hat(&distances)?;
        let s = slack(m, d2, d_eff);
        let mean_distance = distances.iter().sum::<f64>() / distances.len() as f64;
        let equilibration_bound = d2 as f64 / d_eff + s;
        Ok(PeriodicityReport {
            m,
            k,
            epsilon_hat: eps,
            theory_bound,
            slack: s,
            bound_satisfied: eps <= theory_bound + s,
            mean_distance,
            equilibration_bound,
            equilibration_satisfied: mean_distance <= equilibration_bound,
            d2,
            d_eff,
            distances,
            reference_profile: None,
        })
    }

    pub fn scalar(signal: &PeriodSampledSignal<f64>, d2: usize, d_eff: f64) -> Result<Self> {
        let profile = reference_profile(signal)?;
        let distances = period_distances(signal, &profile)?;
        let mut r = Self::build(
            signal.n_periods(),
            signal.samples_per_period(),
            distances,
            theory_bound_scalar(d2, d_eff),
            d2,
            d_eff,
        )?;
        r.reference_profile = Some(profile);
        Ok(r)
    }

    pub fn reduced(
        signal: &PeriodSampledSignal<DensityMatrix>,
        d2: usize,
        d_eff: f64,
    ) -> Result<Self> {
        let profile = reference_profile(signal)?;
        let distances = period_distances(signal, &profile)?;
        let d_s = profile[0].dim();
        Self::build(
            signal.n_periods(),
            signal.samples_per_period(),
            distances,
            theory_bound_rdm(d_s, d2, d_eff),
            d2,
            d_eff,
        )
    }

    pub fn good_fraction_at(&self, eps: f64) -> f64 {
        good_fraction_at(&self.distances, eps)
    }
}
