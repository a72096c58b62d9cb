//! Statistical checks of the spectral and periodicity bounds.
//!
//! Every check is deterministic given its seed: sample `i` draws from
//! `stream_rng(seed, i)`. Reports keep the raw per-sample numbers so the pass
//! thresholds can be re-audited.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::dynamics::{DensityMatrix, Observable};
use crate::error::{FlabError, Result};
use crate::floquet::{
    degeneracy_metrics, degeneracy_metrics_unchecked, floquet_operator, spectral_decomposition,
    FloquetSystem, SpectralDecomposition, UnitaryMatrix, DEFAULT_CLUSTER_TOL, DEFAULT_RATIO_TOL,
};
use crate::linalg::{hermitian_eigenvalues, spectral_norm, wrap_phase, Axis};
use crate::periodicity::{
    epsilon_hat, midpoint_grid, period_distances, reference_profile, slack, theory_bound_scalar,
    PeriodSampledSignal, PeriodicityReport, SignalSampler,
};
use crate::spin_model::{
    build_piece_matrix, make_ensemble_schedule, make_model_b, sample_ensemble, DriveSchedule,
    EnsembleDescriptor, Interval, ModelBParams,
};
use crate::states::{
    effective_dimension, eigenspace_overlaps, sample_haar_product_state, stream_rng, StateVector,
};

/// Fraction of samples that must satisfy a per-sample bound.
pub const REQUIRED_FRACTION: f64 = 0.95;
/// Standard errors allowed above a Monte Carlo bound.
pub const MC_SIGMAS: f64 = 3.0;
/// Additive allowance on propagator-distance bounds.
pub const PROPAGATOR_SLACK: f64 = 1e-9;
/// Eigenphase accuracy assumed when matching sorted spectra.
pub const EIGEN_TOL: f64 = 1e-12;
pub const SLOPE_TARGET: f64 = 2.0;
pub const SLOPE_TOL: f64 = 0.2;
/// Distances at or below this count as periodic when classifying a drive.
pub const CLASSIFY_EPS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub values: BTreeMap<String, f64>,
    #[serde(default)]
    pub series: BTreeMap<String, Vec<f64>>,
}

impl VerificationReport {
    fn new(check: &str, measured: f64, bound: f64, pass: bool, samples: usize, seed: u64) -> Self {
        VerificationReport {
            check: check.to_string(),
            measured,
            bound,
            pass,
            samples,
            seed,
            values: BTreeMap::new(),
            series: BTreeMap::new(),
        }
    }

    fn value(mut self, key: &str, v: f64) -> Self {
        if v.is_finite() {
            self.values.insert(key.to_string(), v);
        }
        self
    }

    fn series(mut self, key: &str, v: Vec<f64>) -> Self {
        self.series.insert(key.to_string(), v);
        self
    }

    /// One CSV row: `check,measured,bound,pass,seed`.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{},{}",
            self.check, self.measured, self.bound, self.pass, self.seed
        )
    }
}

pub const CSV_HEADER: &str = "check,measured,bound,pass,seed";

fn fraction(flags: impl Iterator<Item = bool>) -> (f64, usize) {
    let (mut hit, mut total) = (0usize, 0usize);
    for f in flags {
        total += 1;
        hit += f as usize;
    }
    (
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        },
        total,
    )
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn require_unit_norm(a: &Observable) -> Result<()> {
    if (a.norm() - 1.0).abs() > 1e-9 {
        return Err(FlabError::InvalidArgument(format!(
            "observable must have unit operator norm, found {}",
            a.norm()
        )));
    }
    Ok(())
}

/// Shared settings of a batch of periodicity runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    /// Haar product initial states; state `i` uses `stream_rng(seed, i)`.
    pub samples: usize,
    pub m: usize,
    pub k: usize,
    pub ratio_tol: f64,
    pub seed: u64,
}

impl RunPlan {
    pub fn new(samples: usize, m: usize, k: usize, seed: u64) -> Self {
        RunPlan {
            samples,
            m,
            k,
            ratio_tol: DEFAULT_RATIO_TOL,
            seed,
        }
    }
}

/// One initial state: its sampled signal and the resulting report.
#[derive(Debug, Clone)]
pub struct PeriodicityRun<T> {
    pub signal: PeriodSampledSignal<T>,
    pub report: PeriodicityReport,
}

fn periodicity_runs<T>(
    system: &FloquetSystem,
    decomp: &SpectralDecomposition,
    plan: &RunPlan,
    measure: impl Fn(&SignalSampler) -> Result<PeriodSampledSignal<T>>,
    summarize: impl Fn(&PeriodSampledSignal<T>, usize, f64) -> Result<PeriodicityReport>,
) -> Result<Vec<PeriodicityRun<T>>> {
    let d2 = degeneracy_metrics(decomp, plan.ratio_tol)?.d2;
    let n = system.schedule().n_qubits();
    (0..plan.samples)
        .map(|i| {
            let psi = sample_haar_product_state(n, &mut stream_rng(plan.seed, i as u64))?;
            let d_eff = effective_dimension(&eigenspace_overlaps(&psi, decomp)?);
            let signal = measure(&SignalSampler::new(
                system,
                decomp,
                &psi,
                midpoint_grid(plan.k),
            )?)?;
            let report = summarize(&signal, d2, d_eff)?;
            Ok(PeriodicityRun { signal, report })
        })
        .collect()
}

/// Scalar periodicity measurements over Haar product initial states.
pub fn scalar_periodicity_runs(
    system: &FloquetSystem,
    decomp: &SpectralDecomposition,
    a: &Observable,
    plan: &RunPlan,
) -> Result<Vec<PeriodicityRun<f64>>> {
    require_unit_norm(a)?;
    periodicity_runs(
        system,
        decomp,
        plan,
        |s| s.scalar(a, plan.m),
        PeriodicityReport::scalar,
    )
}

/// Reduced-state periodicity measurements over Haar product initial states.
pub fn rdm_periodicity_runs(
    system: &FloquetSystem,
    decomp: &SpectralDecomposition,
    subsystem: &[usize],
    plan: &RunPlan,
) -> Result<Vec<PeriodicityRun<DensityMatrix>>> {
    periodicity_runs(
        system,
        decomp,
        plan,
        |s| s.reduced(subsystem, plan.m),
        PeriodicityReport::reduced,
    )
}

fn runs_report(
    check: &str,
    runs: &[PeriodicityReport],
    seed: u64,
    use_mean: bool,
) -> VerificationReport {
    let (frac, total) = if use_mean {
        fraction(runs.iter().map(|r| r.equilibration_satisfied))
    } else {
        fraction(runs.iter().map(|r| r.bound_satisfied))
    };
    let worst_ratio = runs
        .iter()
        .map(|r| {
            if use_mean {
                r.mean_distance / r.equilibration_bound
            } else {
                r.epsilon_hat / (r.theory_bound + r.slack)
            }
        })
        .fold(0.0, f64::max);
    VerificationReport::new(
        check,
        frac,
        REQUIRED_FRACTION,
        frac >= REQUIRED_FRACTION,
        total,
        seed,
    )
    .value("worst_ratio", worst_ratio)
    .series("d_eff", runs.iter().map(|r| r.d_eff).collect())
    .series("D2", runs.iter().map(|r| r.d2 as f64).collect())
    .series(
        "mean_distance",
        runs.iter().map(|r| r.mean_distance).collect(),
    )
    .series(
        "equilibration_bound",
        runs.iter().map(|r| r.equilibration_bound).collect(),
    )
    .series("epsilon_hat", runs.iter().map(|r| r.epsilon_hat).collect())
    .series(
        "epsilon_bound",
        runs.iter().map(|r| r.theory_bound + r.slack).collect(),
    )
}

/// Mean per-period distance against `D2/D_eff + slack(M)`.
pub fn equilibration_report(runs: &[PeriodicityReport], seed: u64) -> VerificationReport {
    runs_report("equilibration_bound", runs, seed, true)
}

/// `epsilon_hat` against the scalar (or reduced-state) theory bound plus slack.
pub fn epsilon_report(check: &str, runs: &[PeriodicityReport], seed: u64) -> VerificationReport {
    runs_report(check, runs, seed, false)
}

pub fn verify_equilibration_bound(
    system: &FloquetSystem,
    decomp: &SpectralDecomposition,
    a: &Observable,
    plan: &RunPlan,
) -> Result<VerificationReport> {
    let runs = scalar_periodicity_runs(system, decomp, a, plan)?;
    let reports: Vec<PeriodicityReport> = runs.into_iter().map(|r| r.report).collect();
    Ok(equilibration_report(&reports, plan.seed))
}

/// Monte Carlo mean of `sum_j <phi|Pi_j|phi>^2` against `D1 (2/3)^N`.
pub fn verify_haar_projector_bound(
    decomp: &SpectralDecomposition,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<VerificationReport> {
    if samples < 1000 {
        return Err(FlabError::InvalidArgument(
            "projector bound needs >= 1000 samples".into(),
        ));
    }
    if decomp.dim() != 1 << n {
        return Err(FlabError::DimensionMismatch {
            expected: 1 << n,
            found: decomp.dim(),
        });
    }
    let d1 = decomp
        .multiplicities()
        .iter()
        .map(|&d| (d * d) as f64)
        .sum::<f64>()
        / decomp.dim() as f64;
    let sums: Vec<f64> = (0..samples)
        .map(|i| {
            let psi = sample_haar_product_state(n, &mut stream_rng(seed, i as u64))?;
            let o = eigenspace_overlaps(&psi, decomp)?;
            Ok(o.weights().iter().map(|c| c.powi(4)).sum())
        })
        .collect::<Result<_>>()?;
    let mean = sums.iter().sum::<f64>() / samples as f64;
    let var = sums.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
    let se = (var / samples as f64).sqrt();
    let bound = d1 * (2.0f64 / 3.0).powi(n as i32);
    Ok(VerificationReport::new(
        "haar_projector_bound",
        mean,
        bound,
        mean <= bound + MC_SIGMAS * se,
        samples,
        seed,
    )
    .value("standard_error", se)
    .value("D1", d1))
}

/// `(3/2 - 1e-6)^N`.
pub fn deff_threshold(n: usize) -> f64 {
    (1.5 - 1e-6f64).powi(n as i32)
}

/// Fraction of Haar product states whose effective dimension exceeds the threshold.
pub fn deff_threshold_experiment(
    decomp: &SpectralDecomposition,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<VerificationReport> {
    if samples == 0 {
        return Err(FlabError::InvalidArgument("samples must be >= 1".into()));
    }
    let d1 = decomp
        .multiplicities()
        .iter()
        .map(|&d| (d * d) as f64)
        .sum::<f64>()
        / decomp.dim() as f64;
    let threshold = deff_threshold(n);
    let d_effs: Vec<f64> = (0..samples)
        .map(|i| {
            let psi = sample_haar_product_state(n, &mut stream_rng(seed, i as u64))?;
            Ok(effective_dimension(&eigenspace_overlaps(&psi, decomp)?))
        })
        .collect::<Result<_>>()?;
    let (frac, _) = fraction(d_effs.iter().map(|&d| d > threshold));
    Ok(VerificationReport::new(
        "deff_threshold",
        frac,
        REQUIRED_FRACTION,
        frac >= REQUIRED_FRACTION,
        samples,
        seed,
    )
    .value("threshold", threshold)
    .value("median_d_eff", median(&d_effs))
    .value("D1", d1)
    .series("d_eff", d_effs))
}

/// Tolerances of a non-degeneracy scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanTolerances {
    pub cluster_tol: f64,
    pub ratio_tol: f64,
    /// Smallest acceptable `gap_margin` for a draw to count as robustly generic.
    pub min_gap_margin: f64,
}

impl Default for ScanTolerances {
    fn default() -> Self {
        ScanTolerances {
            cluster_tol: DEFAULT_CLUSTER_TOL,
            ratio_tol: DEFAULT_RATIO_TOL,
            min_gap_margin: 1e-6,
        }
    }
}

struct ScanOutcome {
    marginal: bool,
    d1: f64,
    d2: usize,
    gap_margin: f64,
}

fn scan_one(schedule: &DriveSchedule, tol: &ScanTolerances) -> Result<ScanOutcome> {
    let d = spectral_decomposition(&floquet_operator(schedule)?, tol.cluster_tol)?;
    let m = degeneracy_metrics_unchecked(&d, tol.ratio_tol)?;
    Ok(ScanOutcome {
        marginal: d.is_marginal(),
        d1: m.d1,
        d2: m.d2,
        gap_margin: m.gap_margin,
    })
}

/// Fraction of random ensemble members with `D1 = D2 = 1`, plus a control
/// run with every coupling switched off, which must be degenerate (`D2 >= 2`).
pub fn nondegeneracy_scan(
    desc: &EnsembleDescriptor,
    n: usize,
    n_samples: usize,
    bounds: Interval,
    tol: ScanTolerances,
    seed: u64,
) -> Result<VerificationReport> {
    if n_samples == 0 {
        return Err(FlabError::InvalidArgument("n_samples must be >= 1".into()));
    }
    let mut control_desc = desc.clone();
    control_desc.gamma.iter_mut().for_each(|g| *g = [0; 9]);
    let mut d1s = Vec::new();
    let mut d2s = Vec::new();
    let mut margins = Vec::new();
    let mut control_d2 = Vec::new();
    let (mut marginal, mut control_marginal) = (0usize, 0usize);
    let (mut generic, mut robust, mut control_degenerate) = (0usize, 0usize, 0usize);
    for i in 0..n_samples {
        let coeffs = sample_ensemble(desc, n, bounds, &mut stream_rng(seed, i as u64))?;
        let out = scan_one(&make_ensemble_schedule(desc, &coeffs, n)?, &tol)?;
        if out.marginal {
            marginal += 1;
        } else {
            let is_generic = out.d1 == 1.0 && out.d2 == 1;
            generic += is_generic as usize;
            robust += (is_generic && out.gap_margin > tol.min_gap_margin) as usize;
        }
        d1s.push(out.d1);
        d2s.push(out.d2 as f64);
        margins.push(out.gap_margin.min(f64::MAX));
        if n >= 2 {
            let ctrl = scan_one(&make_ensemble_schedule(&control_desc, &coeffs, n)?, &tol)?;
            if ctrl.marginal {
                control_marginal += 1;
            } else {
                control_degenerate += (ctrl.d2 >= 2) as usize;
            }
            control_d2.push(ctrl.d2 as f64);
        }
    }
    let counted = n_samples - marginal;
    let generic_fraction = if counted == 0 {
        0.0
    } else {
        generic as f64 / counted as f64
    };
    let robust_fraction = if counted == 0 {
        0.0
    } else {
        robust as f64 / counted as f64
    };
    let control_counted = control_d2.len() - control_marginal;
    let control_fraction = if control_counted == 0 {
        f64::NAN
    } else {
        control_degenerate as f64 / control_counted as f64
    };
    let control_ok = n < 2 || control_fraction == 1.0;
    let pass = counted > 0 && robust == counted && control_ok;
    let finite_margins: Vec<f64> = margins.iter().copied().filter(|m| *m < f64::MAX).collect();
    Ok(VerificationReport::new(
        "nondegeneracy_scan",
        robust_fraction,
        1.0,
        pass,
        n_samples,
        seed,
    )
    .value("generic_fraction", generic_fraction)
    .value("robust_fraction", robust_fraction)
    .value("marginal_count", marginal as f64)
    .value("control_degenerate_fraction", control_fraction)
    .value("control_marginal_count", control_marginal as f64)
    .value(
        "min_gap_margin",
        finite_margins.iter().copied().fold(f64::INFINITY, f64::min),
    )
    .value("median_gap_margin", median(&finite_margins))
    .series("D1", d1s)
    .series("D2", d2s)
    .series("gap_margin", margins)
    .series("control_D2", control_d2))
}

fn sorted_quasienergies(u: &UnitaryMatrix) -> Result<Vec<f64>> {
    let values = u
        .as_mat()
        .eigenvalues()
        .map_err(|e| FlabError::Eigen(format!("{e:?}")))?;
    let mut e: Vec<f64> = values.iter().map(|z| wrap_phase(-z.arg())).collect();
    e.sort_by(f64::total_cmp);
    Ok(e)
}

/// `e^{-i(H1 + H2)/2}` for the two pieces of a kicked-model schedule.
fn combined_operator(schedule: &DriveSchedule) -> Result<UnitaryMatrix> {
    let p = schedule.pieces();
    let mut piece = p[0].combine(0.5, &p[1], 0.5);
    piece.duration = 1.0;
    floquet_operator(&DriveSchedule::from_durations(
        schedule.n_qubits(),
        vec![piece],
    )?)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let sxy = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Quasienergy shift between the kicked drive and its time-averaged
/// Hamiltonian as all coefficients are scaled by `eps`.
pub fn quasienergy_perturbation_scaling(
    g: &ModelBParams,
    n: usize,
    eps_list: &[f64],
) -> Result<VerificationReport> {
    if eps_list.len() < 2 || eps_list.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
        return Err(FlabError::InvalidArgument(
            "need >= 2 finite, non-negative eps values".into(),
        ));
    }
    let positive: Vec<f64> = eps_list.iter().copied().filter(|e| *e > 0.0).collect();
    let lo = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = positive.iter().copied().fold(0.0, f64::max);
    if !(hi >= 100.0 * lo) {
        return Err(FlabError::InvalidArgument(
            "eps values must span at least two decades".into(),
        ));
    }
    let mut shifts = Vec::with_capacity(eps_list.len());
    let mut op_diffs = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let schedule = make_model_b(&g.scaled(eps), n)?;
        let split = floquet_operator(&schedule)?;
        let combined = combined_operator(&schedule)?;
        let e = sorted_quasienergies(&split)?;
        let e_ref = sorted_quasienergies(&combined)?;
        if e.iter().chain(&e_ref).any(|x| x.abs() >= FRAC_PI_2) {
            return Err(FlabError::InvalidArgument(format!(
                "eps = {eps} puts a quasienergy outside (-pi/2, pi/2)"
            )));
        }
        let diffs: Vec<f64> = e.iter().zip(&e_ref).map(|(a, b)| (a - b).abs()).collect();
        for j in 1..e_ref.len() {
            let gap = e_ref[j] - e_ref[j - 1];
            if gap > 0.0 && gap < 10.0 * EIGEN_TOL && diffs[j].max(diffs[j - 1]) > EIGEN_TOL {
                return Err(FlabError::AmbiguousPhaseMatching {
                    gap,
                    threshold: 10.0 * EIGEN_TOL,
                });
            }
        }
        shifts.push(diffs.iter().copied().fold(0.0, f64::max));
        op_diffs.push(spectral_norm(&(split.as_mat() - combined.as_mat()))?);
    }
    let slope = loglog_slope(eps_list, &shifts);
    let op_slope = loglog_slope(eps_list, &op_diffs);
    let all_zero = shifts.iter().all(|s| *s <= 1e-14);
    let pass = all_zero || slope.is_some_and(|s| (s - SLOPE_TARGET).abs() <= SLOPE_TOL);
    Ok(VerificationReport::new(
        "quasienergy_perturbation_scaling",
        slope.unwrap_or(0.0),
        SLOPE_TARGET,
        pass,
        eps_list.len(),
        0,
    )
    .value("slope_tolerance", SLOPE_TOL)
    .value("operator_norm_slope", op_slope.unwrap_or(f64::NAN))
    .series("eps", eps_list.to_vec())
    .series("max_quasienergy_shift", shifts)
    .series("operator_distance", op_diffs))
}

/// `max_j ||H_j^(1) - H_j^(2)||` over pieces of two schedules on the same boundaries.
pub fn hamiltonian_distance(s1: &DriveSchedule, s2: &DriveSchedule) -> Result<f64> {
    if s1.n_qubits() != s2.n_qubits() {
        return Err(FlabError::DimensionMismatch {
            expected: s1.n_qubits(),
            found: s2.n_qubits(),
        });
    }
    if s1.boundaries() != s2.boundaries() {
        return Err(FlabError::InvalidSchedule("boundary mismatch".into()));
    }
    let n = s1.n_qubits();
    let mut worst = 0.0f64;
    for (p1, p2) in s1.pieces().iter().zip(s2.pieces()) {
        let diff =
            build_piece_matrix(p1, n)?.into_inner() - build_piece_matrix(p2, n)?.into_inner();
        let norm = hermitian_eigenvalues(&diff)?
            .iter()
            .fold(0.0f64, |m, e| m.max(e.abs()));
        worst = worst.max(norm);
    }
    Ok(worst)
}

/// `||U1(0,t) - U2(0,t)|| <= eps_pert * t` on a grid of times.
pub fn propagator_distance_bound(
    s1: &DriveSchedule,
    s2: &DriveSchedule,
    t_grid: &[f64],
) -> Result<VerificationReport> {
    let eps = hamiltonian_distance(s1, s2)?;
    let a = FloquetSystem::new(s1)?;
    let b = FloquetSystem::new(s2)?;
    let mut diffs = Vec::with_capacity(t_grid.len());
    let mut bounds = Vec::with_capacity(t_grid.len());
    let mut ratios = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let d = spectral_norm(&(a.propagator_at(t)?.as_mat() - b.propagator_at(t)?.as_mat()))?;
        let bound = eps * t + PROPAGATOR_SLACK;
        ratios.push(if eps * t > 0.0 { d / (eps * t) } else { 0.0 });
        diffs.push(d);
        bounds.push(bound);
    }
    let pass = diffs.iter().zip(&bounds).all(|(d, b)| d <= b);
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    Ok(VerificationReport::new(
        "propagator_distance_bound",
        worst,
        1.0,
        pass,
        t_grid.len(),
        0,
    )
    .value("eps_pert", eps)
    .series("t", t_grid.to_vec())
    .series("distance", diffs)
    .series("bound", bounds)
    .series("tightness", ratios))
}

/// How a stroboscopic signal repeats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DtcPhase {
    /// Close to periodic with the drive period.
    Periodic,
    /// Not periodic with the drive period, close to periodic with twice the period.
    PeriodDoubled,
    Aperiodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtcReport {
    #[serde(rename = "M")]
    pub m: usize,
    pub z: Vec<f64>,
    pub epsilon_hat_period1: f64,
    pub epsilon_hat_period2: f64,
    pub period1_distances: Vec<f64>,
    pub period2_distances: Vec<f64>,
    #[serde(rename = "D1")]
    pub d1: f64,
    #[serde(rename = "D2")]
    pub d2: usize,
    pub d_eff: f64,
    pub marginal: bool,
    pub theory_bound: f64,
    pub slack: f64,
    pub bound_satisfied: bool,
    pub phase: DtcPhase,
}

/// Stroboscopic `sigma_1^z` trajectory of the kicked model, with `epsilon_hat`
/// for period 1 and for the signal re-blocked into period-2 windows.
pub fn dtc_subharmonic_experiment(
    params: &ModelBParams,
    n: usize,
    state0: &StateVector,
    m: usize,
) -> Result<DtcReport> {
    if m < 4 {
        return Err(FlabError::InvalidArgument(
            "DTC experiment needs M >= 4".into(),
        ));
    }
    let system = FloquetSystem::new(&make_model_b(params, n)?)?;
    let decomp = spectral_decomposition(&system.floquet_operator(), DEFAULT_CLUSTER_TOL)?;
    let metrics = degeneracy_metrics_unchecked(&decomp, DEFAULT_RATIO_TOL)?;
    let d_eff = effective_dimension(&eigenspace_overlaps(state0, &decomp)?);
    let z_op = Observable::pauli_string(n, &[(1, Axis::Z)])?;
    let signal = SignalSampler::new(&system, &decomp, state0, vec![0.0])?.scalar(&z_op, m)?;
    let d1_dist = period_distances(&signal, &reference_profile(&signal)?)?;
    let doubled: PeriodSampledSignal<f64> = signal.reblock(2)?;
    let d2_dist = period_distances(&doubled, &reference_profile(&doubled)?)?;
    let eps1 = epsilon_hat(&d1_dist)?;
    let eps2 = epsilon_hat(&d2_dist)?;
    let phase = if eps1 <= CLASSIFY_EPS {
        DtcPhase::Periodic
    } else if eps2 <= CLASSIFY_EPS {
        DtcPhase::PeriodDoubled
    } else {
        DtcPhase::Aperiodic
    };
    let bound = theory_bound_scalar(metrics.d2, d_eff);
    let s = slack(m, metrics.d2, d_eff);
    Ok(DtcReport {
        m,
        z: signal.values().to_vec(),
        epsilon_hat_period1: eps1,
        epsilon_hat_period2: eps2,
        period1_distances: d1_dist,
        period2_distances: d2_dist,
        d1: metrics.d1,
        d2: metrics.d2,
        d_eff,
        marginal: decomp.is_marginal(),
        theory_bound: bound,
        slack: s,
        bound_satisfied: eps1 <= bound + s,
        phase,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin_model::{pauli_string_matrix, sample_model_b, PieceSpec, DEFAULT_INTERVAL};
    use std::f64::consts::PI;

    #[test]
    fn zero_schedule_equilibrates_trivially() {
        let sys = FloquetSystem::new(&DriveSchedule::zero(3).unwrap()).unwrap();
        let d = spectral_decomposition(&sys.floquet_operator(), DEFAULT_CLUSTER_TOL).unwrap();
        let a = Observable::pauli_string(3, &[(1, Axis::Z)]).unwrap();
        let runs: Vec<_> = scalar_periodicity_runs(&sys, &d, &a, &RunPlan::new(3, 20, 4, 1))
            .unwrap()
            .into_iter()
            .map(|r| r.report)
            .collect();
        assert!(runs
            .iter()
            .all(|r| r.distances.iter().all(|x| x.abs() < 1e-20)));
        assert!(runs.iter().all(|r| r.epsilon_hat == 0.0));
        assert!(equilibration_report(&runs, 1).pass);
    }

    #[test]
    fn unnormalized_observable_rejected() {
        let sys = FloquetSystem::new(&DriveSchedule::zero(2).unwrap()).unwrap();
        let d = spectral_decomposition(&sys.floquet_operator(), DEFAULT_CLUSTER_TOL).unwrap();
        let m = pauli_string_matrix(2, &[(1, Axis::Z)])
            .unwrap()
            .into_inner();
        let doubled = crate::spin_model::HermitianMatrix::new(&m + &m).unwrap();
        let a = Observable::new(doubled).unwrap();
        assert!(verify_equilibration_bound(&sys, &d, &a, &RunPlan::new(2, 4, 2, 0)).is_err());
    }

    #[test]
    fn projector_bound_identity_and_sample_floor() {
        let d = spectral_decomposition(&UnitaryMatrix::identity(2), DEFAULT_CLUSTER_TOL).unwrap();
        let r = verify_haar_projector_bound(&d, 1, 1000, 3).unwrap();
        assert!((r.measured - 1.0).abs() < 1e-12);
        assert!((r.bound - 4.0 / 3.0).abs() < 1e-12);
        assert!(r.pass);
        assert!(verify_haar_projector_bound(&d, 1, 999, 3).is_err());
    }

    #[test]
    fn deff_threshold_arithmetic() {
        assert!(4.0 > deff_threshold(2));
        assert!((deff_threshold(2) - 2.25).abs() < 1e-5);
        assert!(1.0 < deff_threshold(1));
        assert!((deff_threshold(8) - 25.6289).abs() < 1e-3);
    }

    #[test]
    fn scan_of_zero_hamiltonian_is_degenerate() {
        let desc = EnsembleDescriptor {
            boundaries: vec![0.0, 1.0],
            alpha: vec![[0; 3]],
            gamma: vec![[0; 9]],
        };
        let r = nondegeneracy_scan(&desc, 2, 3, DEFAULT_INTERVAL, ScanTolerances::default(), 0)
            .unwrap();
        assert!(!r.pass);
        assert!(r.series["D1"].iter().all(|&d| d == 4.0));
    }

    #[test]
    fn noninteracting_control_is_degenerate() {
        let r = nondegeneracy_scan(
            &EnsembleDescriptor::model_b(),
            3,
            5,
            DEFAULT_INTERVAL,
            ScanTolerances::default(),
            9,
        )
        .unwrap();
        assert!(r.series["control_D2"].iter().all(|&d| d >= 2.0));
    }

    #[test]
    fn commuting_perturbation_has_no_shift() {
        let mut g =
            sample_model_b(3, Interval::new(-1.0, 1.0).unwrap(), &mut stream_rng(2, 0)).unwrap();
        g.h_x.iter_mut().for_each(|h| *h = 0.0);
        let r = quasienergy_perturbation_scaling(&g, 3, &[0.0, 1e-3, 1e-2, 1e-1]).unwrap();
        assert!(r.series["max_quasienergy_shift"]
            .iter()
            .all(|s| *s <= 1e-14));
        assert!(r.pass);
        assert!(quasienergy_perturbation_scaling(&g, 3, &[1e-2, 1e-1]).is_err());
    }

    #[test]
    fn single_qubit_propagator_distance() {
        let delta = 0.3;
        let zero = DriveSchedule::zero(1).unwrap();
        let mut p = PieceSpec::zeros(1, 1.0);
        p.set_field(1, Axis::Z, delta);
        let shifted = DriveSchedule::from_durations(1, vec![p]).unwrap();
        let r = propagator_distance_bound(&zero, &shifted, &[1.0]).unwrap();
        assert!((r.series["distance"][0] - 2.0 * (delta / 2.0).sin().abs()).abs() < 1e-12);
        assert!(r.pass);
        let same = propagator_distance_bound(&shifted, &shifted, &[1.0, 5.0]).unwrap();
        assert!(same.series["distance"].iter().all(|d| *d < 1e-12));
        let mb = make_model_b(
            &sample_model_b(1, DEFAULT_INTERVAL, &mut stream_rng(0, 0)).unwrap(),
            1,
        )
        .unwrap();
        assert!(matches!(
            propagator_distance_bound(&zero, &mb, &[1.0]),
            Err(FlabError::InvalidSchedule(_))
        ));
    }

    #[test]
    fn exact_pi_pulse_flips_every_period() {
        let n = 3;
        let mut p = sample_model_b(n, DEFAULT_INTERVAL, &mut stream_rng(4, 0)).unwrap();
        p.h_x.iter_mut().for_each(|h| *h = PI);
        let up = StateVector::basis_state(n, 0).unwrap();
        let r = dtc_subharmonic_experiment(&p, n, &up, 40).unwrap();
        for (m, z) in r.z.iter().enumerate() {
            let want = if m % 2 == 0 { 1.0 } else { -1.0 };
            assert!((z - want).abs() < 1e-10);
        }
        assert!(r.epsilon_hat_period2 <= 1e-10);
        assert!(r.period1_distances.iter().all(|d| *d >= 0.25));
        assert_eq!(r.phase, DtcPhase::PeriodDoubled);
        assert_eq!(r.d1, 1.0);
        assert_eq!(r.d2, 1 << n);
    }

    #[test]
    fn loglog_fit() {
        let x = [1e-3, 1e-2, 1e-1];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
        assert!((loglog_slope(&x, &y).unwrap() - 2.0).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_none());
    }
}
