use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use flab_core::periodicity::{PeriodicityReport, SignalValue};
use flab_core::verify::{
    deff_threshold_experiment, dtc_subharmonic_experiment, epsilon_report, equilibration_report,
    nondegeneracy_scan, propagator_distance_bound, quasienergy_perturbation_scaling,
    rdm_periodicity_runs, scalar_periodicity_runs, verify_haar_projector_bound, PeriodicityRun,
    RunPlan, ScanTolerances,
};
use flab_core::{
    degeneracy_metrics_unchecked, make_ensemble_schedule, make_model_b, sample_ensemble,
    sample_model_b, spectral_decomposition, stream_rng, trace_distance, Axis, DensityMatrix,
    DriveSchedule, DtcReport, EnsembleDescriptor, FlabError, FloquetSystem, ModelBParams,
    Observable, SpectralDecomposition, SpectralReport, StateVector, VerificationReport,
};
use rand::Rng;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, Experiment, ExperimentConfig, ModelSpec};

/// Streams at and above this index seed model draws; initial states use lower ones.
const MODEL_STREAM: u64 = 1 << 32;
const PERTURB_STREAM: u64 = 1 << 33;

pub const DEFAULT_OUT_DIR: &str = "flab-out";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(#[from] FlabError),
    #[error("i/o failure on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) | RunError::Io { .. } => 2,
            RunError::Numerical(_) => 3,
        }
    }
}

type Result<T> = std::result::Result<T, RunError>;

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub draw: usize,
    pub sample: usize,
    pub report: PeriodicityReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct DtcRecord {
    pub label: String,
    pub kick: f64,
    pub report: DtcReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub experiment: String,
    pub seed: u64,
    pub config_hash: String,
    pub pass: bool,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub verification: Vec<VerificationReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub periodicity: Vec<RunRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub dtc: Vec<DtcRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumRecord {
    pub draw: usize,
    pub label: String,
    pub spectrum: SpectralReport,
}

/// One row of `signals.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRow {
    pub series: &'static str,
    pub draw: usize,
    pub sample: usize,
    pub index: usize,
    pub offset: Option<f64>,
    pub value: f64,
}

pub const CSV_COLUMNS: &str = "series,draw,sample,index,offset,value";

/// Everything an experiment produces before it is written to disk.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub spectra: Vec<SpectrumRecord>,
    pub signals: Vec<SignalRow>,
}

/// SHA-256 of the canonical JSON of the config, without the output directory.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut canonical = config.clone();
    canonical.out = None;
    let text = serde_json::to_string(&canonical).expect("config serializes");
    Sha256::digest(text.as_bytes())
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// A float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Pretty JSON with sorted keys and every float printed by [`fmt_f64`].
pub fn to_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("report serializes");
    let mut out = String::new();
    write_value(&v, 0, &mut out);
    out.push('\n');
    out
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null | Value::Bool(_) | Value::String(_) => out.push_str(&v.to_string()),
        Value::Number(x) => match (x.as_u64(), x.as_i64(), x.as_f64()) {
            (Some(u), _, _) => out.push_str(&u.to_string()),
            (_, Some(i), _) => out.push_str(&i.to_string()),
            (_, _, Some(f)) => out.push_str(&fmt_f64(f)),
            _ => out.push_str(&x.to_string()),
        },
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) if items.iter().all(|i| i.is_number() || i.is_boolean()) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(item, indent, out);
            }
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(item, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_value(item, indent + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

pub fn signals_csv(rows: &[SignalRow], seed: u64, hash: &str) -> String {
    let mut out = format!("# seed={seed} config_hash={hash}\n{CSV_COLUMNS}\n");
    for r in rows {
        let offset = r.offset.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.series,
            r.draw,
            r.sample,
            r.index,
            offset,
            fmt_f64(r.value)
        );
    }
    out
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io_err = |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    };
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io_err)?;
    f.write_all(contents.as_bytes()).map_err(io_err)?;
    f.sync_all().map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

struct Draw {
    schedule: DriveSchedule,
    params: Option<ModelBParams>,
}

fn draw_model(config: &ExperimentConfig, draw: usize) -> Result<Draw> {
    let n = config.n;
    let mut rng = stream_rng(config.seed, MODEL_STREAM + draw as u64);
    Ok(match &config.model {
        ModelSpec::ModelB(p) => Draw {
            schedule: make_model_b(p, n)?,
            params: Some(p.clone()),
        },
        ModelSpec::Random(bounds) => {
            let p = sample_model_b(n, *bounds, &mut rng)?;
            Draw {
                schedule: make_model_b(&p, n)?,
                params: Some(p),
            }
        }
        ModelSpec::Ensemble { descriptor, bounds } => {
            let coeffs = sample_ensemble(descriptor, n, *bounds, &mut rng)?;
            Draw {
                schedule: make_ensemble_schedule(descriptor, &coeffs, n)?,
                params: None,
            }
        }
        ModelSpec::Zero => Draw {
            schedule: DriveSchedule::zero(n)?,
            params: None,
        },
    })
}

struct Analysed {
    system: FloquetSystem,
    decomp: SpectralDecomposition,
}

fn analyse(
    config: &ExperimentConfig,
    schedule: &DriveSchedule,
    draw: usize,
    label: &str,
    spectra: &mut Vec<SpectrumRecord>,
) -> Result<Analysed> {
    let system = FloquetSystem::new(schedule)?;
    let decomp = spectral_decomposition(&system.floquet_operator(), config.tolerances.cluster_tol)?;
    let metrics = degeneracy_metrics_unchecked(&decomp, config.tolerances.ratio_tol)?;
    spectra.push(SpectrumRecord {
        draw,
        label: label.to_string(),
        spectrum: decomp.report(&metrics),
    });
    Ok(Analysed { system, decomp })
}

fn plan(config: &ExperimentConfig, draw: usize) -> RunPlan {
    RunPlan {
        samples: config.samples,
        m: config.m,
        k: config.k,
        ratio_tol: config.tolerances.ratio_tol,
        seed: config.seed.wrapping_add(draw as u64),
    }
}

fn observable(config: &ExperimentConfig) -> Result<Observable> {
    Ok(Observable::pauli_string(
        config.n,
        &config.observable.ops()?,
    )?)
}

fn push_grid_rows<T: SignalValue>(
    rows: &mut Vec<SignalRow>,
    series: &'static str,
    draw: usize,
    sample: usize,
    run: &PeriodicityRun<T>,
    value: impl Fn(&T) -> f64,
) {
    let offsets = run.signal.offsets();
    for m in 0..run.signal.n_periods() {
        for (k, v) in run.signal.row(m).iter().enumerate() {
            rows.push(SignalRow {
                series,
                draw,
                sample,
                index: m,
                offset: Some(offsets[k]),
                value: value(v),
            });
        }
    }
    push_series(rows, "period_distance", draw, sample, &run.report.distances);
}

fn push_series(
    rows: &mut Vec<SignalRow>,
    series: &'static str,
    draw: usize,
    sample: usize,
    values: &[f64],
) {
    rows.extend(values.iter().enumerate().map(|(index, &value)| SignalRow {
        series,
        draw,
        sample,
        index,
        offset: None,
        value,
    }));
}

fn periodicity_scalar(config: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let a = observable(config)?;
    let mut reports = Vec::new();
    for draw in 0..config.draws {
        let model = draw_model(config, draw)?;
        let an = analyse(config, &model.schedule, draw, "drive", &mut out.spectra)?;
        for (sample, run) in
            scalar_periodicity_runs(&an.system, &an.decomp, &a, &plan(config, draw))?
                .into_iter()
                .enumerate()
        {
            push_grid_rows(&mut out.signals, "expectation", draw, sample, &run, |v| *v);
            reports.push(run.report.clone());
            out.report.periodicity.push(RunRecord {
                draw,
                sample,
                report: run.report,
            });
        }
    }
    out.report
        .verification
        .push(equilibration_report(&reports, config.seed));
    out.report
        .verification
        .push(epsilon_report("scalar_periodicity", &reports, config.seed));
    Ok(())
}

fn periodicity_rdm(config: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let mut reports = Vec::new();
    for draw in 0..config.draws {
        let model = draw_model(config, draw)?;
        let an = analyse(config, &model.schedule, draw, "drive", &mut out.spectra)?;
        let runs = rdm_periodicity_runs(
            &an.system,
            &an.decomp,
            &config.subsystem,
            &plan(config, draw),
        )?;
        for (sample, run) in runs.into_iter().enumerate() {
            let profile = flab_core::reference_profile(&run.signal)?;
            let k = run.signal.samples_per_period();
            let mut to_ref = Vec::with_capacity(run.signal.values().len());
            for (i, rho) in run.signal.values().iter().enumerate() {
                to_ref.push(trace_distance(rho, &profile[i % k])?);
            }
            let offsets = run.signal.offsets().to_vec();
            for (i, d) in to_ref.into_iter().enumerate() {
                out.signals.push(SignalRow {
                    series: "trace_distance_to_reference",
                    draw,
                    sample,
                    index: i / k,
                    offset: Some(offsets[i % k]),
                    value: d,
                });
            }
            push_grid_rows(&mut out.signals, "purity", draw, sample, &run, purity);
            reports.push(run.report.clone());
            out.report.periodicity.push(RunRecord {
                draw,
                sample,
                report: run.report,
            });
        }
    }
    out.report
        .verification
        .push(equilibration_report(&reports, config.seed));
    out.report
        .verification
        .push(epsilon_report("rdm_periodicity", &reports, config.seed));
    Ok(())
}

fn purity(rho: &DensityMatrix) -> f64 {
    let m = rho.as_mat();
    let d = m.nrows();
    (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| m[(i, j)].norm_sqr())
        .sum()
}

/// The drive with one random single-site `sigma^z` field shifted by `delta`.
fn shifted_schedule(
    schedule: &DriveSchedule,
    delta: f64,
    rng: &mut impl Rng,
) -> Result<DriveSchedule> {
    let n = schedule.n_qubits();
    let piece = rng.gen_range(0..schedule.pieces().len());
    let site = rng.gen_range(1..=n);
    let mut pieces = schedule.pieces().to_vec();
    let old = pieces[piece].field(site, Axis::Z);
    pieces[piece].set_field(site, Axis::Z, old + delta);
    Ok(DriveSchedule::from_boundaries(
        n,
        schedule.boundaries().to_vec(),
        pieces,
    )?)
}

fn lemma_suite(config: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let n = config.n;
    let model = draw_model(config, 0)?;
    let an = analyse(config, &model.schedule, 0, "drive", &mut out.spectra)?;
    let v = &mut out.report.verification;
    v.push(verify_haar_projector_bound(
        &an.decomp,
        n,
        config.projector_samples,
        config.seed,
    )?);
    let deff = deff_threshold_experiment(&an.decomp, n, config.deff_samples, config.seed)?;
    push_series(&mut out.signals, "d_eff", 0, 0, &deff.series["d_eff"]);
    v.push(deff);
    let runs = scalar_periodicity_runs(
        &an.system,
        &an.decomp,
        &observable(config)?,
        &plan(config, 0),
    )?;
    let reports: Vec<PeriodicityReport> = runs.into_iter().map(|r| r.report).collect();
    for (sample, r) in reports.iter().enumerate() {
        push_series(&mut out.signals, "period_distance", 0, sample, &r.distances);
    }
    v.push(equilibration_report(&reports, config.seed));
    let mut rng = stream_rng(config.seed, PERTURB_STREAM);
    let shifted = shifted_schedule(&model.schedule, config.delta, &mut rng)?;
    v.push(propagator_distance_bound(
        &model.schedule,
        &shifted,
        &config.t_grid,
    )?);
    Ok(())
}

fn scan(config: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let (desc, bounds) = match &config.model {
        ModelSpec::Random(b) => (EnsembleDescriptor::model_b(), *b),
        ModelSpec::Ensemble { descriptor, bounds } => (descriptor.clone(), *bounds),
        _ => unreachable!("rejected by validation"),
    };
    let tol = ScanTolerances {
        cluster_tol: config.tolerances.cluster_tol,
        ratio_tol: config.tolerances.ratio_tol,
        min_gap_margin: config.tolerances.min_gap_margin,
    };
    let r = nondegeneracy_scan(
        &desc,
        config.n,
        config.scan_samples,
        bounds,
        tol,
        config.seed,
    )?;
    for name in ["D1", "D2", "gap_margin", "control_D2"] {
        if let Some(s) = r.series.get(name) {
            push_series(&mut out.signals, name, 0, 0, s);
        }
    }
    out.report.verification.push(r);
    Ok(())
}

/// Tolerance for the exact-kick period-2 check.
const EXACT_KICK_TOL: f64 = 1e-10;

fn dtc(config: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let n = config.n;
    let base = draw_model(config, 0)?.params.expect("model-b parameters");
    let up = StateVector::basis_state(n, 0)?;
    let pi = std::f64::consts::PI;
    let mut all_pass = true;
    for (label, kick, series) in [
        ("exact", pi, "z_exact"),
        ("detuned", pi + config.detuning, "z_detuned"),
    ] {
        let mut p = base.clone();
        p.h_x.iter_mut().for_each(|h| *h = kick);
        let schedule = make_model_b(&p, n)?;
        analyse(config, &schedule, 0, label, &mut out.spectra)?;
        let r = dtc_subharmonic_experiment(&p, n, &up, config.m)?;
        push_series(&mut out.signals, series, 0, 0, &r.z);
        all_pass &= if label == "exact" {
            r.epsilon_hat_period2 <= EXACT_KICK_TOL
        } else {
            r.bound_satisfied
        };
        out.report.dtc.push(DtcRecord {
            label: label.into(),
            kick,
            report: r,
        });
    }
    if !all_pass {
        out.report.warnings.push("a kicked-run check failed".into());
    }
    out.report.pass &= all_pass;
    Ok(())
}

fn perturbation(config: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    for trial in 0..config.samples {
        let model = draw_model(config, trial)?;
        let mut rng = stream_rng(config.seed, PERTURB_STREAM + trial as u64);
        let shifted = shifted_schedule(&model.schedule, config.delta, &mut rng)?;
        let r = propagator_distance_bound(&model.schedule, &shifted, &config.t_grid)?;
        push_series(
            &mut out.signals,
            "propagator_distance",
            trial,
            0,
            &r.series["distance"],
        );
        out.report.verification.push(r);
    }
    if let Some(eps) = &config.eps_list {
        let g = draw_model(config, 0)?
            .params
            .ok_or_else(|| ConfigError::Constraint {
                field: "eps_list",
                constraint: "needs a model-b or random model".into(),
            })?;
        let r = quasienergy_perturbation_scaling(&g, config.n, eps)?;
        push_series(
            &mut out.signals,
            "max_quasienergy_shift",
            0,
            0,
            &r.series["max_quasienergy_shift"],
        );
        out.report.verification.push(r);
    }
    Ok(())
}

/// Runs the configured experiment in memory.
pub fn execute(config: &ExperimentConfig) -> Result<Outcome> {
    config.validate()?;
    let mut out = Outcome {
        report: Report {
            experiment: config.experiment.name().into(),
            seed: config.seed,
            config_hash: config_hash(config),
            pass: true,
            warnings: config.subsystem_warning().into_iter().collect(),
            verification: Vec::new(),
            periodicity: Vec::new(),
            dtc: Vec::new(),
        },
        spectra: Vec::new(),
        signals: Vec::new(),
    };
    match config.experiment {
        Experiment::PeriodicityScalar => periodicity_scalar(config, &mut out)?,
        Experiment::PeriodicityRdm => periodicity_rdm(config, &mut out)?,
        Experiment::LemmaSuite => lemma_suite(config, &mut out)?,
        Experiment::NondegeneracyScan => scan(config, &mut out)?,
        Experiment::DtcDemo => dtc(config, &mut out)?,
        Experiment::PerturbationBound => perturbation(config, &mut out)?,
    }
    out.report.pass &= out.report.verification.iter().all(|r| r.pass);
    Ok(out)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    experiment: &'static str,
    seed: u64,
    config_hash: &'a str,
    config: &'a ExperimentConfig,
    files: [&'static str; 4],
    created_unix_seconds: u64,
}

/// Runs the experiment and writes the four artifact files into `dir`.
pub fn run_to_dir(config: &ExperimentConfig, dir: &Path) -> Result<Outcome> {
    let outcome = execute(config)?;
    fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let hash = &outcome.report.config_hash;
    let manifest = Manifest {
        tool: "flab",
        version: env!("CARGO_PKG_VERSION"),
        experiment: config.experiment.name(),
        seed: config.seed,
        config_hash: hash,
        config,
        files: [
            "report.json",
            "signals.csv",
            "spectrum.json",
            "manifest.json",
        ],
        created_unix_seconds: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    #[derive(Serialize)]
    struct Spectra<'a> {
        seed: u64,
        config_hash: &'a str,
        spectra: &'a [SpectrumRecord],
    }
    write_atomic(&dir.join("report.json"), &to_json(&outcome.report))?;
    write_atomic(
        &dir.join("signals.csv"),
        &signals_csv(&outcome.signals, config.seed, hash),
    )?;
    write_atomic(
        &dir.join("spectrum.json"),
        &to_json(&Spectra {
            seed: config.seed,
            config_hash: hash,
            spectra: &outcome.spectra,
        }),
    )?;
    write_atomic(&dir.join("manifest.json"), &to_json(&manifest))?;
    Ok(outcome)
}
