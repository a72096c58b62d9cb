use std::path::PathBuf;

use flab_core::periodicity::SUBSYSTEM_FRACTION;
use flab_core::spin_model::{DEFAULT_INTERVAL, DEFAULT_MAX_QUBITS};
use flab_core::{Axis, EnsembleDescriptor, Interval, ModelBParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid `{field}`: {constraint}")]
    Constraint {
        field: &'static str,
        constraint: String,
    },
}

fn violation(field: &'static str, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Constraint {
        field,
        constraint: constraint.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    PeriodicityScalar,
    PeriodicityRdm,
    LemmaSuite,
    NondegeneracyScan,
    DtcDemo,
    PerturbationBound,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::PeriodicityScalar => "periodicity-scalar",
            Experiment::PeriodicityRdm => "periodicity-rdm",
            Experiment::LemmaSuite => "lemma-suite",
            Experiment::NondegeneracyScan => "nondegeneracy-scan",
            Experiment::DtcDemo => "dtc-demo",
            Experiment::PerturbationBound => "perturbation-bound",
        }
    }
}

/// Where the drive comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Fixed kicked-model coefficients.
    ModelB(ModelBParams),
    /// Kicked model with coefficients drawn uniformly from `[low, high]`.
    Random(Interval),
    /// General ensemble with coefficients drawn uniformly from `bounds`.
    Ensemble {
        descriptor: EnsembleDescriptor,
        bounds: Interval,
    },
    /// `H(t) = 0`.
    Zero,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Random(DEFAULT_INTERVAL)
    }
}

/// Pauli string acting on the listed sites, e.g. `{"pauli": "ZZ", "sites": [1, 2]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    pub pauli: String,
    pub sites: Vec<usize>,
}

impl Default for ObservableSpec {
    fn default() -> Self {
        ObservableSpec {
            pauli: "Z".into(),
            sites: vec![1],
        }
    }
}

impl ObservableSpec {
    pub fn ops(&self) -> Result<Vec<(usize, Axis)>, ConfigError> {
        let axes: Vec<Axis> = self
            .pauli
            .chars()
            .map(|c| Axis::from_char(c.to_ascii_lowercase()))
            .collect::<Option<_>>()
            .ok_or_else(|| violation("observable.pauli", "letters must be X, Y or Z"))?;
        if axes.len() != self.sites.len() {
            return Err(violation("observable", "one Pauli letter per site"));
        }
        Ok(self.sites.iter().copied().zip(axes).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_tol")]
    pub cluster_tol: f64,
    #[serde(default = "default_tol")]
    pub ratio_tol: f64,
    #[serde(default = "default_gap_margin")]
    pub min_gap_margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            cluster_tol: default_tol(),
            ratio_tol: default_tol(),
            min_gap_margin: default_gap_margin(),
        }
    }
}

fn default_tol() -> f64 {
    1e-8
}
fn default_gap_margin() -> f64 {
    1e-6
}
fn default_m() -> usize {
    500
}
fn default_k() -> usize {
    32
}
fn default_one() -> usize {
    1
}
fn default_samples() -> usize {
    5
}
fn default_subsystem() -> Vec<usize> {
    vec![1]
}
fn default_projector_samples() -> usize {
    2000
}
fn default_deff_samples() -> usize {
    200
}
fn default_scan_samples() -> usize {
    100
}
fn default_t_grid() -> Vec<f64> {
    vec![1.0, 5.0, 10.0]
}
fn default_delta() -> f64 {
    1e-3
}
fn default_detuning() -> f64 {
    -0.03 * std::f64::consts::PI
}

/// Validated experiment description. Field names follow the JSON keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M", default = "default_m")]
    pub m: usize,
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    #[serde(default = "default_subsystem")]
    pub subsystem: Vec<usize>,
    #[serde(default)]
    pub observable: ObservableSpec,
    /// Independent model draws (random and ensemble models only).
    #[serde(default = "default_one")]
    pub draws: usize,
    /// Haar product initial states per draw, or trials for perturbation-bound.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_projector_samples")]
    pub projector_samples: usize,
    #[serde(default = "default_deff_samples")]
    pub deff_samples: usize,
    #[serde(default = "default_scan_samples")]
    pub scan_samples: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Times at which propagator distances are checked.
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    /// Size of the one-site field shift in perturbation-bound.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Scale factors for the optional quasienergy scaling fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_list: Option<Vec<f64>>,
    /// Offset of the kick angle from pi in dtc-demo.
    #[serde(default = "default_detuning")]
    pub detuning: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.n;
        if n == 0 {
            return Err(violation("N", "must be >= 1"));
        }
        if n > DEFAULT_MAX_QUBITS {
            return Err(violation("N", format!("must be <= {DEFAULT_MAX_QUBITS}")));
        }
        if self.m == 0 {
            return Err(violation("M", "must be >= 1"));
        }
        if self.k == 0 {
            return Err(violation("K", "must be >= 1"));
        }
        if self.subsystem.is_empty() || self.subsystem.iter().any(|&s| s == 0 || s > n) {
            return Err(violation(
                "subsystem",
                format!("must be a nonempty subset of 1..={n}"),
            ));
        }
        let mut sorted = self.subsystem.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.subsystem.len() {
            return Err(violation("subsystem", "sites must be distinct"));
        }
        if self.observable.sites.iter().any(|&s| s == 0 || s > n) {
            return Err(violation(
                "observable.sites",
                format!("must lie in 1..={n}"),
            ));
        }
        self.observable.ops()?;
        if self.draws == 0 {
            return Err(violation("draws", "must be >= 1"));
        }
        if self.samples == 0 {
            return Err(violation("samples", "must be >= 1"));
        }
        if self.projector_samples < 1000 {
            return Err(violation("projector_samples", "must be >= 1000"));
        }
        if self.deff_samples == 0 || self.scan_samples == 0 {
            return Err(violation("deff_samples/scan_samples", "must be >= 1"));
        }
        let t = &self.tolerances;
        for (field, v) in [
            ("tolerances.cluster_tol", t.cluster_tol),
            ("tolerances.ratio_tol", t.ratio_tol),
            ("tolerances.min_gap_margin", t.min_gap_margin),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(violation(field, "must be finite and > 0"));
            }
        }
        if self.t_grid.is_empty() || self.t_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(violation("t_grid", "must be nonempty, finite and >= 0"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(violation("delta", "must be finite and > 0"));
        }
        if !self.detuning.is_finite() {
            return Err(violation("detuning", "must be finite"));
        }
        if let Some(eps) = &self.eps_list {
            if eps.len() < 2 || eps.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
                return Err(violation("eps_list", "needs >= 2 finite values >= 0"));
            }
        }
        match &self.model {
            ModelSpec::ModelB(p) => {
                if p.h_x.len() != n || p.h_z.len() != n || p.j.len() != n - 1 {
                    return Err(violation(
                        "model.model-b",
                        format!("needs {n} fields per axis and {} couplings", n - 1),
                    ));
                }
                if p.h_x
                    .iter()
                    .chain(&p.h_z)
                    .chain(&p.j)
                    .any(|x| !x.is_finite())
                {
                    return Err(violation("model.model-b", "coefficients must be finite"));
                }
            }
            ModelSpec::Ensemble { bounds, .. } | ModelSpec::Random(bounds) => {
                check_interval(bounds)?
            }
            ModelSpec::Zero => {}
        }
        if self.experiment == Experiment::NondegeneracyScan
            && matches!(self.model, ModelSpec::ModelB(_) | ModelSpec::Zero)
        {
            return Err(violation(
                "model",
                "nondegeneracy-scan needs a random or ensemble model",
            ));
        }
        if self.experiment == Experiment::DtcDemo
            && matches!(self.model, ModelSpec::Ensemble { .. } | ModelSpec::Zero)
        {
            return Err(violation(
                "model",
                "dtc-demo needs model-b coefficients or a random box",
            ));
        }
        Ok(())
    }

    /// Reduced-state runs outside `|S| <= 0.29248 N` carry a warning.
    pub fn subsystem_warning(&self) -> Option<String> {
        let limit = (SUBSYSTEM_FRACTION * self.n as f64).floor() as usize;
        (self.experiment == Experiment::PeriodicityRdm && self.subsystem.len() > limit).then(|| {
            format!(
                "subsystem size {} exceeds floor({SUBSYSTEM_FRACTION} N) = {limit}; the reduced-state bound is not guaranteed",
                self.subsystem.len()
            )
        })
    }
}

fn check_interval(b: &Interval) -> Result<(), ConfigError> {
    if !(b.low.is_finite() && b.high.is_finite() && b.low <= b.high) {
        return Err(violation("model bounds", "need finite low <= high"));
    }
    Ok(())
}

/// Parses and validates a JSON config, filling defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = serde_json::from_str(text)?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(r#"{"experiment": "dtc-demo", "N": 4, "seed": 1}"#).unwrap();
        assert_eq!(c.k, 32);
        assert_eq!(c.tolerances.cluster_tol, 1e-8);
        assert_eq!(c.tolerances.ratio_tol, 1e-8);
        assert_eq!(c.model, ModelSpec::Random(DEFAULT_INTERVAL));
    }

    #[test]
    fn unknown_key_named() {
        let err = parse_config(r#"{"experiment": "dtc-demo", "N": 4, "foo": 2}"#).unwrap_err();
        assert!(err.to_string().contains("foo"), "{err}");
    }

    #[test]
    fn constraint_names_field() {
        let err =
            parse_config(r#"{"experiment": "lemma-suite", "N": 4, "subsystem": [5]}"#).unwrap_err();
        assert!(err.to_string().contains("subsystem"));
        let err = parse_config(r#"{"experiment": "lemma-suite", "N": 0}"#).unwrap_err();
        assert!(err.to_string().contains("`N`"));
        let err = parse_config(r#"{"experiment": "lemma-suite", "N": 3, "K": 0}"#).unwrap_err();
        assert!(err.to_string().contains("`K`"));
    }

    #[test]
    fn rdm_warning_threshold() {
        let c = parse_config(r#"{"experiment": "periodicity-rdm", "N": 10, "subsystem": [1, 2]}"#)
            .unwrap();
        assert!(c.subsystem_warning().is_none());
        let c =
            parse_config(r#"{"experiment": "periodicity-rdm", "N": 10, "subsystem": [1, 2, 3]}"#)
                .unwrap();
        assert!(c.subsystem_warning().is_some());
    }

    #[test]
    fn explicit_model_b() {
        let c = parse_config(
            r#"{"experiment": "dtc-demo", "N": 2,
                "model": {"model-b": {"h_x": [3.1, 3.1], "h_z": [0.2, 0.4], "J": [1.0]}}}"#,
        )
        .unwrap();
        assert!(matches!(c.model, ModelSpec::ModelB(_)));
        let bad = r#"{"experiment": "dtc-demo", "N": 3,
                "model": {"model-b": {"h_x": [3.1, 3.1], "h_z": [0.2, 0.4], "J": [1.0]}}}"#;
        assert!(parse_config(bad).unwrap_err().to_string().contains("model"));
    }
}
