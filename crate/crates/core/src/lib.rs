//! Exact-diagonalization toolkit for periodically driven spin chains.
//!
//! The crate builds piecewise-constant Floquet drives, decomposes the
//! one-period unitary into eigenspaces, evolves Haar-random product states and
//! measures how close observables and reduced states come to being periodic.

// NaN-rejecting checks are written as `!(x >= 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod floquet;
pub mod linalg;
pub mod periodicity;
pub mod spin_model;
pub mod states;
pub mod verify;

pub use dynamics::{
    clock_shift_basis, observable_expectation, reduced_density_matrix, state_at,
    stroboscopic_state, trace_distance, von_neumann_entropy, DensityMatrix, Observable,
};
pub use error::{FlabError, Result};
pub use floquet::{
    degeneracy_metrics, degeneracy_metrics_unchecked, floquet_operator, hermitian_propagator,
    propagator_to, spectral_decomposition, DegeneracyMetrics, FloquetSystem, SpectralDecomposition,
    SpectralReport, UnitaryMatrix,
};
pub use linalg::{c64, Axis};
pub use periodicity::{
    epsilon_hat, midpoint_grid, period_distances, reference_profile, sample_rdm_signal,
    sample_scalar_signal, theory_bound_rdm, theory_bound_scalar, PeriodSampledSignal,
    PeriodicityReport, SignalSampler,
};
pub use spin_model::{
    make_ensemble_schedule, make_model_b, pauli_string_matrix, sample_ensemble, sample_model_b,
    DriveSchedule, EnsembleCoefficients, EnsembleDescriptor, HermitianMatrix, Interval,
    ModelBParams, PieceSpec,
};
pub use states::{
    diagonal_ensemble_expectation, effective_dimension, eigenspace_overlaps,
    sample_haar_product_state, stream_rng, OverlapDecomposition, StateVector,
};
pub use verify::{DtcPhase, DtcReport, ScanTolerances, VerificationReport};
