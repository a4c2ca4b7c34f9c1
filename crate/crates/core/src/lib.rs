//! Maximum-entropy weighted least squares.
//!
//! Traces the branch of stationary points of
//! `max H(w) s.t. uᵀw = 1, wᵀ(Ax − b)² = E, AᵀW(Ax − b) = 0`
//! from the ordinary least-squares solution at `E = E_uw` down toward `E → 0`,
//! with diagnostics for the small-E regime.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuation;
pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod numerics;

pub use continuation::{
    newton_correct, resample, sample_at, tangent, trace_branch, BranchSample, ContinuationConfig,
    Corrected, Evidence, SampleGrid, TerminationReason, TerminationReport, TraceOutcome,
    Trajectory,
};
pub use datagen::{example1, example2, DatasetConfig, Example2Variant, Label, LabeledDataset};
pub use diagnostics::{
    brute_force_oracle, core_set, envelope_check, limit_interpolant, rate_report, value_curve,
    CoreSetReport, EnvelopeReport, OracleResult, RateReport, ValueCurve,
};
pub use error::{Error, Result};
pub use model::{ols_initial, BranchState, Feasibility, OlsSummary, Problem};
pub use numerics::{DenseMatrix, DenseVector};
