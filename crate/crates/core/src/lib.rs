//! Interventional auditing of black-box sequence predictors.
//!
//! A frozen scorer is probed with matched pairs of input interventions: a
//! mechanistic one whose scope lies inside an externally supplied structural
//! prior, and a spurious one of equal size drawn from outside it. The signed
//! score differences are summarized per input by the Reasoning Score and at
//! model level by separation, overlap and directional metrics, with
//! hierarchical bootstrap intervals.

pub mod audit;
pub mod bootstrap;
pub mod compiler;
pub mod error;
pub mod intervention;
pub mod metrics;
pub mod model;
pub mod report;
pub mod rng;
pub mod synth;
pub mod types;

pub use audit::{run_audit, run_audit_on, AuditOutcome, AuditReport, ModelConfig, RunConfig};
pub use bootstrap::{BootstrapConfig, MetricWithCI};
pub use compiler::{AuditingSet, CoverageStats};
pub use error::{Error, Result};
pub use intervention::{GeometryStats, SamplingPlan};
pub use metrics::{ModelMetrics, PerInputMetrics};
pub use model::{ResponseSet, ScoringEndpoint};
pub use report::{emit_report, EmitOptions};
pub use types::{
    apply_intervention, validate_target, ClassTag, InterventionSpec, MatchedPair, Operator, PairRecord, Scope,
    TargetRecord,
};
