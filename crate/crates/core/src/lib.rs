//! Value of iterative experimentation (VOIE).
//!
//! A ramped rollout runs the same experiment twice: a small first
//! iteration on the original version `v1`, then a larger second iteration
//! on the improved version `v2`. The value of having iterated is the
//! average gain `Y1(v2) − Y1(v1)`. This crate simulates such two-step
//! stepped-wedge designs, estimates that value from observed buckets with
//! conservative Wald intervals, checks the estimators against exact
//! randomization moments, and aggregates per-experiment estimates across a
//! platform.
//!
//! Everything numeric is generic over [`Scalar`]; the aliases below fix
//! `f64`, and [`ExactTable`] uses exact rationals for enumeration checks.
//!
//! ```
//! use voie::{assign, observe, estimate_progressive, reference_table_p4, Design};
//!
//! let table = reference_table_p4();
//! let design = Design::progressive(4, 0.25, 0.5).unwrap();
//! let obs = observe(&table, &assign(&design, 7).unwrap()).unwrap();
//! // (c,v2) holds a single unit, so the variance is not estimable
//! assert!(estimate_progressive(&obs, 0.05).is_err());
//! ```

pub mod aggregation;
pub mod design;
pub mod error;
pub mod estimators;
pub mod ingest;
pub mod normal;
pub mod oracle;
pub mod population;
pub mod scalar;

pub use aggregation::{
    aggregate_inverse_variance, aggregate_weighted, normalize, test_zero, AggregateEstimate, Effect,
};
pub use design::{
    assign, assignment_count, enumerate_assignments, enumerate_assignments_capped, Assignment, BucketCounts,
    Design, DesignKind, Path, Split,
};
pub use error::{Result, VoieError};
pub use estimators::{
    estimate_collapsed, estimate_deramp, estimate_multivariant, estimate_progressive, estimate_repeated_mp,
    point_collapsed, point_deramp, point_multivariant, point_progressive, point_repeated_mp, BucketSummary,
    CollapsedView, EstimandKind, PointEstimate, VarianceMode, VoieEstimate,
};
pub use ingest::{
    daily_effect_quantiles, filter_experiments, group_and_report, load_experiments, per_experiment_voie,
    ExperimentRecord, FilterConfig, GroupKey, ReportTable,
};
pub use oracle::{exact_moments, monte_carlo_coverage, theoretical_variance, OracleMoments, SyntheticPopulation};
pub use population::{
    check_no_carryover, check_time_invariance, observe, observe_first_iteration, progressive_target,
    reference_table_p4, repeated_target, true_voie, true_voie_deramp, true_voie_multivariant,
    PotentialOutcomeTable, TableBuilder,
};
pub use scalar::{Real, Scalar};

pub use num_rational::BigRational;

pub type Table = PotentialOutcomeTable<f64>;
pub type Observed = population::ObservedData<f64>;
pub type Estimate = VoieEstimate<f64>;
pub type ExactTable = PotentialOutcomeTable<BigRational>;
pub type ExactObserved = population::ObservedData<BigRational>;
pub type ExactMoments = OracleMoments<BigRational>;
