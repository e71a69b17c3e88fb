//! Generalized uniform sampling (GUS) for SUM queries over sampled join
//! plans.
//!
//! A plan mixes relational operators with samplers. [`algebra::normalize_plan`]
//! rewrites all sampling into one GUS method at the top of the plan, and
//! [`sbox`] turns an executed sample plus that method into an unbiased
//! estimate, a variance estimate and confidence intervals. [`oracle`] holds
//! independent ground truth used by the tests.

pub mod algebra;
pub mod dsl;
pub mod engine;
pub mod error;
pub mod expr;
pub mod ingest;
pub mod lineage;
pub mod oracle;
pub mod params;
pub mod plan;
pub mod run;
pub mod sampling;
pub mod sbox;
pub mod tpch;

pub use algebra::{
    c_coefficients, compact, compose, gus_of_bernoulli, gus_of_sampler, gus_of_wor, identity_gus,
    join_merge, normalize_plan, null_gus, union_merge, NormalizedPlan, RewriteStep,
};
pub use dsl::{parse_plan, PlanDocument};
pub use engine::{execute, BaseTable, Catalog, ColumnDef, SampleRelation};
pub use error::{GusError, Result};
pub use expr::{CompareOp, Expr, JoinCondition, Predicate, ScalarType, Value};
pub use lineage::{Lineage, LineageSchema, SubsetMask};
pub use params::{GusParams, SubsetTable};
pub use plan::PlanNode;
pub use run::{run_document, run_plan, RunOptions, RunOutcome};
pub use sampling::SamplerSpec;
pub use sbox::{analyze, EstimateOptions, EstimateReport};
