//! Planning toolkit for Lipschitz-continuous non-stationary MDPs.

pub mod baselines;
pub mod domain;
pub mod error;
pub mod format;
pub mod harness;
pub mod metric;
pub mod model;
pub mod planner;
pub mod policy;
pub mod validation;
pub mod wasserstein;
pub mod worst_case;

pub use domain::{build_bridge, BridgeSpec};
pub use error::{Error, Result};
pub use harness::{Algorithm, EvalConfig, EvaluationReport};
pub use metric::{MetricKind, MetricSpec, StateMetric};
pub use model::{
    policy_value_snapshot, ActionSpace, Categorical, LipschitzReport, Nsmdp, NsmdpTables,
    Snapshot, StateSpace, STOCHASTIC_TOL,
};
pub use planner::{rats_plan, Heuristic, Plan, PlannerConfig, RewardModel, SupportPolicy};
pub use policy::Policy;
