//! Structural causal models: a closed expression language for mechanisms,
//! exogenous distributions, unit sampling, and (nested) potential-response
//! evaluation, plus the built-in scenario catalogue.

pub(crate) mod compiled;
mod eval;
mod expr;
mod model;
mod sample;
mod scenario;
mod textfmt;

pub use expr::Expr;
pub use model::{
    ExogenousDist, ExogenousSpec, InterventionPlan, Mechanism, PlanValue, StructuralModel, Unit,
};
pub use sample::{sample_observational, sample_units, unit_rng};
pub use scenario::{builtin_scenario, ScenarioId};
pub use textfmt::{model_from_text, model_to_text};
