//! Causal fairness analysis over structural causal models.
//!
//! The crate has three layers:
//!
//! - **Ground truth**: [`scm`] represents structural causal models with a closed
//!   expression language, samples units, and evaluates (nested) potential
//!   responses; [`oracle`] turns that into Monte-Carlo evaluation of the whole
//!   TV-family of fairness measures and their decomposition identities.
//! - **Data**: [`diagram`] extracts causal diagrams, projects them onto the
//!   standard fairness model, and checks identifiability under latent
//!   confounding; [`estimate`] estimates identifiable measures from
//!   observational datasets (plug-in, doubly-robust, cross-fitted) with
//!   bootstrap confidence intervals.
//! - **Procedures**: [`cookbook`] runs the disparate-treatment/impact decision
//!   procedure, and [`fairpred`] covers TV-constrained and causally
//!   constrained linear fitting, sequential optimal-transport pre-processing,
//!   predictor audits, and the random-SCM compliance experiment.

pub mod config;
pub mod cookbook;
pub mod dataset;
pub mod diagram;
pub mod error;
pub mod estimate;
pub mod fairpred;
pub mod oracle;
pub mod report;
pub mod scm;

pub use dataset::{ColumnType, Dataset};
pub use error::{Error, Result};
pub use scm::{
    builtin_scenario, ExogenousDist, ExogenousSpec, Expr, InterventionPlan, Mechanism, PlanValue,
    ScenarioId, StructuralModel, Unit,
};
