use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::scm::expr::Expr;

/// Distribution of one exogenous variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExogenousDist {
    Bernoulli { p: f64 },
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    PointMass { v: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousSpec {
    pub name: String,
    pub dist: ExogenousDist,
}

impl ExogenousSpec {
    pub fn bernoulli(name: &str, p: f64) -> Self {
        Self {
            name: name.into(),
            dist: ExogenousDist::Bernoulli { p },
        }
    }
    pub fn uniform01(name: &str) -> Self {
        Self {
            name: name.into(),
            dist: ExogenousDist::Uniform { lo: 0.0, hi: 1.0 },
        }
    }
    pub fn normal(name: &str, mean: f64, sd: f64) -> Self {
        Self {
            name: name.into(),
            dist: ExogenousDist::Normal { mean, sd },
        }
    }

    fn validate(&self) -> Result<()> {
        match self.dist {
            ExogenousDist::Bernoulli { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::ModelSpec(format!(
                        "Bernoulli p for `{}` must lie in [0,1], got {p}",
                        self.name
                    )));
                }
            }
            ExogenousDist::Uniform { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::ModelSpec(format!(
                        "Uniform bounds for `{}` need lo < hi, got [{lo}, {hi}]",
                        self.name
                    )));
                }
            }
            ExogenousDist::Normal { sd, .. } => {
                if !(sd > 0.0) {
                    return Err(Error::ModelSpec(format!(
                        "Normal sd for `{}` must be positive, got {sd}",
                        self.name
                    )));
                }
            }
            ExogenousDist::PointMass { .. } => {}
        }
        Ok(())
    }
}

/// One structural assignment `target ← expr(parents, exogenous_args)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub target: String,
    pub parents: Vec<String>,
    pub exogenous_args: Vec<String>,
    pub expr: Expr,
}

impl Mechanism {
    pub fn new(target: &str, parents: &[&str], exogenous_args: &[&str], expr: Expr) -> Self {
        Self {
            target: target.into(),
            parents: parents.iter().map(|s| s.to_string()).collect(),
            exogenous_args: exogenous_args.iter().map(|s| s.to_string()).collect(),
            expr,
        }
    }
}

/// A structural causal model: exogenous distributions plus deterministic
/// mechanisms in a declared topological order. Immutable after construction;
/// all validation happens in [`StructuralModel::new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralModel {
    exogenous: Vec<ExogenousSpec>,
    mechanisms: Vec<Mechanism>,
}

impl StructuralModel {
    pub fn new(exogenous: Vec<ExogenousSpec>, mechanisms: Vec<Mechanism>) -> Result<Self> {
        let mut exo_names = BTreeSet::new();
        for e in &exogenous {
            e.validate()?;
            if !exo_names.insert(e.name.clone()) {
                return Err(Error::ModelSpec(format!(
                    "duplicate exogenous variable `{}`",
                    e.name
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for m in &mechanisms {
            if exo_names.contains(&m.target) {
                return Err(Error::ModelSpec(format!(
                    "`{}` declared both exogenous and endogenous",
                    m.target
                )));
            }
            if !seen.insert(m.target.clone()) {
                return Err(Error::ModelSpec(format!(
                    "duplicate mechanism for `{}`",
                    m.target
                )));
            }
            for p in &m.parents {
                // Earlier-mechanism rule gives acyclicity by construction.
                if !seen.contains(p) || p == &m.target {
                    return Err(Error::ModelSpec(format!(
                        "parent `{p}` of `{}` must be defined by an earlier mechanism",
                        m.target
                    )));
                }
            }
            for u in &m.exogenous_args {
                if !exo_names.contains(u) {
                    return Err(Error::ModelSpec(format!(
                        "exogenous argument `{u}` of `{}` is not declared",
                        m.target
                    )));
                }
            }
            let allowed: BTreeSet<&String> = m.parents.iter().chain(&m.exogenous_args).collect();
            for v in m.expr.referenced_vars() {
                if !allowed.contains(&v) {
                    return Err(Error::ModelSpec(format!(
                        "expression for `{}` references `{v}` which is neither a declared parent nor an exogenous argument",
                        m.target
                    )));
                }
            }
        }
        Ok(Self {
            exogenous,
            mechanisms,
        })
    }

    pub fn exogenous(&self) -> &[ExogenousSpec] {
        &self.exogenous
    }

    pub fn mechanisms(&self) -> &[Mechanism] {
        &self.mechanisms
    }

    pub fn endogenous_names(&self) -> Vec<String> {
        self.mechanisms.iter().map(|m| m.target.clone()).collect()
    }

    pub fn mechanism(&self, target: &str) -> Option<&Mechanism> {
        self.mechanisms.iter().find(|m| m.target == target)
    }
}

/// One realization of all exogenous variables; indexes an individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub assignment: BTreeMap<String, f64>,
}

impl Unit {
    pub fn new(pairs: &[(&str, f64)]) -> Self {
        Self {
            assignment: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    /// The unit must cover exactly the model's exogenous set.
    pub fn validate_for(&self, model: &StructuralModel) -> Result<()> {
        let declared: BTreeSet<&String> = model.exogenous.iter().map(|e| &e.name).collect();
        let given: BTreeSet<&String> = self.assignment.keys().collect();
        if declared != given {
            return Err(Error::Eval(format!(
                "unit must assign exactly the model's exogenous set; expected {declared:?}, got {given:?}"
            )));
        }
        Ok(())
    }
}

/// Value a plan assigns to an intervened variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlanValue {
    Value(f64),
    /// "The value `var` takes for this unit under `plan`" — evaluated on the
    /// same unit before the outer plan runs.
    CounterfactualRef {
        var: String,
        plan: Box<InterventionPlan>,
    },
}

/// A submodel description: variables forced to fixed or counterfactual values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InterventionPlan {
    pub fixed: Vec<(String, PlanValue)>,
}

impl InterventionPlan {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn set(mut self, var: &str, value: f64) -> Self {
        self.fixed.push((var.into(), PlanValue::Value(value)));
        self
    }

    /// `var ← value of ctf_var under inner`.
    pub fn set_ctf(mut self, var: &str, ctf_var: &str, inner: InterventionPlan) -> Self {
        self.fixed.push((
            var.into(),
            PlanValue::CounterfactualRef {
                var: ctf_var.into(),
                plan: Box::new(inner),
            },
        ));
        self
    }

    pub fn lookup(&self, var: &str) -> Option<&PlanValue> {
        self.fixed.iter().find(|(v, _)| v == var).map(|(_, p)| p)
    }

    fn depth(&self) -> usize {
        self.fixed
            .iter()
            .map(|(_, v)| match v {
                PlanValue::Value(_) => 1,
                PlanValue::CounterfactualRef { plan, .. } => 1 + plan.depth(),
            })
            .max()
            .unwrap_or(0)
    }

    /// No duplicate targets; nesting depth capped at 2 (enough for y_{x1, W_{x0}}).
    /// Deeper plans are rejected, not truncated.
    pub fn validate(&self, model: &StructuralModel) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (var, value) in &self.fixed {
            if model.mechanism(var).is_none() {
                return Err(Error::Eval(format!(
                    "plan intervenes on undeclared endogenous variable `{var}`"
                )));
            }
            if !seen.insert(var.clone()) {
                return Err(Error::Eval(format!(
                    "plan intervenes on `{var}` more than once"
                )));
            }
            if let PlanValue::CounterfactualRef { var: cvar, plan } = value {
                if model.mechanism(cvar).is_none() {
                    return Err(Error::Eval(format!(
                        "counterfactual reference to undeclared variable `{cvar}`"
                    )));
                }
                plan.validate(model)?;
            }
        }
        if self.depth() > 2 {
            return Err(Error::Eval(format!(
                "intervention plans nest at most 2 deep, got {}",
                self.depth()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> StructuralModel {
        StructuralModel::new(
            vec![
                ExogenousSpec::uniform01("u_x"),
                ExogenousSpec::uniform01("u_y"),
            ],
            vec![
                Mechanism::new(
                    "x",
                    &[],
                    &["u_x"],
                    Expr::Indicator(Box::new(Expr::var("u_x")), Box::new(Expr::Const(0.5))),
                ),
                Mechanism::new(
                    "y",
                    &["x"],
                    &["u_y"],
                    Expr::Add(vec![Expr::var("x"), Expr::var("u_y")]),
                ),
            ],
        )
        .unwrap()
    }

    #[test]
    fn rejects_forward_reference() {
        let err = StructuralModel::new(
            vec![ExogenousSpec::uniform01("u")],
            vec![
                Mechanism::new("a", &["b"], &["u"], Expr::var("b")),
                Mechanism::new("b", &[], &["u"], Expr::var("u")),
            ],
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejects_undeclared_expr_reference() {
        let err = StructuralModel::new(
            vec![ExogenousSpec::uniform01("u")],
            vec![Mechanism::new("a", &[], &[], Expr::var("u"))],
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejects_bad_distribution_params() {
        assert!(StructuralModel::new(
            vec![ExogenousSpec::bernoulli("u", 1.5)],
            vec![]
        )
        .is_err());
        assert!(StructuralModel::new(
            vec![ExogenousSpec::normal("u", 0.0, 0.0)],
            vec![]
        )
        .is_err());
    }

    #[test]
    fn plan_depth_cap() {
        let model = toy();
        let depth3 = InterventionPlan::empty().set_ctf(
            "y",
            "y",
            InterventionPlan::empty().set_ctf("y", "y", InterventionPlan::empty().set("x", 1.0)),
        );
        assert!(depth3.validate(&model).is_err());
        let depth2 =
            InterventionPlan::empty().set_ctf("y", "y", InterventionPlan::empty().set("x", 1.0));
        assert!(depth2.validate(&model).is_ok());
    }

    #[test]
    fn plan_duplicate_target_rejected() {
        let model = toy();
        let dup = InterventionPlan::empty().set("x", 0.0).set("x", 1.0);
        assert!(dup.validate(&model).is_err());
    }
}
