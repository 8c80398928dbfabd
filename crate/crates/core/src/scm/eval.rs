use std::collections::BTreeMap;

use crate::error::Result;
use crate::scm::model::{InterventionPlan, PlanValue, StructuralModel, Unit};

impl StructuralModel {
    /// Solve the (sub)model for every endogenous variable at unit `u`.
    ///
    /// Intervened variables take their plan values; counterfactual references
    /// are resolved by first solving the inner plan on the same unit. Pure:
    /// the same (model, unit, plan) always yields the same map.
    pub fn evaluate(
        &self,
        unit: &Unit,
        plan: &InterventionPlan,
    ) -> Result<BTreeMap<String, f64>> {
        plan.validate(self)?;
        unit.validate_for(self)?;
        self.evaluate_unchecked(unit, plan)
    }

    /// Evaluation without re-validating plan and unit. Hot path for the
    /// Monte-Carlo oracle, which validates once and evaluates millions of
    /// times.
    pub fn evaluate_unchecked(
        &self,
        unit: &Unit,
        plan: &InterventionPlan,
    ) -> Result<BTreeMap<String, f64>> {
        // Resolve counterfactual references first (inner worlds of this unit).
        let mut resolved: Vec<(String, f64)> = Vec::with_capacity(plan.fixed.len());
        for (var, value) in &plan.fixed {
            let v = match value {
                PlanValue::Value(v) => *v,
                PlanValue::CounterfactualRef { var: cvar, plan } => {
                    let inner = self.evaluate_unchecked(unit, plan)?;
                    inner[cvar]
                }
            };
            resolved.push((var.clone(), v));
        }
        let mut values: BTreeMap<String, f64> = BTreeMap::new();
        for mech in self.mechanisms() {
            let v = match resolved.iter().find(|(var, _)| var == &mech.target) {
                Some((_, forced)) => *forced,
                None => mech.expr.eval(&|name: &str| {
                    values
                        .get(name)
                        .copied()
                        .or_else(|| unit.assignment.get(name).copied())
                })?,
            };
            values.insert(mech.target.clone(), v);
        }
        Ok(values)
    }
}

#[cfg(test)]
mod tests {
    use crate::scm::{builtin_scenario, InterventionPlan, ScenarioId, Unit};

    #[test]
    fn berkeley_nested_counterfactual_by_hand() {
        // alpha = 0, beta = 0.7, lambda = 0.2; u = (0.3, 0.6, 0.5).
        let model = builtin_scenario(&ScenarioId::Berkeley {
            alpha: 0.0,
            beta: 0.7,
            lambda: 0.2,
        })
        .unwrap();
        let u = Unit::new(&[("u_x", 0.3), ("u_d", 0.6), ("u_y", 0.5)]);
        let plan = InterventionPlan::empty()
            .set("x", 1.0)
            .set_ctf("d", "d", InterventionPlan::empty().set("x", 0.0));
        let out = model.evaluate(&u, &plan).unwrap();
        // D_{x0} = 1(0.6 < 0.5) = 0, so Y = 1(0.5 < 0.1) = 0.
        assert_eq!(out["d"], 0.0);
        assert_eq!(out["y"], 0.0);
        assert_eq!(out["x"], 1.0);
    }

    #[test]
    fn startup_salaries_nested_by_hand() {
        let model = builtin_scenario(&ScenarioId::StartupSalariesTrue).unwrap();
        let u = Unit::new(&[("u_x", 1.0), ("u_w", 0.5), ("u_y", 0.3)]);
        let plan = InterventionPlan::empty()
            .set("x", 1.0)
            .set_ctf("w", "w", InterventionPlan::empty().set("x", 0.0));
        let out = model.evaluate(&u, &plan).unwrap();
        // W_{x0} = -0 + 0.5 = 0.5; Y = 1 + 0.5 + 0.3 = 1.8.
        assert_eq!(out["w"], 0.5);
        assert!((out["y"] - 1.8).abs() < 1e-12);
    }

    #[test]
    fn consistency_when_plan_matches_natural_value() {
        let model = builtin_scenario(&ScenarioId::Berkeley {
            alpha: 0.1,
            beta: 0.7,
            lambda: 0.2,
        })
        .unwrap();
        let u = Unit::new(&[("u_x", 0.2), ("u_d", 0.9), ("u_y", 0.05)]);
        let natural = model.evaluate(&u, &InterventionPlan::empty()).unwrap();
        let forced = model
            .evaluate(&u, &InterventionPlan::empty().set("x", natural["x"]))
            .unwrap();
        assert_eq!(natural, forced);
    }

    #[test]
    fn undeclared_plan_variable_errors() {
        let model = builtin_scenario(&ScenarioId::NdeFail).unwrap();
        let u = Unit::new(&[
            ("u", 0.0),
            ("u_x", 0.5),
            ("u_z", 0.5),
            ("u_w", 0.5),
            ("u_y", 0.5),
        ]);
        let plan = InterventionPlan::empty().set("nonexistent", 1.0);
        assert!(model.evaluate(&u, &plan).is_err());
    }
}
