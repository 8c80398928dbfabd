//! Index-resolved evaluator for Monte-Carlo hot loops.
//!
//! Semantically identical to [`StructuralModel::evaluate`]; variable names are
//! resolved to slot indices once so that per-unit evaluation touches no maps.

use crate::error::{Error, Result};
use crate::scm::expr::Expr;
use crate::scm::model::{StructuralModel, Unit};

#[derive(Debug, Clone)]
enum Slot {
    Endo(usize),
    Exo(usize),
}

#[derive(Debug, Clone)]
enum CExpr {
    Const(f64),
    Var(Slot),
    Add(Vec<CExpr>),
    Sub(Box<CExpr>, Box<CExpr>),
    Mul(Vec<CExpr>),
    Indicator(Box<CExpr>, Box<CExpr>),
    Expit(Box<CExpr>),
    Min(Box<CExpr>, Box<CExpr>),
    Max(Box<CExpr>, Box<CExpr>),
    Or(Box<CExpr>, Box<CExpr>),
    And(Box<CExpr>, Box<CExpr>),
}

impl CExpr {
    fn eval(&self, endo: &[f64], exo: &[f64]) -> f64 {
        match self {
            CExpr::Const(c) => *c,
            CExpr::Var(Slot::Endo(i)) => endo[*i],
            CExpr::Var(Slot::Exo(i)) => exo[*i],
            CExpr::Add(ts) => ts.iter().map(|t| t.eval(endo, exo)).sum(),
            CExpr::Sub(a, b) => a.eval(endo, exo) - b.eval(endo, exo),
            CExpr::Mul(fs) => fs.iter().map(|f| f.eval(endo, exo)).product(),
            CExpr::Indicator(a, b) => {
                if a.eval(endo, exo) < b.eval(endo, exo) {
                    1.0
                } else {
                    0.0
                }
            }
            CExpr::Expit(a) => 1.0 / (1.0 + (-a.eval(endo, exo)).exp()),
            CExpr::Min(a, b) => a.eval(endo, exo).min(b.eval(endo, exo)),
            CExpr::Max(a, b) => a.eval(endo, exo).max(b.eval(endo, exo)),
            CExpr::Or(a, b) => {
                if a.eval(endo, exo) != 0.0 || b.eval(endo, exo) != 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            CExpr::And(a, b) => {
                if a.eval(endo, exo) != 0.0 && b.eval(endo, exo) != 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// A model with all variable references resolved to indices.
pub(crate) struct CompiledModel {
    exo_names: Vec<String>,
    endo_names: Vec<String>,
    exprs: Vec<CExpr>,
}

impl CompiledModel {
    pub(crate) fn compile(model: &StructuralModel) -> CompiledModel {
        let exo_names: Vec<String> = model.exogenous().iter().map(|e| e.name.clone()).collect();
        let endo_names = model.endogenous_names();
        let resolve = |name: &str| -> Slot {
            if let Some(i) = endo_names.iter().position(|n| n == name) {
                Slot::Endo(i)
            } else if let Some(i) = exo_names.iter().position(|n| n == name) {
                Slot::Exo(i)
            } else {
                unreachable!("validated models have no dangling references")
            }
        };
        fn go(e: &Expr, resolve: &dyn Fn(&str) -> Slot) -> CExpr {
            match e {
                Expr::Const(c) => CExpr::Const(*c),
                Expr::Var(n) => CExpr::Var(resolve(n)),
                Expr::Add(ts) => CExpr::Add(ts.iter().map(|t| go(t, resolve)).collect()),
                Expr::Mul(ts) => CExpr::Mul(ts.iter().map(|t| go(t, resolve)).collect()),
                Expr::Sub(a, b) => CExpr::Sub(Box::new(go(a, resolve)), Box::new(go(b, resolve))),
                Expr::Indicator(a, b) => {
                    CExpr::Indicator(Box::new(go(a, resolve)), Box::new(go(b, resolve)))
                }
                Expr::Expit(a) => CExpr::Expit(Box::new(go(a, resolve))),
                Expr::Min(a, b) => CExpr::Min(Box::new(go(a, resolve)), Box::new(go(b, resolve))),
                Expr::Max(a, b) => CExpr::Max(Box::new(go(a, resolve)), Box::new(go(b, resolve))),
                Expr::Or(a, b) => CExpr::Or(Box::new(go(a, resolve)), Box::new(go(b, resolve))),
                Expr::And(a, b) => CExpr::And(Box::new(go(a, resolve)), Box::new(go(b, resolve))),
            }
        }
        let exprs = model
            .mechanisms()
            .iter()
            .map(|m| go(&m.expr, &resolve))
            .collect();
        CompiledModel {
            exo_names,
            endo_names,
            exprs,
        }
    }

    pub(crate) fn endo_index(&self, name: &str) -> Result<usize> {
        self.endo_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Eval(format!("no endogenous variable `{name}`")))
    }

    pub(crate) fn endo_names(&self) -> &[String] {
        &self.endo_names
    }

    pub(crate) fn unit_values(&self, unit: &Unit) -> Result<Vec<f64>> {
        self.exo_names
            .iter()
            .map(|n| {
                unit.assignment
                    .get(n)
                    .copied()
                    .ok_or_else(|| Error::Eval(format!("unit is missing `{n}`")))
            })
            .collect()
    }

    /// Evaluate with optional per-variable overrides (`Some(v)` = intervened).
    pub(crate) fn run(&self, exo: &[f64], overrides: &[Option<f64>], out: &mut Vec<f64>) {
        out.clear();
        for (i, expr) in self.exprs.iter().enumerate() {
            let v = match overrides[i] {
                Some(forced) => forced,
                None => expr.eval(out, exo),
            };
            out.push(v);
        }
    }

    pub(crate) fn n_endo(&self) -> usize {
        self.endo_names.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{builtin_scenario, sample_units, InterventionPlan, ScenarioId};

    #[test]
    fn compiled_matches_interpreted() {
        for id in [
            ScenarioId::NdeFail,
            ScenarioId::HiringIv,
            ScenarioId::NonIdPairM2,
            ScenarioId::OtFails { eps: 0.5 },
        ] {
            let model = builtin_scenario(&id).unwrap();
            let compiled = CompiledModel::compile(&model);
            let none = vec![None; compiled.n_endo()];
            let mut buf = Vec::new();
            for unit in sample_units(&model, 200, 99) {
                let expect = model.evaluate(&unit, &InterventionPlan::empty()).unwrap();
                let exo = compiled.unit_values(&unit).unwrap();
                compiled.run(&exo, &none, &mut buf);
                for (i, name) in compiled.endo_names().iter().enumerate() {
                    assert_eq!(buf[i], expect[name], "{} in {}", name, id.name());
                }
            }
        }
    }
}
