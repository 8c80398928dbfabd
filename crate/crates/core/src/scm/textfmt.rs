//! Plain-text serialization of structural models.
//!
//! One entry per line. Exogenous variables:
//!
//! ```text
//! exo u_x uniform 0 1
//! exo u   normal 0 1
//! ```
//!
//! Mechanisms (`parents` and `exo` are comma-separated, possibly empty;
//! expressions use the prefix notation of [`Expr`]):
//!
//! ```text
//! mech y | parents = x,d | exo = u_y | expr = (ind u_y (+ 0.1 (* 0.7 d)))
//! ```

use crate::error::{Error, Result};
use crate::scm::expr::Expr;
use crate::scm::model::{ExogenousDist, ExogenousSpec, Mechanism, StructuralModel};

pub fn model_to_text(model: &StructuralModel) -> String {
    let mut out = String::new();
    for e in model.exogenous() {
        let line = match e.dist {
            ExogenousDist::Bernoulli { p } => format!("exo {} bernoulli {p}", e.name),
            ExogenousDist::Uniform { lo, hi } => format!("exo {} uniform {lo} {hi}", e.name),
            ExogenousDist::Normal { mean, sd } => format!("exo {} normal {mean} {sd}", e.name),
            ExogenousDist::PointMass { v } => format!("exo {} pointmass {v}", e.name),
        };
        out.push_str(&line);
        out.push('\n');
    }
    for m in model.mechanisms() {
        out.push_str(&format!(
            "mech {} | parents = {} | exo = {} | expr = {}\n",
            m.target,
            m.parents.join(","),
            m.exogenous_args.join(","),
            m.expr
        ));
    }
    out
}

pub fn model_from_text(text: &str) -> Result<StructuralModel> {
    let mut exogenous = Vec::new();
    let mut mechanisms = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fail = |msg: &str| Error::Config(format!("line {}: {msg}", lineno + 1));
        if let Some(rest) = line.strip_prefix("exo ") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            let (name, kind) = match parts.as_slice() {
                [name, kind, ..] => (name.to_string(), *kind),
                _ => return Err(fail("expected `exo <name> <dist> <params...>`")),
            };
            let num = |i: usize| -> Result<f64> {
                parts
                    .get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| fail("bad or missing distribution parameter"))
            };
            let dist = match kind {
                "bernoulli" => ExogenousDist::Bernoulli { p: num(2)? },
                "uniform" => ExogenousDist::Uniform {
                    lo: num(2)?,
                    hi: num(3)?,
                },
                "normal" => ExogenousDist::Normal {
                    mean: num(2)?,
                    sd: num(3)?,
                },
                "pointmass" => ExogenousDist::PointMass { v: num(2)? },
                other => return Err(fail(&format!("unknown distribution `{other}`"))),
            };
            exogenous.push(ExogenousSpec { name, dist });
        } else if let Some(rest) = line.strip_prefix("mech ") {
            let mut fields = rest.split('|');
            let target = fields
                .next()
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| fail("missing mechanism target"))?
                .to_string();
            let mut parents = None;
            let mut exo = None;
            let mut expr = None;
            for f in fields {
                let (key, value) = f
                    .split_once('=')
                    .ok_or_else(|| fail("mechanism field must be `key = value`"))?;
                let value = value.trim();
                match key.trim() {
                    "parents" => parents = Some(split_list(value)),
                    "exo" => exo = Some(split_list(value)),
                    "expr" => expr = Some(Expr::parse(value)?),
                    other => return Err(fail(&format!("unknown mechanism field `{other}`"))),
                }
            }
            mechanisms.push(Mechanism {
                target,
                parents: parents.ok_or_else(|| fail("missing `parents =`"))?,
                exogenous_args: exo.ok_or_else(|| fail("missing `exo =`"))?,
                expr: expr.ok_or_else(|| fail("missing `expr =`"))?,
            });
        } else {
            return Err(fail("expected a line starting with `exo` or `mech`"));
        }
    }
    StructuralModel::new(exogenous, mechanisms)
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{builtin_scenario, ScenarioId};

    #[test]
    fn roundtrip_all_builtin_scenarios() {
        let ids = [
            ScenarioId::Berkeley {
                alpha: 0.0,
                beta: 0.7,
                lambda: 0.2,
            },
            ScenarioId::NdeFail,
            ScenarioId::StartupSalariesTrue,
            ScenarioId::StartupSalariesAlt,
            ScenarioId::HiringIiiA,
            ScenarioId::HiringIiiB,
            ScenarioId::HiringIv,
            ScenarioId::OtFails { eps: 1.0 },
            ScenarioId::NonIdPairM1,
            ScenarioId::NonIdPairM2,
            ScenarioId::CollegeAdmissionsTemporal {
                t: 3,
                kappa0: 0.2,
                lambda0: 0.2,
                alpha0: 0.1,
                beta0: 0.6,
            },
            ScenarioId::RandomLinearSfm {
                n_z: 2,
                n_w: 2,
                seed: 9,
            },
        ];
        for id in ids {
            let m = builtin_scenario(&id).unwrap();
            let text = model_to_text(&m);
            let back = model_from_text(&text)
                .unwrap_or_else(|e| panic!("{}: {e}\n{text}", id.name()));
            assert_eq!(m, back, "{}", id.name());
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(model_from_text("nonsense line").is_err());
        assert!(model_from_text("exo u banana 1").is_err());
    }
}
