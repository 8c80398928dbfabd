//! Ground-truth Monte-Carlo evaluation of the TV-family measures directly
//! from a structural model, plus decomposition-identity verification.
//!
//! All quantities of one [`Oracle`] are computed on a single shared unit
//! sample, so algebraic identities between measures hold exactly (up to float
//! error) rather than up to independent sampling noise. Counterfactual
//! contrasts use paired differences: both potential outcomes are evaluated on
//! the same unit.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::diagram::SfmRoles;
use crate::error::{Error, Result};
use crate::scm::compiled::CompiledModel;
use crate::scm::{sample_units, InterventionPlan, StructuralModel, Unit};

/// Every measure in the TV family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasureKind {
    Tv,
    Te,
    ExpSe,
    Nde,
    Nie,
    XTe,
    XDe,
    XIe,
    XSe,
    ZTe,
    ZDe,
    ZIe,
    XzTe,
    XzDe,
    XzIe,
    VTe,
    VDe,
    VIe,
    UnitTe,
    UnitDe,
    UnitIe,
    XDeSym,
    XIeSym,
    ObsDe,
    /// Probability of sufficiency P(y_{x1} = 1 | x0, y = 0).
    Ps,
    /// Probability of necessity P(y_{x0} = 0 | x1, y = 1).
    Pn,
    /// Joint counterfactual P(y_{x1} = 1, y_{x0} = 1).
    JointCtf,
}

impl MeasureKind {
    pub fn is_unit_level(&self) -> bool {
        matches!(
            self,
            MeasureKind::UnitTe | MeasureKind::UnitDe | MeasureKind::UnitIe
        )
    }

    /// Kinds whose events may mention the outcome variable.
    fn event_may_touch_outcome(&self) -> bool {
        matches!(
            self,
            MeasureKind::VTe
                | MeasureKind::VDe
                | MeasureKind::VIe
                | MeasureKind::Ps
                | MeasureKind::Pn
                | MeasureKind::JointCtf
        )
    }

    pub fn parse(s: &str) -> Result<MeasureKind> {
        use MeasureKind::*;
        Ok(match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "tv" => Tv,
            "te" => Te,
            "exp-se" | "expse" => ExpSe,
            "nde" => Nde,
            "nie" => Nie,
            "x-te" | "xte" | "ett" => XTe,
            "x-de" | "xde" => XDe,
            "x-ie" | "xie" => XIe,
            "x-se" | "xse" => XSe,
            "z-te" | "zte" => ZTe,
            "z-de" | "zde" => ZDe,
            "z-ie" | "zie" => ZIe,
            "xz-te" | "xzte" => XzTe,
            "xz-de" | "xzde" => XzDe,
            "xz-ie" | "xzie" => XzIe,
            "v-te" | "vte" => VTe,
            "v-de" | "vde" => VDe,
            "v-ie" | "vie" => VIe,
            "unit-te" | "unitte" => UnitTe,
            "unit-de" | "unitde" => UnitDe,
            "unit-ie" | "unitie" => UnitIe,
            "x-de-sym" | "xdesym" => XDeSym,
            "x-ie-sym" | "xiesym" => XIeSym,
            "obs-de" | "obsde" => ObsDe,
            "ps" => Ps,
            "pn" => Pn,
            "joint-ctf" | "jointctf" => JointCtf,
            other => return Err(Error::Config(format!("unknown measure `{other}`"))),
        })
    }

    pub fn label(&self) -> &'static str {
        use MeasureKind::*;
        match self {
            Tv => "tv",
            Te => "te",
            ExpSe => "exp-se",
            Nde => "nde",
            Nie => "nie",
            XTe => "x-te",
            XDe => "x-de",
            XIe => "x-ie",
            XSe => "x-se",
            ZTe => "z-te",
            ZDe => "z-de",
            ZIe => "z-ie",
            XzTe => "xz-te",
            XzDe => "xz-de",
            XzIe => "xz-ie",
            VTe => "v-te",
            VDe => "v-de",
            VIe => "v-ie",
            UnitTe => "unit-te",
            UnitDe => "unit-de",
            UnitIe => "unit-ie",
            XDeSym => "x-de-sym",
            XIeSym => "x-ie-sym",
            ObsDe => "obs-de",
            Ps => "ps",
            Pn => "pn",
            JointCtf => "joint-ctf",
        }
    }
}

/// A conjunction of predicates over endogenous variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Event {
    pub predicates: Vec<Predicate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub var: String,
    pub cond: Condition,
}

/// Equality for discrete variables, half-open interval for continuous ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Condition {
    Eq(f64),
    /// lo <= v < hi; either bound may be absent.
    Interval { lo: Option<f64>, hi: Option<f64> },
}

impl Event {
    pub fn empty() -> Event {
        Event::default()
    }

    pub fn eq(mut self, var: &str, value: f64) -> Event {
        self.predicates.push(Predicate {
            var: var.into(),
            cond: Condition::Eq(value),
        });
        self
    }

    pub fn interval(mut self, var: &str, lo: Option<f64>, hi: Option<f64>) -> Event {
        self.predicates.push(Predicate {
            var: var.into(),
            cond: Condition::Interval { lo, hi },
        });
        self
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }

    pub fn touches(&self, var: &str) -> bool {
        self.predicates.iter().any(|p| p.var == var)
    }

    pub fn describe(&self) -> String {
        if self.predicates.is_empty() {
            return "(all)".into();
        }
        self.predicates
            .iter()
            .map(|p| match p.cond {
                Condition::Eq(v) => format!("{} = {v}", p.var),
                Condition::Interval { lo, hi } => match (lo, hi) {
                    (Some(l), Some(h)) => format!("{l} <= {} < {h}", p.var),
                    (Some(l), None) => format!("{} >= {l}", p.var),
                    (None, Some(h)) => format!("{} < {h}", p.var),
                    (None, None) => format!("{} unconstrained", p.var),
                },
            })
            .collect::<Vec<_>>()
            .join(" and ")
    }
}

/// Which measure to evaluate, over which transition and conditioning event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub kind: MeasureKind,
    pub x0: f64,
    pub x1: f64,
    #[serde(default)]
    pub event: Event,
    /// Required for unit-level kinds; ignored otherwise.
    #[serde(default)]
    pub unit: Option<Unit>,
}

impl MeasureSpec {
    pub fn new(kind: MeasureKind, x0: f64, x1: f64) -> Self {
        Self {
            kind,
            x0,
            x1,
            event: Event::empty(),
            unit: None,
        }
    }

    pub fn with_event(mut self, event: Event) -> Self {
        self.event = event;
        self
    }

    pub fn for_unit(mut self, unit: Unit) -> Self {
        self.unit = Some(unit);
        self
    }
}

/// Monte-Carlo estimate: value, standard error, and how many units satisfied
/// the conditioning event. Unit-level kinds are deterministic (stderr 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub value: f64,
    pub mc_stderr: f64,
    pub n_effective: usize,
}

/// Decomposition level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecompositionLevel {
    General,
    XSpecific,
    /// Aggregated over the observed cells of a discrete Z.
    ZSpecific,
}

/// TV split into direct, indirect, and spurious parts.
///
/// All three components are oriented along the x0 -> x1 transition so that
/// tv = de + ie + se; `residual` is tv minus that sum on the shared sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub level: DecompositionLevel,
    pub tv: f64,
    pub de: f64,
    pub ie: f64,
    pub se: f64,
    pub residual: f64,
}

const MIN_EFFECTIVE: usize = 100;
const MAX_DISCRETE_SUPPORT: usize = 50;

/// Potential responses for one unit, plus its factual row (indexed like the
/// compiled model's endogenous order).
struct UnitWorlds {
    factual: Vec<f64>,
    y: f64,
    y_x0: f64,
    y_x1: f64,
    /// y under {X <- x1, W <- W_{x0}}.
    y_x1_w_x0: f64,
    /// y under {X <- x0, W <- W_{x1}}.
    y_x0_w_x1: f64,
}

/// Monte-Carlo oracle over one shared unit sample.
pub struct Oracle {
    worlds: Vec<UnitWorlds>,
    endo_names: Vec<String>,
    x_idx: usize,
    x0: f64,
    x1: f64,
    roles: SfmRoles,
    model: StructuralModel,
}

impl Oracle {
    /// Sample `n` units and evaluate the four counterfactual worlds needed by
    /// the TV family on each. Deterministic given `seed`.
    pub fn new(
        model: &StructuralModel,
        roles: &SfmRoles,
        x0: f64,
        x1: f64,
        n: usize,
        seed: u64,
    ) -> Result<Oracle> {
        if n == 0 {
            return Err(Error::DegenerateEvent("oracle needs n > 0".into()));
        }
        let compiled = CompiledModel::compile(model);
        let x_idx = compiled.endo_index(&roles.x)?;
        let y_idx = compiled.endo_index(&roles.y)?;
        let w_idx: Vec<usize> = roles
            .w
            .iter()
            .map(|w| compiled.endo_index(w))
            .collect::<Result<_>>()?;

        let n_endo = compiled.n_endo();
        let mut ov_none = vec![None; n_endo];
        let mut ov_x = vec![None; n_endo];
        let mut buf = Vec::with_capacity(n_endo);
        let mut buf_x0 = Vec::with_capacity(n_endo);
        let mut buf_x1 = Vec::with_capacity(n_endo);
        let mut worlds = Vec::with_capacity(n);
        for unit in sample_units(model, n, seed) {
            let exo = compiled.unit_values(&unit)?;
            compiled.run(&exo, &ov_none, &mut buf);
            let factual = buf.clone();
            // Worlds X <- x0 and X <- x1 (their W values feed the nested worlds).
            ov_x[x_idx] = Some(x0);
            compiled.run(&exo, &ov_x, &mut buf_x0);
            ov_x[x_idx] = Some(x1);
            compiled.run(&exo, &ov_x, &mut buf_x1);
            ov_x[x_idx] = None;
            // Nested worlds: X forced one way, W forced to the other world's values.
            ov_none[x_idx] = Some(x1);
            for &wi in &w_idx {
                ov_none[wi] = Some(buf_x0[wi]);
            }
            compiled.run(&exo, &ov_none, &mut buf);
            let y_x1_w_x0 = buf[y_idx];
            ov_none[x_idx] = Some(x0);
            for &wi in &w_idx {
                ov_none[wi] = Some(buf_x1[wi]);
            }
            compiled.run(&exo, &ov_none, &mut buf);
            let y_x0_w_x1 = buf[y_idx];
            ov_none[x_idx] = None;
            for &wi in &w_idx {
                ov_none[wi] = None;
            }
            worlds.push(UnitWorlds {
                y: factual[y_idx],
                y_x0: buf_x0[y_idx],
                y_x1: buf_x1[y_idx],
                y_x1_w_x0,
                y_x0_w_x1,
                factual,
            });
        }
        Ok(Oracle {
            worlds,
            endo_names: compiled.endo_names().to_vec(),
            x_idx,
            x0,
            x1,
            roles: roles.clone(),
            model: model.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.worlds.len()
    }

    fn pred_index(&self, event: &Event) -> Result<Vec<(usize, Condition)>> {
        event
            .predicates
            .iter()
            .map(|p| {
                let idx = self
                    .endo_names
                    .iter()
                    .position(|n| n == &p.var)
                    .ok_or_else(|| Error::Config(format!("event references unknown `{}`", p.var)))?;
                Ok((idx, p.cond.clone()))
            })
            .collect()
    }

    fn reject_point_conditioning(&self, preds: &[(usize, Condition)]) -> Result<()> {
        for (idx, cond) in preds {
            if matches!(cond, Condition::Eq(_)) {
                let mut distinct: Vec<f64> = Vec::new();
                for w in &self.worlds {
                    let v = w.factual[*idx];
                    if !distinct.contains(&v) {
                        distinct.push(v);
                        if distinct.len() > MAX_DISCRETE_SUPPORT {
                            return Err(Error::DegenerateEvent(format!(
                                "`{}` looks continuous; condition on an interval instead of a point",
                                self.endo_names[*idx]
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn subset(&self, event: &Event) -> Result<Vec<&UnitWorlds>> {
        let preds = self.pred_index(event)?;
        self.reject_point_conditioning(&preds)?;
        let holds = |w: &UnitWorlds| {
            preds.iter().all(|(idx, cond)| match cond {
                Condition::Eq(t) => w.factual[*idx] == *t,
                Condition::Interval { lo, hi } => {
                    lo.map_or(true, |l| w.factual[*idx] >= l)
                        && hi.map_or(true, |h| w.factual[*idx] < h)
                }
            })
        };
        let sub: Vec<&UnitWorlds> = self.worlds.iter().filter(|w| holds(w)).collect();
        if sub.len() < MIN_EFFECTIVE {
            return Err(Error::DegenerateEvent(format!(
                "event {} matches {} units; need at least {MIN_EFFECTIVE}",
                event.describe(),
                sub.len()
            )));
        }
        Ok(sub)
    }

    fn and_x(&self, event: &Event, x: f64) -> Event {
        let mut e = event.clone();
        e.predicates.push(Predicate {
            var: self.roles.x.clone(),
            cond: Condition::Eq(x),
        });
        e
    }

    fn x_event(&self, x: f64) -> Event {
        Event::empty().eq(&self.roles.x, x)
    }

    /// Evaluate one measure on the shared sample.
    pub fn measure(&self, spec: &MeasureSpec) -> Result<OracleEstimate> {
        use MeasureKind::*;
        if spec.kind.is_unit_level() {
            let unit = spec
                .unit
                .as_ref()
                .ok_or_else(|| Error::Config("unit-level measures need a unit".into()))?;
            let value = unit_effect(&self.model, &self.roles, spec.kind, spec.x0, spec.x1, unit)?;
            return Ok(OracleEstimate {
                value,
                mc_stderr: 0.0,
                n_effective: 1,
            });
        }
        if !spec.event.is_empty()
            && !spec.kind.event_may_touch_outcome()
            && spec.event.touches(&self.roles.y)
        {
            return Err(Error::Config(format!(
                "event may not reference the outcome for measure `{}`",
                spec.kind.label()
            )));
        }
        let (x0, x1) = (spec.x0, spec.x1);
        if (x0, x1) != (self.x0, self.x1) && (x0, x1) != (self.x1, self.x0) {
            return Err(Error::Config(format!(
                "oracle was built for transition ({}, {}); got ({x0}, {x1})",
                self.x0, self.x1
            )));
        }
        // Potential outcomes for the requested orientation.
        let flipped = (x0, x1) == (self.x1, self.x0);
        let pox0 = |w: &UnitWorlds| if flipped { w.y_x1 } else { w.y_x0 };
        let pox1 = |w: &UnitWorlds| if flipped { w.y_x0 } else { w.y_x1 };
        let po_x1_w_x0 = |w: &UnitWorlds| if flipped { w.y_x0_w_x1 } else { w.y_x1_w_x0 };
        let po_x0_w_x1 = |w: &UnitWorlds| if flipped { w.y_x1_w_x0 } else { w.y_x0_w_x1 };

        let paired = |sub: &[&UnitWorlds], f: &dyn Fn(&UnitWorlds) -> f64| {
            let vals: Vec<f64> = sub.iter().map(|w| f(w)).collect();
            let (m, s) = mean_se(&vals);
            OracleEstimate {
                value: m,
                mc_stderr: s,
                n_effective: vals.len(),
            }
        };
        let two_group = |a: &[&UnitWorlds],
                         b: &[&UnitWorlds],
                         fa: &dyn Fn(&UnitWorlds) -> f64,
                         fb: &dyn Fn(&UnitWorlds) -> f64| {
            let va: Vec<f64> = a.iter().map(|w| fa(w)).collect();
            let vb: Vec<f64> = b.iter().map(|w| fb(w)).collect();
            let ((ma, sa), (mb, sb)) = (mean_se(&va), mean_se(&vb));
            OracleEstimate {
                value: ma - mb,
                mc_stderr: (sa * sa + sb * sb).sqrt(),
                n_effective: va.len() + vb.len(),
            }
        };
        match spec.kind {
            Tv => {
                let g1 = self.subset(&self.x_event(x1))?;
                let g0 = self.subset(&self.x_event(x0))?;
                Ok(two_group(&g1, &g0, &|w| w.y, &|w| w.y))
            }
            Te => {
                let sub = self.subset(&spec.event)?;
                Ok(paired(&sub, &|w| pox1(w) - pox0(w)))
            }
            ExpSe => {
                // Exp-SE_{x0}(y) = E[y_{x0}] - E[y | x0].
                let all = self.subset(&Event::empty())?;
                let g = self.subset(&self.x_event(x0))?;
                Ok(two_group(&all, &g, &pox0, &|w| w.y))
            }
            Nde => {
                let sub = self.subset(&spec.event)?;
                Ok(paired(&sub, &|w| po_x1_w_x0(w) - pox0(w)))
            }
            Nie => {
                // NIE along (x0, x1): E[y_{x0, W_{x1}}] - E[y_{x0}].
                let sub = self.subset(&spec.event)?;
                Ok(paired(&sub, &|w| po_x0_w_x1(w) - pox0(w)))
            }
            XTe => {
                let sub = self.subset(&self.and_x(&spec.event, x0))?;
                Ok(paired(&sub, &|w| pox1(w) - pox0(w)))
            }
            XDe | XzDe => {
                let sub = self.subset(&self.and_x(&spec.event, x0))?;
                Ok(paired(&sub, &|w| po_x1_w_x0(w) - pox0(w)))
            }
            XIe | XzIe => {
                let sub = self.subset(&self.and_x(&spec.event, x0))?;
                Ok(paired(&sub, &|w| po_x0_w_x1(w) - pox0(w)))
            }
            XzTe => {
                let sub = self.subset(&self.and_x(&spec.event, x0))?;
                Ok(paired(&sub, &|w| pox1(w) - pox0(w)))
            }
            XSe => {
                // x-SE_{x0,x1}(y) = P(y_{x0} | x1) - P(y_{x0} | x0).
                let g1 = self.subset(&self.x_event(x1))?;
                let g0 = self.subset(&self.x_event(x0))?;
                Ok(two_group(&g1, &g0, &pox0, &pox0))
            }
            ZTe | VTe => {
                let sub = self.subset(&spec.event)?;
                Ok(paired(&sub, &|w| pox1(w) - pox0(w)))
            }
            ZDe | VDe => {
                let sub = self.subset(&spec.event)?;
                Ok(paired(&sub, &|w| po_x1_w_x0(w) - pox0(w)))
            }
            ZIe | VIe => {
                let sub = self.subset(&spec.event)?;
                Ok(paired(&sub, &|w| po_x0_w_x1(w) - pox0(w)))
            }
            XDeSym => {
                let sub = self.subset(&self.and_x(&spec.event, x0))?;
                Ok(paired(&sub, &|w| {
                    0.5 * ((po_x1_w_x0(w) - pox0(w)) - (po_x0_w_x1(w) - pox1(w)))
                }))
            }
            XIeSym => {
                let sub = self.subset(&self.and_x(&spec.event, x0))?;
                Ok(paired(&sub, &|w| {
                    0.5 * ((po_x0_w_x1(w) - pox0(w)) - (po_x1_w_x0(w) - pox1(w)))
                }))
            }
            ObsDe => {
                let g1 = self.subset(&self.and_x(&spec.event, x1))?;
                let g0 = self.subset(&self.and_x(&spec.event, x0))?;
                Ok(two_group(&g1, &g0, &|w| w.y, &|w| w.y))
            }
            Ps => {
                let mut e = self.x_event(x0);
                e.predicates.push(Predicate {
                    var: self.roles.y.clone(),
                    cond: Condition::Eq(0.0),
                });
                let sub = self.subset(&e)?;
                Ok(paired(&sub, &|w| pox1(w)))
            }
            Pn => {
                let mut e = self.x_event(x1);
                e.predicates.push(Predicate {
                    var: self.roles.y.clone(),
                    cond: Condition::Eq(1.0),
                });
                let sub = self.subset(&e)?;
                Ok(paired(&sub, &|w| 1.0 - pox0(w)))
            }
            JointCtf => {
                let sub = self.subset(&spec.event)?;
                Ok(paired(&sub, &|w| pox1(w) * pox0(w)))
            }
            UnitTe | UnitDe | UnitIe => unreachable!(),
        }
    }

    /// TV split into (de, ie, se) at the requested level, all terms on the
    /// shared sample; residual = tv - (de + ie + se).
    pub fn decompose_tv(&self, level: DecompositionLevel) -> Result<DecompositionReport> {
        let (x0, x1) = (self.x0, self.x1);
        let g1 = self.subset(&self.x_event(x1))?;
        let g0 = self.subset(&self.x_event(x0))?;
        let mean = |vals: &[f64]| vals.iter().sum::<f64>() / vals.len() as f64;
        let tv = mean(&g1.iter().map(|w| w.y).collect::<Vec<_>>())
            - mean(&g0.iter().map(|w| w.y).collect::<Vec<_>>());
        let (de, ie, se) = match level {
            DecompositionLevel::General | DecompositionLevel::ZSpecific => {
                if level == DecompositionLevel::ZSpecific {
                    self.require_discrete_z()?;
                }
                // de = NDE_{x0,x1}; ie = -NIE_{x1,x0}; se = ExpSE_{x0} - ExpSE_{x1}.
                // At the z-level de and ie aggregate the per-cell measures over
                // the empirical P(z), which telescopes to the same means.
                let all: Vec<&UnitWorlds> = self.worlds.iter().collect();
                let de = mean(&all.iter().map(|w| w.y_x1_w_x0 - w.y_x0).collect::<Vec<_>>());
                let ie = mean(&all.iter().map(|w| w.y_x1 - w.y_x1_w_x0).collect::<Vec<_>>());
                let exp_se_x0 = mean(&all.iter().map(|w| w.y_x0).collect::<Vec<_>>())
                    - mean(&g0.iter().map(|w| w.y).collect::<Vec<_>>());
                let exp_se_x1 = mean(&all.iter().map(|w| w.y_x1).collect::<Vec<_>>())
                    - mean(&g1.iter().map(|w| w.y).collect::<Vec<_>>());
                (de, ie, exp_se_x0 - exp_se_x1)
            }
            DecompositionLevel::XSpecific => {
                // de = x-DE_{x0,x1}(y|x0); ie = -x-IE_{x1,x0}(y|x0);
                // se = -x-SE_{x1,x0}(y).
                let de = mean(&g0.iter().map(|w| w.y_x1_w_x0 - w.y_x0).collect::<Vec<_>>());
                let ie = mean(&g0.iter().map(|w| w.y_x1 - w.y_x1_w_x0).collect::<Vec<_>>());
                let se = mean(&g1.iter().map(|w| w.y_x1).collect::<Vec<_>>())
                    - mean(&g0.iter().map(|w| w.y_x1).collect::<Vec<_>>());
                (de, ie, se)
            }
        };
        Ok(DecompositionReport {
            level,
            tv,
            de,
            ie,
            se,
            residual: tv - (de + ie + se),
        })
    }

    fn require_discrete_z(&self) -> Result<()> {
        if self.roles.z.is_empty() {
            return Err(Error::Config(
                "z-specific level needs a non-empty Z role".into(),
            ));
        }
        for z in &self.roles.z {
            let idx = self
                .endo_names
                .iter()
                .position(|n| n == z)
                .ok_or_else(|| Error::Config(format!("unknown Z variable `{z}`")))?;
            let mut distinct: Vec<f64> = Vec::new();
            for w in &self.worlds {
                let v = w.factual[idx];
                if !distinct.contains(&v) {
                    distinct.push(v);
                    if distinct.len() > MAX_DISCRETE_SUPPORT {
                        return Err(Error::Config(format!(
                            "z-specific level needs discrete Z; `{z}` looks continuous"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Observed value of variable `name` for every sampled unit.
    pub fn factual_column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .endo_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("unknown variable `{name}`")))?;
        Ok(self.worlds.iter().map(|w| w.factual[idx]).collect())
    }

    /// Covariance of X with Y split into its causal and spurious parts
    /// (reference level x0): Cov(X, Y) = Cov(X, Y - Y_{x0}) + Cov(X, Y_{x0}).
    pub fn covariance_decomposition(&self) -> (f64, f64, f64) {
        let x: Vec<f64> = self.worlds.iter().map(|w| w.factual[self.x_idx]).collect();
        let y: Vec<f64> = self.worlds.iter().map(|w| w.y).collect();
        let y_ctf: Vec<f64> = self.worlds.iter().map(|w| w.y - w.y_x0).collect();
        let y_x0: Vec<f64> = self.worlds.iter().map(|w| w.y_x0).collect();
        (cov(&x, &y), cov(&x, &y_ctf), cov(&x, &y_x0))
    }
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (
        a.iter().sum::<f64>() / n,
        b.iter().sum::<f64>() / n,
    );
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / n
}

/// Deterministic unit-level effect (total, direct, or indirect) for one unit.
pub fn unit_effect(
    model: &StructuralModel,
    roles: &SfmRoles,
    kind: MeasureKind,
    x0: f64,
    x1: f64,
    unit: &Unit,
) -> Result<f64> {
    let at = |x: f64| -> Result<BTreeMap<String, f64>> {
        model.evaluate(unit, &InterventionPlan::empty().set(&roles.x, x))
    };
    let nested = |outer: f64, inner: f64| -> Result<BTreeMap<String, f64>> {
        let mut plan = InterventionPlan::empty().set(&roles.x, outer);
        for w in &roles.w {
            plan = plan.set_ctf(w, w, InterventionPlan::empty().set(&roles.x, inner));
        }
        model.evaluate(unit, &plan)
    };
    let y = &roles.y;
    Ok(match kind {
        MeasureKind::UnitTe => at(x1)?[y] - at(x0)?[y],
        MeasureKind::UnitDe => nested(x1, x0)?[y] - at(x0)?[y],
        // unit-IE along (x0, x1): y_{x0, W_{x1}}(u) - y_{x0}(u).
        MeasureKind::UnitIe => nested(x0, x1)?[y] - at(x0)?[y],
        other => {
            return Err(Error::Config(format!(
                "`{}` is not a unit-level measure",
                other.label()
            )))
        }
    })
}

/// One-shot convenience wrapper: build an oracle and evaluate a single spec.
pub fn oracle_measure(
    model: &StructuralModel,
    roles: &SfmRoles,
    spec: &MeasureSpec,
    n: usize,
    seed: u64,
) -> Result<OracleEstimate> {
    if spec.kind.is_unit_level() {
        let unit = spec
            .unit
            .as_ref()
            .ok_or_else(|| Error::Config("unit-level measures need a unit".into()))?;
        let value = unit_effect(model, roles, spec.kind, spec.x0, spec.x1, unit)?;
        return Ok(OracleEstimate {
            value,
            mc_stderr: 0.0,
            n_effective: 1,
        });
    }
    Oracle::new(model, roles, spec.x0, spec.x1, n, seed)?.measure(spec)
}

/// Residual of one algebraic relation between measures, evaluated on a shared
/// sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelationResidual {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Outcome of an admissibility spot-check for one (criterion, measure) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdmissibilityFlag {
    /// Criterion inactive and measure ~ 0, or criterion active and measure != 0.
    Consistent,
    /// Criterion active yet the measure vanishes: a power failure of the
    /// measure, not an admissibility violation.
    PowerFailure,
    /// Criterion inactive but the measure is significantly non-zero.
    Violation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibilityCheck {
    pub criterion: String,
    pub structurally_active: bool,
    pub measure: String,
    pub value: f64,
    pub mc_stderr: f64,
    pub flag: AdmissibilityFlag,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapReport {
    pub relations: Vec<RelationResidual>,
    pub admissibility: Vec<AdmissibilityCheck>,
}

/// Verify the cross-measure identities and admissibility implications on a
/// shared unit sample.
pub fn verify_map_relations(
    model: &StructuralModel,
    roles: &SfmRoles,
    x0: f64,
    x1: f64,
    n: usize,
    seed: u64,
) -> Result<MapReport> {
    let oracle = Oracle::new(model, roles, x0, x1, n, seed)?;
    let m = |kind: MeasureKind| oracle.measure(&MeasureSpec::new(kind, x0, x1));
    let m_rev = |kind: MeasureKind| oracle.measure(&MeasureSpec::new(kind, x1, x0));

    let mut relations = Vec::new();
    let mut push = |name: &str, lhs: f64, rhs: f64| {
        relations.push(RelationResidual {
            name: name.into(),
            lhs,
            rhs,
            residual: lhs - rhs,
        });
    };

    let tv = m(MeasureKind::Tv)?.value;
    let te = m(MeasureKind::Te)?.value;
    let nde = m(MeasureKind::Nde)?.value;
    let nie_rev = m_rev(MeasureKind::Nie)?.value; // NIE along x1 -> x0
    let exp_se_x0 = m(MeasureKind::ExpSe)?.value;
    let exp_se_x1 = m_rev(MeasureKind::ExpSe)?.value;
    let x_te = m(MeasureKind::XTe)?.value;
    let x_de = m(MeasureKind::XDe)?.value;
    let x_se = m(MeasureKind::XSe)?.value; // x-SE_{x0,x1}
    let x_se_rev = m_rev(MeasureKind::XSe)?.value; // x-SE_{x1,x0}

    // Mediation at the population level: TE = NDE - NIE(reversed).
    push("te = nde - nie_rev", te, nde - nie_rev);
    // TV via experimental spurious effects.
    push(
        "tv = te + (exp_se_x0 - exp_se_x1)",
        tv,
        te + (exp_se_x0 - exp_se_x1),
    );
    // TV via the treated-group contrast.
    push("tv = x_te - x_se_rev", tv, x_te - x_se_rev);
    // Spurious power relation, both attribute levels.
    let p_x1 = frac(&oracle, x1)?;
    let p_x0 = frac(&oracle, x0)?;
    push("exp_se_x0 = p(x1) * x_se(x0,x1)", exp_se_x0, p_x1 * x_se);
    push(
        "exp_se_x1 = p(x0) * x_se(x1,x0)",
        exp_se_x1,
        p_x0 * x_se_rev,
    );
    // x-specific mediation: x-TE_{x0,x1}(y|x0) = x-DE_{x0,x1}(y|x0)
    // - x-IE_{x1,x0}(y|x0), the last term computed on the baseline group.
    let g0 = oracle.subset(&oracle.x_event(x0))?;
    let x_ie_rev_on_x0 = g0
        .iter()
        .map(|w| w.y_x1_w_x0 - w.y_x1)
        .sum::<f64>()
        / g0.len() as f64;
    push("x_te = x_de - x_ie_rev(x0)", x_te, x_de - x_ie_rev_on_x0);
    // Additive decomposition identities at every level.
    for level in [
        DecompositionLevel::General,
        DecompositionLevel::XSpecific,
    ] {
        let rep = oracle.decompose_tv(level)?;
        push(
            &format!("tv = de + ie + se ({:?})", level),
            rep.tv,
            rep.de + rep.ie + rep.se,
        );
    }
    // Covariance decomposition.
    let (cov, cov_c, cov_s) = oracle.covariance_decomposition();
    push("cov = cov_causal + cov_spurious", cov, cov_c + cov_s);

    // Admissibility spot-checks against the structural criteria.
    let (str_de, str_ie, str_se) = crate::diagram::structural_criteria(model, &roles.x, &roles.y);
    let mut admissibility = Vec::new();
    let mut check = |criterion: &str, active: bool, measure: &str, est: OracleEstimate| {
        let sig = est.value.abs() > 3.0 * est.mc_stderr + 1e-12;
        let flag = match (active, sig) {
            (false, true) => AdmissibilityFlag::Violation,
            (true, false) => AdmissibilityFlag::PowerFailure,
            _ => AdmissibilityFlag::Consistent,
        };
        admissibility.push(AdmissibilityCheck {
            criterion: criterion.into(),
            structurally_active: active,
            measure: measure.into(),
            value: est.value,
            mc_stderr: est.mc_stderr,
            flag,
        });
    };
    check("direct", str_de, "nde", m(MeasureKind::Nde)?);
    check("direct", str_de, "x-de", m(MeasureKind::XDe)?);
    check("indirect", str_ie, "nie", m(MeasureKind::Nie)?);
    check("indirect", str_ie, "x-ie", m(MeasureKind::XIe)?);
    check("spurious", str_se, "exp-se", m(MeasureKind::ExpSe)?);
    check("spurious", str_se, "x-se", m(MeasureKind::XSe)?);

    Ok(MapReport {
        relations,
        admissibility,
    })
}

fn frac(oracle: &Oracle, x: f64) -> Result<f64> {
    let col = oracle.factual_column(&oracle.roles.x)?;
    Ok(col.iter().filter(|v| **v == x).count() as f64 / col.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{builtin_scenario, ScenarioId};

    fn oracle_for(id: &ScenarioId, n: usize, seed: u64) -> Oracle {
        let model = builtin_scenario(id).unwrap();
        let roles = id.roles();
        let (x0, x1) = id.transition();
        Oracle::new(&model, &roles, x0, x1, n, seed).unwrap()
    }

    fn spec(kind: MeasureKind, id: &ScenarioId) -> MeasureSpec {
        let (x0, x1) = id.transition();
        MeasureSpec::new(kind, x0, x1)
    }

    #[test]
    fn berkeley_tv_and_joint() {
        let id = ScenarioId::Berkeley {
            alpha: 0.0,
            beta: 0.7,
            lambda: 0.2,
        };
        let o = oracle_for(&id, 200_000, 3);
        let tv = o.measure(&spec(MeasureKind::Tv, &id)).unwrap();
        assert!((tv.value - 0.14).abs() < 0.006, "tv = {}", tv.value);
        let joint = o.measure(&spec(MeasureKind::JointCtf, &id)).unwrap();
        assert!((joint.value - 0.45).abs() < 0.006, "joint = {}", joint.value);
    }

    #[test]
    fn nde_fail_hierarchy() {
        let id = ScenarioId::NdeFail;
        let o = oracle_for(&id, 400_000, 7);
        let nde = o.measure(&spec(MeasureKind::Nde, &id)).unwrap();
        assert!(nde.value.abs() < 0.008, "nde = {}", nde.value);
        let xde = o.measure(&spec(MeasureKind::XDe, &id)).unwrap();
        assert!((xde.value - 0.036).abs() < 0.005, "xde = {}", xde.value);
        let zde = o
            .measure(&spec(MeasureKind::ZDe, &id).with_event(Event::empty().eq("z", 0.0)))
            .unwrap();
        assert!((zde.value - 0.2).abs() < 0.01, "zde = {}", zde.value);
    }

    #[test]
    fn startup_salaries_unit_effects() {
        let model = builtin_scenario(&ScenarioId::StartupSalariesTrue).unwrap();
        let roles = ScenarioId::StartupSalariesTrue.roles();
        let u = Unit::new(&[("u_x", 1.0), ("u_w", 0.4), ("u_y", -0.2)]);
        let te = unit_effect(&model, &roles, MeasureKind::UnitTe, 0.0, 1.0, &u).unwrap();
        assert_eq!(te, 0.0);

        let alt = builtin_scenario(&ScenarioId::StartupSalariesAlt).unwrap();
        let te = unit_effect(&alt, &roles, MeasureKind::UnitTe, 0.0, 1.0, &u).unwrap();
        assert!((te - (-0.8)).abs() < 1e-12, "u-te = {te}");
    }

    #[test]
    fn non_id_pair_nie_differs() {
        let o1 = oracle_for(&ScenarioId::NonIdPairM1, 300_000, 11);
        let o2 = oracle_for(&ScenarioId::NonIdPairM2, 300_000, 12);
        let nie1 = o1.measure(&spec(MeasureKind::Nie, &ScenarioId::NonIdPairM1)).unwrap();
        let nie2 = o2.measure(&spec(MeasureKind::Nie, &ScenarioId::NonIdPairM2)).unwrap();
        assert!((nie1.value - 0.28).abs() < 0.01, "nie1 = {}", nie1.value);
        assert!((nie2.value - 0.04).abs() < 0.01, "nie2 = {}", nie2.value);
    }

    #[test]
    fn hiring_iii_nde_contrast() {
        let oa = oracle_for(&ScenarioId::HiringIiiA, 200_000, 5);
        let ob = oracle_for(&ScenarioId::HiringIiiB, 200_000, 6);
        let nde_a = oa.measure(&spec(MeasureKind::Nde, &ScenarioId::HiringIiiA)).unwrap();
        let nde_b = ob.measure(&spec(MeasureKind::Nde, &ScenarioId::HiringIiiB)).unwrap();
        assert!((nde_a.value - 1.0).abs() < 0.01, "nde_a = {}", nde_a.value);
        assert!(nde_b.value.abs() < 0.01, "nde_b = {}", nde_b.value);
    }

    #[test]
    fn hiring_iv_decomposition() {
        // Exact components are (0, +0.15051, -0.15039) with TV = 0; the
        // indirect and spurious parts cancel.
        let o = oracle_for(&ScenarioId::HiringIv, 400_000, 21);
        let rep = o.decompose_tv(DecompositionLevel::XSpecific).unwrap();
        assert!(rep.de.abs() < 0.005, "de = {}", rep.de);
        assert!((rep.ie - 0.1505).abs() < 0.01, "ie = {}", rep.ie);
        assert!((rep.se + 0.1504).abs() < 0.01, "se = {}", rep.se);
        assert!(rep.tv.abs() < 0.01, "tv = {}", rep.tv);
        assert!(rep.residual.abs() < 1e-10, "residual = {}", rep.residual);
    }

    #[test]
    fn decomposition_residuals_vanish_on_shared_sample() {
        for id in [
            ScenarioId::Berkeley {
                alpha: 0.0,
                beta: 0.7,
                lambda: 0.2,
            },
            ScenarioId::NdeFail,
            ScenarioId::HiringIv,
        ] {
            let o = oracle_for(&id, 50_000, 17);
            for level in [DecompositionLevel::General, DecompositionLevel::XSpecific] {
                let rep = o.decompose_tv(level).unwrap();
                assert!(
                    rep.residual.abs() < 1e-10,
                    "{} {:?}: residual {}",
                    id.name(),
                    level,
                    rep.residual
                );
            }
        }
        // z-level needs discrete Z.
        let o = oracle_for(&ScenarioId::NdeFail, 50_000, 18);
        let rep = o.decompose_tv(DecompositionLevel::ZSpecific).unwrap();
        assert!(rep.residual.abs() < 1e-10);
        let o = oracle_for(&ScenarioId::HiringIv, 10_000, 18);
        assert!(o.decompose_tv(DecompositionLevel::ZSpecific).is_err());
    }

    #[test]
    fn ps_pn_match_v_te_special_cases() {
        let id = ScenarioId::Berkeley {
            alpha: 0.1,
            beta: 0.5,
            lambda: 0.2,
        };
        let o = oracle_for(&id, 100_000, 9);
        let ps = o.measure(&spec(MeasureKind::Ps, &id)).unwrap();
        let vte_ps = o
            .measure(
                &spec(MeasureKind::VTe, &id)
                    .with_event(Event::empty().eq("x", 0.0).eq("y", 0.0)),
            )
            .unwrap();
        // v-TE with event {x0, y0}: second term is exactly 0 by consistency.
        assert!((ps.value - vte_ps.value).abs() < 1e-12);
        let pn = o.measure(&spec(MeasureKind::Pn, &id)).unwrap();
        let vte_pn = o
            .measure(
                &spec(MeasureKind::VTe, &id)
                    .with_event(Event::empty().eq("x", 1.0).eq("y", 1.0)),
            )
            .unwrap();
        // v-TE with event {x1, y1}: first term is 1 by consistency, so it
        // equals P(y_{x0} = 0 | x1, y1) = PN.
        assert!((vte_pn.value - pn.value).abs() < 1e-12);
    }

    #[test]
    fn degenerate_event_rejected() {
        let id = ScenarioId::NdeFail;
        let o = oracle_for(&id, 5_000, 2);
        let err = o.measure(&spec(MeasureKind::ZDe, &id).with_event(Event::empty().eq("z", 7.0)));
        assert!(matches!(err, Err(Error::DegenerateEvent(_))));
    }

    #[test]
    fn point_conditioning_on_continuous_rejected() {
        let id = ScenarioId::HiringIv;
        let o = oracle_for(&id, 5_000, 2);
        let err = o.measure(&spec(MeasureKind::ZDe, &id).with_event(Event::empty().eq("z", 0.3)));
        assert!(matches!(err, Err(Error::DegenerateEvent(_))));
        // Interval conditioning works.
        let ok = o.measure(
            &spec(MeasureKind::VDe, &id)
                .with_event(Event::empty().interval("w", Some(1.0), None)),
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn hiring_iv_w_specific_direct_effect_zero() {
        // w-DE for the highly educated: direct effect absent entirely.
        let id = ScenarioId::HiringIv;
        let o = oracle_for(&id, 50_000, 4);
        let vde = o
            .measure(
                &spec(MeasureKind::VDe, &id)
                    .with_event(Event::empty().interval("w", Some(1.5), None)),
            )
            .unwrap();
        assert_eq!(vde.value, 0.0);
    }

    #[test]
    fn map_relations_hold_on_builtin_scenarios() {
        for id in [
            ScenarioId::Berkeley {
                alpha: 0.0,
                beta: 0.7,
                lambda: 0.2,
            },
            ScenarioId::NdeFail,
            ScenarioId::HiringIv,
            ScenarioId::NonIdPairM1,
        ] {
            let model = builtin_scenario(&id).unwrap();
            let (x0, x1) = id.transition();
            let report = verify_map_relations(&model, &id.roles(), x0, x1, 50_000, 23).unwrap();
            for rel in &report.relations {
                assert!(
                    rel.residual.abs() < 1e-3,
                    "{}: {} residual {}",
                    id.name(),
                    rel.name,
                    rel.residual
                );
            }
            for adm in &report.admissibility {
                assert_ne!(
                    adm.flag,
                    AdmissibilityFlag::Violation,
                    "{}: {} vs {} = {}",
                    id.name(),
                    adm.criterion,
                    adm.measure,
                    adm.value
                );
            }
        }
    }

    #[test]
    fn nde_fail_flags_power_failure_not_violation() {
        let id = ScenarioId::NdeFail;
        let model = builtin_scenario(&id).unwrap();
        let report = verify_map_relations(&model, &id.roles(), 0.0, 1.0, 200_000, 31).unwrap();
        let nde = report
            .admissibility
            .iter()
            .find(|a| a.measure == "nde")
            .unwrap();
        assert!(nde.structurally_active);
        assert_eq!(nde.flag, AdmissibilityFlag::PowerFailure);
        // x-DE at the same time detects the effect.
        let xde = report
            .admissibility
            .iter()
            .find(|a| a.measure == "x-de")
            .unwrap();
        assert_eq!(xde.flag, AdmissibilityFlag::Consistent);
    }

    #[test]
    fn null_model_all_measures_zero() {
        let id = ScenarioId::Berkeley {
            alpha: 0.0,
            beta: 0.0,
            lambda: 0.0,
        };
        let o = oracle_for(&id, 100_000, 13);
        for kind in [
            MeasureKind::Tv,
            MeasureKind::Te,
            MeasureKind::ExpSe,
            MeasureKind::Nde,
            MeasureKind::Nie,
            MeasureKind::XTe,
            MeasureKind::XDe,
            MeasureKind::XIe,
            MeasureKind::XSe,
            MeasureKind::XDeSym,
            MeasureKind::XIeSym,
        ] {
            let est = o.measure(&spec(kind, &id)).unwrap();
            assert!(
                est.value.abs() <= 3.0 * est.mc_stderr + 1e-12,
                "{}: {} +- {}",
                kind.label(),
                est.value,
                est.mc_stderr
            );
        }
        let (c, cc, cs) = o.covariance_decomposition();
        assert!(c.abs() < 0.005 && cc.abs() < 0.005 && cs.abs() < 0.005);
    }
}
