//! Hypothesis-test-based detection of disparate treatment and disparate
//! impact under a business-necessity set, plus temporal bias tracking.
//!
//! The decision rule is bootstrap-CI exclusion of zero at the configured
//! level; no asymptotic z-tests. Pathways named in the business-necessity set
//! are legally permitted and therefore not tested.

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnType, Dataset};
use crate::diagram::SfmProjection;
use crate::error::{Error, Result};
use crate::estimate::{
    bootstrap_ci, bootstrap_generic, z_sym_point, EstimatorConfig, MeasureEstimate,
};
use crate::oracle::{Event, MeasureKind, MeasureSpec};

/// Pathways whose contribution to disparity is permitted and goes untested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusinessNecessitySet {
    None,
    Z,
    W,
    Zw,
}

impl BusinessNecessitySet {
    pub fn covers_z(&self) -> bool {
        matches!(self, BusinessNecessitySet::Z | BusinessNecessitySet::Zw)
    }
    pub fn covers_w(&self) -> bool {
        matches!(self, BusinessNecessitySet::W | BusinessNecessitySet::Zw)
    }
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "" | "none" | "empty" => BusinessNecessitySet::None,
            "z" => BusinessNecessitySet::Z,
            "w" => BusinessNecessitySet::W,
            "zw" | "z,w" | "wz" => BusinessNecessitySet::Zw,
            other => return Err(Error::Config(format!("unknown BN set `{other}`"))),
        })
    }
    pub fn label(&self) -> &'static str {
        match self {
            BusinessNecessitySet::None => "none",
            BusinessNecessitySet::Z => "Z",
            BusinessNecessitySet::W => "W",
            BusinessNecessitySet::Zw => "Z,W",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Rejected,
    NotRejected,
    SkippedBn,
    SkippedNonId { reason: String },
}

/// One tested (or skipped) hypothesis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisEntry {
    /// e.g. "x-de-sym", "x-ie-sym", "x-se", "z-de-sym".
    pub measure: String,
    /// Conditioning-cell description for z-specific follow-ups.
    pub event: String,
    pub estimate: Option<MeasureEstimate>,
    pub decision: Decision,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CookbookReport {
    pub bn: BusinessNecessitySet,
    pub ci_level: f64,
    pub entries: Vec<HypothesisEntry>,
    pub disparate_treatment_evidence: bool,
    pub disparate_impact_evidence: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CookbookConfig {
    pub estimator: EstimatorConfig,
    /// Minimum rows a discrete Z cell needs for a follow-up test.
    pub z_cell_min: usize,
    /// Bonferroni-correct the z-specific follow-up battery.
    pub bonferroni: bool,
}

impl Default for CookbookConfig {
    fn default() -> Self {
        Self {
            estimator: EstimatorConfig::default(),
            z_cell_min: 200,
            bonferroni: false,
        }
    }
}

fn rejects(est: &MeasureEstimate) -> bool {
    est.ci_lo > 0.0 || est.ci_hi < 0.0
}

/// Distinct cells of a fully discrete Z with at least `min_rows` rows; `None`
/// when some Z column is continuous.
fn discrete_z_cells(ds: &Dataset, z: &[String], min_rows: usize) -> Result<Option<Vec<Event>>> {
    if z.is_empty() {
        return Ok(Some(Vec::new()));
    }
    for col in z {
        if ds.infer_type(col)? == ColumnType::Continuous {
            return Ok(None);
        }
    }
    let cols: Vec<Vec<f64>> = z.iter().map(|c| ds.column(c)).collect::<Result<_>>()?;
    let mut cells: Vec<(Vec<f64>, usize)> = Vec::new();
    for i in 0..ds.n_rows() {
        let key: Vec<f64> = cols.iter().map(|c| c[i]).collect();
        match cells.iter_mut().find(|(k, _)| *k == key) {
            Some((_, count)) => *count += 1,
            None => cells.push((key, 1)),
        }
    }
    cells.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(Some(
        cells
            .into_iter()
            .filter(|(_, count)| *count >= min_rows)
            .map(|(key, _)| {
                let mut e = Event::empty();
                for (name, v) in z.iter().zip(key) {
                    e = e.eq(name, v);
                }
                e
            })
            .collect(),
    ))
}

/// Flip an estimate's sign (and its interval) for x0 -> x1 reporting.
fn negate(mut est: MeasureEstimate) -> MeasureEstimate {
    est.value = -est.value;
    let (lo, hi) = (-est.ci_hi, -est.ci_lo);
    est.ci_lo = lo;
    est.ci_hi = hi;
    est
}

/// Run the disparate treatment / disparate impact decision procedure.
///
/// Tested hypotheses: H0: x-DE^sym(y|x0) = 0 always; H0: x-IE^sym(y|x0) = 0
/// unless W is business necessity; H0: x-SE = 0 unless Z is. When a
/// population-level direct (indirect) test is not rejected, z-specific
/// follow-ups run per sufficiently populated discrete Z cell.
pub fn run_cookbook(
    ds: &Dataset,
    sfm: &SfmProjection,
    bn: BusinessNecessitySet,
    cfg: &CookbookConfig,
) -> Result<CookbookReport> {
    let (x0, x1) = (0.0, 1.0);
    let est_cfg = &cfg.estimator;
    let mut entries = Vec::new();
    let mut notes = Vec::new();

    let alpha = 1.0 - est_cfg.ci_level;
    let cells = discrete_z_cells(ds, &sfm.roles.z, cfg.z_cell_min)?;
    if cells.is_none() {
        notes.push(
            "continuous Z: z-specific follow-ups skipped (supply interval cells explicitly)"
                .into(),
        );
    }
    let followup_cfg = |n_tests: usize| -> EstimatorConfig {
        let mut c = est_cfg.clone();
        if cfg.bonferroni && n_tests > 1 {
            c.ci_level = 1.0 - alpha / n_tests as f64;
        }
        c
    };

    let test = |kind: MeasureKind,
                name: &str,
                flip_report: bool,
                entries: &mut Vec<HypothesisEntry>|
     -> Result<bool> {
        // The spurious hypothesis is about x-SE_{x1,x0}; its estimate is
        // reported along x0 -> x1 (the orientation with tv = de + ie + se).
        let spec = if flip_report {
            MeasureSpec::new(kind, x1, x0)
        } else {
            MeasureSpec::new(kind, x0, x1)
        };
        match bootstrap_ci(ds, sfm, &spec, est_cfg) {
            Ok(est) => {
                let est = if flip_report { negate(est) } else { est };
                let rejected = rejects(&est);
                entries.push(HypothesisEntry {
                    measure: name.into(),
                    event: "(all)".into(),
                    estimate: Some(est),
                    decision: if rejected {
                        Decision::Rejected
                    } else {
                        Decision::NotRejected
                    },
                });
                Ok(rejected)
            }
            Err(Error::NotIdentifiable(reason)) => {
                entries.push(HypothesisEntry {
                    measure: name.into(),
                    event: "(all)".into(),
                    estimate: None,
                    decision: Decision::SkippedNonId { reason },
                });
                Ok(false)
            }
            Err(e) => Err(e),
        }
    };

    let z_followups = |direct: bool,
                           name: &str,
                           any: &mut bool,
                           entries: &mut Vec<HypothesisEntry>|
     -> Result<()> {
        let Some(cells) = &cells else { return Ok(()) };
        if cells.is_empty() {
            return Ok(());
        }
        let sub_cfg = followup_cfg(cells.len());
        for cell in cells {
            let value = match z_sym_point(ds, sfm, direct, x0, x1, cell, &sub_cfg) {
                Ok(v) => v,
                Err(Error::NotIdentifiable(reason)) => {
                    entries.push(HypothesisEntry {
                        measure: name.into(),
                        event: cell.describe(),
                        estimate: None,
                        decision: Decision::SkippedNonId { reason },
                    });
                    continue;
                }
                Err(e) => return Err(e),
            };
            let est = bootstrap_generic(ds, &sub_cfg, value, |resampled, c| {
                z_sym_point(resampled, sfm, direct, x0, x1, cell, c)
            })?;
            let rejected = rejects(&est);
            *any |= rejected;
            entries.push(HypothesisEntry {
                measure: name.into(),
                event: cell.describe(),
                estimate: Some(est),
                decision: if rejected {
                    Decision::Rejected
                } else {
                    Decision::NotRejected
                },
            });
        }
        Ok(())
    };

    // Disparate treatment: direct effect, then z-specific follow-ups.
    let de_rejected = test(MeasureKind::XDeSym, "x-de-sym", false, &mut entries)?;
    let mut any_zde = false;
    if !de_rejected {
        z_followups(true, "z-de-sym", &mut any_zde, &mut entries)?;
    }

    // Disparate impact: indirect effect unless W is business necessity.
    let mut ie_rejected = false;
    let mut any_zie = false;
    if bn.covers_w() {
        entries.push(HypothesisEntry {
            measure: "x-ie-sym".into(),
            event: "(all)".into(),
            estimate: None,
            decision: Decision::SkippedBn,
        });
    } else {
        ie_rejected = test(MeasureKind::XIeSym, "x-ie-sym", false, &mut entries)?;
        if !ie_rejected {
            z_followups(false, "z-ie-sym", &mut any_zie, &mut entries)?;
        }
    }

    // Disparate impact: spurious effect unless Z is business necessity.
    let mut se_rejected = false;
    if bn.covers_z() {
        entries.push(HypothesisEntry {
            measure: "x-se".into(),
            event: "(all)".into(),
            estimate: None,
            decision: Decision::SkippedBn,
        });
    } else {
        se_rejected = test(MeasureKind::XSe, "x-se", true, &mut entries)?;
    }

    if entries
        .iter()
        .any(|e| e.measure.starts_with("z-") && e.estimate.is_some())
    {
        notes.push(format!(
            "z-specific follow-ups test one hypothesis per cell; interpret jointly{}",
            if cfg.bonferroni {
                " (Bonferroni-corrected)"
            } else {
                " (no multiplicity correction applied)"
            }
        ));
    }

    Ok(CookbookReport {
        bn,
        ci_level: est_cfg.ci_level,
        entries,
        disparate_treatment_evidence: de_rejected || any_zde,
        disparate_impact_evidence: ie_rejected || se_rejected || any_zie,
        notes,
    })
}

/// Human-readable summary mirroring the decision procedure's branch wording.
pub fn render_text(report: &CookbookReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("Business necessity set: {}\n", report.bn.label()));
    for e in &report.entries {
        let line = match (&e.decision, &e.estimate) {
            (Decision::Rejected, Some(est)) => format!(
                "{} {} = {:.4} [{:.4}, {:.4}]  H0 rejected",
                e.measure, e.event, est.value, est.ci_lo, est.ci_hi
            ),
            (Decision::NotRejected, Some(est)) => format!(
                "{} {} = {:.4} [{:.4}, {:.4}]  H0 not rejected",
                e.measure, e.event, est.value, est.ci_lo, est.ci_hi
            ),
            (Decision::SkippedBn, _) => format!("{} skipped: business necessity", e.measure),
            (Decision::SkippedNonId { reason }, _) => {
                format!("{} skipped: {reason}", e.measure)
            }
            _ => format!("{} (no estimate)", e.measure),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str(if report.disparate_treatment_evidence {
        "=> evidence of disparate treatment\n"
    } else {
        "=> no evidence of disparate treatment\n"
    });
    out.push_str(if report.disparate_impact_evidence {
        "=> evidence of disparate impact\n"
    } else {
        "=> no evidence of disparate impact\n"
    });
    for n in &report.notes {
        out.push_str(&format!("note: {n}\n"));
    }
    out
}

/// One time point of a tracked series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackPoint {
    pub index: usize,
    pub de: MeasureEstimate,
    pub ie: MeasureEstimate,
    pub se: MeasureEstimate,
}

/// Estimate (x-DE^sym, x-IE^sym, x-SE) with intervals for each dataset of an
/// ordered series. All datasets must share one schema.
pub fn track_over_time(
    datasets: &[Dataset],
    sfm: &SfmProjection,
    cfg: &CookbookConfig,
) -> Result<Vec<TrackPoint>> {
    if datasets.len() < 2 {
        return Err(Error::Config("tracking needs at least 2 datasets".into()));
    }
    let schema = datasets[0].columns();
    for (i, ds) in datasets.iter().enumerate() {
        if ds.columns() != schema {
            return Err(Error::Data(format!(
                "dataset {i} schema {:?} differs from {:?}",
                ds.columns(),
                schema
            )));
        }
    }
    let (x0, x1) = (0.0, 1.0);
    let mut out = Vec::new();
    for (index, ds) in datasets.iter().enumerate() {
        let de = bootstrap_ci(
            ds,
            sfm,
            &MeasureSpec::new(MeasureKind::XDeSym, x0, x1),
            &cfg.estimator,
        )?;
        let ie = bootstrap_ci(
            ds,
            sfm,
            &MeasureSpec::new(MeasureKind::XIeSym, x0, x1),
            &cfg.estimator,
        )?;
        // x-SE_{x1,x0}, reported along x0 -> x1.
        let se = negate(bootstrap_ci(
            ds,
            sfm,
            &MeasureSpec::new(MeasureKind::XSe, x1, x0),
            &cfg.estimator,
        )?);
        out.push(TrackPoint { index, de, ie, se });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::SfmProjection;
    use crate::estimate::Method;
    use crate::scm::{builtin_scenario, sample_observational, ScenarioId};

    fn quick_cfg(seed: u64) -> CookbookConfig {
        CookbookConfig {
            estimator: EstimatorConfig {
                method: Method::PluginDiscrete,
                bootstrap: 60,
                seed,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn nde_fail_detects_disparate_treatment() {
        let id = ScenarioId::NdeFail;
        let model = builtin_scenario(&id).unwrap();
        let ds = sample_observational(&model, 30_000, 1).unwrap();
        let sfm = SfmProjection::plain(id.roles());
        let report = run_cookbook(&ds, &sfm, BusinessNecessitySet::None, &quick_cfg(1)).unwrap();
        assert!(report.disparate_treatment_evidence);
        let de = report
            .entries
            .iter()
            .find(|e| e.measure == "x-de-sym")
            .unwrap();
        let est = de.estimate.as_ref().unwrap();
        assert!((est.value - 0.035).abs() < 0.01, "de = {}", est.value);
        assert_eq!(de.decision, Decision::Rejected);
    }

    #[test]
    fn bn_monotonicity_skips_only() {
        let id = ScenarioId::NdeFail;
        let model = builtin_scenario(&id).unwrap();
        let ds = sample_observational(&model, 12_000, 2).unwrap();
        let sfm = SfmProjection::plain(id.roles());
        let none = run_cookbook(&ds, &sfm, BusinessNecessitySet::None, &quick_cfg(2)).unwrap();
        let zw = run_cookbook(&ds, &sfm, BusinessNecessitySet::Zw, &quick_cfg(2)).unwrap();
        let tested = |r: &CookbookReport| {
            r.entries
                .iter()
                .filter(|e| !matches!(e.decision, Decision::SkippedBn))
                .map(|e| (e.measure.clone(), e.event.clone()))
                .collect::<Vec<_>>()
        };
        // Enlarging BN never adds hypotheses.
        let t_none = tested(&none);
        for t in tested(&zw) {
            assert!(t_none.contains(&t), "{t:?} appeared only under larger BN");
        }
        assert!(zw
            .entries
            .iter()
            .any(|e| matches!(e.decision, Decision::SkippedBn)));
    }

    #[test]
    fn non_identifiable_entry_reported() {
        let id = ScenarioId::NonIdPairM1;
        let model = builtin_scenario(&id).unwrap();
        let ds = sample_observational(&model, 5_000, 3).unwrap();
        let sfm =
            crate::diagram::project_to_sfm(&crate::diagram::diagram_of(&model), &id.roles())
                .unwrap();
        let report = run_cookbook(&ds, &sfm, BusinessNecessitySet::None, &quick_cfg(3)).unwrap();
        let de = report
            .entries
            .iter()
            .find(|e| e.measure == "x-de-sym")
            .unwrap();
        assert!(matches!(de.decision, Decision::SkippedNonId { .. }));
    }

    #[test]
    fn flat_series_on_repeated_dataset() {
        let id = ScenarioId::Berkeley {
            alpha: 0.1,
            beta: 0.2,
            lambda: 0.2,
        };
        let model = builtin_scenario(&id).unwrap();
        let ds = sample_observational(&model, 4_000, 4).unwrap();
        let sfm = SfmProjection::plain(id.roles());
        let series = track_over_time(&[ds.clone(), ds.clone(), ds], &sfm, &quick_cfg(4)).unwrap();
        assert_eq!(series.len(), 3);
        assert_eq!(series[0].de.value, series[1].de.value);
        assert_eq!(series[1].ie.value, series[2].ie.value);
        assert_eq!(series[0].se.value, series[2].se.value);
    }

    #[test]
    fn schema_mismatch_rejected() {
        let a = Dataset::new(vec!["x".into(), "y".into()], vec![vec![0.0, 1.0]]).unwrap();
        let b = Dataset::new(vec!["x".into(), "q".into()], vec![vec![0.0, 1.0]]).unwrap();
        let sfm = SfmProjection::plain(crate::diagram::SfmRoles::new("x", "y", &[], &[]));
        assert!(track_over_time(&[a, b], &sfm, &quick_cfg(5)).is_err());
    }

    #[test]
    fn text_rendering_names_branches() {
        let id = ScenarioId::NdeFail;
        let model = builtin_scenario(&id).unwrap();
        let ds = sample_observational(&model, 12_000, 6).unwrap();
        let sfm = SfmProjection::plain(id.roles());
        let report = run_cookbook(&ds, &sfm, BusinessNecessitySet::Z, &quick_cfg(6)).unwrap();
        let text = render_text(&report);
        assert!(text.contains("disparate treatment"));
        assert!(text.contains("disparate impact"));
        assert!(text.contains("business necessity"));
    }
}
