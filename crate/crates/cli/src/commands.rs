use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use causalfair::config::{parse_roles_config, RolesConfig};
use causalfair::cookbook::{
    render_text, run_cookbook, track_over_time, BusinessNecessitySet, CookbookConfig,
};
use causalfair::diagram::SfmProjection;
use causalfair::error::{Error, Result};
use causalfair::estimate::{bootstrap_ci, EstimatorConfig, Method};
use causalfair::fairpred::{
    audit_predictor, causal_if, estimate_constraint_vectors, fpt_experiment, inproc_fair_fit,
    tv_only_fit, CausalIfConfig, EffectConstraint,
};
use causalfair::oracle::{
    verify_map_relations, Condition, DecompositionLevel, Event, MeasureKind, MeasureSpec, Oracle,
    Predicate,
};
use causalfair::report::Report;
use causalfair::scm::{builtin_scenario, model_to_text, sample_observational, ScenarioId};
use causalfair::Dataset;

#[derive(Parser)]
#[command(
    name = "causalfair",
    about = "Causal fairness analysis: simulate, decompose, estimate, audit",
    version
)]
pub struct Cli {
    /// Cap the number of worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an observational dataset from a built-in scenario to CSV.
    Simulate(SimulateArgs),
    /// Evaluate a measure exactly (Monte Carlo) on a scenario.
    Oracle(OracleArgs),
    /// Ground-truth TV decomposition on a scenario.
    Decompose(DecomposeArgs),
    /// Verify cross-measure identities on a scenario.
    Relations(RelationsArgs),
    /// Print a scenario's mechanisms in the text format.
    Show(ShowArgs),
    /// Estimate a measure from a CSV dataset with bootstrap intervals.
    Estimate(EstimateArgs),
    /// Run the disparate treatment / disparate impact decision procedure.
    Cookbook(CookbookArgs),
    /// Fit a linear predictor with TV-only or causal constraints.
    Fairfit(FairfitArgs),
    /// Sequential parent-conditional quantile transport of a dataset.
    CausalIf(CausalIfArgs),
    /// Audit a prediction column: x-specific decomposition of Y-hat.
    Audit(AuditArgs),
    /// Random linear model compliance experiment.
    Fpt(FptArgs),
    /// Track (x-DE-sym, x-IE-sym, x-SE) over an ordered dataset series.
    Track(TrackArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// One of: berkeley, nde-fail, startup-salaries-true, startup-salaries-alt,
    /// hiring-iii-a, hiring-iii-b, hiring-iv, ot-fails, non-id-m1, non-id-m2,
    /// college-temporal, random-linear-sfm.
    scenario: String,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Outcome-switch half-width for ot-fails.
    #[arg(long)]
    eps: Option<f64>,
    /// Time step for college-temporal.
    #[arg(long)]
    t: Option<u32>,
    #[arg(long)]
    kappa0: Option<f64>,
    #[arg(long)]
    lambda0: Option<f64>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    beta0: Option<f64>,
    /// Confounder count for random-linear-sfm.
    #[arg(long)]
    nz: Option<usize>,
    /// Mediator count for random-linear-sfm.
    #[arg(long)]
    nw: Option<usize>,
    /// Coefficient seed for random-linear-sfm.
    #[arg(long)]
    scm_seed: Option<u64>,
}

impl ScenarioArgs {
    fn id(&self) -> Result<ScenarioId> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Config(format!("scenario requires --{name}")))
        };
        Ok(match self.scenario.as_str() {
            "berkeley" => ScenarioId::Berkeley {
                alpha: need(self.alpha, "alpha")?,
                beta: need(self.beta, "beta")?,
                lambda: need(self.lambda, "lambda")?,
            },
            "nde-fail" => ScenarioId::NdeFail,
            "startup-salaries-true" => ScenarioId::StartupSalariesTrue,
            "startup-salaries-alt" => ScenarioId::StartupSalariesAlt,
            "hiring-iii-a" => ScenarioId::HiringIiiA,
            "hiring-iii-b" => ScenarioId::HiringIiiB,
            "hiring-iv" => ScenarioId::HiringIv,
            "ot-fails" => ScenarioId::OtFails {
                eps: self.eps.unwrap_or(1.0),
            },
            "non-id-m1" => ScenarioId::NonIdPairM1,
            "non-id-m2" => ScenarioId::NonIdPairM2,
            "college-temporal" => ScenarioId::CollegeAdmissionsTemporal {
                t: self.t.unwrap_or(0),
                kappa0: self.kappa0.unwrap_or(0.2),
                lambda0: self.lambda0.unwrap_or(0.2),
                alpha0: self.alpha0.unwrap_or(0.1),
                beta0: self.beta0.unwrap_or(0.6),
            },
            "random-linear-sfm" => ScenarioId::RandomLinearSfm {
                n_z: self.nz.unwrap_or(5),
                n_w: self.nw.unwrap_or(5),
                seed: self.scm_seed.unwrap_or(0),
            },
            other => {
                return Err(Error::Config(format!("unknown scenario `{other}`")))
            }
        })
    }
}

#[derive(Args)]
struct EstimatorArgs {
    /// plugin-discrete | plugin-regression | dr | dml
    #[arg(long, default_value = "dml")]
    method: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0.01)]
    clip: f64,
    /// Bootstrap resamples.
    #[arg(short = 'B', long, default_value_t = 500)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Add pairwise interaction features to nuisance models.
    #[arg(long, default_value_t = false)]
    interactions: bool,
}

impl EstimatorArgs {
    fn config(&self) -> Result<EstimatorConfig> {
        let cfg = EstimatorConfig {
            method: Method::parse(&self.method)?,
            folds: self.folds,
            clip: self.clip,
            bootstrap: self.bootstrap,
            ci_level: self.ci_level,
            seed: self.seed,
            interactions: self.interactions,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(short, long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path (stdout when omitted).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Measure name, e.g. tv, te, nde, x-de, z-de, ps, joint-ctf.
    #[arg(long)]
    measure: String,
    /// Conditioning event, e.g. "z=0" or "w>=1.5,w<2".
    #[arg(long)]
    event: Option<String>,
    #[arg(short, long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// general | x-specific | z-specific
    #[arg(long, default_value = "x-specific")]
    level: String,
    #[arg(short, long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RelationsArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(short, long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ShowArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    roles: PathBuf,
    #[arg(long)]
    measure: String,
    /// Z-cell event for z-specific measures, e.g. "z=1".
    #[arg(long)]
    event: Option<String>,
    /// Baseline and comparison attribute values.
    #[arg(long, default_value_t = 0.0)]
    x0: f64,
    #[arg(long, default_value_t = 1.0)]
    x1: f64,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CookbookArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    roles: PathBuf,
    /// Business-necessity set: none | z | w | zw
    #[arg(long, default_value = "none")]
    bn: String,
    #[arg(long, default_value_t = false)]
    bonferroni: bool,
    /// Minimum rows for a z-specific follow-up cell.
    #[arg(long, default_value_t = 200)]
    z_cell_min: usize,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Also print the human-readable summary to stderr.
    #[arg(long, default_value_t = false)]
    text: bool,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FitKind {
    /// Least squares projected onto TV = 0.
    TvOnly,
    /// Least squares under the requested causal constraints.
    Causal,
    /// Plain least squares.
    Ols,
}

#[derive(Args)]
struct FairfitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    roles: PathBuf,
    #[arg(long, value_enum, default_value_t = FitKind::Causal)]
    kind: FitKind,
    /// Comma-separated subset of de,ie,se (for --kind causal).
    #[arg(long, default_value = "de,ie,se")]
    effects: String,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Audit the fitted predictor and include the decomposition.
    #[arg(long, default_value_t = false)]
    audit: bool,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CausalIfArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    roles: PathBuf,
    #[arg(long, default_value = "none")]
    bn: String,
    #[arg(long, default_value_t = 10)]
    parent_bins: usize,
    #[arg(long, default_value_t = false)]
    jitter_discrete: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Transformed dataset CSV path.
    #[arg(short, long)]
    out: PathBuf,
    /// Optional JSON dump of the transport maps.
    #[arg(long)]
    map_out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    roles: PathBuf,
    /// Column holding the predictions to audit (defaults to the Y role).
    #[arg(long)]
    prediction_col: Option<String>,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FptArgs {
    #[arg(long, default_value_t = 5)]
    nz: usize,
    #[arg(long, default_value_t = 5)]
    nw: usize,
    #[arg(long, default_value_t = 500)]
    scms: usize,
    #[arg(long, default_value_t = 100_000)]
    rows: usize,
    /// Comma-separated epsilon grid.
    #[arg(long, default_value = "0.005,0.01,0.02,0.05,0.1,0.2,0.5")]
    eps: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit the curve as CSV (eps, compliance, direct, indirect, spurious).
    #[arg(long, default_value_t = false)]
    csv: bool,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrackArgs {
    /// Ordered dataset paths.
    #[arg(long, value_delimiter = ',', required = true)]
    data: Vec<PathBuf>,
    #[arg(long)]
    roles: PathBuf,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Emit plot-ready CSV (t, value, lo, hi per effect) instead of JSON.
    #[arg(long, default_value_t = false)]
    csv: bool,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn parse_event(text: &str) -> Result<Event> {
    let mut event = Event::empty();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let pred = if let Some((var, v)) = part.split_once(">=") {
            Predicate {
                var: var.trim().into(),
                cond: Condition::Interval {
                    lo: Some(parse_num(v)?),
                    hi: None,
                },
            }
        } else if let Some((var, v)) = part.split_once('<') {
            Predicate {
                var: var.trim().into(),
                cond: Condition::Interval {
                    lo: None,
                    hi: Some(parse_num(v)?),
                },
            }
        } else if let Some((var, v)) = part.split_once('=') {
            Predicate {
                var: var.trim().into(),
                cond: Condition::Eq(parse_num(v)?),
            }
        } else {
            return Err(Error::Config(format!(
                "cannot parse predicate `{part}` (use var=v, var>=v, var<v)"
            )));
        };
        event.predicates.push(pred);
    }
    Ok(event)
}

fn parse_num(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{s}` is not a number")))
}

fn load_roles(path: &Path) -> Result<RolesConfig> {
    parse_roles_config(&fs::read_to_string(path)?)
}

fn emit<T: Serialize>(out: Option<&PathBuf>, report: &Report<T>) -> Result<()> {
    let json = report.to_json()?;
    match out {
        Some(path) => fs::write(path, json + "\n")?,
        None => println!("{json}"),
    }
    Ok(())
}

fn emit_text(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        // Results are thread-count independent; ignore double initialization.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    match cli.command {
        Command::Simulate(a) => {
            let model = builtin_scenario(&a.scenario.id()?)?;
            let ds = sample_observational(&model, a.n, a.seed)?;
            match &a.out {
                Some(path) => ds.to_csv_path(path)?,
                None => {
                    let mut buf = Vec::new();
                    ds.write_csv(&mut buf)?;
                    print!("{}", String::from_utf8_lossy(&buf));
                }
            }
            Ok(())
        }
        Command::Oracle(a) => {
            let id = a.scenario.id()?;
            let model = builtin_scenario(&id)?;
            let (x0, x1) = id.transition();
            let mut spec = MeasureSpec::new(MeasureKind::parse(&a.measure)?, x0, x1);
            if let Some(ev) = &a.event {
                spec = spec.with_event(parse_event(ev)?);
            }
            let oracle = Oracle::new(&model, &id.roles(), x0, x1, a.n, a.seed)?;
            let est = oracle.measure(&spec)?;
            #[derive(Serialize)]
            struct Payload {
                scenario: String,
                measure: String,
                event: String,
                value: f64,
                mc_stderr: f64,
                n_effective: usize,
            }
            emit(
                a.out.as_ref(),
                &Report::new(
                    "oracle",
                    Some(a.seed),
                    Payload {
                        scenario: id.name().into(),
                        measure: spec.kind.label().into(),
                        event: spec.event.describe(),
                        value: est.value,
                        mc_stderr: est.mc_stderr,
                        n_effective: est.n_effective,
                    },
                ),
            )
        }
        Command::Decompose(a) => {
            let id = a.scenario.id()?;
            let model = builtin_scenario(&id)?;
            let (x0, x1) = id.transition();
            let level = match a.level.as_str() {
                "general" => DecompositionLevel::General,
                "x-specific" => DecompositionLevel::XSpecific,
                "z-specific" => DecompositionLevel::ZSpecific,
                other => {
                    return Err(Error::Config(format!("unknown level `{other}`")))
                }
            };
            let oracle = Oracle::new(&model, &id.roles(), x0, x1, a.n, a.seed)?;
            let rep = oracle.decompose_tv(level)?;
            emit(a.out.as_ref(), &Report::new("decompose", Some(a.seed), rep))
        }
        Command::Relations(a) => {
            let id = a.scenario.id()?;
            let model = builtin_scenario(&id)?;
            let (x0, x1) = id.transition();
            let rep = verify_map_relations(&model, &id.roles(), x0, x1, a.n, a.seed)?;
            emit(a.out.as_ref(), &Report::new("relations", Some(a.seed), rep))
        }
        Command::Show(a) => {
            let model = builtin_scenario(&a.scenario.id()?)?;
            emit_text(a.out.as_ref(), &model_to_text(&model))
        }
        Command::Estimate(a) => {
            let ds = Dataset::from_csv_path(&a.data)?;
            let roles = load_roles(&a.roles)?;
            let cfg = a.estimator.config()?;
            let mut spec = MeasureSpec::new(MeasureKind::parse(&a.measure)?, a.x0, a.x1);
            if let Some(ev) = &a.event {
                spec = spec.with_event(parse_event(ev)?);
            }
            let est = bootstrap_ci(&ds, &roles.sfm, &spec, &cfg)?;
            #[derive(Serialize)]
            struct Payload {
                measure: String,
                event: String,
                estimate: causalfair::estimate::MeasureEstimate,
            }
            emit(
                a.out.as_ref(),
                &Report::new(
                    "estimate",
                    Some(cfg.seed),
                    Payload {
                        measure: spec.kind.label().into(),
                        event: spec.event.describe(),
                        estimate: est,
                    },
                ),
            )
        }
        Command::Cookbook(a) => {
            let ds = Dataset::from_csv_path(&a.data)?;
            let roles = load_roles(&a.roles)?;
            let cfg = CookbookConfig {
                estimator: a.estimator.config()?,
                z_cell_min: a.z_cell_min,
                bonferroni: a.bonferroni,
            };
            let bn = BusinessNecessitySet::parse(&a.bn)?;
            let report = run_cookbook(&ds, &roles.sfm, bn, &cfg)?;
            if a.text {
                eprint!("{}", render_text(&report));
            }
            let seed = cfg.estimator.seed;
            emit(a.out.as_ref(), &Report::new("cookbook", Some(seed), report))
        }
        Command::Fairfit(a) => {
            let ds = Dataset::from_csv_path(&a.data)?;
            let roles = load_roles(&a.roles)?;
            let cfg = a.estimator.config()?;
            let predictor = match a.kind {
                FitKind::TvOnly => tv_only_fit(&ds, &roles.sfm, &cfg)?,
                FitKind::Ols => inproc_fair_fit(&ds, &roles.sfm, &[], &cfg)?,
                FitKind::Causal => {
                    let mut effects = Vec::new();
                    for e in a.effects.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                        effects.push(match e.to_ascii_lowercase().as_str() {
                            "de" => EffectConstraint::Direct,
                            "ie" => EffectConstraint::Indirect,
                            "se" => EffectConstraint::Spurious,
                            other => {
                                return Err(Error::Config(format!(
                                    "unknown effect `{other}` (use de, ie, se)"
                                )))
                            }
                        });
                    }
                    inproc_fair_fit(&ds, &roles.sfm, &effects, &cfg)?
                }
            };
            #[derive(Serialize)]
            struct Payload {
                predictor: causalfair::fairpred::LinearPredictor,
                constraint_vectors: causalfair::fairpred::ConstraintVectors,
                audit: Option<causalfair::oracle::DecompositionReport>,
            }
            let cv = estimate_constraint_vectors(&ds, &roles.sfm, &cfg)?;
            let audit = if a.audit {
                let preds = predictor.predict(&ds)?;
                Some(audit_predictor(&ds, &preds, &roles.sfm, &cfg)?)
            } else {
                None
            };
            emit(
                a.out.as_ref(),
                &Report::new(
                    "fairfit",
                    Some(cfg.seed),
                    Payload {
                        predictor,
                        constraint_vectors: cv,
                        audit,
                    },
                ),
            )
        }
        Command::CausalIf(a) => {
            let ds = Dataset::from_csv_path(&a.data)?;
            let roles = load_roles(&a.roles)?;
            let bn = BusinessNecessitySet::parse(&a.bn)?;
            let cfg = CausalIfConfig {
                parent_bins: a.parent_bins,
                jitter_discrete: a.jitter_discrete,
                seed: a.seed,
            };
            let (transformed, map) = causal_if(&ds, &roles.sfm, bn, &cfg)?;
            transformed.to_csv_path(&a.out)?;
            if let Some(map_path) = &a.map_out {
                let report = Report::new("causal-if", Some(a.seed), map);
                fs::write(map_path, report.to_json()? + "\n")?;
            }
            Ok(())
        }
        Command::Audit(a) => {
            let ds = Dataset::from_csv_path(&a.data)?;
            let roles = load_roles(&a.roles)?;
            let cfg = a.estimator.config()?;
            let col = a
                .prediction_col
                .clone()
                .unwrap_or_else(|| roles.sfm.roles.y.clone());
            let preds = ds.column(&col)?;
            let rep = audit_predictor(&ds, &preds, &roles.sfm, &cfg)?;
            emit(a.out.as_ref(), &Report::new("audit", Some(cfg.seed), rep))
        }
        Command::Fpt(a) => {
            let mut eps = Vec::new();
            for part in a.eps.split(',') {
                eps.push(parse_num(part)?);
            }
            let curve = fpt_experiment(a.nz, a.nw, a.scms, a.rows, &eps, a.seed)?;
            if a.csv {
                let mut text = String::from("eps,compliance,direct,indirect,spurious\n");
                for (i, e) in curve.epsilons.iter().enumerate() {
                    text.push_str(&format!(
                        "{e},{},{},{},{}\n",
                        curve.compliance[i], curve.direct[i], curve.indirect[i],
                        curve.spurious[i]
                    ));
                }
                emit_text(a.out.as_ref(), &text)
            } else {
                emit(a.out.as_ref(), &Report::new("fpt", Some(a.seed), curve))
            }
        }
        Command::Track(a) => {
            let mut datasets = Vec::new();
            for p in &a.data {
                datasets.push(Dataset::from_csv_path(p)?);
            }
            let roles = load_roles(&a.roles)?;
            let cfg = CookbookConfig {
                estimator: a.estimator.config()?,
                ..Default::default()
            };
            let series = track_over_time(&datasets, &roles.sfm, &cfg)?;
            if a.csv {
                let mut text = String::from(
                    "t,de,de_lo,de_hi,ie,ie_lo,ie_hi,se,se_lo,se_hi\n",
                );
                for p in &series {
                    text.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{},{}\n",
                        p.index,
                        p.de.value,
                        p.de.ci_lo,
                        p.de.ci_hi,
                        p.ie.value,
                        p.ie.ci_lo,
                        p.ie.ci_hi,
                        p.se.value,
                        p.se.ci_lo,
                        p.se.ci_hi
                    ));
                }
                emit_text(a.out.as_ref(), &text)
            } else {
                let seed = cfg.estimator.seed;
                emit(a.out.as_ref(), &Report::new("track", Some(seed), series))
            }
        }
    }
}
