use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagram::SfmRoles;
use crate::error::{Error, Result};
use crate::scm::expr::Expr;
use crate::scm::model::{ExogenousSpec, Mechanism, StructuralModel};

/// Built-in scenario catalogue.
///
/// Every scenario uses the transition x0 = 0, x1 = 1 on its binary attribute
/// `x`. Zero coefficients are pruned from parent lists, so the extracted
/// diagram reflects which variables a mechanism actually listens to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScenarioId {
    /// Admission depends on gender directly (alpha), on department (beta),
    /// and department choice on gender (lambda).
    Berkeley { alpha: f64, beta: f64, lambda: f64 },
    /// Hiring with an age confounder sharing exogenous noise with gender; the
    /// direct effect flips sign between age groups and cancels on average.
    NdeFail,
    /// Salary = X + W + noise with W = -X + noise: unit-level total effect
    /// is identically zero.
    StartupSalariesTrue,
    /// Observationally identical to `StartupSalariesTrue` but with
    /// sign-flipped mediator noise; unit-level effects differ.
    StartupSalariesAlt,
    /// Direct discrimination masked by attribute-outcome confounding.
    HiringIiiA,
    /// No direct discrimination; confounder-outcome confounding instead.
    HiringIiiB,
    /// TV = 0 with cancelling indirect (+14%) and spurious (-14%) effects.
    HiringIv,
    /// Outcome mechanism switches on the attribute; joint optimal transport
    /// of (W, Y) leaves a nonzero indirect effect.
    OtFails { eps: f64 },
    /// First member of an observationally indistinguishable pair with
    /// mediator-outcome confounding; NIE = 0.28.
    NonIdPairM1,
    /// Second member; exactly the same observational distribution, NIE = 0.04.
    NonIdPairM2,
    /// College admissions at time step `t` of the coefficient dynamics
    /// kappa' = 0.9 kappa, lambda' = lambda (1 - beta),
    /// beta' = beta (1 - lambda) f, alpha' = 0.8 alpha.
    CollegeAdmissionsTemporal {
        t: u32,
        kappa0: f64,
        lambda0: f64,
        alpha0: f64,
        beta0: f64,
    },
    /// Linear-Gaussian standard fairness model with all structural
    /// coefficients drawn uniformly from [-1, 1].
    RandomLinearSfm { n_z: usize, n_w: usize, seed: u64 },
}

impl ScenarioId {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioId::Berkeley { .. } => "berkeley",
            ScenarioId::NdeFail => "nde-fail",
            ScenarioId::StartupSalariesTrue => "startup-salaries-true",
            ScenarioId::StartupSalariesAlt => "startup-salaries-alt",
            ScenarioId::HiringIiiA => "hiring-iii-a",
            ScenarioId::HiringIiiB => "hiring-iii-b",
            ScenarioId::HiringIv => "hiring-iv",
            ScenarioId::OtFails { .. } => "ot-fails",
            ScenarioId::NonIdPairM1 => "non-id-m1",
            ScenarioId::NonIdPairM2 => "non-id-m2",
            ScenarioId::CollegeAdmissionsTemporal { .. } => "college-temporal",
            ScenarioId::RandomLinearSfm { .. } => "random-linear-sfm",
        }
    }

    /// Canonical attribute transition (x0, x1).
    pub fn transition(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    /// Role assignment used by the worked analyses of each scenario.
    pub fn roles(&self) -> SfmRoles {
        match self {
            ScenarioId::Berkeley { .. } => SfmRoles::new("x", "y", &[], &["d"]),
            ScenarioId::NdeFail => SfmRoles::new("x", "y", &["z"], &["w"]),
            ScenarioId::StartupSalariesTrue | ScenarioId::StartupSalariesAlt => {
                SfmRoles::new("x", "y", &[], &["w"])
            }
            ScenarioId::HiringIiiA | ScenarioId::HiringIiiB => {
                SfmRoles::new("x", "y", &["z"], &[])
            }
            ScenarioId::HiringIv => SfmRoles::new("x", "y", &["z"], &["w"]),
            ScenarioId::OtFails { .. } => SfmRoles::new("x", "y", &[], &["w"]),
            ScenarioId::NonIdPairM1 | ScenarioId::NonIdPairM2 => {
                SfmRoles::new("x", "y", &[], &["w"])
            }
            ScenarioId::CollegeAdmissionsTemporal { .. } => {
                SfmRoles::new("x", "y", &["z"], &["w"])
            }
            ScenarioId::RandomLinearSfm { n_z, n_w, .. } => {
                let z: Vec<String> = (0..*n_z).map(|i| format!("z{i}")).collect();
                let w: Vec<String> = (0..*n_w).map(|i| format!("w{i}")).collect();
                SfmRoles {
                    x: "x".into(),
                    y: "y".into(),
                    z,
                    w,
                }
            }
        }
    }
}

/// Materialize a built-in scenario as a structural model.
pub fn builtin_scenario(id: &ScenarioId) -> Result<StructuralModel> {
    match id {
        ScenarioId::Berkeley {
            alpha,
            beta,
            lambda,
        } => berkeley(*alpha, *beta, *lambda),
        ScenarioId::NdeFail => nde_fail(),
        ScenarioId::StartupSalariesTrue => startup_salaries(false),
        ScenarioId::StartupSalariesAlt => startup_salaries(true),
        ScenarioId::HiringIiiA => hiring_iii_a(),
        ScenarioId::HiringIiiB => hiring_iii_b(),
        ScenarioId::HiringIv => hiring_iv(),
        ScenarioId::OtFails { eps } => ot_fails(*eps),
        ScenarioId::NonIdPairM1 => non_id_m1(),
        ScenarioId::NonIdPairM2 => non_id_m2(),
        ScenarioId::CollegeAdmissionsTemporal {
            t,
            kappa0,
            lambda0,
            alpha0,
            beta0,
        } => college_temporal(*t, *kappa0, *lambda0, *alpha0, *beta0),
        ScenarioId::RandomLinearSfm { n_z, n_w, seed } => random_linear_sfm(*n_z, *n_w, *seed),
    }
}

fn c(v: f64) -> Expr {
    Expr::Const(v)
}
fn v(name: &str) -> Expr {
    Expr::var(name)
}
fn ind(a: Expr, b: Expr) -> Expr {
    Expr::Indicator(Box::new(a), Box::new(b))
}
fn add(terms: Vec<Expr>) -> Expr {
    Expr::Add(terms)
}
fn mul(factors: Vec<Expr>) -> Expr {
    Expr::Mul(factors)
}
fn sub(a: Expr, b: Expr) -> Expr {
    Expr::Sub(Box::new(a), Box::new(b))
}

/// Bernoulli(p) mechanism `target <- 1(u < p)` with its own uniform noise.
fn bernoulli_mech(target: &str, noise: &str, p: f64) -> Mechanism {
    Mechanism::new(target, &[], &[noise], ind(v(noise), c(p)))
}

fn berkeley(alpha: f64, beta: f64, lambda: f64) -> Result<StructuralModel> {
    for (n, val) in [("alpha", alpha), ("beta", beta), ("lambda", lambda)] {
        if !(0.0..=1.0).contains(&val) {
            return Err(Error::ModelSpec(format!("berkeley {n} must lie in [0,1]")));
        }
    }
    if 0.1 + alpha + beta > 1.0 || 0.5 + lambda > 1.0 {
        return Err(Error::ModelSpec(
            "berkeley probabilities exceed 1; shrink alpha/beta/lambda".into(),
        ));
    }
    let d_p = if lambda == 0.0 {
        c(0.5)
    } else {
        add(vec![c(0.5), mul(vec![c(lambda), v("x")])])
    };
    let d_parents: &[&str] = if lambda == 0.0 { &[] } else { &["x"] };
    let mut y_terms = vec![c(0.1)];
    let mut y_parents: Vec<&str> = Vec::new();
    if alpha != 0.0 {
        y_terms.push(mul(vec![c(alpha), v("x")]));
        y_parents.push("x");
    }
    if beta != 0.0 {
        y_terms.push(mul(vec![c(beta), v("d")]));
        y_parents.push("d");
    }
    StructuralModel::new(
        vec![
            ExogenousSpec::uniform01("u_x"),
            ExogenousSpec::uniform01("u_d"),
            ExogenousSpec::uniform01("u_y"),
        ],
        vec![
            bernoulli_mech("x", "u_x", 0.5),
            Mechanism::new("d", d_parents, &["u_d"], ind(v("u_d"), d_p)),
            Mechanism::new("y", &y_parents, &["u_y"], ind(v("u_y"), add(y_terms))),
        ],
    )
}

fn nde_fail() -> Result<StructuralModel> {
    // y <- 1(u_y < (x + z - 2xz)/5 + w/6)
    let y_p = add(vec![
        mul(vec![c(0.2), add(vec![v("x"), v("z"), mul(vec![c(-2.0), v("x"), v("z")])])]),
        mul(vec![c(1.0 / 6.0), v("w")]),
    ]);
    StructuralModel::new(
        vec![
            ExogenousSpec::normal("u", 0.0, 1.0),
            ExogenousSpec::uniform01("u_x"),
            ExogenousSpec::uniform01("u_z"),
            ExogenousSpec::uniform01("u_w"),
            ExogenousSpec::uniform01("u_y"),
        ],
        vec![
            Mechanism::new(
                "x",
                &[],
                &["u_x", "u"],
                ind(v("u_x"), Expr::Expit(Box::new(v("u")))),
            ),
            Mechanism::new(
                "z",
                &[],
                &["u_z", "u"],
                ind(v("u_z"), Expr::Expit(Box::new(v("u")))),
            ),
            bernoulli_mech("w", "u_w", 0.3),
            Mechanism::new("y", &["x", "z", "w"], &["u_y"], ind(v("u_y"), y_p)),
        ],
    )
}

fn startup_salaries(alt: bool) -> Result<StructuralModel> {
    // true: w <- -x + u_w; alt: w <- -x + (1 - 2x) u_w.
    let w_expr = if alt {
        add(vec![
            mul(vec![c(-1.0), v("x")]),
            mul(vec![sub(c(1.0), mul(vec![c(2.0), v("x")])), v("u_w")]),
        ])
    } else {
        add(vec![mul(vec![c(-1.0), v("x")]), v("u_w")])
    };
    StructuralModel::new(
        vec![
            ExogenousSpec::bernoulli("u_x", 0.5),
            ExogenousSpec::normal("u_w", 0.0, 1.0),
            ExogenousSpec::normal("u_y", 0.0, 1.0),
        ],
        vec![
            Mechanism::new("x", &[], &["u_x"], v("u_x")),
            Mechanism::new("w", &["x"], &["u_w"], w_expr),
            Mechanism::new(
                "y",
                &["x", "w"],
                &["u_y"],
                add(vec![v("x"), v("w"), v("u_y")]),
            ),
        ],
    )
}

fn hiring_iii_a() -> Result<StructuralModel> {
    StructuralModel::new(
        vec![
            ExogenousSpec::bernoulli("u_xy", 0.5),
            ExogenousSpec::normal("u_z", 0.0, 1.0),
            ExogenousSpec::normal("u_y", 0.0, 1.0),
        ],
        vec![
            Mechanism::new("x", &[], &["u_xy"], v("u_xy")),
            Mechanism::new("z", &[], &["u_z"], v("u_z")),
            Mechanism::new(
                "y",
                &["x", "z"],
                &["u_xy", "u_y"],
                add(vec![v("x"), mul(vec![c(-1.0), v("u_xy")]), v("z"), v("u_y")]),
            ),
        ],
    )
}

fn hiring_iii_b() -> Result<StructuralModel> {
    StructuralModel::new(
        vec![
            ExogenousSpec::bernoulli("u_xz", 0.5),
            ExogenousSpec::normal("u_zy", 0.0, 1.0),
            ExogenousSpec::normal("u_y", 0.0, 1.0),
        ],
        vec![
            Mechanism::new("x", &[], &["u_xz"], v("u_xz")),
            Mechanism::new("z", &[], &["u_xz", "u_zy"], add(vec![v("u_xz"), v("u_zy")])),
            Mechanism::new("y", &[], &["u_zy", "u_y"], add(vec![v("u_zy"), v("u_y")])),
        ],
    )
}

fn hiring_iv() -> Result<StructuralModel> {
    StructuralModel::new(
        vec![
            ExogenousSpec::bernoulli("u_xz", 0.5),
            ExogenousSpec::uniform01("u_z"),
            ExogenousSpec::uniform01("u_w"),
            ExogenousSpec::uniform01("u_y"),
        ],
        vec![
            Mechanism::new("x", &[], &["u_xz"], v("u_xz")),
            Mechanism::new(
                "z",
                &[],
                &["u_xz", "u_z"],
                add(vec![mul(vec![c(-1.0), v("u_xz")]), v("u_z")]),
            ),
            Mechanism::new(
                "w",
                &["x", "z"],
                &["u_w"],
                add(vec![v("x"), v("z"), v("u_w")]),
            ),
            Mechanism::new(
                "y",
                &["w"],
                &["u_y"],
                ind(v("u_y"), Expr::Expit(Box::new(v("w")))),
            ),
        ],
    )
}

fn ot_fails(eps: f64) -> Result<StructuralModel> {
    if !(eps > 0.0) {
        return Err(Error::ModelSpec("ot-fails eps must be positive".into()));
    }
    // y <- (1-x) * (u_y OR 1(w > 0)) + x * (u_y OR 1(w < 0))
    let when_x0 = Expr::Or(Box::new(v("u_y")), Box::new(ind(c(0.0), v("w"))));
    let when_x1 = Expr::Or(Box::new(v("u_y")), Box::new(ind(v("w"), c(0.0))));
    StructuralModel::new(
        vec![
            ExogenousSpec::bernoulli("u_x", 0.5),
            ExogenousSpec::bernoulli("u_w", 0.5),
            ExogenousSpec::bernoulli("u_y", 0.5),
        ],
        vec![
            Mechanism::new("x", &[], &["u_x"], v("u_x")),
            Mechanism::new(
                "w",
                &[],
                &["u_w"],
                mul(vec![c(eps), sub(mul(vec![c(2.0), v("u_w")]), c(1.0))]),
            ),
            Mechanism::new(
                "y",
                &["x", "w"],
                &["u_y"],
                add(vec![
                    mul(vec![sub(c(1.0), v("x")), when_x0]),
                    mul(vec![v("x"), when_x1]),
                ]),
            ),
        ],
    )
}

fn non_id_m1() -> Result<StructuralModel> {
    StructuralModel::new(
        vec![
            ExogenousSpec::bernoulli("u_x", 0.5),
            ExogenousSpec::bernoulli("u_wy", 0.5),
            ExogenousSpec::uniform01("u_d"),
            ExogenousSpec::uniform01("u_y"),
        ],
        vec![
            Mechanism::new("x", &[], &["u_x"], v("u_x")),
            Mechanism::new(
                "w",
                &["x"],
                &["u_d", "u_wy"],
                ind(
                    v("u_d"),
                    add(vec![
                        c(0.2),
                        mul(vec![c(0.4), v("x")]),
                        mul(vec![c(0.4), v("u_wy")]),
                    ]),
                ),
            ),
            Mechanism::new(
                "y",
                &["x", "w"],
                &["u_y", "u_wy"],
                ind(
                    v("u_y"),
                    add(vec![
                        mul(vec![c(0.1), v("x")]),
                        mul(vec![c(0.7), v("w")]),
                        mul(vec![c(0.1), v("u_wy")]),
                    ]),
                ),
            ),
        ],
    )
}

fn non_id_m2() -> Result<StructuralModel> {
    // Same observational distribution as M1, different mediated mechanism:
    // the shared noise enters W through an XOR with X, and the outcome
    // threshold is the table g(x, w, s) below. NIE drops from 0.28 to 0.04.
    let s = || v("u_wy");
    let xor = add(vec![
        v("x"),
        s(),
        mul(vec![c(-2.0), v("x"), s()]),
    ]);
    let w_p = add(vec![c(0.2), mul(vec![c(0.4), v("x")]), mul(vec![c(0.4), xor])]);
    // g(x,w,s): (0,0,1) -> .1, (0,1,0) -> .1, (0,1,1) -> 1, (1,0,0) -> .2,
    //           (1,0,1) -> .1, (1,1,0) -> .9, (1,1,1) -> .8, else 0.
    let term = |val: f64, x1: bool, w1: bool, s1: bool| -> Expr {
        let f = |on: bool, e: Expr| if on { e } else { sub(c(1.0), e) };
        mul(vec![c(val), f(x1, v("x")), f(w1, v("w")), f(s1, v("u_wy"))])
    };
    let g = add(vec![
        term(0.1, false, false, true),
        term(0.1, false, true, false),
        term(1.0, false, true, true),
        term(0.2, true, false, false),
        term(0.1, true, false, true),
        term(0.9, true, true, false),
        term(0.8, true, true, true),
    ]);
    StructuralModel::new(
        vec![
            ExogenousSpec::bernoulli("u_x", 0.5),
            ExogenousSpec::bernoulli("u_wy", 0.5),
            ExogenousSpec::uniform01("u_d"),
            ExogenousSpec::uniform01("u_y"),
        ],
        vec![
            Mechanism::new("x", &[], &["u_x"], v("u_x")),
            Mechanism::new("w", &["x"], &["u_d", "u_wy"], ind(v("u_d"), w_p)),
            Mechanism::new("y", &["x", "w"], &["u_y", "u_wy"], ind(v("u_y"), g)),
        ],
    )
}

/// Coefficients of the college-admissions process after `t` steps.
///
/// The funding factor f(t) ~ Unif[0.8, 1.2] comes from a fixed internal
/// stream, so the coefficient path is deterministic given (t, initials).
pub(crate) fn college_coefficients(
    t: u32,
    kappa0: f64,
    lambda0: f64,
    alpha0: f64,
    beta0: f64,
) -> (f64, f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0c01_1e9e);
    let (mut k, mut l, mut a, mut b) = (kappa0, lambda0, alpha0, beta0);
    for _ in 0..t {
        let f = 0.8 + 0.4 * rng.gen::<f64>();
        let (l_old, b_old) = (l, b);
        k *= 0.9;
        l = l_old * (1.0 - b_old);
        b = b_old * (1.0 - l_old) * f;
        a *= 0.8;
    }
    (k, l, a, b)
}

fn college_temporal(
    t: u32,
    kappa0: f64,
    lambda0: f64,
    alpha0: f64,
    beta0: f64,
) -> Result<StructuralModel> {
    for (n, val) in [
        ("kappa0", kappa0),
        ("lambda0", lambda0),
        ("alpha0", alpha0),
        ("beta0", beta0),
    ] {
        if !(0.0..=1.0).contains(&val) {
            return Err(Error::ModelSpec(format!(
                "college-temporal {n} must lie in [0,1]"
            )));
        }
    }
    if 0.2 + alpha0 + beta0 > 1.0 || 0.5 + kappa0 > 1.0 || 0.5 + lambda0 > 1.0 {
        return Err(Error::ModelSpec(
            "college-temporal initial coefficients push probabilities past 1".into(),
        ));
    }
    let (k, l, a, b) = college_coefficients(t, kappa0, lambda0, alpha0, beta0);
    let lin = |coef: f64, name: &str| mul(vec![c(coef), v(name)]);
    let mut y_terms = vec![c(0.1), lin(0.1, "z")];
    let mut y_parents = vec!["z"];
    if a != 0.0 {
        y_terms.push(lin(a, "x"));
        y_parents.push("x");
    }
    if b != 0.0 {
        y_terms.push(lin(b, "w"));
        y_parents.push("w");
    }
    StructuralModel::new(
        vec![
            ExogenousSpec::bernoulli("u_xz", 0.5),
            ExogenousSpec::uniform01("u_x"),
            ExogenousSpec::uniform01("u_z"),
            ExogenousSpec::uniform01("u_w"),
            ExogenousSpec::uniform01("u_y"),
        ],
        vec![
            Mechanism::new(
                "x",
                &[],
                &["u_x", "u_xz"],
                ind(v("u_x"), add(vec![c(0.5), lin(0.1, "u_xz")])),
            ),
            Mechanism::new(
                "z",
                &[],
                &["u_z", "u_xz"],
                ind(v("u_z"), add(vec![c(0.5), lin(k, "u_xz")])),
            ),
            Mechanism::new(
                "w",
                &[],
                &["u_w", "u_xz"],
                ind(v("u_w"), add(vec![c(0.5), lin(l, "u_xz")])),
            ),
            Mechanism::new("y", &y_parents, &["u_y"], ind(v("u_y"), add(y_terms))),
        ],
    )
}

fn random_linear_sfm(n_z: usize, n_w: usize, seed: u64) -> Result<StructuralModel> {
    if n_z == 0 || n_w == 0 {
        return Err(Error::ModelSpec(
            "random-linear-sfm needs n_z >= 1 and n_w >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -1.0 + 2.0 * rng.gen::<f64>();

    let mut exo = vec![
        ExogenousSpec::normal("u", 0.0, 1.0),
        ExogenousSpec::uniform01("u_x"),
    ];
    let mut mechs = vec![Mechanism::new(
        "x",
        &[],
        &["u_x", "u"],
        ind(v("u_x"), Expr::Expit(Box::new(v("u")))),
    )];

    let z_names: Vec<String> = (0..n_z).map(|i| format!("z{i}")).collect();
    for i in 0..n_z {
        let noise = format!("eps_z{i}");
        exo.push(ExogenousSpec::normal(&noise, 0.0, 1.0));
        let mut terms = vec![mul(vec![c(draw()), v("u")]), v(&noise)];
        let mut parents: Vec<String> = Vec::new();
        for zn in z_names.iter().take(i) {
            terms.push(mul(vec![c(draw()), v(zn)]));
            parents.push(zn.clone());
        }
        mechs.push(Mechanism {
            target: z_names[i].clone(),
            parents,
            exogenous_args: vec!["u".into(), noise],
            expr: add(terms),
        });
    }

    let w_names: Vec<String> = (0..n_w).map(|i| format!("w{i}")).collect();
    for i in 0..n_w {
        let noise = format!("eps_w{i}");
        exo.push(ExogenousSpec::normal(&noise, 0.0, 1.0));
        let mut terms = vec![mul(vec![c(draw()), v("x")]), v(&noise)];
        let mut parents: Vec<String> = vec!["x".into()];
        for zn in &z_names {
            terms.push(mul(vec![c(draw()), v(zn)]));
            parents.push(zn.clone());
        }
        for wn in w_names.iter().take(i) {
            terms.push(mul(vec![c(draw()), v(wn)]));
            parents.push(wn.clone());
        }
        mechs.push(Mechanism {
            target: w_names[i].clone(),
            parents,
            exogenous_args: vec![noise],
            expr: add(terms),
        });
    }

    exo.push(ExogenousSpec::normal("eps_y", 0.0, 1.0));
    let mut terms = vec![mul(vec![c(draw()), v("x")]), v("eps_y")];
    let mut parents: Vec<String> = vec!["x".into()];
    for zn in &z_names {
        terms.push(mul(vec![c(draw()), v(zn)]));
        parents.push(zn.clone());
    }
    for wn in &w_names {
        terms.push(mul(vec![c(draw()), v(wn)]));
        parents.push(wn.clone());
    }
    mechs.push(Mechanism {
        target: "y".into(),
        parents,
        exogenous_args: vec!["eps_y".into()],
        expr: add(terms),
    });

    StructuralModel::new(exo, mechs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn berkeley_has_three_endogenous() {
        let m = builtin_scenario(&ScenarioId::Berkeley {
            alpha: 0.0,
            beta: 0.7,
            lambda: 0.2,
        })
        .unwrap();
        assert_eq!(m.endogenous_names(), vec!["x", "d", "y"]);
    }

    #[test]
    fn berkeley_rejects_out_of_range() {
        assert!(builtin_scenario(&ScenarioId::Berkeley {
            alpha: 0.5,
            beta: 0.7,
            lambda: 0.2,
        })
        .is_err());
    }

    #[test]
    fn ot_fails_outcome_switches_on_x() {
        let m = builtin_scenario(&ScenarioId::OtFails { eps: 1.0 }).unwrap();
        let eval = |ux: f64, uw: f64, uy: f64| {
            let u = crate::scm::Unit::new(&[("u_x", ux), ("u_w", uw), ("u_y", uy)]);
            m.evaluate(&u, &crate::scm::InterventionPlan::empty()).unwrap()["y"]
        };
        // x = 0: y = u_y OR 1(w > 0); w = +1 when u_w = 1.
        assert_eq!(eval(0.0, 1.0, 0.0), 1.0);
        assert_eq!(eval(0.0, 0.0, 0.0), 0.0);
        // x = 1: y = u_y OR 1(w < 0).
        assert_eq!(eval(1.0, 1.0, 0.0), 0.0);
        assert_eq!(eval(1.0, 0.0, 0.0), 1.0);
    }

    #[test]
    fn random_linear_sfm_coefficients_in_range() {
        let m = builtin_scenario(&ScenarioId::RandomLinearSfm {
            n_z: 5,
            n_w: 5,
            seed: 42,
        })
        .unwrap();
        // Every numeric constant inside a product is a structural coefficient.
        fn check(e: &Expr) {
            match e {
                Expr::Mul(fs) => {
                    for f in fs {
                        if let Expr::Const(c) = f {
                            assert!((*c).abs() <= 1.0, "coefficient {c} out of [-1,1]");
                        }
                        check(f);
                    }
                }
                Expr::Add(ts) => ts.iter().for_each(check),
                Expr::Sub(a, b) | Expr::Indicator(a, b) => {
                    check(a);
                    check(b);
                }
                Expr::Expit(a) => check(a),
                _ => {}
            }
        }
        for mech in m.mechanisms() {
            check(&mech.expr);
        }
        // Reproducible.
        let m2 = builtin_scenario(&ScenarioId::RandomLinearSfm {
            n_z: 5,
            n_w: 5,
            seed: 42,
        })
        .unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn college_dynamics_decay() {
        let (k0, _, a0, _) = college_coefficients(0, 0.2, 0.2, 0.1, 0.6);
        let (k5, _, a5, _) = college_coefficients(5, 0.2, 0.2, 0.1, 0.6);
        assert!((k0 - 0.2).abs() < 1e-12 && (a0 - 0.1).abs() < 1e-12);
        assert!((k5 - 0.2 * 0.9f64.powi(5)).abs() < 1e-12);
        assert!((a5 - 0.1 * 0.8f64.powi(5)).abs() < 1e-12);
    }
}
