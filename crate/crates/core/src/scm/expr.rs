use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

/// Closed expression tree for structural mechanisms.
///
/// Mechanisms are data, not host closures, so models can be serialized and
/// diagram extraction stays syntactic. Logical operators treat any non-zero
/// operand as true and return 0/1; `Indicator` is a strict `a < b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Const(f64),
    /// Reference to an endogenous parent or an exogenous argument by name.
    Var(String),
    Add(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Vec<Expr>),
    /// 1(a < b), strict.
    Indicator(Box<Expr>, Box<Expr>),
    /// Logistic function e^x / (1 + e^x).
    Expit(Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    /// Evaluate against a variable-resolution function.
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(name) => lookup(name)
                .ok_or_else(|| Error::Eval(format!("unresolved variable reference `{name}`"))),
            Expr::Add(terms) => {
                let mut acc = 0.0;
                for t in terms {
                    acc += t.eval(lookup)?;
                }
                Ok(acc)
            }
            Expr::Sub(a, b) => Ok(a.eval(lookup)? - b.eval(lookup)?),
            Expr::Mul(factors) => {
                let mut acc = 1.0;
                for f in factors {
                    acc *= f.eval(lookup)?;
                }
                Ok(acc)
            }
            Expr::Indicator(a, b) => Ok(if a.eval(lookup)? < b.eval(lookup)? {
                1.0
            } else {
                0.0
            }),
            Expr::Expit(a) => {
                let v = a.eval(lookup)?;
                Ok(1.0 / (1.0 + (-v).exp()))
            }
            Expr::Min(a, b) => Ok(a.eval(lookup)?.min(b.eval(lookup)?)),
            Expr::Max(a, b) => Ok(a.eval(lookup)?.max(b.eval(lookup)?)),
            Expr::Or(a, b) => {
                let (x, y) = (a.eval(lookup)?, b.eval(lookup)?);
                Ok(if x != 0.0 || y != 0.0 { 1.0 } else { 0.0 })
            }
            Expr::And(a, b) => {
                let (x, y) = (a.eval(lookup)?, b.eval(lookup)?);
                Ok(if x != 0.0 && y != 0.0 { 1.0 } else { 0.0 })
            }
        }
    }

    /// All variable names referenced anywhere in the tree.
    pub fn referenced_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Add(terms) | Expr::Mul(terms) => {
                for t in terms {
                    t.collect_vars(out);
                }
            }
            Expr::Sub(a, b)
            | Expr::Indicator(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b)
            | Expr::Or(a, b)
            | Expr::And(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Expit(a) => a.collect_vars(out),
        }
    }

    /// Parse the prefix notation emitted by `Display`, e.g. `(ind u_y (+ 0.1 (* 0.7 d)))`.
    pub fn parse(input: &str) -> Result<Expr> {
        let tokens = tokenize(input);
        let mut pos = 0usize;
        let expr = parse_tokens(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::Config(format!(
                "trailing tokens after expression: `{}`",
                tokens[pos..].join(" ")
            )));
        }
        Ok(expr)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(name) => write!(f, "{name}"),
            Expr::Add(terms) => write_nary(f, "+", terms),
            Expr::Sub(a, b) => write!(f, "(- {a} {b})"),
            Expr::Mul(terms) => write_nary(f, "*", terms),
            Expr::Indicator(a, b) => write!(f, "(ind {a} {b})"),
            Expr::Expit(a) => write!(f, "(expit {a})"),
            Expr::Min(a, b) => write!(f, "(min {a} {b})"),
            Expr::Max(a, b) => write!(f, "(max {a} {b})"),
            Expr::Or(a, b) => write!(f, "(or {a} {b})"),
            Expr::And(a, b) => write!(f, "(and {a} {b})"),
        }
    }
}

fn write_nary(f: &mut fmt::Formatter<'_>, op: &str, terms: &[Expr]) -> fmt::Result {
    write!(f, "({op}")?;
    for t in terms {
        write!(f, " {t}")?;
    }
    write!(f, ")")
}

fn tokenize(input: &str) -> Vec<String> {
    input
        .replace('(', " ( ")
        .replace(')', " ) ")
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn parse_tokens(tokens: &[String], pos: &mut usize) -> Result<Expr> {
    let tok = tokens
        .get(*pos)
        .ok_or_else(|| Error::Config("unexpected end of expression".into()))?;
    *pos += 1;
    if tok != "(" {
        if tok == ")" {
            return Err(Error::Config("unexpected `)`".into()));
        }
        return Ok(match tok.parse::<f64>() {
            Ok(c) => Expr::Const(c),
            Err(_) => Expr::Var(tok.clone()),
        });
    }
    let op = tokens
        .get(*pos)
        .ok_or_else(|| Error::Config("missing operator after `(`".into()))?
        .clone();
    *pos += 1;
    let mut args = Vec::new();
    while tokens.get(*pos).map(String::as_str) != Some(")") {
        if *pos >= tokens.len() {
            return Err(Error::Config("missing closing `)`".into()));
        }
        args.push(parse_tokens(tokens, pos)?);
    }
    *pos += 1; // consume ')'
    let binary = |mut args: Vec<Expr>, name: &str| -> Result<(Box<Expr>, Box<Expr>)> {
        if args.len() != 2 {
            return Err(Error::Config(format!(
                "operator `{name}` takes 2 arguments, got {}",
                args.len()
            )));
        }
        let b = args.pop().unwrap();
        let a = args.pop().unwrap();
        Ok((Box::new(a), Box::new(b)))
    };
    match op.as_str() {
        "+" => Ok(Expr::Add(args)),
        "*" => Ok(Expr::Mul(args)),
        "-" => {
            let (a, b) = binary(args, "-")?;
            Ok(Expr::Sub(a, b))
        }
        "ind" => {
            let (a, b) = binary(args, "ind")?;
            Ok(Expr::Indicator(a, b))
        }
        "expit" => {
            if args.len() != 1 {
                return Err(Error::Config("operator `expit` takes 1 argument".into()));
            }
            Ok(Expr::Expit(Box::new(args.into_iter().next().unwrap())))
        }
        "min" => {
            let (a, b) = binary(args, "min")?;
            Ok(Expr::Min(a, b))
        }
        "max" => {
            let (a, b) = binary(args, "max")?;
            Ok(Expr::Max(a, b))
        }
        "or" => {
            let (a, b) = binary(args, "or")?;
            Ok(Expr::Or(a, b))
        }
        "and" => {
            let (a, b) = binary(args, "and")?;
            Ok(Expr::And(a, b))
        }
        other => Err(Error::Config(format!("unknown operator `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lookup(name: &str) -> Option<f64> {
        match name {
            "x" => Some(2.0),
            "y" => Some(-1.0),
            _ => None,
        }
    }

    #[test]
    fn arithmetic_and_indicator() {
        let e = Expr::Add(vec![
            Expr::Const(1.0),
            Expr::Mul(vec![Expr::var("x"), Expr::var("y")]),
        ]);
        assert_eq!(e.eval(&lookup).unwrap(), -1.0);
        let ind = Expr::Indicator(Box::new(Expr::var("y")), Box::new(Expr::Const(0.0)));
        assert_eq!(ind.eval(&lookup).unwrap(), 1.0);
        // strict: 1(a < a) = 0
        let tie = Expr::Indicator(Box::new(Expr::Const(0.3)), Box::new(Expr::Const(0.3)));
        assert_eq!(tie.eval(&lookup).unwrap(), 0.0);
    }

    #[test]
    fn unresolved_reference_errors() {
        let e = Expr::var("missing");
        assert!(e.eval(&lookup).is_err());
    }

    #[test]
    fn prefix_roundtrip() {
        let e = Expr::Indicator(
            Box::new(Expr::var("u_y")),
            Box::new(Expr::Add(vec![
                Expr::Const(0.1),
                Expr::Mul(vec![Expr::Const(0.7), Expr::var("d")]),
                Expr::Expit(Box::new(Expr::Sub(
                    Box::new(Expr::var("x")),
                    Box::new(Expr::Const(1.0)),
                ))),
            ])),
        );
        let text = e.to_string();
        let back = Expr::parse(&text).unwrap();
        assert_eq!(e, back);
    }
}
