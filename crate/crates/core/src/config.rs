//! Column-role configuration: a flat key/value text format binding dataset
//! columns to the four fairness-model groups.
//!
//! ```text
//! x = sex
//! y = outcome
//! z = age, nationality
//! w = education, experience
//! bidirected = WY
//! type.age = discrete
//! type.education = continuous
//! ```
//!
//! `z`, `w`, and `bidirected` may be empty or omitted; column types default
//! to inference from the data.

use std::collections::BTreeMap;

use crate::dataset::ColumnType;
use crate::diagram::{GroupEdge, SfmProjection, SfmRoles};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RolesConfig {
    pub sfm: SfmProjection,
    pub column_types: BTreeMap<String, ColumnType>,
}

pub fn parse_roles_config(text: &str) -> Result<RolesConfig> {
    let mut x = None;
    let mut y = None;
    let mut z = Vec::new();
    let mut w = Vec::new();
    let mut bidirected = std::collections::BTreeSet::new();
    let mut column_types = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let list = || -> Vec<String> {
            value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect()
        };
        match key {
            "x" => x = Some(value.to_string()),
            "y" => y = Some(value.to_string()),
            "z" => z = list(),
            "w" => w = list(),
            "bidirected" => {
                for item in list() {
                    bidirected.insert(GroupEdge::parse(&item)?);
                }
            }
            other => {
                if let Some(col) = other.strip_prefix("type.") {
                    let t = match value.to_ascii_lowercase().as_str() {
                        "discrete" => ColumnType::Discrete,
                        "continuous" => ColumnType::Continuous,
                        bad => {
                            return Err(Error::Config(format!(
                                "line {}: unknown column type `{bad}`",
                                lineno + 1
                            )))
                        }
                    };
                    column_types.insert(col.trim().to_string(), t);
                } else {
                    return Err(Error::Config(format!(
                        "line {}: unknown key `{other}`",
                        lineno + 1
                    )));
                }
            }
        }
    }
    let x = x.ok_or_else(|| Error::Config("roles config is missing `x =`".into()))?;
    let y = y.ok_or_else(|| Error::Config("roles config is missing `y =`".into()))?;
    let roles = SfmRoles {
        x,
        y,
        z,
        w,
    };
    Ok(RolesConfig {
        sfm: SfmProjection {
            roles,
            extra_bidirected: bidirected,
        },
        column_types,
    })
}

pub fn emit_roles_config(cfg: &RolesConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!("x = {}\n", cfg.sfm.roles.x));
    out.push_str(&format!("y = {}\n", cfg.sfm.roles.y));
    out.push_str(&format!("z = {}\n", cfg.sfm.roles.z.join(", ")));
    out.push_str(&format!("w = {}\n", cfg.sfm.roles.w.join(", ")));
    let edges: Vec<String> = cfg
        .sfm
        .extra_bidirected
        .iter()
        .map(|e| e.label().replace("<->", ""))
        .collect();
    out.push_str(&format!("bidirected = {}\n", edges.join(", ")));
    for (col, t) in &cfg.column_types {
        out.push_str(&format!(
            "type.{col} = {}\n",
            match t {
                ColumnType::Discrete => "discrete",
                ColumnType::Continuous => "continuous",
            }
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_identity() {
        let text = "x = sex\ny = outcome\nz = age, nationality\nw = edu\nbidirected = WY\ntype.age = discrete\n";
        let cfg = parse_roles_config(text).unwrap();
        let emitted = emit_roles_config(&cfg);
        let back = parse_roles_config(&emitted).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.sfm.roles.z, vec!["age", "nationality"]);
        assert!(cfg
            .sfm
            .extra_bidirected
            .contains(&GroupEdge::WY));
    }

    #[test]
    fn missing_required_keys() {
        assert!(parse_roles_config("y = out\n").is_err());
        assert!(parse_roles_config("x = a\n").is_err());
    }

    #[test]
    fn declared_xz_rejected() {
        let text = "x = a\ny = b\nbidirected = XZ\n";
        assert!(parse_roles_config(text).is_err());
    }
}
