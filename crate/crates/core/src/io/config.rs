//! TOML run configuration.
//!
//! Every key is optional; missing keys take the reference values, so an
//! empty document reproduces the reference experiment. Sections:
//!
//! ```toml
//! [params]      # beta_v, beta_s, kappa, gamma, delta, omega
//! [weights.rto_first]   # a_e, a_i, a_j, b_j
//! [weights.wfh]         # a_i, a_j, a_hv, a_hs, c, b_j, b_sigma_v, b_sigma_s
//! [weights.protocol]    # a_i, a_j, a_hs, c, b_j, b_v, b_sigma_s
//! [weights.rto_final]   # a_e, a_i, a_j, b_j
//! [terminal]    # k_e, k_i, k_j
//! [bounds.rto_first]    # u_j_max (likewise wfh, protocol, rto_final)
//! [thresholds]  # i_high, i_low
//! [horizon]     # t0, tf
//! [x0]          # V, S, E, I, J, R
//! [solver]      # h, alpha, tol_control, tol_hgap, ...
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::de::{DeTable, DeValue};
use toml::{Table, Value};

use crate::model::{
    ControlBounds, EpiModel, EpiParams, Horizon, PhaseWeights, TerminalWeights, Thresholds,
};
use crate::solver::SolverConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Syntax(String),
    #[error("unknown key `{key}` at line {line}")]
    UnknownKey { key: String, line: usize },
    #[error("`{key}` at line {line} must be a {expected}")]
    WrongShape {
        key: String,
        line: usize,
        expected: &'static str,
    },
    #[error("{0}")]
    Type(String),
    #[error("invalid configuration: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

/// Model plus solver settings for one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub model: EpiModel,
    pub solver: SolverConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut issues = self.model.validate();
        issues.extend(self.solver.validate());
        issues
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialState {
    #[serde(rename = "V")]
    v: f64,
    #[serde(rename = "S")]
    s: f64,
    #[serde(rename = "E")]
    e: f64,
    #[serde(rename = "I")]
    i: f64,
    #[serde(rename = "J")]
    j: f64,
    #[serde(rename = "R")]
    r: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    params: EpiParams,
    weights: PhaseWeights,
    terminal: TerminalWeights,
    bounds: ControlBounds,
    thresholds: Thresholds,
    horizon: Horizon,
    x0: InitialState,
    solver: SolverConfig,
}

impl From<&RunConfig> for Document {
    fn from(c: &RunConfig) -> Self {
        let [v, s, e, i, j, r] = c.model.x0;
        Self {
            params: c.model.params,
            weights: c.model.weights,
            terminal: c.model.terminal,
            bounds: c.model.bounds,
            thresholds: c.model.thresholds,
            horizon: c.model.horizon,
            x0: InitialState { v, s, e, i, j, r },
            solver: c.solver,
        }
    }
}

impl From<Document> for RunConfig {
    fn from(d: Document) -> Self {
        let x = d.x0;
        Self {
            model: EpiModel {
                params: d.params,
                weights: d.weights,
                terminal: d.terminal,
                bounds: d.bounds,
                thresholds: d.thresholds,
                horizon: d.horizon,
                x0: [x.v, x.s, x.e, x.i, x.j, x.r],
            },
            solver: d.solver,
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Rejects keys absent from the defaults, reporting the line they sit on.
fn check_keys(
    text: &str,
    user: &DeTable<'_>,
    defaults: &Table,
    prefix: &str,
) -> Result<(), ConfigError> {
    for (key, value) in user.iter() {
        let name = key.get_ref().as_ref();
        let path = if prefix.is_empty() {
            name.to_string()
        } else {
            format!("{prefix}.{name}")
        };
        let line = line_of(text, key.span().start);
        match (defaults.get(name), value.get_ref()) {
            (None, _) => return Err(ConfigError::UnknownKey { key: path, line }),
            (Some(Value::Table(d)), DeValue::Table(u)) => check_keys(text, u, d, &path)?,
            (Some(Value::Table(_)), _) => {
                return Err(ConfigError::WrongShape {
                    key: path,
                    line,
                    expected: "table",
                })
            }
            (Some(_), DeValue::Table(_)) => {
                return Err(ConfigError::WrongShape {
                    key: path,
                    line,
                    expected: "value",
                })
            }
            _ => {}
        }
    }
    Ok(())
}

fn merge(base: &mut Table, user: Table) {
    for (key, value) in user {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(u)) => merge(b, u),
            // Integers written for real-valued keys.
            (Some(slot @ Value::Float(_)), Value::Integer(i)) => *slot = Value::Float(i as f64),
            (Some(slot), v) => *slot = v,
            (None, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn defaults_table() -> Table {
    Table::try_from(Document::from(&RunConfig::default())).expect("defaults serialize")
}

/// Parses a configuration document, filling omitted keys with defaults
/// and validating the result.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let spanned = DeTable::parse(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let mut base = defaults_table();
    check_keys(text, spanned.get_ref(), &base, "")?;
    let user: Table = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    merge(&mut base, user);
    let doc: Document = Value::Table(base)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Type(e.to_string()))?;
    let cfg = RunConfig::from(doc);
    let issues = cfg.validate();
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(issues))
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

/// Full document with every key spelled out.
pub fn write_config(cfg: &RunConfig) -> String {
    toml::to_string_pretty(&Document::from(cfg)).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.model.params.beta_v, 0.18);
        assert_eq!(cfg.model.thresholds.i_high, 0.043);
    }

    #[test]
    fn partial_section_keeps_other_defaults() {
        let cfg = parse_config("[weights.rto_final]\na_e = 50\n[solver]\nh = 0.02\n").unwrap();
        assert_eq!(cfg.model.weights.rto_final.a_e, 50.0);
        assert_eq!(cfg.model.weights.rto_final.a_i, 950.0);
        assert_eq!(cfg.model.weights.rto_first.a_i, 400.0);
        assert_eq!(cfg.solver.h, 0.02);
    }

    #[test]
    fn unknown_key_names_line() {
        let err = parse_config("[params]\nbeta_v = 0.2\nbeta_x = 1\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { key, line } => {
                assert_eq!(key, "params.beta_x");
                assert_eq!(line, 3);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn x0_sum_is_checked() {
        let err = parse_config("[x0]\nV = 0.0\n").unwrap_err();
        assert!(err.to_string().contains("x0"), "{err}");
    }

    #[test]
    fn threshold_order_is_checked() {
        let err = parse_config("[thresholds]\ni_low = 0.05\ni_high = 0.043\n").unwrap_err();
        assert!(err.to_string().contains("i_low < i_high"), "{err}");
    }

    #[test]
    fn written_config_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.model.params.kappa = 0.1 + 0.2;
        cfg.solver.max_outer_iters = 7;
        assert_eq!(parse_config(&write_config(&cfg)).unwrap(), cfg);
    }
}
