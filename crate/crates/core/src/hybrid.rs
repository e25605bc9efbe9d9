//! Model-agnostic description of a hybrid system: discrete modes with their
//! own state and control dimensions, and a scheduled chain of transitions
//! carrying jump maps and (for autonomous transitions) switching manifolds.

use std::fmt;
use std::panic::catch_unwind;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModeId {
    pub id: usize,
    pub label: String,
}

impl ModeId {
    pub fn new(id: usize, label: impl Into<String>) -> Self {
        Self {
            id,
            label: label.into(),
        }
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpec {
    pub mode: ModeId,
    pub state_dim: usize,
    pub control_dim: usize,
    pub control_lower: Vec<f64>,
    pub control_upper: Vec<f64>,
    pub state_labels: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    /// Triggered when the state reaches a switching manifold.
    Autonomous,
    /// Switching time is a decision variable.
    Controlled,
}

/// Direction in which the manifold value must pass through zero to fire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossingDirection {
    Rising,
    Falling,
}

/// Affine switching manifold `m(x) = g·x - offset`.
///
/// Both manifolds of the epidemic model are coordinate shifts, so `g` is a
/// unit basis vector and stays constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifold {
    pub name: String,
    pub gradient: Vec<f64>,
    pub offset: f64,
    pub direction: CrossingDirection,
}

impl Manifold {
    /// `m(x) = x[index] - threshold` on a `dim`-dimensional state.
    pub fn coordinate(
        name: impl Into<String>,
        dim: usize,
        index: usize,
        threshold: f64,
        direction: CrossingDirection,
    ) -> Self {
        let mut gradient = vec![0.0; dim];
        gradient[index] = 1.0;
        Self {
            name: name.into(),
            gradient,
            offset: threshold,
            direction,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        dot(&self.gradient, x) - self.offset
    }

    /// Whether moving from value `before` to `after` counts as a crossing.
    pub fn crossed(&self, before: f64, after: f64) -> bool {
        match self.direction {
            CrossingDirection::Rising => before < 0.0 && after >= 0.0,
            CrossingDirection::Falling => before > 0.0 && after <= 0.0,
        }
    }
}

pub type JumpMap = fn(&[f64]) -> Vec<f64>;

#[derive(Debug, Clone)]
pub struct TransitionSpec {
    pub name: String,
    pub from: usize,
    pub to: usize,
    pub kind: TransitionKind,
    pub jump: JumpMap,
    pub manifold: Option<Manifold>,
}

/// Modes plus the scheduled transition chain, one pass around the cycle.
#[derive(Debug, Clone)]
pub struct HybridSystemDefinition {
    pub modes: Vec<ModeSpec>,
    pub transitions: Vec<TransitionSpec>,
}

impl HybridSystemDefinition {
    pub fn mode(&self, id: usize) -> Option<&ModeSpec> {
        self.modes.iter().find(|m| m.mode.id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    EmptyLabel {
        mode: usize,
    },
    DuplicateMode {
        mode: usize,
    },
    ZeroDimension {
        mode: usize,
    },
    LabelCount {
        mode: usize,
        expected: usize,
        got: usize,
    },
    ControlBounds {
        mode: usize,
    },
    UnknownMode {
        transition: usize,
        mode: usize,
    },
    MissingManifold {
        transition: usize,
    },
    UnexpectedManifold {
        transition: usize,
    },
    ManifoldDimension {
        transition: usize,
        expected: usize,
        got: usize,
    },
    JumpDimension {
        transition: usize,
        expected: usize,
        got: usize,
    },
    /// The jump map panicked on a state of the source mode's dimension.
    JumpRejected {
        transition: usize,
        dim: usize,
    },
    BrokenChain {
        transition: usize,
    },
    OpenCycle,
    EmptySchedule,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ValidationIssue::*;
        match self {
            EmptyLabel { mode } => write!(f, "mode {mode}: empty label"),
            DuplicateMode { mode } => write!(f, "mode {mode}: duplicate id"),
            ZeroDimension { mode } => write!(f, "mode {mode}: zero state or control dimension"),
            LabelCount {
                mode,
                expected,
                got,
            } => write!(
                f,
                "mode {mode}: {got} state labels for dimension {expected}"
            ),
            ControlBounds { mode } => write!(f, "mode {mode}: control bounds malformed"),
            UnknownMode { transition, mode } => {
                write!(f, "transition {transition}: unknown mode {mode}")
            }
            MissingManifold { transition } => {
                write!(
                    f,
                    "transition {transition}: missing manifold on autonomous switching"
                )
            }
            UnexpectedManifold { transition } => {
                write!(
                    f,
                    "transition {transition}: manifold on controlled switching"
                )
            }
            ManifoldDimension {
                transition,
                expected,
                got,
            } => write!(
                f,
                "transition {transition}: manifold gradient has {got} entries, expected {expected}"
            ),
            JumpDimension {
                transition,
                expected,
                got,
            } => write!(
                f,
                "transition {transition}: jump map yields {got} components, expected {expected}"
            ),
            JumpRejected { transition, dim } => {
                write!(
                    f,
                    "transition {transition}: jump map rejects a {dim}-dimensional state"
                )
            }
            BrokenChain { transition } => {
                write!(
                    f,
                    "transition {transition}: broken chain (source differs from previous target)"
                )
            }
            OpenCycle => write!(f, "schedule does not return to its first mode"),
            EmptySchedule => write!(f, "no transitions"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

pub fn validate_system(def: &HybridSystemDefinition) -> ValidationReport {
    let mut issues = Vec::new();

    for (k, spec) in def.modes.iter().enumerate() {
        let id = spec.mode.id;
        if spec.mode.label.is_empty() {
            issues.push(ValidationIssue::EmptyLabel { mode: id });
        }
        if def.modes[..k].iter().any(|m| m.mode.id == id) {
            issues.push(ValidationIssue::DuplicateMode { mode: id });
        }
        if spec.state_dim == 0 || spec.control_dim == 0 {
            issues.push(ValidationIssue::ZeroDimension { mode: id });
        }
        if spec.state_labels.len() != spec.state_dim {
            issues.push(ValidationIssue::LabelCount {
                mode: id,
                expected: spec.state_dim,
                got: spec.state_labels.len(),
            });
        }
        let bounds_ok = spec.control_lower.len() == spec.control_dim
            && spec.control_upper.len() == spec.control_dim
            && spec
                .control_lower
                .iter()
                .zip(&spec.control_upper)
                .all(|(lo, hi)| lo <= hi);
        if !bounds_ok {
            issues.push(ValidationIssue::ControlBounds { mode: id });
        }
    }

    if def.transitions.is_empty() {
        issues.push(ValidationIssue::EmptySchedule);
    }

    for (k, tr) in def.transitions.iter().enumerate() {
        let from = def.mode(tr.from);
        let to = def.mode(tr.to);
        if from.is_none() {
            issues.push(ValidationIssue::UnknownMode {
                transition: k,
                mode: tr.from,
            });
        }
        if to.is_none() {
            issues.push(ValidationIssue::UnknownMode {
                transition: k,
                mode: tr.to,
            });
        }
        match (tr.kind, &tr.manifold) {
            (TransitionKind::Autonomous, None) => {
                issues.push(ValidationIssue::MissingManifold { transition: k })
            }
            (TransitionKind::Controlled, Some(_)) => {
                issues.push(ValidationIssue::UnexpectedManifold { transition: k })
            }
            _ => {}
        }
        if let (Some(m), Some(from)) = (&tr.manifold, from) {
            if m.gradient.len() != from.state_dim {
                issues.push(ValidationIssue::ManifoldDimension {
                    transition: k,
                    expected: from.state_dim,
                    got: m.gradient.len(),
                });
            }
        }
        if let (Some(from), Some(to)) = (from, to) {
            let input = vec![0.0; from.state_dim];
            let jump = tr.jump;
            match catch_unwind(move || jump(&input)) {
                Ok(probe) if probe.len() != to.state_dim => {
                    issues.push(ValidationIssue::JumpDimension {
                        transition: k,
                        expected: to.state_dim,
                        got: probe.len(),
                    })
                }
                Ok(_) => {}
                Err(_) => issues.push(ValidationIssue::JumpRejected {
                    transition: k,
                    dim: from.state_dim,
                }),
            }
        }
        if k > 0 && def.transitions[k - 1].to != tr.from {
            issues.push(ValidationIssue::BrokenChain { transition: k });
        }
    }

    if let (Some(first), Some(last)) = (def.transitions.first(), def.transitions.last()) {
        if first.from != last.to {
            issues.push(ValidationIssue::OpenCycle);
        }
    }

    ValidationReport { issues }
}

pub fn apply_jump(
    def: &HybridSystemDefinition,
    tr: &TransitionSpec,
    x_minus: &[f64],
) -> Result<Vec<f64>> {
    let from = def
        .mode(tr.from)
        .ok_or_else(|| Error::InvalidInput(format!("unknown mode {}", tr.from)))?;
    if x_minus.len() != from.state_dim {
        return Err(Error::DimensionMismatch {
            context: "apply_jump",
            expected: from.state_dim,
            got: x_minus.len(),
        });
    }
    Ok((tr.jump)(x_minus))
}

pub fn manifold_value(tr: &TransitionSpec, x: &[f64]) -> Result<f64> {
    let m = match (tr.kind, &tr.manifold) {
        (TransitionKind::Autonomous, Some(m)) => m,
        _ => {
            return Err(Error::NotAutonomous {
                transition: tr.name.clone(),
            })
        }
    };
    if x.len() != m.gradient.len() {
        return Err(Error::DimensionMismatch {
            context: "manifold_value",
            expected: m.gradient.len(),
            got: x.len(),
        });
    }
    Ok(m.value(x))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
