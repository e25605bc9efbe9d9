//! Four-phase workplace epidemic model: return-to-office (RTO), work-from-home
//! (WFH), vaccination protocol, and a final RTO phase.
//!
//! State vectors are dense and ordered exactly as the compartments of each
//! mode are listed in [`Mode::layout`]; every phase-level function in this
//! module reads and writes that order directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::{
    dot, CrossingDirection, HybridSystemDefinition, Manifold, ModeId, ModeSpec, TransitionKind,
    TransitionSpec,
};

/// Index layout of the RTO state `[V, S, E, I, J, R]`.
pub mod rto {
    pub const V: usize = 0;
    pub const S: usize = 1;
    pub const E: usize = 2;
    pub const I: usize = 3;
    pub const J: usize = 4;
    pub const R: usize = 5;
    pub const DIM: usize = 6;
}

/// Index layout of the WFH state `[H_v, H_s, V, S, E, I, J, R]`.
pub mod wfh {
    pub const HV: usize = 0;
    pub const HS: usize = 1;
    pub const V: usize = 2;
    pub const S: usize = 3;
    pub const E: usize = 4;
    pub const I: usize = 5;
    pub const J: usize = 6;
    pub const R: usize = 7;
    pub const DIM: usize = 8;
}

/// Index layout of the protocol state `[H_s, V, S, E, I, J, R]`.
pub mod protocol {
    pub const HS: usize = 0;
    pub const V: usize = 1;
    pub const S: usize = 2;
    pub const E: usize = 3;
    pub const I: usize = 4;
    pub const J: usize = 5;
    pub const R: usize = 6;
    pub const DIM: usize = 7;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Compartment {
    Hv,
    Hs,
    V,
    S,
    E,
    I,
    J,
    R,
}

impl Compartment {
    /// Union of all compartments in export order.
    pub const ALL: [Compartment; 8] = [
        Compartment::Hv,
        Compartment::Hs,
        Compartment::V,
        Compartment::S,
        Compartment::E,
        Compartment::I,
        Compartment::J,
        Compartment::R,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Compartment::Hv => "H_v",
            Compartment::Hs => "H_s",
            Compartment::V => "V",
            Compartment::S => "S",
            Compartment::E => "E",
            Compartment::I => "I",
            Compartment::J => "J",
            Compartment::R => "R",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.label().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Control {
    /// `u_j`: quarantine through contact testing.
    Quarantine,
    /// `u_sigma_v`: vaccinated susceptibles assigned to WFH.
    WfhVaccinated,
    /// `u_sigma_s`: unvaccinated susceptibles assigned to WFH.
    WfhUnvaccinated,
    /// `u_v`: vaccination of the WFH pool.
    Vaccination,
}

impl Control {
    pub const ALL: [Control; 4] = [
        Control::Quarantine,
        Control::WfhVaccinated,
        Control::WfhUnvaccinated,
        Control::Vaccination,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Control::Quarantine => "u_j",
            Control::WfhVaccinated => "u_sigma_v",
            Control::WfhUnvaccinated => "u_sigma_s",
            Control::Vaccination => "u_v",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == s)
    }
}

/// Discrete mode of the automaton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Rto,
    Wfh,
    Protocol,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Rto, Mode::Wfh, Mode::Protocol];

    pub fn id(self) -> usize {
        match self {
            Mode::Rto => 0,
            Mode::Wfh => 1,
            Mode::Protocol => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::Rto => "rto",
            Mode::Wfh => "wfh",
            Mode::Protocol => "protocol",
        }
    }

    pub fn layout(self) -> &'static [Compartment] {
        use Compartment::*;
        match self {
            Mode::Rto => &[V, S, E, I, J, R],
            Mode::Wfh => &[Hv, Hs, V, S, E, I, J, R],
            Mode::Protocol => &[Hs, V, S, E, I, J, R],
        }
    }

    pub fn controls(self) -> &'static [Control] {
        use Control::*;
        match self {
            Mode::Rto => &[Quarantine],
            Mode::Wfh => &[Quarantine, WfhVaccinated, WfhUnvaccinated],
            Mode::Protocol => &[Quarantine, Vaccination, WfhUnvaccinated],
        }
    }

    pub fn state_dim(self) -> usize {
        self.layout().len()
    }

    pub fn control_dim(self) -> usize {
        self.controls().len()
    }

    pub fn index_of(self, c: Compartment) -> Option<usize> {
        self.layout().iter().position(|&k| k == c)
    }

    pub fn control_index(self, c: Control) -> Option<usize> {
        self.controls().iter().position(|&k| k == c)
    }

    pub fn infectious_index(self) -> usize {
        match self {
            Mode::Rto => rto::I,
            Mode::Wfh => wfh::I,
            Mode::Protocol => protocol::I,
        }
    }
}

/// Phase of the scheduled cycle. The two RTO phases share dynamics but not
/// cost weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    RtoFirst,
    Wfh,
    Protocol,
    RtoFinal,
}

impl Phase {
    pub const ALL: [Phase; 4] = [
        Phase::RtoFirst,
        Phase::Wfh,
        Phase::Protocol,
        Phase::RtoFinal,
    ];

    pub fn mode(self) -> Mode {
        match self {
            Phase::RtoFirst | Phase::RtoFinal => Mode::Rto,
            Phase::Wfh => Mode::Wfh,
            Phase::Protocol => Mode::Protocol,
        }
    }

    pub fn ordinal(self) -> usize {
        match self {
            Phase::RtoFirst => 0,
            Phase::Wfh => 1,
            Phase::Protocol => 2,
            Phase::RtoFinal => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Phase::RtoFirst => "rto1",
            Phase::Wfh => "wfh",
            Phase::Protocol => "protocol",
            Phase::RtoFinal => "rto4",
        }
    }
}

/// The three switchings of the cycle, in schedule order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Switch {
    RtoToWfh,
    WfhToProtocol,
    ProtocolToRto,
}

impl Switch {
    pub const ALL: [Switch; 3] = [
        Switch::RtoToWfh,
        Switch::WfhToProtocol,
        Switch::ProtocolToRto,
    ];

    pub fn kind(self) -> TransitionKind {
        match self {
            Switch::WfhToProtocol => TransitionKind::Controlled,
            _ => TransitionKind::Autonomous,
        }
    }

    pub fn before(self) -> Phase {
        Phase::ALL[self.ordinal()]
    }

    pub fn after(self) -> Phase {
        Phase::ALL[self.ordinal() + 1]
    }

    pub fn ordinal(self) -> usize {
        match self {
            Switch::RtoToWfh => 0,
            Switch::WfhToProtocol => 1,
            Switch::ProtocolToRto => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Switch::RtoToWfh => "rto->wfh",
            Switch::WfhToProtocol => "wfh->protocol",
            Switch::ProtocolToRto => "protocol->rto",
        }
    }

    pub fn jump(self) -> fn(&[f64]) -> Vec<f64> {
        match self {
            Switch::RtoToWfh => jump_rto_wfh,
            Switch::WfhToProtocol => jump_wfh_protocol,
            Switch::ProtocolToRto => jump_protocol_rto,
        }
    }

    /// Switching manifold `I - threshold`, or `None` for the controlled switch.
    pub fn manifold(self, thresholds: &Thresholds) -> Option<Manifold> {
        let mode = self.before().mode();
        match self {
            Switch::RtoToWfh => Some(Manifold::coordinate(
                "I - I_high",
                mode.state_dim(),
                mode.infectious_index(),
                thresholds.i_high,
                CrossingDirection::Rising,
            )),
            Switch::WfhToProtocol => None,
            Switch::ProtocolToRto => Some(Manifold::coordinate(
                "I - I_low",
                mode.state_dim(),
                mode.infectious_index(),
                thresholds.i_low,
                CrossingDirection::Falling,
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpiParams {
    pub beta_v: f64,
    pub beta_s: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub delta: f64,
    pub omega: f64,
}

impl Default for EpiParams {
    fn default() -> Self {
        Self {
            beta_v: 0.18,
            beta_s: 0.30,
            kappa: 0.20,
            gamma: 0.13,
            delta: 0.18,
            omega: 0.02,
        }
    }
}

/// Running-cost weights of an RTO phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RtoWeights {
    pub a_e: f64,
    pub a_i: f64,
    pub a_j: f64,
    pub b_j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WfhWeights {
    pub a_i: f64,
    pub a_j: f64,
    pub a_hv: f64,
    pub a_hs: f64,
    pub c: f64,
    pub b_j: f64,
    pub b_sigma_v: f64,
    pub b_sigma_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolWeights {
    pub a_i: f64,
    pub a_j: f64,
    pub a_hs: f64,
    pub c: f64,
    pub b_j: f64,
    pub b_v: f64,
    pub b_sigma_s: f64,
}

/// Phase-dependent cost weights. Defaults reproduce the reference weight table;
/// entries absent there (e.g. `a_e` outside the final RTO phase) are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseWeights {
    pub rto_first: RtoWeights,
    pub wfh: WfhWeights,
    pub protocol: ProtocolWeights,
    pub rto_final: RtoWeights,
}

impl Default for PhaseWeights {
    fn default() -> Self {
        Self {
            rto_first: RtoWeights {
                a_e: 0.0,
                a_i: 400.0,
                a_j: 120.0,
                b_j: 100.0,
            },
            wfh: WfhWeights {
                a_i: 1200.0,
                a_j: 150.0,
                a_hv: 40.0,
                a_hs: 60.0,
                c: 5.0,
                b_j: 100.0,
                b_sigma_v: 200.0,
                b_sigma_s: 180.0,
            },
            protocol: ProtocolWeights {
                a_i: 1100.0,
                a_j: 140.0,
                a_hs: 80.0,
                c: 2.5,
                b_j: 100.0,
                b_v: 160.0,
                b_sigma_s: 120.0,
            },
            rto_final: RtoWeights {
                a_e: 100.0,
                a_i: 950.0,
                a_j: 100.0,
                b_j: 60.0,
            },
        }
    }
}

impl PhaseWeights {
    pub fn rto(&self, phase: Phase) -> &RtoWeights {
        match phase {
            Phase::RtoFinal => &self.rto_final,
            _ => &self.rto_first,
        }
    }

    /// Every state/constant weight set to zero; control penalties kept
    /// (they must stay positive for the minimizer).
    pub fn without_state_costs(&self) -> Self {
        let mut w = *self;
        for r in [&mut w.rto_first, &mut w.rto_final] {
            r.a_e = 0.0;
            r.a_i = 0.0;
            r.a_j = 0.0;
        }
        w.wfh.a_i = 0.0;
        w.wfh.a_j = 0.0;
        w.wfh.a_hv = 0.0;
        w.wfh.a_hs = 0.0;
        w.wfh.c = 0.0;
        w.protocol.a_i = 0.0;
        w.protocol.a_j = 0.0;
        w.protocol.a_hs = 0.0;
        w.protocol.c = 0.0;
        w
    }

    /// Named list of all weights, used for validation messages.
    pub fn entries(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (name, r) in [
            ("rto_first", &self.rto_first),
            ("rto_final", &self.rto_final),
        ] {
            out.push((format!("{name}.a_e"), r.a_e));
            out.push((format!("{name}.a_i"), r.a_i));
            out.push((format!("{name}.a_j"), r.a_j));
            out.push((format!("{name}.b_j"), r.b_j));
        }
        let w = &self.wfh;
        out.extend([
            ("wfh.a_i".into(), w.a_i),
            ("wfh.a_j".into(), w.a_j),
            ("wfh.a_hv".into(), w.a_hv),
            ("wfh.a_hs".into(), w.a_hs),
            ("wfh.c".into(), w.c),
            ("wfh.b_j".into(), w.b_j),
            ("wfh.b_sigma_v".into(), w.b_sigma_v),
            ("wfh.b_sigma_s".into(), w.b_sigma_s),
        ]);
        let p = &self.protocol;
        out.extend([
            ("protocol.a_i".into(), p.a_i),
            ("protocol.a_j".into(), p.a_j),
            ("protocol.a_hs".into(), p.a_hs),
            ("protocol.c".into(), p.c),
            ("protocol.b_j".into(), p.b_j),
            ("protocol.b_v".into(), p.b_v),
            ("protocol.b_sigma_s".into(), p.b_sigma_s),
        ]);
        out
    }

    /// Violations: negative weights and non-positive control penalties.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        for (name, v) in self.entries() {
            let is_penalty = name.contains(".b_");
            if !v.is_finite() || v < 0.0 {
                issues.push(format!(
                    "weights.{name} must be finite and nonnegative (got {v})"
                ));
            } else if is_penalty && v <= 0.0 {
                issues.push(format!(
                    "weights.{name} must be strictly positive (got {v})"
                ));
            }
        }
        issues
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalWeights {
    pub k_e: f64,
    pub k_i: f64,
    pub k_j: f64,
}

impl Default for TerminalWeights {
    fn default() -> Self {
        Self {
            k_e: 1500.0,
            k_i: 2000.0,
            k_j: 800.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RtoBounds {
    pub u_j_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WfhBounds {
    pub u_j_max: f64,
    pub u_sigma_v_max: f64,
    pub u_sigma_s_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolBounds {
    pub u_j_max: f64,
    pub u_v_max: f64,
    pub u_sigma_s_max: f64,
}

/// Control maxima per phase; every lower bound is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub rto_first: RtoBounds,
    pub wfh: WfhBounds,
    pub protocol: ProtocolBounds,
    pub rto_final: RtoBounds,
}

impl Default for ControlBounds {
    fn default() -> Self {
        Self {
            rto_first: RtoBounds { u_j_max: 0.04 },
            wfh: WfhBounds {
                u_j_max: 0.04,
                u_sigma_v_max: 0.25,
                u_sigma_s_max: 0.25,
            },
            protocol: ProtocolBounds {
                u_j_max: 0.04,
                u_v_max: 0.05,
                u_sigma_s_max: 0.1,
            },
            rto_final: RtoBounds { u_j_max: 0.04 },
        }
    }
}

impl ControlBounds {
    /// Upper bounds in the control order of `phase`'s mode.
    pub fn upper(&self, phase: Phase) -> Vec<f64> {
        match phase {
            Phase::RtoFirst => vec![self.rto_first.u_j_max],
            Phase::RtoFinal => vec![self.rto_final.u_j_max],
            Phase::Wfh => vec![
                self.wfh.u_j_max,
                self.wfh.u_sigma_v_max,
                self.wfh.u_sigma_s_max,
            ],
            Phase::Protocol => vec![
                self.protocol.u_j_max,
                self.protocol.u_v_max,
                self.protocol.u_sigma_s_max,
            ],
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        for phase in Phase::ALL {
            for (c, v) in phase.mode().controls().iter().zip(self.upper(phase)) {
                if !(v.is_finite() && v > 0.0) {
                    issues.push(format!(
                        "bounds.{}.{}_max must be strictly positive (got {v})",
                        phase_key(phase),
                        c.label()
                    ));
                }
            }
        }
        issues
    }
}

pub(crate) fn phase_key(phase: Phase) -> &'static str {
    match phase {
        Phase::RtoFirst => "rto_first",
        Phase::Wfh => "wfh",
        Phase::Protocol => "protocol",
        Phase::RtoFinal => "rto_final",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub i_high: f64,
    pub i_low: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            i_high: 0.043,
            i_low: 0.033,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub t0: f64,
    pub tf: f64,
}

impl Default for Horizon {
    fn default() -> Self {
        Self { t0: 0.0, tf: 40.0 }
    }
}

/// Everything needed to pose the hybrid optimal control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct EpiModel {
    pub params: EpiParams,
    pub weights: PhaseWeights,
    pub terminal: TerminalWeights,
    pub bounds: ControlBounds,
    pub thresholds: Thresholds,
    pub horizon: Horizon,
    /// Initial RTO state `[V, S, E, I, J, R]`.
    pub x0: [f64; 6],
}

pub const REFERENCE_X0: [f64; 6] = [0.10, 0.74, 0.05, 0.01, 0.05, 0.05];

impl Default for EpiModel {
    fn default() -> Self {
        Self {
            params: EpiParams::default(),
            weights: PhaseWeights::default(),
            terminal: TerminalWeights::default(),
            bounds: ControlBounds::default(),
            thresholds: Thresholds::default(),
            horizon: Horizon::default(),
            x0: REFERENCE_X0,
        }
    }
}

impl EpiModel {
    /// All violated invariants, as human-readable messages naming the field.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        let p = &self.params;
        for (name, v) in [
            ("beta_v", p.beta_v),
            ("beta_s", p.beta_s),
            ("kappa", p.kappa),
            ("gamma", p.gamma),
            ("delta", p.delta),
            ("omega", p.omega),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                issues.push(format!(
                    "params.{name} must be finite and nonnegative (got {v})"
                ));
            }
        }
        issues.extend(self.weights.validate());
        for (name, v) in [
            ("k_e", self.terminal.k_e),
            ("k_i", self.terminal.k_i),
            ("k_j", self.terminal.k_j),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                issues.push(format!(
                    "terminal.{name} must be finite and nonnegative (got {v})"
                ));
            }
        }
        issues.extend(self.bounds.validate());
        let th = &self.thresholds;
        if !(0.0 < th.i_low && th.i_low < th.i_high && th.i_high < 1.0) {
            issues.push(format!(
                "thresholds must satisfy 0 < i_low < i_high < 1 (got i_low = {}, i_high = {})",
                th.i_low, th.i_high
            ));
        }
        let hz = &self.horizon;
        if !(hz.t0.is_finite() && hz.tf.is_finite() && hz.t0 < hz.tf) {
            issues.push(format!(
                "horizon must satisfy t0 < tf (got {} .. {})",
                hz.t0, hz.tf
            ));
        }
        let sum: f64 = self.x0.iter().sum();
        if self.x0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            issues.push(format!(
                "x0 components must be nonnegative and sum to 1 (sum = {sum})"
            ));
        }
        issues
    }

    pub fn transition(&self, switch: Switch) -> TransitionSpec {
        TransitionSpec {
            name: switch.label().to_string(),
            from: switch.before().mode().id(),
            to: switch.after().mode().id(),
            kind: switch.kind(),
            jump: switch.jump(),
            manifold: switch.manifold(&self.thresholds),
        }
    }

    /// Hybrid-system description of the model: three modes and the
    /// scheduled cycle rto -> wfh -> protocol -> rto.
    pub fn hybrid_system(&self) -> HybridSystemDefinition {
        let modes = Mode::ALL
            .iter()
            .map(|&mode| {
                let phase = match mode {
                    Mode::Rto => Phase::RtoFirst,
                    Mode::Wfh => Phase::Wfh,
                    Mode::Protocol => Phase::Protocol,
                };
                ModeSpec {
                    mode: ModeId::new(mode.id(), mode.label()),
                    state_dim: mode.state_dim(),
                    control_dim: mode.control_dim(),
                    control_lower: vec![0.0; mode.control_dim()],
                    control_upper: self.bounds.upper(phase),
                    state_labels: mode
                        .layout()
                        .iter()
                        .map(|c| c.label().to_string())
                        .collect(),
                }
            })
            .collect();
        HybridSystemDefinition {
            modes,
            transitions: Switch::ALL.iter().map(|&s| self.transition(s)).collect(),
        }
    }
}

fn check_dim(context: &'static str, expected: usize, got: usize) {
    assert_eq!(
        expected, got,
        "{context}: expected {expected} components, got {got}"
    );
}

/// RTO vector field.
pub fn f_rto(x: &[f64], u_j: f64, p: &EpiParams) -> [f64; 6] {
    check_dim("f_rto", rto::DIM, x.len());
    let (v, s, e, i, j, r) = (x[0], x[1], x[2], x[3], x[4], x[5]);
    [
        -p.beta_v * v * i,
        -p.beta_s * s * i + p.omega * r,
        p.beta_v * v * i + p.beta_s * s * i - p.kappa * e,
        p.kappa * e - p.gamma * i - u_j * i,
        u_j * i - p.delta * j,
        p.gamma * i + p.delta * j - p.omega * r,
    ]
}

/// WFH vector field, `u = [u_j, u_sigma_v, u_sigma_s]`.
pub fn f_wfh(x: &[f64], u: &[f64], p: &EpiParams) -> [f64; 8] {
    check_dim("f_wfh", wfh::DIM, x.len());
    check_dim("f_wfh controls", 3, u.len());
    let (v, s, e, i, j, r) = (x[2], x[3], x[4], x[5], x[6], x[7]);
    let (u_j, u_sv, u_ss) = (u[0], u[1], u[2]);
    [
        u_sv * v,
        u_ss * s,
        -p.beta_v * v * i - u_sv * v,
        -p.beta_s * s * i - u_ss * s + p.omega * r,
        p.beta_v * v * i + p.beta_s * s * i - p.kappa * e,
        p.kappa * e - p.gamma * i - u_j * i,
        u_j * i - p.delta * j,
        p.gamma * i + p.delta * j - p.omega * r,
    ]
}

/// Vaccination-protocol vector field, `u = [u_j, u_v, u_sigma_s]`.
pub fn f_protocol(x: &[f64], u: &[f64], p: &EpiParams) -> [f64; 7] {
    check_dim("f_protocol", protocol::DIM, x.len());
    check_dim("f_protocol controls", 3, u.len());
    let (hs, v, s, e, i, j, r) = (x[0], x[1], x[2], x[3], x[4], x[5], x[6]);
    let (u_j, u_v, u_ss) = (u[0], u[1], u[2]);
    [
        u_ss * s - u_v * hs,
        -p.beta_v * v * i + u_v * hs,
        -p.beta_s * s * i - u_ss * s + p.omega * r,
        p.beta_v * v * i + p.beta_s * s * i - p.kappa * e,
        p.kappa * e - p.gamma * i - u_j * i,
        u_j * i - p.delta * j,
        p.gamma * i + p.delta * j - p.omega * r,
    ]
}

pub fn vector_field(mode: Mode, x: &[f64], u: &[f64], p: &EpiParams) -> Vec<f64> {
    match mode {
        Mode::Rto => {
            check_dim("f_rto controls", 1, u.len());
            f_rto(x, u[0], p).to_vec()
        }
        Mode::Wfh => f_wfh(x, u, p).to_vec(),
        Mode::Protocol => f_protocol(x, u, p).to_vec(),
    }
}

pub fn jump_rto_wfh(x: &[f64]) -> Vec<f64> {
    check_dim("jump rto->wfh", rto::DIM, x.len());
    let mut out = Vec::with_capacity(wfh::DIM);
    out.extend([0.0, 0.0]);
    out.extend_from_slice(x);
    out
}

pub fn jump_wfh_protocol(x: &[f64]) -> Vec<f64> {
    check_dim("jump wfh->protocol", wfh::DIM, x.len());
    vec![
        x[wfh::HS],
        x[wfh::V] + x[wfh::HV],
        x[wfh::S],
        x[wfh::E],
        x[wfh::I],
        x[wfh::J],
        x[wfh::R],
    ]
}

pub fn jump_protocol_rto(x: &[f64]) -> Vec<f64> {
    check_dim("jump protocol->rto", protocol::DIM, x.len());
    vec![
        x[protocol::V],
        x[protocol::S] + x[protocol::HS],
        x[protocol::E],
        x[protocol::I],
        x[protocol::J],
        x[protocol::R],
    ]
}

/// Running cost of `phase` at state `x` under control `u`.
pub fn running_cost(phase: Phase, x: &[f64], u: &[f64], w: &PhaseWeights) -> f64 {
    let mode = phase.mode();
    check_dim("running_cost", mode.state_dim(), x.len());
    check_dim("running_cost controls", mode.control_dim(), u.len());
    match phase {
        Phase::RtoFirst | Phase::RtoFinal => {
            let w = w.rto(phase);
            w.a_e * x[rto::E] + w.a_i * x[rto::I] + w.a_j * x[rto::J] + w.b_j * u[0] * u[0]
        }
        Phase::Wfh => {
            let w = &w.wfh;
            w.a_i * x[wfh::I]
                + w.a_j * x[wfh::J]
                + w.a_hv * x[wfh::HV]
                + w.a_hs * x[wfh::HS]
                + w.c
                + w.b_j * u[0] * u[0]
                + w.b_sigma_v * u[1] * u[1]
                + w.b_sigma_s * u[2] * u[2]
        }
        Phase::Protocol => {
            let w = &w.protocol;
            w.a_i * x[protocol::I]
                + w.a_j * x[protocol::J]
                + w.a_hs * x[protocol::HS]
                + w.c
                + w.b_j * u[0] * u[0]
                + w.b_v * u[1] * u[1]
                + w.b_sigma_s * u[2] * u[2]
        }
    }
}

/// Terminal cost `k_E E + k_I I + k_J J` on an RTO state.
pub fn terminal_cost(x: &[f64], k: &TerminalWeights) -> f64 {
    check_dim("terminal_cost", rto::DIM, x.len());
    k.k_e * x[rto::E] + k.k_i * x[rto::I] + k.k_j * x[rto::J]
}

/// `H = l(x, u) + lambda' f(x, u)`.
pub fn hamiltonian(
    phase: Phase,
    x: &[f64],
    lambda: &[f64],
    u: &[f64],
    p: &EpiParams,
    w: &PhaseWeights,
) -> f64 {
    let f = vector_field(phase.mode(), x, u, p);
    check_dim("hamiltonian costate", f.len(), lambda.len());
    running_cost(phase, x, u, w) + dot(lambda, &f)
}

fn clip(value: f64, upper: f64) -> f64 {
    value.max(0.0).min(upper)
}

/// Pointwise Hamiltonian minimizer: stationary point of the quadratic-in-u
/// Hamiltonian, clipped componentwise to `[0, u_max]`.
pub fn minimize_control(
    phase: Phase,
    x: &[f64],
    lambda: &[f64],
    w: &PhaseWeights,
    bounds: &ControlBounds,
) -> Vec<f64> {
    let mode = phase.mode();
    check_dim("minimize_control", mode.state_dim(), x.len());
    check_dim("minimize_control costate", mode.state_dim(), lambda.len());
    let upper = bounds.upper(phase);
    match phase {
        Phase::RtoFirst | Phase::RtoFinal => {
            let b_j = w.rto(phase).b_j;
            let u_j = (lambda[rto::I] - lambda[rto::J]) * x[rto::I] / (2.0 * b_j);
            vec![clip(u_j, upper[0])]
        }
        Phase::Wfh => {
            let w = &w.wfh;
            let u_j = (lambda[wfh::I] - lambda[wfh::J]) * x[wfh::I] / (2.0 * w.b_j);
            let u_sv = (lambda[wfh::V] - lambda[wfh::HV]) * x[wfh::V] / (2.0 * w.b_sigma_v);
            let u_ss = (lambda[wfh::S] - lambda[wfh::HS]) * x[wfh::S] / (2.0 * w.b_sigma_s);
            vec![
                clip(u_j, upper[0]),
                clip(u_sv, upper[1]),
                clip(u_ss, upper[2]),
            ]
        }
        Phase::Protocol => {
            let w = &w.protocol;
            let u_j = (lambda[protocol::I] - lambda[protocol::J]) * x[protocol::I] / (2.0 * w.b_j);
            let u_v =
                (lambda[protocol::HS] - lambda[protocol::V]) * x[protocol::HS] / (2.0 * w.b_v);
            let u_ss =
                (lambda[protocol::S] - lambda[protocol::HS]) * x[protocol::S] / (2.0 * w.b_sigma_s);
            vec![
                clip(u_j, upper[0]),
                clip(u_v, upper[1]),
                clip(u_ss, upper[2]),
            ]
        }
    }
}

/// Costate dynamics `-dH/dx` for the applied control `u`.
pub fn adjoint_rhs(
    phase: Phase,
    x: &[f64],
    lambda: &[f64],
    u: &[f64],
    p: &EpiParams,
    w: &PhaseWeights,
) -> Vec<f64> {
    let mode = phase.mode();
    check_dim("adjoint_rhs", mode.state_dim(), x.len());
    check_dim("adjoint_rhs costate", mode.state_dim(), lambda.len());
    check_dim("adjoint_rhs controls", mode.control_dim(), u.len());
    let EpiParams {
        beta_v,
        beta_s,
        kappa,
        gamma,
        delta,
        omega,
    } = *p;
    match phase {
        Phase::RtoFirst | Phase::RtoFinal => {
            use rto::*;
            let w = w.rto(phase);
            let l = lambda;
            let u_j = u[0];
            vec![
                beta_v * x[I] * (l[V] - l[E]),
                beta_s * x[I] * (l[S] - l[E]),
                -w.a_e + kappa * (l[E] - l[I]),
                -w.a_i
                    + beta_v * x[V] * (l[V] - l[E])
                    + beta_s * x[S] * (l[S] - l[E])
                    + (gamma + u_j) * l[I]
                    - u_j * l[J]
                    - gamma * l[R],
                -w.a_j + delta * (l[J] - l[R]),
                omega * (l[R] - l[S]),
            ]
        }
        Phase::Wfh => {
            use wfh::*;
            let w = &w.wfh;
            let l = lambda;
            let (u_j, u_sv, u_ss) = (u[0], u[1], u[2]);
            vec![
                -w.a_hv,
                -w.a_hs,
                beta_v * x[I] * (l[V] - l[E]) + u_sv * (l[V] - l[HV]),
                beta_s * x[I] * (l[S] - l[E]) + u_ss * (l[S] - l[HS]),
                kappa * (l[E] - l[I]),
                -w.a_i
                    + beta_v * x[V] * (l[V] - l[E])
                    + beta_s * x[S] * (l[S] - l[E])
                    + (gamma + u_j) * l[I]
                    - u_j * l[J]
                    - gamma * l[R],
                -w.a_j + delta * (l[J] - l[R]),
                omega * (l[R] - l[S]),
            ]
        }
        Phase::Protocol => {
            use protocol::*;
            let w = &w.protocol;
            let l = lambda;
            let (u_j, u_v, u_ss) = (u[0], u[1], u[2]);
            vec![
                -w.a_hs + u_v * (l[HS] - l[V]),
                beta_v * x[I] * (l[V] - l[E]),
                beta_s * x[I] * (l[S] - l[E]) + u_ss * (l[S] - l[HS]),
                kappa * (l[E] - l[I]),
                -w.a_i
                    + beta_v * x[V] * (l[V] - l[E])
                    + beta_s * x[S] * (l[S] - l[E])
                    + (gamma + u_j) * l[I]
                    - u_j * l[J]
                    - gamma * l[R],
                -w.a_j + delta * (l[J] - l[R]),
                omega * (l[R] - l[S]),
            ]
        }
    }
}

/// Pre-switch costate from the post-switch costate: the transposed jump
/// Jacobian applied to `lambda_plus`, plus `p` times the manifold gradient.
pub fn adjoint_jump(switch: Switch, lambda_plus: &[f64], p: f64) -> Result<Vec<f64>> {
    let after = switch.after().mode();
    if lambda_plus.len() != after.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "adjoint_jump",
            expected: after.state_dim(),
            got: lambda_plus.len(),
        });
    }
    let l = lambda_plus;
    let out = match switch {
        Switch::RtoToWfh => {
            let mut pre = l[wfh::V..].to_vec();
            pre[rto::I] += p;
            pre
        }
        Switch::WfhToProtocol => {
            if p != 0.0 {
                return Err(Error::MultiplierOnControlled {
                    transition: switch.label().to_string(),
                    value: p,
                });
            }
            vec![
                l[protocol::V],
                l[protocol::HS],
                l[protocol::V],
                l[protocol::S],
                l[protocol::E],
                l[protocol::I],
                l[protocol::J],
                l[protocol::R],
            ]
        }
        Switch::ProtocolToRto => {
            let mut pre = vec![
                l[rto::S],
                l[rto::V],
                l[rto::S],
                l[rto::E],
                l[rto::I],
                l[rto::J],
                l[rto::R],
            ];
            pre[protocol::I] += p;
            pre
        }
    };
    Ok(out)
}

/// Gradient of the terminal cost; independent of the terminal state.
pub fn terminal_costate(x_f: &[f64], k: &TerminalWeights) -> Vec<f64> {
    check_dim("terminal_costate", rto::DIM, x_f.len());
    vec![0.0, 0.0, k.k_e, k.k_i, k.k_j, 0.0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> EpiParams {
        EpiParams::default()
    }

    #[test]
    fn rto_field_at_reference_state() {
        let f = f_rto(&REFERENCE_X0, 0.0, &params());
        // Hand evaluation of each flow term at x0 with the reference rates.
        let expected = [-0.00018, -0.00122, -0.0076, 0.0087, -0.009, 0.0093];
        for (a, b) in f.iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn rto_field_without_infection() {
        let x = [0.2, 0.3, 0.1, 0.0, 0.15, 0.25];
        let p = params();
        let f = f_rto(&x, 0.0, &p);
        assert_eq!(f[rto::V], 0.0);
        assert_relative_eq!(f[rto::S], p.omega * 0.25);
        assert_relative_eq!(f[rto::E], -p.kappa * 0.1);
        assert_relative_eq!(f[rto::I], p.kappa * 0.1);
        assert_relative_eq!(f[rto::J], -p.delta * 0.15);
        assert_relative_eq!(f[rto::R], p.delta * 0.15 - p.omega * 0.25);
    }

    #[test]
    fn wfh_field_reduces_to_rto_without_controls() {
        let x6 = REFERENCE_X0;
        let x8 = jump_rto_wfh(&x6);
        let p = params();
        let f6 = f_rto(&x6, 0.0, &p);
        let f8 = f_wfh(&x8, &[0.0, 0.0, 0.0], &p);
        assert_eq!(f8[wfh::HV], 0.0);
        assert_eq!(f8[wfh::HS], 0.0);
        assert_eq!(&f8[2..], &f6[..]);
    }

    #[test]
    fn wfh_vaccinated_flow() {
        let mut x = [0.0; 8];
        x[wfh::V] = 0.1;
        let f = f_wfh(&x, &[0.0, 0.25, 0.0], &params());
        assert_relative_eq!(f[wfh::HV], 0.025);
    }

    #[test]
    fn protocol_vaccination_transfer() {
        let mut x = [0.0; 7];
        x[protocol::HS] = 0.2;
        let f = f_protocol(&x, &[0.0, 0.05, 0.0], &params());
        assert_relative_eq!(f[protocol::HS], -0.01);
        assert_relative_eq!(f[protocol::V], 0.01);

        let f0 = f_protocol(&x, &[0.0, 0.0, 0.0], &params());
        assert_eq!(f0[protocol::HS], 0.0);
    }

    #[test]
    fn jump_examples() {
        let x = [0.1, 0.74, 0.05, 0.01, 0.05, 0.05];
        assert_eq!(
            jump_rto_wfh(&x),
            vec![0.0, 0.0, 0.1, 0.74, 0.05, 0.01, 0.05, 0.05]
        );

        let mut x2 = [0.0; 8];
        x2[wfh::V] = 0.1;
        x2[wfh::HV] = 0.2;
        assert_relative_eq!(jump_wfh_protocol(&x2)[protocol::V], 0.3, epsilon = 1e-15);

        let mut x3 = [0.0; 7];
        x3[protocol::S] = 0.25;
        x3[protocol::HS] = 0.15;
        assert_relative_eq!(jump_protocol_rto(&x3)[rto::S], 0.40, epsilon = 1e-15);
    }

    #[test]
    fn running_cost_examples() {
        let w = PhaseWeights::default();
        assert_relative_eq!(
            running_cost(Phase::RtoFirst, &REFERENCE_X0, &[0.0], &w),
            10.0,
            epsilon = 1e-12
        );
        assert_eq!(running_cost(Phase::Wfh, &[0.0; 8], &[0.0; 3], &w), 5.0);
        assert_relative_eq!(
            running_cost(Phase::RtoFinal, &[0.0; 6], &[0.04], &w),
            0.096,
            epsilon = 1e-15
        );
    }

    #[test]
    fn terminal_cost_examples() {
        let k = TerminalWeights::default();
        let x = [0.234, 0.490, 0.030, 0.033, 0.007, 0.206];
        assert_relative_eq!(terminal_cost(&x, &k), 116.6, epsilon = 1e-12);
        assert_eq!(terminal_cost(&[0.0; 6], &k), 0.0);
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert_relative_eq!(
            terminal_cost(&x2, &k),
            2.0 * terminal_cost(&x, &k),
            epsilon = 1e-12
        );
    }

    #[test]
    fn minimizer_examples() {
        let mut w = PhaseWeights::default();
        w.rto_first.b_j = 100.0;
        let b = ControlBounds::default();
        let mut x = [0.0; 6];
        x[rto::I] = 0.05;
        let mut l = [0.0; 6];
        l[rto::I] = 10.0;
        assert_relative_eq!(minimize_control(Phase::RtoFirst, &x, &l, &w, &b)[0], 0.0025);
        l[rto::I] = 400.0;
        assert_eq!(minimize_control(Phase::RtoFirst, &x, &l, &w, &b)[0], 0.04);
        l[rto::I] = -3.0;
        assert_eq!(minimize_control(Phase::RtoFirst, &x, &l, &w, &b)[0], 0.0);
    }

    #[test]
    fn wfh_pool_costate_slope_is_constant() {
        let w = PhaseWeights::default();
        let x = [0.3, 0.1, 0.2, 0.1, 0.1, 0.05, 0.05, 0.1];
        let l = [1.0, -2.0, 3.0, 0.5, 7.0, 9.0, 1.0, 0.0];
        let d = adjoint_rhs(Phase::Wfh, &x, &l, &[0.01, 0.2, 0.1], &params(), &w);
        assert_eq!(d[wfh::HV], -40.0);
        assert_eq!(d[wfh::HS], -60.0);
    }

    #[test]
    fn rto_costate_without_infection() {
        let w = PhaseWeights::default();
        let x = [0.2, 0.3, 0.1, 0.0, 0.15, 0.25];
        let l = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let d = adjoint_rhs(Phase::RtoFirst, &x, &l, &[0.0], &params(), &w);
        assert_eq!(d[rto::V], 0.0);
        assert_eq!(d[rto::S], 0.0);
    }

    #[test]
    fn adjoint_jump_examples() {
        let plus = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        assert_eq!(
            adjoint_jump(Switch::WfhToProtocol, &plus, 0.0).unwrap(),
            vec![3.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
        );
        assert!(matches!(
            adjoint_jump(Switch::WfhToProtocol, &plus, 1.0),
            Err(Error::MultiplierOnControlled { .. })
        ));

        let plus8 = [9.0, 8.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(
            adjoint_jump(Switch::RtoToWfh, &plus8, 0.0).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        );

        let pre = adjoint_jump(Switch::ProtocolToRto, &[0.0; 6], 1.0).unwrap();
        assert_eq!(pre, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);

        assert!(adjoint_jump(Switch::ProtocolToRto, &[0.0; 7], 1.0).is_err());
    }

    #[test]
    fn terminal_costate_examples() {
        let k = TerminalWeights::default();
        assert_eq!(
            terminal_costate(&REFERENCE_X0, &k),
            vec![0.0, 0.0, 1500.0, 2000.0, 800.0, 0.0]
        );
        let zero = TerminalWeights {
            k_e: 0.0,
            k_i: 0.0,
            k_j: 0.0,
        };
        assert_eq!(terminal_costate(&[0.3; 6], &zero), vec![0.0; 6]);
        assert_eq!(
            terminal_costate(&[0.3; 6], &k),
            terminal_costate(&[0.0; 6], &k)
        );
    }

    #[test]
    fn hamiltonian_reduces_to_parts() {
        let w = PhaseWeights::default();
        let p = params();
        let x = REFERENCE_X0;
        let u = [0.01];
        assert_eq!(
            hamiltonian(Phase::RtoFirst, &x, &[0.0; 6], &u, &p, &w),
            running_cost(Phase::RtoFirst, &x, &u, &w)
        );
        let zero_w = PhaseWeights {
            rto_first: RtoWeights {
                a_e: 0.0,
                a_i: 0.0,
                a_j: 0.0,
                b_j: 1.0,
            },
            ..w
        };
        let l = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let f = f_rto(&x, 0.0, &p);
        assert_relative_eq!(
            hamiltonian(Phase::RtoFirst, &x, &l, &[0.0], &p, &zero_w),
            dot(&l, &f),
            epsilon = 1e-15
        );
    }

    #[test]
    fn reference_model_is_valid() {
        let m = EpiModel::default();
        assert!(m.validate().is_empty());
        let mut bad = m.clone();
        bad.weights.wfh.b_sigma_v = 0.0;
        assert_eq!(bad.validate().len(), 1);
        assert!(bad.validate()[0].contains("wfh.b_sigma_v"));
    }

    #[test]
    fn compartment_bookkeeping() {
        assert_eq!(Mode::Wfh.index_of(Compartment::I), Some(wfh::I));
        assert_eq!(Mode::Protocol.index_of(Compartment::Hv), None);
        assert_eq!(Mode::Rto.infectious_index(), rto::I);
        assert_eq!(Compartment::from_label("h_s"), Some(Compartment::Hs));
    }
}
