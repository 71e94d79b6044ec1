//! Current saturation algorithms and the saturation-mode state machine.
//!
//! The clamped PI loops are modelled algebraically: while saturated, each
//! voltage error contributes sgn(v_ref - v) * u_max on top of the previous
//! current, and the limiter maps that back onto the I_max circle.

use std::fmt;
use std::str::FromStr;

use crate::analytic::{delta_exit_q, exit_angle_set};
use crate::phasor::{normalize_deg, wrap180, DqPair, Network, SystemParams};

/// Remaining angle below which the saturation transient snaps to its target (deg).
const SETTLE_SNAP_DEG: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CsaKind {
    None,
    Circular,
    DPriority,
    QPriority,
    /// Fixed saturated current angle beta (deg).
    ConstantAngle { beta: f64 },
}

impl CsaKind {
    pub const NAMES: [&'static str; 5] = ["none", "circular", "d_priority", "q_priority", "constant_angle"];

    pub fn name(&self) -> &'static str {
        match self {
            CsaKind::None => "none",
            CsaKind::Circular => "circular",
            CsaKind::DPriority => "d_priority",
            CsaKind::QPriority => "q_priority",
            CsaKind::ConstantAngle { .. } => "constant_angle",
        }
    }

    /// Applies the limiter to a reference. ConstantAngle only acts when saturating.
    pub fn limit(&self, reference: DqPair, i_max: f64) -> DqPair {
        match *self {
            CsaKind::None => reference,
            CsaKind::Circular => limit_circular(reference, i_max),
            CsaKind::DPriority => limit_d_priority(reference, i_max),
            CsaKind::QPriority => limit_q_priority(reference, i_max),
            CsaKind::ConstantAngle { beta } => {
                limit_constant(reference, i_max, beta, entering_condition(reference, i_max))
            }
        }
    }
}

impl fmt::Display for CsaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CsaKind::ConstantAngle { beta } => write!(f, "constant_angle({beta})"),
            k => f.write_str(k.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("unknown CSA kind `{0}` (valid: none, circular, d_priority, q_priority, constant_angle)")]
pub struct UnknownCsa(pub String);

impl FromStr for CsaKind {
    type Err = UnknownCsa;

    /// Parses the kind name; constant_angle starts at beta = 0 until configured.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(CsaKind::None),
            "circular" => Ok(CsaKind::Circular),
            "d_priority" | "d-priority" | "dpriority" => Ok(CsaKind::DPriority),
            "q_priority" | "q-priority" | "qpriority" => Ok(CsaKind::QPriority),
            "constant_angle" | "constant-angle" | "constant" => Ok(CsaKind::ConstantAngle { beta: 0.0 }),
            _ => Err(UnknownCsa(s.to_string())),
        }
    }
}

pub fn limit_circular(reference: DqPair, i_max: f64) -> DqPair {
    let m = reference.magnitude();
    if m <= i_max {
        reference
    } else {
        reference.scale(i_max / m)
    }
}

pub fn limit_d_priority(reference: DqPair, i_max: f64) -> DqPair {
    let d = reference.d.clamp(-i_max, i_max);
    let room = (i_max * i_max - d * d).max(0.0).sqrt();
    DqPair::new(d, reference.q.clamp(-room, room))
}

pub fn limit_q_priority(reference: DqPair, i_max: f64) -> DqPair {
    let q = reference.q.clamp(-i_max, i_max);
    let room = (i_max * i_max - q * q).max(0.0).sqrt();
    DqPair::new(reference.d.clamp(-room, room), q)
}

pub fn limit_constant(reference: DqPair, i_max: f64, beta: f64, saturating: bool) -> DqPair {
    if saturating {
        DqPair::polar(i_max, beta)
    } else {
        reference
    }
}

/// Strict over-limit test on a current reference.
pub fn entering_condition(reference: DqPair, i_max: f64) -> bool {
    reference.d * reference.d + reference.q * reference.q > i_max * i_max
}

/// Pre-limiter reference with both PI outputs sitting on their clamps.
pub fn saturated_reference(state: &LimiterState, i_prev: DqPair, u_max: f64) -> DqPair {
    DqPair::new(state.sign_ud * u_max + i_prev.d, state.sign_uq * u_max + i_prev.q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimiterState {
    pub saturated: bool,
    /// Saturated current angle (deg), meaningful only when saturated.
    pub theta_i: f64,
    pub sign_ud: f64,
    pub sign_uq: f64,
    pub forced_q: bool,
    /// True while the entry transient is still rotating theta_i towards its target.
    pub settling: bool,
    /// Current applied during the last step.
    pub current: DqPair,
}

impl Default for LimiterState {
    fn default() -> Self {
        LimiterState {
            saturated: false,
            theta_i: 0.0,
            sign_ud: 1.0,
            sign_uq: 1.0,
            forced_q: false,
            settling: false,
            current: DqPair::ZERO,
        }
    }
}

/// Outcome of the saturated-mode exit test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExitCheck {
    Exit,
    Remain,
    /// q-priority forced window: stay saturated with this q current.
    Forced { i_q: f64 },
}

/// Exit test for a saturated inverter on the healthy network.
pub fn exit_condition(kind: CsaKind, delta: f64, params: &SystemParams, state: &LimiterState) -> ExitCheck {
    debug_assert!(state.saturated || kind == CsaKind::None);
    let a = normalize_deg(delta);
    if kind == CsaKind::QPriority {
        if let Ok(e) = delta_exit_q(params) {
            if (180.0 - e..=180.0).contains(&a) {
                return ExitCheck::Forced { i_q: params.i_max };
            }
            if a > 180.0 && a <= 180.0 + e {
                return ExitCheck::Forced { i_q: -params.i_max };
            }
        }
    }
    match exit_angle_set(kind, params) {
        Ok(set) if set.contains(a) => ExitCheck::Exit,
        // no exit solution: the governing voltage never reaches its reference
        _ => ExitCheck::Remain,
    }
}

fn sign_or(x: f64, prev: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        prev
    }
}

fn settled_target(kind: CsaKind, state: &LimiterState, i_max: f64) -> DqPair {
    let k = i_max / 2f64.sqrt();
    match kind {
        CsaKind::None => state.current,
        CsaKind::Circular => DqPair::new(state.sign_ud * k, state.sign_uq * k),
        CsaKind::DPriority => DqPair::new(state.sign_ud * i_max, 0.0),
        CsaKind::QPriority => DqPair::new(0.0, state.sign_uq * i_max),
        CsaKind::ConstantAngle { beta } => DqPair::polar(i_max, beta),
    }
}

/// Advances the saturated current one step: updates clamp signs from the
/// voltage error and rotates theta_i towards the settled target.
fn saturated_update(
    mut s: LimiterState,
    kind: CsaKind,
    delta: f64,
    net: &Network,
    dt: f64,
    forced_iq: Option<f64>,
) -> LimiterState {
    let p = net.params();
    let v = net.pcc_voltage(s.current, delta);
    s.sign_ud = sign_or(p.v_d_ref - v.d, s.sign_ud);
    s.sign_uq = sign_or(p.v_q_ref - v.q, s.sign_uq);
    s.forced_q = forced_iq.is_some();
    let target = match forced_iq {
        Some(iq) => DqPair::new(0.0, iq),
        None => settled_target(kind, &s, p.i_max),
    };
    let goal = target.angle_deg();
    if s.settling && p.tau_sat > 0.0 {
        let rem = wrap180(goal - s.theta_i);
        let k = (dt / p.tau_sat).min(1.0);
        if (rem * (1.0 - k)).abs() < SETTLE_SNAP_DEG {
            s.theta_i = goal;
            s.settling = false;
        } else {
            s.theta_i = wrap180(s.theta_i + k * rem);
        }
    } else {
        s.theta_i = goal;
        s.settling = false;
    }
    s.current = DqPair::polar(p.i_max, s.theta_i);
    s.saturated = true;
    s
}

/// One quasi-static step of the limiter on the given network. Returns the new
/// state and the inverter current applied during the step.
pub fn mode_step(state: &LimiterState, kind: CsaKind, delta: f64, net: &Network, dt: f64) -> (LimiterState, DqPair) {
    let p = net.params();
    let demanded = net.demanded_current(delta);

    if kind == CsaKind::None {
        let i = match demanded {
            Some(i) => i,
            // unbounded inverter current: report the grid in-feed instead
            None => net.line_current(net.pcc_voltage(DqPair::ZERO, delta), delta),
        };
        let s = LimiterState { saturated: false, settling: false, theta_i: i.angle_deg(), current: i, ..*state };
        return (s, i);
    }

    if !state.saturated {
        let over = demanded.is_none_or(|i| entering_condition(i, p.i_max));
        if !over {
            let i = demanded.unwrap_or_default();
            let s = LimiterState { current: i, theta_i: i.angle_deg(), forced_q: false, settling: false, ..*state };
            return (s, i);
        }
        let reference = demanded.unwrap_or_else(|| p.v_ref().scale(2.0 * p.i_max / p.v_ref().magnitude().max(1e-12)));
        let initial = match kind {
            CsaKind::ConstantAngle { beta } => DqPair::polar(p.i_max, beta),
            k => k.limit(reference, p.i_max),
        };
        let entered = LimiterState {
            saturated: true,
            theta_i: initial.angle_deg(),
            current: initial,
            settling: true,
            forced_q: false,
            ..*state
        };
        let s = saturated_update(entered, kind, delta, net, dt, None);
        return (s, s.current);
    }

    // saturated
    let check = if net.is_faulted() || matches!(kind, CsaKind::ConstantAngle { .. }) {
        match demanded {
            Some(i) if i.magnitude() < p.i_max => ExitCheck::Exit,
            _ => ExitCheck::Remain,
        }
    } else {
        exit_condition(kind, delta, p, state)
    };
    let guard_ok = demanded.is_some_and(|i| i.magnitude() <= p.i_max);
    match check {
        ExitCheck::Exit if guard_ok => {
            let i = demanded.unwrap_or_default();
            let s = LimiterState {
                saturated: false,
                settling: false,
                forced_q: false,
                theta_i: i.angle_deg(),
                current: i,
                ..*state
            };
            (s, i)
        }
        ExitCheck::Forced { i_q } => {
            let s = saturated_update(*state, kind, delta, net, dt, Some(i_q));
            (s, s.current)
        }
        _ => {
            let s = saturated_update(*state, kind, delta, net, dt, None);
            (s, s.current)
        }
    }
}
