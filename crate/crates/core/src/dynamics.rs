//! Swing-law integration, disturbance events and trace generation.

use std::f64::consts::PI;

use thiserror::Error;

use crate::analytic::exit_angle_set;
use crate::csa::{mode_step, CsaKind, LimiterState};
use crate::phasor::{
    apparent_impedance, normalize_deg, unsaturated_current, DqPair, Impedance, Network, NetworkError, SystemParams,
};
use crate::protection::RelayConfig;

/// Frequency deviation (pu) beyond which the run is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("no stable equilibrium for P0 = {p0} on the unsaturated power curve")]
    NoEquilibrium { p0: f64 },
    #[error("numeric divergence at t = {t:.4} s: frequency deviation {omega_dev:.3e} pu")]
    Divergence { t: f64, omega_dev: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingState {
    /// Power angle (deg), unwrapped.
    pub delta: f64,
    /// Frequency deviation (pu).
    pub omega_dev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    ThreePhaseFault { duration: f64, fault_resistance: f64 },
    /// Grid phase step (deg); the power angle moves by -jump.
    PhaseJump { jump: f64 },
    PowerStep { delta_p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

impl Event {
    /// Time at which the disturbance is over.
    pub fn end_time(&self) -> f64 {
        match self.kind {
            EventKind::ThreePhaseFault { duration, .. } => self.time + duration,
            _ => self.time,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: SystemParams,
    pub csa: CsaKind,
    pub events: Vec<Event>,
    pub t_end: f64,
    pub dt: f64,
    pub relay: RelayConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            params: SystemParams::default(),
            csa: CsaKind::None,
            events: Vec::new(),
            t_end: 10.0,
            dt: 1e-4,
            relay: RelayConfig::default(),
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: String| Err(SimulationError::InvalidScenario(m));
        self.params.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be > 0, got {}", self.t_end));
        }
        if let CsaKind::ConstantAngle { beta } = self.csa {
            if !(beta > -180.0 && beta <= 180.0) {
                return bad(format!("constant_angle beta must lie in (-180, 180], got {beta}"));
            }
        }
        let mut faults = Vec::new();
        for e in &self.events {
            if !(e.time >= 0.0 && e.time.is_finite()) {
                return bad(format!("event time must be >= 0, got {}", e.time));
            }
            if e.time >= self.t_end {
                return bad(format!("event at t = {} is not before t_end = {}", e.time, self.t_end));
            }
            match e.kind {
                EventKind::ThreePhaseFault { duration, fault_resistance } => {
                    if !(duration > 0.0 && duration.is_finite()) {
                        return bad(format!("fault duration must be > 0, got {duration}"));
                    }
                    if !(fault_resistance >= 0.0 && fault_resistance.is_finite()) {
                        return bad(format!("fault resistance must be >= 0, got {fault_resistance}"));
                    }
                    faults.push((e.time, e.time + duration));
                }
                EventKind::PhaseJump { jump } if !jump.is_finite() => return bad("phase jump must be finite".into()),
                EventKind::PowerStep { delta_p } if !delta_p.is_finite() => {
                    return bad("power step must be finite".into())
                }
                _ => {}
            }
        }
        faults.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in faults.windows(2) {
            if w[1].0 < w[0].1 {
                return bad(format!("overlapping faults at t = {} and t = {}", w[0].0, w[1].0));
            }
        }
        self.relay.validate().map_err(|e| SimulationError::InvalidScenario(e.to_string()))?;
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// End of the last disturbance, or 0 without events.
    pub fn last_disturbance_end(&self) -> f64 {
        self.events.iter().map(Event::end_time).fold(0.0, f64::max)
    }
}

/// Network conditions in force at a given instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventView {
    pub fault_resistance: Option<f64>,
    pub p0: f64,
    /// Cumulative power-angle shift from grid phase jumps (deg).
    pub phase_shift: f64,
}

/// Resolves the events active at `t`. Event instants snap to the nearest step.
pub fn apply_events(scenario: &Scenario, t: f64) -> EventView {
    let half = scenario.dt / 2.0;
    let mut view = EventView { fault_resistance: None, p0: scenario.params.p0, phase_shift: 0.0 };
    for e in &scenario.events {
        if t < e.time - half {
            continue;
        }
        match e.kind {
            EventKind::ThreePhaseFault { duration, fault_resistance } => {
                if t < e.time + duration - half {
                    view.fault_resistance = Some(fault_resistance);
                }
            }
            EventKind::PhaseJump { jump } => view.phase_shift -= jump,
            EventKind::PowerStep { delta_p } => view.p0 += delta_p,
        }
    }
    view
}

pub fn electrical_power(v: DqPair, i: DqPair) -> f64 {
    v.dot(i)
}

/// Base electrical rate (rad/s) converting pu frequency deviation to angle rate.
pub fn omega_base(params: &SystemParams) -> f64 {
    2.0 * PI * params.f_n
}

/// Semi-implicit Euler: frequency first, then angle with the updated frequency.
pub fn swing_step(state: SwingState, p_e: f64, p0: f64, params: &SystemParams, dt: f64) -> SwingState {
    let m = params.swing_inertia;
    let omega_dev = state.omega_dev + dt * (p0 - p_e - params.swing_damping * state.omega_dev) / m;
    let delta = state.delta + dt * omega_base(params) * omega_dev * 180.0 / PI;
    SwingState { delta, omega_dev }
}

/// Active power delivered with the voltage loop converged.
pub fn unsaturated_power(delta: f64, params: &SystemParams) -> Result<f64, NetworkError> {
    Ok(electrical_power(params.v_ref(), unsaturated_current(delta, params)?))
}

/// Stable equilibrium on the unsaturated power curve for set point `p0`.
pub fn stable_equilibrium(params: &SystemParams, p0: f64) -> Result<f64, SimulationError> {
    if p0 == 0.0 {
        let f0 = unsaturated_power(0.0, params)?;
        if f0 == 0.0 {
            return Ok(0.0);
        }
    }
    let dir = if p0 >= 0.0 { 1.0 } else { -1.0 };
    let f = |d: f64| unsaturated_power(d, params).map(|p| p - p0);
    let step = 0.05;
    let mut a = 0.0;
    let mut fa = f(a)?;
    let n = (180.0 / step) as usize;
    for k in 1..=n {
        let b = dir * k as f64 * step;
        let fb = f(b)?;
        if fa * dir <= 0.0 && fb * dir >= 0.0 {
            let (mut lo, mut hi) = (a, b);
            let mut flo = fa;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid == lo || mid == hi {
                    break;
                }
                let fm = f(mid)?;
                if (fm > 0.0) == (flo > 0.0) && fm != 0.0 {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            return Ok(if fb == 0.0 { b } else { 0.5 * (lo + hi) });
        }
        a = b;
        fa = fb;
    }
    Err(SimulationError::NoEquilibrium { p0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    /// Power angle (deg), unwrapped.
    pub delta: f64,
    pub i_dq: DqPair,
    pub v_dq: DqPair,
    pub i_mag: f64,
    /// Relay apparent impedance; `None` when the current is too small.
    pub z_app: Option<Impedance>,
    pub saturated: bool,
    pub theta_i: f64,
    pub p_e: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub scenario: Scenario,
    pub samples: Vec<TraceSample>,
}

pub fn simulate(scenario: &Scenario) -> Result<Trace, SimulationError> {
    scenario.validate()?;
    let p = &scenario.params;
    let dt = scenario.dt;
    let n = scenario.steps();
    let mut swing = SwingState { delta: stable_equilibrium(p, p.p0)?, omega_dev: 0.0 };
    let mut limiter = LimiterState::default();
    let mut shift = 0.0;
    let mut samples = Vec::with_capacity(n + 1);

    for k in 0..=n {
        let t = k as f64 * dt;
        let view = apply_events(scenario, t);
        if view.phase_shift != shift {
            swing.delta += view.phase_shift - shift;
            shift = view.phase_shift;
        }
        let net = Network::with_fault(p, view.fault_resistance)?;
        let (next, i) = mode_step(&limiter, scenario.csa, swing.delta, &net, dt);
        limiter = next;
        let v = net.pcc_voltage(i, swing.delta);
        let p_e = electrical_power(v, i);
        let i_line = net.line_current(v, swing.delta);
        samples.push(TraceSample {
            t,
            delta: swing.delta,
            i_dq: i,
            v_dq: v,
            i_mag: i.magnitude(),
            z_app: apparent_impedance(v, i_line, p.z_tr),
            saturated: limiter.saturated,
            theta_i: if limiter.saturated { limiter.theta_i } else { i.angle_deg() },
            p_e,
        });
        swing = swing_step(swing, p_e, view.p0, p, dt);
        if swing.omega_dev.is_nan() || swing.omega_dev.abs() > DIVERGENCE_LIMIT {
            return Err(SimulationError::Divergence { t, omega_dev: swing.omega_dev });
        }
    }
    Ok(Trace { scenario: scenario.clone(), samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    Enter,
    Exit,
}

impl TransitionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TransitionKind::Enter => "enter",
            TransitionKind::Exit => "exit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub t: f64,
    /// Power angle at the edge sample, wrapped to [0, 360).
    pub delta: f64,
    /// Switching angle located between the bracketing samples, wrapped to [0, 360).
    /// Equals `delta` when the edge coincides with a network event.
    pub crossing: f64,
    /// Current angle: first saturated sample for an entry, last saturated sample for an exit.
    pub theta_i: f64,
    pub kind: TransitionKind,
}

/// Every saturation edge in the trace.
pub fn extract_transitions(trace: &Trace) -> Vec<Transition> {
    let sc = &trace.scenario;
    let p = &sc.params;
    let exit_set = exit_angle_set(sc.csa, p).ok();
    let over = |d: f64| unsaturated_current(d, p).map(|i| i.magnitude() - p.i_max).unwrap_or(f64::NAN);
    let mut out = Vec::new();
    for w in trace.samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.saturated == b.saturated {
            continue;
        }
        let kind = if b.saturated { TransitionKind::Enter } else { TransitionKind::Exit };
        let (va, vb) = (apply_events(sc, a.t), apply_events(sc, b.t));
        let quiet = va == vb && va.fault_resistance.is_none();
        // switching function: negative before the edge, positive after
        let g = |d: f64| match kind {
            TransitionKind::Enter => over(d),
            TransitionKind::Exit => match (sc.csa, &exit_set) {
                (CsaKind::ConstantAngle { .. }, _) | (_, None) => -over(d),
                (_, Some(set)) => set.signed_distance(d),
            },
        };
        let mut crossing = b.delta;
        if quiet {
            let (ga, gb) = (g(a.delta), g(b.delta));
            if ga.is_finite() && gb.is_finite() && ga <= 0.0 && gb > 0.0 {
                crossing = a.delta + (b.delta - a.delta) * ga / (ga - gb);
            }
        }
        out.push(Transition {
            t: b.t,
            delta: normalize_deg(b.delta),
            crossing: normalize_deg(crossing),
            theta_i: if b.saturated { b.theta_i } else { a.theta_i },
            kind,
        });
    }
    out
}
