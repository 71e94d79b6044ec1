//! Scenario file format: sectioned `key = value` text.
//!
//! ```text
//! [system]
//! z_l = 0.3 @ 87.14        # polar, or rectangular "r, x"
//! p0 = 0.6
//! [csa]
//! kind = d_priority
//! [events]
//! event = fault @ 4.0 duration=0.15 resistance=0
//! event = phase_jump @ 4.0 jump=-78.49
//! event = power_step @ 4.0 delta_p=0.5
//! [relay]
//! z1 = 0.24 @ 87.44
//! [run]
//! t_end = 10
//! dt = 1e-4
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::csa::CsaKind;
use crate::dynamics::{Event, EventKind, Scenario};
use crate::phasor::Impedance;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    /// 1-based line number, 0 for document-level problems.
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, message: message.into() })
}

const SECTIONS: [&str; 5] = ["system", "csa", "events", "relay", "run"];
const REQUIRED: [&str; 2] = ["system", "csa"];

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    match v.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => err(line, format!("`{key}` expects a finite number, got `{}`", v.trim())),
    }
}

fn parse_impedance(line: usize, key: &str, v: &str) -> Result<Impedance, ConfigError> {
    if let Some((m, a)) = v.split_once('@') {
        return Ok(Impedance::polar(parse_f64(line, key, m)?, parse_f64(line, key, a)?));
    }
    if let Some((r, x)) = v.split_once(',') {
        return Ok(Impedance::new(parse_f64(line, key, r)?, parse_f64(line, key, x)?));
    }
    err(line, format!("`{key}` expects `r, x` or `magnitude @ angle`, got `{}`", v.trim()))
}

fn parse_event(line: usize, v: &str) -> Result<Event, ConfigError> {
    let Some((kind, rest)) = v.split_once('@') else {
        return err(line, "event expects `<kind> @ <time> <key=value>...`");
    };
    let mut parts = rest.split_whitespace();
    let time = parse_f64(line, "event time", parts.next().unwrap_or(""))?;
    let mut args = Vec::new();
    for p in parts {
        let Some((k, x)) = p.split_once('=') else {
            return err(line, format!("event argument `{p}` is not key=value"));
        };
        args.push((k.to_string(), parse_f64(line, k, x)?));
    }
    let take = |name: &str, default: Option<f64>| -> Result<f64, ConfigError> {
        match args.iter().find(|(k, _)| k == name) {
            Some((_, x)) => Ok(*x),
            None => default.map_or_else(|| err(line, format!("event is missing `{name}`")), Ok),
        }
    };
    let (kind, allowed): (EventKind, &[&str]) = match kind.trim() {
        "fault" => (
            EventKind::ThreePhaseFault {
                duration: take("duration", None)?,
                fault_resistance: take("resistance", Some(0.0))?,
            },
            &["duration", "resistance"],
        ),
        "phase_jump" => (EventKind::PhaseJump { jump: take("jump", None)? }, &["jump"]),
        "power_step" => (EventKind::PowerStep { delta_p: take("delta_p", None)? }, &["delta_p"]),
        other => return err(line, format!("unknown event kind `{other}` (valid: fault, phase_jump, power_step)")),
    };
    if let Some((k, _)) = args.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        return err(line, format!("unknown event argument `{k}`"));
    }
    Ok(Event { time, kind })
}

/// Parses a scenario document. Unspecified values keep their defaults.
pub fn load_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let mut sc = Scenario::default();
    let mut section: Option<&str> = None;
    let mut seen_sections = HashSet::new();
    let mut seen_keys = HashSet::new();
    let mut kind: Option<(usize, CsaKind)> = None;
    let mut beta: Option<(usize, f64)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let n = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            let Some(s) = SECTIONS.iter().find(|s| **s == name) else {
                return err(n, format!("unknown section [{name}] (valid: {})", SECTIONS.join(", ")));
            };
            if !seen_sections.insert(*s) {
                return err(n, format!("duplicate section [{name}]"));
            }
            section = Some(s);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return err(n, format!("expected `key = value`, got `{line}`"));
        };
        let (key, value) = (key.trim(), value.trim().trim_matches('"'));
        let Some(sec) = section else {
            return err(n, format!("key `{key}` appears before any section"));
        };
        if key != "event" && !seen_keys.insert((sec, key.to_string())) {
            return err(n, format!("duplicate key `{key}` in [{sec}]"));
        }
        let p = &mut sc.params;
        let m = &mut sc.relay.mho;
        let b = &mut sc.relay.blinders;
        let f = || parse_f64(n, key, value);
        match (sec, key) {
            ("system", "z_tr") => p.z_tr = parse_impedance(n, key, value)?,
            ("system", "z_l") => p.z_l = parse_impedance(n, key, value)?,
            ("system", "z_g") => p.z_g = parse_impedance(n, key, value)?,
            ("system", "v_g") => p.v_g = f()?,
            ("system", "v_d_ref") => p.v_d_ref = f()?,
            ("system", "v_q_ref") => p.v_q_ref = f()?,
            ("system", "i_max") => p.i_max = f()?,
            ("system", "u_max") => p.u_max = f()?,
            ("system", "c_f") => p.c_f = f()?,
            ("system", "omega_n") => p.omega_n = f()?,
            ("system", "f_n") => p.f_n = f()?,
            ("system", "p0") => p.p0 = f()?,
            ("system", "swing_inertia") => p.swing_inertia = f()?,
            ("system", "swing_damping") => p.swing_damping = f()?,
            ("system", "tau_sat") => p.tau_sat = f()?,
            ("csa", "kind") => kind = Some((n, value.parse::<CsaKind>().map_err(|e| ConfigError { line: n, message: e.to_string() })?)),
            ("csa", "beta") => beta = Some((n, f()?)),
            ("events", "event") => sc.events.push(parse_event(n, value)?),
            ("relay", "z1") => m.reaches[0] = parse_impedance(n, key, value)?,
            ("relay", "z2") => m.reaches[1] = parse_impedance(n, key, value)?,
            ("relay", "z3") => m.reaches[2] = parse_impedance(n, key, value)?,
            ("relay", "td1") => m.delays[0] = f()?,
            ("relay", "td2") => m.delays[1] = f()?,
            ("relay", "td3") => m.delays[2] = f()?,
            ("relay", "r_out") => b.r_out = f()?,
            ("relay", "r_mid") => b.r_mid = f()?,
            ("relay", "r_inn") => b.r_inn = f()?,
            ("relay", "x_fwd_out") => b.x_fwd_out = f()?,
            ("relay", "x_fwd_mid") => b.x_fwd_mid = f()?,
            ("relay", "x_fwd_inn") => b.x_fwd_inn = f()?,
            ("relay", "x_rev_out") => b.x_rev_out = f()?,
            ("relay", "x_rev_mid") => b.x_rev_mid = f()?,
            ("relay", "x_rev_inn") => b.x_rev_inn = f()?,
            ("relay", "blinder_angle") => b.blinder_angle = f()?,
            ("relay", "t_psb") => b.t_psb = f()?,
            ("run", "t_end") => sc.t_end = f()?,
            ("run", "dt") => {
                sc.dt = f()?;
                if sc.dt <= 0.0 {
                    return err(n, format!("dt must be > 0, got {value}"));
                }
            }
            _ => return err(n, format!("unknown key `{key}` in [{sec}]")),
        }
    }

    for s in REQUIRED {
        if !seen_sections.contains(s) {
            return err(0, format!("missing required section [{s}]"));
        }
    }
    let Some((kline, k)) = kind else {
        return err(0, "[csa] needs `kind`");
    };
    sc.csa = match (k, beta) {
        (CsaKind::ConstantAngle { .. }, Some((_, b))) => CsaKind::ConstantAngle { beta: b },
        (CsaKind::ConstantAngle { .. }, None) => return err(kline, "constant_angle needs `beta`"),
        (_, Some((bline, _))) => return err(bline, "`beta` only applies to constant_angle"),
        (k, None) => k,
    };
    Ok(sc)
}

fn z(v: Impedance) -> String {
    format!("{}, {}", v.r(), v.x())
}

/// Serialises a scenario; the output loads back to an identical value.
pub fn save_scenario(sc: &Scenario, notes: &[String]) -> String {
    let mut o = String::new();
    for n in notes {
        let _ = writeln!(o, "# {n}");
    }
    let p = &sc.params;
    let _ = writeln!(o, "[system]");
    for (k, v) in [("z_tr", p.z_tr), ("z_l", p.z_l), ("z_g", p.z_g)] {
        let _ = writeln!(o, "{k} = {}", z(v));
    }
    for (k, v) in [
        ("v_g", p.v_g),
        ("v_d_ref", p.v_d_ref),
        ("v_q_ref", p.v_q_ref),
        ("i_max", p.i_max),
        ("u_max", p.u_max),
        ("c_f", p.c_f),
        ("omega_n", p.omega_n),
        ("f_n", p.f_n),
        ("p0", p.p0),
        ("swing_inertia", p.swing_inertia),
        ("swing_damping", p.swing_damping),
        ("tau_sat", p.tau_sat),
    ] {
        let _ = writeln!(o, "{k} = {v}");
    }
    let _ = writeln!(o, "\n[csa]\nkind = {}", sc.csa.name());
    if let CsaKind::ConstantAngle { beta } = sc.csa {
        let _ = writeln!(o, "beta = {beta}");
    }
    let _ = writeln!(o, "\n[events]");
    for e in &sc.events {
        let _ = match e.kind {
            EventKind::ThreePhaseFault { duration, fault_resistance } => {
                writeln!(o, "event = fault @ {} duration={duration} resistance={fault_resistance}", e.time)
            }
            EventKind::PhaseJump { jump } => writeln!(o, "event = phase_jump @ {} jump={jump}", e.time),
            EventKind::PowerStep { delta_p } => writeln!(o, "event = power_step @ {} delta_p={delta_p}", e.time),
        };
    }
    let m = &sc.relay.mho;
    let b = &sc.relay.blinders;
    let _ = writeln!(o, "\n[relay]");
    for (i, r) in m.reaches.iter().enumerate() {
        let _ = writeln!(o, "z{} = {}", i + 1, z(*r));
    }
    for (i, d) in m.delays.iter().enumerate() {
        let _ = writeln!(o, "td{} = {d}", i + 1);
    }
    for (k, v) in [
        ("r_out", b.r_out),
        ("r_mid", b.r_mid),
        ("r_inn", b.r_inn),
        ("x_fwd_out", b.x_fwd_out),
        ("x_fwd_mid", b.x_fwd_mid),
        ("x_fwd_inn", b.x_fwd_inn),
        ("x_rev_out", b.x_rev_out),
        ("x_rev_mid", b.x_rev_mid),
        ("x_rev_inn", b.x_rev_inn),
        ("blinder_angle", b.blinder_angle),
        ("t_psb", b.t_psb),
    ] {
        let _ = writeln!(o, "{k} = {v}");
    }
    let _ = writeln!(o, "\n[run]\nt_end = {}\ndt = {}", sc.t_end, sc.dt);
    o
}
