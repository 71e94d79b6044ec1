//! Closed-form saturation angles, exit sets and impedance-trajectory geometry.

use thiserror::Error;

use crate::csa::CsaKind;
use crate::phasor::{
    deg, normalize_deg, pcc_voltage, polar, rad, total_impedance, unsaturated_current, Complex, DqPair,
    Impedance, NetworkError, SystemParams,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("no exit solution for {kind} CSA: argument {argument:.6} outside [-1, 1]")]
    NoExitSolution { kind: &'static str, argument: f64 },
    #[error("current never exceeds the limit for any power angle")]
    NeverSaturates,
    #[error("apparent impedance is unbounded at delta = 0")]
    UnboundedImpedance,
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Union of closed angle intervals on [0, 360], degrees.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AngleSet {
    intervals: Vec<(f64, f64)>,
}

impl AngleSet {
    pub fn empty() -> Self {
        AngleSet { intervals: Vec::new() }
    }

    pub fn full() -> Self {
        AngleSet { intervals: vec![(0.0, 360.0)] }
    }

    /// Builds a set from intervals; sorts them and merges overlaps.
    pub fn from_intervals(mut raw: Vec<(f64, f64)>) -> Self {
        raw.retain(|&(lo, hi)| lo <= hi);
        for iv in raw.iter_mut() {
            iv.0 = iv.0.clamp(0.0, 360.0);
            iv.1 = iv.1.clamp(0.0, 360.0);
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (lo, hi) in raw {
            match out.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => out.push((lo, hi)),
            }
        }
        AngleSet { intervals: out }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, delta: f64) -> bool {
        let a = normalize_deg(delta);
        self.intervals.iter().any(|&(lo, hi)| lo <= a && a <= hi)
            || (a == 0.0 && self.intervals.iter().any(|&(_, hi)| hi == 360.0))
    }

    pub fn intersects(&self, other: &AngleSet) -> bool {
        self.intervals
            .iter()
            .any(|&(a, b)| other.intervals.iter().any(|&(c, d)| a.max(c) <= b.min(d)))
    }

    fn boundaries(&self) -> Vec<f64> {
        let covers_0 = self.intervals.first().is_some_and(|iv| iv.0 == 0.0);
        let covers_360 = self.intervals.last().is_some_and(|iv| iv.1 == 360.0);
        let seam = covers_0 && covers_360;
        let mut b = Vec::new();
        for &(lo, hi) in &self.intervals {
            if !(seam && lo == 0.0) {
                b.push(lo);
            }
            if !(seam && hi == 360.0) {
                b.push(hi);
            }
        }
        b
    }

    /// Signed circular distance to the set boundary: positive inside, negative outside.
    pub fn signed_distance(&self, delta: f64) -> f64 {
        let a = normalize_deg(delta);
        let b = self.boundaries();
        let inside = self.contains(a);
        if b.is_empty() {
            return if inside { f64::INFINITY } else { f64::NEG_INFINITY };
        }
        let d = b
            .iter()
            .map(|&x| {
                let t = (a - x).abs() % 360.0;
                t.min(360.0 - t)
            })
            .fold(f64::INFINITY, f64::min);
        if inside {
            d
        } else {
            -d
        }
    }
}

/// Unsaturated line (perpendicular bisector) and saturated circle in the R-X plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryGeometry {
    pub line: Line,
    pub circle: Circle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub midpoint: Complex,
    /// Unit direction.
    pub direction: Complex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Complex,
    pub radius: f64,
}

/// Smallest power angle at which the unsaturated current reaches I_max.
/// `None` when it never does; 0 when it exceeds I_max at every angle.
pub fn delta_enter(params: &SystemParams) -> Option<f64> {
    let zt = total_impedance(params).magnitude();
    let (v, vg) = (params.v_d_ref, params.v_g);
    let arg = (v * v + vg * vg - (zt * params.i_max).powi(2)) / (2.0 * v * vg);
    if arg < -1.0 {
        None
    } else if arg > 1.0 {
        Some(0.0)
    } else {
        Some(deg(arg.acos()))
    }
}

fn phi(params: &SystemParams) -> (f64, f64) {
    let zt = total_impedance(params);
    (zt.magnitude(), rad(zt.angle_deg()))
}

pub fn delta_exit_circular(params: &SystemParams) -> Result<f64, AnalyticError> {
    let (zt, phi) = phi(params);
    let arg = 2f64.sqrt() * params.i_max * zt * (phi.cos() + phi.sin()) / (2.0 * params.v_g);
    if !(-1.0..=1.0).contains(&arg) {
        return Err(AnalyticError::NoExitSolution { kind: "circular", argument: arg });
    }
    Ok(deg(arg.asin()))
}

pub fn delta_exit_d(params: &SystemParams) -> Result<f64, AnalyticError> {
    let (zt, phi) = phi(params);
    let arg = (params.v_d_ref - zt * params.i_max * phi.cos()) / params.v_g;
    if !(-1.0..=1.0).contains(&arg) {
        return Err(AnalyticError::NoExitSolution { kind: "d_priority", argument: arg });
    }
    Ok(deg(arg.acos()))
}

pub fn delta_exit_q(params: &SystemParams) -> Result<f64, AnalyticError> {
    let (zt, phi) = phi(params);
    let arg = zt * params.i_max * phi.cos() / params.v_g;
    if !(-1.0..=1.0).contains(&arg) {
        return Err(AnalyticError::NoExitSolution { kind: "q_priority", argument: arg });
    }
    Ok(deg(arg.asin()))
}

pub fn entry_angle_set(params: &SystemParams) -> AngleSet {
    match delta_enter(params) {
        None => AngleSet::empty(),
        Some(e) => AngleSet::from_intervals(vec![(e, 360.0 - e)]),
    }
}

/// Angles at which a saturated inverter returns to voltage control.
pub fn exit_angle_set(kind: CsaKind, params: &SystemParams) -> Result<AngleSet, AnalyticError> {
    let e = match kind {
        CsaKind::None => return Ok(AngleSet::full()),
        CsaKind::Circular => delta_exit_circular(params)?,
        CsaKind::DPriority => delta_exit_d(params)?,
        CsaKind::QPriority => delta_exit_q(params)?,
        CsaKind::ConstantAngle { .. } => match delta_enter(params) {
            None => return Ok(AngleSet::full()),
            Some(e) => e,
        },
    };
    Ok(AngleSet::from_intervals(vec![(0.0, e), (360.0 - e, 360.0)]))
}

/// Window around 180 deg where q-priority stays saturated regardless of the exit test.
pub fn q_forced_window(params: &SystemParams) -> Result<(f64, f64), AnalyticError> {
    let e = delta_exit_q(params)?;
    Ok((180.0 - e, 180.0 + e))
}

/// Constant saturation angle from the closed-form rule using angle(Z_l + Z_g).
pub fn beta_opt(params: &SystemParams) -> Result<f64, AnalyticError> {
    let e = delta_enter(params).ok_or(AnalyticError::NeverSaturates)?;
    Ok(90.0 - params.line_and_grid().angle_deg() - e / 2.0)
}

/// Saturation angle that makes the trajectory exactly continuous at entry:
/// the angle of the unsaturated current at delta_enter.
pub fn continuity_beta(params: &SystemParams) -> Result<f64, AnalyticError> {
    let e = delta_enter(params).ok_or(AnalyticError::NeverSaturates)?;
    Ok(unsaturated_current(e, params)?.angle_deg())
}

/// Apparent impedance on the unsaturated locus, assuming |v| = |V_g|.
pub fn z_app_unsaturated(delta: f64, params: &SystemParams) -> Result<Impedance, AnalyticError> {
    let half = rad(delta) / 2.0;
    if normalize_deg(delta) == 0.0 || half.sin().abs() < 1e-15 {
        return Err(AnalyticError::UnboundedImpedance);
    }
    let zt = total_impedance(params).0;
    let cot = half.cos() / half.sin();
    let z = params.line_and_grid().0 - zt / 2.0 - Complex::i() * zt / 2.0 * cot;
    Ok(Impedance(z))
}

pub fn z_app_saturated(delta: f64, theta_i: f64, params: &SystemParams) -> Impedance {
    let r = params.v_g / params.i_max;
    Impedance(params.line_and_grid().0 + polar(r, -delta - theta_i))
}

pub fn saturation_circle(params: &SystemParams) -> Circle {
    Circle { center: params.line_and_grid().0, radius: params.v_g / params.i_max }
}

pub fn unsaturated_line(params: &SystemParams) -> Line {
    let zt = total_impedance(params).0;
    let a = -params.z_tr.0;
    let d = params.line_and_grid().0;
    let dir = -Complex::i() * zt;
    Line { midpoint: (a + d) / 2.0, direction: dir / dir.norm() }
}

pub fn trajectory_geometry(params: &SystemParams) -> TrajectoryGeometry {
    TrajectoryGeometry { line: unsaturated_line(params), circle: saturation_circle(params) }
}

/// Settled current angle when a saturated trajectory reaches the exit boundary
/// at `delta`. Picks the settled candidate whose governing voltage error is zero there.
pub fn exit_current_angle(kind: CsaKind, delta: f64, params: &SystemParams) -> f64 {
    let i = params.i_max;
    let k = i / 2f64.sqrt();
    let (cands, use_d): (Vec<DqPair>, bool) = match kind {
        CsaKind::None => return unsaturated_current(delta, params).map(|c| c.angle_deg()).unwrap_or(0.0),
        CsaKind::ConstantAngle { beta } => return beta,
        CsaKind::Circular => (
            vec![DqPair::new(k, k), DqPair::new(k, -k), DqPair::new(-k, k), DqPair::new(-k, -k)],
            false,
        ),
        CsaKind::DPriority => (vec![DqPair::new(i, 0.0), DqPair::new(-i, 0.0)], true),
        CsaKind::QPriority => (vec![DqPair::new(0.0, i), DqPair::new(0.0, -i)], false),
    };
    let err = |c: &DqPair| {
        let v = pcc_voltage(*c, delta, params);
        if use_d {
            (v.d - params.v_d_ref).abs()
        } else {
            (v.q - params.v_q_ref).abs()
        }
    };
    cands
        .iter()
        .min_by(|a, b| err(a).total_cmp(&err(b)))
        .map(|c| c.angle_deg())
        .unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn unit_network(zt: Complex) -> SystemParams {
        SystemParams { z_tr: Impedance::ZERO, z_g: Impedance::ZERO, z_l: Impedance(zt), ..Default::default() }
    }

    // brute-force oracle: first delta on a fine grid where |I_u| exceeds I_max
    fn sweep_enter(p: &SystemParams) -> f64 {
        let mut d: f64 = 0.0;
        while d < 180.0 {
            if unsaturated_current(d, p).unwrap().magnitude() > p.i_max {
                return d;
            }
            d += 1e-4;
        }
        180.0
    }

    #[test]
    fn enter_angle() {
        let p = SystemParams::default();
        assert!(close(delta_enter(&p).unwrap(), 54.26, 0.01));
        let p2 = SystemParams { i_max: 2.0, ..unit_network(Complex::new(0.0, 1.0)) };
        assert!(close(delta_enter(&p2).unwrap(), 180.0, 1e-9));
        let p1 = SystemParams { i_max: 1.0, ..unit_network(Complex::new(0.0, 1.0)) };
        assert!(close(delta_enter(&p1).unwrap(), 60.0, 1e-9));
        assert!(close(sweep_enter(&p1), 60.0, 2e-4));
        let none = SystemParams { i_max: 5.0, ..Default::default() };
        assert!(delta_enter(&none).is_none());
        let always = SystemParams { i_max: 5.0, v_g: 10.0, ..Default::default() };
        assert_eq!(delta_enter(&always), Some(0.0));
    }

    #[test]
    fn exit_angles_reference_system() {
        let p = SystemParams::default();
        assert!(close(delta_exit_circular(&p).unwrap(), 42.30, 0.01));
        assert!(close(delta_exit_d(&p).unwrap(), 16.41, 0.01));
        assert!(close(delta_exit_q(&p).unwrap(), 2.34, 0.01));
    }

    #[test]
    fn exit_angle_degenerate_cases() {
        let p = SystemParams { i_max: 0.0, ..Default::default() };
        assert_eq!(delta_exit_circular(&p).unwrap(), 0.0);
        assert_eq!(delta_exit_d(&p).unwrap(), 0.0);
        let pure_x = unit_network(Complex::new(0.0, 0.76));
        assert!(delta_exit_q(&pure_x).unwrap().abs() < 1e-9);
        let too_big = SystemParams { i_max: 5.0, ..Default::default() };
        assert!(matches!(delta_exit_circular(&too_big), Err(AnalyticError::NoExitSolution { .. })));
    }

    #[test]
    fn circular_exit_matches_voltage_sweep() {
        // |Z_T| = 1 at 45 deg, I_max = 1: settled (+,+) current gives v_q = 0 at 90 deg
        let p = SystemParams { i_max: 1.0, ..unit_network(polar(1.0, 45.0)) };
        assert!(close(delta_exit_circular(&p).unwrap(), 90.0, 1e-6));
        let k = 1.0 / 2f64.sqrt();
        let mut best = (f64::INFINITY, 0.0);
        for n in 0..=18000 {
            let d = n as f64 * 0.01;
            let v = pcc_voltage(DqPair::new(k, k), d, &p);
            if v.q.abs() < best.0 {
                best = (v.q.abs(), d);
            }
        }
        assert!(close(best.1, 90.0, 0.02));
    }

    #[test]
    fn d_and_q_exit_substitution() {
        // |Z_T| I cos(phi) = 0.5 with V = V_g = 1
        let p = SystemParams { i_max: 1.0, ..unit_network(polar(1.0, 60.0)) };
        let e = delta_exit_d(&p).unwrap();
        assert!(close(e, 60.0, 1e-9));
        // boundary: +I_max on d gives v_d = v_ref there, u_d < 0 just inside saturation
        let v = pcc_voltage(DqPair::new(1.0, 0.0), e, &p);
        assert!(close(v.d, 1.0, 1e-12));
        let v_in = pcc_voltage(DqPair::new(1.0, 0.0), e + 1.0, &p);
        assert!(v_in.d < 1.0);
        assert!(close(delta_exit_q(&p).unwrap(), 30.0, 1e-9));
    }

    #[test]
    fn angle_sets() {
        let p = SystemParams::default();
        let entry = entry_angle_set(&p);
        let (lo, hi) = entry.intervals()[0];
        assert!(close(lo, 54.26, 0.01) && close(hi, 305.74, 0.01));
        let never = SystemParams { i_max: 5.0, ..Default::default() };
        assert!(entry_angle_set(&never).is_empty());

        let c = exit_angle_set(CsaKind::Circular, &p).unwrap();
        assert!(close(c.intervals()[0].1, 42.30, 0.01) && close(c.intervals()[1].0, 317.70, 0.01));
        let d = exit_angle_set(CsaKind::DPriority, &p).unwrap();
        assert!(close(d.intervals()[1].0, 343.59, 0.01));
        let q = exit_angle_set(CsaKind::QPriority, &p).unwrap();
        assert!(close(q.intervals()[1].0, 357.66, 0.01));
        assert!(c.contains(30.0) && !d.contains(30.0) && d.contains(-5.0));
    }

    #[test]
    fn degenerate_entry_set() {
        let p = SystemParams { i_max: 2.0, ..unit_network(Complex::new(0.0, 1.0)) };
        assert_eq!(entry_angle_set(&p).intervals(), &[(180.0, 180.0)]);
    }

    #[test]
    fn signed_distance_wraps_the_seam() {
        let s = AngleSet::from_intervals(vec![(0.0, 10.0), (350.0, 360.0)]);
        assert!(close(s.signed_distance(0.0), 10.0, 1e-12));
        assert!(close(s.signed_distance(355.0), 5.0, 1e-12));
        assert!(close(s.signed_distance(20.0), -10.0, 1e-12));
        assert!(close(s.signed_distance(340.0), -10.0, 1e-12));
        assert_eq!(AngleSet::empty().signed_distance(3.0), f64::NEG_INFINITY);
    }

    #[test]
    fn beta_rules() {
        let trivial = SystemParams { i_max: 2.0, v_g: 1.0, ..unit_network(Complex::new(0.0, 1.0)) };
        // angle 90 and enter 180 give 90 - 90 - 90
        assert!(close(beta_opt(&trivial).unwrap(), -90.0, 1e-9));
        let p = SystemParams::default();
        assert!(close(beta_opt(&p).unwrap(), -24.27, 0.05));
        let g = SystemParams { z_g: Impedance::polar(0.2, 87.14), z_l: Impedance::polar(0.5, 87.14), ..Default::default() };
        assert!(close(beta_opt(&g).unwrap(), -28.20, 0.05));
        // closed form of the continuity angle with v_ref = V_g real
        let e = delta_enter(&p).unwrap();
        let exact = 90.0 - total_impedance(&p).angle_deg() - e / 2.0;
        assert!(close(continuity_beta(&p).unwrap(), exact, 1e-9));
    }

    #[test]
    fn continuity_beta_matches_brute_force_jump_minimum() {
        let p = SystemParams::default();
        let e = delta_enter(&p).unwrap();
        let z0 = z_app_unsaturated(e, &p).unwrap();
        let mut best = (f64::INFINITY, 0.0);
        for n in -90000..90000 {
            let b = n as f64 * 1e-3;
            let j = (z_app_saturated(e, b, &p).0 - z0.0).norm();
            if j < best.0 {
                best = (j, b);
            }
        }
        assert!(close(best.1, continuity_beta(&p).unwrap(), 2e-3));
        // closed-form rule with angle(Z_l+Z_g) sits a fraction of a degree off
        assert!(close(best.1, beta_opt(&p).unwrap(), 0.35));
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn unsaturated_locus_examples() {
        let p = SystemParams::default();
        let z = z_app_unsaturated(180.0, &p).unwrap();
        let expect = p.line_and_grid().0 - total_impedance(&p).0 / 2.0;
        assert!((z.0 - expect).norm() < 1e-12);
        assert!(close(z.r(), 0.0130, 1e-4) && close(z.x(), 0.2197, 1e-4));
        let z = z_app_unsaturated(90.0, &p).unwrap();
        assert!(close(z.r(), 0.3926, 1e-4) && close(z.x(), 0.2027, 1e-4));
        // phasor construction: v = v_ref with |v| = V_g, i = unsaturated current
        let i = unsaturated_current(90.0, &p).unwrap();
        let zp = Complex::new(1.0, 0.0) / i.to_complex() - p.z_tr.0;
        assert!((zp - z.0).norm() < 1e-12);
        // near delta = 0 the locus runs off along -j Z_T, into the load region
        let far = z_app_unsaturated(1e-6, &p).unwrap();
        assert!(far.magnitude() > 1e6 && far.r() > 1e6);
        assert_eq!(z_app_unsaturated(0.0, &p), Err(AnalyticError::UnboundedImpedance));
        assert_eq!(z_app_unsaturated(360.0, &p), Err(AnalyticError::UnboundedImpedance));
    }

    #[test]
    fn saturated_locus_examples() {
        let p = SystemParams::default();
        let z = z_app_saturated(30.0, -30.0, &p);
        assert!(close(z.r(), 0.8633, 1e-4) && close(z.x(), 0.5993, 1e-4));
        let r = 1.0 / 1.2;
        for (d, t) in [(10.0, 20.0), (200.0, -135.0), (317.7, 0.0)] {
            let z = z_app_saturated(d, t, &p);
            assert!(close((z.0 - p.line_and_grid().0).norm(), r, 1e-12));
        }
        let z = z_app_saturated(45.0, 45.0, &p);
        let expect = p.line_and_grid().0 - Complex::new(0.0, r);
        assert!((z.0 - expect).norm() < 1e-12);
    }

    #[test]
    fn circle_geometry() {
        let p = SystemParams::default();
        let c = saturation_circle(&p);
        assert!(close(c.center.norm(), 0.6, 1e-12) && close(deg(c.center.arg()), 87.14, 1e-9));
        assert!(close(c.radius, 0.8333, 1e-4));
        let doubled = saturation_circle(&SystemParams { v_g: 2.0, ..p.clone() });
        assert!(close(doubled.radius, 2.0 * c.radius, 1e-12));
        let big = saturation_circle(&SystemParams { i_max: 1e12, ..p });
        assert!(big.radius < 1e-11);
    }

    #[test]
    fn exit_current_angles() {
        let p = SystemParams::default();
        let c = 360.0 - delta_exit_circular(&p).unwrap();
        assert!(close(exit_current_angle(CsaKind::Circular, c, &p), -135.0, 1e-9));
        let d = 360.0 - delta_exit_d(&p).unwrap();
        assert!(close(exit_current_angle(CsaKind::DPriority, d, &p), 0.0, 1e-9));
        let q = 360.0 - delta_exit_q(&p).unwrap();
        assert!(close(exit_current_angle(CsaKind::QPriority, q, &p), -90.0, 1e-9));
        assert_eq!(exit_current_angle(CsaKind::ConstantAngle { beta: -20.0 }, 300.0, &p), -20.0);
    }
}
