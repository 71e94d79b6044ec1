//! Phasor arithmetic and the algebraic network solution.
//!
//! The network is a single inverter feeding an infinite bus through
//! transformer, line and grid impedances in series. All quantities are
//! per unit, angles are degrees at the API boundary.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use thiserror::Error;

pub type Complex = Complex64;

/// Current magnitude below which the apparent impedance is left open.
pub const EPS_CURRENT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("degenerate network: total impedance is zero")]
    DegenerateNetwork,
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub fn deg(rad: f64) -> f64 {
    rad * 180.0 / PI
}

pub fn rad(deg: f64) -> f64 {
    deg * PI / 180.0
}

/// Wrap to [0, 360).
pub fn normalize_deg(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Wrap to (-180, 180].
pub fn wrap180(a: f64) -> f64 {
    let r = normalize_deg(a);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

pub fn polar(mag: f64, angle_deg: f64) -> Complex {
    Complex::from_polar(mag, rad(angle_deg))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Impedance(pub Complex);

impl Impedance {
    pub const ZERO: Impedance = Impedance(Complex::new(0.0, 0.0));

    pub fn new(r: f64, x: f64) -> Self {
        Impedance(Complex::new(r, x))
    }

    pub fn polar(mag: f64, angle_deg: f64) -> Self {
        Impedance(polar(mag, angle_deg))
    }

    pub fn r(&self) -> f64 {
        self.0.re
    }

    pub fn x(&self) -> f64 {
        self.0.im
    }

    pub fn magnitude(&self) -> f64 {
        self.0.norm()
    }

    pub fn angle_deg(&self) -> f64 {
        deg(self.0.arg())
    }
}

impl Add for Impedance {
    type Output = Impedance;
    fn add(self, o: Impedance) -> Impedance {
        Impedance(self.0 + o.0)
    }
}

impl Sub for Impedance {
    type Output = Impedance;
    fn sub(self, o: Impedance) -> Impedance {
        Impedance(self.0 - o.0)
    }
}

impl Neg for Impedance {
    type Output = Impedance;
    fn neg(self) -> Impedance {
        Impedance(-self.0)
    }
}

impl Mul<f64> for Impedance {
    type Output = Impedance;
    fn mul(self, k: f64) -> Impedance {
        Impedance(self.0 * k)
    }
}

/// A quantity resolved on the inverter d and q axes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DqPair {
    pub d: f64,
    pub q: f64,
}

impl DqPair {
    pub const ZERO: DqPair = DqPair { d: 0.0, q: 0.0 };

    pub fn new(d: f64, q: f64) -> Self {
        DqPair { d, q }
    }

    pub fn polar(mag: f64, angle_deg: f64) -> Self {
        DqPair::from_complex(polar(mag, angle_deg))
    }

    pub fn from_complex(c: Complex) -> Self {
        DqPair { d: c.re, q: c.im }
    }

    pub fn to_complex(self) -> Complex {
        Complex::new(self.d, self.q)
    }

    pub fn magnitude(self) -> f64 {
        self.d.hypot(self.q)
    }

    pub fn angle_deg(self) -> f64 {
        deg(self.q.atan2(self.d))
    }

    pub fn scale(self, k: f64) -> Self {
        DqPair::new(self.d * k, self.q * k)
    }

    pub fn dot(self, o: DqPair) -> f64 {
        self.d * o.d + self.q * o.q
    }

    pub fn is_finite(self) -> bool {
        self.d.is_finite() && self.q.is_finite()
    }
}

impl Add for DqPair {
    type Output = DqPair;
    fn add(self, o: DqPair) -> DqPair {
        DqPair::new(self.d + o.d, self.q + o.q)
    }
}

impl Sub for DqPair {
    type Output = DqPair;
    fn sub(self, o: DqPair) -> DqPair {
        DqPair::new(self.d - o.d, self.q - o.q)
    }
}

impl Neg for DqPair {
    type Output = DqPair;
    fn neg(self) -> DqPair {
        DqPair::new(-self.d, -self.q)
    }
}

/// Network and control constants. Defaults are the reference test system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub z_tr: Impedance,
    pub z_l: Impedance,
    pub z_g: Impedance,
    pub v_g: f64,
    pub v_d_ref: f64,
    pub v_q_ref: f64,
    pub i_max: f64,
    pub u_max: f64,
    pub c_f: f64,
    /// Nominal angular frequency in per unit.
    pub omega_n: f64,
    /// Nominal frequency in Hz, sets the electrical base rate of the swing law.
    pub f_n: f64,
    pub p0: f64,
    /// Virtual inertia M (pu*s).
    pub swing_inertia: f64,
    /// Virtual damping D (pu).
    pub swing_damping: f64,
    /// Time constant of the saturated-current transient (s). Zero settles in one step.
    pub tau_sat: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            z_tr: Impedance::polar(0.16, 88.57),
            z_l: Impedance::polar(0.3, 87.14),
            z_g: Impedance::polar(0.3, 87.14),
            v_g: 1.0,
            v_d_ref: 1.0,
            v_q_ref: 0.0,
            i_max: 1.2,
            u_max: 0.063,
            c_f: 0.0,
            omega_n: 1.0,
            f_n: 60.0,
            p0: 0.6,
            swing_inertia: 3.0,
            swing_damping: 12.0,
            tau_sat: 0.0,
        }
    }
}

impl SystemParams {
    pub fn v_ref(&self) -> DqPair {
        DqPair::new(self.v_d_ref, self.v_q_ref)
    }

    /// Z_l + Z_g, the centre of the saturated trajectory circle.
    pub fn line_and_grid(&self) -> Impedance {
        self.z_l + self.z_g
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        fn bad(name: &'static str, reason: &str) -> Result<(), NetworkError> {
            Err(NetworkError::InvalidParameter { name, reason: reason.to_string() })
        }
        let scalars = [
            ("v_g", self.v_g),
            ("v_d_ref", self.v_d_ref),
            ("v_q_ref", self.v_q_ref),
            ("i_max", self.i_max),
            ("u_max", self.u_max),
            ("c_f", self.c_f),
            ("omega_n", self.omega_n),
            ("f_n", self.f_n),
            ("p0", self.p0),
            ("swing_inertia", self.swing_inertia),
            ("swing_damping", self.swing_damping),
            ("tau_sat", self.tau_sat),
        ];
        for (name, v) in scalars {
            if !v.is_finite() {
                return bad(name, "must be finite");
            }
        }
        for (name, z) in [("z_tr", self.z_tr), ("z_l", self.z_l), ("z_g", self.z_g)] {
            if !(z.r().is_finite() && z.x().is_finite()) {
                return bad(name, "must be finite");
            }
        }
        if self.i_max <= 0.0 {
            return bad("i_max", "must be > 0");
        }
        if self.v_g <= 0.0 {
            return bad("v_g", "must be > 0");
        }
        if self.u_max < 0.0 {
            return bad("u_max", "must be >= 0");
        }
        if self.swing_inertia <= 0.0 {
            return bad("swing_inertia", "must be > 0");
        }
        if self.swing_damping < 0.0 {
            return bad("swing_damping", "must be >= 0");
        }
        if self.tau_sat < 0.0 {
            return bad("tau_sat", "must be >= 0");
        }
        if self.f_n <= 0.0 {
            return bad("f_n", "must be > 0");
        }
        if total_impedance(self).magnitude() == 0.0 {
            return Err(NetworkError::DegenerateNetwork);
        }
        Ok(())
    }
}

pub fn total_impedance(params: &SystemParams) -> Impedance {
    params.z_tr + params.z_l + params.z_g
}

/// Grid EMF seen in the inverter frame, V_g e^{-j delta}.
pub fn grid_emf(delta: f64, params: &SystemParams) -> Complex {
    polar(params.v_g, -delta)
}

/// Current drawn with the voltage loop converged (v = v_ref).
pub fn unsaturated_current(delta: f64, params: &SystemParams) -> Result<DqPair, NetworkError> {
    let zt = total_impedance(params).0;
    if zt.norm() == 0.0 {
        return Err(NetworkError::DegenerateNetwork);
    }
    let i = (params.v_ref().to_complex() - grid_emf(delta, params)) / zt;
    Ok(DqPair::from_complex(i))
}

/// PCC voltage for an imposed inverter current on the healthy network.
pub fn pcc_voltage(i: DqPair, delta: f64, params: &SystemParams) -> DqPair {
    let zt = total_impedance(params).0;
    DqPair::from_complex(grid_emf(delta, params) + zt * i.to_complex())
}

/// Ratio v/i seen from the inverter, shifted by -Z_tr to the line terminal.
/// `None` when the current is too small to give a meaningful ratio.
pub fn apparent_impedance(v: DqPair, i: DqPair, z_tr: Impedance) -> Option<Impedance> {
    if i.magnitude() <= EPS_CURRENT {
        return None;
    }
    Some(Impedance(v.to_complex() / i.to_complex()) - z_tr)
}

/// Filter-capacitor compensation: converts inner currents to inverter-side currents.
pub fn compensate_capacitor(i_inner: DqPair, v: DqPair, params: &SystemParams) -> DqPair {
    let k = params.omega_n * params.c_f;
    DqPair::new(i_inner.d - v.q * k, i_inner.q + v.d * k)
}

/// Network solution for one step, healthy or with a PCC shunt fault.
#[derive(Debug, Clone, Copy)]
pub struct Network<'a> {
    params: &'a SystemParams,
    zt: Complex,
    fault_resistance: Option<f64>,
}

impl<'a> Network<'a> {
    pub fn healthy(params: &'a SystemParams) -> Result<Self, NetworkError> {
        Self::with_fault(params, None)
    }

    pub fn with_fault(params: &'a SystemParams, fault_resistance: Option<f64>) -> Result<Self, NetworkError> {
        let zt = total_impedance(params).0;
        if zt.norm() == 0.0 {
            return Err(NetworkError::DegenerateNetwork);
        }
        Ok(Network { params, zt, fault_resistance })
    }

    pub fn params(&self) -> &SystemParams {
        self.params
    }

    pub fn is_faulted(&self) -> bool {
        self.fault_resistance.is_some()
    }

    /// Current the voltage loop would demand to hold v_ref. `None` means unbounded
    /// (bolted fault at the PCC).
    pub fn demanded_current(&self, delta: f64) -> Option<DqPair> {
        let vref = self.params.v_ref().to_complex();
        let e = grid_emf(delta, self.params);
        let to_grid = (vref - e) / self.zt;
        match self.fault_resistance {
            None => Some(DqPair::from_complex(to_grid)),
            Some(rf) if rf > 0.0 => Some(DqPair::from_complex(to_grid + vref / rf)),
            Some(_) => None,
        }
    }

    pub fn pcc_voltage(&self, i: DqPair, delta: f64) -> DqPair {
        let e = grid_emf(delta, self.params);
        let open = e + self.zt * i.to_complex();
        match self.fault_resistance {
            None => DqPair::from_complex(open),
            Some(rf) => DqPair::from_complex(open * rf / (self.zt + rf)),
        }
    }

    /// Current through the line towards the grid for a given PCC voltage.
    pub fn line_current(&self, v: DqPair, delta: f64) -> DqPair {
        DqPair::from_complex((v.to_complex() - grid_emf(delta, self.params)) / self.zt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn total_impedance_reference_system() {
        let zt = total_impedance(&SystemParams::default());
        assert!(close(zt.magnitude(), 0.7600, 5e-4));
        assert!(close(zt.angle_deg(), 87.44, 5e-3));
    }

    #[test]
    fn total_impedance_zero() {
        let p = SystemParams { z_tr: Impedance::ZERO, z_l: Impedance::ZERO, z_g: Impedance::ZERO, ..Default::default() };
        assert_eq!(total_impedance(&p), Impedance::ZERO);
        assert_eq!(unsaturated_current(30.0, &p), Err(NetworkError::DegenerateNetwork));
    }

    #[test]
    fn total_impedance_matches_rectangular_sum() {
        let p = SystemParams { z_g: Impedance::polar(0.2, 87.14), z_l: Impedance::polar(0.5, 87.14), ..Default::default() };
        // rectangular oracle
        let parts = [(0.16, 88.57), (0.5, 87.14), (0.2, 87.14)];
        let r: f64 = parts.iter().map(|(m, a)| m * (a * PI / 180.0).cos()).sum();
        let x: f64 = parts.iter().map(|(m, a)| m * (a * PI / 180.0).sin()).sum();
        let zt = total_impedance(&p);
        assert!(close(zt.r(), r, 1e-12) && close(zt.x(), x, 1e-12));
        assert!(close(zt.magnitude(), 0.860, 5e-4));
        assert!(close(zt.angle_deg(), 87.41, 5e-3));
    }

    #[test]
    fn unsaturated_current_examples() {
        let p = SystemParams::default();
        let i0 = unsaturated_current(0.0, &p).unwrap();
        assert!(i0.magnitude() < 1e-15);
        let i = unsaturated_current(54.26, &p).unwrap();
        assert!(close(i.magnitude(), 1.2, 1e-3));

        let unit = SystemParams { z_tr: Impedance::ZERO, z_g: Impedance::ZERO, z_l: Impedance::new(0.0, 1.0), ..Default::default() };
        let i = unsaturated_current(90.0, &unit).unwrap();
        assert!(close(i.d, 1.0, 1e-12) && close(i.q, -1.0, 1e-12));
        assert!(close(i.magnitude(), 2f64.sqrt(), 1e-12));
    }

    #[test]
    fn pcc_voltage_examples() {
        let p = SystemParams::default();
        let v = pcc_voltage(DqPair::ZERO, 30.0, &p);
        assert!(close(v.d, rad(30.0).cos(), 1e-12) && close(v.q, -0.5, 1e-12));

        let k = 2f64.sqrt() / 2.0 * 1.2;
        let v = pcc_voltage(DqPair::new(k, k), 42.30, &p);
        assert!(v.q.abs() < 1e-3);

        let v = pcc_voltage(DqPair::new(1.2, 0.0), 16.41, &p);
        assert!(close(v.d, 1.0, 1e-3));
    }

    #[test]
    fn apparent_impedance_examples() {
        let z = apparent_impedance(DqPair::new(1.0, 0.0), DqPair::new(1.0, 0.0), Impedance::ZERO).unwrap();
        assert!(close(z.r(), 1.0, 1e-15) && z.x().abs() < 1e-15);
        let z = apparent_impedance(DqPair::new(0.0, 1.0), DqPair::new(1.0, 0.0), Impedance::ZERO).unwrap();
        assert!(z.r().abs() < 1e-15 && close(z.x(), 1.0, 1e-15));
        let z = apparent_impedance(DqPair::new(1.0, 0.0), DqPair::new(0.5, -0.5), Impedance::polar(0.16, 88.57)).unwrap();
        assert!(close(z.r(), 0.996, 1e-3) && close(z.x(), 0.840, 1e-3));
        assert!(apparent_impedance(DqPair::new(1.0, 0.0), DqPair::new(1e-7, 0.0), Impedance::ZERO).is_none());
    }

    #[test]
    fn bolted_fault_collapses_pcc() {
        let p = SystemParams::default();
        let net = Network::with_fault(&p, Some(0.0)).unwrap();
        assert!(net.demanded_current(40.0).is_none());
        let v = net.pcc_voltage(DqPair::new(1.2, 0.3), 40.0);
        assert_eq!(v, DqPair::ZERO);
        // relay sees the fault point behind the transformer
        let il = net.line_current(v, 40.0);
        let z = apparent_impedance(v, il, p.z_tr).unwrap();
        assert!(close(z.r(), -p.z_tr.r(), 1e-12) && close(z.x(), -p.z_tr.x(), 1e-12));
    }

    #[test]
    fn resistive_fault_holds_vref_with_demanded_current() {
        let p = SystemParams::default();
        let net = Network::with_fault(&p, Some(0.05)).unwrap();
        let i = net.demanded_current(25.0).unwrap();
        let v = net.pcc_voltage(i, 25.0);
        assert!(close(v.d, 1.0, 1e-12) && v.q.abs() < 1e-12);
    }

    #[test]
    fn angle_wrapping() {
        assert_eq!(normalize_deg(-10.0), 350.0);
        assert_eq!(normalize_deg(720.0), 0.0);
        assert_eq!(wrap180(190.0), -170.0);
        assert_eq!(wrap180(-180.0), 180.0);
    }

    #[test]
    fn capacitor_compensation() {
        let p = SystemParams { c_f: 0.1, ..Default::default() };
        let i = compensate_capacitor(DqPair::new(1.0, 0.2), DqPair::new(1.0, 0.5), &p);
        assert!(close(i.d, 0.95, 1e-15) && close(i.q, 0.3, 1e-15));
    }
}
