//! Mho distance zones and the three-blinder power-swing detector.

use thiserror::Error;

use crate::phasor::{rad, Impedance};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid relay setting: {0}")]
pub struct RelayConfigError(pub String);

#[derive(Debug, Clone, PartialEq)]
pub struct MhoZoneConfig {
    /// Zone reaches Z1..Z3; each circle passes through the origin with this diameter.
    pub reaches: [Impedance; 3],
    pub delays: [f64; 3],
}

impl Default for MhoZoneConfig {
    fn default() -> Self {
        MhoZoneConfig::for_line(0.3, 87.44)
    }
}

impl MhoZoneConfig {
    /// Zones at 80/120/200 % of the line impedance magnitude.
    pub fn for_line(z_l: f64, angle: f64) -> Self {
        MhoZoneConfig {
            reaches: [
                Impedance::polar(0.8 * z_l, angle),
                Impedance::polar(1.2 * z_l, angle),
                Impedance::polar(2.0 * z_l, angle),
            ],
            delays: [0.0, 0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlinderConfig {
    pub r_out: f64,
    pub r_mid: f64,
    pub r_inn: f64,
    pub x_fwd_out: f64,
    pub x_fwd_mid: f64,
    pub x_fwd_inn: f64,
    pub x_rev_out: f64,
    pub x_rev_mid: f64,
    pub x_rev_inn: f64,
    /// Blinder line angle (deg).
    pub blinder_angle: f64,
    pub t_psb: f64,
}

impl Default for BlinderConfig {
    fn default() -> Self {
        BlinderConfig {
            r_out: 0.42,
            r_mid: 0.31,
            r_inn: 0.13,
            x_fwd_out: 0.94,
            x_fwd_mid: 0.80,
            x_fwd_inn: 0.68,
            x_rev_out: -0.28,
            x_rev_mid: -0.24,
            x_rev_inn: -0.20,
            blinder_angle: 87.14,
            t_psb: 0.033,
        }
    }
}

impl BlinderConfig {
    /// Blinders scaled to a line of magnitude `z_l` by the setting rule that
    /// reproduces the default tiers at z_l = 0.3: the middle tier encloses
    /// zone 3 with fixed margins to the outer and inner tiers. Reverse reaches
    /// are taken from the defaults. The fixed inner offset needs z_l above
    /// about 0.126 pu; shorter lines give a config that fails validation.
    pub fn for_line(z_l: f64) -> Self {
        let z3 = 2.0 * z_l;
        let r_mid = 1.0333 * z3 / 2.0;
        let x_fwd_mid = 1.3333 * z3;
        BlinderConfig {
            r_out: r_mid + 0.11,
            r_mid,
            r_inn: 0.13,
            x_fwd_out: x_fwd_mid + 0.14,
            x_fwd_mid,
            x_fwd_inn: x_fwd_mid - 0.12,
            ..Default::default()
        }
    }

    fn tier(&self, k: usize) -> (f64, f64, f64) {
        match k {
            0 => (self.r_out, self.x_fwd_out, self.x_rev_out),
            1 => (self.r_mid, self.x_fwd_mid, self.x_rev_mid),
            _ => (self.r_inn, self.x_fwd_inn, self.x_rev_inn),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RelayConfig {
    pub mho: MhoZoneConfig,
    pub blinders: BlinderConfig,
}

impl RelayConfig {
    pub fn validate(&self) -> Result<(), RelayConfigError> {
        let bad = |m: &str| Err(RelayConfigError(m.to_string()));
        let b = &self.blinders;
        let vals = [
            b.r_out, b.r_mid, b.r_inn, b.x_fwd_out, b.x_fwd_mid, b.x_fwd_inn, b.x_rev_out, b.x_rev_mid, b.x_rev_inn,
            b.blinder_angle, b.t_psb,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return bad("blinder settings must be finite");
        }
        if rad(b.blinder_angle).tan().abs() < 1e-12 {
            return bad("blinder_angle must not be 0");
        }
        if !(0.0 < b.r_inn && b.r_inn < b.r_mid && b.r_mid < b.r_out) {
            return bad("blinder offsets must satisfy 0 < r_inn < r_mid < r_out");
        }
        for k in 0..3 {
            let (_, fwd, rev) = b.tier(k);
            if !(rev < 0.0 && 0.0 < fwd) {
                return bad("each tier needs reverse reach < 0 < forward reach");
            }
        }
        if !(b.x_fwd_inn <= b.x_fwd_mid && b.x_fwd_mid <= b.x_fwd_out) {
            return bad("forward reaches must be nested (inner <= middle <= outer)");
        }
        if !(b.x_rev_out <= b.x_rev_mid && b.x_rev_mid <= b.x_rev_inn) {
            return bad("reverse reaches must be nested (outer <= middle <= inner)");
        }
        if b.t_psb <= 0.0 {
            return bad("t_psb must be > 0");
        }
        let m = &self.mho;
        let mags: Vec<f64> = m.reaches.iter().map(|z| z.magnitude()).collect();
        if !(0.0 < mags[0] && mags[0] < mags[1] && mags[1] < mags[2]) {
            return bad("zone reaches must satisfy 0 < |Z1| < |Z2| < |Z3|");
        }
        if !(m.delays[0] >= 0.0 && m.delays[0] <= m.delays[1] && m.delays[1] <= m.delays[2]) {
            return bad("zone delays must be non-negative and non-decreasing");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Tier {
    Outside,
    OuterBand,
    Middle,
    Inner,
}

impl Tier {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tier::Outside => "outside",
            Tier::OuterBand => "outer",
            Tier::Middle => "middle",
            Tier::Inner => "inner",
        }
    }
}

/// Smallest zone (1-based) whose mho circle contains `z`.
pub fn mho_zone(z: Impedance, cfg: &MhoZoneConfig) -> Option<u8> {
    cfg.reaches
        .iter()
        .position(|zr| (z.0 * (z.0 - zr.0).conj()).re <= 0.0)
        .map(|i| i as u8 + 1)
}

/// Innermost blinder tier containing `z`.
pub fn blinder_region(z: Impedance, cfg: &BlinderConfig) -> Tier {
    let horiz = (z.r() - z.x() / rad(cfg.blinder_angle).tan()).abs();
    let inside = |k: usize| {
        let (r, fwd, rev) = cfg.tier(k);
        horiz <= r && rev <= z.x() && z.x() <= fwd
    };
    if inside(2) {
        Tier::Inner
    } else if inside(1) {
        Tier::Middle
    } else if inside(0) {
        Tier::OuterBand
    } else {
        Tier::Outside
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Fault,
    Swing,
}

/// Blinder-transit time test; a tie counts as a swing.
pub fn classify(dt: f64, t_psb: f64) -> Classification {
    if dt < t_psb {
        Classification::Fault
    } else {
        Classification::Swing
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RelayEventKind {
    ZonePickup(u8),
    ZoneTrip(u8),
    SwingDetected(f64),
    FaultDeclared(f64),
    OstTrip,
}

impl RelayEventKind {
    pub fn name(&self) -> &'static str {
        match self {
            RelayEventKind::ZonePickup(_) => "zone_pickup",
            RelayEventKind::ZoneTrip(_) => "zone_trip",
            RelayEventKind::SwingDetected(_) => "swing_detected",
            RelayEventKind::FaultDeclared(_) => "fault_declared",
            RelayEventKind::OstTrip => "ost_trip",
        }
    }

    pub fn detail(&self) -> String {
        match self {
            RelayEventKind::ZonePickup(z) | RelayEventKind::ZoneTrip(z) => format!("zone={z}"),
            RelayEventKind::SwingDetected(dt) | RelayEventKind::FaultDeclared(dt) => format!("dT={dt:.6}"),
            RelayEventKind::OstTrip => String::new(),
        }
    }

    /// Power-swing detector output, as opposed to distance-zone timing.
    pub fn is_swing_logic(&self) -> bool {
        matches!(self, RelayEventKind::SwingDetected(_) | RelayEventKind::FaultDeclared(_) | RelayEventKind::OstTrip)
    }

    /// Blinder transit time of a classification event.
    pub fn transit_time(&self) -> Option<f64> {
        match self {
            RelayEventKind::SwingDetected(dt) | RelayEventKind::FaultDeclared(dt) => Some(*dt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayEvent {
    pub t: f64,
    pub kind: RelayEventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState {
    pub region: Tier,
    pub timer_start: Option<f64>,
    pub swing_declared: bool,
    /// Distance tripping blocked by a detected swing.
    pub blocking: bool,
    zone_pickup: [Option<f64>; 3],
    zone_tripped: [bool; 3],
    pub events: Vec<RelayEvent>,
}

impl Default for DetectorState {
    fn default() -> Self {
        DetectorState {
            region: Tier::Outside,
            timer_start: None,
            swing_declared: false,
            blocking: false,
            zone_pickup: [None; 3],
            zone_tripped: [false; 3],
            events: Vec::new(),
        }
    }
}

/// Advances the detector by one impedance sample. An open sample counts as outside.
pub fn detector_step(mut s: DetectorState, z: Option<Impedance>, t: f64, cfg: &RelayConfig) -> DetectorState {
    let tier = z.map_or(Tier::Outside, |z| blinder_region(z, &cfg.blinders));
    let prev = s.region;
    let push = |s: &mut DetectorState, kind| s.events.push(RelayEvent { t, kind });

    match tier {
        Tier::Outside => {
            s.timer_start = None;
            s.swing_declared = false;
            s.blocking = false;
        }
        Tier::OuterBand => {
            if prev == Tier::Outside {
                s.timer_start = Some(t);
            }
        }
        Tier::Middle | Tier::Inner => {
            if let Some(t0) = s.timer_start.take() {
                let dt = t - t0;
                match classify(dt, cfg.blinders.t_psb) {
                    Classification::Swing => {
                        s.swing_declared = true;
                        s.blocking = true;
                        push(&mut s, RelayEventKind::SwingDetected(dt));
                    }
                    Classification::Fault => push(&mut s, RelayEventKind::FaultDeclared(dt)),
                }
            } else if prev == Tier::Outside {
                push(&mut s, RelayEventKind::FaultDeclared(0.0));
            }
            if tier == Tier::Inner && prev != Tier::Inner && s.swing_declared {
                push(&mut s, RelayEventKind::OstTrip);
            }
        }
    }
    s.region = tier;

    let zone = z.and_then(|z| mho_zone(z, &cfg.mho));
    for k in 0..3 {
        let inside = zone.is_some_and(|n| (n as usize) <= k + 1);
        if !inside {
            s.zone_pickup[k] = None;
            s.zone_tripped[k] = false;
            continue;
        }
        let since = match s.zone_pickup[k] {
            Some(t0) => t0,
            None => {
                s.zone_pickup[k] = Some(t);
                push(&mut s, RelayEventKind::ZonePickup(k as u8 + 1));
                t
            }
        };
        if !s.zone_tripped[k] && !s.blocking && t - since >= cfg.mho.delays[k] {
            s.zone_tripped[k] = true;
            push(&mut s, RelayEventKind::ZoneTrip(k as u8 + 1));
        }
    }
    s
}

/// Replays a sequence of (t, z) samples through a fresh detector.
pub fn run_detector<I>(samples: I, cfg: &RelayConfig) -> DetectorState
where
    I: IntoIterator<Item = (f64, Option<Impedance>)>,
{
    samples
        .into_iter()
        .fold(DetectorState::default(), |s, (t, z)| detector_step(s, z, t, cfg))
}
