#![allow(dead_code)]

use gfm_swing::csa::{mode_step, CsaKind, LimiterState};
use gfm_swing::dynamics::{extract_transitions, simulate, Scenario, TransitionKind};
use gfm_swing::phasor::{pcc_voltage, unsaturated_current, wrap180, DqPair, Impedance, Network, SystemParams};
use gfm_swing::protection::{blinder_region, run_detector, BlinderConfig, RelayConfig, Tier};

pub const LIMITERS: [CsaKind; 3] = [CsaKind::Circular, CsaKind::DPriority, CsaKind::QPriority];

/// Magnitude bound, idempotence and odd symmetry of one limiter on one reference.
pub fn check_limiter(kind: CsaKind, r: DqPair, i_max: f64) -> Result<(), String> {
    let out = kind.limit(r, i_max);
    if out.magnitude() > i_max * (1.0 + 1e-12) {
        return Err(format!("{kind}: |{out:?}| > {i_max} for {r:?}"));
    }
    let again = kind.limit(out, i_max);
    if (again - out).magnitude() > 1e-12 * i_max.max(1.0) {
        return Err(format!("{kind}: not idempotent at {r:?}"));
    }
    let neg = kind.limit(r.scale(-1.0), i_max);
    if (neg + out).magnitude() > 1e-12 * i_max.max(1.0) {
        return Err(format!("{kind}: not odd at {r:?}"));
    }
    if r.magnitude() <= i_max && out != r {
        return Err(format!("{kind}: changed an in-limit reference {r:?}"));
    }
    Ok(())
}

/// Unsaturated current fed back through the network reproduces the voltage reference.
pub fn check_closure(delta: f64, params: &SystemParams) -> Result<(), String> {
    let i = unsaturated_current(delta, params).map_err(|e| e.to_string())?;
    let v = pcc_voltage(i, delta, params);
    let err = (v - params.v_ref()).magnitude();
    if err > 1e-9 {
        return Err(format!("closure error {err:e} at delta {delta}"));
    }
    Ok(())
}

/// Quasi-static sweep of delta over a full turn; returns the number of saturation edges.
pub fn sweep_edges(kind: CsaKind, params: &SystemParams, step_deg: f64) -> usize {
    let net = Network::healthy(params).expect("network");
    let mut st = LimiterState::default();
    let mut edges = 0;
    let n = (360.0 / step_deg).round() as usize;
    for k in 0..=n {
        let (next, _) = mode_step(&st, kind, k as f64 * step_deg, &net, 1e-4);
        if next.saturated != st.saturated && k > 0 {
            edges += 1;
        }
        st = next;
    }
    edges
}

/// Deterministic pseudo-random impedance walk for detector tests.
pub fn impedance_walk(seed: u64, n: usize) -> Vec<(f64, Option<Impedance>)> {
    let mut x = seed | 1;
    let mut next = move || {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        (x >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut z = Impedance::new(1.0, 0.5);
    (0..n)
        .map(|k| {
            z = Impedance::new(z.r() + 0.1 * (next() - 0.5), z.x() + 0.1 * (next() - 0.5));
            let sample = if next() < 0.02 { None } else { Some(z) };
            (k as f64 * 1e-3, sample)
        })
        .collect()
}

pub fn check_detector_determinism(seed: u64, cfg: &RelayConfig) -> Result<(), String> {
    let walk = impedance_walk(seed, 2000);
    let a = run_detector(walk.iter().copied(), cfg);
    let b = run_detector(walk.iter().copied(), cfg);
    if a != b {
        return Err(format!("detector differs between identical runs (seed {seed})"));
    }
    Ok(())
}

/// Along a straight path from outside to a point in the inner tier the tier never decreases
/// and every tier is visited.
pub fn check_tier_nesting(from: Impedance, cfg: &BlinderConfig) -> Result<(), String> {
    let target = Impedance::new(0.0, 0.5 * (cfg.x_fwd_inn + cfg.x_rev_inn));
    if blinder_region(target, cfg) != Tier::Inner || blinder_region(from, cfg) != Tier::Outside {
        return Ok(());
    }
    let mut prev = Tier::Outside;
    let mut seen = [false; 4];
    for k in 0..=4000 {
        let s = k as f64 / 4000.0;
        let z = Impedance(from.0 + (target.0 - from.0) * s);
        let tier = blinder_region(z, cfg);
        if tier < prev {
            return Err(format!("tier dropped from {prev:?} to {tier:?} at {z:?}"));
        }
        seen[tier as usize] = true;
        prev = tier;
    }
    if seen.iter().all(|s| *s) {
        Ok(())
    } else {
        Err(format!("path from {from:?} skipped a tier: {seen:?}"))
    }
}

/// Crossing angles of the post-disturbance transitions.
pub fn crossing_angles(sc: &Scenario) -> Vec<(TransitionKind, f64)> {
    let tr = simulate(sc).expect("simulation");
    let after = sc.last_disturbance_end();
    extract_transitions(&tr).into_iter().filter(|t| t.t >= after).map(|t| (t.kind, t.crossing)).collect()
}

/// Largest transition-angle change when the step is halved.
pub fn dt_halving_drift(sc: &Scenario) -> Result<f64, String> {
    let coarse = crossing_angles(sc);
    let fine = crossing_angles(&Scenario { dt: sc.dt / 2.0, ..sc.clone() });
    let n = coarse.len().min(fine.len()).min(4);
    if n == 0 {
        return Err("no transitions".into());
    }
    let mut worst = 0.0f64;
    for (a, b) in coarse.iter().zip(&fine).take(n) {
        if a.0 != b.0 {
            return Err(format!("transition order differs: {:?} vs {:?}", a.0, b.0));
        }
        worst = worst.max(wrap180(a.1 - b.1).abs());
    }
    Ok(worst)
}
