//! CSV trace, relay-event log and report files.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::dynamics::{Trace, TraceSample};
use crate::phasor::{DqPair, Impedance};
use crate::protection::{blinder_region, mho_zone, RelayConfig, RelayEvent};

use super::{ComparisonReport, HarnessError};

pub const TRACE_HEADER: [&str; 14] = [
    "t", "delta_deg", "id_pu", "iq_pu", "vd_pu", "vq_pu", "imag_pu", "r_app_pu", "x_app_pu", "mode", "theta_i_deg",
    "pe_pu", "relay_tier", "relay_zone",
];

/// Decimal with 9 significant digits.
pub fn sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let mag = x.abs().log10().floor() as i32;
    let prec = (8 - mag).clamp(0, 40) as usize;
    let s = format!("{x:.prec$}");
    // rounding can carry into a new digit (9.9999999995 -> 10.00000000)
    let digits = s.chars().filter(|c| c.is_ascii_digit()).skip_while(|c| *c == '0').count();
    let s = if digits > 9 && prec > 0 { format!("{x:.p$}", p = prec - 1) } else { s };
    if s.starts_with("-0") && s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn trace_rows(trace: &Trace, relay: &RelayConfig) -> Vec<Vec<String>> {
    trace
        .samples
        .iter()
        .map(|s| {
            let (r, x, tier, zone) = match s.z_app {
                Some(z) => (
                    sig9(z.r()),
                    sig9(z.x()),
                    blinder_region(z, &relay.blinders).as_str().to_string(),
                    mho_zone(z, &relay.mho).map_or(String::new(), |n| n.to_string()),
                ),
                None => (String::new(), String::new(), "outside".to_string(), String::new()),
            };
            vec![
                sig9(s.t),
                sig9(s.delta),
                sig9(s.i_dq.d),
                sig9(s.i_dq.q),
                sig9(s.v_dq.d),
                sig9(s.v_dq.q),
                sig9(s.i_mag),
                r,
                x,
                if s.saturated { "sat" } else { "unsat" }.to_string(),
                sig9(s.theta_i),
                sig9(s.p_e),
                tier,
                zone,
            ]
        })
        .collect()
}

pub fn write_trace_csv<W: Write>(trace: &Trace, out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for row in trace_rows(trace, &trace.scenario.relay) {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn field(rec: &csv::StringRecord, i: usize, line: usize) -> Result<f64, HarnessError> {
    let v = rec.get(i).unwrap_or("");
    v.parse::<f64>()
        .map_err(|_| HarnessError::Parse(format!("trace row {line}: column {} is not a number: `{v}`", TRACE_HEADER[i])))
}

/// Parses a trace CSV back into samples.
pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceSample>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != TRACE_HEADER {
        return Err(HarnessError::Parse(format!("unexpected trace header: {}", header.join(","))));
    }
    let mut out = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let z_app = match (rec.get(7), rec.get(8)) {
            (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => {
                Some(Impedance::new(field(&rec, 7, line)?, field(&rec, 8, line)?))
            }
            _ => None,
        };
        let saturated = match rec.get(9) {
            Some("sat") => true,
            Some("unsat") => false,
            other => return Err(HarnessError::Parse(format!("trace row {line}: bad mode {other:?}"))),
        };
        out.push(TraceSample {
            t: field(&rec, 0, line)?,
            delta: field(&rec, 1, line)?,
            i_dq: DqPair::new(field(&rec, 2, line)?, field(&rec, 3, line)?),
            v_dq: DqPair::new(field(&rec, 4, line)?, field(&rec, 5, line)?),
            i_mag: field(&rec, 6, line)?,
            z_app,
            saturated,
            theta_i: field(&rec, 10, line)?,
            p_e: field(&rec, 11, line)?,
        });
    }
    Ok(out)
}

pub fn write_events_csv<W: Write>(events: &[RelayEvent], out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["t", "kind", "detail"])?;
    for e in events {
        w.write_record([sig9(e.t), e.kind.name().to_string(), e.kind.detail()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report_csv<W: Write>(report: &ComparisonReport, out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["quantity", "theoretical", "simulated", "abs_error", "tolerance", "pass"])?;
    for r in &report.rows {
        w.write_record([
            r.quantity.clone(),
            sig9(r.theoretical),
            sig9(r.simulated),
            sig9(r.abs_error),
            r.tolerance.to_string(),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Files written by [`export_trace`].
#[derive(Debug, Clone)]
pub struct ExportPaths {
    pub trace: PathBuf,
    pub events: PathBuf,
    pub scenario: PathBuf,
}

/// Writes `trace.csv`, `relay_events.csv` and the `scenario.ini` that produced them.
pub fn export_trace(
    trace: &Trace,
    events: &[RelayEvent],
    dir: &Path,
    notes: &[String],
) -> Result<ExportPaths, HarnessError> {
    fs::create_dir_all(dir)?;
    let paths = ExportPaths {
        trace: dir.join("trace.csv"),
        events: dir.join("relay_events.csv"),
        scenario: dir.join("scenario.ini"),
    };
    write_trace_csv(trace, fs::File::create(&paths.trace)?)?;
    write_events_csv(events, fs::File::create(&paths.events)?)?;
    fs::write(&paths.scenario, super::config::save_scenario(&trace.scenario, notes))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Scenario;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(1.0), "1.00000000");
        assert_eq!(sig9(54.2555123456), "54.2555123");
        assert_eq!(sig9(-0.000123456789123), "-0.000123456789");
        assert_eq!(sig9(9.9999999996), "10.0000000");
        assert_eq!(sig9(-1e-20), "-0.0000000000000000000100000000");
        assert_eq!(sig9(123456789012.0), "123456789012");
    }

    #[test]
    fn empty_trace_is_header_only() {
        let tr = Trace { scenario: Scenario::default(), samples: vec![] };
        let mut buf = Vec::new();
        write_trace_csv(&tr, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", TRACE_HEADER.join(",")));
    }
}
