use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use gfm_swing::analytic::{self, AnalyticError};
use gfm_swing::csa::CsaKind;
use gfm_swing::dynamics::{simulate, SimulationError, Trace};
use gfm_swing::harness::export::{export_trace, read_trace_csv, write_report_csv};
use gfm_swing::harness::{
    angle_grid, compare_angles, load_scenario, relay_events, run_cases, sweep_beta, sweep_scenario, CaseId,
    HarnessError,
};

#[derive(Parser)]
#[command(name = "gfm-swing", version, about = "Power-swing simulator for a current-limited grid-forming inverter")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a scenario file and write trace.csv, relay_events.csv and scenario.ini.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run preset cases (A B C D E F G1 G2 H, or `all`).
    Case {
        #[arg(required = true)]
        ids: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        parallel: bool,
    },
    /// Print the closed-form angles and impedance loci for a scenario.
    Analytic {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Sweep the ConstantAngle beta and report the smallest entry jump.
    SweepBeta {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = -60.0, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
    },
    /// Compare a trace against the closed-form angles (reads scenario.ini next to it).
    Compare {
        #[arg(long)]
        trace: PathBuf,
    },
}

fn read_scenario(path: &Path) -> Result<gfm_swing::dynamics::Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let sc = load_scenario(&text).map_err(HarnessError::from).with_context(|| format!("in {}", path.display()))?;
    sc.validate().map_err(HarnessError::from)?;
    Ok(sc)
}

fn cmd_run(scenario: &Path, out: &Path) -> Result<()> {
    let sc = read_scenario(scenario)?;
    let trace = simulate(&sc).map_err(HarnessError::from)?;
    let events = relay_events(&trace);
    let paths = export_trace(&trace, &events, out, &[])?;
    println!("{} samples, {} relay events -> {}", trace.samples.len(), events.len(), paths.trace.display());
    for e in &events {
        println!("  t={:.4} {} {}", e.t, e.kind.name(), e.kind.detail());
    }
    Ok(())
}

fn cmd_case(ids: &[String], out: &Path, parallel: bool) -> Result<bool> {
    let ids: Vec<CaseId> = if ids.iter().any(|s| s.eq_ignore_ascii_case("all")) {
        CaseId::ALL.to_vec()
    } else {
        ids.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
    };
    let mut all_pass = true;
    for (id, res) in ids.iter().zip(run_cases(&ids, parallel)) {
        let oc = res.with_context(|| format!("case {id}"))?;
        let dir = out.join(format!("case_{id}"));
        export_trace(&oc.trace, &oc.events, &dir, &oc.notes)?;
        write_report_csv(&oc.report, fs::File::create(dir.join("report.csv"))?)?;
        print!("{}", oc.report);
        println!("-> {}\n", dir.display());
        all_pass &= oc.report.passed();
    }
    Ok(all_pass)
}

fn cmd_analytic(scenario: &Path) -> Result<()> {
    let sc = read_scenario(scenario)?;
    let p = &sc.params;
    let show = |name: &str, v: Result<f64, AnalyticError>| match v {
        Ok(x) => println!("{name:<22} {x:>10.4}"),
        Err(e) => println!("{name:<22} {e}"),
    };
    match analytic::delta_enter(p) {
        Some(d) => println!("{:<22} {d:>10.4}", "delta_enter"),
        None => println!("{:<22} never saturates", "delta_enter"),
    }
    show("delta_exit_circular", analytic::delta_exit_circular(p));
    show("delta_exit_d", analytic::delta_exit_d(p));
    show("delta_exit_q", analytic::delta_exit_q(p));
    show("beta_opt", analytic::beta_opt(p));
    show("continuity_beta", analytic::continuity_beta(p));
    if let Ok((lo, hi)) = analytic::q_forced_window(p) {
        println!("{:<22} [{lo:.4}, {hi:.4}]", "q_forced_window");
    }
    for kind in [CsaKind::Circular, CsaKind::DPriority, CsaKind::QPriority] {
        if let Ok(set) = analytic::exit_angle_set(kind, p) {
            let iv: Vec<String> = set.intervals().iter().map(|(a, b)| format!("[{a:.4}, {b:.4}]")).collect();
            println!("exit set {:<13} {}", kind.name(), iv.join(" "));
        }
    }
    let g = analytic::trajectory_geometry(p);
    println!(
        "{:<22} center {:.5}{:+.5}j radius {:.5}",
        "saturated circle", g.circle.center.re, g.circle.center.im, g.circle.radius
    );
    println!(
        "{:<22} midpoint {:.5}{:+.5}j direction {:.5}{:+.5}j",
        "unsaturated line", g.line.midpoint.re, g.line.midpoint.im, g.line.direction.re, g.line.direction.im
    );
    Ok(())
}

fn cmd_sweep(scenario: Option<&Path>, from: f64, to: f64, step: f64) -> Result<()> {
    let sc = match scenario {
        Some(p) => read_scenario(p)?,
        None => sweep_scenario(),
    };
    let grid = angle_grid(from, to, step);
    if grid.is_empty() {
        bail!("empty beta grid: from={from} to={to} step={step}");
    }
    let sw = sweep_beta(&sc, &grid)?;
    println!("beta_deg,entry_jump_pu");
    for (b, j) in &sw.table {
        println!("{b:.4},{j:.6}");
    }
    println!("beta_star = {:.4}", sw.beta_star);
    if let Ok(b) = analytic::beta_opt(&sc.params) {
        println!("closed-form beta = {b:.4}");
    }
    Ok(())
}

fn cmd_compare(trace_path: &Path) -> Result<bool> {
    let ini = trace_path.with_file_name("scenario.ini");
    let sc = read_scenario(&ini)?;
    let f = fs::File::open(trace_path).with_context(|| format!("opening {}", trace_path.display()))?;
    let samples = read_trace_csv(f)?;
    let csa = sc.csa;
    let trace = Trace { scenario: sc, samples };
    let rep = compare_angles(&trace, &trace.scenario.params, csa);
    print!("{rep}");
    Ok(rep.passed())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(h) = cause.downcast_ref::<HarnessError>() {
            return match h {
                HarnessError::Config(_) => 2,
                HarnessError::Simulation(SimulationError::InvalidScenario(_) | SimulationError::Network(_)) => 2,
                HarnessError::Simulation(SimulationError::Divergence { .. } | SimulationError::NoEquilibrium { .. }) => 3,
                HarnessError::Parse(_) => 2,
                _ => 1,
            };
        }
        if let Some(s) = cause.downcast_ref::<SimulationError>() {
            return match s {
                SimulationError::Divergence { .. } | SimulationError::NoEquilibrium { .. } => 3,
                _ => 2,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Run { scenario, out } => cmd_run(scenario, out).map(|_| true),
        Cmd::Case { ids, out, parallel } => cmd_case(ids, out, *parallel),
        Cmd::Analytic { scenario } => cmd_analytic(scenario).map(|_| true),
        Cmd::SweepBeta { scenario, from, to, step } => cmd_sweep(scenario.as_deref(), *from, *to, *step).map(|_| true),
        Cmd::Compare { trace } => cmd_compare(trace),
    };
    match res {
        Ok(pass) => {
            if !pass {
                eprintln!("some rows are outside tolerance");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
