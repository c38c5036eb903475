use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use codesign::certifier::{certify_bundle, AccelBox, CertConfig};
use codesign::controller::{default_bundle, ControllerBundle};
use codesign::mission::{
    load_bundle, load_plan, monitor, plan_status, read_trace_csv, run_pipeline, sim_status, simulate_and_check, to_toml,
    trace_csv, ExitStatus, Mission, PipelineOptions, PlanReport,
};
use codesign::planner::{plan, trace_from_plan};
use codesign::stl::parse_spec;

/// STL mission planning with certified tracking for quadrotor fleets.
#[derive(Parser)]
#[command(name = "codesign", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan waypoints for a mission against the bundle's tracking bound.
    Plan(PlanArgs),
    /// Track a plan with the bundle's controller and check the error tube.
    Simulate(SimArgs),
    /// Robustness of a trace file against the mission spec.
    Monitor(MonitorArgs),
    /// Sample the bundle's invariance and input-bound conditions.
    Certify(CertifyArgs),
    /// certify → plan → simulate → monitor, writing every artifact.
    Pipeline(PipelineArgs),
    /// Write the built-in controller bundle to a file.
    ExportBundle {
        #[arg(long, default_value = "bundle.toml")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    mission: PathBuf,
    /// Controller bundle file; defaults to the mission's reference.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    plan: PathBuf,
    /// Simulation step in seconds.
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args)]
struct MonitorArgs {
    /// Mission whose regions (and spec, unless --spec is given) are used.
    #[arg(long)]
    mission: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    spec: Option<String>,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Takes the acceleration box from this mission's limits.
    #[arg(long)]
    mission: Option<PathBuf>,
    /// Symmetric acceleration bound when no mission is given.
    #[arg(long, default_value_t = 0.6)]
    accel: f64,
    /// Certify at this level instead of the bundle's.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Boundary and interior certification samples.
    #[arg(long)]
    samples: Option<usize>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn bundle_for(mission: Option<&Mission>, path: Option<&Path>) -> Result<ControllerBundle> {
    Ok(match (path, mission) {
        (Some(p), _) => load_bundle(p)?,
        (None, Some(m)) => m.bundle()?,
        (None, None) => default_bundle(),
    })
}

fn cmd_plan(a: PlanArgs) -> Result<ExitStatus> {
    let mission = Mission::load(&a.common.mission)?;
    let bundle = bundle_for(Some(&mission), a.common.bundle.as_deref())?;
    out_dir(&a.common.out_dir)?;
    let result = plan(&mission.problem(), &mission.planner_config(bundle.delta(), a.seed));
    let status = plan_status(&result);
    match result {
        Ok(out) => {
            let dir = &a.common.out_dir;
            write(&dir.join("plan.toml"), &to_toml(&out.plan))?;
            write(&dir.join("plan_report.toml"), &to_toml(&PlanReport::new(&out)))?;
            let trace = trace_from_plan(&out.plan, mission.file.planner.dt)?;
            write(&dir.join("planned_trace.csv"), &trace_csv(&trace, &mission.layout))?;
            println!(
                "{:?}: rho = {:.4} (needs >= delta + margin = {:.4}), rho_smooth = {:.4}, epsilon = {:.4}",
                out.status,
                out.rho,
                out.delta + out.margin,
                out.rho_smooth,
                out.epsilon
            );
            out.diagnostics.iter().for_each(|d| println!("  {d}"));
        }
        Err(e) => eprintln!("plan failed: {e}"),
    }
    Ok(status)
}

fn cmd_simulate(a: SimArgs) -> Result<ExitStatus> {
    let mission = Mission::load(&a.common.mission)?;
    let bundle = bundle_for(Some(&mission), a.common.bundle.as_deref())?;
    let plan = load_plan(&a.plan)?;
    out_dir(&a.common.out_dir)?;
    let dt = a.dt.unwrap_or(mission.file.sim.dt);
    let result = simulate_and_check(&mission, &plan, &bundle, dt, Some(&a.common.out_dir));
    let status = sim_status(&result);
    match result {
        Ok(r) => {
            write(&a.common.out_dir.join("sim_report.toml"), &to_toml(&r))?;
            let t = &r.tube;
            println!(
                "sup error {:.4} (delta {:.4}, rho {:.4}); tracked rho = {:.4}; tube {}",
                t.sup_error,
                t.delta,
                t.rho,
                t.tracked_rho,
                if t.pass() { "PASS" } else { "FAIL" }
            );
        }
        Err(e) => eprintln!("simulation failed: {e}"),
    }
    Ok(status)
}

fn cmd_monitor(a: MonitorArgs) -> Result<ExitStatus> {
    let mission = Mission::load(&a.mission)?;
    let text = fs::read_to_string(&a.trace).with_context(|| format!("reading {}", a.trace.display()))?;
    let (trace, layout) = read_trace_csv(&text, &a.trace.display().to_string())?;
    let formula = match &a.spec {
        Some(s) => parse_spec(s, &layout, &mission.regions)?,
        None => {
            if layout.uav_count() != mission.uav_count() {
                bail!("trace has {} UAVs, mission has {}", layout.uav_count(), mission.uav_count());
            }
            mission.formula.clone()
        }
    };
    let r = monitor(&formula, &trace)?;
    print!("{}", to_toml(&r));
    Ok(if r.rho > 0.0 { ExitStatus::Success } else { ExitStatus::SpecViolated })
}

fn cmd_certify(a: CertifyArgs) -> Result<ExitStatus> {
    let mission = a.mission.as_deref().map(Mission::load).transpose()?;
    let mut bundle = bundle_for(mission.as_ref(), a.bundle.as_deref())?;
    if let Some(eta) = a.eta {
        bundle = bundle.with_level(eta)?;
    }
    let accel = match &mission {
        Some(m) => m.accel_box(),
        None => AccelBox {
            lo: [-a.accel; 3],
            hi: [a.accel; 3],
        },
    };
    let mut cfg = mission.as_ref().map(|m| m.file.cert).unwrap_or_default();
    if let Some(n) = a.samples {
        cfg.boundary_samples = n;
        cfg.interior_samples = n;
    }
    cfg.seed = a.seed;
    let report = certify_bundle(&bundle, &accel, &cfg)?;
    out_dir(&a.out_dir)?;
    write(&a.out_dir.join("cert_report.toml"), &to_toml(&report))?;
    println!(
        "invariance {}: worst Lie derivative {:.4e} over {} samples x {} accelerations",
        if report.invariance.pass { "PASS" } else { "FAIL" },
        report.invariance.worst.lie_derivative,
        report.invariance.samples,
        report.invariance.accel_points
    );
    println!(
        "inputs {}: worst excess {:.4e} on channel {} over {} samples",
        if report.inputs.pass { "PASS" } else { "FAIL" },
        report.inputs.worst.excess,
        report.inputs.worst.channel,
        report.inputs.samples
    );
    println!("delta = {:.6} at eta = {}", report.delta, report.eta);
    println!("{}", report.caveat);
    Ok(if report.pass { ExitStatus::Success } else { ExitStatus::CertificationFailed })
}

fn cmd_pipeline(a: PipelineArgs) -> Result<ExitStatus> {
    let mission = Mission::load(&a.common.mission)?;
    let cert = a.samples.map(|n| CertConfig {
        boundary_samples: n,
        interior_samples: n,
        ..mission.file.cert
    });
    let opts = PipelineOptions {
        seed: a.seed,
        sim_dt: a.dt,
        out_dir: a.common.out_dir.clone(),
        cert,
        bundle: a.common.bundle.as_deref().map(load_bundle).transpose()?,
    };
    let summary = run_pipeline(&mission, &opts)?;
    summary.messages.iter().for_each(|m| println!("{m}"));
    let t = summary.timings;
    println!("time: certify {:.2} s, plan {:.2} s, simulate {:.2} s", t.certify, t.plan, t.simulate);
    println!("status: {:?}", summary.status);
    Ok(summary.status)
}

fn run(cli: Cli) -> Result<ExitStatus> {
    match cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Monitor(a) => cmd_monitor(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::ExportBundle { out } => {
            write(&out, &default_bundle().to_toml())?;
            println!("wrote {}", out.display());
            Ok(ExitStatus::Success)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
