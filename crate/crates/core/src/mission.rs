//! Mission files, report and log formats, and the plan → simulate →
//! certify → monitor pipeline.
//!
//! Missions, plans and reports are TOML. Traces and simulation logs are
//! comma-separated with a fixed header.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certifier::{certify_bundle, tube_check, AccelBox, CertConfig, CertError, CertReport, TubeReport};
use crate::controller::{default_bundle, ControllerBundle, ControllerError};
use crate::dynamics::{integrate, rotor_allocation, DynError, PlannedState, QuadState, SimLog};
use crate::planner::{
    plan, trace_from_plan, PenaltySchedule, PlanError, PlanOutcome, PlanProblem, PlanStatus, PlannerConfig, RestartSummary,
    SeedingMode, WaypointPlan,
};
use crate::smooth::{SmoothConfig, SmoothError};
use crate::spline::{KinematicLimits, SplineError};
use crate::stl::{parse_spec, robustness, Formula, MultiTrace, ParseError, Region, SignalLayout, StlError, Verdict, UAV_DIM};

#[derive(Debug, Error)]
pub enum MissionError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("invalid mission: {0}")]
    Invalid(String),
    #[error("spec: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Dynamics(#[from] DynError),
    #[error(transparent)]
    Cert(#[from] CertError),
    #[error("bundle: {0}")]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Smooth(#[from] SmoothError),
}

pub type Result<T> = std::result::Result<T, MissionError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| MissionError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| MissionError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn from_toml<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| MissionError::Format {
        path: what.to_string(),
        message: e.to_string(),
    })
}

pub fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("report types serialize to TOML")
}

/// Process exit status shared by the CLI subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Success,
    SpecViolated,
    Infeasible,
    CertificationFailed,
    Diverged,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            Self::Success => 0,
            Self::SpecViolated => 2,
            Self::Infeasible => 3,
            Self::CertificationFailed => 4,
            Self::Diverged => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl BoxSpec {
    fn region(&self, name: &str) -> Result<Region> {
        Region::new(self.lo, self.hi).map_err(|_| MissionError::Invalid(format!("region {name} needs finite lo <= hi")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavInit {
    pub position: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
    /// Roll and pitch in rad.
    #[serde(default)]
    pub angles: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSettings {
    pub segments: usize,
    pub segment_duration: f64,
    pub dt: f64,
    pub restarts: usize,
    pub seed: u64,
    pub temperature: f64,
    pub seeding: SeedingMode,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub noise: f64,
    pub tighten: f64,
    pub penalty: PenaltySchedule,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        let d = PlannerConfig::default();
        Self {
            segments: d.segments,
            segment_duration: d.segment_duration,
            dt: d.dt,
            restarts: d.restarts,
            seed: d.seed,
            temperature: d.smooth.temperature(),
            seeding: d.seeding,
            max_iterations: d.max_iterations,
            tolerance: d.tolerance,
            noise: d.noise,
            tighten: d.tighten,
            penalty: d.penalty,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSettings {
    pub dt: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self { dt: 1e-3 }
    }
}

/// On-disk mission layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionFile {
    pub name: String,
    /// `"default"` or a bundle file path relative to the mission file.
    #[serde(default = "default_bundle_ref")]
    pub bundle: String,
    pub spec: String,
    pub workspace: BoxSpec,
    pub regions: BTreeMap<String, BoxSpec>,
    pub uavs: Vec<UavInit>,
    pub limits: KinematicLimits,
    #[serde(default)]
    pub planner: PlannerSettings,
    #[serde(default)]
    pub sim: SimSettings,
    #[serde(default)]
    pub cert: CertConfig,
}

fn default_bundle_ref() -> String {
    "default".into()
}

/// A validated mission.
#[derive(Debug, Clone)]
pub struct Mission {
    pub file: MissionFile,
    pub formula: Formula,
    pub layout: SignalLayout,
    pub regions: BTreeMap<String, Region>,
    pub workspace: Region,
    base_dir: Option<PathBuf>,
}

impl Mission {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read(path)?;
        let file: MissionFile = from_toml(&text, &path.display().to_string())?;
        Self::new(file, path.parent().map(Path::to_path_buf))
    }

    pub fn from_toml_str(text: &str, base_dir: Option<PathBuf>) -> Result<Self> {
        Self::new(from_toml(text, "mission")?, base_dir)
    }

    pub fn new(file: MissionFile, base_dir: Option<PathBuf>) -> Result<Self> {
        if file.uavs.is_empty() {
            return Err(MissionError::Invalid("at least one UAV is required".into()));
        }
        file.limits.validate()?;
        SmoothConfig::new(file.planner.temperature)?;
        let workspace = file.workspace.region("workspace")?;
        let mut regions = BTreeMap::new();
        for (name, b) in &file.regions {
            regions.insert(name.clone(), b.region(name)?);
        }
        regions.entry("workspace".to_string()).or_insert(workspace);
        for (i, u) in file.uavs.iter().enumerate() {
            if !workspace.contains(&u.position) {
                return Err(MissionError::Invalid(format!(
                    "uav{} starts at {:?}, outside the workspace",
                    i + 1,
                    u.position
                )));
            }
        }
        let layout = SignalLayout::uavs(file.uavs.len());
        let formula = parse_spec(&file.spec, &layout, &regions)?;
        let p = &file.planner;
        if p.segments == 0 || !(p.segment_duration > 0.0) {
            return Err(MissionError::Invalid("planner needs segments >= 1 and segment_duration > 0".into()));
        }
        let span = p.segments as f64 * p.segment_duration;
        if formula.horizon() > span + 1e-9 {
            return Err(MissionError::Invalid(format!(
                "spec horizon {} s exceeds the planned {} s ({} segments of {} s)",
                formula.horizon(),
                span,
                p.segments,
                p.segment_duration
            )));
        }
        if !(file.sim.dt > 0.0 && file.sim.dt <= p.dt) {
            return Err(MissionError::Invalid(format!(
                "sim.dt = {} must be positive and at most planner.dt = {}",
                file.sim.dt, p.dt
            )));
        }
        file.cert.validate()?;
        Ok(Self {
            file,
            formula,
            layout,
            regions,
            workspace,
            base_dir,
        })
    }

    pub fn to_toml(&self) -> String {
        to_toml(&self.file)
    }

    pub fn uav_count(&self) -> usize {
        self.file.uavs.len()
    }

    pub fn bundle(&self) -> Result<ControllerBundle> {
        if self.file.bundle == "default" {
            return Ok(default_bundle());
        }
        let path = match &self.base_dir {
            Some(dir) => dir.join(&self.file.bundle),
            None => PathBuf::from(&self.file.bundle),
        };
        load_bundle(&path)
    }

    pub fn problem(&self) -> PlanProblem {
        PlanProblem {
            formula: self.formula.clone(),
            initial_positions: self.file.uavs.iter().map(|u| u.position).collect(),
            initial_velocities: self.file.uavs.iter().map(|u| u.velocity).collect(),
            workspace: self.workspace,
            limits: self.file.limits,
        }
    }

    pub fn planner_config(&self, delta: f64, seed: Option<u64>) -> PlannerConfig {
        let p = &self.file.planner;
        PlannerConfig {
            segments: p.segments,
            segment_duration: p.segment_duration,
            dt: p.dt,
            restarts: p.restarts,
            seed: seed.unwrap_or(p.seed),
            max_iterations: p.max_iterations,
            tolerance: p.tolerance,
            penalty: p.penalty,
            delta,
            smooth: SmoothConfig::new(p.temperature).expect("validated"),
            seeding: p.seeding,
            noise: p.noise,
            tighten: p.tighten,
        }
    }

    pub fn accel_box(&self) -> AccelBox {
        AccelBox::from_limits(&self.file.limits)
    }
}

pub fn load_bundle(path: &Path) -> Result<ControllerBundle> {
    from_toml(&read(path)?, &path.display().to_string())
}

pub fn load_plan(path: &Path) -> Result<WaypointPlan> {
    from_toml(&read(path)?, &path.display().to_string())
}

/// Summary written next to the plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub status: String,
    pub rho: f64,
    pub rho_smooth: f64,
    pub epsilon: f64,
    pub margin: f64,
    pub delta: f64,
    pub robustness_slack: f64,
    pub workspace_slack: f64,
    pub min_kinematic_slack: f64,
    pub kinematic_violations: usize,
    pub path_length: f64,
    pub diagnostics: Vec<String>,
    pub restarts: Vec<RestartSummary>,
}

impl PlanReport {
    pub fn new(out: &PlanOutcome) -> Self {
        Self {
            status: match out.status {
                PlanStatus::Success => "success",
                PlanStatus::BestEffort => "best_effort",
            }
            .into(),
            rho: out.rho,
            rho_smooth: out.rho_smooth,
            epsilon: out.epsilon,
            margin: out.margin,
            delta: out.delta,
            robustness_slack: out.slacks.robustness,
            workspace_slack: out.slacks.workspace,
            min_kinematic_slack: out.slacks.min_kinematic(),
            kinematic_violations: out.slacks.violations().count(),
            path_length: out.plan.path_length(),
            diagnostics: out.diagnostics.clone(),
            restarts: out.restarts.clone(),
        }
    }
}

pub fn plan_status(result: &std::result::Result<PlanOutcome, PlanError>) -> ExitStatus {
    match result {
        Ok(out) if out.status == PlanStatus::Success => ExitStatus::Success,
        Ok(_) => ExitStatus::SpecViolated,
        Err(PlanError::Infeasible(_)) => ExitStatus::Infeasible,
        Err(_) => ExitStatus::Infeasible,
    }
}

pub fn planned_reference(plan: &WaypointPlan, uav: usize) -> impl Fn(f64) -> PlannedState + '_ {
    move |t| {
        let s = plan.sample(uav, t);
        PlannedState { p: s.p, v: s.v, a: s.a }
    }
}

/// Closed-loop simulation of every UAV over the plan, one thread per UAV.
pub fn simulate(mission: &Mission, plan: &WaypointPlan, bundle: &ControllerBundle, dt: f64) -> Result<Vec<SimLog>> {
    if plan.uav_count() != mission.uav_count() {
        return Err(MissionError::Invalid(format!(
            "plan has {} UAVs, mission has {}",
            plan.uav_count(),
            mission.uav_count()
        )));
    }
    let logs: std::result::Result<Vec<SimLog>, DynError> = (0..plan.uav_count())
        .into_par_iter()
        .map(|i| {
            let init = &mission.file.uavs[i];
            let x0 = QuadState {
                p: plan.uavs[i].positions[0],
                v: plan.uavs[i].velocities[0],
                phi: init.angles[0],
                theta: init.angles[1],
            };
            integrate(x0, bundle, planned_reference(plan, i), (0.0, plan.duration()), dt, &bundle.params)
        })
        .collect();
    Ok(logs?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavSimStats {
    pub uav: usize,
    pub max_error: f64,
    pub max_level: f64,
    pub clamped_steps: usize,
    pub infeasible_rotor_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub dt: f64,
    pub eta: f64,
    pub uavs: Vec<UavSimStats>,
    pub tube: TubeReport,
}

pub const SIM_LOG_HEADER: [&str; 41] = [
    "t", "px_ref", "py_ref", "pz_ref", "vx_ref", "vy_ref", "vz_ref", "ax_ref", "ay_ref", "az_ref", "px", "py", "pz", "vx", "vy",
    "vz", "phi", "theta", "e1", "e2", "e3", "e4", "e5", "e6", "e7", "e8", "ft", "ux", "uy", "clamped", "V", "tx", "ty", "tz",
    "w1", "w2", "w3", "w4", "err_inf", "pos_err_inf", "in_level_set",
];

/// Writes one UAV's log and returns the number of rows whose wrench has no
/// nonnegative rotor solution (their speeds are written as `NaN`).
pub fn sim_log_csv(log: &SimLog, bundle: &ControllerBundle) -> (String, usize) {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SIM_LOG_HEADER).expect("in-memory write");
    let torques = log.torques(&bundle.params);
    let mut bad = 0;
    for (row, tq) in log.rows.iter().zip(&torques) {
        let rotors = rotor_allocation(row.input.ft, *tq, &bundle.params).unwrap_or_else(|_| {
            bad += 1;
            [f64::NAN; 4]
        });
        let mut rec: Vec<String> = Vec::with_capacity(SIM_LOG_HEADER.len());
        rec.push(row.t.to_string());
        rec.extend(row.planned.p.iter().chain(&row.planned.v).chain(&row.planned.a).map(f64::to_string));
        rec.extend(row.state.to_array().iter().map(f64::to_string));
        rec.extend(row.error.0.iter().map(f64::to_string));
        rec.extend(row.input.to_array().iter().map(f64::to_string));
        rec.push((row.clamped as u8).to_string());
        rec.push(row.level.to_string());
        rec.extend(tq.iter().chain(&rotors).map(f64::to_string));
        rec.push(row.error.translational_inf_norm().to_string());
        rec.push(row.error.0[..3].iter().fold(0.0_f64, |m, v| m.max(v.abs())).to_string());
        rec.push(((row.level <= bundle.eta) as u8).to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    (String::from_utf8(w.into_inner().expect("flush")).expect("utf8"), bad)
}

/// `t` then the layout's component names.
pub fn trace_csv(trace: &MultiTrace, layout: &SignalLayout) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend(layout.names().iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for i in 0..trace.len() {
        let mut rec = vec![(i as f64 * trace.dt()).to_string()];
        rec.extend(trace.sample(i).iter().map(f64::to_string));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// Reads a trace written by [`trace_csv`] for a fleet of UAVs; the sample
/// period comes from the time column, which must be uniform.
pub fn read_trace_csv(text: &str, what: &str) -> Result<(MultiTrace, SignalLayout)> {
    let err = |message: String| MissionError::Format {
        path: what.to_string(),
        message,
    };
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(|e| err(e.to_string()))?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("t") || header.len() < 2 || (header.len() - 1) % UAV_DIM != 0 {
        return Err(err(format!(
            "header must be `t` followed by {UAV_DIM} columns per UAV, got {} columns",
            header.len()
        )));
    }
    let layout = SignalLayout::uavs((header.len() - 1) / UAV_DIM);
    if header[1..] != *layout.names() {
        return Err(err(format!("expected columns {:?}", layout.names())));
    }
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| err(format!("row {}: {e}", line + 2)))?;
        times.push(vals[0]);
        rows.push(vals[1..].to_vec());
    }
    if rows.len() < 2 {
        return Err(err("need at least two samples".into()));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) || times.iter().enumerate().any(|(i, t)| (t - times[0] - i as f64 * dt).abs() > 1e-6 * dt.max(1.0)) {
        return Err(err("time column must start anywhere and advance uniformly".into()));
    }
    Ok((MultiTrace::from_rows(dt, &rows)?, layout))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub rho: f64,
    pub verdict: String,
    pub samples: usize,
    pub dt: f64,
}

pub fn monitor(formula: &Formula, trace: &MultiTrace) -> Result<MonitorReport> {
    let rho = robustness(formula, trace, 0.0)?;
    Ok(MonitorReport {
        rho,
        verdict: match Verdict::from_robustness(rho) {
            Verdict::Satisfied => "satisfied",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        }
        .into(),
        samples: trace.len(),
        dt: trace.dt(),
    })
}

/// Exact robustness of the sampled plan.
pub fn plan_robustness(mission: &Mission, plan: &WaypointPlan) -> Result<f64> {
    let trace = trace_from_plan(plan, mission.file.planner.dt)?;
    Ok(robustness(&mission.formula, &trace, 0.0)?)
}

/// Simulates, checks the tube and writes logs; `rho` is the plan's exact
/// robustness.
pub fn simulate_and_check(
    mission: &Mission,
    plan: &WaypointPlan,
    bundle: &ControllerBundle,
    dt: f64,
    out_dir: Option<&Path>,
) -> Result<SimReport> {
    let logs = simulate(mission, plan, bundle, dt)?;
    let rho = plan_robustness(mission, plan)?;
    let tube = tube_check(
        &mission.formula,
        plan,
        &logs,
        rho,
        bundle.delta(),
        mission.file.planner.dt,
        &bundle.params,
    )?;
    let mut uavs = Vec::new();
    for (i, log) in logs.iter().enumerate() {
        let (csv_text, bad) = sim_log_csv(log, bundle);
        if let Some(dir) = out_dir {
            write(&dir.join(format!("uav{}_sim.csv", i + 1)), &csv_text)?;
        }
        uavs.push(UavSimStats {
            uav: i + 1,
            max_error: log.max_translational_error(),
            max_level: log.rows.iter().map(|r| r.level).fold(0.0, f64::max),
            clamped_steps: log.clamp_count(),
            infeasible_rotor_rows: bad,
        });
    }
    if let Some(dir) = out_dir {
        let samples = (plan.duration() / mission.file.planner.dt).round() as usize + 1;
        let tracked = crate::certifier::tracked_trace(&logs, mission.file.planner.dt, samples, &bundle.params)?;
        write(&dir.join("tracked_trace.csv"), &trace_csv(&tracked, &mission.layout))?;
    }
    Ok(SimReport {
        dt: logs[0].dt,
        eta: bundle.eta,
        uavs,
        tube,
    })
}

pub fn sim_status(result: &Result<SimReport>) -> ExitStatus {
    match result {
        Ok(r) if r.tube.pass() => ExitStatus::Success,
        Ok(_) => ExitStatus::SpecViolated,
        Err(MissionError::Dynamics(DynError::Divergence { .. })) => ExitStatus::Diverged,
        Err(_) => ExitStatus::Infeasible,
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub seed: Option<u64>,
    pub sim_dt: Option<f64>,
    pub out_dir: PathBuf,
    /// Overrides the mission's certification settings.
    pub cert: Option<CertConfig>,
    /// Overrides the mission's bundle reference.
    pub bundle: Option<ControllerBundle>,
}

#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub status: ExitStatus,
    pub cert: CertReport,
    pub plan: Option<PlanOutcome>,
    pub sim: Option<SimReport>,
    pub messages: Vec<String>,
    /// Wall-clock seconds spent in each stage; never written to artifacts.
    pub timings: Timings,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    pub certify: f64,
    pub plan: f64,
    pub simulate: f64,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| MissionError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Certify the bundle, plan against its `δ`, track the plan and monitor the
/// tracked traces, writing every artifact into `opts.out_dir`. Stops at the
/// first failing stage.
pub fn run_pipeline(mission: &Mission, opts: &PipelineOptions) -> Result<PipelineSummary> {
    ensure_dir(&opts.out_dir)?;
    let dir = opts.out_dir.as_path();
    let bundle = match &opts.bundle {
        Some(b) => b.clone(),
        None => mission.bundle()?,
    };
    let mut messages = Vec::new();
    let mut timings = Timings::default();

    let cert_cfg = opts.cert.unwrap_or(mission.file.cert);
    let clock = Instant::now();
    let cert = certify_bundle(&bundle, &mission.accel_box(), &cert_cfg)?;
    timings.certify = clock.elapsed().as_secs_f64();
    write(&dir.join("cert_report.toml"), &to_toml(&cert))?;
    messages.push(format!(
        "certify: {} (delta = {:.4}, worst Lie derivative {:.4})",
        if cert.pass { "PASS" } else { "FAIL" },
        cert.delta,
        cert.invariance.worst.lie_derivative
    ));
    if !cert.pass {
        return Ok(PipelineSummary {
            status: ExitStatus::CertificationFailed,
            cert,
            plan: None,
            sim: None,
            messages,
            timings,
        });
    }

    let clock = Instant::now();
    let outcome = plan(&mission.problem(), &mission.planner_config(bundle.delta(), opts.seed));
    timings.plan = clock.elapsed().as_secs_f64();
    let status = plan_status(&outcome);
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            messages.push(format!("plan: {e}"));
            return Ok(PipelineSummary {
                status,
                cert,
                plan: None,
                sim: None,
                messages,
                timings,
            });
        }
    };
    write(&dir.join("plan.toml"), &to_toml(&outcome.plan))?;
    write(&dir.join("plan_report.toml"), &to_toml(&PlanReport::new(&outcome)))?;
    let planned = trace_from_plan(&outcome.plan, mission.file.planner.dt)?;
    write(&dir.join("planned_trace.csv"), &trace_csv(&planned, &mission.layout))?;
    messages.push(format!(
        "plan: {:?} rho = {:.4}, rho_smooth = {:.4}, epsilon = {:.4}, margin = {:.4}",
        outcome.status, outcome.rho, outcome.rho_smooth, outcome.epsilon, outcome.margin
    ));
    if status != ExitStatus::Success {
        return Ok(PipelineSummary {
            status,
            cert,
            plan: Some(outcome),
            sim: None,
            messages,
            timings,
        });
    }

    let sim_dt = opts.sim_dt.unwrap_or(mission.file.sim.dt);
    let clock = Instant::now();
    let sim = simulate_and_check(mission, &outcome.plan, &bundle, sim_dt, Some(dir));
    timings.simulate = clock.elapsed().as_secs_f64();
    let status = sim_status(&sim);
    let sim = match sim {
        Ok(s) => s,
        Err(e) => {
            messages.push(format!("simulate: {e}"));
            return Ok(PipelineSummary {
                status,
                cert,
                plan: Some(outcome),
                sim: None,
                messages,
                timings,
            });
        }
    };
    write(&dir.join("sim_report.toml"), &to_toml(&sim))?;
    messages.push(format!(
        "simulate: sup error {:.4} <= delta {:.4}: {}; tracked rho = {:.4}",
        sim.tube.sup_error, sim.tube.delta, sim.tube.within_tube, sim.tube.tracked_rho
    ));
    Ok(PipelineSummary {
        status,
        cert,
        plan: Some(outcome),
        sim: Some(sim),
        messages,
        timings,
    })
}
