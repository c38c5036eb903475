use std::path::{Path, PathBuf};

use codesign::certifier::{certify_bundle, AccelBox, CertConfig};
use codesign::controller::default_bundle;
use codesign::mission::{
    load_bundle, load_plan, plan_status, run_pipeline, to_toml, ExitStatus, Mission, PipelineOptions,
};
use codesign::planner::plan;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

const REACH: &str = r#"
name = "tiny"
spec = "F[0,3] (uav1.p in Goal) & G[0,4] !(uav1.p in Wall)"

[workspace]
lo = [-5.0, -5.0, 0.0]
hi = [5.0, 5.0, 5.0]

[regions.Goal]
lo = [GOAL_LO]
hi = [GOAL_HI]

[regions.Wall]
lo = [-1.0, -5.0, 0.0]
hi = [-0.5, -3.0, 5.0]

[[uavs]]
position = [-3.0, 0.0, 2.0]

[limits]
v_min = -2.0
v_max = 2.0
a_min = -0.6
a_max = 0.6
j_min = -3.0
j_max = 3.0

[planner]
segments = 4
restarts = 2
"#;

fn tiny(goal_lo: &str, goal_hi: &str) -> Mission {
    let text = REACH.replace("GOAL_LO", goal_lo).replace("GOAL_HI", goal_hi);
    Mission::from_toml_str(&text, None).unwrap()
}

fn quick_cert() -> CertConfig {
    CertConfig {
        boundary_samples: 4_000,
        interior_samples: 4_000,
        ..Default::default()
    }
}

#[test]
fn goal_outside_workspace_exits_infeasible() {
    let m = tiny("20.0, 20.0, 1.0", "21.0, 21.0, 2.0");
    let result = plan(&m.problem(), &m.planner_config(default_bundle().delta(), None));
    assert_eq!(plan_status(&result), ExitStatus::Infeasible);
    assert_eq!(plan_status(&result).code(), 3);

    let dir = tempfile::tempdir().unwrap();
    let opts = PipelineOptions {
        seed: None,
        sim_dt: None,
        out_dir: dir.path().to_path_buf(),
        cert: Some(quick_cert()),
        bundle: None,
    };
    let summary = run_pipeline(&m, &opts).unwrap();
    assert_eq!(summary.status, ExitStatus::Infeasible);
    assert!(summary.plan.is_none());
    assert!(dir.path().join("cert_report.toml").exists());
    assert!(!dir.path().join("plan.toml").exists());
}

#[test]
fn hover_scenario_runs_end_to_end() {
    let m = Mission::load(&scenarios().join("hover.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let opts = PipelineOptions {
        seed: Some(3),
        sim_dt: Some(0.005),
        out_dir: dir.path().to_path_buf(),
        cert: Some(quick_cert()),
        bundle: None,
    };
    let summary = run_pipeline(&m, &opts).unwrap();
    assert_eq!(summary.status, ExitStatus::Success, "{:?}", summary.messages);
    let plan = summary.plan.unwrap();
    let sim = summary.sim.unwrap();
    assert!(plan.rho >= summary.cert.delta);
    // Near-hover plan: the tracker barely moves.
    assert!(sim.tube.sup_error < 0.5 * summary.cert.delta, "{}", sim.tube.sup_error);
    assert!(sim.tube.pass());
    for f in ["plan.toml", "plan_report.toml", "planned_trace.csv", "sim_report.toml", "uav1_sim.csv", "tracked_trace.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let reloaded = load_plan(&dir.path().join("plan.toml")).unwrap();
    assert_eq!(reloaded, plan.plan);
}

#[test]
fn shipped_scenarios_load() {
    for name in ["reach_avoid.toml", "multi_mission.toml", "hover.toml"] {
        let m = Mission::load(&scenarios().join(name)).unwrap();
        let again = Mission::from_toml_str(&m.to_toml(), None).unwrap();
        assert_eq!(again.to_toml(), m.to_toml(), "{name}");
        assert_eq!(again.formula, m.formula);
    }
    let m = Mission::load(&scenarios().join("multi_mission.toml")).unwrap();
    assert_eq!(m.uav_count(), 4);
    assert_eq!(m.formula.horizon(), 20.0);
}

#[test]
fn bundle_file_round_trip_and_tamper_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bundle.toml");
    let b = default_bundle();
    std::fs::write(&path, b.to_toml()).unwrap();
    let back = load_bundle(&path).unwrap();
    assert_eq!(back, b);
    assert_eq!(back.to_toml(), b.to_toml());

    let text = b.to_toml();
    let line = text.lines().find(|l| l.starts_with("delta =")).unwrap();
    std::fs::write(&path, text.replace(line, "delta = 0.5")).unwrap();
    assert!(load_bundle(&path).is_err());
}

#[test]
fn mission_can_reference_bundle_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("b.toml"), default_bundle().to_toml()).unwrap();
    let text = REACH
        .replace("GOAL_LO", "1.0, -1.0, 1.0")
        .replace("GOAL_HI", "3.0, 1.0, 3.0")
        .replace("name = \"tiny\"", "name = \"tiny\"\nbundle = \"b.toml\"");
    let m = Mission::from_toml_str(&text, Some(dir.path().to_path_buf())).unwrap();
    assert_eq!(m.bundle().unwrap(), default_bundle());
    let missing = Mission::from_toml_str(&text, Some(dir.path().join("elsewhere"))).unwrap();
    assert!(missing.bundle().is_err());
}

#[test]
fn enlarged_level_set_fails_with_input_witness() {
    let b = default_bundle().with_level(60.0).unwrap();
    let accel = AccelBox {
        lo: [-0.6; 3],
        hi: [0.6; 3],
    };
    let report = certify_bundle(&b, &accel, &quick_cert()).unwrap();
    assert!(!report.pass);
    assert!(!report.inputs.pass);
    let w = &report.inputs.worst;
    assert!(w.excess > 0.0);
    // Recompute the inputs at the witness and check the reported channel.
    let raw = b.raw_inputs(&w.e).to_array();
    let (lo, hi) = (b.params.input.lo, b.params.input.hi);
    let excess = (raw[w.channel] - hi[w.channel]).max(lo[w.channel] - raw[w.channel]);
    assert!((excess - w.excess).abs() < 1e-9 * excess.abs().max(1.0));
    assert!(b.v.eval(&w.e) <= 60.0 * (1.0 + 1e-9));
    assert!(to_toml(&report).contains("evidence, not proof"));
}

#[test]
fn sim_step_coarser_than_planner_step_is_rejected() {
    let text = REACH
        .replace("GOAL_LO", "1.0, -1.0, 1.0")
        .replace("GOAL_HI", "3.0, 1.0, 3.0")
        .replace("[planner]", "[sim]\ndt = 0.1\n\n[planner]");
    assert!(Mission::from_toml_str(&text, None).is_err());
}
