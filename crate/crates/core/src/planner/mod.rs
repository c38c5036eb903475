//! Centralized multi-UAV waypoint planning: maximize smooth robustness of the
//! sampled spline trajectories subject to per-segment kinematic bounds, the
//! workspace box and the robustness margin `ρ̃ >= ε̃ + δ`.
//!
//! Decision variables are the waypoints `p¹..pᴺ` of every UAV. Waypoint
//! velocities follow from the end-velocity identity, so every trace sample and
//! every constraint is a linear function of the waypoints.

mod lbfgs;
mod seed;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::smooth::{approximation_error, smooth_robustness, smooth_robustness_gradient, SmoothConfig};
use crate::spline::{
    k3, k4, kinematic_bounds, position_shape, solve_segment, KinematicLimits, SegmentSample,
    SplineError, SplineSegment,
};
use crate::stl::{robustness, uav_index, Formula, MultiTrace, Region, StlError, UAV_DIM};

pub use seed::{as_box, targets, SeedingMode, Target};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error("plan covers {duration} s but the formula horizon is {horizon} s")]
    HorizonMismatch { horizon: f64, duration: f64 },
    #[error("sample period {dt} must be positive and divide the segment duration {segment}")]
    BadSamplePeriod { dt: f64, segment: f64 },
    #[error("infeasible mission: {0}")]
    Infeasible(String),
    #[error("inconsistent plan: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavWaypoints {
    pub positions: Vec<[f64; 3]>,
    pub velocities: Vec<[f64; 3]>,
}

/// `N + 1` waypoints per UAV with their propagated velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointPlan {
    pub segment_duration: f64,
    pub uavs: Vec<UavWaypoints>,
}

impl WaypointPlan {
    /// Builds a plan from positions, propagating velocities from `v0` by the
    /// end-velocity identity.
    pub fn from_positions(segment_duration: f64, positions: Vec<Vec<[f64; 3]>>, v0: &[[f64; 3]]) -> Result<Self, PlanError> {
        if segment_duration <= 0.0 || !segment_duration.is_finite() {
            return Err(SplineError::NonPositiveDuration(segment_duration).into());
        }
        if positions.len() != v0.len() {
            return Err(PlanError::Malformed(format!("{} waypoint lists for {} initial velocities", positions.len(), v0.len())));
        }
        let n = positions.first().map_or(0, Vec::len);
        if n < 2 || positions.iter().any(|p| p.len() != n) {
            return Err(PlanError::Malformed("every UAV needs the same number (>= 2) of waypoints".into()));
        }
        let uavs = positions
            .into_iter()
            .zip(v0)
            .map(|(pos, &v)| {
                let mut vel = Vec::with_capacity(n);
                vel.push(v);
                for j in 0..n - 1 {
                    let prev = vel[j];
                    vel.push([0, 1, 2].map(|l| {
                        crate::spline::end_velocity(prev[l], pos[j + 1][l] - pos[j][l], segment_duration)
                    }));
                }
                UavWaypoints {
                    positions: pos,
                    velocities: vel,
                }
            })
            .collect();
        Ok(Self { segment_duration, uavs })
    }

    pub fn hover(positions: &[[f64; 3]], segments: usize, segment_duration: f64) -> Result<Self, PlanError> {
        let pos = positions.iter().map(|p| vec![*p; segments + 1]).collect();
        Self::from_positions(segment_duration, pos, &vec![[0.0; 3]; positions.len()])
    }

    pub fn uav_count(&self) -> usize {
        self.uavs.len()
    }

    pub fn segment_count(&self) -> usize {
        self.uavs.first().map_or(0, |u| u.positions.len() - 1)
    }

    pub fn duration(&self) -> f64 {
        self.segment_count() as f64 * self.segment_duration
    }

    pub fn segment(&self, uav: usize, j: usize) -> SplineSegment {
        let u = &self.uavs[uav];
        solve_segment(u.positions[j], u.velocities[j], u.positions[j + 1], self.segment_duration)
            .expect("duration validated at construction")
    }

    /// Planned kinematic state of one UAV at time `t`, clamped to the plan.
    pub fn sample(&self, uav: usize, t: f64) -> SegmentSample {
        let t = t.clamp(0.0, self.duration());
        let n = self.segment_count();
        let j = ((t / self.segment_duration).floor() as usize).min(n - 1);
        self.segment(uav, j).eval(t - j as f64 * self.segment_duration)
    }

    /// Sum of Euclidean waypoint-to-waypoint distances over all UAVs.
    pub fn path_length(&self) -> f64 {
        self.uavs
            .iter()
            .flat_map(|u| u.positions.windows(2))
            .map(|w| (0..3).map(|l| (w[1][l] - w[0][l]).powi(2)).sum::<f64>().sqrt())
            .sum()
    }

    fn validate(&self) -> Result<(), PlanError> {
        let n = self.segment_count();
        if n == 0 || self.segment_duration <= 0.0 || !self.segment_duration.is_finite() {
            return Err(PlanError::Malformed("plan needs a positive segment duration and at least one segment".into()));
        }
        if self.uavs.iter().any(|u| u.positions.len() != n + 1 || u.velocities.len() != n + 1) {
            return Err(PlanError::Malformed("ragged waypoint lists".into()));
        }
        Ok(())
    }
}

fn samples_per_segment(dt: f64, segment: f64) -> Result<usize, PlanError> {
    let ratio = segment / dt;
    let k = ratio.round();
    if !(dt > 0.0 && dt.is_finite()) || k < 1.0 || (ratio - k).abs() > 1e-9 * ratio.max(1.0) {
        return Err(PlanError::BadSamplePeriod { dt, segment });
    }
    Ok(k as usize)
}

/// Samples position, velocity and acceleration of every UAV at period `dt`,
/// in the stacked layout of [`crate::stl::SignalLayout::uavs`].
pub fn trace_from_plan(plan: &WaypointPlan, dt: f64) -> Result<MultiTrace, PlanError> {
    plan.validate()?;
    let k = samples_per_segment(dt, plan.segment_duration)?;
    let n = plan.segment_count();
    let d = plan.uav_count();
    let dim = d * UAV_DIM;
    let total = n * k + 1;
    let mut data = vec![0.0; total * dim];
    for i in 0..d {
        for j in 0..n {
            let seg = plan.segment(i, j);
            let last = if j + 1 == n { k + 1 } else { k };
            for m in 0..last {
                let s = seg.eval(m as f64 * dt);
                let row = &mut data[(j * k + m) * dim..];
                for l in 0..3 {
                    row[uav_index(i, 0, l)] = s.p[l];
                    row[uav_index(i, 1, l)] = s.v[l];
                    row[uav_index(i, 2, l)] = s.a[l];
                }
            }
        }
    }
    Ok(MultiTrace::new(dt, dim, data)?)
}

/// Worst change of any predicate between a sample and the nearest sampling
/// instant, from the Lipschitz rate of each signal channel.
pub fn sampling_margin(f: &Formula, limits: &KinematicLimits, dt: f64) -> f64 {
    let rate = [limits.speed_bound(), limits.accel_bound(), limits.jerk_bound()];
    let mut worst: f64 = 0.0;
    f.for_each_predicate(&mut |p| {
        let r: f64 = p.terms.iter().map(|&(idx, c)| c.abs() * rate[(idx % UAV_DIM) / 3]).sum();
        worst = worst.max(r);
    });
    worst * dt / 2.0
}

/// Everything about the mission the planner needs.
#[derive(Debug, Clone)]
pub struct PlanProblem {
    pub formula: Formula,
    pub initial_positions: Vec<[f64; 3]>,
    pub initial_velocities: Vec<[f64; 3]>,
    pub workspace: Region,
    pub limits: KinematicLimits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySchedule {
    pub initial: f64,
    pub growth: f64,
    pub max: f64,
    pub outer_iterations: usize,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        Self {
            initial: 10.0,
            growth: 5.0,
            max: 1e7,
            outer_iterations: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub segments: usize,
    pub segment_duration: f64,
    pub dt: f64,
    pub restarts: usize,
    pub seed: u64,
    /// L-BFGS iterations per augmented-Lagrangian subproblem.
    pub max_iterations: usize,
    pub tolerance: f64,
    pub penalty: PenaltySchedule,
    pub delta: f64,
    pub smooth: SmoothConfig,
    pub seeding: SeedingMode,
    /// Fraction of the workspace extent used as seed noise amplitude.
    pub noise: f64,
    /// Inward shift of every linear constraint inside the solver, so small
    /// residual violations do not cross the true bounds.
    pub tighten: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            segments: 8,
            segment_duration: 1.0,
            dt: 0.05,
            restarts: 8,
            seed: 0,
            max_iterations: 300,
            tolerance: 1e-6,
            penalty: PenaltySchedule::default(),
            delta: 0.0,
            smooth: SmoothConfig::default(),
            seeding: SeedingMode::Line,
            noise: 0.1,
            tighten: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    VelLower,
    VelUpper,
    AccLower,
    AccUpper,
    JerkLower,
    JerkUpper,
}

impl BoundKind {
    pub const ALL: [BoundKind; 6] = [
        BoundKind::VelLower,
        BoundKind::VelUpper,
        BoundKind::AccLower,
        BoundKind::AccUpper,
        BoundKind::JerkLower,
        BoundKind::JerkUpper,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicSlack {
    pub uav: usize,
    pub segment: usize,
    pub axis: usize,
    pub kind: BoundKind,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackReport {
    pub kinematic: Vec<KinematicSlack>,
    /// Smallest distance of any waypoint to the workspace boundary, signed.
    pub workspace: f64,
    /// `ρ̃ - ε̃ - δ`.
    pub robustness: f64,
}

impl SlackReport {
    pub fn min_kinematic(&self) -> f64 {
        self.kinematic.iter().map(|s| s.slack).fold(f64::INFINITY, f64::min)
    }

    pub fn violations(&self) -> impl Iterator<Item = &KinematicSlack> {
        self.kinematic.iter().filter(|s| s.slack < 0.0)
    }

    /// Kinematic and workspace constraints hold.
    pub fn kinematically_feasible(&self) -> bool {
        self.min_kinematic() >= 0.0 && self.workspace >= 0.0
    }

    pub fn feasible(&self) -> bool {
        self.kinematically_feasible() && self.robustness >= 0.0
    }
}

fn kinematic_slacks(plan: &WaypointPlan, limits: &KinematicLimits) -> Result<Vec<KinematicSlack>, PlanError> {
    let mut out = Vec::new();
    for (i, u) in plan.uavs.iter().enumerate() {
        for j in 0..plan.segment_count() {
            let b = kinematic_bounds(u.velocities[j], plan.segment_duration, limits)?;
            for (l, ab) in b.iter().enumerate() {
                let dp = u.positions[j + 1][l] - u.positions[j][l];
                let vals = [
                    dp - ab.vel.lo,
                    ab.vel.hi - dp,
                    dp - ab.acc.lo,
                    ab.acc.hi - dp,
                    dp - ab.jerk.lo,
                    ab.jerk.hi - dp,
                ];
                for (kind, slack) in BoundKind::ALL.into_iter().zip(vals) {
                    out.push(KinematicSlack {
                        uav: i,
                        segment: j,
                        axis: l,
                        kind,
                        slack,
                    });
                }
            }
        }
    }
    Ok(out)
}

fn workspace_slack(plan: &WaypointPlan, ws: &Region) -> f64 {
    plan.uavs
        .iter()
        .flat_map(|u| u.positions.iter())
        .flat_map(|p| (0..3).map(move |l| (p[l] - ws.lo[l]).min(ws.hi[l] - p[l])))
        .fold(f64::INFINITY, f64::min)
}

/// Signed slack of every constraint; all nonnegative iff the plan is feasible.
pub fn constraint_residuals(plan: &WaypointPlan, problem: &PlanProblem, cfg: &PlannerConfig) -> Result<SlackReport, PlanError> {
    plan.validate()?;
    let trace = trace_from_plan(plan, cfg.dt)?;
    let smooth = smooth_robustness(&problem.formula, &trace, &cfg.smooth)?;
    let eps = approximation_error(&problem.formula, cfg.dt, &cfg.smooth);
    Ok(SlackReport {
        kinematic: kinematic_slacks(plan, &problem.limits)?,
        workspace: workspace_slack(plan, &problem.workspace),
        robustness: smooth - eps - cfg.delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Success,
    BestEffort,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub index: usize,
    pub rho: f64,
    pub rho_smooth: f64,
    pub min_kinematic_slack: f64,
    pub path_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub plan: WaypointPlan,
    pub status: PlanStatus,
    /// Exact robustness of the sampled plan.
    pub rho: f64,
    pub rho_smooth: f64,
    pub epsilon: f64,
    /// Inter-sample correction subtracted from `rho` before the `δ` check.
    pub margin: f64,
    pub delta: f64,
    pub slacks: SlackReport,
    pub restarts: Vec<RestartSummary>,
    pub diagnostics: Vec<String>,
}

/// Per-axis affine bound `lo(v) = a + c v` on the displacement.
#[derive(Debug, Clone, Copy)]
struct Affine1 {
    a: f64,
    c: f64,
}

struct Objective<'a> {
    problem: &'a PlanProblem,
    cfg: &'a PlannerConfig,
    v0: Vec<[f64; 3]>,
    n: usize,
    k: usize,
    /// `(t, S, K3, K4)` at every in-segment sample.
    basis: Vec<[f64; 4]>,
    k3t: f64,
    /// `(lower, upper)` for vel, acc, jerk.
    bounds: [(Affine1, Affine1); 3],
    epsilon: f64,
    margin: f64,
}

impl<'a> Objective<'a> {
    fn new(problem: &'a PlanProblem, cfg: &'a PlannerConfig) -> Result<Self, PlanError> {
        let t = cfg.segment_duration;
        let k = samples_per_segment(cfg.dt, t)?;
        let basis = (0..=k)
            .map(|m| {
                let tm = m as f64 * cfg.dt;
                [tm, position_shape(tm, t), k3(tm, t), k4(tm, t)]
            })
            .collect();
        let b0 = kinematic_bounds([0.0; 3], t, &problem.limits)?[0];
        let b1 = kinematic_bounds([1.0; 3], t, &problem.limits)?[0];
        let aff = |lo0: f64, lo1: f64| Affine1 { a: lo0, c: lo1 - lo0 };
        let bounds = [
            (aff(b0.vel.lo, b1.vel.lo), aff(b0.vel.hi, b1.vel.hi)),
            (aff(b0.acc.lo, b1.acc.lo), aff(b0.acc.hi, b1.acc.hi)),
            (aff(b0.jerk.lo, b1.jerk.lo), aff(b0.jerk.hi, b1.jerk.hi)),
        ];
        Ok(Self {
            problem,
            cfg,
            v0: problem.initial_velocities.clone(),
            n: cfg.segments,
            k,
            basis,
            k3t: k3(t, t),
            bounds,
            epsilon: approximation_error(&problem.formula, cfg.dt, &cfg.smooth),
            margin: sampling_margin(&problem.formula, &problem.limits, cfg.dt),
        })
    }

    fn uavs(&self) -> usize {
        self.v0.len()
    }

    fn plan(&self, x: &[f64]) -> WaypointPlan {
        let positions = (0..self.uavs())
            .map(|i| {
                let mut p = Vec::with_capacity(self.n + 1);
                p.push(self.problem.initial_positions[i]);
                p.extend((0..self.n).map(|j| {
                    let o = (i * self.n + j) * 3;
                    [x[o], x[o + 1], x[o + 2]]
                }));
                p
            })
            .collect();
        WaypointPlan::from_positions(self.cfg.segment_duration, positions, &self.v0).expect("shape fixed by construction")
    }

    fn flatten(&self, plan: &WaypointPlan) -> Vec<f64> {
        plan.uavs
            .iter()
            .flat_map(|u| u.positions[1..].iter().flat_map(|p| p.iter().copied()))
            .collect()
    }

    /// Pulls direct gradients on waypoint positions and velocities back
    /// through the velocity recursion onto the decision variables.
    fn backprop(&self, mut gp: Vec<Vec<[f64; 3]>>, mut gv: Vec<Vec<[f64; 3]>>) -> Vec<f64> {
        let t = self.cfg.segment_duration;
        let carry = 1.0 - t * self.k3t;
        let mut out = vec![0.0; self.uavs() * self.n * 3];
        for i in 0..self.uavs() {
            for j in (0..self.n).rev() {
                for l in 0..3 {
                    let g = gv[i][j + 1][l];
                    gv[i][j][l] += carry * g;
                    gp[i][j + 1][l] += self.k3t * g;
                    gp[i][j][l] -= self.k3t * g;
                }
            }
            for j in 0..self.n {
                for l in 0..3 {
                    out[(i * self.n + j) * 3 + l] = gp[i][j + 1][l];
                }
            }
        }
        out
    }

    fn zeros(&self) -> Vec<Vec<[f64; 3]>> {
        vec![vec![[0.0; 3]; self.n + 1]; self.uavs()]
    }

    /// Smooth robustness at `c` and its gradient in the decision variables.
    fn smooth(&self, plan: &WaypointPlan, smooth: &SmoothConfig) -> Result<(f64, Vec<f64>), PlanError> {
        let trace = trace_from_plan(plan, self.cfg.dt)?;
        let (val, g) = smooth_robustness_gradient(&self.problem.formula, &trace, smooth)?;
        let t = self.cfg.segment_duration;
        let dim = trace.dim();
        let mut gp = self.zeros();
        let mut gv = self.zeros();
        for s in 0..trace.len() {
            let j = (s / self.k).min(self.n - 1);
            let [tm, sh, kk3, kk4] = self.basis[s - j * self.k];
            let row = &g[s * dim..(s + 1) * dim];
            for i in 0..self.uavs() {
                for l in 0..3 {
                    let (a, b, c) = (row[uav_index(i, 0, l)], row[uav_index(i, 1, l)], row[uav_index(i, 2, l)]);
                    if a == 0.0 && b == 0.0 && c == 0.0 {
                        continue;
                    }
                    let gd = a * sh + b * kk3 + c * kk4;
                    gp[i][j][l] += a - gd;
                    gp[i][j + 1][l] += gd;
                    gv[i][j][l] += a * tm + b - t * gd;
                }
            }
        }
        Ok((val, self.backprop(gp, gv)))
    }

    /// Linear constraint values (tightened) with the direct gradient
    /// coefficients `(uav, j, axis, dp_sign, dv_coef)`; `g >= 0` is feasible.
    fn linear_constraints(&self, plan: &WaypointPlan) -> Vec<(f64, Lin)> {
        let tight = self.cfg.tighten;
        let ws = &self.problem.workspace;
        let mut out = Vec::with_capacity(self.uavs() * self.n * 3 * 8);
        for (i, u) in plan.uavs.iter().enumerate() {
            for j in 0..self.n {
                for l in 0..3 {
                    let dp = u.positions[j + 1][l] - u.positions[j][l];
                    let v = u.velocities[j][l];
                    for (lo, hi) in &self.bounds {
                        out.push((dp - lo.a - lo.c * v - tight, Lin::Seg { i, j, l, sign: 1.0, dv: -lo.c }));
                        out.push((hi.a + hi.c * v - dp - tight, Lin::Seg { i, j, l, sign: -1.0, dv: hi.c }));
                    }
                    let p = u.positions[j + 1][l];
                    out.push((p - ws.lo[l] - tight, Lin::Point { i, j: j + 1, l, sign: 1.0 }));
                    out.push((ws.hi[l] - p - tight, Lin::Point { i, j: j + 1, l, sign: -1.0 }));
                }
            }
        }
        out
    }

    /// Augmented-Lagrangian merit, minimized by the inner solver.
    fn merit(&self, x: &[f64], lambda: &[f64], mu: f64, smooth: &SmoothConfig, target: bool) -> (f64, Vec<f64>) {
        let plan = self.plan(x);
        let Ok((rho, grho)) = self.smooth(&plan, smooth) else {
            return (f64::INFINITY, vec![0.0; x.len()]);
        };
        let lin = self.linear_constraints(&plan);
        let mut gp = self.zeros();
        let mut gv = self.zeros();
        let mut value = -rho;
        let phr = |g: f64, lam: f64| {
            let m = (lam - mu * g).max(0.0);
            ((m * m - lam * lam) / (2.0 * mu), -m)
        };
        for ((g, c), &lam) in lin.iter().zip(lambda) {
            let (v, dg) = phr(*g, lam);
            value += v;
            if dg == 0.0 {
                continue;
            }
            match *c {
                Lin::Seg { i, j, l, sign, dv } => {
                    gp[i][j + 1][l] += dg * sign;
                    gp[i][j][l] -= dg * sign;
                    gv[i][j][l] += dg * dv;
                }
                Lin::Point { i, j, l, sign } => gp[i][j][l] += dg * sign,
            }
        }
        let mut grad = self.backprop(gp, gv);
        let (v, dg) = if target {
            phr(rho - self.epsilon - self.cfg.delta - self.margin, lambda[lin.len()])
        } else {
            (0.0, 0.0)
        };
        value += v;
        for (o, gr) in grad.iter_mut().zip(&grho) {
            *o += (dg - 1.0) * gr;
        }
        (value, grad)
    }

    fn constraint_values(&self, x: &[f64], smooth: &SmoothConfig) -> Vec<f64> {
        let plan = self.plan(x);
        let mut vals: Vec<f64> = self.linear_constraints(&plan).into_iter().map(|(g, _)| g).collect();
        let rho = self.smooth(&plan, smooth).map_or(f64::NEG_INFINITY, |r| r.0);
        vals.push(rho - self.epsilon - self.cfg.delta - self.margin);
        vals
    }

    fn solve(&self, x0: Vec<f64>) -> Vec<f64> {
        let (x, violation) = self.augmented_lagrangian(x0, true);
        // rows are tightened, so this still satisfies the true bounds
        if violation <= self.cfg.tighten.max(self.cfg.tolerance) {
            return x;
        }
        // An unattainable robustness target can hold the linear rows open;
        // restore feasibility while still maximizing robustness.
        self.augmented_lagrangian(x, false).0
    }

    fn augmented_lagrangian(&self, x0: Vec<f64>, target: bool) -> (Vec<f64>, f64) {
        let sched = self.cfg.penalty;
        let smooth = self.cfg.smooth;
        let m = self.constraint_values(&x0, &smooth).len();
        let mut lambda = vec![0.0; m];
        let mut mu = sched.initial;
        let mut x = x0;
        let mut prev_violation = f64::INFINITY;
        let mut violation = f64::INFINITY;
        let opts = lbfgs::LbfgsOptions {
            max_iter: self.cfg.max_iterations,
            grad_tol: self.cfg.tolerance,
            rel_tol: self.cfg.tolerance * 1e-3,
            ..Default::default()
        };
        for _ in 0..sched.outer_iterations {
            let r = lbfgs::minimize(x, |z| self.merit(z, &lambda, mu, &smooth, target), opts);
            x = r.x;
            let g = self.constraint_values(&x, &smooth);
            // the robustness margin is an aspiration; only linear rows gate convergence
            violation = g[..m - 1].iter().fold(0.0f64, |acc, v| acc.max(-v));
            for (lam, gi) in lambda.iter_mut().zip(&g) {
                *lam = (*lam - mu * gi).max(0.0);
            }
            if violation <= self.cfg.tolerance && r.converged {
                break;
            }
            if violation > 0.25 * prev_violation {
                mu = (mu * sched.growth).min(sched.max);
            }
            prev_violation = violation;
        }
        (x, violation)
    }
}

#[derive(Debug, Clone, Copy)]
enum Lin {
    Seg { i: usize, j: usize, l: usize, sign: f64, dv: f64 },
    Point { i: usize, j: usize, l: usize, sign: f64 },
}

/// Smooth robustness of the plan trace and its gradient with respect to the
/// free waypoints `p¹..pᴺ` of every UAV (`[uav][waypoint - 1][axis]`).
pub fn smooth_robustness_wrt_waypoints(
    plan: &WaypointPlan,
    problem: &PlanProblem,
    cfg: &PlannerConfig,
) -> Result<(f64, Vec<Vec<[f64; 3]>>), PlanError> {
    let mut cfg = cfg.clone();
    cfg.segments = plan.segment_count();
    cfg.segment_duration = plan.segment_duration;
    let obj = Objective::new(problem, &cfg)?;
    let plan = obj.plan(&obj.flatten(plan));
    let (v, g) = obj.smooth(&plan, &cfg.smooth)?;
    let grad = (0..plan.uav_count())
        .map(|i| (0..cfg.segments).map(|j| [0, 1, 2].map(|l| g[(i * cfg.segments + j) * 3 + l])).collect())
        .collect();
    Ok((v, grad))
}

fn precheck(problem: &PlanProblem, cfg: &PlannerConfig) -> Result<(), PlanError> {
    let d = problem.initial_positions.len();
    if d == 0 || problem.initial_velocities.len() != d {
        return Err(PlanError::Malformed("need one initial position and velocity per UAV".into()));
    }
    if let Some(max) = problem.formula.max_signal_index() {
        if max >= d * UAV_DIM {
            return Err(StlError::DimensionMismatch {
                expected: max + 1,
                found: d * UAV_DIM,
            }
            .into());
        }
    }
    problem.limits.validate()?;
    if cfg.segments == 0 {
        return Err(PlanError::Malformed("at least one segment is required".into()));
    }
    samples_per_segment(cfg.dt, cfg.segment_duration)?;
    if !(cfg.delta >= 0.0) {
        return Err(PlanError::Malformed(format!("delta must be nonnegative, got {}", cfg.delta)));
    }
    let duration = cfg.segments as f64 * cfg.segment_duration;
    let horizon = problem.formula.horizon();
    if horizon > duration + 1e-9 {
        return Err(PlanError::HorizonMismatch { horizon, duration });
    }
    let ws = &problem.workspace;
    for (i, p) in problem.initial_positions.iter().enumerate() {
        if !ws.contains(p) {
            return Err(PlanError::Infeasible(format!("UAV {} starts outside the workspace", i + 1)));
        }
    }
    let lim = &problem.limits;
    for (i, v) in problem.initial_velocities.iter().enumerate() {
        if v.iter().any(|x| *x < lim.v_min || *x > lim.v_max) {
            return Err(PlanError::Infeasible(format!("UAV {} initial velocity outside the limits", i + 1)));
        }
    }
    for t in targets(&problem.formula) {
        if !t.region.intersects(ws) {
            return Err(PlanError::Infeasible(format!(
                "region {:?}..{:?} required for UAV {} lies outside the workspace",
                t.region.lo,
                t.region.hi,
                t.uav + 1
            )));
        }
    }
    Ok(())
}

/// Multi-start augmented-Lagrangian maximization of smooth robustness.
pub fn plan(problem: &PlanProblem, cfg: &PlannerConfig) -> Result<PlanOutcome, PlanError> {
    precheck(problem, cfg)?;
    let obj = Objective::new(problem, cfg)?;
    let goals = targets(&problem.formula);
    let restarts = cfg.restarts.max(1);

    let candidates: Vec<(WaypointPlan, RestartSummary, SlackReport)> = (0..restarts)
        .into_par_iter()
        .map(|r| -> Result<_, PlanError> {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64));
            let mut x0 = Vec::with_capacity(obj.uavs() * cfg.segments * 3);
            for (i, start) in problem.initial_positions.iter().enumerate() {
                let mut route = seed::base_route(cfg.seeding, *start, i, &goals, cfg.segments, cfg.segment_duration);
                seed::perturb(&mut route, &problem.workspace, cfg.noise, cfg.tighten, &mut rng);
                x0.extend(route.iter().flat_map(|p| p.iter().copied()));
            }
            let x = obj.solve(x0);
            let plan = obj.plan(&x);
            let slacks = constraint_residuals(&plan, problem, cfg)?;
            let trace = trace_from_plan(&plan, cfg.dt)?;
            let summary = RestartSummary {
                index: r,
                rho: robustness(&problem.formula, &trace, 0.0)?,
                rho_smooth: smooth_robustness(&problem.formula, &trace, &cfg.smooth)?,
                min_kinematic_slack: slacks.min_kinematic().min(slacks.workspace),
                path_length: plan.path_length(),
            };
            Ok((plan, summary, slacks))
        })
        .collect::<Result<_, _>>()?;

    let better = |a: &(WaypointPlan, RestartSummary, SlackReport), b: &(WaypointPlan, RestartSummary, SlackReport)| {
        let (fa, fb) = (a.2.kinematically_feasible(), b.2.kinematically_feasible());
        if fa != fb {
            return fa;
        }
        if !fa {
            return a.1.min_kinematic_slack > b.1.min_kinematic_slack;
        }
        if a.1.rho != b.1.rho {
            return a.1.rho > b.1.rho;
        }
        a.1.path_length < b.1.path_length
    };
    let best = candidates
        .iter()
        .fold(None::<&(WaypointPlan, RestartSummary, SlackReport)>, |acc, c| match acc {
            Some(b) if !better(c, b) => Some(b),
            _ => Some(c),
        })
        .expect("at least one restart");

    let (plan, summary, slacks) = best.clone();
    if !slacks.kinematically_feasible() {
        return Err(PlanError::Infeasible(format!(
            "no restart satisfies the kinematic and workspace constraints (best slack {:.3e})",
            summary.min_kinematic_slack
        )));
    }
    let mut diagnostics = Vec::new();
    let status = if summary.rho - obj.margin >= cfg.delta {
        PlanStatus::Success
    } else {
        diagnostics.push(format!(
            "robustness {:.4} minus sampling margin {:.4} is below delta {:.4}",
            summary.rho, obj.margin, cfg.delta
        ));
        PlanStatus::BestEffort
    };
    if slacks.robustness < 0.0 {
        diagnostics.push(format!("smooth robustness margin slack {:.4} is negative", slacks.robustness));
    }
    Ok(PlanOutcome {
        plan,
        status,
        rho: summary.rho,
        rho_smooth: summary.rho_smooth,
        epsilon: obj.epsilon,
        margin: obj.margin,
        delta: cfg.delta,
        slacks,
        restarts: candidates.iter().map(|c| c.1).collect(),
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::Interval;

    fn pos(uav: usize) -> [usize; 3] {
        [0, 1, 2].map(|l| uav_index(uav, 0, l))
    }

    fn workspace() -> Region {
        Region::new([-10.0; 3], [10.0; 3]).unwrap()
    }

    fn limits() -> KinematicLimits {
        KinematicLimits::symmetric(2.0, 1.0, 3.0).unwrap()
    }

    fn problem(formula: Formula, starts: Vec<[f64; 3]>) -> PlanProblem {
        let n = starts.len();
        PlanProblem {
            formula,
            initial_positions: starts,
            initial_velocities: vec![[0.0; 3]; n],
            workspace: workspace(),
            limits: limits(),
        }
    }

    #[test]
    fn hover_trace_is_constant() {
        let plan = WaypointPlan::hover(&[[1.0, 2.0, 3.0], [0.0; 3]], 3, 0.5).unwrap();
        let tr = trace_from_plan(&plan, 0.1).unwrap();
        assert_eq!(tr.len(), 16);
        for s in 0..tr.len() {
            assert_eq!(&tr.sample(s)[..3], &[1.0, 2.0, 3.0]);
            assert!(tr.sample(s)[3..].iter().take(6).all(|v| *v == 0.0));
        }
        assert!(trace_from_plan(&plan, 0.3).is_err());
        assert!(trace_from_plan(&plan, 0.0).is_err());
    }

    #[test]
    fn single_segment_trace_matches_sampling() {
        let plan = WaypointPlan::from_positions(1.0, vec![vec![[0.0; 3], [0.5, -0.3, 0.2]]], &[[0.1, 0.0, 0.0]]).unwrap();
        let tr = trace_from_plan(&plan, 0.25).unwrap();
        let seg = plan.segment(0, 0);
        for s in 0..tr.len() {
            let want = crate::spline::sample_segment(&seg, s as f64 * 0.25).unwrap();
            assert_eq!(&tr.sample(s)[..3], &want.p);
            assert_eq!(&tr.sample(s)[3..6], &want.v);
            assert_eq!(&tr.sample(s)[6..9], &want.a);
        }
    }

    #[test]
    fn junction_is_c1() {
        let plan = WaypointPlan::from_positions(
            1.0,
            vec![vec![[0.0; 3], [0.4, 0.1, -0.2], [0.9, 0.3, -0.1]]],
            &[[0.2, 0.0, 0.1]],
        )
        .unwrap();
        let left = plan.segment(0, 0).eval(1.0);
        let right = plan.segment(0, 1).eval(0.0);
        for l in 0..3 {
            assert!((left.p[l] - right.p[l]).abs() < 1e-9);
            assert!((left.v[l] - right.v[l]).abs() < 1e-9);
        }
    }

    #[test]
    fn hover_slacks_positive_and_overshoot_flagged() {
        let prob = problem(Formula::predicate(vec![(0, 1.0)], 20.0), vec![[0.0; 3]]);
        let cfg = PlannerConfig::default();
        let hover = WaypointPlan::hover(&[[0.0; 3]], 2, 1.0).unwrap();
        let rep = constraint_residuals(&hover, &prob, &cfg).unwrap();
        assert!(rep.kinematic.iter().all(|s| s.slack > 0.0));

        let ub = kinematic_bounds([0.0; 3], 1.0, &prob.limits).unwrap()[0].vel.hi;
        let fast = WaypointPlan::from_positions(1.0, vec![vec![[0.0; 3], [ub + 0.1, 0.0, 0.0], [ub + 0.1, 0.0, 0.0]]], &[[0.0; 3]]).unwrap();
        let rep = constraint_residuals(&fast, &prob, &cfg).unwrap();
        let bad = rep
            .kinematic
            .iter()
            .find(|s| s.uav == 0 && s.segment == 0 && s.axis == 0 && s.kind == BoundKind::VelUpper)
            .unwrap();
        assert!((bad.slack + 0.1).abs() < 1e-12);
        assert!(!rep.kinematically_feasible());
    }

    #[test]
    fn margin_uses_channel_rates() {
        let lim = limits();
        let sep = Formula::separation(pos(0), pos(1), 0.2);
        assert!((sampling_margin(&sep, &lim, 0.1) - 2.0 * 2.0 * 0.05).abs() < 1e-15);
        let vel = Formula::predicate(vec![(uav_index(0, 1, 0), 1.0)], 0.0);
        assert!((sampling_margin(&vel, &lim, 0.1) - 1.0 * 0.05).abs() < 1e-15);
    }

    #[test]
    fn waypoint_gradient_matches_finite_differences() {
        let goal = Region::new([2.0, -1.0, 0.0], [4.0, 1.0, 2.0]).unwrap();
        let f = Formula::And(vec![
            Formula::eventually(Interval::new(0.0, 2.0).unwrap(), Formula::in_region(pos(0), &goal)),
            Formula::always(Interval::new(0.0, 2.0).unwrap(), Formula::separation(pos(0), pos(1), 0.5)),
        ]);
        let prob = problem(f, vec![[0.0; 3], [0.5, 0.5, 0.5]]);
        let cfg = PlannerConfig {
            segments: 3,
            dt: 0.1,
            smooth: SmoothConfig::new(5.0).unwrap(),
            ..Default::default()
        };
        let positions = vec![
            vec![[0.0; 3], [0.6, 0.1, 0.2], [1.5, -0.2, 0.4], [2.4, 0.1, 0.7]],
            vec![[0.5, 0.5, 0.5], [0.7, 0.9, 0.4], [0.4, 1.1, 0.8], [0.1, 1.0, 1.2]],
        ];
        let plan = WaypointPlan::from_positions(1.0, positions.clone(), &prob.initial_velocities).unwrap();
        let (_, g) = smooth_robustness_wrt_waypoints(&plan, &prob, &cfg).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            for j in 1..4 {
                for l in 0..3 {
                    let eval = |d: f64| {
                        let mut p = positions.clone();
                        p[i][j][l] += d;
                        let pl = WaypointPlan::from_positions(1.0, p, &prob.initial_velocities).unwrap();
                        smooth_robustness(&prob.formula, &trace_from_plan(&pl, 0.1).unwrap(), &cfg.smooth).unwrap()
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    let an = g[i][j - 1][l];
                    assert!((fd - an).abs() <= 1e-4 * fd.abs().max(1e-2), "i={i} j={j} l={l}: {fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn start_inside_goal_stays_put() {
        let goal = Region::new([-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]).unwrap();
        let f = Formula::eventually(Interval::new(0.0, 4.0).unwrap(), Formula::in_region(pos(0), &goal));
        let prob = problem(f, vec![[0.0; 3]]);
        let cfg = PlannerConfig {
            segments: 4,
            restarts: 2,
            delta: 0.5,
            ..Default::default()
        };
        let out = plan(&prob, &cfg).unwrap();
        assert_eq!(out.status, PlanStatus::Success);
        assert!((out.rho - 1.0).abs() < 1e-3, "rho {}", out.rho);
        assert!(out.slacks.kinematically_feasible());
    }

    #[test]
    fn unattainable_delta_gives_feasible_best_effort() {
        // Robustness cannot exceed the goal's half-width of 0.5.
        let goal = Region::new([2.0, -0.5, -0.5], [3.0, 0.5, 0.5]).unwrap();
        let f = Formula::eventually(Interval::new(0.0, 4.0).unwrap(), Formula::in_region(pos(0), &goal));
        let prob = problem(f, vec![[0.0; 3]]);
        let cfg = PlannerConfig {
            segments: 4,
            restarts: 2,
            delta: 0.8,
            ..Default::default()
        };
        let out = plan(&prob, &cfg).unwrap();
        assert_eq!(out.status, PlanStatus::BestEffort);
        assert!(out.slacks.kinematically_feasible());
        assert!(out.rho > 0.4 && out.rho <= 0.5 + 1e-12, "rho {}", out.rho);
        assert!(!out.diagnostics.is_empty());
    }

    #[test]
    fn goal_outside_workspace_is_infeasible() {
        let goal = Region::new([20.0; 3], [21.0; 3]).unwrap();
        let f = Formula::eventually(Interval::new(0.0, 4.0).unwrap(), Formula::in_region(pos(0), &goal));
        let prob = problem(f, vec![[0.0; 3]]);
        let cfg = PlannerConfig {
            segments: 4,
            ..Default::default()
        };
        assert!(matches!(plan(&prob, &cfg), Err(PlanError::Infeasible(_))));
    }

    #[test]
    fn short_plan_is_rejected() {
        let f = Formula::eventually(Interval::new(0.0, 9.0).unwrap(), Formula::predicate(vec![(0, 1.0)], 0.0));
        let prob = problem(f, vec![[0.0; 3]]);
        let cfg = PlannerConfig::default();
        assert!(matches!(plan(&prob, &cfg), Err(PlanError::HorizonMismatch { .. })));
    }

    #[test]
    fn reach_with_fixed_seed_is_deterministic() {
        let goal = Region::new([2.0, -1.0, -1.0], [5.0, 1.0, 1.0]).unwrap();
        let f = Formula::eventually(Interval::new(0.0, 4.0).unwrap(), Formula::in_region(pos(0), &goal));
        let prob = problem(f, vec![[0.0; 3]]);
        let cfg = PlannerConfig {
            segments: 4,
            restarts: 3,
            seed: 7,
            delta: 0.2,
            ..Default::default()
        };
        let a = plan(&prob, &cfg).unwrap();
        let b = plan(&prob, &cfg).unwrap();
        assert_eq!(a.plan, b.plan);
        assert_eq!(a.status, PlanStatus::Success, "{:?}", a.diagnostics);
        assert!(a.slacks.kinematically_feasible());
        assert!(a.rho >= 0.2);
    }
}
