//! Eight-state quadrotor model (position, velocity, roll, pitch; yaw fixed at
//! zero), the tracking-error dynamics, a fixed-step RK4 closed-loop
//! simulator, and the attitude/motor layers below the tracking controller.
//!
//! The `z` axis points along gravity: hovering needs `f_t = m g`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("rotor {rotor} needs squared speed {value:.6e} < 0; the commanded wrench is infeasible")]
    NegativeSpindle { rotor: usize, value: f64 },
    #[error("simulation diverged at t = {t:.4} s (last good state at t = {last_good_t:.4} s: {last_good:?})")]
    Divergence {
        t: f64,
        last_good_t: f64,
        last_good: QuadState,
        state: QuadState,
    },
    #[error("simulation step {dt} must be positive and not exceed the span {span}")]
    BadStep { dt: f64, span: f64 },
}

/// Collective thrust (N) and the two attitude inputs (N·m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub ft: f64,
    pub ux: f64,
    pub uy: f64,
}

impl Inputs {
    pub fn to_array(self) -> [f64; 3] {
        [self.ft, self.ux, self.uy]
    }
}

/// Elementwise input box `U`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl InputBox {
    pub fn contains(&self, u: &Inputs) -> bool {
        u.to_array().iter().enumerate().all(|(i, v)| self.lo[i] <= *v && *v <= self.hi[i])
    }

    /// Componentwise clamp; the flag reports whether anything moved.
    pub fn clamp(&self, u: Inputs) -> (Inputs, bool) {
        let raw = u.to_array();
        let c = [0, 1, 2].map(|i| raw[i].clamp(self.lo[i], self.hi[i]));
        (Inputs { ft: c[0], ux: c[1], uy: c[2] }, c != raw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadParams {
    pub mass: f64,
    pub ix: f64,
    pub iy: f64,
    pub gravity: f64,
    /// Rotor thrust coefficient (placeholder; only used by allocation).
    pub b: f64,
    /// Arm length in m (placeholder).
    pub arm: f64,
    /// Rotor drag coefficient (placeholder).
    pub d: f64,
    pub input: InputBox,
}

impl Default for QuadParams {
    fn default() -> Self {
        let (mass, gravity) = (0.5, 9.81);
        Self {
            mass,
            ix: 0.2,
            iy: 0.2,
            gravity,
            b: 1e-5,
            arm: 0.2,
            d: 1e-6,
            input: InputBox {
                lo: [0.0, -1.0, -1.0],
                hi: [2.0 * mass * gravity, 1.0, 1.0],
            },
        }
    }
}

impl QuadParams {
    pub fn validate(&self) -> Result<(), DynError> {
        let positive = [
            ("mass", self.mass),
            ("ix", self.ix),
            ("iy", self.iy),
            ("b", self.b),
            ("arm", self.arm),
            ("d", self.d),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(DynError::InvalidParams(format!("{name} must be positive, got {v}")));
        }
        if !(self.input.lo[0] >= 0.0) || (0..3).any(|i| !(self.input.lo[i] <= self.input.hi[i])) {
            return Err(DynError::InvalidParams("input box must satisfy 0 <= ft_min and lo <= hi".into()));
        }
        Ok(())
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadState {
    pub p: [f64; 3],
    pub v: [f64; 3],
    pub phi: f64,
    pub theta: f64,
}

impl QuadState {
    pub fn at_rest(p: [f64; 3]) -> Self {
        Self {
            p,
            v: [0.0; 3],
            phi: 0.0,
            theta: 0.0,
        }
    }

    pub fn to_array(&self) -> [f64; 8] {
        let [px, py, pz] = self.p;
        let [vx, vy, vz] = self.v;
        [px, py, pz, vx, vy, vz, self.phi, self.theta]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            p: [a[0], a[1], a[2]],
            v: [a[3], a[4], a[5]],
            phi: a[6],
            theta: a[7],
        }
    }

    fn diverged(&self) -> bool {
        self.to_array().iter().any(|v| !v.is_finite()) || self.phi.abs() >= FRAC_PI_2 || self.theta.abs() >= FRAC_PI_2
    }
}

/// Planned position, velocity and acceleration at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannedState {
    pub p: [f64; 3],
    pub v: [f64; 3],
    pub a: [f64; 3],
}

/// `e = x - G x̂`: position and velocity differences, then roll and pitch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorState(pub [f64; 8]);

impl ErrorState {
    pub fn between(x: &QuadState, planned: &PlannedState) -> Self {
        let mut e = [0.0; 8];
        for l in 0..3 {
            e[l] = x.p[l] - planned.p[l];
            e[3 + l] = x.v[l] - planned.v[l];
        }
        e[6] = x.phi;
        e[7] = x.theta;
        Self(e)
    }

    /// Largest translational error `max |e_i|, i < 6`.
    pub fn translational_inf_norm(&self) -> f64 {
        self.0[..6].iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn dynamics_deriv(x: &QuadState, u: &Inputs, params: &QuadParams) -> [f64; 8] {
    let (sp, cp) = x.phi.sin_cos();
    let (st, ct) = x.theta.sin_cos();
    let f = u.ft / params.mass;
    [
        x.v[0],
        x.v[1],
        x.v[2],
        -f * cp * st,
        f * sp,
        params.gravity - f * cp * ct,
        u.ux / params.ix,
        u.uy / params.iy,
    ]
}

/// `f_e(e, x̂) + g_e(e) u`.
pub fn error_deriv(e: &ErrorState, a_hat: [f64; 3], u: &Inputs, params: &QuadParams) -> [f64; 8] {
    let e = &e.0;
    let (s7, c7) = e[6].sin_cos();
    let (s8, c8) = e[7].sin_cos();
    let m = params.mass;
    [
        e[3],
        e[4],
        e[5],
        -a_hat[0] + (-c7 * s8 / m) * u.ft,
        -a_hat[1] + (s7 / m) * u.ft,
        params.gravity - a_hat[2] + (-c7 * c8 / m) * u.ft,
        u.ux / params.ix,
        u.uy / params.iy,
    ]
}

/// `T_x = du_x/dt`, `T_y = du_y/dt`, `T_z = (I_y - I_x) φ̇ θ̇`.
pub fn attitude_torques(ux_rate: f64, uy_rate: f64, phi_dot: f64, theta_dot: f64, params: &QuadParams) -> [f64; 3] {
    [ux_rate, uy_rate, (params.iy - params.ix) * phi_dot * theta_dot]
}

/// Rotor speeds from collective thrust and body torques.
pub fn rotor_allocation(ft: f64, torques: [f64; 3], params: &QuadParams) -> Result<[f64; 4], DynError> {
    let (b, bl, d) = (params.b, params.b * params.arm, params.d);
    #[rustfmt::skip]
    let a = Matrix4::new(
        b, b, b, b,
        -bl, 0.0, bl, 0.0,
        0.0, -bl, 0.0, bl,
        -d, d, -d, d,
    );
    let rhs = Vector4::new(ft, torques[0], torques[1], torques[2]);
    let sq = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| DynError::InvalidParams("singular allocation matrix".into()))?;
    let mut out = [0.0; 4];
    for (i, w2) in sq.iter().enumerate() {
        // tolerate round-off around an exactly zero rotor
        let tol = 1e-12 * (ft.abs() / b).max(1.0);
        if *w2 < -tol {
            return Err(DynError::NegativeSpindle { rotor: i + 1, value: *w2 });
        }
        out[i] = w2.max(0.0).sqrt();
    }
    Ok(out)
}

/// State feedback on the tracking error.
pub trait ControlLaw {
    /// Commanded inputs before saturation.
    fn raw(&self, e: &ErrorState) -> Inputs;
    fn input_box(&self) -> InputBox;
    /// Lyapunov value logged alongside the state.
    fn level(&self, e: &ErrorState) -> f64;

    fn saturated(&self, e: &ErrorState) -> (Inputs, bool) {
        self.input_box().clamp(self.raw(e))
    }
}

/// One row of a closed-loop simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimRow {
    pub t: f64,
    pub state: QuadState,
    pub planned: PlannedState,
    pub error: ErrorState,
    pub input: Inputs,
    pub clamped: bool,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub dt: f64,
    pub rows: Vec<SimRow>,
}

impl SimLog {
    pub fn final_state(&self) -> QuadState {
        self.rows.last().expect("log has the initial row").state
    }

    pub fn max_translational_error(&self) -> f64 {
        self.rows.iter().map(|r| r.error.translational_inf_norm()).fold(0.0, f64::max)
    }

    pub fn clamp_count(&self) -> usize {
        self.rows.iter().filter(|r| r.clamped).count()
    }

    /// Attitude torques per row from central differences of the logged
    /// `u_x`, `u_y` and angle streams (one-sided at the ends).
    pub fn torques(&self, params: &QuadParams) -> Vec<[f64; 3]> {
        let n = self.rows.len();
        let diff = |f: &dyn Fn(&SimRow) -> f64, k: usize| -> f64 {
            if n < 2 {
                return 0.0;
            }
            let (a, b) = (k.saturating_sub(1), (k + 1).min(n - 1));
            (f(&self.rows[b]) - f(&self.rows[a])) / (self.rows[b].t - self.rows[a].t)
        };
        (0..n)
            .map(|k| {
                attitude_torques(
                    diff(&|r| r.input.ux, k),
                    diff(&|r| r.input.uy, k),
                    diff(&|r| r.state.phi, k),
                    diff(&|r| r.state.theta, k),
                    params,
                )
            })
            .collect()
    }
}

/// Fixed-step RK4 of the closed loop, with the control law evaluated at
/// every stage against the reference at that stage's time.
pub fn integrate<C, R>(
    x0: QuadState,
    law: &C,
    reference: R,
    t_span: (f64, f64),
    dt: f64,
    params: &QuadParams,
) -> Result<SimLog, DynError>
where
    C: ControlLaw + ?Sized,
    R: Fn(f64) -> PlannedState,
{
    params.validate()?;
    let span = t_span.1 - t_span.0;
    if !(dt > 0.0 && dt <= span + 1e-12 && span.is_finite()) {
        return Err(DynError::BadStep { dt, span });
    }
    let steps = (span / dt).round().max(1.0) as usize;
    let h = span / steps as f64;

    let rhs = |t: f64, x: &[f64; 8]| -> [f64; 8] {
        let state = QuadState::from_array(*x);
        let e = ErrorState::between(&state, &reference(t));
        let (u, _) = law.saturated(&e);
        dynamics_deriv(&state, &u, params)
    };
    let row = |t: f64, state: QuadState| {
        let planned = reference(t);
        let error = ErrorState::between(&state, &planned);
        let (input, clamped) = law.saturated(&error);
        SimRow {
            t,
            state,
            planned,
            error,
            input,
            clamped,
            level: law.level(&error),
        }
    };

    let mut rows = Vec::with_capacity(steps + 1);
    let mut x = x0.to_array();
    rows.push(row(t_span.0, x0));
    for k in 0..steps {
        let t = t_span.0 + k as f64 * h;
        let k1 = rhs(t, &x);
        let k2 = rhs(t + h / 2.0, &axpy(&x, &k1, h / 2.0));
        let k3 = rhs(t + h / 2.0, &axpy(&x, &k2, h / 2.0));
        let k4 = rhs(t + h, &axpy(&x, &k3, h));
        for i in 0..8 {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let state = QuadState::from_array(x);
        let t_next = t_span.0 + (k + 1) as f64 * h;
        if state.diverged() {
            let last = rows.last().expect("initial row");
            return Err(DynError::Divergence {
                t: t_next,
                last_good_t: last.t,
                last_good: last.state,
                state,
            });
        }
        rows.push(row(t_next, state));
    }
    Ok(SimLog { dt: h, rows })
}

fn axpy(x: &[f64; 8], d: &[f64; 8], s: f64) -> [f64; 8] {
    std::array::from_fn(|i| x[i] + s * d[i])
}
