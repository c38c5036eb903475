//! Jerk-minimizing quintic segments of the per-axis triple integrator, and
//! bounds on the waypoint displacement that keep velocity, acceleration and
//! jerk inside their limits for the whole segment.
//!
//! A segment with start state `(p0, v0, a = 0)` and end position `p1` has
//! jerk `j(t) = (α/2) t² + β t + γ`. With free end velocity and `a(T) = 0`
//! the optimum depends on the boundary data only through
//! `D = p1 - p0 - v0 T`:
//!
//! ```text
//! α = 45 D / T⁵    β = -45 D / T⁴    γ = 15 D / T³
//! v(t) = v0 + K3(t) D        a(t) = K4(t) D
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("segment duration must be positive and finite, got {0}")]
    NonPositiveDuration(f64),
    #[error("sample time {t} outside segment [0, {duration}]")]
    TimeOutOfRange { t: f64, duration: f64 },
    #[error("invalid kinematic limits: {0}")]
    InvalidLimits(String),
}

/// Per-axis boxes on velocity (m/s), acceleration (m/s²) and jerk (m/s³).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinematicLimits {
    pub v_min: f64,
    pub v_max: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub j_min: f64,
    pub j_max: f64,
}

impl KinematicLimits {
    pub fn new(v: (f64, f64), a: (f64, f64), j: (f64, f64)) -> Result<Self, SplineError> {
        let lim = Self {
            v_min: v.0,
            v_max: v.1,
            a_min: a.0,
            a_max: a.1,
            j_min: j.0,
            j_max: j.1,
        };
        lim.validate()?;
        Ok(lim)
    }

    pub fn symmetric(v: f64, a: f64, j: f64) -> Result<Self, SplineError> {
        Self::new((-v, v), (-a, a), (-j, j))
    }

    pub fn validate(&self) -> Result<(), SplineError> {
        for (name, lo, hi) in [
            ("velocity", self.v_min, self.v_max),
            ("acceleration", self.a_min, self.a_max),
            ("jerk", self.j_min, self.j_max),
        ] {
            if !(lo < 0.0 && 0.0 < hi && lo.is_finite() && hi.is_finite()) {
                return Err(SplineError::InvalidLimits(format!(
                    "{name} box [{lo}, {hi}] must strictly contain 0"
                )));
            }
        }
        Ok(())
    }

    /// Largest absolute velocity allowed on any axis.
    pub fn speed_bound(&self) -> f64 {
        self.v_min.abs().max(self.v_max)
    }

    pub fn accel_bound(&self) -> f64 {
        self.a_min.abs().max(self.a_max)
    }

    pub fn jerk_bound(&self) -> f64 {
        self.j_min.abs().max(self.j_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineSegment {
    pub duration: f64,
    pub p0: [f64; 3],
    pub v0: [f64; 3],
    pub p1: [f64; 3],
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
    pub gamma: [f64; 3],
}

/// Position, velocity, acceleration and jerk per axis at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSample {
    pub p: [f64; 3],
    pub v: [f64; 3],
    pub a: [f64; 3],
    pub j: [f64; 3],
}

fn check_duration(t: f64) -> Result<(), SplineError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(SplineError::NonPositiveDuration(t))
    }
}

pub fn solve_segment(p0: [f64; 3], v0: [f64; 3], p1: [f64; 3], duration: f64) -> Result<SplineSegment, SplineError> {
    check_duration(duration)?;
    let t = duration;
    let d = [0, 1, 2].map(|l| p1[l] - p0[l] - v0[l] * t);
    Ok(SplineSegment {
        duration,
        p0,
        v0,
        p1,
        alpha: d.map(|d| 45.0 * d / t.powi(5)),
        beta: d.map(|d| -45.0 * d / t.powi(4)),
        gamma: d.map(|d| 15.0 * d / t.powi(3)),
    })
}

impl SplineSegment {
    /// Evaluates the quintic without range checking.
    pub fn eval(&self, t: f64) -> SegmentSample {
        let (t2, t3) = (t * t, t * t * t);
        let (t4, t5) = (t3 * t, t3 * t2);
        let mut s = SegmentSample {
            p: [0.0; 3],
            v: [0.0; 3],
            a: [0.0; 3],
            j: [0.0; 3],
        };
        for l in 0..3 {
            let (al, be, ga) = (self.alpha[l], self.beta[l], self.gamma[l]);
            s.p[l] = al / 120.0 * t5 + be / 24.0 * t4 + ga / 6.0 * t3 + self.v0[l] * t + self.p0[l];
            s.v[l] = al / 24.0 * t4 + be / 6.0 * t3 + ga / 2.0 * t2 + self.v0[l];
            s.a[l] = al / 6.0 * t3 + be / 2.0 * t2 + ga * t;
            s.j[l] = al / 2.0 * t2 + be * t + ga;
        }
        s
    }

    pub fn end_velocity(&self) -> [f64; 3] {
        [0, 1, 2].map(|l| end_velocity(self.v0[l], self.p1[l] - self.p0[l], self.duration))
    }
}

pub fn sample_segment(seg: &SplineSegment, t: f64) -> Result<SegmentSample, SplineError> {
    if !(0.0..=seg.duration).contains(&t) {
        return Err(SplineError::TimeOutOfRange {
            t,
            duration: seg.duration,
        });
    }
    Ok(seg.eval(t))
}

pub fn k3(t: f64, duration: f64) -> f64 {
    let tt = duration;
    90.0 * t.powi(4) / (48.0 * tt.powi(5)) - 90.0 * t.powi(3) / (12.0 * tt.powi(4)) + 30.0 * t * t / (4.0 * tt.powi(3))
}

pub fn k4(t: f64, duration: f64) -> f64 {
    let tt = duration;
    90.0 * t.powi(3) / (12.0 * tt.powi(5)) - 90.0 * t * t / (4.0 * tt.powi(4)) + 30.0 * t / (2.0 * tt.powi(3))
}

/// Position shape: `p(t) = p0 + v0 t + S(t) D`.
pub fn position_shape(t: f64, duration: f64) -> f64 {
    let s = t / duration;
    0.375 * s.powi(5) - 1.875 * s.powi(4) + 2.5 * s.powi(3)
}

/// Jerk shape: `j(t) = KJ(t) D`.
pub fn jerk_shape(t: f64, duration: f64) -> f64 {
    let s = t / duration;
    (22.5 * s * s - 45.0 * s + 15.0) / duration.powi(3)
}

/// `v(T) = K3(T) Δp + (1 - T K3(T)) v0`.
pub fn end_velocity(v0: f64, dp: f64, duration: f64) -> f64 {
    let k = k3(duration, duration);
    k * dp + (1.0 - duration * k) * v0
}

/// Maximizer of K4 over `[0, T]`: roots of the quadratic derivative compared
/// against both endpoints.
pub fn k4_argmax(duration: f64) -> f64 {
    // dK4/dt ∝ 22.5 s² - 45 s + 15 with s = t/T
    let (a, b, c) = (22.5, -45.0, 15.0);
    let disc: f64 = b * b - 4.0 * a * c;
    let mut candidates = vec![0.0, 1.0];
    if disc >= 0.0 {
        let r = disc.sqrt();
        candidates.extend([(-b - r) / (2.0 * a), (-b + r) / (2.0 * a)].into_iter().filter(|s| (0.0..=1.0).contains(s)));
    }
    let best = candidates
        .into_iter()
        .max_by(|x, y| k4(x * duration, duration).total_cmp(&k4(y * duration, duration)))
        .unwrap_or(0.0);
    best * duration
}

/// Closed interval on the per-axis displacement `Δp = p1 - p0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// `min(x - lo, hi - x)`; nonnegative iff `x` lies inside.
    pub fn slack(&self, x: f64) -> f64 {
        (x - self.lo).min(self.hi - x)
    }

    pub fn intersect(&self, other: &Bound) -> Bound {
        Bound {
            lo: self.lo.max(other.lo),
            hi: self.hi.min(other.hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisBounds {
    pub vel: Bound,
    pub acc: Bound,
    pub jerk: Bound,
}

impl AxisBounds {
    pub fn combined(&self) -> Bound {
        self.vel.intersect(&self.acc).intersect(&self.jerk)
    }

    pub fn contains(&self, dp: f64) -> bool {
        self.vel.contains(dp) && self.acc.contains(dp) && self.jerk.contains(dp)
    }
}

/// Displacement bounds per axis for a segment starting at velocity `v0`.
///
/// Velocity is monotone in `t` within a segment, so bounding `v(T)` suffices
/// given `v0` is already inside the box. Acceleration is `K4(t) D` with
/// `K4 >= 0`. Jerk is `KJ(t) D` with `KJ` ranging over `[-7.5, 15] / T³`.
pub fn kinematic_bounds(v0: [f64; 3], duration: f64, limits: &KinematicLimits) -> Result<[AxisBounds; 3], SplineError> {
    check_duration(duration)?;
    limits.validate()?;
    let t = duration;
    let kt = k3(t, t);
    let k4max = k4(k4_argmax(t), t);
    let t3 = t.powi(3);
    Ok(v0.map(|v| AxisBounds {
        vel: Bound {
            lo: (limits.v_min - (1.0 - t * kt) * v) / kt,
            hi: (limits.v_max - (1.0 - t * kt) * v) / kt,
        },
        acc: Bound {
            lo: t * v + limits.a_min / k4max,
            hi: t * v + limits.a_max / k4max,
        },
        jerk: Bound {
            lo: t * v + (t3 * limits.j_min / 15.0).max(-t3 * limits.j_max / 7.5),
            hi: t * v + (t3 * limits.j_max / 15.0).min(-t3 * limits.j_min / 7.5),
        },
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn lim() -> KinematicLimits {
        KinematicLimits::new((-2.0, 3.0), (-1.5, 1.0), (-4.0, 5.0)).unwrap()
    }

    #[test]
    fn hover_and_constant_velocity_have_zero_jerk() {
        let seg = solve_segment([1.0, 2.0, 3.0], [0.0; 3], [1.0, 2.0, 3.0], 2.0).unwrap();
        assert_eq!(seg.alpha, [0.0; 3]);
        assert_eq!(seg.gamma, [0.0; 3]);
        let s = sample_segment(&seg, 0.7).unwrap();
        assert_eq!((s.p, s.v, s.a, s.j), ([1.0, 2.0, 3.0], [0.0; 3], [0.0; 3], [0.0; 3]));

        let v0 = [0.5, -1.0, 0.25];
        let p1 = [1.0 + 1.0, 2.0 - 2.0, 3.0 + 0.5];
        let line = solve_segment([1.0, 2.0, 3.0], v0, p1, 2.0).unwrap();
        for l in 0..3 {
            assert!(line.alpha[l].abs() < 1e-15 && line.beta[l].abs() < 1e-15 && line.gamma[l].abs() < 1e-15);
        }
    }

    #[test]
    fn start_sample_is_boundary_data() {
        let seg = solve_segment([0.0, 1.0, 2.0], [0.3, 0.0, -0.2], [1.0, -1.0, 2.5], 1.5).unwrap();
        let s = sample_segment(&seg, 0.0).unwrap();
        assert_eq!(s.p, seg.p0);
        assert_eq!(s.v, seg.v0);
        assert_eq!(s.a, [0.0; 3]);
        assert_eq!(s.j, seg.gamma);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(
            solve_segment([0.0; 3], [0.0; 3], [1.0; 3], 0.0),
            Err(SplineError::NonPositiveDuration(0.0))
        );
        let seg = solve_segment([0.0; 3], [0.0; 3], [1.0; 3], 1.0).unwrap();
        assert!(sample_segment(&seg, 1.0 + 1e-12).is_err());
        assert!(sample_segment(&seg, -1e-12).is_err());
        assert!(KinematicLimits::symmetric(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn k3_closed_values() {
        assert_eq!(k3(0.0, 2.0), 0.0);
        assert_relative_eq!(k3(2.0, 2.0), 1.875 / 2.0, max_relative = 1e-15);
        // constant-velocity displacement leaves the velocity unchanged
        assert_relative_eq!(end_velocity(0.8, 0.8 * 1.3, 1.3), 0.8, max_relative = 1e-14);
    }

    #[test]
    fn k4_peak() {
        let t = 1.7;
        let tp = k4_argmax(t);
        assert_relative_eq!(tp, (1.0 - 1.0 / 3f64.sqrt()) * t, max_relative = 1e-12);
        let fine = (0..=10_000).map(|i| k4(i as f64 * t / 1e4, t)).fold(f64::MIN, f64::max);
        assert!(k4(tp, t) >= fine - 1e-12);
        assert_relative_eq!(k4(tp, t) * t * t, 5.0 / 3f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn bounds_at_rest() {
        let t = 1.2;
        let b = kinematic_bounds([0.0; 3], t, &lim()).unwrap();
        let kt = k3(t, t);
        assert_relative_eq!(b[0].vel.lo, -2.0 / kt, max_relative = 1e-13);
        assert_relative_eq!(b[0].vel.hi, 3.0 / kt, max_relative = 1e-13);
        let s = KinematicLimits::symmetric(1.0, 1.0, 4.0).unwrap();
        let b = kinematic_bounds([0.0; 3], t, &s).unwrap();
        assert_relative_eq!(b[1].jerk.lo, 2.0 * t.powi(3) / 30.0 * -4.0, max_relative = 1e-14);
        assert_relative_eq!(b[1].jerk.hi, 2.0 * t.powi(3) / 30.0 * 4.0, max_relative = 1e-14);
    }

    #[test]
    fn slack_sign() {
        let b = Bound { lo: -1.0, hi: 2.0 };
        assert_eq!(b.slack(0.0), 1.0);
        assert_eq!(b.slack(2.1), 2.0 - 2.1);
        assert!(!b.contains(-1.5));
    }

    #[test]
    fn midpoint_matches_jerk_integration() {
        let seg = solve_segment([0.2, -0.4, 1.0], [0.7, 0.1, -0.3], [1.5, -0.9, 0.2], 1.3).unwrap();
        let half = seg.duration / 2.0;
        let n = 1000;
        let h = half / n as f64;
        // RK4 on (p, v, a)' = (v, a, j(t)) for each axis
        let f = |t: f64, x: [f64; 3], l: usize| [x[1], x[2], seg.eval(t).j[l]];
        for l in 0..3 {
            let mut x = [seg.p0[l], seg.v0[l], 0.0];
            for k in 0..n {
                let t = k as f64 * h;
                let add = |x: [f64; 3], d: [f64; 3], s: f64| [x[0] + s * d[0], x[1] + s * d[1], x[2] + s * d[2]];
                let k1 = f(t, x, l);
                let k2 = f(t + h / 2.0, add(x, k1, h / 2.0), l);
                let k3 = f(t + h / 2.0, add(x, k2, h / 2.0), l);
                let k4 = f(t + h, add(x, k3, h), l);
                for i in 0..3 {
                    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            let s = seg.eval(half);
            assert!((x[0] - s.p[l]).abs() < 1e-12);
            assert!((x[1] - s.v[l]).abs() < 1e-12);
            assert!((x[2] - s.a[l]).abs() < 1e-12);
        }
    }

    #[test]
    fn chained_segments_are_c1_with_zero_junction_acceleration() {
        let t = 0.9;
        let a = solve_segment([0.0; 3], [0.2, 0.0, -0.1], [0.5, 0.3, -0.2], t).unwrap();
        let b = solve_segment(a.p1, a.end_velocity(), [0.9, 0.1, 0.4], t).unwrap();
        let (ea, sb) = (a.eval(t), b.eval(0.0));
        for l in 0..3 {
            assert!((ea.p[l] - sb.p[l]).abs() < 1e-12);
            assert!((ea.v[l] - sb.v[l]).abs() < 1e-12);
            assert!(ea.a[l].abs() < 1e-12 && sb.a[l] == 0.0);
        }
    }

    fn coord() -> impl Strategy<Value = [f64; 3]> {
        prop::array::uniform3(-5.0..5.0f64)
    }

    proptest! {
        #[test]
        fn boundary_conditions_hold(p0 in coord(), v0 in coord(), p1 in coord(), t in 0.2..4.0f64) {
            let seg = solve_segment(p0, v0, p1, t).unwrap();
            let end = seg.eval(t);
            let start = seg.eval(0.0);
            for l in 0..3 {
                let scale = p0[l].abs() + p1[l].abs() + v0[l].abs() * t + 1.0;
                prop_assert!((start.p[l] - p0[l]).abs() <= 1e-9 * scale);
                prop_assert!((start.v[l] - v0[l]).abs() <= 1e-9 * scale);
                prop_assert!(start.a[l] == 0.0);
                prop_assert!((end.p[l] - p1[l]).abs() <= 1e-9 * scale);
                prop_assert!(end.a[l].abs() <= 1e-9 * scale / (t * t));
                prop_assert!((end.v[l] - seg.end_velocity()[l]).abs() <= 1e-9 * scale / t);
            }
        }

        #[test]
        fn coefficients_superpose(
            a0 in coord(), av in coord(), a1 in coord(),
            b0 in coord(), bv in coord(), b1 in coord(),
            s in -3.0..3.0f64, t in 0.2..4.0f64,
        ) {
            let comb = |x: [f64; 3], y: [f64; 3]| [0, 1, 2].map(|l| x[l] + s * y[l]);
            let sa = solve_segment(a0, av, a1, t).unwrap();
            let sb = solve_segment(b0, bv, b1, t).unwrap();
            let sc = solve_segment(comb(a0, b0), comb(av, bv), comb(a1, b1), t).unwrap();
            for (x, y, z) in [(sa.alpha, sb.alpha, sc.alpha), (sa.beta, sb.beta, sc.beta), (sa.gamma, sb.gamma, sc.gamma)] {
                for l in 0..3 {
                    let want = x[l] + s * y[l];
                    prop_assert!((z[l] - want).abs() <= 1e-9 * (x[l].abs() + s.abs() * y[l].abs() + 1.0));
                }
            }
        }

        #[test]
        fn k4_is_acceleration_coefficient(d in -3.0..3.0f64, v0 in -2.0..2.0f64, t in 0.3..3.0f64, frac in 0.0..=1.0f64) {
            let seg = solve_segment([0.0; 3], [v0; 3], [v0 * t + d; 3], t).unwrap();
            let tt = frac * t;
            let s = seg.eval(tt);
            prop_assert!((s.a[0] - k4(tt, t) * d).abs() <= 1e-9 * (1.0 + d.abs()) / (t * t));
            prop_assert!((s.v[0] - v0 - k3(tt, t) * d).abs() <= 1e-9 * (1.0 + d.abs()) / t);
            prop_assert!((s.j[0] - jerk_shape(tt, t) * d).abs() <= 1e-9 * (1.0 + d.abs()) / t.powi(3));
            prop_assert!((s.p[0] - v0 * tt - position_shape(tt, t) * d).abs() <= 1e-9 * (1.0 + d.abs() + v0.abs() * t));
        }
    }
}
