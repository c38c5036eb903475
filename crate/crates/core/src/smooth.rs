//! Log-sum-exp smoothing of robustness, its worst-case approximation error,
//! and exact gradients with respect to trace samples.

use thiserror::Error;

use crate::stl::eval::{Evaluation, Kind, Semantics};
use crate::stl::{Formula, MultiTrace, StlError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmoothError {
    #[error("smooth aggregation of an empty set")]
    Empty,
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
}

/// Temperature `C` of the smooth min/max, in inverse robustness units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothConfig {
    c: f64,
}

impl SmoothConfig {
    pub const DEFAULT_TEMPERATURE: f64 = 25.0;

    pub fn new(c: f64) -> Result<Self, SmoothError> {
        if c > 0.0 && c.is_finite() {
            Ok(Self { c })
        } else {
            Err(SmoothError::BadTemperature(c))
        }
    }

    pub fn temperature(&self) -> f64 {
        self.c
    }
}

impl Default for SmoothConfig {
    fn default() -> Self {
        Self {
            c: Self::DEFAULT_TEMPERATURE,
        }
    }
}

pub(crate) fn soft_max(xs: &[f64], c: f64) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if xs.len() == 1 || !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (c * (x - m)).exp()).sum();
    m + s.ln() / c
}

pub(crate) fn soft_min(xs: &[f64], c: f64) -> f64 {
    let m = xs.iter().copied().fold(f64::INFINITY, f64::min);
    if xs.len() == 1 || !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (-c * (x - m)).exp()).sum();
    m - s.ln() / c
}

/// Two-term smooth min; folding it over a sequence equals `soft_min` of the
/// whole sequence.
pub(crate) fn smooth_min_push(a: f64, b: f64, c: f64) -> f64 {
    let m = a.min(b);
    m - (-c * (a - b).abs()).exp().ln_1p() / c
}

/// `(1/C) ln sum exp(C v_i)`, computed with max subtraction.
pub fn smooth_max(values: &[f64], c: f64) -> Result<f64, SmoothError> {
    check(values, c)?;
    Ok(soft_max(values, c))
}

/// `-smooth_max(-v)`.
pub fn smooth_min(values: &[f64], c: f64) -> Result<f64, SmoothError> {
    check(values, c)?;
    Ok(soft_min(values, c))
}

/// Softmax weights: the gradient of [`smooth_max`] with respect to its inputs.
pub fn smooth_max_gradient(values: &[f64], c: f64) -> Result<Vec<f64>, SmoothError> {
    let s = smooth_max(values, c)?;
    Ok(values.iter().map(|&x| (c * (x - s)).exp()).collect())
}

fn check(values: &[f64], c: f64) -> Result<(), SmoothError> {
    if values.is_empty() {
        return Err(SmoothError::Empty);
    }
    SmoothConfig::new(c).map(|_| ())
}

/// Smooth robustness of `f` on `trace` at time 0.
pub fn smooth_robustness(f: &Formula, trace: &MultiTrace, cfg: &SmoothConfig) -> Result<f64, StlError> {
    Ok(Evaluation::run(f, trace, 0, Semantics::Smooth(cfg.c))?.value())
}

/// Bound on `|smooth - exact|` for any trace with sample period `dt`. Each
/// smooth aggregation over `N` terms adds `ln(N)/C`, accumulated along the
/// deepest nesting path.
pub fn approximation_error(f: &Formula, dt: f64, cfg: &SmoothConfig) -> f64 {
    let ln = |n: usize| (n as f64).ln() / cfg.c;
    match f {
        Formula::Predicate(_) => 0.0,
        Formula::Not(g) => approximation_error(g, dt, cfg),
        Formula::And(fs) | Formula::Or(fs) => {
            ln(fs.len()) + fs.iter().map(|g| approximation_error(g, dt, cfg)).fold(0.0, f64::max)
        }
        Formula::Always(iv, g) | Formula::Eventually(iv, g) => {
            let (lo, hi) = iv.steps(dt);
            ln(hi - lo + 1) + approximation_error(g, dt, cfg)
        }
        Formula::Until(iv, l, r) => {
            let (lo, hi) = iv.steps(dt);
            let prefix = ln(hi + 1) + approximation_error(l, dt, cfg);
            ln(hi - lo + 1) + ln(2) + prefix.max(approximation_error(r, dt, cfg))
        }
    }
}

/// Smooth robustness at time 0 and its gradient with respect to every trace
/// sample value, laid out like [`MultiTrace::data`].
pub fn smooth_robustness_gradient(
    f: &Formula,
    trace: &MultiTrace,
    cfg: &SmoothConfig,
) -> Result<(f64, Vec<f64>), StlError> {
    let ev = Evaluation::run(f, trace, 0, Semantics::Smooth(cfg.c))?;
    let c = cfg.c;
    let dim = trace.dim();
    let mut grad = vec![0.0; trace.data().len()];
    let mut adj: Vec<Vec<f64>> = ev.nodes.iter().map(|n| vec![0.0; n.vals.len()]).collect();
    adj[ev.root][ev.index - ev.nodes[ev.root].start] = 1.0;

    for n in (0..ev.nodes.len()).rev() {
        let node = &ev.nodes[n];
        let a_n = std::mem::take(&mut adj[n]);
        if a_n.iter().all(|&a| a == 0.0) {
            continue;
        }
        let rows = a_n.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(k, &a)| (node.start + k, a));
        match &node.kind {
            Kind::Pred(p) => {
                for (i, a) in rows {
                    for &(idx, coef) in &p.terms {
                        grad[i * dim + idx] += a * coef;
                    }
                }
            }
            Kind::Not(child) => {
                let cs = ev.nodes[*child].start;
                for (i, a) in rows {
                    adj[*child][i - cs] -= a;
                }
            }
            Kind::And(children) | Kind::Or(children) => {
                let sign = if matches!(node.kind, Kind::And(_)) { -1.0 } else { 1.0 };
                for (i, a) in rows {
                    let s = node.at(i);
                    for &ch in children {
                        let cn = &ev.nodes[ch];
                        let w = (sign * c * (cn.at(i) - s)).exp();
                        adj[ch][i - cn.start] += a * w;
                    }
                }
            }
            Kind::Always { lo, hi, child } | Kind::Eventually { lo, hi, child } => {
                let sign = if matches!(node.kind, Kind::Always { .. }) { -1.0 } else { 1.0 };
                let cn = &ev.nodes[*child];
                for (i, a) in rows {
                    let s = node.at(i);
                    for j in i + lo..=i + hi {
                        let w = (sign * c * (cn.at(j) - s)).exp();
                        adj[*child][j - cn.start] += a * w;
                    }
                }
            }
            Kind::Until { lo, hi, left, right } => {
                let (ln, rn) = (&ev.nodes[*left], &ev.nodes[*right]);
                let mut prefix = vec![0.0; hi + 1];
                for (i, a) in rows {
                    let s = node.at(i);
                    prefix[0] = ln.at(i);
                    for k in 1..=*hi {
                        prefix[k] = smooth_min_push(prefix[k - 1], ln.at(i + k), c);
                    }
                    for k in *lo..=*hi {
                        let r = rn.at(i + k);
                        let z = smooth_min_push(r, prefix[k], c);
                        let coef = a * (c * (z - s)).exp();
                        adj[*right][i + k - rn.start] += coef * (-c * (r - z)).exp();
                        let gp = coef * (-c * (prefix[k] - z)).exp();
                        for m in 0..=k {
                            adj[*left][i + m - ln.start] += gp * (-c * (ln.at(i + m) - prefix[k])).exp();
                        }
                    }
                }
            }
        }
    }
    Ok((ev.value(), grad))
}
