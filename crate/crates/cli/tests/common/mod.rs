//! Independent oracles and random generators shared by the integration tests.

#![allow(dead_code)]

use codesign::stl::{Formula, Interval, MultiTrace};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Robustness by direct recursion on the definitions, with windows given in
/// whole samples. Intervals must be integer multiples of `dt`.
pub fn brute_robustness(f: &Formula, trace: &MultiTrace, i: usize) -> f64 {
    let dt = trace.dt();
    let window = |iv: &Interval| ((iv.start() / dt).round() as usize, (iv.end() / dt).round() as usize);
    match f {
        Formula::Predicate(a) => {
            let s = trace.sample(i);
            let mut acc = a.offset;
            for &(k, c) in &a.terms {
                acc += c * s[k];
            }
            acc
        }
        Formula::Not(g) => -brute_robustness(g, trace, i),
        Formula::And(gs) => gs.iter().map(|g| brute_robustness(g, trace, i)).fold(f64::INFINITY, f64::min),
        Formula::Or(gs) => gs.iter().map(|g| brute_robustness(g, trace, i)).fold(f64::NEG_INFINITY, f64::max),
        Formula::Always(iv, g) => {
            let (lo, hi) = window(iv);
            (lo..=hi).map(|k| brute_robustness(g, trace, i + k)).fold(f64::INFINITY, f64::min)
        }
        Formula::Eventually(iv, g) => {
            let (lo, hi) = window(iv);
            (lo..=hi).map(|k| brute_robustness(g, trace, i + k)).fold(f64::NEG_INFINITY, f64::max)
        }
        Formula::Until(iv, l, r) => {
            let (lo, hi) = window(iv);
            let mut best = f64::NEG_INFINITY;
            for k in lo..=hi {
                let mut v = brute_robustness(r, trace, i + k);
                for j in 0..=k {
                    v = v.min(brute_robustness(l, trace, i + j));
                }
                best = best.max(v);
            }
            best
        }
    }
}

/// Largest sample offset a formula looks ahead, for integer-step intervals.
pub fn brute_horizon(f: &Formula, dt: f64) -> usize {
    let end = |iv: &Interval| (iv.end() / dt).round() as usize;
    match f {
        Formula::Predicate(_) => 0,
        Formula::Not(g) => brute_horizon(g, dt),
        Formula::And(gs) | Formula::Or(gs) => gs.iter().map(|g| brute_horizon(g, dt)).max().unwrap_or(0),
        Formula::Always(iv, g) | Formula::Eventually(iv, g) => end(iv) + brute_horizon(g, dt),
        Formula::Until(iv, l, r) => end(iv) + brute_horizon(l, dt).max(brute_horizon(r, dt)),
    }
}

/// Random formula over `dim` signals of depth at most `depth`; interval
/// endpoints are whole multiples of `dt`, at most `max_steps` apart.
pub fn random_formula<R: Rng>(rng: &mut R, depth: usize, dim: usize, dt: f64, max_steps: usize) -> Formula {
    let leaf = |rng: &mut R| {
        let n = rng.gen_range(1..=dim.min(3));
        let mut idx: Vec<usize> = (0..dim).collect();
        for k in 0..n {
            let j = rng.gen_range(k..dim);
            idx.swap(k, j);
        }
        let mut terms: Vec<(usize, f64)> = idx[..n].iter().map(|&i| (i, rng.gen_range(-2.0..2.0))).collect();
        terms.sort_by_key(|t| t.0);
        Formula::predicate(terms, rng.gen_range(-1.0..1.0))
    };
    if depth == 0 || rng.gen_bool(0.2) {
        return leaf(rng);
    }
    let iv = |rng: &mut R| {
        let a = rng.gen_range(0..=max_steps / 2);
        let b = a + rng.gen_range(0..=max_steps / 2);
        Interval::new(a as f64 * dt, b as f64 * dt).unwrap()
    };
    let sub = |rng: &mut R| random_formula(rng, depth - 1, dim, dt, max_steps);
    match rng.gen_range(0..7) {
        0 => Formula::not(sub(rng)),
        1 => Formula::And((0..rng.gen_range(2..=3)).map(|_| sub(rng)).collect()),
        2 => Formula::Or((0..rng.gen_range(2..=3)).map(|_| sub(rng)).collect()),
        3 => {
            let i = iv(rng);
            Formula::always(i, sub(rng))
        }
        4 => {
            let i = iv(rng);
            Formula::eventually(i, sub(rng))
        }
        5 => {
            let i = iv(rng);
            let l = sub(rng);
            Formula::until(i, l, sub(rng))
        }
        _ => leaf(rng),
    }
}

pub fn random_trace<R: Rng>(rng: &mut R, len: usize, dim: usize, dt: f64) -> MultiTrace {
    let data = (0..len * dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
    MultiTrace::new(dt, dim, data).unwrap()
}

/// Single-axis jerk-energy minimization with piecewise-constant jerk on `m`
/// equal steps. Returns `(v(T), p(T/3), a(T/2))`; `m` must be a multiple
/// of 6.
pub fn jerk_qp(p0: f64, v0: f64, p1: f64, t: f64, m: usize) -> [f64; 3] {
    assert_eq!(m % 6, 0);
    let h = t / m as f64;
    let tk = |k: usize| k as f64 * h;
    let cube = |s: f64, k: usize| ((s - tk(k)).powi(3) - (s - tk(k) - h).powi(3)) / 6.0;
    let square = |s: f64, k: usize| ((s - tk(k)).powi(2) - (s - tk(k) - h).powi(2)) / 2.0;
    // Rows: a(T) = 0 and p(T) = p1.
    let row_a = vec![h; m];
    let row_p: Vec<f64> = (0..m).map(|k| cube(t, k)).collect();
    let b = [0.0, p1 - p0 - v0 * t];
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let g = [[dot(&row_a, &row_a), dot(&row_a, &row_p)], [dot(&row_p, &row_a), dot(&row_p, &row_p)]];
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    let y = [
        (g[1][1] * b[0] - g[0][1] * b[1]) / det,
        (g[0][0] * b[1] - g[1][0] * b[0]) / det,
    ];
    let u: Vec<f64> = (0..m).map(|k| row_a[k] * y[0] + row_p[k] * y[1]).collect();

    let v_end = v0 + (0..m).map(|k| u[k] * square(t, k)).sum::<f64>();
    let third = m / 3;
    let s = tk(third);
    let p_third = p0 + v0 * s + (0..third).map(|k| u[k] * cube(s, k)).sum::<f64>();
    let a_half = (0..m / 2).map(|k| u[k] * h).sum::<f64>();
    [v_end, p_third, a_half]
}

/// Richardson extrapolation of [`jerk_qp`] assuming an `h²` leading error.
pub fn jerk_qp_extrapolated(p0: f64, v0: f64, p1: f64, t: f64, m: usize) -> [f64; 3] {
    let coarse = jerk_qp(p0, v0, p1, t, m);
    let fine = jerk_qp(p0, v0, p1, t, 2 * m);
    [0, 1, 2].map(|i| (4.0 * fine[i] - coarse[i]) / 3.0)
}

/// Random symmetric positive-definite matrix with eigenvalues in `[lo, hi]`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let q = a.qr().q();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(lo..hi)));
    let p = &q * d * q.transpose();
    (&p + p.transpose()) * 0.5
}

/// Largest `|e_i|` over `samples` random points on `{eᵀPe = η}`, reached by
/// scaling uniformly random directions onto the surface.
pub fn ellipsoid_extent<R: Rng>(rng: &mut R, p: &DMatrix<f64>, eta: f64, samples: usize) -> Vec<f64> {
    let n = p.nrows();
    let mut best = vec![0.0_f64; n];
    let mut d = vec![0.0; n];
    for _ in 0..samples {
        let mut norm2 = 0.0;
        for x in d.iter_mut() {
            *x = rng.sample(StandardNormal);
            norm2 += *x * *x;
        }
        if norm2 == 0.0 {
            continue;
        }
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += d[i] * p[(i, j)] * d[j];
            }
        }
        let scale = (eta / q).sqrt();
        for i in 0..n {
            best[i] = best[i].max((d[i] * scale).abs());
        }
    }
    best
}
