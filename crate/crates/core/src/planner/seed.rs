//! Goal regions read off the formula, and initial waypoint guesses.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::stl::{Formula, Region, UAV_DIM};

/// How restarts place their initial waypoints before noise is added.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedingMode {
    /// Straight line from the start to the nearest goal-region center.
    #[default]
    Line,
    /// Piecewise-linear route through every goal region, each reached at the
    /// middle of its time window.
    Schedule,
}

/// A box that some UAV must visit, with the absolute time window in which
/// the formula asks for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub uav: usize,
    pub region: Region,
    pub window: (f64, f64),
}

/// Recognizes the six-face conjunction `p in box` on one UAV's position.
pub fn as_box(f: &Formula) -> Option<(usize, Region)> {
    let Formula::And(parts) = f else { return None };
    if parts.len() != 6 {
        return None;
    }
    let mut lo = [f64::NAN; 3];
    let mut hi = [f64::NAN; 3];
    let mut uav = None;
    for part in parts {
        let Formula::Predicate(p) = part else { return None };
        let [(idx, coef)] = p.terms[..] else { return None };
        let (u, rem) = (idx / UAV_DIM, idx % UAV_DIM);
        if rem >= 3 || *uav.get_or_insert(u) != u {
            return None;
        }
        if coef == 1.0 {
            lo[rem] = -p.offset;
        } else if coef == -1.0 {
            hi[rem] = p.offset;
        } else {
            return None;
        }
    }
    Some((uav?, Region::new(lo, hi).ok()?))
}

/// Boxes under positive polarity inside a temporal operator.
pub fn targets(f: &Formula) -> Vec<Target> {
    let mut out = Vec::new();
    collect(f, true, None, 0.0, &mut out);
    out
}

fn collect(f: &Formula, positive: bool, window: Option<(f64, f64)>, offset: f64, out: &mut Vec<Target>) {
    match f {
        Formula::Predicate(_) => {}
        Formula::Not(g) => collect(g, !positive, window, offset, out),
        Formula::And(fs) | Formula::Or(fs) => {
            if let (true, Some((uav, region))) = (positive, as_box(f)) {
                out.push(Target {
                    uav,
                    region,
                    window: window.unwrap_or((offset, offset)),
                });
                return;
            }
            fs.iter().for_each(|g| collect(g, positive, window, offset, out));
        }
        Formula::Always(iv, g) | Formula::Eventually(iv, g) => {
            let w = (offset + iv.start(), offset + iv.end());
            collect(g, positive, Some(w), offset + iv.start(), out);
        }
        Formula::Until(iv, l, r) => {
            collect(l, positive, Some((offset, offset + iv.end())), offset, out);
            collect(r, positive, Some((offset + iv.start(), offset + iv.end())), offset + iv.start(), out);
        }
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|l| (a[l] - b[l]).powi(2)).sum()
}

fn lerp(a: &[f64; 3], b: &[f64; 3], s: f64) -> [f64; 3] {
    [0, 1, 2].map(|l| a[l] + s * (b[l] - a[l]))
}

/// Noise-free waypoints `1..=n` for one UAV.
pub(crate) fn base_route(
    mode: SeedingMode,
    start: [f64; 3],
    uav: usize,
    targets: &[Target],
    n: usize,
    segment: f64,
) -> Vec<[f64; 3]> {
    let mine: Vec<&Target> = targets.iter().filter(|t| t.uav == uav).collect();
    match mode {
        SeedingMode::Line => {
            let goal = mine
                .iter()
                .map(|t| t.region.center())
                .min_by(|a, b| dist2(a, &start).total_cmp(&dist2(b, &start)))
                .unwrap_or(start);
            (1..=n).map(|j| lerp(&start, &goal, j as f64 / n as f64)).collect()
        }
        SeedingMode::Schedule => {
            let mut anchors: Vec<(usize, [f64; 3])> = vec![(0, start)];
            let mut timed: Vec<&Target> = mine.clone();
            timed.sort_by(|a, b| (a.window.0 + a.window.1).total_cmp(&(b.window.0 + b.window.1)));
            for t in timed {
                let j = ((0.5 * (t.window.0 + t.window.1) / segment).round() as usize).clamp(1, n);
                if anchors.last().is_some_and(|(k, _)| *k < j) {
                    anchors.push((j, t.region.center()));
                }
            }
            (1..=n)
                .map(|j| match anchors.iter().position(|(k, _)| *k >= j) {
                    Some(pos) => {
                        let (k1, p1) = anchors[pos];
                        let (k0, p0) = anchors[pos - 1];
                        lerp(&p0, &p1, (j - k0) as f64 / (k1 - k0) as f64)
                    }
                    None => anchors.last().map(|a| a.1).unwrap_or(start),
                })
                .collect()
        }
    }
}

/// Adds uniform noise of `noise` times the workspace extent per axis and
/// clamps into the workspace shrunk by `inset`.
pub(crate) fn perturb<R: Rng>(route: &mut [[f64; 3]], workspace: &Region, noise: f64, inset: f64, rng: &mut R) {
    for p in route.iter_mut() {
        for l in 0..3 {
            let extent = workspace.hi[l] - workspace.lo[l];
            let lo = workspace.lo[l] + inset;
            let hi = workspace.hi[l] - inset;
            p[l] = (p[l] + noise * extent * rng.gen_range(-1.0..=1.0)).clamp(lo, hi.max(lo));
        }
    }
}
