use std::fmt;

use serde::{Deserialize, Serialize};

use super::StlError;

/// Closed time interval `[a, b]` in seconds, `0 <= a <= b < inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    a: f64,
    b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self, StlError> {
        if !(a.is_finite() && b.is_finite()) || a < 0.0 || a > b {
            return Err(StlError::MalformedInterval { a, b });
        }
        Ok(Self { a, b })
    }

    pub fn start(&self) -> f64 {
        self.a
    }

    pub fn end(&self) -> f64 {
        self.b
    }

    /// Sample-index window for period `dt`, snapped outward so that the
    /// discrete window always covers `[a, b]`.
    pub fn steps(&self, dt: f64) -> (usize, usize) {
        const SNAP: f64 = 1e-9;
        let lo = (self.a / dt + SNAP).floor().max(0.0) as usize;
        let hi = (self.b / dt - SNAP).ceil().max(0.0) as usize;
        (lo, hi.max(lo))
    }
}

/// Axis-aligned box in 3-D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Region {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Result<Self, StlError> {
        if (0..3).any(|l| !(lo[l] <= hi[l]) || !lo[l].is_finite() || !hi[l].is_finite()) {
            return Err(StlError::MalformedRegion);
        }
        Ok(Self { lo, hi })
    }

    pub fn center(&self) -> [f64; 3] {
        [0, 1, 2].map(|l| 0.5 * (self.lo[l] + self.hi[l]))
    }

    pub fn contains(&self, p: &[f64; 3]) -> bool {
        (0..3).all(|l| self.lo[l] <= p[l] && p[l] <= self.hi[l])
    }

    pub fn intersects(&self, other: &Region) -> bool {
        (0..3).all(|l| self.lo[l] <= other.hi[l] && other.lo[l] <= self.hi[l])
    }

    /// Inf-norm signed distance to the boundary, positive inside.
    pub fn signed_depth(&self, p: &[f64; 3]) -> f64 {
        (0..3)
            .flat_map(|l| [p[l] - self.lo[l], self.hi[l] - p[l]])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Affine predicate `<c, s> + d >= 0` over the stacked signal vector `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub offset: f64,
}

impl Affine {
    pub fn new(terms: Vec<(usize, f64)>, offset: f64) -> Self {
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (idx, c) in terms {
            match merged.iter_mut().find(|(i, _)| *i == idx) {
                Some(entry) => entry.1 += c,
                None => merged.push((idx, c)),
            }
        }
        merged.retain(|(_, c)| *c != 0.0);
        merged.sort_by_key(|(i, _)| *i);
        Self { terms: merged, offset }
    }

    pub fn eval(&self, sample: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.offset, |acc, &(i, c)| acc + c * sample[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Predicate(Affine),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Always(Interval, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn predicate(terms: Vec<(usize, f64)>, offset: f64) -> Self {
        Formula::Predicate(Affine::new(terms, offset))
    }

    /// `p in region` for a 3-vector signal, as the conjunction of its six faces.
    pub fn in_region(p: [usize; 3], region: &Region) -> Self {
        let faces = (0..3)
            .flat_map(|l| {
                [
                    Formula::predicate(vec![(p[l], 1.0)], -region.lo[l]),
                    Formula::predicate(vec![(p[l], -1.0)], region.hi[l]),
                ]
            })
            .collect();
        Formula::And(faces)
    }

    /// `||p - q||_inf >= min_dist`, as the disjunction of six half-spaces.
    pub fn separation(p: [usize; 3], q: [usize; 3], min_dist: f64) -> Self {
        let faces = (0..3)
            .flat_map(|l| {
                [
                    Formula::predicate(vec![(p[l], 1.0), (q[l], -1.0)], -min_dist),
                    Formula::predicate(vec![(p[l], -1.0), (q[l], 1.0)], -min_dist),
                ]
            })
            .collect();
        Formula::Or(faces)
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn always(iv: Interval, f: Formula) -> Self {
        Formula::Always(iv, Box::new(f))
    }

    pub fn eventually(iv: Interval, f: Formula) -> Self {
        Formula::Eventually(iv, Box::new(f))
    }

    pub fn until(iv: Interval, left: Formula, right: Formula) -> Self {
        Formula::Until(iv, Box::new(left), Box::new(right))
    }

    /// Minimum trace duration (seconds) needed to evaluate the formula at time 0.
    pub fn horizon(&self) -> f64 {
        match self {
            Formula::Predicate(_) => 0.0,
            Formula::Not(f) => f.horizon(),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().map(Formula::horizon).fold(0.0, f64::max),
            Formula::Always(iv, f) | Formula::Eventually(iv, f) => iv.end() + f.horizon(),
            Formula::Until(iv, l, r) => iv.end() + l.horizon().max(r.horizon()),
        }
    }

    /// Horizon in whole samples of period `dt`, using the outward window snap.
    pub fn horizon_steps(&self, dt: f64) -> usize {
        match self {
            Formula::Predicate(_) => 0,
            Formula::Not(f) => f.horizon_steps(dt),
            Formula::And(fs) | Formula::Or(fs) => {
                fs.iter().map(|f| f.horizon_steps(dt)).max().unwrap_or(0)
            }
            Formula::Always(iv, f) | Formula::Eventually(iv, f) => iv.steps(dt).1 + f.horizon_steps(dt),
            Formula::Until(iv, l, r) => iv.steps(dt).1 + l.horizon_steps(dt).max(r.horizon_steps(dt)),
        }
    }

    /// Visits every predicate leaf.
    pub fn for_each_predicate<'a>(&'a self, visit: &mut impl FnMut(&'a Affine)) {
        match self {
            Formula::Predicate(p) => visit(p),
            Formula::Not(f) | Formula::Always(_, f) | Formula::Eventually(_, f) => f.for_each_predicate(visit),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.for_each_predicate(visit)),
            Formula::Until(_, l, r) => {
                l.for_each_predicate(visit);
                r.for_each_predicate(visit);
            }
        }
    }

    /// Largest signal index referenced by any predicate, if any.
    pub fn max_signal_index(&self) -> Option<usize> {
        let mut max = None;
        self.for_each_predicate(&mut |p| {
            for &(i, _) in &p.terms {
                max = Some(max.map_or(i, |m: usize| m.max(i)));
            }
        });
        max
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(f: &mut fmt::Formatter<'_>, fs: &[Formula], op: &str) -> fmt::Result {
            write!(f, "(")?;
            for (k, sub) in fs.iter().enumerate() {
                if k > 0 {
                    write!(f, " {op} ")?;
                }
                write!(f, "{sub}")?;
            }
            write!(f, ")")
        }
        match self {
            Formula::Predicate(p) => {
                write!(f, "(")?;
                for (k, (i, c)) in p.terms.iter().enumerate() {
                    if k > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{c}*s{i}")?;
                }
                write!(f, " + {} >= 0)", p.offset)
            }
            Formula::Not(g) => write!(f, "!{g}"),
            Formula::And(fs) => join(f, fs, "&"),
            Formula::Or(fs) => join(f, fs, "|"),
            Formula::Always(iv, g) => write!(f, "G[{},{}] {g}", iv.start(), iv.end()),
            Formula::Eventually(iv, g) => write!(f, "F[{},{}] {g}", iv.start(), iv.end()),
            Formula::Until(iv, l, r) => write!(f, "({l} U[{},{}] {r})", iv.start(), iv.end()),
        }
    }
}
