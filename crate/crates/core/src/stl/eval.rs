use super::ast::{Affine, Formula};
use super::signal::MultiTrace;
use super::StlError;
use crate::smooth::{smooth_min_push, soft_max as smooth_max, soft_min as smooth_min};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Semantics {
    Exact,
    Smooth(f64),
}

impl Semantics {
    fn max(self, xs: &[f64]) -> f64 {
        match self {
            Semantics::Exact => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Semantics::Smooth(c) => smooth_max(xs, c),
        }
    }

    fn min(self, xs: &[f64]) -> f64 {
        match self {
            Semantics::Exact => xs.iter().copied().fold(f64::INFINITY, f64::min),
            Semantics::Smooth(c) => smooth_min(xs, c),
        }
    }

    fn min2(self, a: f64, b: f64) -> f64 {
        match self {
            Semantics::Exact => a.min(b),
            Semantics::Smooth(c) => smooth_min_push(a, b, c),
        }
    }
}

#[derive(Debug)]
pub(crate) enum Kind<'f> {
    Pred(&'f Affine),
    Not(usize),
    And(Vec<usize>),
    Or(Vec<usize>),
    Always { lo: usize, hi: usize, child: usize },
    Eventually { lo: usize, hi: usize, child: usize },
    Until { lo: usize, hi: usize, left: usize, right: usize },
}

/// One AST node evaluated over the sample range `start..start + vals.len()`.
#[derive(Debug)]
pub(crate) struct Node<'f> {
    pub kind: Kind<'f>,
    pub start: usize,
    pub vals: Vec<f64>,
}

impl Node<'_> {
    pub fn at(&self, i: usize) -> f64 {
        self.vals[i - self.start]
    }

    pub fn window(&self, from: usize, to_inclusive: usize) -> &[f64] {
        &self.vals[from - self.start..=to_inclusive - self.start]
    }
}

/// Node-by-node evaluation of a formula on a trace, children stored before
/// their parents. Only the sample ranges needed for the root index are filled.
#[derive(Debug)]
pub(crate) struct Evaluation<'f> {
    pub nodes: Vec<Node<'f>>,
    pub root: usize,
    pub index: usize,
    pub semantics: Semantics,
}

impl<'f> Evaluation<'f> {
    pub fn run(
        f: &'f Formula,
        trace: &MultiTrace,
        index: usize,
        semantics: Semantics,
    ) -> Result<Self, StlError> {
        let required = index + f.horizon_steps(trace.dt()) + 1;
        if required > trace.len() {
            return Err(StlError::TraceTooShort {
                required,
                available: trace.len(),
            });
        }
        if let Some(max) = f.max_signal_index() {
            if max >= trace.dim() {
                return Err(StlError::DimensionMismatch {
                    expected: max + 1,
                    found: trace.dim(),
                });
            }
        }
        let mut ev = Evaluation {
            nodes: Vec::new(),
            root: 0,
            index,
            semantics,
        };
        ev.root = ev.build(f, trace, index, index + 1);
        Ok(ev)
    }

    pub fn value(&self) -> f64 {
        self.nodes[self.root].at(self.index)
    }

    fn push(&mut self, kind: Kind<'f>, start: usize, vals: Vec<f64>) -> usize {
        self.nodes.push(Node { kind, start, vals });
        self.nodes.len() - 1
    }

    fn build(&mut self, f: &'f Formula, trace: &MultiTrace, start: usize, end: usize) -> usize {
        let dt = trace.dt();
        let sem = self.semantics;
        match f {
            Formula::Predicate(p) => {
                let vals = (start..end).map(|i| p.eval(trace.sample(i))).collect();
                self.push(Kind::Pred(p), start, vals)
            }
            Formula::Not(g) => {
                let c = self.build(g, trace, start, end);
                let vals = self.nodes[c].vals.iter().map(|v| -v).collect();
                self.push(Kind::Not(c), start, vals)
            }
            Formula::And(fs) | Formula::Or(fs) => {
                let children: Vec<usize> = fs.iter().map(|g| self.build(g, trace, start, end)).collect();
                let conj = matches!(f, Formula::And(_));
                let mut buf = Vec::with_capacity(children.len());
                let vals = (start..end)
                    .map(|i| {
                        buf.clear();
                        buf.extend(children.iter().map(|&c| self.nodes[c].at(i)));
                        if conj {
                            sem.min(&buf)
                        } else {
                            sem.max(&buf)
                        }
                    })
                    .collect();
                let kind = if conj { Kind::And(children) } else { Kind::Or(children) };
                self.push(kind, start, vals)
            }
            Formula::Always(iv, g) | Formula::Eventually(iv, g) => {
                let (lo, hi) = iv.steps(dt);
                let child = self.build(g, trace, start + lo, end + hi);
                let always = matches!(f, Formula::Always(..));
                let node = &self.nodes[child];
                let vals = (start..end)
                    .map(|i| {
                        let w = node.window(i + lo, i + hi);
                        if always {
                            sem.min(w)
                        } else {
                            sem.max(w)
                        }
                    })
                    .collect();
                let kind = if always {
                    Kind::Always { lo, hi, child }
                } else {
                    Kind::Eventually { lo, hi, child }
                };
                self.push(kind, start, vals)
            }
            Formula::Until(iv, l, r) => {
                let (lo, hi) = iv.steps(dt);
                let left = self.build(l, trace, start, end + hi);
                let right = self.build(r, trace, start + lo, end + hi);
                let (ln, rn) = (&self.nodes[left], &self.nodes[right]);
                let mut cand = Vec::with_capacity(hi - lo + 1);
                let vals = (start..end)
                    .map(|i| {
                        cand.clear();
                        let mut prefix = ln.at(i);
                        for k in 0..=hi {
                            if k > 0 {
                                prefix = sem.min2(prefix, ln.at(i + k));
                            }
                            if k >= lo {
                                cand.push(sem.min2(rn.at(i + k), prefix));
                            }
                        }
                        sem.max(&cand)
                    })
                    .collect();
                self.push(Kind::Until { lo, hi, left, right }, start, vals)
            }
        }
    }
}
