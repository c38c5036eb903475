//! Sparse multivariate polynomials over a fixed number of variables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("monomial {index} has {got} exponents, expected {arity}")]
    Arity { index: usize, got: usize, arity: usize },
    #[error("{monomials} monomials but {coefficients} coefficients")]
    Length { monomials: usize, coefficients: usize },
    #[error("coefficient {0} is not finite")]
    NonFinite(f64),
    #[error("monomial {0:?} appears twice")]
    Duplicate(Vec<u32>),
}

/// Exponent vectors map to nonzero coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyFile", into = "PolyFile")]
pub struct MultiPoly {
    arity: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolyFile {
    arity: usize,
    monomials: Vec<Vec<u32>>,
    coefficients: Vec<f64>,
}

impl TryFrom<PolyFile> for MultiPoly {
    type Error = PolyError;

    fn try_from(f: PolyFile) -> Result<Self, PolyError> {
        if f.monomials.len() != f.coefficients.len() {
            return Err(PolyError::Length {
                monomials: f.monomials.len(),
                coefficients: f.coefficients.len(),
            });
        }
        let mut p = MultiPoly::zero(f.arity);
        for (i, (m, c)) in f.monomials.into_iter().zip(f.coefficients).enumerate() {
            if m.len() != f.arity {
                return Err(PolyError::Arity {
                    index: i,
                    got: m.len(),
                    arity: f.arity,
                });
            }
            if !c.is_finite() {
                return Err(PolyError::NonFinite(c));
            }
            if p.terms.contains_key(&m) {
                return Err(PolyError::Duplicate(m));
            }
            p.add_term(m, c);
        }
        Ok(p)
    }
}

impl From<MultiPoly> for PolyFile {
    fn from(p: MultiPoly) -> Self {
        let (monomials, coefficients) = p.terms.into_iter().unzip();
        PolyFile {
            arity: p.arity,
            monomials,
            coefficients,
        }
    }
}

impl MultiPoly {
    pub fn zero(arity: usize) -> Self {
        Self {
            arity,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(arity: usize, c: f64) -> Self {
        let mut p = Self::zero(arity);
        p.add_term(vec![0; arity], c);
        p
    }

    /// Adds `c` to the coefficient of `exponents`; entries that cancel to
    /// zero are dropped.
    ///
    /// # Panics
    /// If `exponents.len()` differs from the arity.
    pub fn add_term(&mut self, exponents: Vec<u32>, c: f64) {
        assert_eq!(exponents.len(), self.arity, "exponent vector length");
        let entry = self.terms.entry(exponents).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.retain(|_, v| *v != 0.0);
        }
    }

    /// `c · x_i` (zero-based `i`).
    pub fn add_linear(&mut self, i: usize, c: f64) {
        let mut e = vec![0; self.arity];
        e[i] = 1;
        self.add_term(e, c);
    }

    /// `c · x_i · x_j` (zero-based; `i == j` gives a square).
    pub fn add_quadratic(&mut self, i: usize, j: usize, c: f64) {
        let mut e = vec![0; self.arity];
        e[i] += 1;
        e[j] += 1;
        self.add_term(e, c);
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn coefficient(&self, exponents: &[u32]) -> f64 {
        self.terms.get(exponents).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), *c))
    }

    /// Substitutes `x_i -> sign_i · x_{perm_i}`.
    pub fn substitute(&self, perm: &[usize], sign: &[f64]) -> Self {
        let mut out = Self::zero(self.arity);
        for (e, c) in &self.terms {
            let mut ne = vec![0; self.arity];
            let mut s = c.to_owned();
            for (i, k) in e.iter().enumerate() {
                ne[perm[i]] += k;
                s *= sign[i].powi(*k as i32);
            }
            out.add_term(ne, s);
        }
        out
    }

    /// Nested Horner evaluation, one variable at a time.
    ///
    /// # Panics
    /// If `x.len()` differs from the arity.
    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.arity, "point dimension");
        let terms: Vec<(&[u32], f64)> = self.terms().collect();
        horner(&terms, 0, x)
    }

    /// Sum of `c · Π x_i^k` term by term.
    pub fn eval_naive(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(x).map(|(k, v)| v.powi(*k as i32)).product::<f64>())
            .sum()
    }
}

// `terms` share exponents on variables before `var` and are sorted
// lexicographically, so equal exponents of `var` are contiguous.
fn horner(terms: &[(&[u32], f64)], var: usize, x: &[f64]) -> f64 {
    if terms.is_empty() {
        return 0.0;
    }
    if var == x.len() {
        return terms.iter().map(|t| t.1).sum();
    }
    let mut acc = 0.0;
    let mut degree = None;
    let mut end = terms.len();
    while end > 0 {
        let k = terms[end - 1].0[var];
        let start = terms[..end].iter().rposition(|t| t.0[var] != k).map_or(0, |p| p + 1);
        if let Some(prev) = degree {
            acc *= x[var].powi((prev - k) as i32);
        }
        acc += horner(&terms[start..end], var + 1, x);
        degree = Some(k);
        end = start;
    }
    acc * x[var].powi(degree.unwrap_or(0) as i32)
}
