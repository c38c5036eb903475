//! Signal temporal logic: formulas, the textual specification language,
//! sampled traces, and quantitative (robustness) semantics.
//!
//! Robustness is evaluated on uniformly sampled traces. Temporal windows
//! `[a, b]` are mapped to sample indices by snapping outward (floor for the
//! start, ceil for the end), so the discrete window always covers the
//! continuous one.

mod ast;
pub(crate) mod eval;
mod parse;
mod signal;

pub use ast::{Affine, Formula, Interval, Region};
pub use parse::{parse_spec, ParseError, ParseErrorKind};
pub use signal::{uav_index, MultiTrace, SignalLayout, AXES, CHANNELS, UAV_DIM};

use eval::{Evaluation, Semantics};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StlError {
    #[error("trace has {available} samples but the formula needs {required}")]
    TraceTooShort { required: usize, available: usize },
    #[error("signal dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("malformed interval [{a}, {b}]")]
    MalformedInterval { a: f64, b: f64 },
    #[error("malformed region: every lower corner must not exceed the upper corner")]
    MalformedRegion,
    #[error("sample period must be positive and finite, got {0}")]
    BadSamplePeriod(f64),
}

/// Three-valued outcome of checking a formula through its robustness sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Satisfied,
    Violated,
    Inconclusive,
}

impl Verdict {
    pub fn from_robustness(rho: f64) -> Self {
        if rho > 0.0 {
            Verdict::Satisfied
        } else if rho < 0.0 {
            Verdict::Violated
        } else {
            Verdict::Inconclusive
        }
    }
}

/// Quantitative semantics of `f` on `trace` at time `t0` (snapped down to
/// the sample grid).
pub fn robustness(f: &Formula, trace: &MultiTrace, t0: f64) -> Result<f64, StlError> {
    Ok(Evaluation::run(f, trace, trace.index_of(t0), Semantics::Exact)?.value())
}

pub fn satisfies(f: &Formula, trace: &MultiTrace, t0: f64) -> Result<Verdict, StlError> {
    robustness(f, trace, t0).map(Verdict::from_robustness)
}
