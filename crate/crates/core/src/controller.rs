//! Polynomial tracking controller, quadratic level set and the tracking
//! error bound it induces.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ControlLaw, ErrorState, InputBox, Inputs, QuadParams};
use crate::poly::MultiPoly;

/// Error coordinates that the planner's tube constraint covers
/// (position and velocity differences).
pub const TRACKED_COORDS: usize = 6;
pub const ERROR_DIM: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("P is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("P is not symmetric: |P[{i}][{j}] - P[{j}][{i}]| = {gap:e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },
    #[error("P is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("level eta must be positive and finite, got {0}")]
    BadLevel(f64),
    #[error("polynomial {name} has arity {got}, expected {want}")]
    Arity { name: &'static str, got: usize, want: usize },
    #[error("stored delta {stored} differs from the level-set value {computed}")]
    DeltaMismatch { stored: f64, computed: f64 },
    #[error("invalid model parameters: {0}")]
    Params(String),
}

/// `V(e) = eᵀ P e` with `P` symmetric positive definite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct QuadraticForm {
    p: DMatrix<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for QuadraticForm {
    type Error = ControllerError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, ControllerError> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(ControllerError::NotSquare { rows: n, cols: r.len() });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }
}

impl From<QuadraticForm> for Vec<Vec<f64>> {
    fn from(q: QuadraticForm) -> Self {
        q.p.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

impl QuadraticForm {
    pub fn new(p: DMatrix<f64>) -> Result<Self, ControllerError> {
        if !p.is_square() {
            return Err(ControllerError::NotSquare {
                rows: p.nrows(),
                cols: p.ncols(),
            });
        }
        let n = p.nrows();
        for i in 0..n {
            for j in 0..i {
                let gap = (p[(i, j)] - p[(j, i)]).abs();
                if !(gap <= 1e-12) {
                    return Err(ControllerError::NotSymmetric { i, j, gap });
                }
            }
        }
        let min_eig = SymmetricEigen::new(p.clone()).eigenvalues.min();
        if !(min_eig > 0.0) || p.clone().cholesky().is_none() {
            return Err(ControllerError::NotPositiveDefinite(min_eig));
        }
        Ok(Self { p })
    }

    pub fn identity(n: usize) -> Self {
        Self { p: DMatrix::identity(n, n) }
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn eval(&self, e: &[f64]) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            let row: f64 = (0..n).map(|j| self.p[(i, j)] * e[j]).sum();
            s += e[i] * row;
        }
        s
    }

    /// `∇V = 2 P e`.
    pub fn gradient(&self, e: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|i| 2.0 * (0..n).map(|j| self.p[(i, j)] * e[j]).sum::<f64>()).collect()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.p.clone().cholesky().expect("checked positive definite").inverse()
    }

    /// Lower Cholesky factor `L` with `P = L Lᵀ`.
    pub fn cholesky_l(&self) -> DMatrix<f64> {
        self.p.clone().cholesky().expect("checked positive definite").l()
    }
}

/// Axis extents of `{e : V(e) <= η}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelsetBounds {
    pub per_coordinate: Vec<f64>,
    /// Max over the first `min(n, TRACKED_COORDS)` coordinates.
    pub delta: f64,
}

/// `δ_i = sqrt(η (P⁻¹)_ii)`: the support function of the ellipsoid in
/// direction `e_i`.
pub fn delta_from_levelset(v: &QuadraticForm, eta: f64) -> Result<LevelsetBounds, ControllerError> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(ControllerError::BadLevel(eta));
    }
    let inv = v.inverse();
    let per_coordinate: Vec<f64> = (0..v.dim()).map(|i| (eta * inv[(i, i)]).sqrt()).collect();
    let delta = per_coordinate.iter().take(TRACKED_COORDS).copied().fold(0.0, f64::max);
    Ok(LevelsetBounds { per_coordinate, delta })
}

/// Controller polynomials, level set and model parameters (whose `input`
/// box is the saturation set `U`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BundleFile", into = "BundleFile")]
pub struct ControllerBundle {
    pub ft: MultiPoly,
    pub ux: MultiPoly,
    pub uy: MultiPoly,
    pub v: QuadraticForm,
    pub eta: f64,
    pub params: QuadParams,
    bounds: LevelsetBounds,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleFile {
    eta: f64,
    delta: f64,
    delta_per_coordinate: Vec<f64>,
    params: QuadParams,
    p: QuadraticForm,
    ft: MultiPoly,
    ux: MultiPoly,
    uy: MultiPoly,
}

impl TryFrom<BundleFile> for ControllerBundle {
    type Error = ControllerError;

    fn try_from(f: BundleFile) -> Result<Self, ControllerError> {
        let b = ControllerBundle::new(f.ft, f.ux, f.uy, f.p, f.eta, f.params)?;
        if b.delta() != f.delta || b.bounds.per_coordinate != f.delta_per_coordinate {
            return Err(ControllerError::DeltaMismatch {
                stored: f.delta,
                computed: b.delta(),
            });
        }
        Ok(b)
    }
}

impl From<ControllerBundle> for BundleFile {
    fn from(b: ControllerBundle) -> Self {
        BundleFile {
            eta: b.eta,
            delta: b.bounds.delta,
            delta_per_coordinate: b.bounds.per_coordinate,
            params: b.params,
            p: b.v,
            ft: b.ft,
            ux: b.ux,
            uy: b.uy,
        }
    }
}

impl ControllerBundle {
    pub fn new(
        ft: MultiPoly,
        ux: MultiPoly,
        uy: MultiPoly,
        v: QuadraticForm,
        eta: f64,
        params: QuadParams,
    ) -> Result<Self, ControllerError> {
        for (name, p) in [("ft", &ft), ("ux", &ux), ("uy", &uy)] {
            if p.arity() != ERROR_DIM {
                return Err(ControllerError::Arity {
                    name,
                    got: p.arity(),
                    want: ERROR_DIM,
                });
            }
        }
        if v.dim() != ERROR_DIM {
            return Err(ControllerError::Arity {
                name: "P",
                got: v.dim(),
                want: ERROR_DIM,
            });
        }
        params.validate().map_err(|e| ControllerError::Params(e.to_string()))?;
        let bounds = delta_from_levelset(&v, eta)?;
        Ok(Self {
            ft,
            ux,
            uy,
            v,
            eta,
            params,
            bounds,
        })
    }

    pub fn delta(&self) -> f64 {
        self.bounds.delta
    }

    pub fn bounds(&self) -> &LevelsetBounds {
        &self.bounds
    }

    /// Same controller and `V` at a different level.
    pub fn with_level(&self, eta: f64) -> Result<Self, ControllerError> {
        Self::new(self.ft.clone(), self.ux.clone(), self.uy.clone(), self.v.clone(), eta, self.params)
    }

    pub fn raw_inputs(&self, e: &[f64]) -> Inputs {
        Inputs {
            ft: self.ft.eval(e),
            ux: self.ux.eval(e),
            uy: self.uy.eval(e),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("bundle serializes")
    }
}

/// Saturated inputs and whether any component was clamped.
pub fn eval_controller(bundle: &ControllerBundle, e: &ErrorState) -> (Inputs, bool) {
    bundle.params.input.clamp(bundle.raw_inputs(&e.0))
}

impl ControlLaw for ControllerBundle {
    fn raw(&self, e: &ErrorState) -> Inputs {
        self.raw_inputs(&e.0)
    }

    fn input_box(&self) -> InputBox {
        self.params.input
    }

    fn level(&self, e: &ErrorState) -> f64 {
        self.v.eval(&e.0)
    }
}

/// The printed roll-channel polynomial: `(coefficient, i, j)` quadratic
/// terms then `(coefficient, i)` linear terms, zero-based.
pub const PRINTED_UX_QUADRATIC: [(f64, usize, usize); 10] = [
    (0.001, 0, 5),
    (0.083, 1, 2),
    (0.139, 1, 5),
    (0.070, 2, 4),
    (-0.186, 2, 6),
    (0.003, 2, 7),
    (0.001, 3, 5),
    (0.120, 4, 5),
    (-0.062, 5, 6),
    (0.001, 5, 7),
];
pub const PRINTED_UX_LINEAR: [(f64, usize); 6] = [
    (-0.001, 0),
    (-0.289, 1),
    (-0.002, 3),
    (-0.320, 4),
    (-1.142, 6),
    (0.001, 7),
];

pub fn printed_ux() -> MultiPoly {
    let mut p = MultiPoly::zero(ERROR_DIM);
    PRINTED_UX_QUADRATIC.iter().for_each(|&(c, i, j)| p.add_quadratic(i, j, c));
    PRINTED_UX_LINEAR.iter().for_each(|&(c, i)| p.add_linear(i, c));
    p
}

/// Pitch channel from the roll channel through the x/y symmetry of the
/// model: `u_y(e) = u_x(e2, -e1, e3, e5, -e4, e6, e8, -e7)`.
pub fn mirrored_uy(ux: &MultiPoly) -> MultiPoly {
    // variable i of u_x is replaced by sign[i] * e[perm[i]]
    let perm = [1, 0, 2, 4, 3, 5, 7, 6];
    let sign = [1.0, -1.0, 1.0, 1.0, -1.0, 1.0, 1.0, -1.0];
    ux.substitute(&perm, &sign)
}

/// `f_t = m (g + kp e3 + kd e6)`.
pub fn thrust_law(params: &QuadParams, kp: f64, kd: f64) -> MultiPoly {
    let mut p = MultiPoly::constant(ERROR_DIM, params.mass * params.gravity);
    p.add_linear(2, params.mass * kp);
    p.add_linear(5, params.mass * kd);
    p
}

pub const DEFAULT_ETA: f64 = 1.5;
pub const DEFAULT_KP: f64 = 9.0;
pub const DEFAULT_KD: f64 = 6.0;

#[rustfmt::skip]
const DEFAULT_P: [[f64; 8]; 8] = [
    [19.202247, 0.0, 0.0, 10.840316, -0.041731, 0.0, 0.238249, -45.320080],
    [0.0, 19.202247, 0.0, 0.041731, 10.840316, 0.0, 45.320080, 0.238249],
    [0.0, 0.0, 67.907193, 0.0, 0.0, 6.657568, 0.0, 0.0],
    [10.840316, 0.041731, 0.0, 8.514044, 0.0, 0.0, 0.317144, -30.772172],
    [-0.041731, 10.840316, 0.0, 0.0, 8.514044, 0.0, 30.772172, 0.317144],
    [0.0, 0.0, 6.657568, 0.0, 0.0, 11.095947, 0.0, 0.0],
    [0.238249, 45.320080, 0.0, 0.317144, 30.772172, 0.0, 144.185709, 0.0],
    [-45.320080, 0.238249, 0.0, -30.772172, 0.317144, 0.0, 0.0, 144.185709],
];

pub fn default_level_set() -> QuadraticForm {
    QuadraticForm::new(DMatrix::from_fn(8, 8, |i, j| DEFAULT_P[i][j])).expect("shipped P is positive definite")
}

/// Printed `u_x`, mirrored `u_y`, PD thrust law and a level set designed
/// for hover with planner accelerations up to 0.6 m/s² per axis.
pub fn default_bundle() -> ControllerBundle {
    let params = QuadParams::default();
    let ux = printed_ux();
    let uy = mirrored_uy(&ux);
    ControllerBundle::new(
        thrust_law(&params, DEFAULT_KP, DEFAULT_KD),
        ux,
        uy,
        default_level_set(),
        DEFAULT_ETA,
        params,
    )
    .expect("shipped bundle is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(i: usize) -> [f64; 8] {
        let mut e = [0.0; 8];
        e[i] = 1.0;
        e
    }

    #[test]
    fn printed_ux_values() {
        let ux = printed_ux();
        assert_eq!(ux.len(), 16);
        assert_eq!(ux.degree(), 2);
        assert_eq!(ux.eval(&[0.0; 8]), 0.0);
        assert!((ux.eval(&unit(6)) + 1.142).abs() < 1e-15);
        assert_eq!(ux.coefficient(&[0, 1, 1, 0, 0, 0, 0, 0]), 0.083);
        assert_eq!(ux.coefficient(&[0, 0, 0, 0, 0, 1, 1, 0]), -0.062);
    }

    #[test]
    fn mirror_is_consistent() {
        let ux = printed_ux();
        let uy = mirrored_uy(&ux);
        let e = [0.3, -0.2, 0.1, 0.5, -0.4, 0.2, 0.05, -0.07];
        let sub = [e[1], -e[0], e[2], e[4], -e[3], e[5], e[7], -e[6]];
        assert!((uy.eval(&e) - ux.eval(&sub)).abs() < 1e-15);
        // pitch responds to its own angle like roll does
        assert!((uy.eval(&unit(7)) + 1.142).abs() < 1e-15);
    }

    #[test]
    fn unit_ball_and_axis_ellipsoid() {
        let b = delta_from_levelset(&QuadraticForm::identity(8), 1.0).unwrap();
        assert_eq!(b.delta, 1.0);
        assert!(b.per_coordinate.iter().all(|d| *d == 1.0));
        let mut p = DMatrix::identity(3, 3);
        p[(0, 0)] = 4.0;
        let b = delta_from_levelset(&QuadraticForm::new(p).unwrap(), 1.0).unwrap();
        assert_eq!(b.per_coordinate[0], 0.5);
    }

    #[test]
    fn rejects_bad_matrices() {
        let mut p = DMatrix::identity(2, 2);
        p[(0, 1)] = 0.5;
        assert!(matches!(QuadraticForm::new(p), Err(ControllerError::NotSymmetric { .. })));
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(QuadraticForm::new(p), Err(ControllerError::NotPositiveDefinite(_))));
        assert!(delta_from_levelset(&QuadraticForm::identity(2), 0.0).is_err());
    }

    #[test]
    fn default_bundle_shape() {
        let b = default_bundle();
        assert_eq!(b.eta, DEFAULT_ETA);
        assert!(b.delta() > 0.5 && b.delta() < 1.0, "{}", b.delta());
        let e = ErrorState([0.0; 8]);
        let (u, clamped) = eval_controller(&b, &e);
        assert!(!clamped);
        assert_eq!(u, Inputs { ft: 4.905, ux: 0.0, uy: 0.0 });
        assert_eq!(b.level(&e), 0.0);
    }

    #[test]
    fn bundle_round_trip() {
        let b = default_bundle();
        let text = b.to_toml();
        let back: ControllerBundle = toml::from_str(&text).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.to_toml(), text);
        let tampered = text.replacen("eta = 1.5", "eta = 1.25", 1);
        assert!(toml::from_str::<ControllerBundle>(&tampered).is_err());
    }

    #[test]
    fn clamp_is_flagged() {
        let b = default_bundle();
        let (u, clamped) = eval_controller(&b, &ErrorState(unit(6)));
        assert!(clamped);
        assert_eq!(u.ux, -1.0);
    }

    proptest! {
        #[test]
        fn delta_monotone_in_eta(a in 0.01f64..10.0, b in 0.01f64..10.0) {
            let v = default_level_set();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(delta_from_levelset(&v, lo).unwrap().delta <= delta_from_levelset(&v, hi).unwrap().delta);
        }

        #[test]
        fn sign_flip_symmetry(a in prop::collection::vec(-1.0f64..1.0, 16), k in 0usize..4, eta in 0.1f64..3.0) {
            let a = DMatrix::from_vec(4, 4, a);
            let p = &a * a.transpose() + DMatrix::identity(4, 4);
            let mut s = DMatrix::identity(4, 4);
            s[(k, k)] = -1.0;
            let v = QuadraticForm::new(p.clone()).unwrap();
            let flipped = QuadraticForm::new(&s * p * &s).unwrap();
            let (d0, d1) = (delta_from_levelset(&v, eta).unwrap(), delta_from_levelset(&flipped, eta).unwrap());
            for i in 0..4 {
                prop_assert!((d0.per_coordinate[i] - d1.per_coordinate[i]).abs() < 1e-12);
            }
        }
    }
}
