//! Flat torus phase space and the two map families: hyperbolic linear
//! automorphisms `x -> Ax mod 1` and the sine-perturbed cat map
//! `(x, y) -> (2x + y + eps sin(2 pi x), x + y) mod 1`.
//!
//! Points live in `[0,1)^d`; lifts live in `R^d`. Every map here is a
//! lift-equivariant diffeomorphism, `T~(x + k) = T~(x) + A k` for integer
//! `k`, where `A` is the linear part.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::int_matrix::IntMatrix;

/// Reduced coordinates within this distance of 1 snap to 0.
pub const MOD1_SNAP: f64 = 1e-15;

/// Raw Jacobian products beyond this horizon are refused.
pub const MAX_RAW_MONODROMY: usize = 64;

/// Default distance from the unit circle below which an eigenvalue counts as neutral.
pub const DEFAULT_HYPERBOLICITY_MARGIN: f64 = 1e-9;

const INVERSE_MAX_ITER: usize = 100;

/// Reduce a real number into the canonical representative in `[0, 1)`.
pub fn wrap_unit(c: f64) -> f64 {
    let r = c - c.floor();
    if !(0.0..1.0 - MOD1_SNAP).contains(&r) {
        0.0
    } else {
        r
    }
}

/// Signed difference `a - b` reduced into `[-1/2, 1/2)`.
pub fn wrapped_delta(a: f64, b: f64) -> f64 {
    let d = a - b;
    d - (d + 0.5).floor()
}

/// Sup-metric on the torus, `max_i min(|a_i - b_i|, 1 - |a_i - b_i|)`.
pub fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&p, &q)| wrapped_delta(p, q).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    /// Accepts coordinates already in `[0, 1)`.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Precondition(
                "torus point needs at least one coordinate".into(),
            ));
        }
        if let Some(bad) = coords.iter().find(|c| !(0.0..1.0).contains(*c)) {
            return Err(Error::Precondition(format!(
                "torus coordinate {bad} outside [0, 1)"
            )));
        }
        Ok(Self { coords })
    }

    /// Reduces arbitrary real coordinates mod 1.
    pub fn wrap(coords: &[f64]) -> Self {
        Self {
            coords: coords.iter().map(|&c| wrap_unit(c)).collect(),
        }
    }

    pub fn origin(dim: usize) -> Self {
        Self {
            coords: vec![0.0; dim],
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn distance(&self, other: &TorusPoint) -> f64 {
        torus_distance(&self.coords, &other.coords)
    }

    pub fn to_lift(&self) -> LiftVector {
        LiftVector(self.coords.clone())
    }
}

/// A point of `R^d` covering a torus point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LiftVector(pub Vec<f64>);

impl LiftVector {
    pub fn project(&self) -> TorusPoint {
        TorusPoint::wrap(&self.0)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MapKind {
    LinearAutomorphism,
    PerturbedCat { eps: f64 },
}

/// Immutable description of a torus diffeomorphism.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapRepr", into = "MapRepr")]
pub struct MapSpec {
    kind: MapKind,
    linear: IntMatrix,
    linear_inverse: IntMatrix,
}

/// Config/JSON form: `{"map": "linear", "matrix": [2,1,1,1]}` or `{"map": "pcat", "eps": 0.01}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "lowercase")]
pub enum MapRepr {
    Linear { matrix: Vec<i64> },
    Pcat { eps: f64 },
}

impl TryFrom<MapRepr> for MapSpec {
    type Error = Error;

    fn try_from(repr: MapRepr) -> Result<Self> {
        match repr {
            MapRepr::Linear { matrix } => MapSpec::linear(IntMatrix::from_flat(matrix)?),
            MapRepr::Pcat { eps } => MapSpec::perturbed_cat(eps),
        }
    }
}

impl From<MapSpec> for MapRepr {
    fn from(map: MapSpec) -> Self {
        match map.kind {
            MapKind::LinearAutomorphism => MapRepr::Linear {
                matrix: map.linear.entries().to_vec(),
            },
            MapKind::PerturbedCat { eps } => MapRepr::Pcat { eps },
        }
    }
}

fn cat_matrix() -> IntMatrix {
    IntMatrix::from_row_major(2, vec![2, 1, 1, 1]).expect("static 2x2")
}

impl MapSpec {
    /// Linear automorphism `x -> Ax mod 1`; requires `|det A| = 1`.
    pub fn linear(matrix: IntMatrix) -> Result<Self> {
        let det = matrix.det();
        if det.abs() != 1 {
            return Err(Error::InvalidMap(format!(
                "linear automorphism needs |det A| = 1, got det = {det}"
            )));
        }
        let adj = matrix.adjugate();
        let inverse = IntMatrix::from_row_major(
            matrix.dim(),
            adj.entries().iter().map(|&v| v * det).collect(),
        )?;
        Ok(Self {
            kind: MapKind::LinearAutomorphism,
            linear: matrix,
            linear_inverse: inverse,
        })
    }

    /// Arnold's cat map, `A = [[2,1],[1,1]]`.
    pub fn cat() -> Self {
        Self::linear(cat_matrix()).expect("cat matrix is unimodular")
    }

    /// Sine-perturbed cat map; `eps` must lie in `[0, 1/(2 pi))` so the
    /// scalar map `x -> x + eps sin(2 pi x)` stays strictly increasing.
    pub fn perturbed_cat(eps: f64) -> Result<Self> {
        if !(0.0..1.0 / (2.0 * PI)).contains(&eps) {
            return Err(Error::InvalidMap(format!(
                "perturbation strength eps = {eps} outside [0, 1/(2 pi))"
            )));
        }
        let a = cat_matrix();
        Ok(Self {
            kind: MapKind::PerturbedCat { eps },
            linear_inverse: IntMatrix::from_row_major(2, vec![1, -1, -1, 2])?,
            linear: a,
        })
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.linear.dim()
    }

    /// Integer matrix `A` with `T~(x + k) = T~(x) + A k`.
    pub fn linear_part(&self) -> &IntMatrix {
        &self.linear
    }

    /// True when every Jacobian has `|det| = 1`. The sine perturbation
    /// has `det DT = 1 + 2 pi eps cos(2 pi x)` and is area-preserving only at `eps = 0`.
    pub fn is_area_preserving(&self) -> bool {
        match self.kind {
            MapKind::LinearAutomorphism => true,
            MapKind::PerturbedCat { eps } => eps == 0.0,
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    /// Applies the lift in place; `v.len()` must equal `dim()`.
    pub fn eval_lift_in_place(&self, v: &mut [f64]) {
        match self.kind {
            MapKind::LinearAutomorphism => {
                let d = self.dim();
                let out: Vec<f64> = (0..d)
                    .map(|i| (0..d).map(|j| self.linear.get(i, j) as f64 * v[j]).sum())
                    .collect();
                v.copy_from_slice(&out);
            }
            MapKind::PerturbedCat { eps } => {
                let (x, y) = (v[0], v[1]);
                v[0] = 2.0 * x + y + eps * (2.0 * PI * x).sin();
                v[1] = x + y;
            }
        }
    }

    /// Applies the map in place and reduces mod 1.
    pub fn eval_in_place(&self, v: &mut [f64]) {
        self.eval_lift_in_place(v);
        for c in v.iter_mut() {
            *c = wrap_unit(*c);
        }
    }

    pub fn eval(&self, x: &TorusPoint) -> Result<TorusPoint> {
        self.check_dim(x.dim())?;
        let mut v = x.coords.clone();
        self.eval_in_place(&mut v);
        Ok(TorusPoint { coords: v })
    }

    pub fn eval_lift(&self, x: &LiftVector) -> Result<LiftVector> {
        self.check_dim(x.dim())?;
        let mut v = x.0.clone();
        self.eval_lift_in_place(&mut v);
        Ok(LiftVector(v))
    }

    /// `T^n(x)`.
    pub fn iterate(&self, x: &TorusPoint, n: usize) -> Result<TorusPoint> {
        self.check_dim(x.dim())?;
        let mut v = x.coords.clone();
        for _ in 0..n {
            self.eval_in_place(&mut v);
        }
        Ok(TorusPoint { coords: v })
    }

    /// `[x, T x, ..., T^{n-1} x]`.
    pub fn orbit(&self, x: &TorusPoint, n: usize) -> Result<Vec<TorusPoint>> {
        self.check_dim(x.dim())?;
        let mut out = Vec::with_capacity(n);
        let mut v = x.coords.clone();
        for _ in 0..n {
            out.push(TorusPoint { coords: v.clone() });
            self.eval_in_place(&mut v);
        }
        Ok(out)
    }

    pub fn inverse(&self, y: &TorusPoint) -> Result<TorusPoint> {
        self.check_dim(y.dim())?;
        match self.kind {
            MapKind::LinearAutomorphism => {
                let d = self.dim();
                let coords: Vec<f64> = (0..d)
                    .map(|i| {
                        (0..d)
                            .map(|j| self.linear_inverse.get(i, j) as f64 * y.coords[j])
                            .sum()
                    })
                    .collect();
                Ok(TorusPoint::wrap(&coords))
            }
            MapKind::PerturbedCat { eps } => {
                let (u, v) = (y.coords[0], y.coords[1]);
                let x = solve_sine_shift(eps, u - v)?;
                Ok(TorusPoint::wrap(&[x, v - x]))
            }
        }
    }

    pub fn jacobian(&self, x: &TorusPoint) -> Result<DMatrix<f64>> {
        self.check_dim(x.dim())?;
        Ok(self.jacobian_at(&x.coords))
    }

    /// Jacobian at raw (lift or torus) coordinates; the derivative is 1-periodic.
    pub fn jacobian_at(&self, coords: &[f64]) -> DMatrix<f64> {
        match self.kind {
            MapKind::LinearAutomorphism => self.linear.to_f64(),
            MapKind::PerturbedCat { eps } => {
                let a = 2.0 + 2.0 * PI * eps * (2.0 * PI * coords[0]).cos();
                DMatrix::from_row_slice(2, 2, &[a, 1.0, 1.0, 1.0])
            }
        }
    }

    /// `DT^n(x) = DT(T^{n-1} x) ... DT(x)` as a raw product, for `1 <= n <= 64`.
    pub fn monodromy(&self, x: &TorusPoint, n: usize) -> Result<DMatrix<f64>> {
        self.check_dim(x.dim())?;
        if n == 0 {
            return Err(Error::Precondition("monodromy horizon must be >= 1".into()));
        }
        if n > MAX_RAW_MONODROMY {
            return Err(Error::MonodromyGuard {
                requested: n,
                max: MAX_RAW_MONODROMY,
            });
        }
        let mut v = x.coords.clone();
        let mut acc = DMatrix::identity(self.dim(), self.dim());
        for _ in 0..n {
            acc = self.jacobian_at(&v) * acc;
            self.eval_in_place(&mut v);
        }
        Ok(acc)
    }
}

/// Solves `x + eps sin(2 pi x) = w` on the real line by Newton's method
/// safeguarded with bisection on the bracket `[w - eps, w + eps]`.
fn solve_sine_shift(eps: f64, w: f64) -> Result<f64> {
    if eps == 0.0 {
        return Ok(w);
    }
    let g = |x: f64| x + eps * (2.0 * PI * x).sin() - w;
    let (mut lo, mut hi) = (w - eps, w + eps);
    let mut x = w;
    let mut residual = g(x).abs();
    for _ in 0..INVERSE_MAX_ITER {
        let r = g(x);
        residual = r.abs();
        if residual <= 4.0 * f64::EPSILON * w.abs().max(1.0) {
            return Ok(x);
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let slope = 1.0 + 2.0 * PI * eps * (2.0 * PI * x).cos();
        let mut next = x - r / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == x || hi - lo <= f64::EPSILON * w.abs().max(1.0) {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::Convergence {
        what: "perturbed cat inverse",
        iterations: INVERSE_MAX_ITER,
        residual,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HyperbolicityReport {
    pub is_automorphism: bool,
    pub is_hyperbolic: bool,
    /// Eigenvalue moduli, sorted non-increasing.
    pub eigenvalue_magnitudes: Vec<f64>,
}

pub fn hyperbolicity_check(a: &IntMatrix) -> HyperbolicityReport {
    hyperbolicity_check_with_margin(a, DEFAULT_HYPERBOLICITY_MARGIN)
}

pub fn hyperbolicity_check_with_margin(a: &IntMatrix, margin: f64) -> HyperbolicityReport {
    let is_automorphism = a.det().abs() == 1;
    let mut mags: Vec<f64> = a
        .to_f64()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .collect();
    mags.sort_by(|p, q| q.total_cmp(p));
    let is_hyperbolic = is_automorphism && mags.iter().all(|m| (m - 1.0).abs() > margin);
    HyperbolicityReport {
        is_automorphism,
        is_hyperbolic,
        eigenvalue_magnitudes: mags,
    }
}
