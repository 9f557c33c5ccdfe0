//! Periodic orbits: exact enumeration for linear automorphisms, Newton
//! continuation to the perturbed cat map, and the per-orbit unstable
//! log-multiplier `gamma(p) = (1/n_p) log2 |det DT^{n_p}(p)|_{E^u}|`.
//!
//! For an Anosov map with equal topological and restoration entropy,
//! `gamma` is the same on every periodic orbit, so a measurable spread
//! certifies the strict inequality.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::int_matrix::IntMatrix;
use crate::torus::{wrapped_delta, MapKind, MapSpec, TorusPoint};

/// Orbits with `min |log2 |lambda||` below this are treated as non-hyperbolic.
pub const ORBIT_HYPERBOLICITY_MARGIN: f64 = 1e-6;

/// Default spread threshold, in bits, for the strict-inequality certificate.
pub const DEFAULT_SPREAD_THRESHOLD: f64 = 1e-4;

/// Cyclic closure tolerance for returned orbits.
pub const ORBIT_CLOSURE_TOL: f64 = 1e-10;

const MAX_ENUMERATION_BOX: u64 = 50_000_000;

/// A periodic orbit `p, T p, ..., T^{n_p - 1} p` with its monodromy matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodicOrbit {
    pub points: Vec<TorusPoint>,
    pub period: usize,
    #[serde(serialize_with = "serialize_rows")]
    pub monodromy: DMatrix<f64>,
    pub gamma: f64,
    /// Max lift-space residual of `T~(z_i) - z_{i+1} - k_i`.
    pub residual: f64,
    /// Integer translations `k_i` with `T~(z_i) = z_{i+1} + k_i`.
    pub translations: Vec<Vec<i64>>,
}

fn serialize_rows<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

/// `(1/period) sum log2 |lambda|` over the expanding eigenvalues of `monodromy`.
pub fn gamma_from_monodromy(monodromy: &DMatrix<f64>, period: usize) -> Result<f64> {
    let logs: Vec<f64> = if monodromy.nrows() == 2 {
        let (a, b, c, d) = (
            monodromy[(0, 0)],
            monodromy[(0, 1)],
            monodromy[(1, 0)],
            monodromy[(1, 1)],
        );
        let tr = a + d;
        let det = a * d - b * c;
        let disc = tr * tr - 4.0 * det;
        if disc <= 0.0 {
            // complex pair: both moduli equal sqrt|det|
            let m = det.abs().sqrt().log2();
            vec![m, m]
        } else {
            let big = 0.5 * (tr + tr.signum() * disc.sqrt());
            vec![big.abs().log2(), (det / big).abs().log2()]
        }
    } else {
        monodromy
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm().log2())
            .collect()
    };
    let closest = logs.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
    if closest < ORBIT_HYPERBOLICITY_MARGIN {
        return Err(Error::NonHyperbolicOrbit(closest));
    }
    let expanding: f64 = logs.iter().filter(|&&l| l > 0.0).sum();
    Ok(expanding / period as f64)
}

pub fn gamma(orbit: &PeriodicOrbit) -> Result<f64> {
    gamma_from_monodromy(&orbit.monodromy, orbit.period)
}

fn orbit_monodromy(map: &MapSpec, points: &[TorusPoint]) -> DMatrix<f64> {
    points
        .iter()
        .fold(DMatrix::identity(map.dim(), map.dim()), |acc, p| {
            map.jacobian_at(p.coords()) * acc
        })
}

/// Max wrapped distance between `T(points[i])` and `points[i+1]`.
pub fn closure_error(map: &MapSpec, points: &[TorusPoint]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (i, p) in points.iter().enumerate() {
        let next = &points[(i + 1) % points.len()];
        worst = worst.max(map.eval(p)?.distance(next));
    }
    Ok(worst)
}

fn lift_residual(map: &MapSpec, z: &[Vec<f64>], translations: &[Vec<i64>]) -> Vec<f64> {
    let p = z.len();
    let mut out = Vec::with_capacity(p * map.dim());
    for i in 0..p {
        let mut v = z[i].clone();
        map.eval_lift_in_place(&mut v);
        let next = &z[(i + 1) % p];
        for a in 0..map.dim() {
            out.push(v[a] - next[a] - translations[i][a] as f64);
        }
    }
    out
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn assemble(
    map: &MapSpec,
    points: Vec<TorusPoint>,
    translations: Vec<Vec<i64>>,
    residual: f64,
) -> Result<PeriodicOrbit> {
    let monodromy = orbit_monodromy(map, &points);
    let period = points.len();
    let gamma = gamma_from_monodromy(&monodromy, period)?;
    Ok(PeriodicOrbit {
        points,
        period,
        monodromy,
        gamma,
        residual,
        translations,
    })
}

/// All orbits whose minimal period divides `n`, found by solving
/// `(A^n - I) x = k` exactly: `x = adj(A^n - I) k / det(A^n - I)`.
/// The number of points returned equals `|det(A^n - I)|`.
pub fn enumerate_linear_periodic(
    a: &IntMatrix,
    n: usize,
    max_orbits: Option<usize>,
) -> Result<Vec<PeriodicOrbit>> {
    if n == 0 {
        return Err(Error::Precondition("period must be >= 1".into()));
    }
    let map = MapSpec::linear(a.clone()).map_err(|e| {
        Error::Precondition(format!("periodic enumeration needs an automorphism: {e}"))
    })?;
    let d = a.dim();
    let b = a.pow(n as u32).minus_identity();
    let det = b.det();
    if det == 0 {
        return Err(Error::Precondition(format!(
            "A^{n} - I is singular; A is not hyperbolic"
        )));
    }
    let (adj, denom) = if det > 0 {
        (b.adjugate(), det)
    } else {
        let adj = b.adjugate();
        let neg = IntMatrix::from_row_major(d, adj.entries().iter().map(|v| -v).collect())?;
        (neg, -det)
    };

    // k = B x ranges over the integer points of B [0,1)^d
    let ranges: Vec<(i64, i64)> = (0..d)
        .map(|i| {
            let row = (0..d).map(|j| b.get(i, j));
            let lo: i64 = row.clone().filter(|&v| v < 0).sum();
            let hi: i64 = row.filter(|&v| v > 0).sum();
            (lo, hi)
        })
        .collect();
    let box_size: u64 = ranges.iter().map(|(lo, hi)| (hi - lo + 1) as u64).product();
    if box_size > MAX_ENUMERATION_BOX {
        return Err(Error::Precondition(format!(
            "period {n} needs {box_size} candidate translations; limit is {MAX_ENUMERATION_BOX}"
        )));
    }

    let mut numerators: BTreeSet<Vec<i64>> = BTreeSet::new();
    let mut k: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    'outer: loop {
        let num = adj.mul_vec(&k);
        if num.iter().all(|&v| (0..denom).contains(&v)) {
            numerators.insert(num);
        }
        for (slot, &(lo, hi)) in k.iter_mut().zip(&ranges) {
            if *slot < hi {
                *slot += 1;
                continue 'outer;
            }
            *slot = lo;
        }
        break;
    }

    let step =
        |m: &[i64]| -> Vec<i64> { a.mul_vec(m).iter().map(|v| v.rem_euclid(denom)).collect() };
    let mut unvisited = numerators;
    let mut orbits = Vec::new();
    while let Some(start) = unvisited.pop_first() {
        let mut cycle = vec![start.clone()];
        let mut cur = step(&start);
        while cur != start {
            unvisited.remove(&cur);
            cycle.push(cur.clone());
            cur = step(&cur);
        }
        let points: Vec<TorusPoint> = cycle
            .iter()
            .map(|m| {
                TorusPoint::wrap(
                    &m.iter()
                        .map(|&v| v as f64 / denom as f64)
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        let translations: Vec<Vec<i64>> = (0..cycle.len())
            .map(|i| {
                let image = a.mul_vec(&cycle[i]);
                let next = &cycle[(i + 1) % cycle.len()];
                image
                    .iter()
                    .zip(next)
                    .map(|(x, y)| (x - y) / denom)
                    .collect()
            })
            .collect();
        let residual = closure_error(&map, &points)?;
        orbits.push(assemble(&map, points, translations, residual)?);
    }
    orbits.sort_by(|p, q| {
        p.period.cmp(&q.period).then_with(|| {
            p.points[0]
                .coords()
                .partial_cmp(q.points[0].coords())
                .expect("finite")
        })
    });
    if let Some(cap) = max_orbits {
        orbits.truncate(cap);
    }
    Ok(orbits)
}

fn proper_divisors(n: usize) -> impl Iterator<Item = usize> {
    (1..n).filter(move |&q| n.is_multiple_of(q))
}

/// Continues a periodic orbit of the linear part to `map` by damped Newton
/// on the stacked multiple-shooting system `T~(z_i) - z_{i+1} - k_i = 0`.
pub fn newton_refine(
    map: &MapSpec,
    seed: &PeriodicOrbit,
    max_iter: usize,
    tol: f64,
) -> Result<PeriodicOrbit> {
    let d = map.dim();
    let p = seed.period;
    if seed.points.first().map(|x| x.dim()) != Some(d) {
        return Err(Error::Precondition(
            "seed orbit dimension does not match the map".into(),
        ));
    }
    let mut z: Vec<Vec<f64>> = seed.points.iter().map(|x| x.coords().to_vec()).collect();
    let mut f = lift_residual(map, &z, &seed.translations);
    let mut res = max_abs(&f);
    if !res.is_finite() {
        return Err(Error::Continuation("seed residual is not finite".into()));
    }
    let mut iter = 0;
    while res > tol {
        if iter == max_iter {
            return Err(Error::Convergence {
                what: "Newton orbit continuation",
                iterations: max_iter,
                residual: res,
            });
        }
        iter += 1;
        let dim = p * d;
        let mut jac = DMatrix::zeros(dim, dim);
        for i in 0..p {
            let block = map.jacobian_at(&z[i]);
            let next = (i + 1) % p;
            for r in 0..d {
                for c in 0..d {
                    jac[(i * d + r, i * d + c)] += block[(r, c)];
                }
                jac[(i * d + r, next * d + r)] -= 1.0;
            }
        }
        let rhs = -DVector::from_column_slice(&f);
        let delta = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Continuation("singular multiple-shooting Jacobian".into()))?;
        let mut damping = 1.0;
        loop {
            let trial: Vec<Vec<f64>> = (0..p)
                .map(|i| {
                    (0..d)
                        .map(|a| z[i][a] + damping * delta[i * d + a])
                        .collect()
                })
                .collect();
            let trial_f = lift_residual(map, &trial, &seed.translations);
            let trial_res = max_abs(&trial_f);
            if trial_res < res || trial_res <= tol {
                z = trial;
                f = trial_f;
                res = trial_res;
                break;
            }
            damping *= 0.5;
            if damping < 1e-8 {
                return Err(Error::Continuation(format!(
                    "line search stalled at residual {res:e}"
                )));
            }
        }
    }
    let points: Vec<TorusPoint> = z.iter().map(|v| TorusPoint::wrap(v)).collect();
    for q in proper_divisors(p) {
        if map.iterate(&points[0], q)?.distance(&points[0]) <= 1e3 * tol.max(ORBIT_CLOSURE_TOL) {
            return Err(Error::Continuation(format!(
                "orbit of period {p} collapsed onto period {q}"
            )));
        }
    }
    assemble(map, points, seed.translations.clone(), res)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    ConsistentWithEquality,
    CertifiesStrictInequality,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContinuationFailure {
    pub period: usize,
    pub seed_point: TorusPoint,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitRow {
    pub period: usize,
    pub point: TorusPoint,
    pub gamma: f64,
    pub residual: f64,
}

pub const CERTIFICATE_CAVEAT: &str = "That equal entropies make gamma constant over periodic orbits \
is known for topologically mixing C^2 Anosov maps. Every Anosov diffeomorphism of a torus is mixing, and the \
perturbed cat map stays Anosov for small eps. The spread is measured in floating point, so the certificate \
is numerical evidence rather than a proof.";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaScanReport {
    #[serde(rename = "orbits", serialize_with = "serialize_orbit_rows")]
    pub orbits: Vec<PeriodicOrbit>,
    pub failures: Vec<ContinuationFailure>,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_spread: f64,
    pub certificate: Certificate,
    pub threshold: f64,
    pub caveat: &'static str,
}

fn serialize_orbit_rows<S: Serializer>(
    orbits: &[PeriodicOrbit],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    orbits
        .iter()
        .map(OrbitRow::from)
        .collect::<Vec<_>>()
        .serialize(s)
}

impl From<&PeriodicOrbit> for OrbitRow {
    fn from(o: &PeriodicOrbit) -> Self {
        OrbitRow {
            period: o.period,
            point: o.points[0].clone(),
            gamma: o.gamma,
            residual: o.residual,
        }
    }
}

impl GammaScanReport {
    /// One row per orbit: `period,x0,...,gamma,residual`.
    pub fn to_csv(&self) -> String {
        let dim = self.orbits.first().map_or(2, |o| o.points[0].dim());
        let mut out = String::from("period");
        for a in 0..dim {
            let _ = write!(out, ",x{a}");
        }
        out.push_str(",gamma,residual\n");
        for o in &self.orbits {
            let _ = write!(out, "{}", o.period);
            for c in o.points[0].coords() {
                let _ = write!(out, ",{c:.8e}");
            }
            let _ = writeln!(out, ",{:.8e},{:.3e}", o.gamma, o.residual);
        }
        out
    }
}

pub const NEWTON_MAX_ITER: usize = 50;
pub const NEWTON_TOL: f64 = 1e-12;

/// Enumerates linear-part orbits of every minimal period up to `max_period`,
/// continues them to `map` when it is perturbed, and reports the spread of gamma.
pub fn gamma_scan(map: &MapSpec, max_period: usize, threshold: f64) -> Result<GammaScanReport> {
    if max_period == 0 {
        return Err(Error::Precondition("max_period must be >= 1".into()));
    }
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::Precondition(
            "certificate threshold must be >= 0".into(),
        ));
    }
    let mut seeds = Vec::new();
    for p in 1..=max_period {
        seeds.extend(
            enumerate_linear_periodic(map.linear_part(), p, None)?
                .into_iter()
                .filter(|o| o.period == p),
        );
    }
    let continued: Vec<Result<PeriodicOrbit>> = match map.kind() {
        MapKind::LinearAutomorphism => seeds.iter().cloned().map(Ok).collect(),
        MapKind::PerturbedCat { .. } => seeds
            .par_iter()
            .map(|s| newton_refine(map, s, NEWTON_MAX_ITER, NEWTON_TOL))
            .collect(),
    };
    let mut orbits = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in seeds.iter().zip(continued) {
        match outcome {
            Ok(o) => orbits.push(o),
            Err(e) => failures.push(ContinuationFailure {
                period: seed.period,
                seed_point: seed.points[0].clone(),
                message: e.to_string(),
            }),
        }
    }
    if orbits.is_empty() {
        return Err(Error::Continuation(
            "no periodic orbit survived continuation".into(),
        ));
    }
    let gamma_min = orbits.iter().map(|o| o.gamma).fold(f64::INFINITY, f64::min);
    let gamma_max = orbits
        .iter()
        .map(|o| o.gamma)
        .fold(f64::NEG_INFINITY, f64::max);
    let gamma_spread = gamma_max - gamma_min;
    let certificate = if gamma_spread > threshold {
        Certificate::CertifiesStrictInequality
    } else {
        Certificate::ConsistentWithEquality
    };
    Ok(GammaScanReport {
        orbits,
        failures,
        gamma_min,
        gamma_max,
        gamma_spread,
        certificate,
        threshold,
        caveat: CERTIFICATE_CAVEAT,
    })
}

/// Sup-metric distance between two orbits point by point.
pub fn orbit_distance(a: &PeriodicOrbit, b: &PeriodicOrbit) -> f64 {
    a.points
        .iter()
        .zip(&b.points)
        .flat_map(|(p, q)| {
            p.coords()
                .iter()
                .zip(q.coords())
                .map(|(x, y)| wrapped_delta(*x, *y).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn cat() -> IntMatrix {
        IntMatrix::from_flat(vec![2, 1, 1, 1]).unwrap()
    }

    fn log2_golden() -> f64 {
        ((3.0 + 5f64.sqrt()) / 2.0).log2()
    }

    #[test]
    fn cat_fixed_point() {
        let orbits = enumerate_linear_periodic(&cat(), 1, None).unwrap();
        assert_eq!(orbits.len(), 1);
        assert_eq!(orbits[0].points[0].coords(), &[0.0, 0.0]);
        assert_abs_diff_eq!(orbits[0].gamma, log2_golden(), epsilon = 1e-12);
    }

    #[test]
    fn cat_period_two() {
        let orbits = enumerate_linear_periodic(&cat(), 2, None).unwrap();
        let periods: Vec<usize> = orbits.iter().map(|o| o.period).collect();
        assert_eq!(periods, vec![1, 2, 2]);
        let total: usize = periods.iter().sum();
        assert_eq!(total, 5);
        let map = MapSpec::cat();
        for o in &orbits {
            assert!(closure_error(&map, &o.points).unwrap() < ORBIT_CLOSURE_TOL);
        }
    }

    #[test]
    fn singular_or_non_automorphism_rejected() {
        let shear = IntMatrix::from_flat(vec![1, 1, 0, 1]).unwrap();
        assert!(enumerate_linear_periodic(&shear, 1, None).is_err());
        let stretch = IntMatrix::from_flat(vec![2, 0, 0, 1]).unwrap();
        assert!(enumerate_linear_periodic(&stretch, 1, None).is_err());
    }

    #[test]
    fn max_orbits_truncates() {
        assert_eq!(
            enumerate_linear_periodic(&cat(), 4, Some(3)).unwrap().len(),
            3
        );
    }

    #[test]
    fn newton_keeps_origin_fixed() {
        let eps = 0.01;
        let pcat = MapSpec::perturbed_cat(eps).unwrap();
        let seed = enumerate_linear_periodic(&cat(), 1, None)
            .unwrap()
            .remove(0);
        let o = newton_refine(&pcat, &seed, 20, 1e-12).unwrap();
        assert_eq!(o.points[0].coords(), &[0.0, 0.0]);
        assert_abs_diff_eq!(o.monodromy[(0, 0)], 2.0 + 2.0 * PI * eps, epsilon = 1e-15);
        let pe = PI * eps;
        let lam = 1.5 + pe + 0.5 * (5.0 + 4.0 * pe * (1.0 + pe)).sqrt();
        assert_abs_diff_eq!(o.gamma, lam.log2(), epsilon = 1e-12);
    }

    #[test]
    fn newton_with_zero_eps_returns_seed() {
        let pcat = MapSpec::perturbed_cat(0.0).unwrap();
        for seed in enumerate_linear_periodic(&cat(), 3, None).unwrap() {
            let o = newton_refine(&pcat, &seed, 20, 1e-12).unwrap();
            assert_eq!(o.points, seed.points);
            assert_eq!(o.gamma, seed.gamma);
        }
    }

    #[test]
    fn newton_continues_two_cycles() {
        let eps = 0.01;
        let pcat = MapSpec::perturbed_cat(eps).unwrap();
        for seed in enumerate_linear_periodic(&cat(), 2, None)
            .unwrap()
            .into_iter()
            .filter(|o| o.period == 2)
        {
            let o = newton_refine(&pcat, &seed, 30, 1e-12).unwrap();
            assert!(o.residual <= 1e-12);
            assert!(closure_error(&pcat, &o.points).unwrap() < ORBIT_CLOSURE_TOL);
            assert!(orbit_distance(&o, &seed) <= 10.0 * eps);
        }
    }

    #[test]
    fn gamma_rejects_neutral_monodromy() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(
            gamma_from_monodromy(&m, 1),
            Err(Error::NonHyperbolicOrbit(_))
        ));
    }

    #[test]
    fn gamma_doubles_consistently() {
        let pcat = MapSpec::perturbed_cat(0.02).unwrap();
        for seed in enumerate_linear_periodic(&cat(), 3, None).unwrap() {
            let o = newton_refine(&pcat, &seed, 30, 1e-12).unwrap();
            let twice = &o.monodromy * &o.monodromy;
            let g2 = gamma_from_monodromy(&twice, 2 * o.period).unwrap();
            assert_abs_diff_eq!(g2, o.gamma, epsilon = 1e-9);
        }
    }

    #[test]
    fn scan_examples() {
        let r = gamma_scan(&MapSpec::cat(), 4, 1e-9).unwrap();
        assert!(r.gamma_spread <= 1e-12);
        assert_eq!(r.certificate, Certificate::ConsistentWithEquality);

        let r = gamma_scan(&MapSpec::perturbed_cat(0.01).unwrap(), 4, 1e-4).unwrap();
        assert!(r.failures.is_empty());
        assert_eq!(r.certificate, Certificate::CertifiesStrictInequality);
        assert!(r.gamma_spread >= 0.025 - 1e-9, "spread {}", r.gamma_spread);

        let a = gamma_scan(&MapSpec::cat(), 3, 1e-4).unwrap();
        let b = gamma_scan(&MapSpec::perturbed_cat(0.0).unwrap(), 3, 1e-4).unwrap();
        assert_eq!(a.gamma_spread, b.gamma_spread);
        assert_eq!(a.certificate, b.certificate);
        assert_eq!(a.orbits.len(), b.orbits.len());

        assert!(gamma_scan(&MapSpec::cat(), 0, 1e-4).is_err());
    }

    #[test]
    fn scan_serializes_rows_and_csv() {
        let r = gamma_scan(&MapSpec::cat(), 2, 1e-4).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["orbits"].as_array().unwrap().len(), 3);
        assert_eq!(json["orbits"][0]["period"], 1);
        assert_eq!(json["certificate"], "consistent_with_equality");
        let csv = r.to_csv();
        assert!(csv.starts_with("period,x0,x1,gamma,residual\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
