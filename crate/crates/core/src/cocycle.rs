//! The singular-value cocycle `f_n(x) = log2 ||DT^n(x)^||`, where `^` is the
//! induced map on the full exterior algebra, and the averages built on it.
//!
//! Products of Jacobians overflow long before the horizons of interest, so
//! each exterior power `/\^k DT^n(x)` is accumulated as a normalized matrix
//! plus a base-2 log scale. The top singular value of `/\^k M` equals
//! `alpha_1 ... alpha_k`, which recovers every singular value of `M` in log
//! space without ever forming `M` itself.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{MapSpec, TorusPoint};

/// Finite-time singular data of `DT^n(x)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingularSpectrum {
    pub base_point: TorusPoint,
    pub horizon: usize,
    /// `log2 alpha_i(n, x)`, non-increasing.
    pub log_alphas: Vec<f64>,
    /// `sum_i max(0, log_alphas[i])`, in bits.
    pub f_value: f64,
}

impl SingularSpectrum {
    pub fn log_det(&self) -> f64 {
        self.log_alphas.iter().sum()
    }
}

/// k-element subsets of `0..d` in lexicographic order.
fn subsets(d: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, d: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..d {
            cur.push(i);
            rec(i + 1, d, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, d, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// k-th compound matrix: entries are the k x k minors of `m`.
fn compound(m: &DMatrix<f64>, index_sets: &[Vec<usize>]) -> DMatrix<f64> {
    let k = index_sets[0].len();
    if k == 1 {
        return m.clone();
    }
    let size = index_sets.len();
    DMatrix::from_fn(size, size, |r, c| {
        let rows = &index_sets[r];
        let cols = &index_sets[c];
        DMatrix::from_fn(k, k, |i, j| m[(rows[i], cols[j])]).determinant()
    })
}

fn top_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.len() == 1 {
        return m[(0, 0)].abs();
    }
    let gram = m.transpose() * m;
    let top = gram.symmetric_eigenvalues().max();
    top.max(0.0).sqrt()
}

/// Running product of exterior powers `/\^k J_n ... J_1`, k = 1..d, each kept
/// as a max-entry-normalized matrix times `2^log_scale[k]`.
pub(crate) struct ExteriorAccumulator {
    index_sets: Vec<Vec<Vec<usize>>>,
    products: Vec<DMatrix<f64>>,
    log_scale: Vec<f64>,
}

impl ExteriorAccumulator {
    pub(crate) fn new(dim: usize) -> Self {
        let index_sets: Vec<_> = (1..=dim).map(|k| subsets(dim, k)).collect();
        let products = index_sets
            .iter()
            .map(|s| DMatrix::identity(s.len(), s.len()))
            .collect();
        Self {
            index_sets,
            products,
            log_scale: vec![0.0; dim],
        }
    }

    pub(crate) fn push(&mut self, jac: &DMatrix<f64>) {
        for k in 0..self.products.len() {
            let c = compound(jac, &self.index_sets[k]);
            let mut p = c * &self.products[k];
            let s = p.amax();
            if s > 0.0 && s.is_finite() {
                p /= s;
                self.log_scale[k] += s.log2();
            }
            self.products[k] = p;
        }
    }

    /// `log2 (alpha_1 ... alpha_k)` for k = 1..d.
    pub(crate) fn log_volumes(&self) -> Vec<f64> {
        self.products
            .iter()
            .zip(&self.log_scale)
            .map(|(p, &s)| s + top_singular_value(p).log2())
            .collect()
    }

    pub(crate) fn log_alphas(&self) -> Vec<f64> {
        let vols = self.log_volumes();
        let mut prev = 0.0;
        let mut alphas: Vec<f64> = vols
            .iter()
            .map(|&v| {
                let a = v - prev;
                prev = v;
                a
            })
            .collect();
        // equal singular values can come out in the wrong order by rounding
        alphas.sort_by(|p, q| q.total_cmp(p));
        alphas
    }
}

fn spectrum_from(
    acc: &ExteriorAccumulator,
    base_point: &TorusPoint,
    horizon: usize,
) -> SingularSpectrum {
    let log_alphas = acc.log_alphas();
    let f_value = log_alphas.iter().map(|&a| a.max(0.0)).sum();
    SingularSpectrum {
        base_point: base_point.clone(),
        horizon,
        log_alphas,
        f_value,
    }
}

/// Singular spectrum of `DT^n(x)`, stable for horizons in the thousands.
pub fn singular_spectrum(map: &MapSpec, x: &TorusPoint, n: usize) -> Result<SingularSpectrum> {
    Ok(singular_spectra_along(map, x, &[n])?
        .pop()
        .expect("one horizon"))
}

/// Spectra at several horizons from one pass along the orbit of `x`.
pub fn singular_spectra_along(
    map: &MapSpec,
    x: &TorusPoint,
    horizons: &[usize],
) -> Result<Vec<SingularSpectrum>> {
    if x.dim() != map.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            got: x.dim(),
        });
    }
    check_schedule(horizons)?;
    let mut acc = ExteriorAccumulator::new(map.dim());
    let mut v = x.coords().to_vec();
    let mut out = Vec::with_capacity(horizons.len());
    let mut step = 0;
    for &n in horizons {
        while step < n {
            acc.push(&map.jacobian_at(&v));
            map.eval_in_place(&mut v);
            step += 1;
        }
        out.push(spectrum_from(&acc, x, n));
    }
    Ok(out)
}

fn check_schedule(horizons: &[usize]) -> Result<()> {
    if horizons.is_empty() {
        return Err(Error::Precondition("horizon schedule is empty".into()));
    }
    if horizons[0] == 0 || horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition(
            "horizon schedule must be strictly increasing and start at n >= 1".into(),
        ));
    }
    Ok(())
}

/// `sum_i max(0, log2 alpha_i)`: the log-norm of the exterior-algebra map.
pub fn unstable_log_volume(s: &SingularSpectrum) -> f64 {
    s.log_alphas.iter().map(|&a| a.max(0.0)).sum()
}

/// `f_n(x) + f_m(T^n x) - f_{n+m}(x)`; non-negative up to rounding.
pub fn subadditivity_defect(map: &MapSpec, x: &TorusPoint, n: usize, m: usize) -> Result<f64> {
    if n == 0 || m == 0 {
        return Err(Error::Precondition("subadditivity needs n, m >= 1".into()));
    }
    let along = singular_spectra_along(map, x, &[n, n + m])?;
    let shifted = singular_spectrum(map, &map.iterate(x, n)?, m)?;
    Ok(along[0].f_value + shifted.f_value - along[1].f_value)
}

/// `(1/N) f_N(x)`, the finite-time approximant of `lambda^+(x)`.
pub fn kingman_average(map: &MapSpec, x: &TorusPoint, horizon: usize) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::Precondition("Kingman horizon must be >= 1".into()));
    }
    Ok(singular_spectrum(map, x, horizon)?.f_value / horizon as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleMean {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Deterministic uniform sample of `[0,1)^d` from a seed.
pub fn uniform_points(dim: usize, count: usize, seed: u64) -> Vec<TorusPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let coords: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            TorusPoint::wrap(&coords)
        })
        .collect()
}

/// Mean of `(1/n) f_n` over i.i.d. Lebesgue-uniform points, with its standard error.
pub fn monte_carlo_space_average(
    map: &MapSpec,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<SampleMean> {
    if samples < 2 {
        return Err(Error::Precondition(format!(
            "Monte Carlo average needs at least 2 samples, got {samples}"
        )));
    }
    if n == 0 {
        return Err(Error::Precondition("horizon must be >= 1".into()));
    }
    let points = uniform_points(map.dim(), samples, seed);
    let values = points
        .par_iter()
        .map(|p| kingman_average(map, p, n))
        .collect::<Result<Vec<f64>>>()?;
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
    Ok(SampleMean {
        mean,
        std_error: (var / count).sqrt(),
        samples,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthDirection {
    Approximation,
    UpperBoundModuloSampling,
}

/// Extremal growth rate of the cocycle estimated as `min_n max_grid (1/n) f_n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthEstimate {
    pub value: f64,
    #[serde(rename = "schedule")]
    pub horizon_schedule: Vec<usize>,
    pub per_n_curve: Vec<f64>,
    /// Grid point attaining each entry of `per_n_curve`.
    pub per_n_argmax: Vec<TorusPoint>,
    pub grid_resolution: usize,
    pub direction: GrowthDirection,
}

/// Uniform lattice `{ (i_1/G, ..., i_d/G) }` in row-major order.
pub fn uniform_grid(dim: usize, resolution: usize) -> Vec<TorusPoint> {
    let total = resolution.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut coords = vec![0.0; dim];
            for c in coords.iter_mut().rev() {
                *c = (idx % resolution) as f64 / resolution as f64;
                idx /= resolution;
            }
            TorusPoint::wrap(&coords)
        })
        .collect()
}

pub fn growth_rate_inf_sup(
    map: &MapSpec,
    grid_resolution: usize,
    horizon_schedule: &[usize],
) -> Result<GrowthEstimate> {
    check_schedule(horizon_schedule)?;
    if grid_resolution == 0 {
        return Err(Error::Precondition("grid resolution must be >= 1".into()));
    }
    let grid = uniform_grid(map.dim(), grid_resolution);
    let rates: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|p| {
            singular_spectra_along(map, p, horizon_schedule).map(|spectra| {
                spectra
                    .iter()
                    .map(|s| s.f_value / s.horizon as f64)
                    .collect()
            })
        })
        .collect::<Result<_>>()?;

    let mut per_n_curve = Vec::with_capacity(horizon_schedule.len());
    let mut per_n_argmax = Vec::with_capacity(horizon_schedule.len());
    for k in 0..horizon_schedule.len() {
        // first index wins ties, so the reduction is order-independent
        let (best, value) =
            rates
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, r)| {
                    if r[k] > bv {
                        (i, r[k])
                    } else {
                        (bi, bv)
                    }
                });
        per_n_curve.push(value);
        per_n_argmax.push(grid[best].clone());
    }
    let value = per_n_curve.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(GrowthEstimate {
        value,
        horizon_schedule: horizon_schedule.to_vec(),
        per_n_curve,
        per_n_argmax,
        grid_resolution,
        direction: GrowthDirection::UpperBoundModuloSampling,
    })
}
