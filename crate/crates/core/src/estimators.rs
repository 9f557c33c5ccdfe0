//! Entropy-type estimators: restoration entropy from singular values,
//! topological entropy from separated sets, Lyapunov spectra, the unstable
//! Jacobian potential and topological pressure of `-t J^u`.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::{self, GrowthEstimate};
use crate::error::{Error, Result};
use crate::int_matrix::IntMatrix;
use crate::torus::{hyperbolicity_check, wrapped_delta, MapKind, MapSpec, TorusPoint};

/// Angle increment below which the pulled-back unstable direction counts as converged.
pub const UNSTABLE_DIRECTION_TOL: f64 = 1e-10;

/// Preorbit length used when evaluating `J^u` inside pressure sums.
pub const PRESSURE_PREORBIT: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    #[serde(rename = "h_rst")]
    RestorationEntropy,
    #[serde(rename = "h_top")]
    TopologicalEntropy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    RestorationSvd,
    SeparatedSets,
    ClosedFormLinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateDirection {
    LowerBoundModuloSampling,
    UpperBoundModuloSampling,
    Exact,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EstimateParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_resolution: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<usize>>,
}

/// A value in bits per iteration with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyEstimate {
    pub quantity: Quantity,
    #[serde(rename = "value_bits")]
    pub value: f64,
    pub method: EstimateMethod,
    pub params: EstimateParams,
    pub direction: EstimateDirection,
}

/// Restoration entropy: the sampled inf-sup estimate, plus the closed form
/// for linear automorphisms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RestorationEntropy {
    pub sampled: EntropyEstimate,
    pub closed_form: Option<EntropyEstimate>,
    pub growth: GrowthEstimate,
}

impl RestorationEntropy {
    /// The exact value when available, the sampled estimate otherwise.
    pub fn headline(&self) -> &EntropyEstimate {
        self.closed_form.as_ref().unwrap_or(&self.sampled)
    }
}

/// `sum log2 |lambda|` over eigenvalues of `A` outside the unit circle.
pub fn closed_form_linear_entropy(a: &IntMatrix) -> f64 {
    hyperbolicity_check(a)
        .eigenvalue_magnitudes
        .iter()
        .filter(|&&m| m > 1.0)
        .map(|m| m.log2())
        .sum()
}

pub fn estimate_hrst(
    map: &MapSpec,
    grid_resolution: usize,
    horizon_schedule: &[usize],
) -> Result<RestorationEntropy> {
    let growth = cocycle::growth_rate_inf_sup(map, grid_resolution, horizon_schedule)?;
    let sampled = EntropyEstimate {
        quantity: Quantity::RestorationEntropy,
        value: growth.value,
        method: EstimateMethod::RestorationSvd,
        params: EstimateParams {
            grid_resolution: Some(grid_resolution),
            schedule: Some(horizon_schedule.to_vec()),
            ..Default::default()
        },
        direction: EstimateDirection::UpperBoundModuloSampling,
    };
    let closed_form = match map.kind() {
        MapKind::LinearAutomorphism => Some(EntropyEstimate {
            quantity: Quantity::RestorationEntropy,
            value: closed_form_linear_entropy(map.linear_part()),
            method: EstimateMethod::ClosedFormLinear,
            params: EstimateParams::default(),
            direction: EstimateDirection::Exact,
        }),
        MapKind::PerturbedCat { .. } => None,
    };
    Ok(RestorationEntropy {
        sampled,
        closed_form,
        growth,
    })
}

/// Greedy maximal `(n, eps)`-separated subset of a candidate lattice.
pub struct SeparatedSet {
    dim: usize,
    n: usize,
    candidates: Vec<TorusPoint>,
    /// Flattened orbits: candidate `c`, time `i`, coordinate `a` at `(c * n + i) * dim + a`.
    orbits: Vec<f64>,
    kept: Vec<usize>,
}

impl SeparatedSet {
    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = &TorusPoint> {
        self.kept.iter().map(|&i| &self.candidates[i])
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates.len()
    }

    fn orbit(&self, c: usize) -> &[f64] {
        let len = self.n * self.dim;
        &self.orbits[c * len..(c + 1) * len]
    }

    /// Bowen distance `max_{i<n} d(T^i x, T^i y)` between two kept or candidate indices.
    pub fn bowen_distance(&self, a: usize, b: usize) -> f64 {
        self.orbit(a)
            .iter()
            .zip(self.orbit(b))
            .map(|(&p, &q)| wrapped_delta(p, q).abs())
            .fold(0.0, f64::max)
    }
}

fn check_separation_params(epsilon: f64, resolution: usize) -> Result<()> {
    // the sup-metric diameter of the torus is 1/2; larger scales separate nothing
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Precondition(format!(
            "separation scale epsilon = {epsilon} outside (0, 1)"
        )));
    }
    if resolution == 0 || 1.0 / resolution as f64 >= epsilon {
        return Err(Error::Precondition(format!(
            "candidate lattice spacing 1/{resolution} is not finer than epsilon = {epsilon}"
        )));
    }
    Ok(())
}

/// Builds the greedy separated set in row-major candidate order.
///
/// Two points closer than `eps` in the Bowen metric are closer than `eps`
/// at time 0 and at time `n-1`, so candidates are bucketed on both
/// snapshots with cells of side `>= eps` and only neighbouring cells are
/// scanned.
pub fn separated_set(
    map: &MapSpec,
    n: usize,
    epsilon: f64,
    candidate_resolution: usize,
) -> Result<SeparatedSet> {
    if n == 0 {
        return Err(Error::Precondition("orbit length n must be >= 1".into()));
    }
    check_separation_params(epsilon, candidate_resolution)?;
    let dim = map.dim();
    let candidates = cocycle::uniform_grid(dim, candidate_resolution);
    let orbits: Vec<f64> = candidates
        .par_iter()
        .flat_map_iter(|p| {
            let mut v = p.coords().to_vec();
            let mut out = Vec::with_capacity(n * dim);
            for i in 0..n {
                if i > 0 {
                    map.eval_in_place(&mut v);
                }
                out.extend_from_slice(&v);
            }
            out
        })
        .collect();
    let mut set = SeparatedSet {
        dim,
        n,
        candidates,
        orbits,
        kept: Vec::new(),
    };

    let cells = (1.0 / epsilon).floor() as u64;
    let snapshot_times: Vec<usize> = if n == 1 { vec![0] } else { vec![0, n - 1] };
    let axes = snapshot_times.len() * dim;
    let cell_of = |c: f64| ((c * cells as f64) as u64).min(cells - 1);
    let cell_coords = |set: &SeparatedSet, idx: usize| -> Vec<u64> {
        let orbit = set.orbit(idx);
        snapshot_times
            .iter()
            .flat_map(|&t| (0..dim).map(move |a| orbit[t * dim + a]))
            .map(cell_of)
            .collect()
    };
    let encode = |cc: &[u64]| {
        cc.iter()
            .fold(0u128, |acc, &c| acc * cells as u128 + c as u128)
    };
    let axis_offsets: Vec<u64> = {
        let mut o = vec![0, 1 % cells, (cells - 1) % cells];
        o.sort_unstable();
        o.dedup();
        o
    };

    let mut buckets: HashMap<u128, Vec<usize>> = HashMap::new();
    let mut neighbour = vec![0u64; axes];
    for idx in 0..set.candidates.len() {
        let home = cell_coords(&set, idx);
        let mut separated = true;
        let combos = axis_offsets.len().pow(axes as u32);
        'scan: for combo in 0..combos {
            let mut rest = combo;
            for (a, slot) in neighbour.iter_mut().enumerate() {
                let off = axis_offsets[rest % axis_offsets.len()];
                rest /= axis_offsets.len();
                *slot = (home[a] + off) % cells;
            }
            if let Some(members) = buckets.get(&encode(&neighbour)) {
                for &k in members {
                    if set.bowen_distance(idx, k) < epsilon {
                        separated = false;
                        break 'scan;
                    }
                }
            }
        }
        if separated {
            set.kept.push(idx);
            buckets.entry(encode(&home)).or_default().push(idx);
        }
    }
    Ok(set)
}

pub fn estimate_htop_separated(
    map: &MapSpec,
    n: usize,
    epsilon: f64,
    candidate_resolution: usize,
) -> Result<EntropyEstimate> {
    let set = separated_set(map, n, epsilon, candidate_resolution)?;
    Ok(EntropyEstimate {
        quantity: Quantity::TopologicalEntropy,
        value: (set.len() as f64).log2() / n as f64,
        method: EstimateMethod::SeparatedSets,
        params: EstimateParams {
            n: Some(n),
            epsilon: Some(epsilon),
            grid_resolution: Some(candidate_resolution),
            schedule: None,
        },
        direction: EstimateDirection::LowerBoundModuloSampling,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovSpectrum {
    pub base_point: TorusPoint,
    pub horizon: usize,
    /// Bits per iteration, non-increasing.
    pub exponents: Vec<f64>,
    pub lambda_plus: f64,
}

/// Finite-time exponents `(1/N) log2 alpha_i(N, x)`: the log-eigenvalues of
/// `(DT^N(x)^T DT^N(x))^{1/2N}`, whose limit is the Oseledets matrix.
pub fn lyapunov_spectrum(
    map: &MapSpec,
    x: &TorusPoint,
    horizon: usize,
) -> Result<LyapunovSpectrum> {
    if horizon == 0 {
        return Err(Error::Precondition("Lyapunov horizon must be >= 1".into()));
    }
    let s = cocycle::singular_spectrum(map, x, horizon)?;
    let exponents: Vec<f64> = s.log_alphas.iter().map(|a| a / horizon as f64).collect();
    let lambda_plus = exponents.iter().map(|&e| e.max(0.0)).sum();
    Ok(LyapunovSpectrum {
        base_point: x.clone(),
        horizon,
        exponents,
        lambda_plus,
    })
}

/// Orthonormalizes the columns of `m` in place (modified Gram-Schmidt) and
/// returns the column norms met along the way, i.e. the diagonal of `R`.
fn gram_schmidt(m: &mut DMatrix<f64>) -> Vec<f64> {
    let d = m.ncols();
    let mut diag = Vec::with_capacity(d);
    for j in 0..d {
        for i in 0..j {
            let proj = m.column(i).dot(&m.column(j));
            let qi = m.column(i).into_owned();
            m.column_mut(j).axpy(-proj, &qi, 1.0);
        }
        let norm = m.column(j).norm();
        m.column_mut(j).scale_mut(1.0 / norm);
        diag.push(norm);
    }
    diag
}

/// Classical QR (Benettin) exponents from a random orthonormal frame.
/// Converges to the same limits as [`lyapunov_spectrum`], with an
/// `O(1/N)` offset from the initial frame.
pub fn benettin_exponents(
    map: &MapSpec,
    x: &TorusPoint,
    horizon: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::Precondition("Lyapunov horizon must be >= 1".into()));
    }
    if x.dim() != map.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            got: x.dim(),
        });
    }
    let d = map.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frame = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
    gram_schmidt(&mut frame);
    let mut sums = vec![0.0; d];
    let mut v = x.coords().to_vec();
    for _ in 0..horizon {
        frame = map.jacobian_at(&v) * frame;
        for (s, r) in sums.iter_mut().zip(gram_schmidt(&mut frame)) {
            *s += r.log2();
        }
        map.eval_in_place(&mut v);
    }
    let mut out: Vec<f64> = sums.iter().map(|s| s / horizon as f64).collect();
    out.sort_by(|p, q| q.total_cmp(p));
    Ok(out)
}

fn require_planar_hyperbolic(map: &MapSpec) -> Result<[f64; 2]> {
    if map.dim() != 2 {
        return Err(Error::Precondition(
            "unstable Jacobian potential is implemented for d = 2 only".into(),
        ));
    }
    let a = map.linear_part().to_f64();
    let report = hyperbolicity_check(map.linear_part());
    if !report.is_hyperbolic {
        return Err(Error::Precondition(
            "unstable direction needs a hyperbolic linear part".into(),
        ));
    }
    // real eigenvalues: tr^2 - 4 det > 0 for planar hyperbolic automorphisms
    let tr = a[(0, 0)] + a[(1, 1)];
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    let lam = 0.5 * (tr + tr.signum() * (tr * tr - 4.0 * det).sqrt());
    let (b, c) = (a[(0, 1)], a[(1, 0)]);
    let v = if b.abs() >= c.abs() && b != 0.0 {
        [b, lam - a[(0, 0)]]
    } else if c != 0.0 {
        [lam - a[(1, 1)], c]
    } else if (a[(0, 0)].abs() - lam.abs()).abs() < 1e-12 {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    let norm = v[0].hypot(v[1]);
    Ok([v[0] / norm, v[1] / norm])
}

fn push_unit(jac: &DMatrix<f64>, v: [f64; 2]) -> ([f64; 2], f64) {
    let w = [
        jac[(0, 0)] * v[0] + jac[(0, 1)] * v[1],
        jac[(1, 0)] * v[0] + jac[(1, 1)] * v[1],
    ];
    let norm = w[0].hypot(w[1]);
    ([w[0] / norm, w[1] / norm], norm)
}

/// Unit vector spanning `E^u_x`, from pushing the linear part's unstable
/// eigenvector forward along the preorbit of length `preorbit_length`.
pub fn unstable_direction(
    map: &MapSpec,
    x: &TorusPoint,
    preorbit_length: usize,
) -> Result<[f64; 2]> {
    if preorbit_length == 0 {
        return Err(Error::Precondition("preorbit length must be >= 1".into()));
    }
    let seed = require_planar_hyperbolic(map)?;
    let mut preorbit = Vec::with_capacity(preorbit_length);
    let mut p = x.clone();
    for _ in 0..preorbit_length {
        p = map.inverse(&p)?;
        preorbit.push(p.clone());
    }
    // preorbit[k] = T^{-(k+1)} x; push two estimates that start one step apart
    let mut far = seed;
    let mut near = seed;
    for k in (0..preorbit_length).rev() {
        let jac = map.jacobian(&preorbit[k])?;
        far = push_unit(&jac, far).0;
        if k + 1 < preorbit_length {
            near = push_unit(&jac, near).0;
        }
    }
    let angle = (far[0] * near[1] - far[1] * near[0]).abs().asin();
    if angle > UNSTABLE_DIRECTION_TOL {
        return Err(Error::Accuracy {
            length: preorbit_length,
            angle,
        });
    }
    Ok(far)
}

/// `J^u T(x) = log2 |det DT(x)|_{E^u}|`, the one-step stretch along `E^u_x`.
pub fn unstable_jacobian_potential(
    map: &MapSpec,
    x: &TorusPoint,
    preorbit_length: usize,
) -> Result<f64> {
    let e = unstable_direction(map, x, preorbit_length)?;
    Ok(push_unit(&map.jacobian(x)?, e).1.log2())
}

/// Birkhoff sum `S_n J^u(x) = log2 |DT^n(x) e^u(x)|`, accumulated step by step.
pub fn unstable_birkhoff_sum(
    map: &MapSpec,
    x: &TorusPoint,
    n: usize,
    preorbit_length: usize,
) -> Result<f64> {
    let mut e = unstable_direction(map, x, preorbit_length)?;
    let mut v = x.coords().to_vec();
    let mut sum = 0.0;
    for _ in 0..n {
        let (next, stretch) = push_unit(&map.jacobian_at(&v), e);
        sum += stretch.log2();
        e = next;
        map.eval_in_place(&mut v);
    }
    Ok(sum)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PressureEstimate {
    pub t: f64,
    #[serde(rename = "value_bits")]
    pub value: f64,
    pub params: EstimateParams,
}

/// `log2 sum_i 2^{s_i}` with a max shift.
pub fn log2_sum_exp2(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp2()).sum::<f64>().log2()
}

/// Separated-set pressure of the potential `-t J^u`, with base-2 weights
/// `2^{S_n phi}` so that the result is in bits.
pub fn estimate_pressure(
    map: &MapSpec,
    t: f64,
    n: usize,
    epsilon: f64,
    candidate_resolution: usize,
) -> Result<PressureEstimate> {
    let set = separated_set(map, n, epsilon, candidate_resolution)?;
    let weights: Vec<f64> = if t == 0.0 {
        vec![0.0; set.len()]
    } else {
        let points: Vec<&TorusPoint> = set.points().collect();
        points
            .par_iter()
            .map(|p| unstable_birkhoff_sum(map, p, n, PRESSURE_PREORBIT).map(|s| -t * s))
            .collect::<Result<_>>()?
    };
    Ok(PressureEstimate {
        t,
        value: log2_sum_exp2(&weights) / n as f64,
        params: EstimateParams {
            n: Some(n),
            epsilon: Some(epsilon),
            grid_resolution: Some(candidate_resolution),
            schedule: None,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RuelleReport {
    pub h_top_estimate: EntropyEstimate,
    pub lambda_plus_min: f64,
    pub lambda_plus_mean: f64,
    pub lambda_plus_max: f64,
    /// `lambda_plus_min - h_top_estimate.value`.
    pub gap: f64,
}

/// Separated-set entropy next to pointwise `lambda^+` statistics over a grid.
pub fn ruelle_gap(
    map: &MapSpec,
    n: usize,
    epsilon: f64,
    candidate_resolution: usize,
    lyapunov_grid: usize,
    lyapunov_horizon: usize,
) -> Result<RuelleReport> {
    let h_top_estimate = estimate_htop_separated(map, n, epsilon, candidate_resolution)?;
    if lyapunov_grid == 0 {
        return Err(Error::Precondition(
            "Lyapunov grid resolution must be >= 1".into(),
        ));
    }
    let grid = cocycle::uniform_grid(map.dim(), lyapunov_grid);
    let lambdas: Vec<f64> = grid
        .par_iter()
        .map(|p| lyapunov_spectrum(map, p, lyapunov_horizon).map(|s| s.lambda_plus))
        .collect::<Result<_>>()?;
    let min = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let max = lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = lambdas.iter().sum::<f64>() / lambdas.len() as f64;
    Ok(RuelleReport {
        gap: min - h_top_estimate.value,
        h_top_estimate,
        lambda_plus_min: min,
        lambda_plus_mean: mean,
        lambda_plus_max: max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn log2_golden() -> f64 {
        ((3.0 + 5f64.sqrt()) / 2.0).log2()
    }

    fn lambda_pm(eps: f64) -> (f64, f64) {
        let pe = PI * eps;
        let root = 0.5 * (5.0 + 4.0 * pe * (1.0 + pe)).sqrt();
        (1.5 + pe + root, 1.5 + pe - root)
    }

    fn pt(x: f64, y: f64) -> TorusPoint {
        TorusPoint::new(vec![x, y]).unwrap()
    }

    #[test]
    fn hrst_cat_exact_and_sampled_agree() {
        let r = estimate_hrst(&MapSpec::cat(), 16, &[8, 16, 32]).unwrap();
        let exact = r.closed_form.as_ref().unwrap();
        assert_eq!(exact.direction, EstimateDirection::Exact);
        assert_abs_diff_eq!(exact.value, log2_golden(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.sampled.value, exact.value, epsilon = 1e-9);
        assert_eq!(r.headline().method, EstimateMethod::ClosedFormLinear);
    }

    #[test]
    fn hrst_shear_closed_form_is_zero() {
        let shear = MapSpec::linear(IntMatrix::from_flat(vec![1, 1, 0, 1]).unwrap()).unwrap();
        let r = estimate_hrst(&shear, 8, &[16, 64, 256]).unwrap();
        assert_eq!(r.headline().value, 0.0);
        // log2 of polynomial growth over n
        assert!(r.sampled.value < 0.05);
        assert!(r.growth.per_n_curve.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn htop_coarse_epsilon_gives_single_point() {
        let est = estimate_htop_separated(&MapSpec::cat(), 1, 0.6, 10).unwrap();
        assert_eq!(est.value, 0.0);
        // at 0.49 the four half-lattice points are pairwise 0.5 apart
        let set = separated_set(&MapSpec::cat(), 1, 0.49, 10).unwrap();
        assert_eq!(set.len(), 4);
    }

    #[test]
    fn htop_precondition_errors() {
        let cat = MapSpec::cat();
        assert!(estimate_htop_separated(&cat, 4, 1.0, 100).is_err());
        assert!(estimate_htop_separated(&cat, 4, 0.0, 100).is_err());
        assert!(estimate_htop_separated(&cat, 4, 0.05, 10).is_err());
        assert!(estimate_htop_separated(&cat, 0, 0.05, 100).is_err());
    }

    #[test]
    fn greedy_set_is_separated_and_maximal() {
        let pcat = MapSpec::perturbed_cat(0.03).unwrap();
        let eps = 0.1;
        let set = separated_set(&pcat, 3, eps, 30).unwrap();
        for (i, &a) in set.kept.iter().enumerate() {
            for &b in &set.kept[i + 1..] {
                assert!(set.bowen_distance(a, b) >= eps);
            }
        }
        let kept: std::collections::HashSet<_> = set.kept.iter().copied().collect();
        for c in 0..set.candidate_count() {
            if !kept.contains(&c) {
                assert!(set.kept.iter().any(|&k| set.bowen_distance(c, k) < eps));
            }
        }
    }

    #[test]
    fn lyapunov_examples() {
        let cat = MapSpec::cat();
        let s = lyapunov_spectrum(&cat, &pt(0.12, 0.34), 64).unwrap();
        assert_abs_diff_eq!(s.exponents[0], log2_golden(), epsilon = 1e-9);
        assert_abs_diff_eq!(s.exponents[1], -log2_golden(), epsilon = 1e-9);
        assert_abs_diff_eq!(s.lambda_plus, log2_golden(), epsilon = 1e-9);

        let eps = 0.01;
        let pcat = MapSpec::perturbed_cat(eps).unwrap();
        let s = lyapunov_spectrum(&pcat, &pt(0.0, 0.0), 64).unwrap();
        let (lp, lm) = lambda_pm(eps);
        assert_abs_diff_eq!(s.exponents[0], lp.log2(), epsilon = 1e-3);
        assert_abs_diff_eq!(s.exponents[1], lm.log2(), epsilon = 1e-3);
        let s = lyapunov_spectrum(&pcat, &pt(0.0, 0.0), 4096).unwrap();
        assert_abs_diff_eq!(s.exponents[0], lp.log2(), epsilon = 1e-5);

        let one = lyapunov_spectrum(&cat, &pt(0.5, 0.5), 1).unwrap();
        assert_abs_diff_eq!(one.exponents[0], log2_golden(), epsilon = 1e-12);
        assert!(lyapunov_spectrum(&cat, &pt(0.5, 0.5), 0).is_err());
    }

    #[test]
    fn benettin_agrees_with_singular_exponents() {
        let pcat = MapSpec::perturbed_cat(0.05).unwrap();
        let x = pt(0.21, 0.68);
        let qr = benettin_exponents(&pcat, &x, 4000, 5).unwrap();
        let sv = lyapunov_spectrum(&pcat, &x, 4000).unwrap();
        for (a, b) in qr.iter().zip(&sv.exponents) {
            assert_abs_diff_eq!(a, b, epsilon = 2e-3);
        }
    }

    #[test]
    fn unstable_potential_examples() {
        let cat = MapSpec::cat();
        for len in [1, 5, 30] {
            let j = unstable_jacobian_potential(&cat, &pt(0.3, 0.8), len).unwrap();
            assert_abs_diff_eq!(j, log2_golden(), epsilon = 1e-12);
        }
        let eps = 0.01;
        let pcat = MapSpec::perturbed_cat(eps).unwrap();
        let j = unstable_jacobian_potential(&pcat, &pt(0.0, 0.0), 30).unwrap();
        assert_abs_diff_eq!(j, lambda_pm(eps).0.log2(), epsilon = 1e-10);
        assert!(unstable_jacobian_potential(&pcat, &pt(0.0, 0.0), 0).is_err());
        let shear = MapSpec::linear(IntMatrix::from_flat(vec![1, 1, 0, 1]).unwrap()).unwrap();
        assert!(unstable_jacobian_potential(&shear, &pt(0.0, 0.0), 5).is_err());
    }

    #[test]
    fn short_preorbit_reports_accuracy_error() {
        let pcat = MapSpec::perturbed_cat(0.15).unwrap();
        let err = unstable_jacobian_potential(&pcat, &pt(0.3, 0.1), 2).unwrap_err();
        assert!(matches!(err, Error::Accuracy { length: 2, .. }));
    }

    #[test]
    fn pressure_at_zero_matches_entropy() {
        let pcat = MapSpec::perturbed_cat(0.02).unwrap();
        let h = estimate_htop_separated(&pcat, 4, 0.1, 40).unwrap();
        let p = estimate_pressure(&pcat, 0.0, 4, 0.1, 40).unwrap();
        assert_eq!(p.value, h.value);
    }

    #[test]
    fn pressure_of_cat_is_affine_in_t() {
        let cat = MapSpec::cat();
        let p0 = estimate_pressure(&cat, 0.0, 5, 0.1, 60).unwrap().value;
        let p1 = estimate_pressure(&cat, 1.0, 5, 0.1, 60).unwrap().value;
        assert_abs_diff_eq!(p0 - p1, log2_golden(), epsilon = 1e-9);
    }

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let v = [1.0, 2.5, -3.0];
        let direct: f64 = v.iter().map(|x: &f64| x.exp2()).sum::<f64>().log2();
        assert_abs_diff_eq!(log2_sum_exp2(&v), direct, epsilon = 1e-12);
        assert_abs_diff_eq!(log2_sum_exp2(&[5000.0, 5000.0]), 5001.0, epsilon = 1e-9);
    }

    #[test]
    fn estimate_json_shape() {
        let est = estimate_htop_separated(&MapSpec::cat(), 2, 0.2, 20).unwrap();
        let json = serde_json::to_value(&est).unwrap();
        assert_eq!(json["quantity"], "h_top");
        assert_eq!(json["method"], "separated_sets");
        assert_eq!(json["direction"], "lower_bound_modulo_sampling");
        assert!(json["value_bits"].is_number());
        assert_eq!(json["params"]["n"], 2);
    }
}
