//! State estimation over a noiseless digital channel.
//!
//! The decoder keeps a box `c + P diag(h) [-1,1]^d` in lift coordinates,
//! with `P` an orthonormal frame carried along by QR. Each step both sides
//! push the box through the linearisation at its centre, the encoder names
//! the sub-box holding the true state, and the decoder adopts it.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{wrap_unit, wrapped_delta, MapKind, MapSpec, TorusPoint};

/// Absolute inflation added to every decoded box.
pub const ABSOLUTE_MARGIN: f64 = 1e-12;
/// Estimation error above which a run counts as blown up.
pub const ERROR_BLOWUP: f64 = 0.1;
/// Boxes wider than this (sup-norm half width) no longer project unambiguously.
pub const MAX_BOX_HALF_WIDTH: f64 = 0.25;
/// Upper limit on the rate so that per-axis indices fit in a `u64`.
pub const MAX_RATE: f64 = 48.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub rate: f64,
    pub delta: f64,
    pub steps: usize,
}

impl ChannelConfig {
    pub fn new(rate: f64, delta: f64, steps: usize) -> Result<Self> {
        let cfg = ChannelConfig { rate, delta, steps };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate <= MAX_RATE) {
            return Err(Error::Precondition(format!(
                "rate must lie in (0, {MAX_RATE}], got {}",
                self.rate
            )));
        }
        if !(self.delta > 0.0 && self.delta < 0.25) {
            return Err(Error::Precondition(format!(
                "delta must lie in (0, 1/4), got {}",
                self.delta
            )));
        }
        if self.steps == 0 {
            return Err(Error::Precondition("steps must be >= 1".into()));
        }
        Ok(())
    }

    /// Bits the channel has delivered by the end of step `t`.
    pub fn allowance(&self, t: usize) -> u64 {
        (self.rate * t as f64).floor() as u64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxEstimate {
    pub center: Vec<f64>,
    pub frame: DMatrix<f64>,
    pub half_widths: Vec<f64>,
}

impl BoxEstimate {
    pub fn around(center: &TorusPoint, delta: f64) -> Self {
        let d = center.dim();
        BoxEstimate {
            center: center.coords().to_vec(),
            frame: DMatrix::identity(d, d),
            half_widths: vec![delta; d],
        }
    }

    /// Sup-norm half width of the box in lift coordinates, per axis.
    pub fn extent(&self) -> Vec<f64> {
        (0..self.center.len())
            .map(|i| {
                (0..self.half_widths.len())
                    .map(|j| self.frame[(i, j)].abs() * self.half_widths[j])
                    .sum()
            })
            .collect()
    }

    pub fn radius(&self) -> f64 {
        self.extent().into_iter().fold(0.0, f64::max)
    }

    /// Frame coordinates of `x` scaled so that the box is `[-1,1]^d`.
    fn local(&self, x: &[f64]) -> Vec<f64> {
        let offset = DVector::from_iterator(
            x.len(),
            x.iter()
                .zip(&self.center)
                .map(|(a, c)| wrapped_delta(*a, *c)),
        );
        let u = self.frame.transpose() * offset;
        u.iter()
            .zip(&self.half_widths)
            .map(|(v, h)| v / h)
            .collect()
    }

    pub fn contains(&self, x: &TorusPoint) -> bool {
        self.local(x.coords()).iter().all(|u| u.abs() <= 1.0)
    }

    pub fn estimate(&self) -> TorusPoint {
        TorusPoint::wrap(&self.center)
    }
}

/// The deterministic part of a step, computed identically on both sides.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub bounding: BoxEstimate,
    pub margin: f64,
    pub allocation: Vec<u32>,
}

fn taylor_margin(map: &MapSpec, b: &BoxEstimate) -> f64 {
    match map.kind() {
        MapKind::LinearAutomorphism => 0.0,
        MapKind::PerturbedCat { eps } => {
            let dx: f64 = (0..b.half_widths.len())
                .map(|j| b.frame[(0, j)].abs() * b.half_widths[j])
                .sum();
            2.0 * PI * PI * eps * dx * dx
        }
    }
}

/// Splits `bits` across axes in proportion to `weights` by largest remainder.
pub fn allocate_bits(bits: u32, weights: &[f64]) -> Vec<u32> {
    let total: f64 = weights.iter().sum();
    let shares: Vec<f64> = if total > 0.0 {
        weights.iter().map(|w| bits as f64 * w / total).collect()
    } else {
        vec![bits as f64 / weights.len() as f64; weights.len()]
    };
    let mut out: Vec<u32> = shares.iter().map(|s| s.floor() as u32).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.partial_cmp(&ra).expect("finite shares").then(a.cmp(&b))
    });
    let mut left = bits - out.iter().sum::<u32>();
    for i in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

pub fn predict(map: &MapSpec, b: &BoxEstimate, bits: u32) -> Prediction {
    let jac = map.jacobian_at(&b.center);
    let (q, r) = (jac * &b.frame).qr().unpack();
    let d = b.half_widths.len();
    let half_widths: Vec<f64> = (0..d)
        .map(|i| (0..d).map(|j| r[(i, j)].abs() * b.half_widths[j]).sum())
        .collect();
    let mut center = b.center.clone();
    map.eval_lift_in_place(&mut center);
    let margin = taylor_margin(map, b) + ABSOLUTE_MARGIN;
    let weights: Vec<f64> = half_widths
        .iter()
        .zip(&b.half_widths)
        .map(|(new, old)| (new / old).log2().max(0.0))
        .collect();
    Prediction {
        bounding: BoxEstimate {
            center,
            frame: q,
            half_widths,
        },
        margin,
        allocation: allocate_bits(bits, &weights),
    }
}

/// Per-axis sub-box index of `x`, clamped to the partition.
pub fn encode(pred: &Prediction, x: &TorusPoint) -> Vec<u64> {
    let u = pred.bounding.local(x.coords());
    u.iter()
        .zip(&pred.allocation)
        .map(|(ui, &b)| {
            let cells = 1u64 << b;
            let pos = ((ui + 1.0) * 0.5 * cells as f64).floor();
            pos.clamp(0.0, (cells - 1) as f64) as u64
        })
        .collect()
}

/// Big-endian wire string: axis 0's index first, each in `allocation[i]` bits.
pub fn to_wire(indices: &[u64], allocation: &[u32]) -> String {
    let mut s = String::new();
    for (&k, &b) in indices.iter().zip(allocation) {
        for bit in (0..b).rev() {
            s.push(if (k >> bit) & 1 == 1 { '1' } else { '0' });
        }
    }
    s
}

pub fn from_wire(wire: &str, allocation: &[u32]) -> Result<Vec<u64>> {
    let total: u32 = allocation.iter().sum();
    if wire.len() != total as usize {
        return Err(Error::Precondition(format!(
            "wire carries {} bits, allocation expects {total}",
            wire.len()
        )));
    }
    let mut out = Vec::with_capacity(allocation.len());
    let mut pos = 0;
    for &b in allocation {
        let chunk = &wire[pos..pos + b as usize];
        let k = if b == 0 {
            0
        } else {
            u64::from_str_radix(chunk, 2)
                .map_err(|e| Error::Precondition(format!("bad wire symbol: {e}")))?
        };
        out.push(k);
        pos += b as usize;
    }
    Ok(out)
}

/// The sub-box named by `indices`, inflated by the prediction margin and
/// recentred into the unit cube.
pub fn decode(pred: &Prediction, indices: &[u64]) -> BoxEstimate {
    let bb = &pred.bounding;
    let d = bb.half_widths.len();
    let mut offsets = DVector::zeros(d);
    let mut half_widths = Vec::with_capacity(d);
    for i in 0..d {
        let cells = (1u64 << pred.allocation[i]) as f64;
        let h = bb.half_widths[i] / cells;
        offsets[i] = bb.half_widths[i] * (-1.0 + (2 * indices[i] + 1) as f64 / cells);
        half_widths.push(h + pred.margin);
    }
    let shift = &bb.frame * offsets;
    let center = bb
        .center
        .iter()
        .zip(shift.iter())
        .map(|(c, s)| wrap_unit(c + s))
        .collect();
    BoxEstimate {
        center,
        frame: bb.frame.clone(),
        half_widths,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Regular,
    ContainmentLost,
    ErrorBlowup,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub true_state: TorusPoint,
    pub estimate: TorusPoint,
    pub error: f64,
    pub bits_sent: u64,
    /// Big-endian sub-box index sent on this step.
    pub wire: String,
    pub contained: bool,
    pub box_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObserverTrace {
    pub config: ChannelConfig,
    pub steps: Vec<StepRecord>,
    pub gain: f64,
    pub verdict: Verdict,
    /// Steps where the encoder's and decoder's boxes differed.
    pub symmetry_violations: usize,
}

impl ObserverTrace {
    /// Columns `t,x0,..,xhat0,..,err,bits,contained`; `bits` is the wire string.
    pub fn to_csv(&self) -> String {
        let d = self.steps.first().map_or(2, |s| s.true_state.dim());
        let mut out = String::from("t");
        for a in 0..d {
            let _ = write!(out, ",x{a}");
        }
        for a in 0..d {
            let _ = write!(out, ",xhat{a}");
        }
        out.push_str(",err,bits,contained\n");
        for s in &self.steps {
            let _ = write!(out, "{}", s.t);
            for c in s.true_state.coords().iter().chain(s.estimate.coords()) {
                let _ = write!(out, ",{c:.8e}");
            }
            let _ = writeln!(out, ",{:.8e},{},{}", s.error, s.wire, s.contained);
        }
        out
    }

    pub fn total_bits(&self) -> u64 {
        self.steps.iter().map(|s| s.bits_sent).sum()
    }
}

fn record(t: usize, x: &TorusPoint, b: &BoxEstimate, bits: u64, wire: String) -> StepRecord {
    let estimate = b.estimate();
    StepRecord {
        t,
        error: x.distance(&estimate),
        true_state: x.clone(),
        estimate,
        bits_sent: bits,
        wire,
        contained: b.contains(x),
        box_radius: b.radius(),
    }
}

pub fn simulate_observer(
    map: &MapSpec,
    cfg: &ChannelConfig,
    x0: &TorusPoint,
    xhat0: &TorusPoint,
) -> Result<ObserverTrace> {
    cfg.validate()?;
    if x0.dim() != map.dim() || xhat0.dim() != map.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            got: if x0.dim() != map.dim() {
                x0.dim()
            } else {
                xhat0.dim()
            },
        });
    }
    if x0.distance(xhat0) > cfg.delta {
        return Err(Error::Precondition(format!(
            "initial estimate is {} away from the state, delta is {}",
            x0.distance(xhat0),
            cfg.delta
        )));
    }
    let mut decoder = BoxEstimate::around(xhat0, cfg.delta);
    let mut x = x0.clone();
    let mut steps = vec![record(0, &x, &decoder, 0, String::new())];
    let mut used: u64 = 0;
    let mut verdict = Verdict::Regular;
    let mut symmetry_violations = 0;
    for t in 1..=cfg.steps {
        let bits = cfg.allowance(t) - used;
        used += bits;
        x = map.eval(&x)?;

        let shared = predict(map, &decoder, bits as u32);
        let sent = encode(&shared, &x);
        let wire = to_wire(&sent, &shared.allocation);
        let encoder_side = decode(&shared, &sent);

        let received = from_wire(&wire, &shared.allocation)?;
        decoder = decode(&shared, &received);
        if decoder != encoder_side {
            symmetry_violations += 1;
        }

        let rec = record(t, &x, &decoder, bits, wire);
        let (contained, error, radius) = (rec.contained, rec.error, rec.box_radius);
        steps.push(rec);
        if !contained {
            verdict = Verdict::ContainmentLost;
            break;
        }
        if error > ERROR_BLOWUP || radius > MAX_BOX_HALF_WIDTH {
            verdict = Verdict::ErrorBlowup;
            break;
        }
    }
    let gain = steps.iter().map(|s| s.error).fold(0.0, f64::max) / cfg.delta;
    Ok(ObserverTrace {
        config: *cfg,
        steps,
        gain,
        verdict,
        symmetry_violations,
    })
}

/// Checks every prefix against the channel allowance and the per-step credit.
pub fn bit_accounting_audit(trace: &ObserverTrace, rate: f64) -> bool {
    let mut sum: u64 = 0;
    for s in &trace.steps {
        if s.wire.len() as u64 != s.bits_sent {
            return false;
        }
        let allowed = (rate * s.t as f64).floor() as u64;
        if s.bits_sent > allowed.saturating_sub(sum) {
            return false;
        }
        sum += s.bits_sent;
        if sum > allowed + 1 {
            return false;
        }
    }
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rate: f64,
    /// Infinite (null in JSON) when most trials were not regular.
    pub median_gain: f64,
    pub frac_regular: f64,
    pub verdicts: Vec<Verdict>,
    pub gains: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSweep {
    pub rows: Vec<SweepRow>,
    /// Smallest tested rate at which every trial was regular.
    pub transition_rate: Option<f64>,
    /// Adjacent pairs (in increasing rate) where the median gain went up.
    pub gain_inversions: usize,
    pub audit_passed: bool,
}

impl RateSweep {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rate,median_gain,frac_regular\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:.8e},{:.8e},{:.8e}",
                r.rate, r.median_gain, r.frac_regular
            );
        }
        out
    }
}

/// `(x0, xhat0)` for trial `trial` of rate `rate_index`.
pub fn trial_initial_condition(
    dim: usize,
    delta: f64,
    seed: u64,
    rate_index: usize,
    trial: usize,
) -> (TorusPoint, TorusPoint) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((rate_index as u64) << 32) | trial as u64);
    let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let xhat: Vec<f64> = x
        .iter()
        .map(|v| v + delta * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    (TorusPoint::wrap(&x), TorusPoint::wrap(&xhat))
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn rate_sweep(
    map: &MapSpec,
    rates: &[f64],
    template: &ChannelConfig,
    trials: usize,
    seed: u64,
) -> Result<RateSweep> {
    if rates.is_empty() {
        return Err(Error::Precondition("rates must be nonempty".into()));
    }
    if trials == 0 {
        return Err(Error::Precondition("trials must be >= 1".into()));
    }
    for &r in rates {
        ChannelConfig::new(r, template.delta, template.steps)?;
    }
    let jobs: Vec<(usize, usize)> = (0..rates.len())
        .flat_map(|ri| (0..trials).map(move |k| (ri, k)))
        .collect();
    let traces: Vec<ObserverTrace> = jobs
        .par_iter()
        .map(|&(ri, k)| {
            let cfg = ChannelConfig {
                rate: rates[ri],
                ..*template
            };
            let (x0, xhat0) = trial_initial_condition(map.dim(), cfg.delta, seed, ri, k);
            simulate_observer(map, &cfg, &x0, &xhat0)
        })
        .collect::<Result<_>>()?;
    let audit_passed = traces
        .iter()
        .all(|tr| bit_accounting_audit(tr, tr.config.rate) && tr.symmetry_violations == 0);
    let rows: Vec<SweepRow> = rates
        .iter()
        .enumerate()
        .map(|(ri, &rate)| {
            let chunk = &traces[ri * trials..(ri + 1) * trials];
            let gains: Vec<f64> = chunk.iter().map(|t| t.gain).collect();
            let verdicts: Vec<Verdict> = chunk.iter().map(|t| t.verdict).collect();
            let regular = verdicts.iter().filter(|v| **v == Verdict::Regular).count();
            // a failed run has no bounded gain
            let effective: Vec<f64> = chunk
                .iter()
                .map(|t| {
                    if t.verdict == Verdict::Regular {
                        t.gain
                    } else {
                        f64::INFINITY
                    }
                })
                .collect();
            SweepRow {
                rate,
                median_gain: median(&effective),
                frac_regular: regular as f64 / trials as f64,
                verdicts,
                gains,
            }
        })
        .collect();
    let transition_rate = rows
        .iter()
        .filter(|r| r.frac_regular == 1.0)
        .map(|r| r.rate)
        .min_by(|a, b| a.total_cmp(b));
    let mut by_rate: Vec<&SweepRow> = rows.iter().collect();
    by_rate.sort_by(|a, b| a.rate.total_cmp(&b.rate));
    let gain_inversions = by_rate
        .windows(2)
        .filter(|w| w[1].median_gain > w[0].median_gain)
        .count();
    Ok(RateSweep {
        rows,
        transition_rate,
        gain_inversions,
        audit_passed,
    })
}
