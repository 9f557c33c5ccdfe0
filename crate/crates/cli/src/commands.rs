use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};
use torus_entropy::cocycle::{subadditivity_defect, uniform_points};
use torus_entropy::estimators::{
    benettin_exponents, estimate_hrst, estimate_htop_separated, estimate_pressure,
    lyapunov_spectrum,
};
use torus_entropy::observer::{
    bit_accounting_audit, rate_sweep, simulate_observer, trial_initial_condition, ChannelConfig,
};
use torus_entropy::periodic::{gamma_scan, DEFAULT_SPREAD_THRESHOLD};
use torus_entropy::{MapSpec, TorusPoint};

use crate::config::{join, parse_list, parse_point, RunConfig};
use crate::CliError;

pub struct Report {
    pub config: RunConfig,
    pub result: Value,
    pub csv: String,
    /// Extra CSV written next to a JSON report, with its file suffix.
    pub sidecar: Option<(&'static str, String)>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn e9(x: f64) -> String {
    format!("{x:.8e}")
}

fn keyed(key: &'static str) -> impl Fn(torus_entropy::Error) -> CliError {
    move |e| CliError::library(key, e)
}

fn base_point(
    cfg: &RunConfig,
    echo: &mut RunConfig,
    map: &MapSpec,
    key: &'static str,
    raw: &Option<String>,
) -> Result<TorusPoint, CliError> {
    let p = match raw {
        Some(s) => parse_point(key, s, map.dim())?,
        None => uniform_points(map.dim(), 1, cfg.seed.unwrap_or(0)).remove(0),
    };
    echo.seed = Some(cfg.seed.unwrap_or(0));
    Ok(p)
}

pub fn hrst(cfg: &RunConfig) -> Result<Report, CliError> {
    let (mut echo, map) = cfg.map_only()?;
    let grid = cfg.grid.unwrap_or(64);
    let schedule: Vec<usize> =
        parse_list("schedule", cfg.schedule.as_deref().unwrap_or("8,16,32,64"))?;
    echo.grid = Some(grid);
    echo.schedule = Some(join(&schedule));
    let r = estimate_hrst(&map, grid, &schedule).map_err(keyed("schedule"))?;
    let mut curve = String::from("n,rate_bits,argmax_point\n");
    for ((n, v), p) in r
        .growth
        .horizon_schedule
        .iter()
        .zip(&r.growth.per_n_curve)
        .zip(&r.growth.per_n_argmax)
    {
        let pt: Vec<String> = p.coords().iter().map(|c| e9(*c)).collect();
        let _ = writeln!(curve, "{n},{},{}", e9(*v), pt.join(" "));
    }
    Ok(Report {
        config: echo,
        result: json!({
            "estimate": to_value(r.headline()),
            "sampled": to_value(&r.sampled),
            "closed_form": to_value(&r.closed_form),
            "curve": to_value(&r.growth),
        }),
        csv: curve.clone(),
        sidecar: Some(("curve.csv", curve)),
    })
}

pub fn htop(cfg: &RunConfig) -> Result<Report, CliError> {
    let (mut echo, map) = cfg.map_only()?;
    let n = cfg.n.unwrap_or(12);
    let epsilon = cfg.epsilon.unwrap_or(0.05);
    let lattice = cfg.lattice.unwrap_or(400);
    echo.n = Some(n);
    echo.epsilon = Some(epsilon);
    echo.lattice = Some(lattice);
    let est = estimate_htop_separated(&map, n, epsilon, lattice).map_err(keyed("epsilon"))?;
    let csv = format!(
        "n,epsilon,lattice,value_bits\n{n},{},{lattice},{}\n",
        e9(epsilon),
        e9(est.value)
    );
    Ok(Report {
        config: echo,
        result: json!({ "estimate": to_value(&est) }),
        csv,
        sidecar: None,
    })
}

pub fn lyap(cfg: &RunConfig) -> Result<Report, CliError> {
    let (mut echo, map) = cfg.map_only()?;
    let horizon = cfg.horizon.unwrap_or(64);
    echo.horizon = Some(horizon);
    let x = base_point(cfg, &mut echo, &map, "point", &cfg.point)?;
    echo.point = Some(join(x.coords()));
    let spectrum = lyapunov_spectrum(&map, &x, horizon).map_err(keyed("horizon"))?;
    let qr =
        benettin_exponents(&map, &x, horizon, echo.seed.unwrap_or(0)).map_err(keyed("horizon"))?;
    let mut csv = String::from("i,exponent_svd,exponent_qr\n");
    for (i, (a, b)) in spectrum.exponents.iter().zip(&qr).enumerate() {
        let _ = writeln!(csv, "{i},{},{}", e9(*a), e9(*b));
    }
    Ok(Report {
        config: echo,
        result: json!({
            "spectrum": to_value(&spectrum),
            "qr_exponents": qr,
            "exponent_sum": spectrum.exponents.iter().sum::<f64>(),
        }),
        csv,
        sidecar: None,
    })
}

pub fn pressure(cfg: &RunConfig) -> Result<Report, CliError> {
    let (mut echo, map) = cfg.map_only()?;
    let ts: Vec<f64> = parse_list("t", cfg.t.as_deref().unwrap_or("0,0.5,1"))?;
    let n = cfg.n.unwrap_or(12);
    let epsilon = cfg.epsilon.unwrap_or(0.05);
    let lattice = cfg.lattice.unwrap_or(400);
    echo.t = Some(join(&ts));
    echo.n = Some(n);
    echo.epsilon = Some(epsilon);
    echo.lattice = Some(lattice);
    let estimates = ts
        .iter()
        .map(|&t| estimate_pressure(&map, t, n, epsilon, lattice).map_err(keyed("epsilon")))
        .collect::<Result<Vec<_>, _>>()?;
    let mut csv = String::from("t,value_bits\n");
    for p in &estimates {
        let _ = writeln!(csv, "{},{}", e9(p.t), e9(p.value));
    }
    let fit = if ts.len() >= 2 {
        let k = ts.len() as f64;
        let mt = ts.iter().sum::<f64>() / k;
        let mp = estimates.iter().map(|p| p.value).sum::<f64>() / k;
        let sxx: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
        let sxy: f64 = ts
            .iter()
            .zip(&estimates)
            .map(|(t, p)| (t - mt) * (p.value - mp))
            .sum();
        let slope = sxy / sxx;
        json!({ "slope": slope, "intercept": mp - slope * mt })
    } else {
        Value::Null
    };
    Ok(Report {
        config: echo,
        result: json!({ "estimates": to_value(&estimates), "linear_fit": fit }),
        csv,
        sidecar: None,
    })
}

pub fn gamma(cfg: &RunConfig) -> Result<Report, CliError> {
    let (mut echo, map) = cfg.map_only()?;
    let max_period = cfg.max_period.unwrap_or(3);
    let threshold = cfg.threshold.unwrap_or(DEFAULT_SPREAD_THRESHOLD);
    echo.max_period = Some(max_period);
    echo.threshold = Some(threshold);
    let r = gamma_scan(&map, max_period, threshold).map_err(keyed("max-period"))?;
    Ok(Report {
        config: echo,
        csv: r.to_csv(),
        result: to_value(&r),
        sidecar: None,
    })
}

fn channel(cfg: &RunConfig, echo: &mut RunConfig, rate: f64) -> Result<ChannelConfig, CliError> {
    let delta = cfg.delta.unwrap_or(1e-4);
    let steps = cfg.steps.unwrap_or(2000);
    echo.delta = Some(delta);
    echo.steps = Some(steps);
    echo.seed = Some(cfg.seed.unwrap_or(0));
    let key = if rate.is_nan() || rate <= 0.0 {
        "rate"
    } else if steps == 0 {
        "steps"
    } else {
        "delta"
    };
    ChannelConfig::new(rate, delta, steps).map_err(keyed(key))
}

pub fn observe(cfg: &RunConfig) -> Result<Report, CliError> {
    let (mut echo, map) = cfg.map_only()?;
    let rate = cfg.rate.unwrap_or(2.0);
    echo.rate = Some(rate);
    let ch = channel(cfg, &mut echo, rate)?;
    let (dx, dxh) = trial_initial_condition(map.dim(), ch.delta, cfg.seed.unwrap_or(0), 0, 0);
    let x0 = match &cfg.x0 {
        Some(s) => parse_point("x0", s, map.dim())?,
        None => dx,
    };
    let xhat0 = match &cfg.xhat0 {
        Some(s) => parse_point("xhat0", s, map.dim())?,
        None if cfg.x0.is_some() => x0.clone(),
        None => dxh,
    };
    echo.x0 = Some(join(x0.coords()));
    echo.xhat0 = Some(join(xhat0.coords()));
    let tr = simulate_observer(&map, &ch, &x0, &xhat0).map_err(keyed("xhat0"))?;
    let csv = tr.to_csv();
    let last = tr.steps.last().expect("trace has the initial step");
    Ok(Report {
        config: echo,
        result: json!({
            "verdict": tr.verdict,
            "gain": tr.gain,
            "steps_completed": last.t,
            "final_error": last.error,
            "final_box_radius": last.box_radius,
            "total_bits": tr.total_bits(),
            "bit_accounting_audit": bit_accounting_audit(&tr, rate),
            "symmetry_violations": tr.symmetry_violations,
        }),
        csv: csv.clone(),
        sidecar: Some(("trace.csv", csv)),
    })
}

pub fn sweep(cfg: &RunConfig) -> Result<Report, CliError> {
    let (mut echo, map) = cfg.map_only()?;
    let rates: Vec<f64> = parse_list(
        "rates",
        cfg.rates.as_deref().unwrap_or("1.0,1.2,1.4,1.6,2.0"),
    )?;
    let trials = cfg.trials.unwrap_or(20);
    echo.rates = Some(join(&rates));
    echo.trials = Some(trials);
    let template = channel(cfg, &mut echo, rates[0])?;
    let s = rate_sweep(&map, &rates, &template, trials, echo.seed.unwrap_or(0))
        .map_err(keyed("rates"))?;
    Ok(Report {
        config: echo,
        csv: s.to_csv(),
        result: to_value(&s),
        sidecar: None,
    })
}

pub fn subadd(cfg: &RunConfig) -> Result<Report, CliError> {
    use rayon::prelude::*;
    let (mut echo, map) = cfg.map_only()?;
    let samples = cfg.samples.unwrap_or(1000);
    let horizon = cfg.horizon.unwrap_or(64);
    let seed = cfg.seed.unwrap_or(0);
    echo.samples = Some(samples);
    echo.horizon = Some(horizon);
    echo.seed = Some(seed);
    if samples == 0 {
        return Err(CliError::config("samples", "must be >= 1"));
    }
    if !(2..=torus_entropy::torus::MAX_RAW_MONODROMY).contains(&horizon) {
        return Err(CliError::config(
            "horizon",
            format!(
                "must lie in [2, {}]",
                torus_entropy::torus::MAX_RAW_MONODROMY
            ),
        ));
    }
    let points = uniform_points(map.dim(), samples, seed);
    let half = horizon / 2;
    // n, m in [1, horizon/2] from a splitmix-style hash of the sample index
    let lengths: Vec<(usize, usize)> = (0..samples as u64)
        .map(|i| {
            let mut z = seed ^ i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            (
                1 + (z % half as u64) as usize,
                1 + ((z >> 32) % half as u64) as usize,
            )
        })
        .collect();
    let defects: Vec<f64> = points
        .par_iter()
        .zip(&lengths)
        .map(|(x, &(n, m))| subadditivity_defect(&map, x, n, m))
        .collect::<Result<_, _>>()
        .map_err(keyed("horizon"))?;
    let mut csv = String::from("x0,x1,n,m,defect\n");
    let mut min_defect = f64::INFINITY;
    let mut violations = 0usize;
    for ((x, &(n, m)), &d) in points.iter().zip(&lengths).zip(&defects) {
        min_defect = min_defect.min(d);
        if d < -1e-9 * (n + m) as f64 {
            violations += 1;
        }
        let c = x.coords();
        let _ = writeln!(
            csv,
            "{},{},{n},{m},{}",
            e9(c[0]),
            e9(c.get(1).copied().unwrap_or(0.0)),
            e9(d)
        );
    }
    Ok(Report {
        config: echo,
        result: json!({
            "samples": samples,
            "min_defect": min_defect,
            "violations": violations,
            "tolerance": "defect >= -1e-9 * (n + m)",
        }),
        csv,
        sidecar: None,
    })
}
