//! Acceptance criteria, one line each. Exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use torus_entropy::cocycle::{singular_spectrum, subadditivity_defect, uniform_points};
use torus_entropy::estimators::{
    estimate_hrst, estimate_htop_separated, estimate_pressure, lyapunov_spectrum,
    unstable_birkhoff_sum, PRESSURE_PREORBIT,
};
use torus_entropy::observer::{
    bit_accounting_audit, rate_sweep, simulate_observer, trial_initial_condition, ChannelConfig,
    Verdict,
};
use torus_entropy::periodic::{enumerate_linear_periodic, gamma_scan, Certificate};
use torus_entropy::{IntMatrix, LiftVector, MapSpec, TorusPoint};

/// log2 of the cat map's expanding eigenvalue (3 + sqrt 5)/2.
fn log2_golden() -> f64 {
    ((3.0 + 5f64.sqrt()) / 2.0).log2()
}

/// log2 of the expanding eigenvalue of DT at the fixed point of the perturbed map.
fn log2_lambda_plus(eps: f64) -> f64 {
    let pe = PI * eps;
    (1.5 + pe + 0.5 * (5.0 + 4.0 * pe * (1.0 + pe)).sqrt()).log2()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn restoration_cat() -> Outcome {
    let r = estimate_hrst(&MapSpec::cat(), 64, &[8, 16, 32, 64]).unwrap();
    let exact = r.closed_form.as_ref().unwrap().value;
    let sampled = r.sampled.value;
    let oracle = log2_golden();
    check(
        (exact - oracle).abs() <= 1e-9 && (sampled - oracle).abs() <= 1e-9,
        format!("exact {exact:.10} sampled {sampled:.10} oracle {oracle:.10}"),
    )
}

fn perturbed_gap() -> Outcome {
    let map = MapSpec::perturbed_cat(0.01).unwrap();
    let hrst = estimate_hrst(&map, 64, &[16, 32, 64, 128, 256])
        .unwrap()
        .sampled
        .value;
    let htop = estimate_htop_separated(&map, 12, 0.05, 400).unwrap().value;
    let lam = log2_lambda_plus(0.01);
    let gap = hrst - htop;
    let hrst_ok = hrst >= lam - 1e-6;
    let htop_ok = htop <= 1.3885 + 0.15;
    let gap_ok = gap >= 0.01;
    check(
        hrst_ok && htop_ok && gap_ok,
        format!(
            "h_rst {hrst:.6} (>= {:.6}: {hrst_ok}) h_top {htop:.6} (<= 1.5385: {htop_ok}) \
             gap {gap:.6} (>= 0.01: {gap_ok}); h_rst - log2 gamma2 = {:.6}",
            lam - 1e-6,
            hrst - log2_golden()
        ),
    )
}

fn gamma_certificate() -> Outcome {
    let p = gamma_scan(&MapSpec::perturbed_cat(0.01).unwrap(), 3, 1e-4).unwrap();
    let z = gamma_scan(&MapSpec::perturbed_cat(0.0).unwrap(), 3, 1e-4).unwrap();
    check(
        p.gamma_spread >= 1e-3
            && p.certificate == Certificate::CertifiesStrictInequality
            && z.gamma_spread <= 1e-12
            && z.certificate == Certificate::ConsistentWithEquality,
        format!(
            "eps 0.01 spread {:.6} {:?}, eps 0 spread {:.1e} {:?}",
            p.gamma_spread, p.certificate, z.gamma_spread, z.certificate
        ),
    )
}

fn periodic_counts() -> Outcome {
    let a = IntMatrix::from_flat(vec![2, 1, 1, 1]).unwrap();
    let map = MapSpec::cat();
    let mut counts = Vec::new();
    let mut misses = 0;
    let mut ok = true;
    for n in 1..=4usize {
        let d = a.pow(n as u32).minus_identity().det().abs();
        let orbits = enumerate_linear_periodic(&a, n, None).unwrap();
        let points: Vec<&TorusPoint> = orbits.iter().flat_map(|o| o.points.iter()).collect();
        for p in &points {
            if map.iterate(p, n).unwrap().distance(p) > 1e-10 {
                ok = false;
            }
        }
        // exhaustive scan of the 1/d lattice for exact fixed points of A^n
        let an = a.pow(n as u32);
        for i in 0..d {
            for j in 0..d {
                let img = an.mul_vec(&[i, j]);
                if img[0].rem_euclid(d) == i && img[1].rem_euclid(d) == j {
                    let hit = points.iter().any(|p| {
                        (p.coords()[0] * d as f64 - i as f64).abs() < 1e-6
                            && (p.coords()[1] * d as f64 - j as f64).abs() < 1e-6
                    });
                    if !hit {
                        misses += 1;
                    }
                }
            }
        }
        ok &= points.len() as i64 == d;
        counts.push((d, points.len()));
    }
    let expected = [1, 5, 16, 45];
    ok &= counts.iter().zip(expected).all(|((d, _), e)| *d == e);
    check(
        ok && misses == 0,
        format!("|det(A^n - I)| vs enumerated {counts:?}, lattice misses {misses}"),
    )
}

fn pressure_line() -> Outcome {
    let map = MapSpec::cat();
    let h = log2_golden();
    let mut dev: f64 = 0.0;
    let mut values = Vec::new();
    for t in [0.0, 0.5, 1.0] {
        let p = estimate_pressure(&map, t, 12, 0.05, 400).unwrap().value;
        dev = dev.max((p - (1.0 - t) * h).abs());
        values.push(p);
    }
    check(
        dev <= 0.15 && values[2].abs() <= 0.15,
        format!(
            "P(0) {:.4} P(0.5) {:.4} P(1) {:.4}, max deviation {dev:.4}",
            values[0], values[1], values[2]
        ),
    )
}

fn rate_transition() -> Outcome {
    let rates = [1.0, 1.2, 1.4, 1.6, 2.0];
    let cfg = ChannelConfig::new(1.0, 1e-4, 2000).unwrap();
    let s = rate_sweep(&MapSpec::cat(), &rates, &cfg, 20, 0).unwrap();
    let frac: Vec<f64> = s.rows.iter().map(|r| r.frac_regular).collect();
    let ok = frac[3] == 1.0
        && frac[4] == 1.0
        && frac[0] == 0.0
        && frac[1] == 0.0
        && (1.2..=1.6).contains(&log2_golden());
    check(
        ok && s.audit_passed,
        format!(
            "fraction regular {frac:?} at {rates:?}, transition {:?}",
            s.transition_rate
        ),
    )
}

fn gain_stability() -> Outcome {
    let mut gains = Vec::new();
    for delta in [1e-3, 1e-4, 1e-5] {
        let cfg = ChannelConfig::new(2.0, delta, 2000).unwrap();
        let (x0, xhat0) = trial_initial_condition(2, delta, 0, 0, 0);
        let tr = simulate_observer(&MapSpec::cat(), &cfg, &x0, &xhat0).unwrap();
        gains.push((tr.gain, tr.verdict));
    }
    let g: Vec<f64> = gains.iter().map(|x| x.0).collect();
    let hi = g.iter().copied().fold(0.0, f64::max);
    let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
    let ok = g.iter().all(|v| v.is_finite())
        && hi <= 2.0 * lo
        && gains.iter().all(|x| x.1 == Verdict::Regular);
    check(ok, format!("G at delta 1e-3/1e-4/1e-5 = {g:.4?}"))
}

fn property_suites() -> Outcome {
    let maps = [MapSpec::cat(), MapSpec::perturbed_cat(0.05).unwrap()];
    let points = uniform_points(2, 1000, 2024);
    let mut worst_subadd = f64::INFINITY;
    let mut subadd_ok = true;
    let mut worst_fd: f64 = 0.0;
    let mut worst_round: f64 = 0.0;
    for map in &maps {
        for (k, x) in points.iter().enumerate() {
            let n = 1 + k % 40;
            let m = 1 + (k / 40) % (64 - n).min(24);
            let d = subadditivity_defect(map, x, n, m).unwrap();
            worst_subadd = worst_subadd.min(d);
            subadd_ok &= d >= -1e-9 * (n + m) as f64;

            worst_round = worst_round.max(map.inverse(&map.eval(x).unwrap()).unwrap().distance(x));
            worst_round = worst_round.max(map.eval(&map.inverse(x).unwrap()).unwrap().distance(x));

            if k < 100 {
                let jac = map.jacobian(x).unwrap();
                for j in 0..2 {
                    let mut plus = x.coords().to_vec();
                    let mut minus = x.coords().to_vec();
                    plus[j] += 1e-6;
                    minus[j] -= 1e-6;
                    let fp = map.eval_lift(&LiftVector(plus)).unwrap();
                    let fm = map.eval_lift(&LiftVector(minus)).unwrap();
                    for i in 0..2 {
                        worst_fd = worst_fd.max(((fp.0[i] - fm.0[i]) / 2e-6 - jac[(i, j)]).abs());
                    }
                }
            }
        }
    }
    let mut worst_pair: f64 = 0.0;
    for x in points.iter().take(50) {
        let s = singular_spectrum(&MapSpec::cat(), x, 64).unwrap();
        worst_pair = worst_pair.max((s.log_alphas[0] + s.log_alphas[1]).abs() / 64.0);
    }
    let mut worst_birkhoff: f64 = 0.0;
    for x in points.iter().take(10) {
        let b = unstable_birkhoff_sum(&maps[1], x, 200, PRESSURE_PREORBIT).unwrap() / 200.0;
        let l = lyapunov_spectrum(&maps[1], x, 200).unwrap().lambda_plus;
        worst_birkhoff = worst_birkhoff.max((b - l).abs());
    }
    let mut audits = true;
    for (k, rate) in [0.8, 1.3, 1.5, 2.0, 2.7].into_iter().enumerate() {
        for map in &maps {
            let cfg = ChannelConfig::new(rate, 1e-4, 500).unwrap();
            let (x0, xhat0) = trial_initial_condition(2, 1e-4, 31, k, 0);
            let tr = simulate_observer(map, &cfg, &x0, &xhat0).unwrap();
            audits &= bit_accounting_audit(&tr, rate) && tr.symmetry_violations == 0;
        }
    }
    let ok = subadd_ok
        && worst_fd <= 1e-5
        && worst_round <= 1e-10
        && worst_pair <= 1e-6
        && worst_birkhoff <= 1e-3
        && audits;
    check(
        ok,
        format!(
            "min subadd defect {worst_subadd:.2e}, fd {worst_fd:.1e}, round trip {worst_round:.1e}, \
             l1+l2 {worst_pair:.1e}, Birkhoff {worst_birkhoff:.1e}, audits {audits}"
        ),
    )
}

fn main() {
    type Criterion = (u32, &'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        (
            1,
            "cat map restoration entropy",
            Duration::from_secs(1),
            restoration_cat,
        ),
        (
            2,
            "perturbed map entropy gap",
            Duration::from_secs(120),
            perturbed_gap,
        ),
        (
            3,
            "gamma-scan certificate",
            Duration::from_secs(30),
            gamma_certificate,
        ),
        (
            4,
            "periodic counting oracle",
            Duration::from_secs(10),
            periodic_counts,
        ),
        (5, "pressure line", Duration::from_secs(300), pressure_line),
        (
            6,
            "data-rate transition",
            Duration::from_secs(120),
            rate_transition,
        ),
        (
            7,
            "regularity gain stability",
            Duration::from_secs(60),
            gain_stability,
        ),
        (
            8,
            "property suites",
            Duration::from_secs(60),
            property_suites,
        ),
    ];
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            check(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let pass = outcome.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {id} {name}: {} [{:.2}s / {}s{}]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", over time" },
        );
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
