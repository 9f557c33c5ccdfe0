use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use std::f64::consts::PI;
use torus_entropy::{LiftVector, MapSpec, TorusPoint};

fn maps() -> Vec<MapSpec> {
    vec![
        MapSpec::cat(),
        MapSpec::perturbed_cat(0.01).unwrap(),
        MapSpec::perturbed_cat(0.05).unwrap(),
        MapSpec::perturbed_cat(0.15).unwrap(),
    ]
}

fn point() -> impl Strategy<Value = TorusPoint> {
    (0.0..1.0f64, 0.0..1.0f64).prop_map(|(x, y)| TorusPoint::wrap(&[x, y]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn inverse_round_trips(x in point()) {
        for map in maps() {
            let fwd = map.inverse(&map.eval(&x).unwrap()).unwrap();
            prop_assert!(fwd.distance(&x) <= 1e-10);
            let back = map.eval(&map.inverse(&x).unwrap()).unwrap();
            prop_assert!(back.distance(&x) <= 1e-10);
        }
    }
}

proptest! {
    #[test]
    fn lift_is_equivariant(x in point(), k in prop::array::uniform2(-3i64..=3)) {
        for map in maps() {
            let base = map.eval_lift(&x.to_lift()).unwrap();
            let shifted = LiftVector(vec![x.coords()[0] + k[0] as f64, x.coords()[1] + k[1] as f64]);
            let moved = map.eval_lift(&shifted).unwrap();
            let ak = map.linear_part().mul_vec(&k);
            for (i, shift) in ak.iter().enumerate() {
                prop_assert!((moved.0[i] - base.0[i] - *shift as f64).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_matches_central_differences(x in point()) {
        let h = 1e-6;
        for map in maps() {
            let jac = map.jacobian(&x).unwrap();
            for j in 0..2 {
                let mut plus = x.coords().to_vec();
                let mut minus = x.coords().to_vec();
                plus[j] += h;
                minus[j] -= h;
                let fp = map.eval_lift(&LiftVector(plus)).unwrap();
                let fm = map.eval_lift(&LiftVector(minus)).unwrap();
                for i in 0..2 {
                    let fd = (fp.0[i] - fm.0[i]) / (2.0 * h);
                    prop_assert!((fd - jac[(i, j)]).abs() <= 1e-5);
                }
            }
        }
    }

    #[test]
    fn monodromy_chain_rule(x in point(), n in 1usize..10, m in 1usize..10) {
        for map in maps() {
            let whole = map.monodromy(&x, n + m).unwrap();
            let split = map.monodromy(&map.iterate(&x, n).unwrap(), m).unwrap() * map.monodromy(&x, n).unwrap();
            let scale = whole.amax();
            prop_assert!((&whole - &split).amax() <= 1e-9 * scale);
        }
    }

    #[test]
    fn jacobian_determinant(x in point()) {
        prop_assert!((MapSpec::cat().jacobian(&x).unwrap().determinant() - 1.0).abs() <= 1e-12);
        for eps in [0.01, 0.05, 0.15] {
            let map = MapSpec::perturbed_cat(eps).unwrap();
            let det = map.jacobian(&x).unwrap().determinant();
            let expected = 1.0 + 2.0 * PI * eps * (2.0 * PI * x.coords()[0]).cos();
            prop_assert!((det - expected).abs() <= 1e-12);
        }
    }
}

#[test]
fn general_dimension_automorphism_round_trips() {
    let a = torus_entropy::IntMatrix::from_flat(vec![2, 1, 0, 1, 1, 1, 0, 1, 1]).unwrap();
    assert_eq!(a.det().abs(), 1);
    let map = MapSpec::linear(a).unwrap();
    for p in torus_entropy::cocycle::uniform_points(3, 200, 11) {
        let back = map.inverse(&map.eval(&p).unwrap()).unwrap();
        assert!(back.distance(&p) <= 1e-10);
        assert_relative_eq!(
            map.jacobian(&p).unwrap().determinant().abs(),
            1.0,
            epsilon = 1e-12
        );
    }
    let id: DMatrix<f64> = map.monodromy(&TorusPoint::origin(3), 1).unwrap();
    assert_eq!(id, map.linear_part().to_f64());
}
