use esteq::penalty::{soft_threshold, Penalty};
use proptest::prelude::*;

fn coordinate_penalties(lam: f64, a: f64) -> Vec<Penalty<f64>> {
    vec![
        Penalty::lasso(vec![lam]).unwrap(),
        Penalty::elastic_net(vec![lam], 0.3).unwrap(),
        Penalty::scad(vec![lam], 2.0 + a).unwrap(),
        Penalty::mcp(vec![lam], 0.5 + a).unwrap(),
        Penalty::lq(vec![lam], 1.0).unwrap(),
    ]
}

fn value1(p: &Penalty<f64>, x: f64) -> f64 {
    p.value(&[x]).unwrap()
}

// Brute-force minimum of (u − z)²/(2t) + p(u) over a 1e-4 grid.
fn grid_min(p: &Penalty<f64>, z: f64, t: f64) -> f64 {
    let lo = -z.abs() - 1.0;
    let steps = ((2.0 * (z.abs() + 1.0)) / 1e-4) as usize;
    (0..=steps)
        .map(|i| {
            let u = lo + i as f64 * 1e-4;
            (u - z).powi(2) / (2.0 * t) + value1(p, u)
        })
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn zero_box_covers_lambda(lam in 0.0f64..3.0, a in 0.1f64..5.0) {
        for p in coordinate_penalties(lam, a) {
            let r = p.subdifferential(&[0.0]).unwrap();
            let (lo, hi) = r.interval(0);
            prop_assert!(lo <= -lam && hi >= lam, "{}: [{lo}, {hi}]", p.kind().name());
        }
        let g = Penalty::group_lasso(vec![vec![0, 1], vec![2]], vec![lam, 2.0 * lam], 3).unwrap();
        let r = g.subdifferential(&[0.0, 0.0, 1.0]).unwrap();
        prop_assert_eq!(r.interval(0), (-lam, lam));
        prop_assert_eq!(r.interval(1), (-lam, lam));
        prop_assert!(r.is_singleton(2));
    }

    #[test]
    fn folded_penalties_flatten(lam in 0.01f64..2.0, a in 0.1f64..5.0, extra in 0.0f64..10.0) {
        let scad = Penalty::scad(vec![lam], 2.0 + a).unwrap();
        let mcp = Penalty::mcp(vec![lam], 0.5 + a).unwrap();
        for (p, aa) in [(scad, 2.0 + a), (mcp, 0.5 + a)] {
            let t = aa * lam * (1.0 + 1e-9) + extra;
            prop_assert_eq!(p.slope(0, t), 0.0);
            prop_assert_eq!(p.derivative(&[t]).unwrap()[0], 0.0);
            prop_assert_eq!(p.derivative(&[-t]).unwrap()[0], 0.0);
            prop_assert!((value1(&p, t) - value1(&p, aa * lam * (1.0 + 1e-9))).abs() < 1e-9);
        }
    }

    #[test]
    fn subgradient_matches_central_difference(lam in 0.01f64..2.0, a in 0.1f64..5.0, x in -6.0f64..6.0) {
        prop_assume!(x.abs() > 1e-3);
        for p in coordinate_penalties(lam, a) {
            // skip kinks of SCAD / MCP
            let h = 1e-6;
            let fd = (value1(&p, x + h) - value1(&p, x - h)) / (2.0 * h);
            let g = p.derivative(&[x]).unwrap()[0];
            let kink = [lam, (2.0 + a) * lam, (0.5 + a) * lam].iter().any(|k| (x.abs() - k).abs() < 1e-4);
            if !kink {
                prop_assert!((fd - g).abs() < 1e-5, "{} at {x}: fd {fd} vs {g}", p.kind().name());
            }
        }
    }

    #[test]
    fn threshold_is_stationary_and_optimal(lam in 0.0f64..2.0, a in 0.1f64..4.0, z in -4.0f64..4.0, t in 0.05f64..1.0) {
        for p in coordinate_penalties(lam, a) {
            let mu = p.weak_convexity_mu().unwrap();
            prop_assume!(mu * t < 1.0);
            let v = p.scalar_threshold(z, t, 0, &[0.0]).unwrap();
            let r = p.subdifferential(&[v]).unwrap();
            prop_assert!(r.distance(0, (z - v) / t) <= 1e-9, "{}: z={z} v={v}", p.kind().name());
            let hv = (v - z).powi(2) / (2.0 * t) + value1(&p, v);
            prop_assert!(hv <= grid_min(&p, z, t) + 1e-6, "{}: not a minimiser", p.kind().name());
        }
    }

    #[test]
    fn penalties_are_even_and_vanish_at_zero(lam in 0.0f64..2.0, a in 0.1f64..4.0, x in -5.0f64..5.0) {
        for p in coordinate_penalties(lam, a) {
            prop_assert_eq!(value1(&p, 0.0), 0.0);
            prop_assert!(value1(&p, x) >= 0.0);
            prop_assert!((value1(&p, x) - value1(&p, -x)).abs() < 1e-12);
        }
    }
}

#[test]
fn soft_threshold_values() {
    assert_eq!(soft_threshold(3.0, 1.0), 2.0);
    assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    assert_eq!(soft_threshold(0.5, 1.0), 0.0);
}

#[test]
fn lq_below_one_has_unbounded_box_at_zero() {
    let p = Penalty::lq(vec![0.5], 0.5).unwrap();
    let r = p.subdifferential(&[0.0]).unwrap();
    assert_eq!(r.interval(0), (f64::NEG_INFINITY, f64::INFINITY));
    assert!(!p.is_solvable());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    // monotonicity of sampled subgradients: μ = 0 for the convex penalties,
    // −μ‖θ′ − θ‖² (no 1/2) for the folded ones
    #[test]
    fn subgradient_monotonicity(
        lam in 0.0f64..2.0,
        a in 0.1f64..4.0,
        x in -8.0f64..8.0,
        y in -8.0f64..8.0,
        u in 0.0f64..1.0,
        v in 0.0f64..1.0,
        zero_x in proptest::bool::weighted(0.2),
    ) {
        let x = if zero_x { 0.0 } else { x };
        for p in coordinate_penalties(lam, a) {
            let pick = |t: f64, w: f64| {
                let (lo, hi) = p.subdifferential(&[t]).unwrap().interval(0);
                lo + (hi - lo) * w
            };
            let inner = (y - x) * (pick(y, v) - pick(x, u));
            let mu = p.weak_convexity_mu().unwrap();
            let bound = if mu == 0.0 { 0.0 } else { -mu * (y - x).powi(2) };
            prop_assert!(inner >= bound - 1e-10, "{}: {inner} < {bound}", p.kind().name());
        }
    }
}
