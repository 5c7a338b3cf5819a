use fracsmooth::chaos::*;
use fracsmooth::normal::pdf as phi;
use fracsmooth::Error;

#[test]
fn hermite_values() {
    assert_eq!(hermite(0, 0.7), 1.0);
    assert_eq!(hermite(1, 0.7), 0.7);
    assert!((hermite(2, 0.0) + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    // H_3 = (x³ - 3x) / sqrt 6
    let x = 1.3_f64;
    assert!((hermite(3, x) - (x.powi(3) - 3.0 * x) / 6f64.sqrt()).abs() < 1e-15);
}

#[test]
fn orthonormality_up_to_thirty() {
    let rule = fracsmooth::quadrature::GaussianRule::hermite(64);
    let mut hs = Vec::new();
    for m in 0..=30 {
        for n in 0..=m {
            let mut s = 0.0;
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                hermite_all(30, *x, &mut hs);
                s += w * hs[m] * hs[n];
            }
            let target = if m == n { 1.0 } else { 0.0 };
            assert!((s - target).abs() < 1e-10, "({m},{n}): {s}");
        }
    }
}

#[test]
fn projections_of_polynomials() {
    let e = project(|x| x, 6, &ProjectionRule::hermite(40)).unwrap();
    for (k, a) in e.alpha.iter().enumerate() {
        let target = if k == 1 { 1.0 } else { 0.0 };
        assert!((a - target).abs() < 1e-12);
    }
    let e = project(|x| x * x, 6, &ProjectionRule::hermite(40)).unwrap();
    assert!((e.alpha[0] - 1.0).abs() < 1e-12);
    assert!((e.alpha[2] - 2f64.sqrt()).abs() < 1e-12);
    assert!(e.alpha.iter().enumerate().all(|(k, a)| k == 0 || k == 2 || a.abs() < 1e-12));
}

#[test]
fn indicator_projection_matches_parts_formula() {
    let e = project(|x| if x >= 0.0 { 1.0 } else { 0.0 }, 40, &ProjectionRule::split_at(&[0.0])).unwrap();
    assert!((e.alpha[0] - 0.5).abs() < 1e-12);
    for k in 1..=40 {
        let oracle = phi(0.0) * hermite(k - 1, 0.0) / (k as f64).sqrt();
        assert!((e.alpha[k] - oracle).abs() < 1e-12, "k={k}");
    }
    let closed = ChaosExpansion::indicator(0.0, 40);
    assert!((closed.norm_sq() - 0.5).abs() < 1e-12);
}

#[test]
fn d12_examples() {
    let e = ChaosExpansion::from_coefficients(vec![0.0, 1.0]);
    assert!((d12_norm(&e).value - 2f64.sqrt()).abs() < 1e-15);
    let c = ChaosExpansion::from_coefficients(vec![-3.5]);
    assert_eq!(d12_norm(&c).value, 3.5);
    let orders: Vec<usize> = (5..=12).map(|j| 1 << j).collect();
    let d = d12_divergence(&Indicator { threshold: 0.0 }, &orders).unwrap();
    assert!(d.divergent);
    let smooth = d12_divergence(&ChaosExpansion::from_coefficients(vec![0.3, 1.0, 0.5]), &orders).unwrap();
    assert!(!smooth.divergent);
}

#[test]
fn besov_examples() {
    let grid = unit_interval_grid(20);
    let lin = ChaosExpansion::from_coefficients(vec![0.0, 1.0]);
    let c = besov_criterion(&lin, 0.3, &grid, &BesovConfig::default()).unwrap();
    assert!(c.bounded);
    assert!(c.points.iter().all(|p| p.phi <= 1.0 + 1e-15));

    let ind = Indicator { threshold: 0.0 };
    let half = besov_criterion(&ind, 0.5, &grid, &BesovConfig::default()).unwrap();
    assert!(half.bounded, "growth {}", half.last_decade_growth);
    let seven = besov_criterion(&ind, 0.7, &grid, &BesovConfig::default()).unwrap();
    assert!(!seven.bounded);
    let at = |t: f64| seven.points.iter().find(|p| p.t == t).unwrap().phi;
    assert!(at(1.0 - 2f64.powi(-20)) / at(0.5) > 10.0);
}

#[test]
fn besov_rejects_bad_inputs() {
    let ind = Indicator { threshold: 0.0 };
    assert!(matches!(besov_criterion(&ind, 1.0, &[0.5], &BesovConfig::default()), Err(Error::InvalidParameter { .. })));
    assert!(besov_criterion(&ind, 0.5, &[1.0], &BesovConfig::default()).is_err());
    let tight = BesovConfig {
        max_order: 512,
        ..BesovConfig::default()
    };
    assert!(matches!(besov_criterion(&ind, 0.5, &[1.0 - 1e-6], &tight), Err(Error::Convergence(_))));
}

#[test]
fn decay_examples() {
    let e = ChaosExpansion::indicator(0.0, 4096);
    let d0 = decay_from_chaos(&e, 0.0).unwrap();
    assert!((d0.value - 0.5).abs() < 1e-12);
    let late = decay_from_chaos(&e, 1.0 - 1e-12).unwrap();
    assert!(late.lower < 1e-2);
    // exact value of E Var(1{W_1 ≥ 0} | W_{1/2}) is 1/6; nested MC with
    // 10^7 paths gives 0.408125 ± 7.6e-5 for the root
    let mid = decay_from_chaos(&e, 0.5).unwrap();
    assert!((mid.value - 0.408_248_290_463_863).abs() < 1e-10, "{}", mid.value);
    assert!((mid.value - 0.408_125).abs() < 3.0 * 7.6e-5);
    assert!(decay_from_chaos(&e, 1.0).is_err());
}
