use fracsmooth::smoothness::*;
use fracsmooth::{Error, MarketModel, Payoff};

fn gbm() -> MarketModel {
    MarketModel::standard()
}

fn grid() -> Vec<f64> {
    default_t_grid(1.0, 24)
}

#[test]
fn binary_initial_variance() {
    let c = conditional_l2_decay(&Payoff::binary(1.0).unwrap(), &gbm(), &[0.0]).unwrap();
    // p (1 - p) with p = Φ(-1/2)
    let exact = 0.213_342_125_922_897_03;
    assert!((c.decay[0].powi(2) - exact).abs() < 1e-9, "{}", c.decay[0].powi(2));
}

#[test]
fn call_initial_std_dev() {
    let c = conditional_l2_decay(&Payoff::call(1.0).unwrap(), &gbm(), &[0.0]).unwrap();
    let exact = 1.315_662_147_109_251_1_f64.sqrt();
    assert!((c.decay[0] - exact).abs() < 1e-9 * exact, "{}", c.decay[0]);
}

#[test]
fn affine_decay_is_lognormal_variance_gap() {
    let c1 = -1.7;
    let p = Payoff::affine(0.4, c1).unwrap();
    let ts = [0.0, 0.3, 0.9, 0.999, 1.0 - 1e-6];
    let c = conditional_l2_decay(&p, &gbm(), &ts).unwrap();
    for (t, d) in ts.iter().zip(&c.decay) {
        let exact = c1 * c1 * (1f64.exp() - t.exp());
        assert!((d * d - exact).abs() <= 1e-9 * exact, "t={t}: {} vs {exact}", d * d);
        // between c1² (e - 1) and c1² e
        let r = d * d / (1.0 - t) / (c1 * c1);
        assert!((1.0f64.exp_m1() - 1e-9..=1f64.exp() + 1e-9).contains(&r), "{r}");
    }
}

#[test]
fn decay_is_non_increasing_and_vanishes() {
    for p in [Payoff::binary(1.0).unwrap(), Payoff::call(1.0).unwrap(), Payoff::power_holder(1.0, 0.25).unwrap()] {
        let c = conditional_l2_decay(&p, &gbm(), &grid()).unwrap();
        for w in c.decay.windows(2) {
            assert!(w[1] <= w[0] + 1e-8, "{}: {:?}", p.kind_name(), w);
        }
        // at T - t = 2^{-24} even the roughest payoff (D ≍ (T - t)^{1/4}) is far below D(0)
        assert!(*c.decay.last().unwrap() < 0.05 * c.decay[0]);
    }
}

#[test]
fn theta_estimates() {
    let cases = [
        (Payoff::binary(1.0).unwrap(), 0.42, 0.58),
        (Payoff::call(1.0).unwrap(), 0.9, 1.0),
        (Payoff::power_holder(1.0, 0.25).unwrap(), 0.67, 0.83),
    ];
    for (p, lo, hi) in cases {
        let est = estimate_theta_sup(&conditional_l2_decay(&p, &gbm(), &grid()).unwrap()).unwrap();
        assert!((lo..=hi).contains(&est.theta), "{}: {}", p.kind_name(), est.theta);
    }
}

#[test]
fn growth_exponents() {
    let g = grid();
    let b = Payoff::binary(1.0).unwrap();
    let e = fit_exponent(&g, 1.0, &grad_growth_curve(&b, &gbm(), &g).unwrap()).unwrap();
    assert!((-0.58..=-0.42).contains(&e.exponent), "{}", e.exponent);
    let e = fit_exponent(&g, 1.0, &hessian_growth_curve(&b, &gbm(), &g).unwrap()).unwrap();
    assert!((-1.58..=-1.42).contains(&e.exponent), "{}", e.exponent);
    let pw = Payoff::power_holder(1.0, 0.25).unwrap();
    let e = fit_exponent(&g, 1.0, &hessian_growth_curve(&pw, &gbm(), &g).unwrap()).unwrap();
    assert!((e.exponent + 1.25).abs() <= 0.08, "{}", e.exponent);
}

#[test]
fn deep_in_the_money_call_gradient_tracks_second_moment() {
    // Δ ≈ 1, so E|s Δ|² ≈ E S_t² = s0² e^{σ² t}: flat after normalization
    let m = MarketModel::new(100.0, 1.0, 0.0, 1.0).unwrap();
    let g = [0.0, 0.25, 0.5, 0.75, 0.99];
    let curve = grad_growth_curve(&Payoff::call(1.0).unwrap(), &m, &g).unwrap();
    for (t, v) in g.iter().zip(&curve) {
        let r = v / (1e4 * t.exp());
        assert!((r - 1.0).abs() < 1e-4, "t={t}: {r}");
    }
}

#[test]
fn constant_payoff_curves_vanish() {
    let p = Payoff::constant(2.5).unwrap();
    let g = grid();
    let c = smoothness_curves(&p, &gbm(), &g, &SmoothnessConfig::default()).unwrap();
    assert!(c.decay.iter().chain(&c.grad_sq).chain(&c.hess_sq).all(|&v| v == 0.0));
    assert_eq!(estimate_theta_sup(&c.decay_curve()).unwrap_err(), Error::InfiniteSmoothness);
    let b = b22_integral(&p, &gbm(), 0.5, 1e-6).unwrap();
    assert_eq!(b.value, 0.0);
    assert!(b.finite);
}

#[test]
fn b22_verdicts_for_binary() {
    let b = Payoff::binary(1.0).unwrap();
    let tame = b22_integral(&b, &gbm(), 0.4, 2f64.powi(-30)).unwrap();
    assert!(tame.finite, "ratio {}", tame.ratio);
    let wild = b22_integral(&b, &gbm(), 0.6, 2f64.powi(-30)).unwrap();
    assert!(!wild.finite, "ratio {}", wild.ratio);
    // D² ≍ sqrt(T - t) makes each dyadic piece grow like 2^{0.1 j}
    assert!((wild.ratio - 2f64.powf(0.1)).abs() < 0.02, "{}", wild.ratio);
}

#[test]
fn exponent_fit_needs_enough_data() {
    assert!(matches!(fit_exponent(&[0.0, 0.5], 1.0, &[1.0, 0.5]), Err(Error::InsufficientData(_))));
    let g = default_t_grid(1.0, 8);
    assert!(matches!(fit_exponent(&g, 1.0, &vec![1.0; g.len()]), Err(Error::InsufficientData(_))));
}

#[test]
fn curves_csv() {
    let c = smoothness_curves(&Payoff::call(1.0).unwrap(), &gbm(), &[0.0, 0.5], &SmoothnessConfig::default()).unwrap();
    let mut buf = Vec::new();
    c.write_csv(&mut buf, &[]).unwrap();
    let s = String::from_utf8(buf).unwrap();
    assert!(s.starts_with("t,T_minus_t,decay,grad_sq,hess_sq\n"));
    assert_eq!(s.lines().count(), 3);
}
