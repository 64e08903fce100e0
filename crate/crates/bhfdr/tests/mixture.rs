use approx::assert_abs_diff_eq;
use bhfdr::mixture::AltComponent;
use bhfdr::{MixtureModel, TestDist};
use proptest::prelude::*;

fn model(r: f64, df: f64, ncp: f64) -> MixtureModel {
    MixtureModel::new(r, TestDist::folded_t(df, 0.0).unwrap(), TestDist::folded_t(df, ncp).unwrap()).unwrap()
}

/// Five-point central difference.
fn richardson(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

#[test]
fn endpoints() {
    let mm = model(0.1, 18.0, 3.0);
    assert_eq!(mm.g_cdf(0.0).unwrap(), 0.0);
    assert_abs_diff_eq!(mm.g_cdf(1.0).unwrap(), 1.0, epsilon = 1e-14);
    assert!(mm.g_cdf(-0.1).is_err());
    assert!(mm.g_cdf(1.1).is_err());
}

#[test]
fn mixture_identity_from_components() {
    // G(u) = (1 − r) u + r F̄_A(F̄₀⁻¹(u)), assembled by hand from the laws.
    let (r, df, ncp) = (0.05, 28.0, 2.4);
    let null = TestDist::folded_t(df, 0.0).unwrap();
    let alt = TestDist::folded_t(df, ncp).unwrap();
    let mm = model(r, df, ncp);
    for &u in &[1e-6, 1e-4, 0.003, 0.05, 0.2, 0.5, 0.9] {
        let x = null.inv_ccdf(u).unwrap();
        let want = (1.0 - r) * u + r * alt.ccdf(x).unwrap();
        assert_abs_diff_eq!(mm.g_cdf(u).unwrap(), want, epsilon = 1e-13);
        assert_abs_diff_eq!(mm.h(u), alt.ccdf(x).unwrap(), epsilon = 1e-13);
        assert_abs_diff_eq!(mm.g0(u).unwrap(), (1.0 - r) * u, epsilon = 1e-15);
        assert_abs_diff_eq!(mm.g0(u).unwrap() + mm.g1(u).unwrap(), mm.g_cdf(u).unwrap(), epsilon = 1e-15);
    }
}

#[test]
fn derivative_matches_richardson() {
    let mm = model(0.2, 10.0, 2.0);
    for &u in &[1e-3f64, 0.01, 0.05, 0.3, 0.7] {
        let h = 1e-3 * u.min(1.0 - u);
        let num = richardson(|v| mm.g_cdf(v).unwrap(), u, h);
        let d = mm.g_deriv(u).unwrap();
        assert!((d - num).abs() <= 1e-7 * d.abs().max(1.0), "u = {u}: {d} vs {num}");
    }
    assert!(mm.g_deriv(0.0).is_err());
    assert!(mm.g_deriv(1.0).is_err());
}

#[test]
fn likelihood_ratio_is_pdf_ratio() {
    let (df, ncp) = (14.0, 1.7);
    let null = TestDist::folded_t(df, 0.0).unwrap();
    let alt = TestDist::folded_t(df, ncp).unwrap();
    let mm = model(0.3, df, ncp);
    for &u in &[0.001, 0.04, 0.5] {
        let x = mm.critical_value(u);
        assert_abs_diff_eq!(x, null.inv_ccdf(u).unwrap(), epsilon = 1e-12);
        let want = alt.pdf(x).unwrap() / null.pdf(x).unwrap();
        assert!((mm.likelihood_ratio(u) - want).abs() <= 1e-10 * want);
    }
}

#[test]
fn finite_mixture_alternative() {
    let null = TestDist::folded_normal(0.0).unwrap();
    let a = TestDist::folded_normal(1.5).unwrap();
    let b = TestDist::folded_normal(3.5).unwrap();
    let comps = vec![AltComponent { weight: 0.3, dist: a }, AltComponent { weight: 0.7, dist: b }];
    let mm = MixtureModel::with_components(0.1, null, comps).unwrap();
    // Mixtures of monotone-likelihood-ratio components stay concave.
    assert!(mm.warning().is_none());
    for &u in &[0.001, 0.02, 0.4] {
        let x = null.inv_ccdf(u).unwrap();
        let h = 0.3 * a.ccdf(x).unwrap() + 0.7 * b.ccdf(x).unwrap();
        assert_abs_diff_eq!(mm.h(u), h, epsilon = 1e-14);
    }
}

#[test]
fn constructor_rejects_bad_input() {
    let null = TestDist::folded_t(10.0, 0.0).unwrap();
    let alt = TestDist::folded_t(10.0, 2.0).unwrap();
    assert!(MixtureModel::new(0.0, null, alt).is_err());
    assert!(MixtureModel::new(1.0, null, alt).is_err());
    assert!(MixtureModel::new(0.1, alt, alt).is_err());
    assert!(MixtureModel::new(0.1, null, null).is_err());
    let other_df = TestDist::folded_t(12.0, 2.0).unwrap();
    assert!(MixtureModel::new(0.1, null, other_df).is_err());
    let bad_weights = vec![AltComponent { weight: 0.5, dist: alt }, AltComponent { weight: 0.4, dist: alt }];
    assert!(MixtureModel::with_components(0.1, null, bad_weights).is_err());
    assert!(MixtureModel::with_components(0.1, null, vec![]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn g_is_increasing_and_concave(r in 0.01f64..0.9, df in 4.0f64..200.0, ncp in 0.2f64..6.0) {
        let mm = model(r, df, ncp);
        prop_assert!(mm.warning().is_none());
        prop_assert!(mm.concavity_violation().is_none());
        let us: Vec<f64> = (1..200).map(|i| i as f64 / 200.0).collect();
        let gs: Vec<f64> = us.iter().map(|&u| mm.g_cdf(u).unwrap()).collect();
        for w in gs.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
        for w in gs.windows(3) {
            // Second difference of a concave function is nonpositive.
            prop_assert!(w[0] - 2.0 * w[1] + w[2] <= 1e-12);
        }
        // Concave with G(0) = 0 implies G(u) ≥ u.
        for (&u, &g) in us.iter().zip(&gs) {
            prop_assert!(g >= u - 1e-14);
        }
    }

    #[test]
    fn with_r_changes_only_r(r in 0.01f64..0.9, r2 in 0.01f64..0.9, u in 0.001f64..0.999) {
        let mm = model(r, 20.0, 2.0);
        let mm2 = mm.with_r(r2).unwrap();
        prop_assert_eq!(mm2.r(), r2);
        prop_assert_eq!(mm.h(u), mm2.h(u));
    }
}
