//! Worked examples checked against closed-form oracles. Frozen constants were
//! computed independently with 30-digit arithmetic.

use rcident::diagnostics::{cauchy_schwarz_check, sign_first_moment, symmetry_check, Sign};
use rcident::recovery::{
    chain_ratios, exponent_moment_ratio, plugin_estimate, ratio_of_moments,
    recover_moments_independence, recover_moments_scale, recover_moments_vknown,
    recover_v_derivatives, same_good_ratio,
};
use rcident::welfare::{
    average_indirect_utility, counterfactual_demand, path_integral_v, quantile_match_from_model,
    quantile_match_vprime, ExactV, TaylorV, VModel, Weighting,
};
use rcident::*;

const TAU: f64 = DEFAULT_RELEVANCE;
/// `log((e^{0.1} + 1) / 2)`.
const LSE_01: f64 = 0.051_249_479_513_625_59;
/// `(softmax(0, 0.1)_1 + softmax(0, 0.3)_1) / 2`.
const ASF_MIX_01: f64 = 0.450_289_147_854_700_5;
/// Mean of `log((e^{0.1}+e^{0.1})/2)` and `log((e^{0.1}+e^{0.3})/2)`.
const AVG_V_MIX: f64 = 0.152_495_844_410_823_27;

fn idx(label: &str) -> MomentIndex {
    MomentIndex::parse(label).unwrap()
}

fn mixture() -> BetaDistribution {
    BetaDistribution::uniform_mixture(vec![vec![1.0, 1.0], vec![1.0, 3.0]]).unwrap()
}

fn logit(outside: bool) -> ModelSpec {
    ModelSpec::logit(vec![1, 1], vec![0.0, 0.0], outside).unwrap()
}

fn table(model: ModelSpec, beta: BetaDistribution, m: usize) -> DerivativeTable {
    let ev = AsfEvaluator::new(model, beta).unwrap();
    derivative_table(&ev, m, &FdScheme::central()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn asf_worked_values() {
    let ev = AsfEvaluator::new(logit(false), mixture()).unwrap();
    assert_eq!(asf(&ev, &[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
    let y = asf(&ev, &[0.0, 0.1]).unwrap();
    assert!((y[0] - ASF_MIX_01).abs() < 1e-15);
    assert!((y[0] + y[1] - 1.0).abs() < 1e-15);
}

#[test]
fn first_order_partials_match_softmax_jacobian() {
    let t = table(
        logit(false),
        BetaDistribution::point_mass(vec![1.0, 1.0]),
        1,
    );
    assert!((t.get(&idx("b1_1"), 0).unwrap() - 0.25).abs() < 1e-10);
    assert!((t.get(&idx("b1_1"), 1).unwrap() + 0.25).abs() < 1e-10);
}

#[test]
fn forward_scheme_tracks_central_on_orthant() {
    let central = table(logit(true), mixture(), 2);
    let model = logit(true).with_nonnegative_domain(true);
    let ev = AsfEvaluator::new(model, mixture()).unwrap();
    let forward = derivative_table(&ev, 2, &FdScheme::forward()).unwrap();
    for (i, row) in central.entries() {
        for (k, c) in row.iter().enumerate() {
            let f = forward.get(i, k).unwrap();
            // central error ~1e-9 at these steps; allow ten times a 1e-5 budget
            assert!((f - c).abs() < 1e-4, "{i} good {k}: {f} vs {c}");
        }
    }
}

#[test]
fn derivative_ratio_is_moment_ratio() {
    let t = table(logit(true), mixture(), 2);
    let r = ratio_of_moments(&t, (&idx("b2_1*b2_1"), 0), (&idx("b1_1*b2_1"), 1), TAU).unwrap();
    assert!(rel(r, 2.5) < 1e-6, "{r}");
    let pm = table(logit(true), BetaDistribution::point_mass(vec![1.0, 1.0]), 2);
    let r = ratio_of_moments(&pm, (&idx("b1_1*b1_1"), 1), (&idx("b1_1*b2_1"), 0), TAU).unwrap();
    assert!((r - 1.0).abs() < 1e-6);
}

#[test]
fn chain_and_scale_recover_mixture_moments() {
    let t = table(logit(true), mixture(), 2);
    let c = chain_ratios(&t, 2, TAU).unwrap();
    assert_eq!(c.reference(), &idx("b1_1*b1_1"));
    for (l, v) in [("b1_1*b1_1", 1.0), ("b1_1*b2_1", 2.0), ("b2_1*b2_1", 5.0)] {
        assert!(rel(c.get(&idx(l)).unwrap(), v) < 1e-6);
    }
    let m1 = recover_moments_scale(&t, 1, 1.0, TAU).unwrap();
    assert!(rel(m1.get(&idx("b1_1")).unwrap(), 1.0) < 1e-8);
    assert!(rel(m1.get(&idx("b2_1")).unwrap(), 2.0) < 1e-6);
    let pm = table(logit(true), BetaDistribution::point_mass(vec![1.0, 1.0]), 3);
    for m in 1..=3 {
        for (i, e) in recover_moments_scale(&pm, m, 1.0, TAU).unwrap().iter() {
            assert!((e.value - 1.0).abs() < 1e-5, "{i}");
        }
    }
}

#[test]
fn single_good_fan_out() {
    // at α = 0 the one-good choice probability is 1/2 and ∂³V(0) vanishes
    let model = ModelSpec::logit(vec![2], vec![0.5], true).unwrap();
    let beta = BetaDistribution::uniform_mixture(vec![vec![1.0, 0.5], vec![1.0, 2.0]]).unwrap();
    let t = table(model.clone(), beta.clone(), 2);
    let m = recover_moments_scale(&t, 2, 1.0, TAU).unwrap();
    for (i, e) in m.iter() {
        let truth = true_moment(&beta, model.layout(), i);
        assert!(rel(e.value, truth) < 1e-5, "{i}: {} vs {truth}", e.value);
    }
}

#[test]
fn zero_slopes_fail_relevance() {
    let t = table(logit(true), BetaDistribution::point_mass(vec![0.0, 0.0]), 2);
    assert!(matches!(chain_ratios(&t, 1, TAU), Err(Error::Relevance(_))));
    let out = recover_moments(
        &t,
        2,
        &RecoveryConfig::new(RouteConfig::Scale {
            known: vec![1.0, 1.0],
        }),
    );
    assert_eq!(out.failure, Some(Error::Degenerate { order: 1 }));
    assert_eq!(sign_first_moment(&t, TAU), Sign::Indeterminate);
}

fn product(b11: [f64; 2]) -> BetaDistribution {
    BetaDistribution::product(vec![
        Univariate::uniform(b11.to_vec()).unwrap(),
        Univariate::uniform(vec![1.0, 3.0]).unwrap(),
    ])
    .unwrap()
}

#[test]
fn independence_route_positive_and_negative_mean() {
    let t = table(logit(true), product([0.5, 1.5]), 2);
    let m = recover_moments_independence(&t, 2, 1.0, TAU).unwrap();
    assert!(rel(m[0].get(&idx("b1_1")).unwrap(), 1.0) < 1e-6);
    assert!(rel(m[0].get(&idx("b2_1")).unwrap(), 2.0) < 1e-6);
    assert!(rel(m[1].get(&idx("b2_1*b2_1")).unwrap(), 5.0) < 1e-5);
    assert!(rel(m[1].get(&idx("b1_1*b1_1")).unwrap(), 1.25) < 1e-5);
    assert_eq!(sign_first_moment(&t, TAU), Sign::Positive);

    let t = table(logit(true), product([-1.5, -0.5]), 2);
    let m = recover_moments_independence(&t, 2, 1.0, TAU).unwrap();
    assert!(rel(m[0].get(&idx("b1_1")).unwrap(), -1.0) < 1e-6);
    assert_eq!(sign_first_moment(&t, TAU), Sign::Negative);
}

#[test]
fn independence_with_unit_b11_equals_scale_route() {
    let t = table(logit(true), mixture(), 1);
    let a = recover_moments_independence(&t, 1, 1.0, TAU).unwrap();
    let b = recover_moments_scale(&t, 1, 1.0, TAU).unwrap();
    for (i, e) in a[0].iter() {
        assert!((e.value - b.get(i).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn single_good_independence_needs_second_characteristic() {
    let model = ModelSpec::logit(vec![1], vec![0.5], true).unwrap();
    let beta = BetaDistribution::uniform_mixture(vec![vec![0.5], vec![1.5]]).unwrap();
    let t = table(model, beta, 2);
    assert_eq!(
        recover_moments_independence(&t, 2, 1.0, TAU),
        Err(Error::Anchor { order: 2 })
    );
}

#[test]
fn v_derivatives_of_symmetric_logit() {
    let t = table(
        logit(false),
        BetaDistribution::point_mass(vec![1.0, 1.0]),
        1,
    );
    let m = recover_moments_scale(&t, 1, 1.0, TAU).unwrap();
    let vd = recover_v_derivatives(&t, &[m], TAU).unwrap();
    assert!((vd.get(&[0, 0]).unwrap() - 0.25).abs() < 1e-8);
    assert!((vd.get(&[0, 1]).unwrap() + 0.25).abs() < 1e-8);
    assert!((vd.get(&[0, 0]).unwrap() - vd.get(&[1, 1]).unwrap()).abs() < 1e-10);
    assert!(vd.get(&[0, 1]).unwrap() < 0.0);
    assert!(vd.convexity_violations(1e-10).is_empty());
}

#[test]
fn vknown_route_agrees_with_scale_route() {
    let model = logit(true);
    let t = table(model.clone(), mixture(), 2);
    let vd = VDerivTable::analytic(&model, 3).unwrap();
    for m in 1..=2 {
        let a = recover_moments_vknown(&t, m, &vd).unwrap();
        let b = recover_moments_scale(&t, m, 1.0, TAU).unwrap();
        for (i, e) in a.iter() {
            assert!((e.value - b.get(i).unwrap()).abs() < 1e-6, "{i}");
            assert!(rel(e.value, true_moment(&mixture(), model.layout(), i)) < 1e-6);
        }
    }
    let pm = BetaDistribution::point_mass(vec![2.0, 0.5]);
    let t = table(model.clone(), pm.clone(), 2);
    for (i, e) in recover_moments_vknown(&t, 2, &vd).unwrap().iter() {
        assert!(rel(e.value, true_moment(&pm, model.layout(), i)) < 1e-6);
    }
}

#[test]
fn same_good_ratio_matches_oracle_and_chain() {
    let model = ModelSpec::logit(vec![2, 1], vec![0.0, 0.0], true).unwrap();
    let beta =
        BetaDistribution::uniform_mixture(vec![vec![1.0, 0.5, 1.0], vec![2.0, 1.5, 2.0]]).unwrap();
    let t = table(model.clone(), beta.clone(), 2);
    let (a, b) = (idx("b1_1*b2_1"), idx("b1_2*b2_1"));
    let r = same_good_ratio(&t, &a, &b, 0, TAU).unwrap();
    let truth = true_moment(&beta, model.layout(), &a) / true_moment(&beta, model.layout(), &b);
    assert!(rel(r, truth) < 1e-6);
    let c = chain_ratios(&t, 2, TAU).unwrap();
    assert!((r - c.get(&a).unwrap() / c.get(&b).unwrap()).abs() < 1e-8);
    assert_eq!(same_good_ratio(&t, &a, &a, 1, TAU).unwrap(), 1.0);
}

#[test]
fn exponent_ratio_reads_mean_exponents() {
    let run = |rho: Vec<f64>| {
        let m = ModelSpec::power_logit(vec![0.0, 0.0], false).unwrap();
        let ev = AsfEvaluator::new(m, BetaDistribution::point_mass(rho)).unwrap();
        exponent_moment_ratio(&ev, 0, 1, &FdScheme::central(), TAU).unwrap()
    };
    assert!((run(vec![1.0, 2.0]) - 0.5).abs() < 1e-8);
    assert!((run(vec![2.0, 1.0]) - 2.0).abs() < 1e-8);
    assert!((run(vec![1.5, 1.5]) - 1.0).abs() < 1e-8);
    let linear = AsfEvaluator::new(logit(false), mixture()).unwrap();
    assert!(matches!(
        exponent_moment_ratio(&linear, 0, 1, &FdScheme::central(), TAU),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn plugin_estimator_exact_and_perturbed() {
    let t = table(logit(true), mixture(), 2);
    let reference = MomentIndex::power_of_first(2);
    let scale = recover_moments_scale(&t, 2, 1.0, TAU).unwrap();
    for i in t.layout().moment_indices(2) {
        let p = plugin_estimate(&t, &i, &reference, TAU).unwrap();
        assert!((p.value - scale.get(&i).unwrap()).abs() < 1e-9, "{i}");
    }
    // +1% on every numerator entry of the two-step path to b2_1^2
    let target = idx("b2_1*b2_1");
    let exact = plugin_estimate(&t, &target, &reference, TAU).unwrap();
    let mut noisy = t.clone();
    for (i, k) in [(idx("b1_1*b2_1"), 0), (idx("b2_1*b2_1"), 0)] {
        let v = noisy.get(&i, k).unwrap();
        noisy.set(&i, k, v * 1.01).unwrap();
    }
    let p = plugin_estimate(&noisy, &target, &reference, TAU).unwrap();
    assert!(
        rel(p.value, exact.value) < 0.0202,
        "{}",
        rel(p.value, exact.value)
    );
}

#[test]
fn taylor_and_path_integral_match_log_sum_exp() {
    let model = logit(false);
    let vd = VDerivTable::analytic(&model, 3).unwrap();
    let taylor = TaylorV::new(vd, vec![0.0, 0.0]).unwrap();
    assert!((taylor.v_diff(&[0.1, 0.0]).unwrap().value - LSE_01).abs() < 1e-4);
    let ev = AsfEvaluator::new(model, BetaDistribution::point_mass(vec![1.0, 1.0])).unwrap();
    let p = path_integral_v(&ev, &[0.0, 0.0], &[0.1, 0.0]).unwrap();
    assert!((p - LSE_01).abs() < 1e-8);
}

#[test]
fn average_indirect_utility_of_mixture() {
    let model = logit(false);
    let exact = ExactV::new(&model);
    let got = average_indirect_utility(
        &exact,
        &model,
        &mixture(),
        &[0.1, 0.1],
        Weighting::Unweighted,
    )
    .unwrap();
    assert!((got.value - AVG_V_MIX).abs() < 1e-15);
    let vd = VDerivTable::analytic(&model, 3).unwrap();
    let taylor = TaylorV::new(vd, vec![0.0, 0.0]).unwrap();
    let t = average_indirect_utility(
        &taylor,
        &model,
        &mixture(),
        &[0.1, 0.1],
        Weighting::Unweighted,
    )
    .unwrap();
    assert!((t.value - AVG_V_MIX).abs() < 1e-3);
}

#[test]
fn counterfactual_demand_per_support_point() {
    let model = logit(false);
    let x = [2f64.ln(), 0.0];
    let pm = BetaDistribution::point_mass(vec![1.0, 1.0]);
    let cf = counterfactual_demand(&ExactV::new(&model), &model, &pm, &x).unwrap();
    assert_eq!(
        cf.value,
        vec![(1.0, ybar_given_beta(&model, &x, &[1.0, 1.0]).unwrap())]
    );
    let cf = counterfactual_demand(&ExactV::new(&model), &model, &mixture(), &x).unwrap();
    let total: f64 = cf.value.iter().map(|p| p.0).sum();
    assert!((total - 1.0).abs() < 1e-12);
    for (_, y) in &cf.value {
        assert!((y[0] - 2.0 / 3.0).abs() < 1e-15 && (y[1] - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn monotone_rearrangement_recovers_logistic() {
    let model = ModelSpec::logit(vec![1], vec![0.0], true).unwrap();
    let beta = BetaDistribution::uniform_mixture(vec![vec![0.5], vec![1.5]]).unwrap();
    let f = quantile_match_from_model(&model, &beta, &[1.0], 101).unwrap();
    let logistic = |u: f64| u.exp() / (1.0 + u.exp());
    assert!((f[0].1 - logistic(0.5)).abs() < 1e-12);
    assert!((f[100].1 - logistic(1.5)).abs() < 1e-12);
    // linear interpolation between the two support points
    let chord = (logistic(1.5) - logistic(0.5)) / 1.0;
    for (z, v) in &f {
        assert!((v - (logistic(0.5) + chord * (z - 0.5))).abs() < 1e-12);
        assert!((v - logistic(*z)).abs() < 0.02);
    }
    assert!(f.windows(2).all(|w| w[1].1 >= w[0].1));
    let d = Univariate::uniform(vec![-1.0, 0.0, 4.0]).unwrap();
    assert!(quantile_match_vprime(&d, &d, 9)
        .unwrap()
        .iter()
        .all(|(z, v)| (z - v).abs() < 1e-12));
}

#[test]
fn testable_restriction_values() {
    let t = table(logit(true), mixture(), 2);
    assert!((cauchy_schwarz_check(&t, TAU).unwrap() - 1.25).abs() < 1e-6);
    let pm = table(logit(true), BetaDistribution::point_mass(vec![1.0, 1.0]), 2);
    assert!((cauchy_schwarz_check(&pm, TAU).unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn symmetry_check_on_order_one_table_is_vacuous() {
    let t = table(logit(true), mixture(), 1);
    let r = symmetry_check(&t, TAU).unwrap();
    assert!(!r.applicable);
    assert_eq!(r.residual, 0.0);
    assert_eq!(r.relations, 0);
}
