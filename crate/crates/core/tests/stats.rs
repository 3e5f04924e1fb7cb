// SPDX-License-Identifier: MIT OR Apache-2.0

use proptest::prelude::*;
use sega_core::stats::{
    attention_contrast, kl_divergence, student_t_cdf, welch_t, Distribution, KlMode, Sample,
};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// (a, b, t, dof, p)
type WelchCase = (&'static [f64], &'static [f64], f64, f64, f64);

/// Computed with scipy.stats.ttest_ind(equal_var=False).
const FROZEN: &[WelchCase] = &[
    (&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 8.0], -1.7320508075688774, 4.411764705882353, 0.15158050484530383),
    (&[10.1, 9.8, 10.4, 10.0, 9.9], &[9.0, 9.5, 9.2, 9.8], 3.27522630329271, 4.987965443298107, 0.02214875389473267),
    (
        &[0.5, 0.7, 0.2, 0.9, 1.1, 0.4],
        &[1.5, 1.9, 1.2, 2.4, 1.7, 2.2, 1.1],
        -4.719548914415786,
        10.549117503454084,
        0.0007060252302181932,
    ),
    (&[3.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], -0.7559289460184542, 7.538461538461541, 0.47264845074508754),
    (
        &[100.0, 102.0, 98.0, 101.0],
        &[99.0, 97.0, 100.0, 96.0, 95.0, 98.0],
        2.400396792595916,
        7.023121387283238,
        0.04732457118912622,
    ),
    (&[1.0, 2.0], &[1.5, 2.5, 3.5], -1.3093073414159544, 2.8823529411764697, 0.28502284001427436),
];

#[test]
fn welch_matches_frozen_values() {
    for (a, b, t, dof, p) in FROZEN {
        let r = welch_t(&Sample::new("a", a.to_vec()), &Sample::new("b", b.to_vec())).unwrap();
        assert!((r.t_statistic - t).abs() < 1e-9, "t {} vs {t}", r.t_statistic);
        assert!((r.dof - dof).abs() < 1e-9, "dof {} vs {dof}", r.dof);
        assert!((r.p_two_sided - p).abs() < 1e-9, "p {} vs {p}", r.p_two_sided);
    }
}

#[test]
fn welch_hand_evaluation() {
    // means 2.5 and 5; variances 5/3 and 20/3; se^2 = 5/12 + 5/3 = 25/12.
    let r = welch_t(&Sample::new("a", vec![1.0, 2.0, 3.0, 4.0]), &Sample::new("b", vec![2.0, 4.0, 6.0, 8.0])).unwrap();
    let se2: f64 = 25.0 / 12.0;
    assert!((r.t_statistic - (-2.5 / se2.sqrt())).abs() < 1e-12);
    let dof = se2 * se2 / ((5.0f64 / 12.0).powi(2) / 3.0 + (5.0f64 / 3.0).powi(2) / 3.0);
    assert!((r.dof - dof).abs() < 1e-12);
}

#[test]
fn identical_samples_give_t_zero_p_one() {
    let a = Sample::new("a", vec![0.3, 0.9, 1.4, 2.0]);
    let r = welch_t(&a, &a.clone()).unwrap();
    assert_eq!(r.t_statistic, 0.0);
    assert!((r.p_two_sided - 1.0).abs() < 1e-15);
}

#[test]
fn cdf_agrees_with_statrs() {
    for dof in [1.0, 2.5, 4.411764705882353, 10.0, 30.0, 200.0] {
        let reference = StudentsT::new(0.0, 1.0, dof).unwrap();
        for t in [-8.0, -2.0, -0.4, 0.0, 0.1, 1.0, 3.3, 12.0] {
            let ours = student_t_cdf(t, dof);
            let theirs = reference.cdf(t);
            assert!((ours - theirs).abs() < 1e-10, "dof {dof} t {t}: {ours} vs {theirs}");
        }
    }
}

#[test]
fn kl_point_mass_against_uniform() {
    let p = Distribution::new(vec![1.0, 0.0]).unwrap();
    let q = Distribution::new(vec![0.5, 0.5]).unwrap();
    let r = kl_divergence(&p, &q, KlMode::Exact).unwrap();
    assert!((r.nats - std::f64::consts::LN_2).abs() < 1e-15);
    assert!((r.percent - 100.0 * std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn contrast_from_printed_means() {
    let r = attention_contrast(&Sample::new("py", vec![9.08]), &Sample::new("rs", vec![2.59])).unwrap();
    assert!((r.ratio - 3.51).abs() <= 0.01);
    let r = attention_contrast(&Sample::new("py", vec![5.23]), &Sample::new("rs", vec![1.20])).unwrap();
    assert!((r.ratio - 4.35).abs() <= 0.01);
    let same = attention_contrast(&Sample::new("a", vec![2.0, 4.0]), &Sample::new("b", vec![3.0, 3.0])).unwrap();
    assert_eq!(same.ratio, 1.0);
    assert!(attention_contrast(&Sample::new("a", vec![1.0]), &Sample::new("b", vec![0.0])).is_err());
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..1.0, n).prop_filter("needs mass", |v| v.iter().sum::<f64>() > 1e-6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn kl_self_zero_and_gibbs(pair in (1usize..12).prop_flat_map(|n| (distribution(n), distribution(n)))) {
        let p = Distribution::new(pair.0).unwrap();
        let q = Distribution::new(pair.1).unwrap();
        prop_assert_eq!(kl_divergence(&p, &p, KlMode::Exact).unwrap().nats, 0.0);
        let r = kl_divergence(&p, &q, KlMode::Exact).unwrap();
        prop_assert!(r.nats >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn welch_shift_scale_and_swap(
        a in proptest::collection::vec(-50.0f64..50.0, 2..12),
        b in proptest::collection::vec(-50.0f64..50.0, 2..12),
        shift in -100.0f64..100.0,
        scale in 0.1f64..10.0,
    ) {
        let sa = Sample::new("a", a.clone());
        let sb = Sample::new("b", b.clone());
        let Ok(base) = welch_t(&sa, &sb) else { return Ok(()); };
        prop_assume!(base.t_statistic.is_finite());
        let swapped = welch_t(&sb, &sa).unwrap();
        prop_assert_eq!(swapped.t_statistic, -base.t_statistic);
        prop_assert!((swapped.p_two_sided - base.p_two_sided).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base.p_two_sided));
        let shifted = welch_t(
            &Sample::new("a", a.iter().map(|x| x + shift).collect::<Vec<_>>()),
            &Sample::new("b", b.iter().map(|x| x + shift).collect::<Vec<_>>()),
        ).unwrap();
        let tol = 1e-6 * base.t_statistic.abs().max(1.0);
        prop_assert!((shifted.t_statistic - base.t_statistic).abs() < tol);
        let scaled = welch_t(
            &Sample::new("a", a.iter().map(|x| x * scale).collect::<Vec<_>>()),
            &Sample::new("b", b.iter().map(|x| x * scale).collect::<Vec<_>>()),
        ).unwrap();
        prop_assert!((scaled.t_statistic - base.t_statistic).abs() < tol);
        prop_assert!((scaled.p_two_sided - base.p_two_sided).abs() < 1e-6);
    }

    #[test]
    fn contrast_ratios_are_reciprocal(a in proptest::collection::vec(0.1f64..20.0, 1..8), b in proptest::collection::vec(0.1f64..20.0, 1..8)) {
        let (sa, sb) = (Sample::new("a", a), Sample::new("b", b));
        let ab = attention_contrast(&sa, &sb).unwrap().ratio;
        let ba = attention_contrast(&sb, &sa).unwrap().ratio;
        prop_assert!((ab * ba - 1.0).abs() < 1e-12);
    }
}
