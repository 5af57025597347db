mod common;

use pap_core::{
    check_extremal_conditions, extremality_oracle, interim_expected_power, optimal_pap, rationalizing_prior,
    verify_perturbation, worst_case_completion,
};
use rand::Rng;

#[test]
fn conditions_agree_with_oracle() {
    let mut rng = common::rng(2024);
    let (mut checked, mut extremal) = (0, 0);
    while checked < 50 {
        let Some((problem, rule)) = common::random_completion(&mut rng) else { continue };
        let report = check_extremal_conditions(&rule, &problem).unwrap();
        let oracle = extremality_oracle(&rule, &problem).unwrap();
        assert_eq!(report.is_extremal, oracle.is_none(), "case {checked}: {report:?}");
        if let Some(delta) = &report.delta {
            assert!(verify_perturbation(&rule, delta, &problem, 1e-9).unwrap());
        }
        if let Some(delta) = &oracle {
            assert!(verify_perturbation(&rule, delta, &problem, 1e-9).unwrap());
        }
        extremal += usize::from(report.is_extremal);
        checked += 1;
    }
    assert!(extremal > 0 && extremal < checked, "{extremal} of {checked} extremal");
}

#[test]
fn rationalizing_prior_round_trip() {
    let mut rng = common::rng(99);
    let mut done = 0;
    while done < 10 {
        let sizes = common::random_sizes(&mut rng, 3, 27);
        let base = common::random_problem(&mut rng, &sizes, 1, 0.05);
        let t: Vec<f64> = base.null().iter().map(|_| f64::from(u8::from(rng.random_bool(0.3)))).collect();
        let alpha = common::size(&t, base.null());
        if !(alpha > 0.0 && alpha < 1.0) {
            continue;
        }
        let mut problem = base.with_alpha(alpha);
        let rule = worst_case_completion(&t, problem.grid()).unwrap();
        let prior = rationalizing_prior(&rule, &problem, alpha).unwrap();
        let signal = problem.push_prior(prior).unwrap();
        let target = interim_expected_power(&rule, problem.prior(signal).unwrap()).unwrap();
        let solved = optimal_pap(&problem, signal, alpha).unwrap();
        assert!((solved.power - target).abs() <= 1e-9, "lp {} rule {target}", solved.power);
        assert!((target - (2.0 - alpha) * alpha).abs() <= 1e-12);
        done += 1;
    }
}

fn poly_mul(a: &[i64], b: &[i64]) -> Vec<i64> {
    let mut out = vec![0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[i64], b: &[i64]) -> Vec<i64> {
    let mut out = vec![0; a.len().max(b.len())];
    a.iter().enumerate().for_each(|(i, v)| out[i] += v);
    b.iter().enumerate().for_each(|(i, v)| out[i] += v);
    while out.len() > 1 && out.last() == Some(&0) {
        out.pop();
    }
    out
}

/// `(2 - α)·α + (1 - α)^2 = 1` as integer polynomials in `α`.
#[test]
fn prior_normalization_identity() {
    let reject = poly_mul(&[2, -1], &[0, 1]);
    let accept = poly_mul(&[1, -1], &[1, -1]);
    assert_eq!(poly_add(&reject, &accept), vec![1]);
}
