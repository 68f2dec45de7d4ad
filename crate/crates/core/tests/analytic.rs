use epidemica::analytic::{
    expected_risk, optimal_timeout, solve_epidemic_ode, target_success_cdf, EpidemicModel,
    EpidemicParams,
};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = EpidemicParams> {
    (10.0..500.0f64, 0.05..2.0f64, 0.0..0.5f64).prop_flat_map(|(n, lambda, frac)| {
        let i0 = 1.0 + (frac * n).floor();
        Just(EpidemicParams::from_aggregate(n, lambda, 0.0, i0).unwrap())
    })
}

proptest! {
    #[test]
    fn cdf_and_risk_are_monotone(p in params(), t in 0.0..50.0f64, dt in 0.001..10.0f64) {
        prop_assert!(target_success_cdf(&p, t + dt).unwrap() >= target_success_cdf(&p, t).unwrap());
        prop_assert!(expected_risk(&p, t + dt).unwrap() > expected_risk(&p, t).unwrap());
    }

    #[test]
    fn timeout_shrinks_with_more_seeds(p in params(), rho in 0.05..0.99f64) {
        prop_assume!(p.i0 + 1.0 < p.n);
        let more = EpidemicParams { i0: p.i0 + 1.0, ..p };
        prop_assert!(optimal_timeout(&more, rho).unwrap() < optimal_timeout(&p, rho).unwrap());
    }

    #[test]
    fn timeout_shrinks_with_faster_meetings(p in params(), rho in 0.05..0.99f64, factor in 1.01..3.0f64) {
        let faster = EpidemicParams { beta: p.beta * factor, ..p };
        prop_assert!(optimal_timeout(&faster, rho).unwrap() < optimal_timeout(&p, rho).unwrap());
    }

    #[test]
    fn optimal_timeout_hits_reliability(p in params(), rho in 0.01..0.99f64) {
        let t = optimal_timeout(&p, rho).unwrap();
        prop_assert!((target_success_cdf(&p, t).unwrap() - rho).abs() < 1e-9);
    }

    #[test]
    fn sir_probability_is_a_cdf(beta in 0.0005..0.02f64, gamma in 0.0..0.5f64) {
        let p = EpidemicParams::new(100.0, beta, gamma, 1.0).unwrap();
        let sol = solve_epidemic_ode(&p, EpidemicModel::Sir, 40.0, 0.05).unwrap();
        prop_assert!(sol.p.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        prop_assert!(sol.p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }
}

#[test]
fn per_user_risk_at_optimal_timeout_ignores_population() {
    let risks: Vec<f64> = [50.0, 100.0, 200.0]
        .iter()
        .map(|&n| {
            let p = EpidemicParams::from_aggregate(n, 0.37043, 0.0, 1.0).unwrap();
            expected_risk(&p, optimal_timeout(&p, 0.9).unwrap()).unwrap()
        })
        .collect();
    let (lo, hi) = risks
        .iter()
        .fold((f64::MAX, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    assert!((hi - lo) / lo < 0.2, "{risks:?}");
}
