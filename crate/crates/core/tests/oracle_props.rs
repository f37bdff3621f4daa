use bai_core::anchor_index::{anchor, index_value};
use bai_core::oracle::{solve_constrained, solve_optimal, solve_optimal_from, DEFAULT_TOL};
use bai_core::spef::{BanditInstance, SpefFamily};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = BanditInstance> {
    let family = prop_oneof![
        (0.3..3.0f64).prop_map(|s| SpefFamily::Gaussian { sigma: s }),
        Just(SpefFamily::Bernoulli),
        Just(SpefFamily::Poisson),
        Just(SpefFamily::Exponential),
    ];
    (family, proptest::collection::vec(0.0..1.0f64, 2..7)).prop_filter_map("distinct means", |(f, u)| {
        let means: Vec<f64> = match f {
            SpefFamily::Gaussian { .. } => u.iter().map(|x| 10.0 * x - 5.0).collect(),
            SpefFamily::Bernoulli => u.iter().map(|x| 0.05 + 0.9 * x).collect(),
            _ => u.iter().map(|x| 0.2 + 8.0 * x).collect(),
        };
        let mut s = means.clone();
        s.sort_by(|a, b| b.total_cmp(a));
        if s[0] - s[1] < 0.02 || s.windows(2).any(|w| w[0] == w[1]) {
            return None;
        }
        BanditInstance::new(f, means).ok()
    })
}

fn check_residuals(inst: &BanditInstance, omega: &[f64], tol: f64) -> Result<(), TestCaseError> {
    let f = inst.family();
    let mu = inst.means();
    let b = inst.best_arm();
    let g = anchor(f, mu, omega, b).unwrap();
    prop_assert!(g.abs() <= tol, "|g| = {}", g.abs());
    let idx: Vec<f64> = inst.challengers().map(|a| index_value(f, omega[b], omega[a], mu[b], mu[a]).unwrap()).collect();
    let spread = idx.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - idx.iter().cloned().fold(f64::INFINITY, f64::min);
    prop_assert!(spread <= tol, "index spread {spread}");
    prop_assert!((omega.iter().sum::<f64>() - 1.0).abs() <= tol);
    prop_assert!(omega.iter().all(|&w| w > 0.0), "{omega:?}");
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn residuals_and_positivity(inst in instance()) {
        let sol = solve_optimal(&inst, DEFAULT_TOL).unwrap();
        check_residuals(&inst, &sol.omega, 1e-10)?;
        prop_assert!(sol.residual_ratio_sum <= 1e-10 && sol.residual_index_spread <= 1e-10);
        prop_assert!((sol.t_star * sol.common_index - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn total_mass_increases_with_the_target(inst in instance(), i in 0.01..0.5f64, step in 1.001..2.0f64) {
        let k = inst.num_arms();
        let active: Vec<usize> = inst.challengers().collect();
        let zero = vec![0.0; k];
        let lo = solve_constrained(&inst, &active, &zero, &vec![i; k]).unwrap().total();
        let hi = solve_constrained(&inst, &active, &zero, &vec![i * step; k]).unwrap().total();
        prop_assert!(hi > lo);
        // the map is linear in the target when nothing is frozen
        prop_assert!((hi / lo - step).abs() < 1e-8 * step);
    }
}

#[test]
fn uniqueness_from_twenty_brackets() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    for means in [vec![10.0, 9.4, 7.0, 6.5], vec![7.25, 7.05, 7.0, 7.1], vec![10.0, 9.4, 7.0, 6.5, 6.0, 5.5]] {
        let inst = BanditInstance::gaussian(means).unwrap();
        let reference = solve_optimal(&inst, DEFAULT_TOL).unwrap().omega;
        for _ in 0..20 {
            let lo = rng.random_range(0.0..0.05f64);
            let hi = lo + rng.random_range(1e-4..10.0f64);
            let omega = solve_optimal_from(&inst, DEFAULT_TOL, (lo, hi)).unwrap().omega;
            for (a, b) in omega.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-8, "bracket ({lo}, {hi}): {omega:?} vs {reference:?}");
            }
        }
    }
}

#[test]
fn partially_frozen_constraints_hold() {
    let inst = BanditInstance::new(SpefFamily::Poisson, vec![5.0, 4.0, 3.0, 1.0]).unwrap();
    let fixed = [0.0, 0.0, 0.0, 0.4];
    let sol = solve_constrained(&inst, &[1, 2], &fixed, &[0.0, 0.3, 0.3, 0.0]).unwrap();
    let mu = inst.means();
    let f = inst.family();
    assert!(anchor(f, mu, &sol.allocations, 0).unwrap().abs() < 1e-12);
    for a in [1, 2] {
        let w = index_value(f, sol.allocations[0], sol.allocations[a], mu[0], mu[a]).unwrap();
        assert!((w - 0.3).abs() < 1e-12);
    }
    assert_eq!(sol.allocations[3], 0.4);
    assert!(sol.allocations[0] >= sol.n_1_1.max(sol.n_1_2));
}
