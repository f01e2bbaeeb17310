use cheaptalk_core::equilibrium::{best_response_step, scalar_equilibrium, ActionSet};
use cheaptalk_core::geometry::{
    assign_action, encoder_cost, g_slack_transformed, geo_slack, h_value, lambda_bar,
};
use cheaptalk_core::sources::{Budget, Marginal, SourceModel};
use cheaptalk_core::transforms::{bias_aligning_transform, pair_transform_2d, Direction};
use proptest::prelude::*;

fn vec_of(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, n)
}

fn triple() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..5).prop_flat_map(|n| (vec_of(n), vec_of(n), vec_of(n), vec_of(n)))
}

proptest! {
    #[test]
    fn h_value_is_half_the_cost_gap((m, u1, u2, b) in triple()) {
        prop_assume!(u1 != u2);
        let h = h_value(&m, &u1, &u2, &b).unwrap();
        let gap = encoder_cost(&m, &u2, &b).unwrap() - encoder_cost(&m, &u1, &b).unwrap();
        prop_assert!((2.0 * h - gap).abs() <= 1e-9 * (1.0 + gap.abs()));
    }

    #[test]
    fn slack_sign_matches_lambda_range((_m, u1, u2, b) in triple()) {
        prop_assume!(u1 != u2);
        let slack = geo_slack(&u1, &u2, &b).unwrap();
        let lambda = lambda_bar(&u1, &u2, &b).unwrap();
        prop_assume!(slack.abs() > 1e-9);
        prop_assert_eq!(slack > 0.0, (0.0..=1.0).contains(&lambda));
    }

    #[test]
    fn assigned_action_is_cheapest(m in vec_of(3), b in vec_of(3), raw in prop::collection::vec(vec_of(3), 1..6)) {
        let actions = ActionSet::new(raw).unwrap();
        let i = assign_action(&m, &actions, &b).unwrap();
        let best = encoder_cost(&m, actions.get(i), &b).unwrap();
        for u in actions.iter() {
            prop_assert!(best <= encoder_cost(&m, u, &b).unwrap());
        }
    }

    #[test]
    fn pair_transform_scales_geo_slack(ya in vec_of(2), yb in vec_of(2), b in vec_of(2)) {
        let bt = b[0] * b[0] + b[1] * b[1];
        prop_assume!(bt > 1e-2 && ya != yb);
        let t = pair_transform_2d(&b).unwrap();
        let ua = t.apply(&ya, Direction::Inverse).unwrap();
        let ub = t.apply(&yb, Direction::Inverse).unwrap();
        let g = g_slack_transformed(&ya, &yb, bt).unwrap();
        let slack = geo_slack(&ua, &ub, &b).unwrap();
        prop_assert!((slack * bt - g).abs() <= 1e-9 * (1.0 + g.abs()));
    }

    #[test]
    fn bias_aligning_is_orthonormal_and_aligns(b in vec_of(4)) {
        let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let t = bias_aligning_transform(&b).unwrap();
        let gram = t.forward.matmul(&t.forward.transpose());
        for i in 0..4 {
            for j in 0..4 {
                let target = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram.get(i, j) - target).abs() < 1e-12);
            }
        }
        for (i, x) in t.transformed_bias.iter().enumerate() {
            let target = if i == 3 { norm } else { 0.0 };
            prop_assert!((x - target).abs() < 1e-12 * (1.0 + norm));
        }
    }

    #[test]
    fn uniform_equilibria_follow_the_recursion(beta in 0.001f64..0.2, k in 1usize..8) {
        let law = Marginal::Uniform { lo: 0.0, hi: 1.0 };
        let kf = k as f64;
        let first = (1.0 + 2.0 * beta * kf * (kf - 1.0)) / kf;
        let last = first - 4.0 * beta * (kf - 1.0);
        prop_assume!(last.abs() > 1e-6);
        match scalar_equilibrium(&law, beta, k) {
            Ok(q) => {
                prop_assert!(last > 0.0);
                let mut edge = 0.0;
                for (i, l) in q.boundaries.iter().enumerate() {
                    edge += first - 4.0 * beta * i as f64;
                    prop_assert!((l - edge).abs() < 1e-9);
                }
            }
            Err(_) => prop_assert!(last < 0.0),
        }
    }

    #[test]
    fn scalar_equilibria_scale_with_the_source(c in 0.2f64..5.0, k in 1usize..5) {
        let base = scalar_equilibrium(&Marginal::Gaussian { mean: 0.0, sd: 1.0 }, 0.3, k).unwrap();
        let scaled = scalar_equilibrium(&Marginal::Gaussian { mean: 0.0, sd: c }, 0.3 * c, k).unwrap();
        for (a, s) in base.actions.iter().zip(&scaled.actions) {
            prop_assert!((a * c - s).abs() < 1e-7 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn scalar_equilibria_are_fixed_points(beta in -0.5f64..0.5, k in 1usize..5) {
        let src = SourceModel::iid_gaussian(1, 0.0, 1.0).unwrap();
        let q = scalar_equilibrium(&src.marginal(0), beta, k).unwrap();
        let actions = q.action_set();
        let next = best_response_step(&actions, &src, &[beta], &Budget::default()).unwrap();
        prop_assert!(actions.sup_distance(&next) < 1e-7);
    }
}
