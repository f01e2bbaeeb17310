use cheaptalk_core::equilibrium::{
    construct_reveal_plus_quantize, expected_distortions, scalar_equilibrium, solve_fixed_point, verify_equilibrium,
    ActionSet, ConvergenceStatus, EncoderPolicy, SolverConfig,
};
use cheaptalk_core::sources::{Budget, Marginal, SourceModel};

#[test]
fn solved_pair_equilibrium_verifies() {
    let src = SourceModel::iid_gaussian(2, 0.0, 1.0).unwrap();
    let b = [0.4, -0.2];
    let out = solve_fixed_point(&src, &b, 3, &SolverConfig::default()).unwrap();
    assert_eq!(out.status, ConvergenceStatus::Converged);
    let policy = EncoderPolicy::Quantizer { actions: out.actions };
    let cert = verify_equilibrium(&policy, &src, &b, &Budget::with_samples(200_000, 3)).unwrap();
    assert!(cert.passed, "{cert:?}");
}

#[test]
fn shifted_actions_fail_the_centroid_check() {
    let src = SourceModel::iid_uniform(1, 0.0, 1.0).unwrap();
    let q = scalar_equilibrium(&Marginal::Uniform { lo: 0.0, hi: 1.0 }, 0.05, 3).unwrap();
    let budget = Budget::with_samples(200_000, 4);
    let exact = EncoderPolicy::Quantizer { actions: q.action_set() };
    assert!(verify_equilibrium(&exact, &src, &[0.05], &budget).unwrap().passed);

    let shifted: Vec<f64> = q.actions.iter().map(|u| u + 0.02).collect();
    let policy = EncoderPolicy::Quantizer { actions: ActionSet::from_scalars(&shifted).unwrap() };
    let cert = verify_equilibrium(&policy, &src, &[0.05], &budget).unwrap();
    assert!(cert.checks.geo_slack && !cert.checks.centroid && !cert.passed);
}

#[test]
fn silent_last_coordinate_keeps_half_the_variance() {
    // Revealing x1 of an iid N(0,1) pair loses exactly the variance of x2.
    let src = SourceModel::iid_gaussian(2, 0.0, 1.0).unwrap();
    let b = [1.0, 1.0];
    let policy = construct_reveal_plus_quantize(&src, &b, 1, None).unwrap();
    let report = expected_distortions(&policy, &src, &b, &Budget::with_samples(400_000, 5)).unwrap();
    let jd = &report.per_vector.jd;
    assert!(jd.z_score(1.0) < 4.0, "{jd:?}");
    assert!(report.per_dimension.jd.z_score(0.5) < 4.0);
    assert!(report.per_vector.je_minus_jd.z_score(2.0) < 4.0);
}
