//! Acceptance checks. Each test prints one `PASS`/`FAIL` line.

use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

use cheaptalk_core::classify::{classify_linear_existence, Existence};
use cheaptalk_core::equilibrium::{
    construct_reveal_plus_quantize, solve_scalar_biased, verify_equilibrium, verify_linear_equilibrium,
    EquilibriumCertificate,
};
use cheaptalk_core::geometry::{assign_action, encoder_cost, geo_slack, h_value, lambda_bar, ActionSet};
use cheaptalk_core::ratedist::{asymptotic_experiment, game_rate_bound, team_rate_distortion};
use cheaptalk_core::sources::{Budget, SourceModel};
use cheaptalk_core::transforms::{helmert_transform, pair_transform_2d};
use cheaptalk_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, passed: bool, elapsed: Duration, limit: Duration, detail: &str) {
    let passed = passed && elapsed < limit;
    let verdict = if passed { "PASS" } else { "FAIL" };
    // Written to the raw handle so the line shows even when output is captured.
    let line = format!("criterion {id} [{name}]: {verdict} ({elapsed:.2?} of {limit:.0?}; {detail})\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(passed, "criterion {id} failed: {detail}");
}

/// Closed-form uniform[0,1] boundaries: bin lengths fall by 4β from one bin
/// to the next and sum to one.
fn uniform_oracle(beta: f64, k: usize) -> Option<Vec<f64>> {
    let kf = k as f64;
    let first = (1.0 + 4.0 * beta * kf * (kf - 1.0) / 2.0) / kf;
    let lengths: Vec<f64> = (0..k).map(|i| first - 4.0 * beta * i as f64).collect();
    if lengths.iter().any(|&d| d <= 0.0) {
        return None;
    }
    Some(lengths.iter().scan(0.0, |acc, d| {
        *acc += d;
        Some(*acc)
    }).take(k - 1).collect())
}

#[test]
fn criterion_1_uniform_scalar_equilibria() {
    let start = Instant::now();
    let src = SourceModel::iid_uniform(1, 0.0, 1.0).unwrap();
    let mut worst = 0.0f64;
    let mut ok = true;
    for k in 1..=3 {
        let q = solve_scalar_biased(&src, 0.05, k).unwrap();
        let oracle = uniform_oracle(0.05, k).unwrap();
        ok &= q.boundaries.len() == oracle.len();
        for (l, o) in q.boundaries.iter().zip(&oracle) {
            worst = worst.max((l - o).abs());
        }
    }
    ok &= uniform_oracle(0.05, 4).is_none();
    let k4 = solve_scalar_biased(&src, 0.05, 4);
    ok &= k4 == Err(Error::Infeasible { requested: 4, max_feasible: 3 });
    report(
        1,
        "uniform scalar equilibria",
        ok && worst <= 1e-9,
        start.elapsed(),
        Duration::from_secs(1),
        &format!("max boundary error {worst:.1e}; K=4 -> {k4:?}"),
    );
}

/// A dyadic rational with small numerator, so every product and sum below
/// is exact in binary floating point.
fn dyadic(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-256i32..=256) as f64 / 16.0
}

#[test]
fn criterion_2_geometry_identities() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=4);
        let pt = |rng: &mut ChaCha8Rng| (0..n).map(|_| dyadic(rng)).collect::<Vec<_>>();
        let (m, u1, u2, b) = (pt(&mut rng), pt(&mut rng), pt(&mut rng), pt(&mut rng));
        if u1 == u2 {
            continue;
        }
        // Encoder cost gap is exactly twice the indifference value.
        let h = h_value(&m, &u1, &u2, &b).unwrap();
        let gap = encoder_cost(&m, &u2, &b).unwrap() - encoder_cost(&m, &u1, &b).unwrap();
        if h.partial_cmp(&0.0) != gap.partial_cmp(&0.0) {
            mismatches += 1;
        }
        let slack = geo_slack(&u1, &u2, &b).unwrap();
        let lambda = lambda_bar(&u1, &u2, &b).unwrap();
        if (slack >= 0.0) != (0.0..=1.0).contains(&lambda) {
            mismatches += 1;
        }
    }
    let mut convexity_failures = 0;
    let mut checked = 0;
    while checked < 10_000 {
        let n = rng.random_range(1..=3);
        let k = rng.random_range(2..=5);
        let cont = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<f64>>();
        let actions = ActionSet::new((0..k).map(|_| cont(&mut rng)).collect()).unwrap();
        let b = cont(&mut rng);
        let (m1, m2) = (cont(&mut rng), cont(&mut rng));
        let i = assign_action(&m1, &actions, &b).unwrap();
        if assign_action(&m2, &actions, &b).unwrap() != i {
            continue;
        }
        let t: f64 = rng.random();
        let mix: Vec<f64> = m1.iter().zip(&m2).map(|(a, c)| t * a + (1.0 - t) * c).collect();
        if assign_action(&mix, &actions, &b).unwrap() != i {
            convexity_failures += 1;
        }
        checked += 1;
    }
    report(
        2,
        "geometry identities",
        mismatches == 0 && convexity_failures == 0,
        start.elapsed(),
        Duration::from_secs(5),
        &format!("{mismatches} sign/slack mismatches, {convexity_failures} convexity failures in {checked} mixes"),
    );
}

#[test]
fn criterion_3_transform_suite() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pair_err = 0.0f64;
    for _ in 0..10_000 {
        let r = |rng: &mut ChaCha8Rng| rng.random_range(-4.0..4.0);
        let b = [r(&mut rng), r(&mut rng)];
        let bt = b[0] * b[0] + b[1] * b[1];
        if bt < 1e-3 {
            continue;
        }
        let t = pair_transform_2d(&b).unwrap();
        let gram = t.inverse.transpose().matmul(&t.inverse);
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { 1.0 / bt } else { 0.0 };
                pair_err = pair_err.max((gram.get(i, j) - target).abs() * bt);
            }
        }
        let (m, u) = ([r(&mut rng), r(&mut rng)], [r(&mut rng), r(&mut rng)]);
        let (x, y) = (t.forward.mul_vec(&m), t.forward.mul_vec(&u));
        let decoupled = ((x[0] - y[0]).powi(2) + (x[1] - y[1] - bt).powi(2)) / bt;
        let direct = encoder_cost(&m, &u, &b).unwrap();
        pair_err = pair_err.max((decoupled - direct).abs() / (1.0 + direct));
    }
    let mut helmert_err = 0.0f64;
    for n in 2..=64 {
        let c = 0.75;
        let t = helmert_transform(n).unwrap().with_bias(&vec![c; n]).unwrap();
        let gram = t.forward.matmul(&t.forward.transpose());
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                helmert_err = helmert_err.max((gram.get(i, j) - target).abs());
            }
            let target = if i == n - 1 { (n as f64).sqrt() * c } else { 0.0 };
            helmert_err = helmert_err.max((t.transformed_bias[i] - target).abs());
        }
    }
    report(
        3,
        "transform suite",
        pair_err <= 1e-10 && helmert_err <= 1e-12,
        start.elapsed(),
        Duration::from_secs(5),
        &format!("pair transform error {pair_err:.1e}, Helmert error {helmert_err:.1e}"),
    );
}

fn identity_z(cert: &EquilibriumCertificate, b: &[f64]) -> f64 {
    cert.distortions.per_vector.je_minus_jd.z_score(b.iter().map(|x| x * x).sum())
}

#[test]
fn criteria_4_and_6_gaussian_certificates() {
    let start = Instant::now();
    let src = SourceModel::iid_gaussian(2, 0.0, 1.0).unwrap();
    let b = [1.0, 1.0];
    let budget = Budget::with_samples(1_000_000, 42);
    let mut lines = Vec::new();
    let mut all_pass = true;
    let mut identity_pass = true;
    for k in 1..=4 {
        let policy = construct_reveal_plus_quantize(&src, &b, k, None).unwrap();
        let cert = verify_equilibrium(&policy, &src, &b, &budget).unwrap();
        all_pass &= cert.passed;
        let z = identity_z(&cert, &b);
        identity_pass &= !cert.passed || z <= 3.0;
        lines.push(format!(
            "K_last={k}: slack {:.1e}, centroid {:.1e}±{:.1e}, gain {:.1e}, Je−Jd z={z:.2}",
            cert.min_pairwise_geo_slack,
            cert.max_centroid_residual.value,
            cert.max_centroid_residual.stderr,
            cert.encoder_deviation_gain.value,
        ));
    }
    let elapsed = start.elapsed();
    report(4, "equilibrium certificates", all_pass, elapsed, Duration::from_secs(60), &lines.join("; "));
    report(6, "distortion identity (gaussian certificates)", identity_pass, elapsed, Duration::from_secs(60), "all |z| ≤ 3");
}

#[test]
fn criteria_5_and_6_classification_fixtures() {
    let start = Instant::now();
    let gauss = SourceModel::iid_gaussian(2, 0.0, 1.0).unwrap();
    let exp = SourceModel::iid_exponential(2, 1.0).unwrap();
    let uni = SourceModel::iid_uniform(2, 0.0, 1.0).unwrap();
    let fixtures = [
        (&gauss, [1.0, 2.0], Existence::Yes),
        (&exp, [1.0, 1.0], Existence::No),
        (&uni, [1.0, -1.0], Existence::Yes),
        (&exp, [0.0, 3.0], Existence::Yes),
        (&exp, [1.0, 2.0], Existence::No),
    ];
    let budget = Budget::with_samples(1_000_000, 42);
    let mut ok = true;
    let mut identity_ok = true;
    let mut notes = Vec::new();
    for (src, b, expected) in fixtures {
        let verdict = classify_linear_existence(src, &b).unwrap();
        ok &= verdict.exists == expected;
        if expected == Existence::Yes {
            let linear = verify_linear_equilibrium(src, &b, &budget).unwrap();
            ok &= linear.passed;
            let policy = construct_reveal_plus_quantize(src, &b, 1, None).unwrap();
            let cert = verify_equilibrium(&policy, src, &b, &budget).unwrap();
            let z = identity_z(&cert, &b);
            identity_ok &= cert.passed && z <= 3.0;
            notes.push(format!(
                "{b:?}: exists, curve max|z| {:.2}, reveal certificate {}, Je−Jd z={z:.2}",
                linear.curve.max_abs_z,
                if cert.passed { "passed" } else { "failed" }
            ));
        } else {
            notes.push(format!("{b:?}: not-exists"));
        }
    }
    // The equal-bias exponential pair deviates from a flat curve and follows |t| + 1.
    let b = [1.0, 1.0];
    let linear = verify_linear_equilibrium(&exp, &b, &budget).unwrap();
    let oracle_z = linear
        .curve
        .grid
        .iter()
        .zip(&linear.curve.values)
        .map(|(t, v)| v.z_score(t.abs() + 1.0 - 2.0))
        .fold(0.0, f64::max);
    ok &= linear.curve.max_abs_z > 5.0 && oracle_z <= 3.0;
    notes.push(format!("exponential (1,1): flat-curve max|z| {:.1}, |t|+1 oracle max|z| {oracle_z:.2}", linear.curve.max_abs_z));
    let elapsed = start.elapsed();
    report(5, "classification fixtures", ok, elapsed, Duration::from_secs(120), &notes.join("; "));
    report(6, "distortion identity (linear certificates)", identity_ok, elapsed, Duration::from_secs(120), "all |z| ≤ 3");
}

#[test]
fn criterion_7_rate_distortion() {
    let start = Instant::now();
    let mut ok = team_rate_distortion(1.0, 0.25).unwrap() == 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let s = rng.random_range(0.1..10.0);
        let b: f64 = rng.random_range(-3.0..3.0);
        let dd = rng.random_range(0.01..20.0);
        let de = b * b + rng.random_range(0.01..20.0);
        let bound = game_rate_bound(s, b, de, dd).unwrap();
        let team = team_rate_distortion(s, dd.min(de - b * b)).unwrap();
        worst = worst.max((bound - team).abs());
    }
    ok &= worst <= 1e-12;
    let b = 0.5;
    let rows = asymptotic_experiment(1.0, b, 1, &[4, 16, 64], &Budget::with_samples(1_000_000, 42)).unwrap();
    let d_q = 1.0 - 2.0 / PI;
    let mut notes = vec![format!("bound identity error {worst:.1e}")];
    for r in &rows {
        let exact = ((r.n - 1) as f64 * d_q + 1.0) / r.n as f64;
        let jd_z = (r.jd_emp - exact).abs() / r.jd_stderr;
        let gap_z = (r.je_minus_jd - b * b).abs() / r.je_minus_jd_stderr;
        ok &= (r.jd_exact - exact).abs() < 1e-12 && jd_z <= 3.0 && gap_z <= 3.0;
        notes.push(format!("n={}: Jd/n {:.5} vs {exact:.5} (z={jd_z:.2}), Je−Jd z={gap_z:.2}", r.n, r.jd_emp));
    }
    report(7, "rate-distortion", ok, start.elapsed(), Duration::from_secs(120), &notes.join("; "));
}

const DETERMINISM_CONFIGS: [(&str, &str); 7] = [
    (
        "solve",
        "bias = [1.0, 1.0]\n[source]\nfamily = \"iid-gaussian\"\ndim = 2\nvariance = 1.0\n[solver]\nk = 3\nsamples = 20000\n",
    ),
    ("solve", "bias = [0.05]\n[source]\nfamily = \"iid-uniform\"\ndim = 1\nlo = 0.0\nhi = 1.0\n[solver]\nk = 3\n"),
    (
        "verify",
        "bias = [1.0, 1.0]\n[source]\nfamily = \"iid-gaussian\"\ndim = 2\nvariance = 1.0\n[solver]\nk = 2\nsamples = 50000\n[policy]\nkind = \"reveal-plus-quantize\"\n",
    ),
    ("classify", "bias = [1.0, 1.0]\n[source]\nfamily = \"iid-laplace\"\ndim = 2\nscale = 1.0\n"),
    ("rd", "[rd]\nb = 1.0\nde = 1.25\ndd = 0.5\nrate_team = 1.0\nd_team = 0.25\n"),
    ("transform", "bias = [1.0, 2.0, 2.0]\n[transform]\nkind = \"bias-aligning\"\n"),
    ("sweep", "[solver]\nsamples = 20000\n[sweep]\nb = 0.5\nrate = 1\nn_list = [2, 8]\n"),
];

fn payload(command: &str, config: &std::path::Path) -> (Option<i32>, String) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_cheaptalk"))
        .args([command, "--config"])
        .arg(config)
        .env_remove("CHEAPTALK_SEED")
        .output()
        .expect("cheaptalk runs");
    let record: serde_json::Value = serde_json::from_slice(&out.stdout).expect("one JSON record");
    let fields = format!("{}|{}|{}", record["command"], record["config_hash"], record["result"]);
    (out.status.code(), fields)
}

#[test]
fn criterion_8_cli_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for (i, (command, text)) in DETERMINISM_CONFIGS.iter().enumerate() {
        let path = dir.path().join(format!("run{i}.toml"));
        std::fs::write(&path, text).unwrap();
        let (code_a, first) = payload(command, &path);
        let (code_b, second) = payload(command, &path);
        let same = first == second && code_a == code_b;
        ok &= same;
        notes.push(format!("{command}: {}", if same { "identical" } else { "differs" }));
    }
    report(8, "determinism", ok, start.elapsed(), Duration::from_secs(120), &notes.join(", "));
}
