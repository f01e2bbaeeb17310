//! Rate-distortion trade-offs of the game against the cooperative baseline.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    expected_distortions, scalar_equilibrium, CoordinatePolicy, EncoderPolicy, LinearPolicy, ScalarQuantizer,
};
use crate::error::{Error, Result};
use crate::sources::{Budget, Marginal, SourceModel};
use crate::transforms::helmert_transform;

/// Largest rate the experiment accepts, in bits per quantized coordinate.
const MAX_EXPERIMENT_RATE: u32 = 12;

/// A rate with the encoder's and decoder's distortions, all per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdTuple {
    /// Bits per source dimension.
    pub rate: f64,
    pub de: f64,
    pub dd: f64,
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {x}")))
    }
}

/// `max(0, ½·log₂(σ²/D))` for a Gaussian source of variance `σ²`.
pub fn team_rate_distortion(sigma_sq: f64, d: f64) -> Result<f64> {
    check_positive("variance", sigma_sq)?;
    if !(d > 0.0) {
        return Err(Error::NonpositiveDistortion(d));
    }
    Ok((0.5 * (sigma_sq / d).log2()).max(0.0))
}

/// The game tuple reached by a team code `(R_T, D_T)` when the decoder
/// best-responds: the encoder pays the extra `b²`.
pub fn achievable_tuple(sigma_sq: f64, rate_team: f64, d_team: f64, b: f64) -> Result<RdTuple> {
    if !(rate_team >= 0.0 && rate_team.is_finite()) {
        return Err(Error::InvalidParameter(format!("rate must be nonnegative, got {rate_team}")));
    }
    if !b.is_finite() {
        return Err(Error::InvalidParameter(format!("bias {b} is not finite")));
    }
    let needed = team_rate_distortion(sigma_sq, d_team)?;
    // Rates above R(D) are wasteful but still achieve D; below it nothing does.
    if rate_team < needed * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "rate {rate_team} is below R({d_team}) = {needed}; no code reaches that distortion"
        )));
    }
    Ok(RdTuple { rate: rate_team, de: d_team + b * b, dd: d_team })
}

/// Upper bound on the rate any equilibrium needs to meet `(De, Dd)`:
/// `½·log₂(σ²/min{Dd, De − b²})`, clamped at zero.
pub fn game_rate_bound(sigma_sq: f64, b: f64, de: f64, dd: f64) -> Result<f64> {
    check_positive("variance", sigma_sq)?;
    if !(de > 0.0) {
        return Err(Error::NonpositiveDistortion(de));
    }
    if !(dd > 0.0) {
        return Err(Error::NonpositiveDistortion(dd));
    }
    let target = dd.min(de - b * b);
    if !(target > 0.0) {
        return Err(Error::UnreachableDistortion { de, bias_sq: b * b });
    }
    team_rate_distortion(sigma_sq, target)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticRow {
    pub n: usize,
    /// Bits per quantized coordinate.
    pub rate: u32,
    pub jd_emp: f64,
    pub jd_stderr: f64,
    pub je_emp: f64,
    pub je_stderr: f64,
    pub jd_exact: f64,
    pub je_minus_jd: f64,
    pub je_minus_jd_stderr: f64,
}

/// The scalar Lloyd-Max quantizer with `2^rate` levels for `N(0, σ²)` and
/// its mean squared error.
fn lloyd_max(sigma_sq: f64, rate: u32) -> Result<(ScalarQuantizer, f64)> {
    let law = Marginal::Gaussian { mean: 0.0, sd: sigma_sq.sqrt() };
    let q = scalar_equilibrium(&law, 0.0, 1 << rate)?;
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend_from_slice(&q.boundaries);
    edges.push(f64::INFINITY);
    // Centroid quantizers lose exactly the variance of their output.
    let captured: f64 = q
        .actions
        .iter()
        .enumerate()
        .map(|(i, u)| law.interval_stats(edges[i], edges[i + 1]).0 * u * u)
        .sum();
    Ok((q, sigma_sq - captured))
}

/// For each `n`, decouples an iid `N(0, σ²)` source with equal bias `b` per
/// component through the Helmert transform, quantizes the first `n − 1`
/// coordinates with a `2^rate`-level Lloyd-Max quantizer, keeps the last
/// one silent, and reports per-dimension distortions.
pub fn asymptotic_experiment(
    sigma_sq: f64,
    b: f64,
    rate: u32,
    n_list: &[usize],
    budget: &Budget,
) -> Result<Vec<AsymptoticRow>> {
    check_positive("variance", sigma_sq)?;
    if !b.is_finite() {
        return Err(Error::InvalidParameter(format!("bias {b} is not finite")));
    }
    if rate > MAX_EXPERIMENT_RATE {
        return Err(Error::InvalidParameter(format!("rate {rate} exceeds {MAX_EXPERIMENT_RATE} bits")));
    }
    if let Some(&n) = n_list.iter().find(|&&n| n < 2) {
        return Err(Error::InvalidParameter(format!("dimension {n} is below 2")));
    }
    let (quantizer, d_q) = lloyd_max(sigma_sq, rate)?;
    n_list
        .iter()
        .map(|&n| {
            let source = SourceModel::iid_gaussian(n, 0.0, sigma_sq)?;
            let bias = vec![b; n];
            let transform = helmert_transform(n)?.with_bias(&bias)?;
            let beta = transform.transformed_bias[n - 1];
            let mut coordinates = vec![CoordinatePolicy::Quantized(quantizer.clone()); n - 1];
            coordinates.push(CoordinatePolicy::Quantized(ScalarQuantizer::single(0.0, beta)));
            let policy = EncoderPolicy::Linear(LinearPolicy::new(transform, coordinates, None)?);
            let report = expected_distortions(&policy, &source, &bias, budget)?.per_dimension;
            Ok(AsymptoticRow {
                n,
                rate,
                jd_emp: report.jd.value,
                jd_stderr: report.jd.stderr,
                je_emp: report.je.value,
                je_stderr: report.je.stderr,
                jd_exact: ((n - 1) as f64 * d_q + sigma_sq) / n as f64,
                je_minus_jd: report.je_minus_jd.value,
                je_minus_jd_stderr: report.je_minus_jd.stderr,
            })
        })
        .collect()
}

/// Writes rows with the header `n,R,Jd_emp,Jd_stderr,Je_emp,Je_stderr,Jd_exact`.
pub fn write_asymptotic_csv<W: std::io::Write>(rows: &[AsymptoticRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let table = |e: csv::Error| Error::Table(e.to_string());
    out.write_record(["n", "R", "Jd_emp", "Jd_stderr", "Je_emp", "Je_stderr", "Jd_exact"]).map_err(table)?;
    for r in rows {
        out.write_record([
            r.n.to_string(),
            r.rate.to_string(),
            r.jd_emp.to_string(),
            r.jd_stderr.to_string(),
            r.je_emp.to_string(),
            r.je_stderr.to_string(),
            r.jd_exact.to_string(),
        ])
        .map_err(table)?;
    }
    out.flush().map_err(|e| Error::Table(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn team_rate_examples() {
        assert_eq!(team_rate_distortion(1.0, 0.25).unwrap(), 1.0);
        assert_eq!(team_rate_distortion(3.0, 3.0).unwrap(), 0.0);
        assert_eq!(team_rate_distortion(3.0, 6.0).unwrap(), 0.0);
        assert_eq!(team_rate_distortion(1.0, 0.0), Err(Error::NonpositiveDistortion(0.0)));
    }

    #[test]
    fn achievable_examples() {
        assert_eq!(achievable_tuple(1.0, 1.0, 0.25, 1.0).unwrap(), RdTuple { rate: 1.0, de: 1.25, dd: 0.25 });
        assert_eq!(achievable_tuple(2.0, 0.0, 2.0, 0.5).unwrap(), RdTuple { rate: 0.0, de: 2.25, dd: 2.0 });
        let t = achievable_tuple(1.0, 2.0, 0.0625, 0.0).unwrap();
        assert_eq!(t.de, t.dd);
        assert!(achievable_tuple(1.0, 0.5, 0.25, 1.0).is_err());
    }

    #[test]
    fn game_bound_examples() {
        assert_eq!(game_rate_bound(1.0, 1.0, 1.25, 0.5).unwrap(), 1.0);
        assert_eq!(game_rate_bound(1.0, 1.0, 3.0, 2.0).unwrap(), 0.0);
        assert!(matches!(game_rate_bound(1.0, 1.0, 0.5, 0.5), Err(Error::UnreachableDistortion { .. })));
    }

    #[test]
    fn one_bit_lloyd_max_distortion() {
        let (q, d) = lloyd_max(1.0, 1).unwrap();
        assert_eq!(q.len(), 2);
        assert!((d - (1.0 - 2.0 / std::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn csv_header_and_rows() {
        let rows = asymptotic_experiment(1.0, 0.5, 1, &[2, 4], &Budget::with_samples(20_000, 5)).unwrap();
        let mut buf = Vec::new();
        write_asymptotic_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("n,R,Jd_emp,Jd_stderr,Je_emp,Je_stderr,Jd_exact"));
        assert_eq!(lines.count(), 2);
    }

    proptest! {
        #[test]
        fn game_bound_is_team_rate_at_the_binding_distortion(
            s in 0.1f64..10.0, b in -3.0f64..3.0, dd in 0.01f64..20.0, extra in 0.01f64..20.0,
        ) {
            let de = b * b + extra;
            let bound = game_rate_bound(s, b, de, dd).unwrap();
            let team = team_rate_distortion(s, dd.min(de - b * b)).unwrap();
            prop_assert!((bound - team).abs() <= 1e-12);
        }
    }
}
