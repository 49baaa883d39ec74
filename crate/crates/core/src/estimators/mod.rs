//! Horvitz-Thompson estimation, the Neyman variance bound and the
//! normal-approximation test used to compare two clusterings.

mod exhaustive;
mod monte_carlo;

pub use exhaustive::{
    cluster_draws, exhaustive_cbr, exhaustive_eoe, ExactMoments,
};
pub use monte_carlo::{
    monte_carlo_expectation, write_samples_csv, ArmDraw, ArmSummary, CbrSampler, DesignSampler,
    EoeSampler, MonteCarloResult,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Clustering;

/// Horvitz-Thompson point estimate together with the bucket counts used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HtEstimate {
    pub tau_hat: f64,
    pub m_treated: usize,
    pub m_control: usize,
    pub m_total: usize,
    pub n_units: usize,
}

/// Neyman-style variance estimate from within-bucket variability of cluster
/// totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub sigma_hat: f64,
    pub s_treated: f64,
    pub s_control: f64,
    pub cluster_totals: Vec<f64>,
}

/// Cluster totals `Y'_j = Σ_{i ∈ C_j} Y_i`.
pub fn cluster_totals(y: &[f64], clustering: &Clustering) -> Vec<f64> {
    clustering
        .clusters()
        .map(|members| members.iter().map(|&i| y[i]).sum())
        .collect()
}

fn check_inputs(y: &[f64], z_clusters: &[bool], clustering: &Clustering) -> Result<()> {
    if y.len() != clustering.n_units() {
        return Err(Error::Dimension {
            what: "outcome vector",
            expected: clustering.n_units(),
            found: y.len(),
        });
    }
    if z_clusters.len() != clustering.n_clusters() {
        return Err(Error::Dimension {
            what: "cluster assignment",
            expected: clustering.n_clusters(),
            found: z_clusters.len(),
        });
    }
    Ok(())
}

/// `τ̂ = (M/N) [ (1/M_T) Σ_j z_j Y'_j − (1/M_C) Σ_j (1 − z_j) Y'_j ]`.
pub fn ht_estimate(y: &[f64], z_clusters: &[bool], clustering: &Clustering) -> Result<HtEstimate> {
    check_inputs(y, z_clusters, clustering)?;
    let totals = cluster_totals(y, clustering);
    let (mut sum_t, mut sum_c, mut m_t, mut m_c) = (0.0, 0.0, 0usize, 0usize);
    for (total, &treated) in totals.iter().zip(z_clusters) {
        if treated {
            sum_t += total;
            m_t += 1;
        } else {
            sum_c += total;
            m_c += 1;
        }
    }
    if m_t == 0 || m_c == 0 {
        return Err(Error::UndefinedEstimator(format!(
            "{m_t} treated and {m_c} control clusters; both buckets must be non-empty"
        )));
    }
    let m = totals.len();
    let n = y.len();
    let tau_hat = m as f64 / n as f64 * (sum_t / m_t as f64 - sum_c / m_c as f64);
    Ok(HtEstimate {
        tau_hat,
        m_treated: m_t,
        m_control: m_c,
        m_total: m,
        n_units: n,
    })
}

fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// `σ̂ = (M/N) (S_t / M_t + S_c / M_c)` where `S_t`, `S_c` are the unbiased
/// sample variances of treated and control cluster totals.
pub fn neymann_variance(y: &[f64], z_clusters: &[bool], clustering: &Clustering) -> Result<VarianceEstimate> {
    check_inputs(y, z_clusters, clustering)?;
    let totals = cluster_totals(y, clustering);
    let (treated, control): (Vec<(f64, bool)>, Vec<(f64, bool)>) = totals
        .iter()
        .copied()
        .zip(z_clusters.iter().copied())
        .partition(|&(_, t)| t);
    let treated: Vec<f64> = treated.into_iter().map(|p| p.0).collect();
    let control: Vec<f64> = control.into_iter().map(|p| p.0).collect();
    if treated.len() < 2 || control.len() < 2 {
        return Err(Error::InsufficientReplication(format!(
            "{} treated and {} control clusters; at least 2 of each are needed",
            treated.len(),
            control.len()
        )));
    }
    let s_treated = sample_variance(&treated);
    let s_control = sample_variance(&control);
    let scale = totals.len() as f64 / y.len() as f64;
    let sigma_hat =
        scale * (s_treated / treated.len() as f64 + s_control / control.len() as f64);
    Ok(VarianceEstimate {
        sigma_hat,
        s_treated,
        s_control,
        cluster_totals: totals,
    })
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Sign of the bias that the interference mechanism induces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Cluster-based estimates underestimate the total effect.
    Increasing,
    /// Cluster-based estimates overestimate the total effect.
    Decreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Better {
    Clustering1,
    Clustering2,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonVerdict {
    pub statistic: f64,
    /// `Φ(statistic)`.
    pub p_value: f64,
    pub better: Better,
    pub direction: Direction,
    pub alpha: f64,
    /// Assumed correlation between the two arm estimates.
    pub correlation: f64,
}

/// Compares two arm estimates under a normal approximation, assuming the
/// estimates are independent.
pub fn compare_clusterings_test(
    e1: &HtEstimate,
    v1: &VarianceEstimate,
    e2: &HtEstimate,
    v2: &VarianceEstimate,
    alpha: f64,
    direction: Direction,
) -> Result<ComparisonVerdict> {
    compare_estimates(e1.tau_hat, v1.sigma_hat, e2.tau_hat, v2.sigma_hat, alpha, direction, 0.0)
}

/// Sensitivity variant of [`compare_clusterings_test`]: the combined variance
/// is `σ̂₁ + σ̂₂ − 2ρ√(σ̂₁σ̂₂)`.
pub fn compare_clusterings_test_correlated(
    e1: &HtEstimate,
    v1: &VarianceEstimate,
    e2: &HtEstimate,
    v2: &VarianceEstimate,
    alpha: f64,
    direction: Direction,
    correlation: f64,
) -> Result<ComparisonVerdict> {
    compare_estimates(
        e1.tau_hat,
        v1.sigma_hat,
        e2.tau_hat,
        v2.sigma_hat,
        alpha,
        direction,
        correlation,
    )
}

/// Test on raw estimates and variances.
///
/// With an increasing mechanism both estimates sit below the truth, so the
/// clustering with the significantly larger estimate is the less biased one;
/// with a decreasing mechanism the smaller estimate wins.
pub fn compare_estimates(
    tau1: f64,
    var1: f64,
    tau2: f64,
    var2: f64,
    alpha: f64,
    direction: Direction,
    correlation: f64,
) -> Result<ComparisonVerdict> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("alpha {alpha} is not in [0, 1]")));
    }
    if !(-1.0..=1.0).contains(&correlation) {
        return Err(Error::Parameter(format!(
            "correlation {correlation} is not in [-1, 1]"
        )));
    }
    if var1 < 0.0 || var2 < 0.0 {
        return Err(Error::Parameter("variances must be non-negative".into()));
    }
    let combined = var1 + var2 - 2.0 * correlation * (var1 * var2).sqrt();
    if !(combined > 0.0) {
        return Err(Error::DegenerateTest);
    }
    let statistic = (tau1 - tau2) / combined.sqrt();
    let p_value = normal_cdf(statistic);
    let first_smaller = p_value < alpha;
    let first_larger = normal_cdf(-statistic) < alpha;
    let better = match (direction, first_smaller, first_larger) {
        (Direction::Increasing, true, _) => Better::Clustering2,
        (Direction::Increasing, _, true) => Better::Clustering1,
        (Direction::Decreasing, true, _) => Better::Clustering1,
        (Direction::Decreasing, _, true) => Better::Clustering2,
        _ => Better::Inconclusive,
    };
    Ok(ComparisonVerdict {
        statistic,
        p_value,
        better,
        direction,
        alpha,
        correlation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ht_hand_examples() {
        let e = ht_estimate(&[1.0, 0.0], &[true, false], &Clustering::singletons(2)).unwrap();
        assert_eq!(e.tau_hat, 1.0);
        let c = Clustering::from_labels(vec![0, 0, 1, 1]);
        let e = ht_estimate(&[1.0, 2.0, 3.0, 4.0], &[true, false], &c).unwrap();
        assert_eq!(e.tau_hat, -2.0);
        assert_eq!((e.m_treated, e.m_control, e.m_total, e.n_units), (1, 1, 2, 4));
    }

    #[test]
    fn ht_constant_outcomes_cancel() {
        let c = Clustering::from_labels(vec![0, 0, 1, 1, 2, 2, 3, 3]);
        let e = ht_estimate(&[2.5; 8], &[true, false, true, false], &c).unwrap();
        assert_eq!(e.tau_hat, 0.0);
    }

    #[test]
    fn ht_undefined_without_both_buckets() {
        let c = Clustering::singletons(3);
        let r = ht_estimate(&[1.0; 3], &[true; 3], &c);
        assert!(matches!(r, Err(Error::UndefinedEstimator(_))));
        let r = ht_estimate(&[1.0; 3], &[false; 3], &c);
        assert!(matches!(r, Err(Error::UndefinedEstimator(_))));
    }

    #[test]
    fn ht_dimension_errors() {
        let c = Clustering::singletons(3);
        assert!(matches!(
            ht_estimate(&[1.0; 2], &[true, false, false], &c),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            ht_estimate(&[1.0; 3], &[true, false], &c),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn neymann_hand_example() {
        // treated totals {2, 4}, control totals {1, 3}
        let v = neymann_variance(
            &[2.0, 1.0, 4.0, 3.0],
            &[true, false, true, false],
            &Clustering::singletons(4),
        )
        .unwrap();
        assert_eq!(v.s_treated, 2.0);
        assert_eq!(v.s_control, 2.0);
        assert_eq!(v.sigma_hat, 2.0);
    }

    #[test]
    fn neymann_zero_when_buckets_constant() {
        let c = Clustering::from_labels(vec![0, 0, 1, 1, 2, 2, 3, 3]);
        let y = [1.0, 2.0, 5.0, -2.0, 0.5, 2.5, 4.0, -1.0];
        let v = neymann_variance(&y, &[true, false, true, false], &c).unwrap();
        assert_eq!(v.sigma_hat, 0.0);
    }

    #[test]
    fn neymann_scales_quadratically() {
        let c = Clustering::singletons(6);
        let z = [true, false, true, false, true, false];
        let y = [1.0, 4.0, -2.0, 0.5, 3.0, 7.0];
        let scaled: Vec<f64> = y.iter().map(|v| v * 3.0).collect();
        let a = neymann_variance(&y, &z, &c).unwrap().sigma_hat;
        let b = neymann_variance(&scaled, &z, &c).unwrap().sigma_hat;
        assert_abs_diff_eq!(b, 9.0 * a, epsilon = 1e-12);
    }

    #[test]
    fn neymann_needs_two_per_bucket() {
        let c = Clustering::singletons(3);
        let r = neymann_variance(&[1.0; 3], &[true, false, false], &c);
        assert!(matches!(r, Err(Error::InsufficientReplication(_))));
    }

    /// Independent route: `Φ(x) = 1/2 + φ(x) Σ x^(2n+1) / (2n+1)!!`.
    fn series_cdf(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..500 {
            term *= x * x / (2 * n + 1) as f64;
            sum += term;
            if term.abs() < 1e-20 {
                break;
            }
        }
        0.5 + sum * (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_abs_diff_eq!(normal_cdf(-1.959964), 0.025, epsilon = 1e-6);
        assert_eq!(normal_cdf(40.0), 1.0);
        assert_eq!(normal_cdf(f64::INFINITY), 1.0);
        assert_eq!(normal_cdf(f64::NEG_INFINITY), 0.0);
        for i in -60..=60 {
            let x = i as f64 / 10.0;
            assert_abs_diff_eq!(normal_cdf(x), series_cdf(x), epsilon = 1e-7);
        }
    }

    #[test]
    fn comparison_examples() {
        let v = compare_estimates(1.0, 0.5, 3.0, 0.5, 0.05, Direction::Increasing, 0.0).unwrap();
        assert_abs_diff_eq!(v.statistic, -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.p_value, 0.022_750_131_948_179, epsilon = 1e-9);
        assert_eq!(v.better, Better::Clustering2);

        let v = compare_estimates(1.0, 0.5, 3.0, 0.5, 0.05, Direction::Decreasing, 0.0).unwrap();
        assert_eq!(v.better, Better::Clustering1);

        let v = compare_estimates(2.0, 0.5, 2.0, 0.5, 0.05, Direction::Increasing, 0.0).unwrap();
        assert_eq!(v.statistic, 0.0);
        assert_eq!(v.p_value, 0.5);
        assert_eq!(v.better, Better::Inconclusive);

        let v = compare_estimates(3.0, 0.5, 1.0, 0.5, 0.05, Direction::Increasing, 0.0).unwrap();
        assert_eq!(v.better, Better::Clustering1);
    }

    #[test]
    fn comparison_degenerate_and_correlated() {
        assert!(matches!(
            compare_estimates(1.0, 0.0, 2.0, 0.0, 0.05, Direction::Increasing, 0.0),
            Err(Error::DegenerateTest)
        ));
        // perfectly correlated equal variances collapse the combined variance
        assert!(matches!(
            compare_estimates(1.0, 0.5, 2.0, 0.5, 0.05, Direction::Increasing, 1.0),
            Err(Error::DegenerateTest)
        ));
        let v = compare_estimates(1.0, 0.5, 3.0, 0.5, 0.05, Direction::Increasing, 0.5).unwrap();
        assert_abs_diff_eq!(v.statistic, -2.0 / 0.5f64.sqrt(), epsilon = 1e-12);
    }
}
