use std::io::Write;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

use super::{ht_estimate, neymann_variance};
use crate::design::{arm_treated_clusters, cluster_based_assignment, eoe_assign, Arm};
use crate::error::{Error, Result};
use crate::model::{Clustering, Noise, OutcomeModel};
use crate::rng;

const DESIGN_STREAM: u64 = 11;
const NOISE_STREAM: u64 = 12;

/// One arm's estimate from a single design draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArmDraw {
    pub tau_hat: f64,
    /// `None` when a bucket had fewer than two clusters.
    pub sigma_hat: Option<f64>,
}

/// A randomized design that can be drawn and analysed from a seed.
pub trait DesignSampler: Sync {
    fn arm_labels(&self) -> Vec<String>;

    fn draw(&self, model: &dyn OutcomeModel, seed: u64) -> Result<Vec<ArmDraw>>;
}

fn analyse(y: &[f64], z: &[bool], clustering: &Clustering) -> Result<ArmDraw> {
    let e = ht_estimate(y, z, clustering)?;
    let sigma_hat = neymann_variance(y, z, clustering).ok().map(|v| v.sigma_hat);
    Ok(ArmDraw {
        tau_hat: e.tau_hat,
        sigma_hat,
    })
}

fn noise_for(seed: u64) -> Noise {
    Noise::Seeded(rng::child_seed(seed, &[NOISE_STREAM]))
}

/// Cluster-based design over a full clustering.
pub struct CbrSampler<'a> {
    clustering: &'a Clustering,
    m_treated: usize,
    label: String,
}

impl<'a> CbrSampler<'a> {
    /// Treats `⌊M/2⌋` clusters.
    pub fn new(clustering: &'a Clustering) -> Self {
        Self::with_treated(clustering, arm_treated_clusters(clustering.n_clusters()))
    }

    pub fn with_treated(clustering: &'a Clustering, m_treated: usize) -> Self {
        Self {
            clustering,
            m_treated,
            label: "cbr".into(),
        }
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

impl DesignSampler for CbrSampler<'_> {
    fn arm_labels(&self) -> Vec<String> {
        vec![self.label.clone()]
    }

    fn draw(&self, model: &dyn OutcomeModel, seed: u64) -> Result<Vec<ArmDraw>> {
        let z = cluster_based_assignment(
            self.clustering,
            self.m_treated,
            &mut rng::child(seed, &[DESIGN_STREAM]),
        )?;
        let y = model.outcomes(&z, noise_for(seed))?;
        Ok(vec![analyse(&y, z.clusters().expect("cluster draw"), self.clustering)?])
    }
}

/// Experiment-of-experiments design comparing two clusterings.
pub struct EoeSampler<'a> {
    c1: &'a Clustering,
    c2: &'a Clustering,
    labels: [String; 2],
}

impl<'a> EoeSampler<'a> {
    pub fn new(c1: &'a Clustering, c2: &'a Clustering) -> Self {
        Self {
            c1,
            c2,
            labels: ["eoe_1".into(), "eoe_2".into()],
        }
    }

    pub fn labeled(mut self, one: impl Into<String>, two: impl Into<String>) -> Self {
        self.labels = [one.into(), two.into()];
        self
    }
}

impl DesignSampler for EoeSampler<'_> {
    fn arm_labels(&self) -> Vec<String> {
        self.labels.to_vec()
    }

    fn draw(&self, model: &dyn OutcomeModel, seed: u64) -> Result<Vec<ArmDraw>> {
        let design = eoe_assign(self.c1, self.c2, rng::child_seed(seed, &[DESIGN_STREAM]))?;
        let y = model.outcomes(&design.assignment, noise_for(seed))?;
        Arm::BOTH
            .iter()
            .map(|&arm| {
                let ac = design.arm(arm);
                analyse(&ac.restrict(&y), design.cluster_z(arm), &ac.clustering)
            })
            .collect()
    }
}

/// Monte-Carlo summary of one arm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSummary {
    pub label: String,
    pub mean: f64,
    pub stderr: f64,
    /// `(replicate, draw)` pairs of the non-excluded replications.
    pub draws: Vec<(usize, ArmDraw)>,
}

impl ArmSummary {
    pub fn samples(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.1.tau_hat).collect()
    }

    fn from_draws(label: String, draws: Vec<(usize, ArmDraw)>) -> Self {
        let n = draws.len() as f64;
        let mean = draws.iter().map(|d| d.1.tau_hat).sum::<f64>() / n;
        let var = if draws.len() > 1 {
            draws.iter().map(|d| (d.1.tau_hat - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            label,
            mean,
            stderr: (var / n).sqrt(),
            draws,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloResult {
    pub replications: usize,
    pub excluded: usize,
    pub arms: Vec<ArmSummary>,
}

impl MonteCarloResult {
    pub fn arm(&self, index: usize) -> &ArmSummary {
        &self.arms[index]
    }
}

/// Draws `replications` independent designs and summarises the HT estimates
/// per arm. Replication `r` uses the child stream `[r]` of `master_seed`, so
/// results do not depend on scheduling.
///
/// Draws that fail with a degenerate design or undefined estimator are
/// excluded; more than 10% exclusions is an error.
pub fn monte_carlo_expectation(
    sampler: &dyn DesignSampler,
    model: &dyn OutcomeModel,
    replications: usize,
    master_seed: u64,
) -> Result<MonteCarloResult> {
    if replications < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 replications, got {replications}"
        )));
    }
    let run = |r: usize| sampler.draw(model, rng::child_seed(master_seed, &[r as u64]));
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<Vec<ArmDraw>>> = (0..replications).into_par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<Vec<ArmDraw>>> = (0..replications).map(run).collect();

    let labels = sampler.arm_labels();
    let mut per_arm: Vec<Vec<(usize, ArmDraw)>> = vec![Vec::with_capacity(replications); labels.len()];
    let mut excluded = 0;
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(draws) => {
                for (arm, d) in draws.into_iter().enumerate() {
                    per_arm[arm].push((r, d));
                }
            }
            Err(e) if e.is_degenerate_draw() => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    if excluded * 10 > replications || excluded == replications {
        return Err(Error::Unreliable {
            excluded,
            total: replications,
        });
    }
    if excluded > 0 {
        log::debug!("excluded {excluded} degenerate draw(s) of {replications}");
    }
    let arms = labels
        .into_iter()
        .zip(per_arm)
        .map(|(label, draws)| ArmSummary::from_draws(label, draws))
        .collect();
    Ok(MonteCarloResult {
        replications,
        excluded,
        arms,
    })
}

/// Writes `replicate,arm,tau_hat,sigma_hat` rows; a missing variance is an
/// empty field.
pub fn write_samples_csv<'a, W, I>(out: W, arms: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a ArmSummary>,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replicate", "arm", "tau_hat", "sigma_hat"])?;
    for arm in arms {
        for (r, d) in &arm.draws {
            w.write_record([
                r.to_string(),
                arm.label.clone(),
                d.tau_hat.to_string(),
                d.sigma_hat.map(|s| s.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SutvaModel;

    #[test]
    fn constant_model_has_zero_mean_and_stderr() {
        let c = Clustering::from_labels((0..20).map(|i| i % 5).collect());
        let m = SutvaModel::constant(20, 3.0);
        let r = monte_carlo_expectation(&CbrSampler::new(&c), &m, 100, 1).unwrap();
        assert_eq!(r.arm(0).mean, 0.0);
        assert_eq!(r.arm(0).stderr, 0.0);
        assert_eq!(r.arm(0).draws.len(), 100);
    }

    #[test]
    fn reproducible_bit_for_bit() {
        let c1 = Clustering::from_labels((0..40).map(|i| i % 8).collect());
        let c2 = Clustering::singletons(40);
        let m = SutvaModel::new(
            (0..40).map(|i| i as f64 * 0.1).collect(),
            (0..40).map(|i| (i as f64).sin() + 2.0).collect(),
        )
        .unwrap();
        let s = EoeSampler::new(&c1, &c2);
        let a = monte_carlo_expectation(&s, &m, 64, 99).unwrap();
        let b = monte_carlo_expectation(&s, &m, 64, 99).unwrap();
        assert_eq!(a, b);
        let c = monte_carlo_expectation(&s, &m, 64, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_few_replications() {
        let c = Clustering::singletons(4);
        let m = SutvaModel::constant(4, 0.0);
        assert!(monte_carlo_expectation(&CbrSampler::new(&c), &m, 1, 0).is_err());
    }

    #[test]
    fn degenerate_draws_beyond_ten_percent_fail() {
        // one cluster: every draw has an empty treated bucket
        let c = Clustering::single_cluster(4);
        let m = SutvaModel::constant(4, 1.0);
        let r = monte_carlo_expectation(&CbrSampler::new(&c), &m, 10, 0);
        assert!(matches!(r, Err(Error::Unreliable { excluded: 10, total: 10 })));
    }

    #[test]
    fn csv_export_columns() {
        // one treated cluster per draw, so no variance estimate
        let c = Clustering::singletons(3);
        let m = SutvaModel::constant(3, 1.0);
        let r = monte_carlo_expectation(&CbrSampler::new(&c).labeled("direct"), &m, 3, 0).unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &r.arms).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("replicate,arm,tau_hat,sigma_hat"));
        assert_eq!(lines.next(), Some("0,direct,0,"));
        assert_eq!(text.lines().count(), 4);
    }
}
