//! Linear interference model and its closed-form bias, plus generic
//! monotonicity diagnostics.
//!
//! The linear model is
//!
//! ```text
//! Y_i(Z) = α_i + β_i Z_i + γ_i ρ_i + ε_i,    ρ_i = (1/|N_i|) Σ_{j ∈ N_i} Z_j
//! ```
//!
//! Under a cluster-based design with `M` clusters the HT estimator has
//! expectation `β̄ + (1/N) Σ γ_i (θ_i − (1 − θ_i)/(M − 1))`, where `θ_i` is the
//! share of `N_i` inside unit `i`'s cluster. This holds for any number of
//! treated clusters between 1 and `M − 1`.

use std::io::Read;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::design::{arm_treated_clusters, ArmClustering};
use crate::error::{Error, Result};
use crate::estimators::{cluster_draws, Direction};
use crate::model::{cluster_exposure, Assignment, Clustering, NeighborhoodGraph, Noise, OutcomeModel};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearInterferenceModel {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    noise_sd: f64,
    graph: NeighborhoodGraph,
}

#[derive(Debug, Deserialize)]
struct ParamRow {
    unit: usize,
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl LinearInterferenceModel {
    pub fn new(
        alpha: Vec<f64>,
        beta: Vec<f64>,
        gamma: Vec<f64>,
        noise_sd: f64,
        graph: NeighborhoodGraph,
    ) -> Result<Self> {
        let n = graph.n_units();
        for (what, len) in [
            ("alpha", alpha.len()),
            ("beta", beta.len()),
            ("gamma", gamma.len()),
        ] {
            if len != n {
                return Err(Error::Dimension {
                    what,
                    expected: n,
                    found: len,
                });
            }
        }
        if !(noise_sd >= 0.0) {
            return Err(Error::Parameter(format!("noise_sd {noise_sd} must be >= 0")));
        }
        Ok(Self {
            alpha,
            beta,
            gamma,
            noise_sd,
            graph,
        })
    }

    /// Homogeneous parameters for every unit.
    pub fn homogeneous(graph: NeighborhoodGraph, alpha: f64, beta: f64, gamma: f64, noise_sd: f64) -> Result<Self> {
        let n = graph.n_units();
        Self::new(vec![alpha; n], vec![beta; n], vec![gamma; n], noise_sd, graph)
    }

    /// Loads `unit,alpha,beta,gamma` rows. Every unit of the graph must be
    /// listed exactly once.
    pub fn from_csv<R: Read>(reader: R, graph: NeighborhoodGraph, noise_sd: f64) -> Result<Self> {
        let n = graph.n_units();
        let mut seen = vec![false; n];
        let (mut alpha, mut beta, mut gamma) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        for row in rdr.deserialize() {
            let row: ParamRow = row?;
            if row.unit >= n {
                return Err(Error::Data(format!("unit {} is outside 0..{n}", row.unit)));
            }
            if std::mem::replace(&mut seen[row.unit], true) {
                return Err(Error::Data(format!("unit {} listed twice", row.unit)));
            }
            alpha[row.unit] = row.alpha;
            beta[row.unit] = row.beta;
            gamma[row.unit] = row.gamma;
        }
        if let Some(u) = seen.iter().position(|s| !s) {
            return Err(Error::Data(format!("no parameters for unit {u}")));
        }
        Self::new(alpha, beta, gamma, noise_sd, graph)
    }

    pub fn n_units(&self) -> usize {
        self.graph.n_units()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn graph(&self) -> &NeighborhoodGraph {
        &self.graph
    }

    /// Share of treated neighbours; isolated units use their own treatment.
    pub fn exposure(&self, z: &Assignment, unit: usize) -> f64 {
        let ns = self.graph.neighbors(unit);
        if ns.is_empty() {
            return f64::from(u8::from(z.is_treated(unit)));
        }
        ns.iter().filter(|&&j| z.is_treated(j)).count() as f64 / ns.len() as f64
    }

    /// Outcomes under assignment `z`.
    pub fn linear_outcomes(&self, z: &Assignment, noise: Noise) -> Result<Vec<f64>> {
        z.check_len(self.n_units())?;
        let mut y: Vec<f64> = (0..self.n_units())
            .map(|i| {
                let own = if z.is_treated(i) { self.beta[i] } else { 0.0 };
                self.alpha[i] + own + self.gamma[i] * self.exposure(z, i)
            })
            .collect();
        if let (Noise::Seeded(seed), true) = (noise, self.noise_sd > 0.0) {
            let normal = Normal::new(0.0, self.noise_sd).expect("finite sd");
            let mut r = rng::seeded(seed);
            for v in &mut y {
                *v += normal.sample(&mut r);
            }
        }
        Ok(y)
    }

    fn check_clustering(&self, clustering: &Clustering) -> Result<usize> {
        let m = clustering.n_clusters();
        if m < 2 {
            return Err(Error::Parameter(format!(
                "closed forms need at least 2 clusters, got {m}"
            )));
        }
        Ok(m)
    }

    /// `τ − E[τ̂] = M / (N (M − 1)) Σ_i γ_i (1 − θ_i)`.
    pub fn linear_closed_form_bias(&self, clustering: &Clustering) -> Result<f64> {
        let m = self.check_clustering(clustering)? as f64;
        let theta = cluster_exposure(clustering, &self.graph)?.theta;
        let n = self.n_units() as f64;
        let s: f64 = self.gamma.iter().zip(&theta).map(|(g, t)| g * (1.0 - t)).sum();
        Ok(m / (n * (m - 1.0)) * s)
    }

    /// `E[τ̂] = (1/N) Σ β_i + (1/N) Σ γ_i (θ_i − (1 − θ_i)/(M − 1))`.
    pub fn linear_closed_form_expectation(&self, clustering: &Clustering) -> Result<f64> {
        let m = self.check_clustering(clustering)? as f64;
        let theta = cluster_exposure(clustering, &self.graph)?.theta;
        let n = self.n_units() as f64;
        let b: f64 = self.beta.iter().sum();
        let g: f64 = self
            .gamma
            .iter()
            .zip(&theta)
            .map(|(g, t)| g * (t - (1.0 - t) / (m - 1.0)))
            .sum();
        Ok((b + g) / n)
    }

    /// Noise-free total treatment effect, `mean β + mean γ`.
    pub fn closed_form_tte(&self) -> f64 {
        let n = self.n_units() as f64;
        (self.beta.iter().sum::<f64>() + self.gamma.iter().sum::<f64>()) / n
    }

    /// Exact `E[τ̂_k | W]` for one arm of an experiment-of-experiments design.
    ///
    /// Neighbours outside the arm are assigned independently of the arm's
    /// draw and drop out of the expectation; neighbours inside the arm but in
    /// another induced cluster pick up the `−1/(M_k − 1)` correction.
    pub fn arm_conditional_expectation(&self, arm: &ArmClustering) -> Result<f64> {
        let m = arm.n_clusters();
        if m < 2 {
            return Err(Error::Parameter(format!(
                "arm has {m} cluster(s); at least 2 are needed"
            )));
        }
        let mut local = vec![usize::MAX; self.n_units()];
        for (l, &u) in arm.units.iter().enumerate() {
            local[u] = l;
        }
        let mf = m as f64;
        let mut total = 0.0;
        for (l, &u) in arm.units.iter().enumerate() {
            let ns = self.graph.neighbors(u);
            let g_term = if ns.is_empty() {
                1.0
            } else {
                let (mut same, mut other) = (0usize, 0usize);
                for &j in ns {
                    match local[j] {
                        usize::MAX => {}
                        lj if arm.clustering.same_cluster(l, lj) => same += 1,
                        _ => other += 1,
                    }
                }
                (same as f64 - other as f64 / (mf - 1.0)) / ns.len() as f64
            };
            total += self.beta[u] + self.gamma[u] * g_term;
        }
        Ok(total / arm.n_units() as f64)
    }
}

impl OutcomeModel for LinearInterferenceModel {
    fn n_units(&self) -> usize {
        self.graph.n_units()
    }

    fn outcomes(&self, z: &Assignment, noise: Noise) -> Result<Vec<f64>> {
        self.linear_outcomes(z, noise)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotonicityKind {
    Increasing,
    Decreasing,
    Indeterminate,
}

impl MonotonicityKind {
    pub fn direction(self) -> Option<Direction> {
        match self {
            MonotonicityKind::Increasing => Some(Direction::Increasing),
            MonotonicityKind::Decreasing => Some(Direction::Decreasing),
            MonotonicityKind::Indeterminate => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityVerdict {
    pub kind: MonotonicityKind,
    /// `Σ_i γ_i (1 − θ_i)`.
    pub evidence: f64,
}

/// Sign of `Σ_i γ_i (1 − θ_i)`: non-negative is increasing, negative is
/// decreasing.
pub fn classify_monotonicity(model: &LinearInterferenceModel, clustering: &Clustering) -> Result<MonotonicityVerdict> {
    let theta = cluster_exposure(clustering, model.graph())?.theta;
    let evidence: f64 = model.gamma().iter().zip(&theta).map(|(g, t)| g * (1.0 - t)).sum();
    let kind = if evidence.is_nan() {
        MonotonicityKind::Indeterminate
    } else if evidence >= 0.0 {
        MonotonicityKind::Increasing
    } else {
        MonotonicityKind::Decreasing
    };
    Ok(MonotonicityVerdict { kind, evidence })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExcitationMode {
    /// Every cluster draw with the design's number of treated clusters.
    Exhaustive,
    /// `replications` sampled cluster draws.
    MonteCarlo { replications: usize, seed: u64 },
}

/// Which of the two self-excitation inequalities failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcitationSide {
    /// `E[Y_i | Z_i = 0] < Y_i(0)`.
    Control,
    /// `E[Y_i | Z_i = 1] > Y_i(1)`.
    Treated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcitationWitness {
    pub unit: usize,
    pub side: ExcitationSide,
    pub conditional_mean: f64,
    pub extreme_outcome: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExcitationVerdict {
    Holds,
    Violated(ExcitationWitness),
}

const EXCITATION_SLACK: f64 = 1e-9;

/// Checks `E[Y_i | Z_i = 0] ≥ Y_i(0)` and `E[Y_i | Z_i = 1] ≤ Y_i(1)` for every
/// unit, under the cluster-based design with `⌊M/2⌋` treated clusters and
/// noise-free outcomes.
pub fn self_excitation_check(
    model: &dyn OutcomeModel,
    clustering: &Clustering,
    mode: ExcitationMode,
) -> Result<ExcitationVerdict> {
    let n = model.n_units();
    if clustering.n_units() != n {
        return Err(Error::Dimension {
            what: "clustering",
            expected: n,
            found: clustering.n_units(),
        });
    }
    let m = clustering.n_clusters();
    let mt = arm_treated_clusters(m);
    if mt == 0 {
        return Err(Error::Parameter(format!("{m} cluster(s) leave nothing to treat")));
    }
    let draws: Vec<Vec<bool>> = match mode {
        ExcitationMode::Exhaustive => {
            if m > 20 {
                return Err(Error::Parameter(format!(
                    "exhaustive mode supports at most 20 clusters, got {m}"
                )));
            }
            cluster_draws(m, mt)
        }
        ExcitationMode::MonteCarlo { replications, seed } => {
            let mut r = rng::seeded(seed);
            (0..replications)
                .map(|_| {
                    crate::design::cluster_based_assignment(clustering, mt, &mut r)
                        .map(|a| a.clusters().expect("cluster draw").to_vec())
                })
                .collect::<Result<_>>()?
        }
    };
    let y1 = model.outcomes(&Assignment::constant(n, true), Noise::Off)?;
    let y0 = model.outcomes(&Assignment::constant(n, false), Noise::Off)?;
    let mut sums = [vec![0.0; n], vec![0.0; n]];
    let mut counts = [vec![0usize; n], vec![0usize; n]];
    for z in draws {
        let a = Assignment::from_clusters(clustering, z)?;
        let y = model.outcomes(&a, Noise::Off)?;
        for i in 0..n {
            let side = usize::from(a.is_treated(i));
            sums[side][i] += y[i];
            counts[side][i] += 1;
        }
    }
    for i in 0..n {
        if counts[0][i] > 0 {
            let mean = sums[0][i] / counts[0][i] as f64;
            if mean < y0[i] - EXCITATION_SLACK {
                return Ok(ExcitationVerdict::Violated(ExcitationWitness {
                    unit: i,
                    side: ExcitationSide::Control,
                    conditional_mean: mean,
                    extreme_outcome: y0[i],
                }));
            }
        }
        if counts[1][i] > 0 {
            let mean = sums[1][i] / counts[1][i] as f64;
            if mean > y1[i] + EXCITATION_SLACK {
                return Ok(ExcitationVerdict::Violated(ExcitationWitness {
                    unit: i,
                    side: ExcitationSide::Treated,
                    conditional_mean: mean,
                    extreme_outcome: y1[i],
                }));
            }
        }
    }
    Ok(ExcitationVerdict::Holds)
}
