//! Exact design expectations by enumerating every admissible assignment.
//! Only usable on small instances; they serve as oracles for the
//! Monte-Carlo and closed-form routes.

use serde::Serialize;

use super::{ht_estimate, neymann_variance};
use crate::design::{arm_treated_clusters, induced_clustering, Arm, ArmSplit};
use crate::error::{Error, Result};
use crate::model::{Assignment, Clustering, Noise, OutcomeModel};

const MAX_EVALUATIONS: u128 = 20_000_000;

/// Moments of an estimator over a uniformly drawn assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactMoments {
    pub mean: f64,
    pub variance: f64,
    /// Expected Neyman variance estimate, when it is defined for every draw.
    pub mean_sigma: Option<f64>,
    pub n_assignments: usize,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// All cluster-level assignments of `m` clusters with exactly `m_treated`
/// treated, in lexicographic order of the treated index sets.
pub fn cluster_draws(m: usize, m_treated: usize) -> Vec<Vec<bool>> {
    let mut out = Vec::new();
    if m_treated > m {
        return out;
    }
    let mut idx: Vec<usize> = (0..m_treated).collect();
    loop {
        let mut z = vec![false; m];
        for &i in &idx {
            z[i] = true;
        }
        out.push(z);
        // advance to the next combination
        let mut pos = m_treated;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if idx[pos] < m - m_treated + pos {
                break;
            }
        }
        idx[pos] += 1;
        for j in pos + 1..m_treated {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[derive(Default)]
struct Accumulator {
    sum: f64,
    sum_sq: f64,
    sigma_sum: f64,
    sigma_defined: bool,
    weight: f64,
    count: usize,
}

impl Accumulator {
    fn new() -> Self {
        Self {
            sigma_defined: true,
            ..Default::default()
        }
    }

    fn push(&mut self, tau: f64, sigma: Option<f64>, weight: f64) {
        self.sum += weight * tau;
        self.sum_sq += weight * tau * tau;
        match sigma {
            Some(s) => self.sigma_sum += weight * s,
            None => self.sigma_defined = false,
        }
        self.weight += weight;
        self.count += 1;
    }

    fn finish(&self) -> ExactMoments {
        let mean = self.sum / self.weight;
        ExactMoments {
            mean,
            variance: (self.sum_sq / self.weight - mean * mean).max(0.0),
            mean_sigma: self.sigma_defined.then(|| self.sigma_sum / self.weight),
            n_assignments: self.count,
        }
    }
}

/// Exact moments of the HT estimator under the cluster-based design with
/// `m_treated` treated clusters.
pub fn exhaustive_cbr(
    model: &dyn OutcomeModel,
    clustering: &Clustering,
    m_treated: usize,
    noise: Noise,
) -> Result<ExactMoments> {
    let m = clustering.n_clusters();
    if binomial(m, m_treated) > MAX_EVALUATIONS {
        return Err(Error::Parameter(format!(
            "C({m}, {m_treated}) assignments are too many to enumerate"
        )));
    }
    let mut acc = Accumulator::new();
    for z in cluster_draws(m, m_treated) {
        let assignment = Assignment::from_clusters(clustering, z.clone())?;
        let y = model.outcomes(&assignment, noise)?;
        let e = ht_estimate(&y, &z, clustering)?;
        let s = neymann_variance(&y, &z, clustering).ok().map(|v| v.sigma_hat);
        acc.push(e.tau_hat, s, 1.0);
    }
    Ok(acc.finish())
}

/// Exact per-arm moments of the experiment-of-experiments design: every
/// balanced split, then every pair of per-arm cluster draws. Each split is
/// weighted equally and, within a split, each draw pair is equally likely.
///
/// Fails with a degenerate-design error if any split leaves an arm with
/// fewer than two induced clusters.
pub fn exhaustive_eoe(
    model: &dyn OutcomeModel,
    c1: &Clustering,
    c2: &Clustering,
    noise: Noise,
) -> Result<[ExactMoments; 2]> {
    let n = c1.n_units();
    if c2.n_units() != n {
        return Err(Error::Dimension {
            what: "second clustering",
            expected: n,
            found: c2.n_units(),
        });
    }
    let splits = cluster_draws(n, n / 2);
    let mut budget = 0u128;
    let mut accs = [Accumulator::new(), Accumulator::new()];
    for ones in splits {
        let split = ArmSplit::from_arms(
            ones.iter()
                .map(|&t| if t { Arm::One } else { Arm::Two })
                .collect(),
        );
        let arms = [
            induced_clustering(c1, &split, Arm::One)?,
            induced_clustering(c2, &split, Arm::Two)?,
        ];
        let mut draws = Vec::with_capacity(2);
        for ac in &arms {
            let m = ac.n_clusters();
            if m < 2 {
                return Err(Error::DegenerateDesign(format!(
                    "a split leaves an arm with {m} cluster(s)"
                )));
            }
            draws.push(cluster_draws(m, arm_treated_clusters(m)));
        }
        let pairs = draws[0].len() * draws[1].len();
        budget += pairs as u128;
        if budget > MAX_EVALUATIONS {
            return Err(Error::Parameter("too many assignments to enumerate".into()));
        }
        let weight = 1.0 / pairs as f64;
        for z1 in &draws[0] {
            for z2 in &draws[1] {
                let mut units = vec![false; n];
                for (ac, z) in arms.iter().zip([z1, z2]) {
                    for (l, &u) in ac.units.iter().enumerate() {
                        units[u] = z[ac.clustering.cluster_of(l)];
                    }
                }
                let y = model.outcomes(&Assignment::from_units(units), noise)?;
                for (k, (ac, z)) in arms.iter().zip([z1, z2]).enumerate() {
                    let ya = ac.restrict(&y);
                    let e = ht_estimate(&ya, z, &ac.clustering)?;
                    let s = neymann_variance(&ya, z, &ac.clustering).ok().map(|v| v.sigma_hat);
                    accs[k].push(e.tau_hat, s, weight);
                }
            }
        }
    }
    Ok([accs[0].finish(), accs[1].finish()])
}
