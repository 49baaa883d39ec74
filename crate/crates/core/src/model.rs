//! Units, assignments, clusterings and the potential-outcome contract.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary treatment assignment over units, optionally with the cluster-level
/// draw that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    units: Vec<bool>,
    clusters: Option<Vec<bool>>,
}

impl Assignment {
    pub fn from_units(units: Vec<bool>) -> Self {
        Self {
            units,
            clusters: None,
        }
    }

    /// Builds a unit assignment from a 0/1 vector, rejecting any other value.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let units = bits
            .iter()
            .enumerate()
            .map(|(i, &b)| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::Parameter(format!(
                    "assignment entry {i} is {other}, expected 0 or 1"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_units(units))
    }

    /// Expands a cluster-level draw to units: `Z_i = z_{C(i)}`.
    pub fn from_clusters(clustering: &Clustering, clusters: Vec<bool>) -> Result<Self> {
        if clusters.len() != clustering.n_clusters() {
            return Err(Error::Dimension {
                what: "cluster assignment",
                expected: clustering.n_clusters(),
                found: clusters.len(),
            });
        }
        let units = clustering
            .labels()
            .iter()
            .map(|&c| clusters[c])
            .collect();
        Ok(Self {
            units,
            clusters: Some(clusters),
        })
    }

    pub fn constant(n_units: usize, treated: bool) -> Self {
        Self::from_units(vec![treated; n_units])
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn is_treated(&self, unit: usize) -> bool {
        self.units[unit]
    }

    pub fn units(&self) -> &[bool] {
        &self.units
    }

    pub fn clusters(&self) -> Option<&[bool]> {
        self.clusters.as_deref()
    }

    pub fn n_treated(&self) -> usize {
        self.units.iter().filter(|&&t| t).count()
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.units.iter().map(|&t| u8::from(t)).collect()
    }

    pub(crate) fn check_len(&self, n_units: usize) -> Result<()> {
        if self.len() != n_units {
            return Err(Error::Dimension {
                what: "assignment",
                expected: n_units,
                found: self.len(),
            });
        }
        Ok(())
    }
}

/// A partition of `0..N` into `M` non-empty clusters with dense indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Clustering {
    /// Builds a clustering from arbitrary per-unit labels. Labels are
    /// renumbered densely in increasing label order.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let mut remap = BTreeMap::new();
        for &l in &labels {
            remap.entry(l).or_insert(0usize);
        }
        for (dense, v) in remap.values_mut().enumerate() {
            *v = dense;
        }
        let labels: Vec<usize> = labels.iter().map(|l| remap[l]).collect();
        let mut members = vec![Vec::new(); remap.len()];
        for (unit, &c) in labels.iter().enumerate() {
            members[c].push(unit);
        }
        Self { labels, members }
    }

    pub fn singletons(n_units: usize) -> Self {
        Self::from_labels((0..n_units).collect())
    }

    pub fn single_cluster(n_units: usize) -> Self {
        Self::from_labels(vec![0; n_units])
    }

    pub fn n_units(&self) -> usize {
        self.labels.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.members.len()
    }

    pub fn cluster_of(&self, unit: usize) -> usize {
        self.labels[unit]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn members(&self, cluster: usize) -> &[usize] {
        &self.members[cluster]
    }

    pub fn clusters(&self) -> impl Iterator<Item = &[usize]> {
        self.members.iter().map(Vec::as_slice)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn same_cluster(&self, a: usize, b: usize) -> bool {
        self.labels[a] == self.labels[b]
    }

    /// Writes `unit<TAB>cluster` lines.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for (unit, c) in self.labels.iter().enumerate() {
            writeln!(out, "{unit}\t{c}")?;
        }
        Ok(())
    }

    /// Reads `unit<TAB>cluster` lines and validates them against `n_units`.
    pub fn read_tsv<R: BufRead>(input: R, n_units: usize) -> Result<ValidatedClustering> {
        let mut pairs = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(u), Some(c), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::Data(format!(
                    "line {}: expected `unit<TAB>cluster`",
                    lineno + 1
                )));
            };
            let parse = |s: &str| {
                s.trim().parse::<usize>().map_err(|e| {
                    Error::Data(format!("line {}: {e}: {s:?}", lineno + 1))
                })
            };
            pairs.push((parse(u)?, parse(c)?));
        }
        validate_clustering(&pairs, n_units)
    }
}

/// Result of [`validate_clustering`]: the dense clustering plus the label
/// renumbering that was applied (`(original, dense)` pairs that changed).
#[derive(Debug, Clone)]
pub struct ValidatedClustering {
    pub clustering: Clustering,
    pub remapped: Vec<(usize, usize)>,
}

/// Checks that `(unit, cluster)` pairs form a partition of `0..n_units` and
/// renumbers cluster labels to a dense range.
pub fn validate_clustering(pairs: &[(usize, usize)], n_units: usize) -> Result<ValidatedClustering> {
    let mut labels: Vec<Option<usize>> = vec![None; n_units];
    for &(unit, cluster) in pairs {
        let slot = labels.get_mut(unit).ok_or_else(|| {
            Error::Partition(format!("unit {unit} is out of range for {n_units} units"))
        })?;
        if slot.replace(cluster).is_some() {
            return Err(Error::Partition(format!("unit {unit} appears more than once")));
        }
    }
    let missing: Vec<usize> = (0..n_units).filter(|&u| labels[u].is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::Partition(format!(
            "{} unit(s) missing from the clustering, first is {}",
            missing.len(),
            missing[0]
        )));
    }
    let raw: Vec<usize> = labels.into_iter().map(Option::unwrap).collect();
    let clustering = Clustering::from_labels(raw.clone());
    let mut remapped: Vec<(usize, usize)> = raw
        .iter()
        .zip(clustering.labels())
        .filter(|(a, b)| a != b)
        .map(|(&a, &b)| (a, b))
        .collect();
    remapped.sort_unstable();
    remapped.dedup();
    Ok(ValidatedClustering {
        clustering,
        remapped,
    })
}

/// Undirected interference graph: `neighbors(i)` is the set `N_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodGraph {
    neighbors: Vec<Vec<usize>>,
    weights: Option<Vec<Vec<f64>>>,
}

impl NeighborhoodGraph {
    /// Builds a symmetric graph on `n_units` nodes. Self-loops are dropped
    /// and repeated edges are merged.
    pub fn from_edges<I>(n_units: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Self::build(n_units, edges.into_iter().map(|(a, b)| (a, b, 1.0)), false)
    }

    /// Like [`from_edges`](Self::from_edges) but keeps per-edge weights;
    /// repeated edges have their weights summed.
    pub fn from_weighted_edges<I>(n_units: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        Self::build(n_units, edges, true)
    }

    fn build<I>(n_units: usize, edges: I, weighted: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n_units];
        for (a, b, w) in edges {
            if a >= n_units || b >= n_units {
                return Err(Error::Parameter(format!(
                    "edge ({a}, {b}) references a unit outside 0..{n_units}"
                )));
            }
            if a == b {
                continue;
            }
            *adj[a].entry(b).or_insert(0.0) += w;
            *adj[b].entry(a).or_insert(0.0) += w;
        }
        let neighbors = adj.iter().map(|m| m.keys().copied().collect()).collect();
        let weights = weighted.then(|| adj.iter().map(|m| m.values().copied().collect()).collect());
        Ok(Self { neighbors, weights })
    }

    pub fn n_units(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, unit: usize) -> &[usize] {
        &self.neighbors[unit]
    }

    /// Edge weights aligned with [`neighbors`](Self::neighbors), if the graph
    /// was built with weights.
    pub fn weights(&self, unit: usize) -> Option<&[f64]> {
        self.weights.as_ref().map(|w| w[unit].as_slice())
    }

    pub fn degree(&self, unit: usize) -> usize {
        self.neighbors[unit].len()
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Relabels units: unit `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut neighbors = vec![Vec::new(); self.n_units()];
        let mut weights = self.weights.as_ref().map(|_| vec![Vec::new(); self.n_units()]);
        for (i, ns) in self.neighbors.iter().enumerate() {
            let mut pairs: Vec<(usize, f64)> = ns
                .iter()
                .enumerate()
                .map(|(k, &j)| (perm[j], self.weights(i).map_or(1.0, |w| w[k])))
                .collect();
            pairs.sort_by_key(|p| p.0);
            neighbors[perm[i]] = pairs.iter().map(|p| p.0).collect();
            if let Some(w) = weights.as_mut() {
                w[perm[i]] = pairs.iter().map(|p| p.1).collect();
            }
        }
        Self { neighbors, weights }
    }
}

/// Per-unit share of the neighbourhood that lies in the unit's own cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureProfile {
    pub theta: Vec<f64>,
    pub theta_mean: f64,
}

/// Computes `theta_i = |N_i ∩ C(i)| / |N_i|` with unweighted counts.
/// Units without neighbours get `theta_i = 1`.
pub fn cluster_exposure(clustering: &Clustering, graph: &NeighborhoodGraph) -> Result<ExposureProfile> {
    if clustering.n_units() != graph.n_units() {
        return Err(Error::Dimension {
            what: "graph vs clustering",
            expected: clustering.n_units(),
            found: graph.n_units(),
        });
    }
    let theta: Vec<f64> = (0..graph.n_units())
        .map(|i| {
            let ns = graph.neighbors(i);
            if ns.is_empty() {
                1.0
            } else {
                let inside = ns.iter().filter(|&&j| clustering.same_cluster(i, j)).count();
                inside as f64 / ns.len() as f64
            }
        })
        .collect();
    let theta_mean = if theta.is_empty() {
        0.0
    } else {
        theta.iter().sum::<f64>() / theta.len() as f64
    };
    Ok(ExposureProfile { theta, theta_mean })
}

/// Source of the noise term in a potential-outcome evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    /// Noise-free outcomes.
    Off,
    /// Noise drawn from the stream with this seed.
    Seeded(u64),
}

/// Maps any assignment to a vector of outcomes `Y(Z)`.
///
/// Implementations must be deterministic given `(z, noise)`.
pub trait OutcomeModel: Sync {
    fn n_units(&self) -> usize;

    fn outcomes(&self, z: &Assignment, noise: Noise) -> Result<Vec<f64>>;
}

/// Total treatment effect `(1/N) Σ_i [Y_i(1) − Y_i(0)]`, with both extreme
/// assignments evaluated under the same noise.
pub fn total_treatment_effect(model: &dyn OutcomeModel, noise: Noise) -> Result<f64> {
    let n = model.n_units();
    if n == 0 {
        return Err(Error::EmptyPopulation);
    }
    let treated = model.outcomes(&Assignment::constant(n, true), noise)?;
    let control = model.outcomes(&Assignment::constant(n, false), noise)?;
    let diff: f64 = treated.iter().zip(&control).map(|(t, c)| t - c).sum();
    Ok(diff / n as f64)
}

/// Outcomes without interference: each unit sees only its own treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct SutvaModel {
    control: Vec<f64>,
    treated: Vec<f64>,
}

impl SutvaModel {
    pub fn new(control: Vec<f64>, treated: Vec<f64>) -> Result<Self> {
        if control.len() != treated.len() {
            return Err(Error::Dimension {
                what: "treated outcomes",
                expected: control.len(),
                found: treated.len(),
            });
        }
        Ok(Self { control, treated })
    }

    pub fn constant(n_units: usize, value: f64) -> Self {
        Self {
            control: vec![value; n_units],
            treated: vec![value; n_units],
        }
    }
}

impl OutcomeModel for SutvaModel {
    fn n_units(&self) -> usize {
        self.control.len()
    }

    fn outcomes(&self, z: &Assignment, _noise: Noise) -> Result<Vec<f64>> {
        z.check_len(self.n_units())?;
        Ok(z.units()
            .iter()
            .enumerate()
            .map(|(i, &t)| if t { self.treated[i] } else { self.control[i] })
            .collect())
    }
}
