//! Config-driven pipelines: build data, clusterings and an outcome model,
//! then compare two clusterings with direct and experiment-of-experiments
//! Monte-Carlo runs.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, LogNormal};
use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

use crate::auction::{AuctionOutcomeModel, BidderProfile, Mechanism, PaymentRule, PositionCurve};
use crate::data::{self, BidRecord, GraphMetric, SyntheticParams};
use crate::design::{eoe_assign, Arm};
use crate::error::{Error, Result};
use crate::estimators::{
    compare_estimates, ht_estimate, monte_carlo_expectation, neymann_variance, write_samples_csv, ArmSummary,
    CbrSampler, ComparisonVerdict, Direction, EoeSampler,
};
use crate::interference::{classify_monotonicity, LinearInterferenceModel};
use crate::model::{total_treatment_effect, Clustering, NeighborhoodGraph, Noise, OutcomeModel};
use crate::partition::{
    planted_bipartite_graph, project_bidder_partition, random_balanced_partition, random_clustering,
    rldg_partition, BipartiteGraph, PlantedParams, RldgConfig, StreamOrder, Variant,
};
use crate::rng;

pub const SCHEMA_VERSION: u32 = 1;

/// Desk-scale reserve-price experiment used when no config is given.
pub const DEFAULT_CONFIG: &str = r#"schema_version = 1
seed = 1
replications = 2000
alpha = 0.05

[dataset]
kind = "synthetic"

[model]
kind = "auction"
mechanism = "vcg"

[clustering_1]
kind = "rldg"
k = 50

[clustering_2]
kind = "random"
k = 50
"#;

/// Child streams of the master seed.
mod stream {
    pub const DATA: u64 = 1;
    pub const RESERVES: u64 = 2;
    pub const CLUSTERING: u64 = 3;
    pub const DIRECT: u64 = 4;
    pub const EOE: u64 = 5;
    pub const SINGLE: u64 = 6;
    pub const FIGURE: u64 = 7;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic(SyntheticParams),
    Planted(PlantedParams),
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuctionSpec {
    pub mechanism: Mechanism,
    pub max_participants: usize,
    /// Treated reserve median as a multiple of the bidder's median bid.
    pub reserve_scale: f64,
    /// Log-scale spread of treated reserves.
    pub reserve_spread: f64,
    /// Accepted range for the share of participations priced out by treatment.
    pub bite_band: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearSpec {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub noise_sd: f64,
    /// Optional `unit,alpha,beta,gamma` file overriding the constants.
    pub params_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Auction(AuctionSpec),
    Linear(LinearSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClusteringSpec {
    Rldg {
        k: usize,
        passes: usize,
        metric: GraphMetric,
        slack: f64,
    },
    Random {
        k: usize,
    },
    File {
        path: PathBuf,
    },
}

impl ClusteringSpec {
    fn describe(&self) -> String {
        match self {
            ClusteringSpec::Rldg { k, metric, .. } => format!("rldg(k={k}, metric={metric:?})").to_lowercase(),
            ClusteringSpec::Random { k } => format!("random(k={k})"),
            ClusteringSpec::File { path } => format!("file({})", path.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Figure2Spec {
    pub ks: Vec<usize>,
    pub passes: usize,
    pub metric: GraphMetric,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Figure3Spec {
    /// Clusters in the quality and metric panels.
    pub k: usize,
    pub k_small: usize,
    pub k_large: usize,
    pub passes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub replications: usize,
    pub alpha: f64,
    /// Mechanism direction override; inferred from the model when absent.
    pub direction: Option<Direction>,
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub clustering_1: ClusteringSpec,
    pub clustering_2: ClusteringSpec,
    pub figure2: Figure2Spec,
    pub figure3: Figure3Spec,
}

/// Collects every problem found while reading a config.
#[derive(Default)]
struct Problems {
    errors: Vec<String>,
    defaults: Vec<String>,
}

/// One TOML table being read; remembers which keys were consumed.
struct Section<'a> {
    path: String,
    table: &'a Table,
    used: BTreeSet<&'static str>,
}

impl<'a> Section<'a> {
    fn new(path: impl Into<String>, table: &'a Table) -> Self {
        Self {
            path: path.into(),
            table,
            used: BTreeSet::new(),
        }
    }

    fn key(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn opt<T: DeserializeOwned>(&mut self, key: &'static str, p: &mut Problems) -> Option<T> {
        self.used.insert(key);
        let v = self.table.get(key)?;
        match v.clone().try_into::<T>() {
            Ok(t) => Some(t),
            Err(e) => {
                p.errors.push(format!("`{}`: {}", self.key(key), e.to_string().trim()));
                None
            }
        }
    }

    fn or<T: DeserializeOwned + std::fmt::Debug>(&mut self, key: &'static str, default: T, p: &mut Problems) -> T {
        let present = self.table.contains_key(key);
        match self.opt(key, p) {
            Some(v) => v,
            None => {
                if !present {
                    p.defaults.push(format!("{} = {default:?}", self.key(key)));
                }
                default
            }
        }
    }

    fn req<T: DeserializeOwned>(&mut self, key: &'static str, p: &mut Problems) -> Option<T> {
        if !self.table.contains_key(key) {
            self.used.insert(key);
            p.errors.push(format!("missing required key `{}`", self.key(key)));
            return None;
        }
        self.opt(key, p)
    }

    fn table(&mut self, key: &'static str, p: &mut Problems) -> Option<&'a Table> {
        self.used.insert(key);
        match self.table.get(key)? {
            Value::Table(t) => Some(t),
            _ => {
                p.errors.push(format!("`{}` must be a table", self.key(key)));
                None
            }
        }
    }

    fn finish(self, p: &mut Problems) {
        for k in self.table.keys() {
            if !self.used.contains(k.as_str()) {
                p.errors.push(format!("unknown key `{}`", self.key(k)));
            }
        }
    }
}

/// Reads a serde struct with defaults from a table, reporting each unknown
/// or mistyped key separately.
fn params_table<T>(path: &str, table: Option<&Table>, p: &mut Problems) -> T
where
    T: Serialize + DeserializeOwned + Default,
{
    let defaults = match Value::try_from(T::default()) {
        Ok(Value::Table(t)) => t,
        _ => unreachable!("parameter structs serialize to tables"),
    };
    let mut merged = defaults.clone();
    if let Some(user) = table {
        for (k, v) in user {
            if !defaults.contains_key(k) {
                p.errors.push(format!("unknown key `{path}.{k}`"));
                continue;
            }
            let mut probe = defaults.clone();
            probe.insert(k.clone(), v.clone());
            match Value::Table(probe).try_into::<T>() {
                Ok(_) => {
                    merged.insert(k.clone(), v.clone());
                }
                Err(e) => p.errors.push(format!("`{path}.{k}`: {}", e.to_string().trim())),
            }
        }
    }
    for (k, v) in &defaults {
        if table.is_none_or(|t| !t.contains_key(k)) {
            p.defaults.push(format!("{path}.{k} = {v}"));
        }
    }
    Value::Table(merged).try_into().unwrap_or_default()
}

fn read_dataset(s: &mut Section, p: &mut Problems) -> Option<DatasetSpec> {
    let Some(t) = s.table("dataset", p) else {
        if !s.table.contains_key("dataset") {
            p.errors.push("missing required key `dataset` (the dataset source)".into());
        }
        return None;
    };
    let mut d = Section::new("dataset", t);
    let kind: Option<String> = d.req("kind", p);
    let spec = match kind.as_deref() {
        Some("synthetic") => {
            let params = d.table("synthetic", p);
            Some(DatasetSpec::Synthetic(params_table("dataset.synthetic", params, p)))
        }
        Some("planted") => {
            let params = d.table("planted", p);
            Some(DatasetSpec::Planted(params_table("dataset.planted", params, p)))
        }
        Some("file") => d.req::<PathBuf>("path", p).map(|path| DatasetSpec::File { path }),
        Some(other) => {
            p.errors.push(format!(
                "`dataset.kind` must be synthetic, planted or file, got {other:?}"
            ));
            None
        }
        None => None,
    };
    d.finish(p);
    spec
}

fn read_model(s: &mut Section, p: &mut Problems) -> Option<ModelSpec> {
    let Some(t) = s.table("model", p) else {
        if !s.table.contains_key("model") {
            p.errors.push("missing required key `model`".into());
        }
        return None;
    };
    let mut m = Section::new("model", t);
    let kind: Option<String> = m.req("kind", p);
    let spec = match kind.as_deref() {
        Some("auction") => {
            let mechanism: String = m.or("mechanism", "vcg".to_string(), p);
            let positions: Vec<f64> = m.or("positions", PositionCurve::default().rates().to_vec(), p);
            let rule: PaymentRule = m.or("payment_rule", PaymentRule::Externality, p);
            let max_participants = m.or("max_participants", 6usize, p);
            let reserve_scale = m.or("reserve_scale", 1.0f64, p);
            let reserve_spread = m.or("reserve_spread", 0.5f64, p);
            let bite_band: [f64; 2] = m.or("bite_band", [0.2, 0.6], p);
            let mechanism = match mechanism.as_str() {
                "second_price" => Some(Mechanism::SecondPrice),
                "vcg" => match PositionCurve::new(positions) {
                    Ok(curve) => Some(Mechanism::VcgPositional { curve, rule }),
                    Err(e) => {
                        p.errors.push(format!("`model.positions`: {e}"));
                        None
                    }
                },
                other => {
                    p.errors.push(format!("`model.mechanism` must be vcg or second_price, got {other:?}"));
                    None
                }
            };
            if !(reserve_scale > 0.0) || !(reserve_spread >= 0.0) {
                p.errors.push("`model.reserve_scale` must be > 0 and `model.reserve_spread` >= 0".into());
            }
            if max_participants == 0 {
                p.errors.push("`model.max_participants` must be positive".into());
            }
            mechanism.map(|mechanism| {
                ModelSpec::Auction(AuctionSpec {
                    mechanism,
                    max_participants,
                    reserve_scale,
                    reserve_spread,
                    bite_band,
                })
            })
        }
        Some("linear") => {
            let spec = LinearSpec {
                alpha: m.or("alpha", 0.0, p),
                beta: m.or("beta", 1.0, p),
                gamma: m.or("gamma", 0.5, p),
                noise_sd: m.or("noise_sd", 1.0, p),
                params_path: m.opt("params_path", p),
            };
            if !(spec.noise_sd >= 0.0) {
                p.errors.push("`model.noise_sd` must be >= 0".into());
            }
            Some(ModelSpec::Linear(spec))
        }
        Some(other) => {
            p.errors.push(format!("`model.kind` must be auction or linear, got {other:?}"));
            None
        }
        None => None,
    };
    m.finish(p);
    spec
}

fn read_clustering(s: &mut Section, key: &'static str, p: &mut Problems) -> Option<ClusteringSpec> {
    let Some(t) = s.table(key, p) else {
        if !s.table.contains_key(key) {
            p.errors.push(format!("missing required key `{key}`"));
        }
        return None;
    };
    let mut c = Section::new(key, t);
    let kind: Option<String> = c.req("kind", p);
    let spec = match kind.as_deref() {
        Some("rldg") => {
            let k: Option<usize> = c.req("k", p);
            let passes = c.or("passes", 10usize, p);
            let metric = c.or("metric", GraphMetric::Bid, p);
            let slack = c.or("slack", 0.1f64, p);
            k.map(|k| ClusteringSpec::Rldg { k, passes, metric, slack })
        }
        Some("random") => c.req("k", p).map(|k| ClusteringSpec::Random { k }),
        Some("file") => c.req("path", p).map(|path| ClusteringSpec::File { path }),
        Some(other) => {
            p.errors.push(format!("`{key}.kind` must be rldg, random or file, got {other:?}"));
            None
        }
        None => None,
    };
    if let Some(ClusteringSpec::Rldg { k: 0, .. } | ClusteringSpec::Random { k: 0 }) = spec {
        p.errors.push(format!("`{key}.k` must be at least 1"));
    }
    c.finish(p);
    spec
}

fn read_file_units(path: &Path) -> Result<BTreeSet<usize>> {
    let text = std::fs::read_to_string(path)?;
    let mut units = BTreeSet::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let unit = line
            .split('\t')
            .next()
            .and_then(|u| u.trim().parse().ok())
            .ok_or_else(|| Error::Data(format!("{}: bad line {line:?}", path.display())))?;
        units.insert(unit);
    }
    Ok(units)
}

/// Parses and validates a TOML config. Every problem is reported in one
/// error; defaults that were filled in are logged.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(vec![e.to_string()]))?;
    let mut p = Problems::default();
    let mut s = Section::new("", &root);
    let version: Option<u32> = s.req("schema_version", &mut p);
    if let Some(v) = version.filter(|&v| v != SCHEMA_VERSION) {
        p.errors.push(format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}"));
    }
    let seed = s.or("seed", 0u64, &mut p);
    let replications = s.or("replications", 2000usize, &mut p);
    let alpha = s.or("alpha", 0.05f64, &mut p);
    let direction: Option<Direction> = s.opt("direction", &mut p);
    let output_dir: Option<PathBuf> = s.opt("output_dir", &mut p);
    let dataset = read_dataset(&mut s, &mut p);
    let model = read_model(&mut s, &mut p);
    let clustering_1 = read_clustering(&mut s, "clustering_1", &mut p);
    let clustering_2 = read_clustering(&mut s, "clustering_2", &mut p);

    let figure2 = {
        let t = s.table("figure2", &mut p);
        let empty = Table::new();
        let mut f = Section::new("figure2", t.unwrap_or(&empty));
        let spec = Figure2Spec {
            ks: f.or("ks", vec![10, 50], &mut p),
            passes: f.or("passes", 10usize, &mut p),
            metric: f.or("metric", GraphMetric::Bid, &mut p),
            slack: f.or("slack", 0.1f64, &mut p),
        };
        f.finish(&mut p);
        spec
    };
    let figure3 = {
        let t = s.table("figure3", &mut p);
        let empty = Table::new();
        let mut f = Section::new("figure3", t.unwrap_or(&empty));
        let spec = Figure3Spec {
            k: f.or("k", 50usize, &mut p),
            k_small: f.or("k_small", 10usize, &mut p),
            k_large: f.or("k_large", 100usize, &mut p),
            passes: f.or("passes", 10usize, &mut p),
        };
        f.finish(&mut p);
        spec
    };
    s.finish(&mut p);

    if replications < 2 {
        p.errors.push(format!("`replications` must be at least 2, got {replications}"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        p.errors.push(format!("`alpha` must be in (0, 1), got {alpha}"));
    }
    if let (Some(ClusteringSpec::File { path: a }), Some(ClusteringSpec::File { path: b })) = (&clustering_1, &clustering_2) {
        match (read_file_units(a), read_file_units(b)) {
            (Ok(ua), Ok(ub)) if ua != ub => p.errors.push(format!(
                "clustering files {} and {} cover different unit sets",
                a.display(),
                b.display()
            )),
            (Err(e), _) | (_, Err(e)) => p.errors.push(e.to_string()),
            _ => {}
        }
    }
    if !p.errors.is_empty() {
        return Err(Error::Config(p.errors));
    }
    for d in &p.defaults {
        log::info!("config default: {d}");
    }
    Ok(ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        seed,
        replications,
        alpha,
        direction,
        output_dir,
        dataset: dataset.expect("checked"),
        model: model.expect("checked"),
        clustering_1: clustering_1.expect("checked"),
        clustering_2: clustering_2.expect("checked"),
        figure2,
        figure3,
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
    parse_config(&text)
}

/// Dataset materialized from a config.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Option<Vec<BidRecord>>,
    planted: Option<BipartiteGraph>,
}

impl Dataset {
    pub fn load(spec: &DatasetSpec, seed: u64) -> Result<Self> {
        match spec {
            DatasetSpec::Synthetic(params) => {
                let records = data::generate_synthetic_dataset(params, rng::child_seed(seed, &[stream::DATA]))?;
                Ok(Self::from_records(records))
            }
            DatasetSpec::Planted(params) => Ok(Self {
                records: None,
                planted: Some(planted_bipartite_graph(params, rng::child_seed(seed, &[stream::DATA]))?.graph),
            }),
            DatasetSpec::File { path } => {
                let file = File::open(path).map_err(|e| Error::Config(vec![format!("cannot open {}: {e}", path.display())]))?;
                let parsed = data::parse_records(BufReader::new(file))?;
                if !parsed.errors.is_empty() {
                    log::warn!(
                        "{}: skipped {} malformed line(s), first at line {}: {}",
                        path.display(),
                        parsed.errors.len(),
                        parsed.errors[0].line,
                        parsed.errors[0].message
                    );
                }
                Ok(Self::from_records(parsed.records))
            }
        }
    }

    pub fn from_records(records: Vec<BidRecord>) -> Self {
        Self {
            records: Some(records),
            planted: None,
        }
    }

    pub fn n_bidders(&self) -> usize {
        match (&self.records, &self.planted) {
            (Some(r), _) => data::bidder_ids(r).len(),
            (None, Some(g)) => g.n_bidders(),
            (None, None) => 0,
        }
    }

    /// Bidder/keyphrase graph; planted datasets ignore the metric.
    pub fn graph(&self, metric: GraphMetric) -> Result<BipartiteGraph> {
        match (&self.records, &self.planted) {
            (Some(r), _) => data::build_bipartite_graph(r, metric),
            (None, Some(g)) => Ok(g.clone()),
            (None, None) => Err(Error::Config(vec!["dataset is empty".into()])),
        }
    }
}

/// Clustering of the bidders plus how it was obtained.
#[derive(Debug, Clone)]
pub struct BuiltClustering {
    pub clustering: Clustering,
    pub description: String,
    /// Weighted cut ratio of the underlying graph partition, for R-LDG.
    pub cut_ratio: Option<f64>,
}

pub fn build_clustering(spec: &ClusteringSpec, dataset: &Dataset, seed: u64) -> Result<BuiltClustering> {
    let n = dataset.n_bidders();
    let (clustering, cut_ratio) = match spec {
        ClusteringSpec::Rldg { k, passes, metric, slack } => {
            let graph = dataset.graph(*metric)?;
            let cfg = RldgConfig::new(*k).passes(*passes).slack(*slack);
            let (state, report) = rldg_partition(&graph, &cfg)?;
            (project_bidder_partition(&state, &graph)?, Some(report.weighted_cut_ratio))
        }
        ClusteringSpec::Random { k } => {
            if *k > n {
                return Err(Error::Config(vec![format!("random clustering with k = {k} exceeds {n} bidders")]));
            }
            (random_clustering(n, *k, &mut rng::seeded(seed))?, None)
        }
        ClusteringSpec::File { path } => {
            let file = File::open(path).map_err(|e| Error::Config(vec![format!("cannot open {}: {e}", path.display())]))?;
            let v = Clustering::read_tsv(BufReader::new(file), n)?;
            if !v.remapped.is_empty() {
                log::info!("{}: renumbered {} cluster label(s)", path.display(), v.remapped.len());
            }
            (v.clustering, None)
        }
    };
    if clustering.n_units() != n {
        return Err(Error::Config(vec![format!(
            "clustering covers {} units but the dataset has {n} bidders",
            clustering.n_units()
        )]));
    }
    if clustering.n_clusters() < 2 {
        return Err(Error::Config(vec![format!(
            "{} yields {} cluster(s); at least 2 are needed",
            spec.describe(),
            clustering.n_clusters()
        )]));
    }
    Ok(BuiltClustering {
        clustering,
        description: spec.describe(),
        cut_ratio,
    })
}

/// Bidders sharing a keyphrase become neighbours.
pub fn bidder_projection(graph: &BipartiteGraph) -> Result<NeighborhoodGraph> {
    let nb = graph.n_bidders();
    let mut edges = Vec::new();
    for k in nb..graph.n_nodes() {
        let bidders: Vec<usize> = graph.neighbors(k).iter().filter(|e| e.1 > 0.0).map(|e| e.0).collect();
        for (i, &a) in bidders.iter().enumerate() {
            for &b in &bidders[i + 1..] {
                edges.push((a, b));
            }
        }
    }
    NeighborhoodGraph::from_edges(nb, edges)
}

pub enum BuiltModel {
    Auction(AuctionOutcomeModel),
    Linear(LinearInterferenceModel),
}

impl BuiltModel {
    pub fn as_outcome_model(&self) -> &dyn OutcomeModel {
        match self {
            BuiltModel::Auction(m) => m,
            BuiltModel::Linear(m) => m,
        }
    }
}

pub fn build_model(spec: &ModelSpec, dataset: &Dataset, seed: u64) -> Result<BuiltModel> {
    match spec {
        ModelSpec::Auction(a) => {
            let records = dataset
                .records
                .as_ref()
                .ok_or_else(|| Error::Config(vec!["the auction model needs a bid-log dataset".into()]))?;
            let set = data::auctions_from_records(records, Some(a.max_participants));
            let medians = set.median_bids();
            let mut positive: Vec<f64> = medians.iter().copied().filter(|&m| m > 0.0).collect();
            positive.sort_by(f64::total_cmp);
            let fallback = positive.get(positive.len() / 2).copied().unwrap_or(1.0);
            let noise = LogNormal::new(0.0, a.reserve_spread).map_err(|e| Error::Parameter(e.to_string()))?;
            let mut r = rng::child(seed, &[stream::RESERVES]);
            let profiles = medians
                .iter()
                .map(|&m| {
                    let base = if m > 0.0 { m } else { fallback };
                    BidderProfile::new(0.0, base * a.reserve_scale * noise.sample(&mut r))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(BuiltModel::Auction(AuctionOutcomeModel::new(set.auctions, profiles, a.mechanism.clone())?))
        }
        ModelSpec::Linear(l) => {
            let graph = bidder_projection(&dataset.graph(GraphMetric::Bid)?)?;
            let model = match &l.params_path {
                Some(path) => LinearInterferenceModel::from_csv(File::open(path)?, graph, l.noise_sd)?,
                None => LinearInterferenceModel::homogeneous(graph, l.alpha, l.beta, l.gamma, l.noise_sd)?,
            };
            Ok(BuiltModel::Linear(model))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusteringSummary {
    pub description: String,
    pub n_clusters: usize,
    pub min_size: usize,
    pub max_size: usize,
    pub cut_ratio: Option<f64>,
    /// Closed-form expectation of the direct estimator (linear model only).
    pub closed_form_expectation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateSummary {
    pub label: String,
    pub mean: f64,
    pub stderr: f64,
    pub bias: f64,
    pub draws: usize,
}

impl EstimateSummary {
    fn new(arm: &ArmSummary, tte: f64) -> Self {
        Self {
            label: arm.label.clone(),
            mean: arm.mean,
            stderr: arm.stderr,
            bias: arm.mean - tte,
            draws: arm.draws.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleRealization {
    pub tau_hat: [f64; 2],
    pub sigma_hat: [Option<f64>; 2],
    pub verdict: Option<ComparisonVerdict>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub seed: u64,
    pub replications: usize,
    pub n_units: usize,
    pub model: String,
    pub direction: Direction,
    /// Total treatment effect, from the all-treated and all-control outcomes.
    pub tte: f64,
    pub clusterings: [ClusteringSummary; 2],
    pub direct: [EstimateSummary; 2],
    pub eoe: [EstimateSummary; 2],
    pub excluded: [usize; 3],
    pub single_realization: SingleRealization,
    /// Test on the Monte-Carlo means of the two arms.
    pub aggregate_verdict: Option<ComparisonVerdict>,
    /// Whether the arms order the clusterings as the direct designs do.
    pub ordering_consistent: bool,
    /// Every mean lies on the side of the truth the mechanism predicts,
    /// allowing three standard errors.
    pub monotonicity_consistent: bool,
    pub treatment_bite: Option<f64>,
    pub bite_in_band: Option<bool>,
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Failed self-checks, empty when all hold.
    pub fn failed_checks(&self) -> Vec<String> {
        let mut failed = Vec::new();
        if !self.ordering_consistent {
            failed.push("experiment-of-experiments ordering differs from the direct designs".into());
        }
        if !self.monotonicity_consistent {
            failed.push("a Monte-Carlo mean lies on the wrong side of the total effect".into());
        }
        if self.bite_in_band == Some(false) {
            failed.push(format!(
                "treatment prices out {:.1}% of participations, outside the configured band",
                100.0 * self.treatment_bite.unwrap_or(f64::NAN)
            ));
        }
        failed
    }
}

/// Report plus the raw per-replication draws.
pub struct ComparisonRun {
    pub report: ComparisonReport,
    pub arms: Vec<ArmSummary>,
}

impl ComparisonRun {
    /// Writes `report.json` and `samples.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.report.to_json()? + "\n")?;
        write_samples_csv(BufWriter::new(File::create(dir.join("samples.csv"))?), &self.arms)
    }
}

fn summarize_clustering(b: &BuiltClustering, model: &BuiltModel) -> Result<ClusteringSummary> {
    let sizes = b.clustering.sizes();
    let closed_form_expectation = match model {
        BuiltModel::Linear(m) => Some(m.linear_closed_form_expectation(&b.clustering)?),
        BuiltModel::Auction(_) => None,
    };
    Ok(ClusteringSummary {
        description: b.description.clone(),
        n_clusters: b.clustering.n_clusters(),
        min_size: sizes.iter().copied().min().unwrap_or(0),
        max_size: sizes.iter().copied().max().unwrap_or(0),
        cut_ratio: b.cut_ratio,
        closed_form_expectation,
    })
}

fn infer_direction(model: &BuiltModel, c: &Clustering, override_: Option<Direction>) -> Result<Direction> {
    if let Some(d) = override_ {
        return Ok(d);
    }
    Ok(match model {
        // reserve-price treatments are self-exciting, hence increasing
        BuiltModel::Auction(_) => Direction::Increasing,
        BuiltModel::Linear(m) => classify_monotonicity(m, c)?.kind.direction().unwrap_or(Direction::Increasing),
    })
}

fn single_realization(
    model: &dyn OutcomeModel,
    c1: &Clustering,
    c2: &Clustering,
    seed: u64,
    alpha: f64,
    direction: Direction,
) -> Result<SingleRealization> {
    let design = match eoe_assign(c1, c2, seed) {
        Ok(d) => d,
        Err(e) if e.is_degenerate_draw() => {
            return Ok(SingleRealization {
                tau_hat: [f64::NAN; 2],
                sigma_hat: [None; 2],
                verdict: None,
                note: Some(e.to_string()),
            })
        }
        Err(e) => return Err(e),
    };
    let y = model.outcomes(&design.assignment, Noise::Seeded(rng::child_seed(seed, &[1])))?;
    let mut tau = [f64::NAN; 2];
    let mut sigma = [None; 2];
    let mut note = None;
    for arm in Arm::BOTH {
        let ac = design.arm(arm);
        let ya = ac.restrict(&y);
        match ht_estimate(&ya, design.cluster_z(arm), &ac.clustering) {
            Ok(e) => tau[arm.index()] = e.tau_hat,
            Err(e) => note = Some(e.to_string()),
        }
        match neymann_variance(&ya, design.cluster_z(arm), &ac.clustering) {
            Ok(v) => sigma[arm.index()] = Some(v.sigma_hat),
            Err(e) => note = Some(e.to_string()),
        }
    }
    let verdict = match (sigma, tau.iter().all(|t| t.is_finite())) {
        ([Some(s1), Some(s2)], true) => match compare_estimates(tau[0], s1, tau[1], s2, alpha, direction, 0.0) {
            Ok(v) => Some(v),
            Err(e) => {
                note = Some(e.to_string());
                None
            }
        },
        _ => None,
    };
    Ok(SingleRealization {
        tau_hat: tau,
        sigma_hat: sigma,
        verdict,
        note,
    })
}

/// Compares two built clusterings on one model.
#[allow(clippy::too_many_arguments)]
pub fn compare_clusterings(
    model: &BuiltModel,
    c1: &BuiltClustering,
    c2: &BuiltClustering,
    replications: usize,
    seed: u64,
    alpha: f64,
    direction: Option<Direction>,
) -> Result<ComparisonRun> {
    let m = model.as_outcome_model();
    let direction = infer_direction(model, &c1.clustering, direction)?;
    let tte = total_treatment_effect(m, Noise::Off)?;
    let direct: Vec<_> = [(&c1.clustering, "direct_1", 0u64), (&c2.clustering, "direct_2", 1)]
        .into_iter()
        .map(|(c, label, i)| {
            let sampler = CbrSampler::new(c).labeled(label);
            monte_carlo_expectation(&sampler, m, replications, rng::child_seed(seed, &[stream::DIRECT, i]))
        })
        .collect::<Result<_>>()?;
    let eoe = monte_carlo_expectation(
        &EoeSampler::new(&c1.clustering, &c2.clustering),
        m,
        replications,
        rng::child_seed(seed, &[stream::EOE]),
    )?;
    let single = single_realization(
        m,
        &c1.clustering,
        &c2.clustering,
        rng::child_seed(seed, &[stream::SINGLE]),
        alpha,
        direction,
    )?;
    let (e1, e2) = (eoe.arm(0), eoe.arm(1));
    let aggregate_verdict =
        compare_estimates(e1.mean, e1.stderr.powi(2), e2.mean, e2.stderr.powi(2), alpha, direction, 0.0).ok();
    let (d1, d2) = (direct[0].arm(0), direct[1].arm(0));
    let ordering_consistent = (d1.mean - d2.mean).signum() == (e1.mean - e2.mean).signum();
    let all = [d1, d2, e1, e2];
    let monotonicity_consistent = all.iter().all(|a| match direction {
        Direction::Increasing => a.mean <= tte + 3.0 * a.stderr,
        Direction::Decreasing => a.mean >= tte - 3.0 * a.stderr,
    });
    let (treatment_bite, bite_in_band, model_name) = match model {
        BuiltModel::Auction(a) => {
            let bite = a.treatment_bite();
            (Some(bite), None, "auction")
        }
        BuiltModel::Linear(_) => (None, None, "linear"),
    };
    let report = ComparisonReport {
        schema_version: SCHEMA_VERSION,
        seed,
        replications,
        n_units: m.n_units(),
        model: model_name.into(),
        direction,
        tte,
        clusterings: [summarize_clustering(c1, model)?, summarize_clustering(c2, model)?],
        direct: [EstimateSummary::new(d1, tte), EstimateSummary::new(d2, tte)],
        eoe: [EstimateSummary::new(e1, tte), EstimateSummary::new(e2, tte)],
        excluded: [direct[0].excluded, direct[1].excluded, eoe.excluded],
        single_realization: single,
        aggregate_verdict,
        ordering_consistent,
        monotonicity_consistent,
        treatment_bite,
        bite_in_band,
    };
    let arms = vec![d1.clone(), d2.clone(), e1.clone(), e2.clone()];
    Ok(ComparisonRun { report, arms })
}

/// Loads the dataset and builds both configured clusterings.
pub fn build_clusterings(config: &ExperimentConfig) -> Result<(Dataset, [BuiltClustering; 2])> {
    let dataset = Dataset::load(&config.dataset, config.seed)?;
    let c1 = build_clustering(&config.clustering_1, &dataset, rng::child_seed(config.seed, &[stream::CLUSTERING, 1]))?;
    let c2 = build_clustering(&config.clustering_2, &dataset, rng::child_seed(config.seed, &[stream::CLUSTERING, 2]))?;
    Ok((dataset, [c1, c2]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub replications: usize,
    pub tte: f64,
    pub clusterings: [ClusteringSummary; 2],
    pub direct: [EstimateSummary; 2],
}

/// Direct cluster-randomized Monte-Carlo runs only, one per clustering.
pub fn run_direct_simulation(config: &ExperimentConfig) -> Result<(SimulationReport, Vec<ArmSummary>)> {
    let (dataset, [c1, c2]) = build_clusterings(config)?;
    let model = build_model(&config.model, &dataset, config.seed)?;
    let m = model.as_outcome_model();
    let tte = total_treatment_effect(m, Noise::Off)?;
    let mut arms = Vec::with_capacity(2);
    for (i, c) in [&c1, &c2].into_iter().enumerate() {
        let sampler = CbrSampler::new(&c.clustering).labeled(format!("direct_{}", i + 1));
        let r = monte_carlo_expectation(&sampler, m, config.replications, rng::child_seed(config.seed, &[stream::DIRECT, i as u64]))?;
        arms.push(r.arm(0).clone());
    }
    let report = SimulationReport {
        seed: config.seed,
        replications: config.replications,
        tte,
        clusterings: [summarize_clustering(&c1, &model)?, summarize_clustering(&c2, &model)?],
        direct: [EstimateSummary::new(&arms[0], tte), EstimateSummary::new(&arms[1], tte)],
    };
    Ok((report, arms))
}

/// Full pipeline: dataset, both clusterings, model, Monte-Carlo comparison.
pub fn run_comparison_pipeline(config: &ExperimentConfig) -> Result<ComparisonRun> {
    let (dataset, [c1, c2]) = build_clusterings(config)?;
    let model = build_model(&config.model, &dataset, config.seed)?;
    let mut run = compare_clusterings(&model, &c1, &c2, config.replications, config.seed, config.alpha, config.direction)?;
    if let (ModelSpec::Auction(spec), Some(bite)) = (&config.model, run.report.treatment_bite) {
        run.report.bite_in_band = Some((spec.bite_band[0]..=spec.bite_band[1]).contains(&bite));
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Figure2Row {
    pub k: usize,
    pub method: String,
    pub pass: usize,
    pub cut_ratio: f64,
}

/// Cut-ratio trajectory of R-LDG for each configured `k`, with a random
/// balanced baseline at pass 0.
pub fn reproduce_figure2(config: &ExperimentConfig) -> Result<Vec<Figure2Row>> {
    let dataset = Dataset::load(&config.dataset, config.seed)?;
    let graph = dataset.graph(config.figure2.metric)?;
    let mut rows = Vec::new();
    for (i, &k) in config.figure2.ks.iter().enumerate() {
        let k = k.min(graph.n_nodes()).max(1);
        let baseline = random_balanced_partition(&graph, k, &mut rng::child(config.seed, &[stream::FIGURE, i as u64]))?;
        rows.push(Figure2Row {
            k,
            method: "random".into(),
            pass: 0,
            cut_ratio: crate::partition::weighted_cut_ratio(&graph, &baseline)?,
        });
        let mut cfg = RldgConfig::new(k).passes(config.figure2.passes).slack(config.figure2.slack);
        cfg.min_improvement = f64::NEG_INFINITY;
        cfg.order = StreamOrder::Fixed;
        cfg.variant = Variant::WeightedBipartite;
        let (_, report) = rldg_partition(&graph, &cfg)?;
        rows.extend(report.history.iter().enumerate().map(|(p, &cut)| Figure2Row {
            k,
            method: "rldg".into(),
            pass: p + 1,
            cut_ratio: cut,
        }));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Figure3Panel {
    pub panel: String,
    pub report: ComparisonReport,
    pub arms: Vec<ArmSummary>,
}

/// The three comparisons: R-LDG against random, few against many clusters,
/// and bid graph against impressions graph.
pub fn reproduce_figure3(config: &ExperimentConfig) -> Result<Vec<Figure3Panel>> {
    let f = &config.figure3;
    let rldg = |k: usize, metric: GraphMetric| ClusteringSpec::Rldg {
        k,
        passes: f.passes,
        metric,
        slack: 0.1,
    };
    let panels = [
        ("quality", rldg(f.k, GraphMetric::Bid), ClusteringSpec::Random { k: f.k }),
        ("partitions", rldg(f.k_small, GraphMetric::Bid), rldg(f.k_large, GraphMetric::Bid)),
        ("metric", rldg(f.k, GraphMetric::Bid), rldg(f.k, GraphMetric::Impressions)),
    ];
    let dataset = Dataset::load(&config.dataset, config.seed)?;
    let model = build_model(&config.model, &dataset, config.seed)?;
    let mut out = Vec::with_capacity(panels.len());
    for (i, (name, s1, s2)) in panels.into_iter().enumerate() {
        let seed = rng::child_seed(config.seed, &[stream::FIGURE, 100 + i as u64]);
        let c1 = build_clustering(&s1, &dataset, rng::child_seed(seed, &[1]))?;
        let c2 = build_clustering(&s2, &dataset, rng::child_seed(seed, &[2]))?;
        let run = compare_clusterings(&model, &c1, &c2, config.replications, seed, config.alpha, config.direction)?;
        out.push(Figure3Panel {
            panel: name.into(),
            report: run.report,
            arms: run.arms,
        });
    }
    Ok(out)
}

/// Tidy `panel,estimator,replicate,tau_hat,tte` rows.
pub fn write_figure3_csv<W: Write>(out: W, panels: &[Figure3Panel]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["panel", "estimator", "replicate", "tau_hat", "tte"])?;
    for p in panels {
        for arm in &p.arms {
            for (r, d) in &arm.draws {
                w.write_record([
                    p.panel.clone(),
                    arm.label.clone(),
                    r.to_string(),
                    d.tau_hat.to_string(),
                    p.report.tte.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_figure2_csv<W: Write>(out: W, rows: &[Figure2Row]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
[dataset]
kind = "synthetic"
[model]
kind = "auction"
[clustering_1]
kind = "rldg"
k = 10
[clustering_2]
kind = "random"
k = 10
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.replications, 2000);
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.dataset, DatasetSpec::Synthetic(SyntheticParams::default()));
        match &c.model {
            ModelSpec::Auction(a) => {
                assert_eq!(a.max_participants, 6);
                assert!(matches!(a.mechanism, Mechanism::VcgPositional { .. }));
            }
            ModelSpec::Linear(_) => panic!("expected auction"),
        }
        assert_eq!(
            c.clustering_1,
            ClusteringSpec::Rldg {
                k: 10,
                passes: 10,
                metric: GraphMetric::Bid,
                slack: 0.1
            }
        );
        assert!(serde_json::to_string(&c).unwrap().contains("\"n_bidders\":500"));
    }

    #[test]
    fn default_config_parses() {
        let c = parse_config(DEFAULT_CONFIG).unwrap();
        assert_eq!(c.clustering_2, ClusteringSpec::Random { k: 50 });
    }

    #[test]
    fn missing_dataset_is_named() {
        let text = MINIMAL.replace("[dataset]\nkind = \"synthetic\"\n", "");
        let Err(Error::Config(errs)) = parse_config(&text) else {
            panic!("expected a config error")
        };
        assert_eq!(errs.len(), 1);
        assert!(errs[0].contains("dataset"), "{errs:?}");
    }

    #[test]
    fn all_problems_reported_together() {
        let text = r#"
schema_version = 1
colour = "blue"
replications = "many"
[dataset]
kind = "synthetic"
[dataset.synthetic]
n_bidders = 10
n_bidderz = 3
[model]
kind = "auction"
mechanism = "gsp"
[clustering_1]
kind = "rldg"
[clustering_2]
kind = "random"
k = 3
"#;
        let Err(Error::Config(errs)) = parse_config(text) else {
            panic!("expected a config error")
        };
        let joined = errs.join("\n");
        for needle in ["colour", "replications", "n_bidderz", "gsp", "clustering_1.k"] {
            assert!(joined.contains(needle), "{needle} not in {joined}");
        }
    }

    #[test]
    fn conflicting_clustering_files() {
        let dir = std::env::temp_dir().join(format!("eoe-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let (a, b) = (dir.join("a.tsv"), dir.join("b.tsv"));
        std::fs::write(&a, "0\t0\n1\t1\n2\t1\n").unwrap();
        std::fs::write(&b, "0\t0\n1\t1\n3\t1\n").unwrap();
        let text = format!(
            "schema_version = 1\n[dataset]\nkind = \"synthetic\"\n[model]\nkind = \"linear\"\n\
             [clustering_1]\nkind = \"file\"\npath = {:?}\n[clustering_2]\nkind = \"file\"\npath = {:?}\n",
            a, b
        );
        let r = parse_config(&text);
        std::fs::remove_dir_all(&dir).ok();
        let Err(Error::Config(errs)) = r else { panic!("expected a config error") };
        assert!(errs[0].contains("different unit sets"));
    }

    #[test]
    fn wrong_schema_version() {
        let text = MINIMAL.replace("schema_version = 1", "schema_version = 7");
        assert!(matches!(parse_config(&text), Err(Error::Config(_))));
    }

    fn small_linear(c2: &str) -> ExperimentConfig {
        let text = format!(
            r#"
schema_version = 1
seed = 5
replications = 200
[dataset]
kind = "planted"
[dataset.planted]
n_bidders = 60
n_keyphrases = 30
blocks = 6
degree = 4
cross_probability = 0.1
[model]
kind = "linear"
gamma = 1.0
noise_sd = 0.5
[clustering_1]
kind = "rldg"
k = 6
{c2}
"#
        );
        parse_config(&text).unwrap()
    }

    #[test]
    fn linear_pipeline_orders_clusterings() {
        let cfg = small_linear("[clustering_2]\nkind = \"random\"\nk = 6");
        let run = run_comparison_pipeline(&cfg).unwrap();
        let r = &run.report;
        assert_eq!(r.direction, Direction::Increasing);
        assert!(r.direct[0].bias < 0.0 && r.direct[1].bias < 0.0);
        let cf: Vec<f64> = r.clusterings.iter().map(|c| c.closed_form_expectation.unwrap()).collect();
        assert!(cf[0] > cf[1]);
        assert!(r.monotonicity_consistent);
        assert_eq!(run.arms.len(), 4);
    }

    #[test]
    fn identical_clusterings_are_inconclusive() {
        let cfg = small_linear("[clustering_2]\nkind = \"rldg\"\nk = 6");
        let run = run_comparison_pipeline(&cfg).unwrap();
        let v = run.report.aggregate_verdict.unwrap();
        assert_eq!(v.better, crate::estimators::Better::Inconclusive);
    }

    #[test]
    fn degenerate_clustering_is_config_error() {
        let cfg = small_linear("[clustering_2]\nkind = \"random\"\nk = 1");
        assert!(matches!(run_comparison_pipeline(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn figure2_single_partition_is_flat() {
        let mut cfg = small_linear("[clustering_2]\nkind = \"random\"\nk = 6");
        cfg.figure2.ks = vec![1, 6];
        let rows = reproduce_figure2(&cfg).unwrap();
        let flat: Vec<_> = rows.iter().filter(|r| r.k == 1).collect();
        assert!(flat.iter().all(|r| r.cut_ratio == 0.0));
        assert_eq!(flat.len(), 1 + cfg.figure2.passes);
        let six: Vec<f64> = rows.iter().filter(|r| r.k == 6 && r.method == "rldg").map(|r| r.cut_ratio).collect();
        assert!(six.last().unwrap() < &rows.iter().find(|r| r.k == 6).unwrap().cut_ratio);
    }
}
