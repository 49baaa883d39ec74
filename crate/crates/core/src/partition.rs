//! Restreaming linear deterministic greedy (R-LDG) partitioning of
//! bidder/keyphrase graphs, random balanced baselines and cut metrics.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Clustering;
use crate::rng;

/// Weighted bipartite graph. Nodes `0..n_bidders` are bidders, the rest are
/// keyphrases.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    bidder_ids: Vec<String>,
    keyphrase_ids: Vec<String>,
    adjacency: Vec<Vec<(usize, f64)>>,
    edges: Vec<(usize, usize, f64)>,
    stream_order: Vec<usize>,
    total_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub bidder_id: String,
    pub keyphrase_id: String,
    pub weight: f64,
}

impl BipartiteGraph {
    /// Builds the graph from `(bidder, keyphrase, weight)` triples; duplicate
    /// pairs are summed. Ids default to the indices.
    pub fn from_edges<I>(n_bidders: usize, n_keyphrases: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        Self::with_ids(
            (0..n_bidders).map(|i| i.to_string()).collect(),
            (0..n_keyphrases).map(|i| i.to_string()).collect(),
            edges,
        )
    }

    pub fn with_ids<I>(bidder_ids: Vec<String>, keyphrase_ids: Vec<String>, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let (nb, nk) = (bidder_ids.len(), keyphrase_ids.len());
        let mut slot: HashMap<(usize, usize), usize> = HashMap::new();
        let mut list: Vec<(usize, usize, f64)> = Vec::new();
        let mut stream_order = Vec::with_capacity(nb + nk);
        let mut seen = vec![false; nb + nk];
        for (b, k, w) in edges {
            if b >= nb || k >= nk {
                return Err(Error::Data(format!("edge ({b}, {k}) is outside {nb} x {nk}")));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Data(format!("edge ({b}, {k}) has invalid weight {w}")));
            }
            for node in [b, nb + k] {
                if !std::mem::replace(&mut seen[node], true) {
                    stream_order.push(node);
                }
            }
            match slot.get(&(b, k)) {
                Some(&i) => list[i].2 += w,
                None => {
                    slot.insert((b, k), list.len());
                    list.push((b, k, w));
                }
            }
        }
        stream_order.extend((0..nb + nk).filter(|&v| !seen[v]));
        let mut adjacency = vec![Vec::new(); nb + nk];
        for &(b, k, w) in &list {
            adjacency[b].push((nb + k, w));
            adjacency[nb + k].push((b, w));
        }
        let total_weight = list.iter().map(|e| e.2).sum();
        Ok(Self {
            bidder_ids,
            keyphrase_ids,
            adjacency,
            edges: list,
            stream_order,
            total_weight,
        })
    }

    /// Builds the graph from named rows, numbering ids by first appearance.
    pub fn from_rows(rows: &[EdgeRow]) -> Result<Self> {
        let mut bidders: HashMap<&str, usize> = HashMap::new();
        let mut keyphrases: HashMap<&str, usize> = HashMap::new();
        let (mut bidder_ids, mut keyphrase_ids) = (Vec::new(), Vec::new());
        let mut triples = Vec::with_capacity(rows.len());
        for r in rows {
            let b = *bidders.entry(&r.bidder_id).or_insert_with(|| {
                bidder_ids.push(r.bidder_id.clone());
                bidder_ids.len() - 1
            });
            let k = *keyphrases.entry(&r.keyphrase_id).or_insert_with(|| {
                keyphrase_ids.push(r.keyphrase_id.clone());
                keyphrase_ids.len() - 1
            });
            triples.push((b, k, r.weight));
        }
        Self::with_ids(bidder_ids, keyphrase_ids, triples)
    }

    /// Reads `bidder_id,keyphrase_id,weight` rows.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let rows: Vec<EdgeRow> = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader)
            .deserialize()
            .collect::<std::result::Result<_, _>>()?;
        Self::from_rows(&rows)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for &(b, k, weight) in &self.edges {
            w.serialize(EdgeRow {
                bidder_id: self.bidder_ids[b].clone(),
                keyphrase_id: self.keyphrase_ids[k].clone(),
                weight,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn n_bidders(&self) -> usize {
        self.bidder_ids.len()
    }

    pub fn n_keyphrases(&self) -> usize {
        self.keyphrase_ids.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_bidder(&self, node: usize) -> bool {
        node < self.n_bidders()
    }

    pub fn node_id(&self, node: usize) -> &str {
        match node.checked_sub(self.n_bidders()) {
            None => &self.bidder_ids[node],
            Some(k) => &self.keyphrase_ids[k],
        }
    }

    pub fn bidder_ids(&self) -> &[String] {
        &self.bidder_ids
    }

    pub fn keyphrase_ids(&self) -> &[String] {
        &self.keyphrase_ids
    }

    /// `(neighbour node, weight)` pairs.
    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    /// Distinct `(bidder, keyphrase, weight)` edges.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Nodes in order of first appearance in the edge list; isolated nodes last.
    pub fn stream_order(&self) -> &[usize] {
        &self.stream_order
    }
}

/// Assignment of graph nodes to `k` partitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionState {
    k: usize,
    n_bidders: usize,
    part_of: Vec<Option<usize>>,
    sizes: Vec<usize>,
    bidder_counts: Vec<usize>,
}

impl PartitionState {
    pub fn empty(n_nodes: usize, n_bidders: usize, k: usize) -> Self {
        Self {
            k,
            n_bidders,
            part_of: vec![None; n_nodes],
            sizes: vec![0; k],
            bidder_counts: vec![0; k],
        }
    }

    pub fn from_parts(graph: &BipartiteGraph, k: usize, parts: &[usize]) -> Result<Self> {
        if parts.len() != graph.n_nodes() {
            return Err(Error::Dimension {
                what: "partition labels",
                expected: graph.n_nodes(),
                found: parts.len(),
            });
        }
        let mut s = Self::empty(graph.n_nodes(), graph.n_bidders(), k);
        for (v, &p) in parts.iter().enumerate() {
            if p >= k {
                return Err(Error::Partition(format!("node {v} has partition {p} >= {k}")));
            }
            s.assign(v, p);
        }
        Ok(s)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn part(&self, node: usize) -> Option<usize> {
        self.part_of[node]
    }

    pub fn parts(&self) -> &[Option<usize>] {
        &self.part_of
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn bidder_counts(&self) -> &[usize] {
        &self.bidder_counts
    }

    fn assign(&mut self, node: usize, p: usize) {
        self.unassign(node);
        self.part_of[node] = Some(p);
        self.sizes[p] += 1;
        if node < self.n_bidders {
            self.bidder_counts[p] += 1;
        }
    }

    fn unassign(&mut self, node: usize) {
        if let Some(p) = self.part_of[node].take() {
            self.sizes[p] -= 1;
            if node < self.n_bidders {
                self.bidder_counts[p] -= 1;
            }
        }
    }

    /// Writes `node_id,partition_index` rows.
    pub fn write_csv<W: Write>(&self, graph: &BipartiteGraph, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["node_id", "partition_index"])?;
        for (v, p) in self.part_of.iter().enumerate() {
            let p = p.ok_or(Error::Unassigned(v))?;
            w.write_record([graph.node_id(v).to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Neighbour counts, every node counted against capacity.
    Unweighted,
    /// Edge weights, only bidders counted against capacity.
    #[default]
    WeightedBipartite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamOrder {
    /// Graph input order on every pass.
    #[default]
    Fixed,
    /// A fresh seeded shuffle per pass.
    Shuffled { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RldgConfig {
    pub k: usize,
    pub passes: usize,
    pub variant: Variant,
    pub order: StreamOrder,
    /// Explicit per-partition capacities; `None` means `⌈(1 + slack) n / k⌉`
    /// over the counted nodes.
    pub capacities: Option<Vec<usize>>,
    pub slack: f64,
    /// Stop once a pass improves the cut ratio by less than this.
    pub min_improvement: f64,
}

impl RldgConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            passes: 10,
            variant: Variant::WeightedBipartite,
            order: StreamOrder::Fixed,
            capacities: None,
            slack: 0.1,
            min_improvement: 1e-4,
        }
    }

    pub fn passes(mut self, passes: usize) -> Self {
        self.passes = passes;
        self
    }

    pub fn variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn order(mut self, order: StreamOrder) -> Self {
        self.order = order;
        self
    }

    pub fn slack(mut self, slack: f64) -> Self {
        self.slack = slack;
        self
    }

    pub fn capacities(mut self, capacities: Vec<usize>) -> Self {
        self.capacities = Some(capacities);
        self
    }

    fn resolve_capacities(&self, counted: usize) -> Result<Vec<usize>> {
        if self.k == 0 {
            return Err(Error::Parameter("k must be at least 1".into()));
        }
        if !(self.slack >= 0.0) {
            return Err(Error::Parameter(format!("slack {} must be >= 0", self.slack)));
        }
        let caps = match &self.capacities {
            Some(c) if c.len() != self.k => {
                return Err(Error::Dimension {
                    what: "capacities",
                    expected: self.k,
                    found: c.len(),
                })
            }
            Some(c) => c.clone(),
            None => {
                let cap = ((1.0 + self.slack) * counted as f64 / self.k as f64).ceil() as usize;
                vec![cap.max(1); self.k]
            }
        };
        let total: usize = caps.iter().sum();
        if total < counted {
            return Err(Error::Parameter(format!(
                "capacities sum to {total} but {counted} nodes must be placed"
            )));
        }
        Ok(caps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutReport {
    pub weighted_cut_ratio: f64,
    /// Cut ratio after each completed pass.
    pub history: Vec<f64>,
}

/// Greedy streaming partitioner, re-streamed until the pass budget runs out
/// or the cut ratio stops improving.
pub fn rldg_partition(graph: &BipartiteGraph, config: &RldgConfig) -> Result<(PartitionState, CutReport)> {
    let bipartite = config.variant == Variant::WeightedBipartite;
    let counted = if bipartite { graph.n_bidders() } else { graph.n_nodes() };
    let caps = config.resolve_capacities(counted)?;
    let k = config.k;
    let mut state = PartitionState::empty(graph.n_nodes(), graph.n_bidders(), k);
    let mut order = graph.stream_order().to_vec();
    let mut shuffler = match config.order {
        StreamOrder::Shuffled { seed } => Some(rng::seeded(seed)),
        StreamOrder::Fixed => None,
    };
    let mut affinity = vec![0.0; k];
    let mut history = Vec::with_capacity(config.passes);
    for _ in 0..config.passes.max(1) {
        if let Some(r) = shuffler.as_mut() {
            order.shuffle(r);
        }
        for &node in &order {
            state.unassign(node);
            affinity.iter_mut().for_each(|a| *a = 0.0);
            for &(nb, w) in graph.neighbors(node) {
                if let Some(p) = state.part_of[nb] {
                    affinity[p] += if bipartite { w } else { 1.0 };
                }
            }
            let constrained = !bipartite || graph.is_bidder(node);
            let load = |p: usize| if bipartite && constrained { state.bidder_counts[p] } else { state.sizes[p] };
            let mut best: Option<(f64, usize, usize)> = None;
            for p in 0..k {
                let score = if constrained {
                    if load(p) >= caps[p] {
                        continue;
                    }
                    affinity[p] * (1.0 - load(p) as f64 / caps[p] as f64)
                } else {
                    affinity[p]
                };
                let tie_load = state.sizes[p];
                let better = match best {
                    None => true,
                    Some((s, l, _)) => score > s || (score == s && tie_load < l),
                };
                if better {
                    best = Some((score, tie_load, p));
                }
            }
            let (_, _, p) = best.ok_or_else(|| Error::Parameter("every partition is at capacity".into()))?;
            state.assign(node, p);
        }
        let cut = weighted_cut_ratio(graph, &state)?;
        let improved = history.last().map(|prev: &f64| prev - cut);
        history.push(cut);
        if matches!(improved, Some(d) if d < config.min_improvement) {
            break;
        }
    }
    let weighted_cut_ratio = *history.last().expect("at least one pass");
    Ok((
        state,
        CutReport {
            weighted_cut_ratio,
            history,
        },
    ))
}

/// Uniformly random partition of all nodes with part sizes differing by at
/// most one.
pub fn random_balanced_partition<R: Rng + ?Sized>(graph: &BipartiteGraph, k: usize, rng: &mut R) -> Result<PartitionState> {
    let n = graph.n_nodes();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("k = {k} must be in 1..={n}")));
    }
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(rng);
    let mut state = PartitionState::empty(n, graph.n_bidders(), k);
    for (i, v) in nodes.into_iter().enumerate() {
        state.assign(v, i % k);
    }
    Ok(state)
}

/// Share of edge weight whose endpoints fall in different partitions.
pub fn weighted_cut_ratio(graph: &BipartiteGraph, state: &PartitionState) -> Result<f64> {
    if let Some(v) = state.part_of.iter().position(Option::is_none) {
        return Err(Error::Unassigned(v));
    }
    if graph.total_weight() == 0.0 {
        return Ok(0.0);
    }
    let nb = graph.n_bidders();
    let cut: f64 = graph
        .edges()
        .iter()
        .filter(|&&(b, k, _)| state.part_of[b] != state.part_of[nb + k])
        .map(|e| e.2)
        .sum();
    Ok(cut / graph.total_weight())
}

/// Clustering of the bidders induced by their partitions; empty partitions
/// are dropped.
pub fn project_bidder_partition(state: &PartitionState, graph: &BipartiteGraph) -> Result<Clustering> {
    let labels = (0..graph.n_bidders())
        .map(|b| state.part_of[b].ok_or(Error::Unassigned(b)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Clustering::from_labels(labels))
}

/// Uniformly random balanced clustering of `n_units` into `k` clusters.
pub fn random_clustering<R: Rng + ?Sized>(n_units: usize, k: usize, rng: &mut R) -> Result<Clustering> {
    if k == 0 || k > n_units {
        return Err(Error::Parameter(format!("k = {k} must be in 1..={n_units}")));
    }
    let mut units: Vec<usize> = (0..n_units).collect();
    units.shuffle(rng);
    let mut labels = vec![0; n_units];
    for (i, u) in units.into_iter().enumerate() {
        labels[u] = i % k;
    }
    Ok(Clustering::from_labels(labels))
}

/// Planted-community bipartite graph generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedParams {
    pub n_bidders: usize,
    pub n_keyphrases: usize,
    pub blocks: usize,
    /// Edges drawn per bidder.
    pub degree: usize,
    /// Probability that an edge leaves the bidder's block.
    pub cross_probability: f64,
    pub within_weight: f64,
    pub cross_weight: f64,
}

impl Default for PlantedParams {
    fn default() -> Self {
        Self {
            n_bidders: 200,
            n_keyphrases: 100,
            blocks: 2,
            degree: 20,
            cross_probability: 0.5,
            within_weight: 10.0,
            cross_weight: 1.0,
        }
    }
}

/// A planted graph with its ground-truth blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedGraph {
    pub graph: BipartiteGraph,
    pub bidder_blocks: Vec<usize>,
    pub keyphrase_blocks: Vec<usize>,
}

impl PlantedGraph {
    /// The ground truth as a partition state over all nodes.
    pub fn truth(&self, k: usize) -> Result<PartitionState> {
        let parts: Vec<usize> = self.bidder_blocks.iter().chain(&self.keyphrase_blocks).copied().collect();
        PartitionState::from_parts(&self.graph, k, &parts)
    }
}

fn shuffled_blocks<R: Rng + ?Sized>(count: usize, blocks: usize, rng: &mut R) -> Vec<usize> {
    let mut b: Vec<usize> = (0..count).map(|i| i * blocks / count).collect();
    b.shuffle(rng);
    b
}

/// Draws a planted graph. Block sizes are balanced and membership is
/// shuffled; the edge list is emitted bidder by bidder, so the stream order
/// interleaves the two sides.
pub fn planted_bipartite_graph(params: &PlantedParams, seed: u64) -> Result<PlantedGraph> {
    let p = params;
    if p.blocks == 0 || p.n_bidders < p.blocks || p.n_keyphrases < p.blocks {
        return Err(Error::Parameter("each block needs at least one bidder and keyphrase".into()));
    }
    if !(0.0..=1.0).contains(&p.cross_probability) || !(p.within_weight >= 0.0) || !(p.cross_weight >= 0.0) {
        return Err(Error::Parameter("invalid planted edge parameters".into()));
    }
    let mut r = rng::seeded(seed);
    let bidder_blocks = shuffled_blocks(p.n_bidders, p.blocks, &mut r);
    let keyphrase_blocks = shuffled_blocks(p.n_keyphrases, p.blocks, &mut r);
    let mut members = vec![Vec::new(); p.blocks];
    for (k, &b) in keyphrase_blocks.iter().enumerate() {
        members[b].push(k);
    }
    let mut edges = Vec::with_capacity(p.n_bidders * p.degree);
    for (bidder, &home) in bidder_blocks.iter().enumerate() {
        for _ in 0..p.degree {
            let cross = p.blocks > 1 && r.random_bool(p.cross_probability);
            let (block, w) = if cross {
                ((home + r.random_range(1..p.blocks)) % p.blocks, p.cross_weight)
            } else {
                (home, p.within_weight)
            };
            let pool = &members[block];
            edges.push((bidder, pool[r.random_range(0..pool.len())], w));
        }
    }
    Ok(PlantedGraph {
        graph: BipartiteGraph::from_edges(p.n_bidders, p.n_keyphrases, edges)?,
        bidder_blocks,
        keyphrase_blocks,
    })
}
