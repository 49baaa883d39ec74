//! Bid-log records: parsing, graph and auction construction, a calibrated
//! synthetic generator and summary statistics.
//!
//! A log line is `day account rank keyphrase bid impressions clicks`, with the
//! bid in hundredths of a cent.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::auction::AuctionInstance;
use crate::error::{Error, Result};
use crate::partition::BipartiteGraph;
use crate::rng;

/// Hundredths of a cent per cent.
pub const UNITS_PER_CENT: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidRecord {
    pub day: u32,
    pub account_id: String,
    pub rank: u32,
    /// Comma-joined keyword tokens.
    pub keyphrase: String,
    pub bid: f64,
    pub impressions: f64,
    pub clicks: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ParsedRecords {
    pub records: Vec<BidRecord>,
    pub errors: Vec<LineError>,
}

fn parse_line(line: &str) -> std::result::Result<BidRecord, String> {
    let cols: Vec<&str> = line.split_whitespace().collect();
    if cols.len() != 7 {
        return Err(format!("expected 7 columns, found {}", cols.len()));
    }
    let int = |i: usize, name: &str| -> std::result::Result<u32, String> {
        match cols[i].parse::<u32>() {
            Ok(v) if v >= 1 => Ok(v),
            Ok(_) => Err(format!("{name} must be at least 1")),
            Err(_) => Err(format!("{name} {:?} is not a positive integer", cols[i])),
        }
    };
    let real = |i: usize, name: &str| -> std::result::Result<f64, String> {
        match cols[i].parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
            Ok(v) => Err(format!("{name} {v} must be finite and non-negative")),
            Err(_) => Err(format!("{name} {:?} is not a number", cols[i])),
        }
    };
    Ok(BidRecord {
        day: int(0, "day")?,
        account_id: cols[1].to_string(),
        rank: int(2, "rank")?,
        keyphrase: cols[3].to_string(),
        bid: real(4, "bid")?,
        impressions: real(5, "impressions")?,
        clicks: real(6, "clicks")?,
    })
}

/// Parses whitespace-separated log lines. Blank lines are skipped; malformed
/// lines are collected with their 1-based line number.
pub fn parse_records<R: BufRead>(input: R) -> Result<ParsedRecords> {
    let mut out = ParsedRecords::default();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Ok(r) => out.records.push(r),
            Err(message) => out.errors.push(LineError { line: i + 1, message }),
        }
    }
    Ok(out)
}

/// Writes records in the log format. Reals use Rust's round-trip formatting,
/// so parsing the output gives back the same records.
pub fn write_records<W: Write>(mut out: W, records: &[BidRecord]) -> Result<()> {
    for r in records {
        writeln!(
            out,
            "{} {} {} {} {:?} {:?} {:?}",
            r.day, r.account_id, r.rank, r.keyphrase, r.bid, r.impressions, r.clicks
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMetric {
    #[default]
    Bid,
    Impressions,
    Clicks,
    /// Mean rank over the days the pair appears.
    Rank,
}

/// Insertion-ordered string interner.
#[derive(Debug, Default)]
struct Interner<'a> {
    index: HashMap<&'a str, usize>,
    names: Vec<&'a str>,
}

impl<'a> Interner<'a> {
    fn get(&mut self, name: &'a str) -> usize {
        *self.index.entry(name).or_insert_with(|| {
            self.names.push(name);
            self.names.len() - 1
        })
    }

    fn owned(&self) -> Vec<String> {
        self.names.iter().map(|s| s.to_string()).collect()
    }
}

/// Bidder ids in order of first appearance; this is the unit index used by
/// every bidder-level model built from the same records.
pub fn bidder_ids(records: &[BidRecord]) -> Vec<String> {
    let mut bidders = Interner::default();
    for r in records {
        bidders.get(&r.account_id);
    }
    bidders.owned()
}

/// Aggregates records into a bidder/keyphrase graph. Bid, impression and
/// click weights are summed over days; rank is averaged. Zero-weight edges
/// are dropped, but every bidder and keyphrase stays a node.
pub fn build_bipartite_graph(records: &[BidRecord], metric: GraphMetric) -> Result<BipartiteGraph> {
    let mut bidders = Interner::default();
    let mut keyphrases = Interner::default();
    let mut slot: HashMap<(usize, usize), usize> = HashMap::new();
    let mut acc: Vec<(usize, usize, f64, u32)> = Vec::new();
    for r in records {
        let b = bidders.get(&r.account_id);
        let k = keyphrases.get(&r.keyphrase);
        let value = match metric {
            GraphMetric::Bid => r.bid,
            GraphMetric::Impressions => r.impressions,
            GraphMetric::Clicks => r.clicks,
            GraphMetric::Rank => f64::from(r.rank),
        };
        let i = *slot.entry((b, k)).or_insert_with(|| {
            acc.push((b, k, 0.0, 0));
            acc.len() - 1
        });
        acc[i].2 += value;
        acc[i].3 += 1;
    }
    let edges = acc.into_iter().filter_map(|(b, k, sum, n)| {
        let w = if metric == GraphMetric::Rank { sum / f64::from(n) } else { sum };
        (w > 0.0).then_some((b, k, w))
    });
    BipartiteGraph::with_ids(bidders.owned(), keyphrases.owned(), edges)
}

/// Keyphrase-day auctions over the bidder index of [`bidder_ids`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuctionSet {
    pub bidder_ids: Vec<String>,
    /// `(keyphrase, day)` of each auction.
    pub keys: Vec<(String, u32)>,
    pub auctions: Vec<AuctionInstance>,
}

impl AuctionSet {
    /// Median logged bid of each bidder across its participations.
    pub fn median_bids(&self) -> Vec<f64> {
        let mut bids = vec![Vec::new(); self.bidder_ids.len()];
        for a in &self.auctions {
            for (&b, &v) in a.bidders.iter().zip(&a.values) {
                bids[b].push(v);
            }
        }
        bids.into_iter().map(|mut v| median(&mut v).unwrap_or(0.0)).collect()
    }
}

/// Treats each keyphrase-day pair as one auction in which every bidder bids
/// its logged bid. A bidder listed twice for the same pair bids the mean.
/// Auctions with more than `max_participants` bidders, or with a zero bid,
/// are dropped.
pub fn auctions_from_records(records: &[BidRecord], max_participants: Option<usize>) -> AuctionSet {
    let mut bidders = Interner::default();
    let mut keys: Vec<(&str, u32)> = Vec::new();
    let mut key_index: HashMap<(&str, u32), usize> = HashMap::new();
    let mut entries: Vec<Vec<(usize, f64, u32)>> = Vec::new();
    for r in records {
        let b = bidders.get(&r.account_id);
        let a = *key_index.entry((r.keyphrase.as_str(), r.day)).or_insert_with(|| {
            keys.push((r.keyphrase.as_str(), r.day));
            entries.push(Vec::new());
            entries.len() - 1
        });
        match entries[a].iter_mut().find(|e| e.0 == b) {
            Some(e) => {
                e.1 += r.bid;
                e.2 += 1;
            }
            None => entries[a].push((b, r.bid, 1)),
        }
    }
    let limit = max_participants.unwrap_or(usize::MAX);
    let mut set = AuctionSet {
        bidder_ids: bidders.owned(),
        keys: Vec::new(),
        auctions: Vec::new(),
    };
    for (key, e) in keys.into_iter().zip(entries) {
        if e.len() > limit || e.iter().any(|x| x.1 <= 0.0) {
            continue;
        }
        set.keys.push((key.0.to_string(), key.1));
        set.auctions.push(AuctionInstance {
            bidders: e.iter().map(|x| x.0).collect(),
            values: e.iter().map(|x| x.1 / f64::from(x.2)).collect(),
        });
    }
    set
}

/// Parameters of the synthetic bid-log generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub n_bidders: usize,
    pub n_keyphrases: usize,
    pub n_days: u32,
    /// Number of planted bidder/keyphrase communities.
    pub communities: usize,
    /// Probability that a portfolio keyphrase comes from the bidder's own
    /// community.
    pub community_strength: f64,
    /// Keyphrases each bidder follows.
    pub portfolio_size: usize,
    /// Mean of the Poisson number of extra bids (beyond one) per active day.
    pub extra_bids_mean: f64,
    /// Probability that a bidder is active on a given day.
    pub activity: f64,
    /// Median bid in hundredths of a cent.
    pub bid_median: f64,
    /// Log-scale spread of bidder-level bid medians.
    pub bid_spread: f64,
    /// Log-scale spread of a bidder's bids around its median.
    pub bid_jitter: f64,
    /// Expected impressions in the top position.
    pub top_impressions: f64,
    pub click_rate: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            n_bidders: 500,
            n_keyphrases: 2000,
            n_days: 30,
            communities: 10,
            community_strength: 0.9,
            portfolio_size: 24,
            extra_bids_mean: 8.0,
            activity: 0.8,
            bid_median: 6000.0,
            bid_spread: 0.5,
            bid_jitter: 0.25,
            top_impressions: 4.0,
            click_rate: 0.02,
        }
    }
}

impl SyntheticParams {
    fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_bidders > 0 && self.n_keyphrases == 0 {
            problems.push("n_keyphrases must be positive when there are bidders".to_string());
        }
        if self.communities == 0 || (self.n_keyphrases > 0 && self.communities > self.n_keyphrases) {
            problems.push(format!("communities {} must be in 1..=n_keyphrases", self.communities));
        }
        if self.portfolio_size == 0 || (self.n_keyphrases > 0 && self.portfolio_size > self.n_keyphrases) {
            problems.push(format!("portfolio_size {} must be in 1..=n_keyphrases", self.portfolio_size));
        }
        for (name, p) in [
            ("community_strength", self.community_strength),
            ("activity", self.activity),
            ("click_rate", self.click_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                problems.push(format!("{name} {p} must be in [0, 1]"));
            }
        }
        for (name, v) in [
            ("extra_bids_mean", self.extra_bids_mean),
            ("bid_spread", self.bid_spread),
            ("bid_jitter", self.bid_jitter),
            ("top_impressions", self.top_impressions),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                problems.push(format!("{name} {v} must be finite and non-negative"));
            }
        }
        if !(self.bid_median > 0.0) {
            problems.push(format!("bid_median {} must be positive", self.bid_median));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Parameter(problems.join("; ")))
        }
    }
}

/// Planted community of synthetic keyphrase `k`.
pub fn keyphrase_community(k: usize, n_keyphrases: usize, communities: usize) -> usize {
    k * communities / n_keyphrases
}

/// Draws a synthetic bid log. Bidder `i` is named `b{i}` and belongs to
/// community `i % communities`; keyphrase `k` is `k{k}` and belongs to
/// [`keyphrase_community`]. Each active bidder-day bids on a random subset of
/// the bidder's portfolio; ranks follow bids within each keyphrase-day.
pub fn generate_synthetic_dataset(params: &SyntheticParams, seed: u64) -> Result<Vec<BidRecord>> {
    params.validate()?;
    let p = params;
    if p.n_bidders == 0 || p.n_days == 0 {
        return Ok(Vec::new());
    }
    let mut r = rng::seeded(seed);
    let blocks: Vec<Vec<usize>> = (0..p.communities)
        .map(|c| (0..p.n_keyphrases).filter(|&k| keyphrase_community(k, p.n_keyphrases, p.communities) == c).collect())
        .collect();
    let spread = LogNormal::new(p.bid_median.ln(), p.bid_spread).map_err(|e| Error::Parameter(e.to_string()))?;
    let jitter = LogNormal::new(0.0, p.bid_jitter).map_err(|e| Error::Parameter(e.to_string()))?;
    let extra = (p.extra_bids_mean > 0.0)
        .then(|| Poisson::new(p.extra_bids_mean).map_err(|e| Error::Parameter(e.to_string())))
        .transpose()?;

    let mut portfolios = Vec::with_capacity(p.n_bidders);
    let mut medians = Vec::with_capacity(p.n_bidders);
    for b in 0..p.n_bidders {
        let home = &blocks[b % p.communities];
        let mut chosen: Vec<usize> = Vec::with_capacity(p.portfolio_size);
        while chosen.len() < p.portfolio_size {
            let k = if r.random_bool(p.community_strength) {
                home[r.random_range(0..home.len())]
            } else {
                r.random_range(0..p.n_keyphrases)
            };
            if !chosen.contains(&k) {
                chosen.push(k);
            }
        }
        portfolios.push(chosen);
        medians.push(spread.sample(&mut r));
    }

    let mut records = Vec::new();
    for day in 1..=p.n_days {
        let mut by_keyphrase: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
        let mut touched: Vec<usize> = Vec::new();
        for b in 0..p.n_bidders {
            if !r.random_bool(p.activity) {
                continue;
            }
            let n = 1 + extra.as_ref().map_or(0, |d| d.sample(&mut r) as usize);
            let n = n.min(p.portfolio_size);
            for i in index::sample(&mut r, p.portfolio_size, n) {
                let k = portfolios[b][i];
                let bid = (medians[b] * jitter.sample(&mut r)).round().max(1.0);
                let entry = by_keyphrase.entry(k).or_default();
                if entry.is_empty() {
                    touched.push(k);
                }
                entry.push((b, bid));
            }
        }
        touched.sort_unstable();
        for k in touched {
            let mut bids = by_keyphrase.remove(&k).expect("touched keyphrase");
            bids.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for (pos, (b, bid)) in bids.into_iter().enumerate() {
                let rate = p.top_impressions * 0.6f64.powi(pos as i32);
                let impressions = if rate > 0.0 {
                    Poisson::new(rate).map_err(|e| Error::Parameter(e.to_string()))?.sample(&mut r).max(1.0)
                } else {
                    1.0
                };
                let clicks = Binomial::new(impressions as u64, p.click_rate)
                    .map_err(|e| Error::Parameter(e.to_string()))?
                    .sample(&mut r) as f64;
                records.push(BidRecord {
                    day,
                    account_id: format!("b{b}"),
                    rank: pos as u32 + 1,
                    keyphrase: format!("k{k}"),
                    bid,
                    impressions,
                    clicks,
                });
            }
        }
    }
    Ok(records)
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spread {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Spread {
    fn of(values: &mut [f64]) -> Option<Self> {
        let med = median(values)?;
        Some(Self {
            min: values[0],
            median: med,
            max: values[values.len() - 1],
        })
    }
}

/// One panel of daily per-entity aggregates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryPanel {
    /// Entity-days in the panel.
    pub entity_days: usize,
    pub bid_count: Spread,
    /// Mean bid of the entity-day, in cents.
    pub bid_value_cents: Spread,
    pub impressions: Spread,
    pub clicks: Spread,
    /// Percentage of entity-days with at most one click.
    pub clicks_cdf1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub records: usize,
    pub bidders: usize,
    pub keyphrases: usize,
    pub days: usize,
    pub per_keyphrase: Option<SummaryPanel>,
    pub per_bidder: Option<SummaryPanel>,
}

fn panel<'a, F>(records: &'a [BidRecord], key: F) -> Option<SummaryPanel>
where
    F: Fn(&'a BidRecord) -> &'a str,
{
    let mut groups: HashMap<(&str, u32), (f64, f64, f64, f64)> = HashMap::new();
    for r in records {
        let g = groups.entry((key(r), r.day)).or_default();
        g.0 += 1.0;
        g.1 += r.bid;
        g.2 += r.impressions;
        g.3 += r.clicks;
    }
    let n = groups.len();
    let (mut count, mut bid, mut imp, mut clicks) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for (c, b, i, k) in groups.into_values() {
        count.push(c);
        bid.push(b / c / UNITS_PER_CENT);
        imp.push(i);
        clicks.push(k);
    }
    let at_most_one = clicks.iter().filter(|&&c| c <= 1.0).count();
    Some(SummaryPanel {
        entity_days: n,
        bid_count: Spread::of(&mut count)?,
        bid_value_cents: Spread::of(&mut bid)?,
        impressions: Spread::of(&mut imp)?,
        clicks: Spread::of(&mut clicks)?,
        clicks_cdf1: 100.0 * at_most_one as f64 / n as f64,
    })
}

/// Daily per-keyphrase and per-bidder aggregates.
pub fn summarize(records: &[BidRecord]) -> DatasetSummary {
    let count = |f: fn(&BidRecord) -> &str| {
        let mut seen = std::collections::HashSet::new();
        records.iter().filter(|r| seen.insert(f(r))).count()
    };
    let days = records.iter().map(|r| r.day).collect::<std::collections::HashSet<_>>().len();
    DatasetSummary {
        records: records.len(),
        bidders: count(|r| &r.account_id),
        keyphrases: count(|r| &r.keyphrase),
        days,
        per_keyphrase: panel(records, |r| &r.keyphrase),
        per_bidder: panel(records, |r| &r.account_id),
    }
}
