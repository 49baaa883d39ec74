//! Second-price and positional VCG auctions with per-bidder reserve
//! treatments, and the welfare outcome model built on them.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Assignment, Noise, OutcomeModel};

/// Reserve prices a bidder faces in control and treatment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BidderProfile {
    pub control_reserve: f64,
    pub treatment_reserve: f64,
}

impl BidderProfile {
    pub fn new(control_reserve: f64, treatment_reserve: f64) -> Result<Self> {
        if !(control_reserve >= 0.0) || !(treatment_reserve > control_reserve) {
            return Err(Error::Parameter(format!(
                "reserves must satisfy 0 <= control < treatment, got {control_reserve} and {treatment_reserve}"
            )));
        }
        Ok(Self {
            control_reserve,
            treatment_reserve,
        })
    }

    pub fn reserve(&self, treated: bool) -> f64 {
        if treated {
            self.treatment_reserve
        } else {
            self.control_reserve
        }
    }
}

/// Click-through rates of the ad slots, best slot first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PositionCurve(Vec<f64>);

impl PositionCurve {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::Parameter("a position curve needs at least one slot".into()));
        }
        if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::Parameter(format!("click-through rate {r} is not in (0, 1]")));
        }
        if rates.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Parameter("click-through rates must strictly decrease".into()));
        }
        Ok(Self(rates))
    }

    pub fn slots(&self) -> usize {
        self.0.len()
    }

    pub fn rates(&self) -> &[f64] {
        &self.0
    }

    /// Rate of the 0-based `slot`; zero past the last slot.
    pub fn rate(&self, slot: usize) -> f64 {
        self.0.get(slot).copied().unwrap_or(0.0)
    }
}

impl Default for PositionCurve {
    fn default() -> Self {
        Self(vec![1.0, 0.6, 0.35, 0.2])
    }
}

impl TryFrom<Vec<f64>> for PositionCurve {
    type Error = Error;

    fn try_from(rates: Vec<f64>) -> Result<Self> {
        Self::new(rates)
    }
}

impl From<PositionCurve> for Vec<f64> {
    fn from(c: PositionCurve) -> Self {
        c.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Convexity {
    Convex,
    /// 1-based slot `k` where `pos[k-2] + pos[k] - 2 pos[k-1] < 0`.
    Violated { index: usize },
}

/// Checks non-negative second differences of the curve.
pub fn check_position_convexity(curve: &PositionCurve) -> Convexity {
    let r = curve.rates();
    for k in 2..r.len() {
        if r[k - 2] + r[k] - 2.0 * r[k - 1] < -1e-12 {
            return Convexity::Violated { index: k + 1 };
        }
    }
    Convexity::Convex
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuctionResult {
    /// Participant index occupying each slot, best slot first.
    pub allocation: Vec<Option<usize>>,
    pub payments: Vec<f64>,
    pub utilities: Vec<f64>,
}

fn check_bids(values: &[f64], reserves: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Parameter("an auction needs at least one participant".into()));
    }
    if reserves.len() != values.len() {
        return Err(Error::Dimension {
            what: "reserves",
            expected: values.len(),
            found: reserves.len(),
        });
    }
    Ok(())
}

/// Valid participants, highest value first, ties to the lower index.
fn ranked_valid(values: &[f64], reserves: &[f64]) -> Vec<usize> {
    let mut valid: Vec<usize> = (0..values.len()).filter(|&i| values[i] >= reserves[i]).collect();
    valid.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    valid
}

/// Single-item auction: the highest valid bid wins and pays the larger of
/// its own reserve and the second-highest valid bid.
pub fn run_second_price(values: &[f64], reserves: &[f64]) -> Result<AuctionResult> {
    check_bids(values, reserves)?;
    let n = values.len();
    let ranked = ranked_valid(values, reserves);
    let mut payments = vec![0.0; n];
    let mut utilities = vec![0.0; n];
    let winner = ranked.first().copied();
    if let Some(w) = winner {
        let second = ranked.get(1).map_or(0.0, |&j| values[j]);
        payments[w] = reserves[w].max(second);
        utilities[w] = values[w] - payments[w];
    }
    Ok(AuctionResult {
        allocation: vec![winner],
        payments,
        utilities,
    })
}

/// How far down the ranking a positional VCG payment reaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaymentRule {
    /// Full externality: the first unallocated bidder also counts, with a
    /// zero click-through rate below the last slot.
    #[default]
    Externality,
    /// Sum stops at the last slot, ignoring the first unallocated bidder.
    Truncated,
}

pub fn run_vcg_positional(values: &[f64], reserves: &[f64], curve: &PositionCurve) -> Result<AuctionResult> {
    run_vcg_positional_with(values, reserves, curve, PaymentRule::Externality)
}

/// Valid bidders fill the slots by descending value; the bidder in slot `k`
/// pays `Σ_{j>k} (pos_{j-1} − pos_j) v_j` over the valid bidders ranked below.
pub fn run_vcg_positional_with(
    values: &[f64],
    reserves: &[f64],
    curve: &PositionCurve,
    rule: PaymentRule,
) -> Result<AuctionResult> {
    check_bids(values, reserves)?;
    let n = values.len();
    let m = curve.slots();
    let ranked = ranked_valid(values, reserves);
    let filled = ranked.len().min(m);
    let reach = match rule {
        PaymentRule::Externality => ranked.len().min(m + 1),
        PaymentRule::Truncated => filled,
    };
    let mut payments = vec![0.0; n];
    let mut utilities = vec![0.0; n];
    let mut allocation = vec![None; m];
    for k in 0..filled {
        let bidder = ranked[k];
        allocation[k] = Some(bidder);
        let pay: f64 = (k + 1..reach)
            .map(|j| (curve.rate(j - 1) - curve.rate(j)) * values[ranked[j]])
            .sum();
        payments[bidder] = pay;
        utilities[bidder] = curve.rate(k) * values[bidder] - pay;
    }
    Ok(AuctionResult {
        allocation,
        payments,
        utilities,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mechanism {
    SecondPrice,
    VcgPositional {
        curve: PositionCurve,
        #[serde(default)]
        rule: PaymentRule,
    },
}

impl Mechanism {
    pub fn run(&self, values: &[f64], reserves: &[f64]) -> Result<AuctionResult> {
        match self {
            Mechanism::SecondPrice => run_second_price(values, reserves),
            Mechanism::VcgPositional { curve, rule } => run_vcg_positional_with(values, reserves, curve, *rule),
        }
    }
}

/// One auction: participating bidders and their (truthful) bids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionInstance {
    pub bidders: Vec<usize>,
    pub values: Vec<f64>,
}

/// Bidder utility summed over every auction, as a potential-outcome model
/// indexed by bidder.
#[derive(Debug, Clone, PartialEq)]
pub struct AuctionOutcomeModel {
    auctions: Vec<AuctionInstance>,
    profiles: Vec<BidderProfile>,
    mechanism: Mechanism,
    /// Per auction, participant positions by descending value. Values never
    /// change, so only the reserve filter depends on the assignment.
    ranking: Vec<Vec<usize>>,
}

impl AuctionOutcomeModel {
    pub fn new(auctions: Vec<AuctionInstance>, profiles: Vec<BidderProfile>, mechanism: Mechanism) -> Result<Self> {
        for (a, auction) in auctions.iter().enumerate() {
            if auction.bidders.is_empty() || auction.bidders.len() != auction.values.len() {
                return Err(Error::Data(format!(
                    "auction {a} has {} bidders and {} values",
                    auction.bidders.len(),
                    auction.values.len()
                )));
            }
            let mut seen = HashSet::new();
            for &b in &auction.bidders {
                if b >= profiles.len() {
                    return Err(Error::Data(format!("auction {a} references bidder {b} without a profile")));
                }
                if !seen.insert(b) {
                    return Err(Error::Data(format!("bidder {b} appears twice in auction {a}")));
                }
            }
            if let Some(v) = auction.values.iter().find(|v| !(**v > 0.0)) {
                return Err(Error::Data(format!("auction {a} has non-positive value {v}")));
            }
        }
        let ranking = auctions
            .iter()
            .map(|a| {
                let mut order: Vec<usize> = (0..a.values.len()).collect();
                order.sort_by(|&i, &j| a.values[j].total_cmp(&a.values[i]).then(i.cmp(&j)));
                order
            })
            .collect();
        Ok(Self {
            auctions,
            profiles,
            mechanism,
            ranking,
        })
    }

    /// Builds the model from CSV rows, indexing bidders in profile order.
    pub fn from_rows(auctions: &[AuctionRow], profiles: &[ProfileRow], mechanism: Mechanism) -> Result<Self> {
        let mut index = HashMap::new();
        let mut reserves = Vec::with_capacity(profiles.len());
        for p in profiles {
            if index.insert(p.bidder_id.as_str(), reserves.len()).is_some() {
                return Err(Error::Data(format!("duplicate profile for bidder {}", p.bidder_id)));
            }
            reserves.push(BidderProfile::new(p.control_reserve, p.treatment_reserve)?);
        }
        let mut order: Vec<&str> = Vec::new();
        let mut grouped: HashMap<&str, AuctionInstance> = HashMap::new();
        for row in auctions {
            let &b = index
                .get(row.bidder_id.as_str())
                .ok_or_else(|| Error::Data(format!("bidder {} has no profile", row.bidder_id)))?;
            let entry = grouped.entry(row.auction_id.as_str()).or_insert_with(|| {
                order.push(row.auction_id.as_str());
                AuctionInstance {
                    bidders: Vec::new(),
                    values: Vec::new(),
                }
            });
            entry.bidders.push(b);
            entry.values.push(row.value);
        }
        let list = order.into_iter().map(|id| grouped.remove(id).expect("grouped")).collect();
        Self::new(list, reserves, mechanism)
    }

    pub fn auctions(&self) -> &[AuctionInstance] {
        &self.auctions
    }

    pub fn profiles(&self) -> &[BidderProfile] {
        &self.profiles
    }

    pub fn mechanism(&self) -> &Mechanism {
        &self.mechanism
    }

    /// Fraction of participations whose bid falls below the treated reserve.
    pub fn treatment_bite(&self) -> f64 {
        let (mut below, mut total) = (0usize, 0usize);
        for a in &self.auctions {
            for (&b, &v) in a.bidders.iter().zip(&a.values) {
                total += 1;
                below += usize::from(v < self.profiles[b].treatment_reserve);
            }
        }
        if total == 0 {
            0.0
        } else {
            below as f64 / total as f64
        }
    }

    /// Per-bidder welfare under assignment `z`.
    pub fn auction_welfare_outcomes(&self, z: &Assignment) -> Result<Vec<f64>> {
        z.check_len(self.profiles.len())?;
        let mut y = vec![0.0; self.profiles.len()];
        let mut valid = Vec::new();
        for (a, order) in self.auctions.iter().zip(&self.ranking) {
            let reserve = |i: usize| {
                let b = a.bidders[i];
                self.profiles[b].reserve(z.is_treated(b))
            };
            valid.clear();
            valid.extend(order.iter().copied().filter(|&i| a.values[i] >= reserve(i)));
            match &self.mechanism {
                Mechanism::SecondPrice => {
                    if let Some(&w) = valid.first() {
                        let second = valid.get(1).map_or(0.0, |&j| a.values[j]);
                        y[a.bidders[w]] += a.values[w] - reserve(w).max(second);
                    }
                }
                Mechanism::VcgPositional { curve, rule } => {
                    let filled = valid.len().min(curve.slots());
                    let reach = match rule {
                        PaymentRule::Externality => valid.len().min(curve.slots() + 1),
                        PaymentRule::Truncated => filled,
                    };
                    for k in 0..filled {
                        let pay: f64 = (k + 1..reach)
                            .map(|j| (curve.rate(j - 1) - curve.rate(j)) * a.values[valid[j]])
                            .sum();
                        y[a.bidders[valid[k]]] += curve.rate(k) * a.values[valid[k]] - pay;
                    }
                }
            }
        }
        Ok(y)
    }
}

impl OutcomeModel for AuctionOutcomeModel {
    fn n_units(&self) -> usize {
        self.profiles.len()
    }

    fn outcomes(&self, z: &Assignment, _noise: Noise) -> Result<Vec<f64>> {
        self.auction_welfare_outcomes(z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityWitness {
    /// Unit whose outcome dropped.
    pub unit: usize,
    /// Unit whose treatment was switched on.
    pub flipped: usize,
    pub assignment: Vec<u8>,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PointwiseVerdict {
    Holds,
    Violated(MonotonicityWitness),
}

/// Verifies that treating any one unit never lowers another unit's outcome,
/// over all `2^n` assignments. Requires `n <= n_max` (and at most 24).
pub fn pointwise_monotonicity_check(model: &dyn OutcomeModel, n_max: usize) -> Result<PointwiseVerdict> {
    let n = model.n_units();
    if n > n_max.min(24) {
        return Err(Error::Parameter(format!(
            "{n} units exceed the enumeration limit of {}",
            n_max.min(24)
        )));
    }
    let bits_of = |mask: usize| (0..n).map(|i| mask >> i & 1 == 1).collect::<Vec<_>>();
    let outcomes: Vec<Vec<f64>> = (0..1usize << n)
        .map(|mask| model.outcomes(&Assignment::from_units(bits_of(mask)), Noise::Off))
        .collect::<Result<_>>()?;
    for mask in 0..1usize << n {
        for j in (0..n).filter(|j| mask >> j & 1 == 0) {
            let (before, after) = (&outcomes[mask], &outcomes[mask | 1 << j]);
            for i in (0..n).filter(|&i| i != j) {
                if after[i] < before[i] - 1e-12 {
                    return Ok(PointwiseVerdict::Violated(MonotonicityWitness {
                        unit: i,
                        flipped: j,
                        assignment: bits_of(mask).into_iter().map(u8::from).collect(),
                        before: before[i],
                        after: after[i],
                    }));
                }
            }
        }
    }
    Ok(PointwiseVerdict::Holds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionRow {
    pub auction_id: String,
    pub bidder_id: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub bidder_id: String,
    pub control_reserve: f64,
    pub treatment_reserve: f64,
}

fn read_rows<T: serde::de::DeserializeOwned, R: Read>(reader: R) -> Result<Vec<T>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

fn write_rows<T: Serialize, W: Write>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `auction_id,bidder_id,value` rows.
pub fn read_auction_csv<R: Read>(reader: R) -> Result<Vec<AuctionRow>> {
    read_rows(reader)
}

/// Reads `bidder_id,control_reserve,treatment_reserve` rows.
pub fn read_profile_csv<R: Read>(reader: R) -> Result<Vec<ProfileRow>> {
    read_rows(reader)
}

pub fn write_auction_csv<W: Write>(out: W, rows: &[AuctionRow]) -> Result<()> {
    write_rows(out, rows)
}

pub fn write_profile_csv<W: Write>(out: W, rows: &[ProfileRow]) -> Result<()> {
    write_rows(out, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::total_treatment_effect;
    use approx::assert_abs_diff_eq;

    fn curve(r: &[f64]) -> PositionCurve {
        PositionCurve::new(r.to_vec()).unwrap()
    }

    #[test]
    fn second_price_examples() {
        let r = run_second_price(&[10.0, 8.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r.allocation, vec![Some(0)]);
        assert_eq!(r.payments, vec![8.0, 0.0]);
        assert_eq!(r.utilities, vec![2.0, 0.0]);

        let r = run_second_price(&[10.0, 8.0], &[0.0, 9.0]).unwrap();
        assert_eq!(r.payments, vec![0.0, 0.0]);
        assert_eq!(r.utilities, vec![10.0, 0.0]);

        let r = run_second_price(&[5.0], &[6.0]).unwrap();
        assert_eq!(r.allocation, vec![None]);
        assert_eq!(r.utilities, vec![0.0]);
    }

    #[test]
    fn second_price_reserve_and_ties() {
        // own reserve above the second bid sets the price
        let r = run_second_price(&[10.0, 3.0], &[7.0, 0.0]).unwrap();
        assert_eq!(r.payments[0], 7.0);
        // equal to reserve is valid
        let r = run_second_price(&[6.0], &[6.0]).unwrap();
        assert_eq!((r.allocation[0], r.utilities[0]), (Some(0), 0.0));
        // ties go to the lower index
        let r = run_second_price(&[4.0, 9.0, 9.0], &[0.0; 3]).unwrap();
        assert_eq!(r.allocation, vec![Some(1)]);
        assert_eq!(r.utilities, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn second_price_bad_input() {
        assert!(run_second_price(&[], &[]).is_err());
        assert!(run_second_price(&[1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn vcg_example() {
        let c = curve(&[1.0, 0.6, 0.35]);
        let r = run_vcg_positional(&[10.0, 8.0, 5.0], &[0.0; 3], &c).unwrap();
        assert_eq!(r.allocation, vec![Some(0), Some(1), Some(2)]);
        for (got, want) in r.payments.iter().zip([4.45, 1.25, 0.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        for (got, want) in r.utilities.iter().zip([5.55, 3.55, 1.75]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn vcg_single_valid_bidder() {
        let c = curve(&[0.8, 0.5]);
        let r = run_vcg_positional(&[10.0, 3.0], &[0.0, 4.0], &c).unwrap();
        assert_eq!(r.payments, vec![0.0, 0.0]);
        assert_abs_diff_eq!(r.utilities[0], 8.0, epsilon = 1e-12);
        assert_eq!(r.allocation, vec![Some(0), None]);
    }

    #[test]
    fn vcg_rules_differ_only_when_bidders_outnumber_slots() {
        let c = curve(&[1.0, 0.5]);
        let v = [9.0, 7.0, 4.0];
        let full = run_vcg_positional_with(&v, &[0.0; 3], &c, PaymentRule::Externality).unwrap();
        let cut = run_vcg_positional_with(&v, &[0.0; 3], &c, PaymentRule::Truncated).unwrap();
        assert_abs_diff_eq!(full.payments[0], 0.5 * 7.0 + 0.5 * 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cut.payments[0], 0.5 * 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(full.payments[1], 0.5 * 4.0, epsilon = 1e-12);
        assert_eq!(cut.payments[1], 0.0);
    }

    #[test]
    fn vcg_one_slot_is_scaled_second_price() {
        let c = curve(&[0.7]);
        for v in [[3.0, 11.0, 6.0, 6.5], [2.0, 2.0, 1.0, 0.5], [1.0, 4.0, 9.0, 4.0]] {
            let a = run_vcg_positional(&v, &[0.0; 4], &c).unwrap();
            let b = run_second_price(&v, &[0.0; 4]).unwrap();
            assert_eq!(a.allocation, b.allocation);
            for i in 0..4 {
                assert_abs_diff_eq!(a.utilities[i], 0.7 * b.utilities[i], epsilon = 1e-12);
                assert_abs_diff_eq!(a.payments[i], 0.7 * b.payments[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn convexity_examples() {
        assert_eq!(check_position_convexity(&curve(&[1.0, 0.6, 0.35, 0.2])), Convexity::Convex);
        assert_eq!(check_position_convexity(&curve(&[1.0, 0.6, 0.3])), Convexity::Convex);
        assert_eq!(check_position_convexity(&curve(&[1.0, 0.5, 0.25])), Convexity::Convex);
        assert_eq!(check_position_convexity(&curve(&[1.0, 0.45, 0.01])), Convexity::Convex);
        assert_eq!(
            check_position_convexity(&curve(&[1.0, 0.9, 0.1])),
            Convexity::Violated { index: 3 }
        );
        assert_eq!(check_position_convexity(&curve(&[1.0, 0.2])), Convexity::Convex);
    }

    #[test]
    fn curve_validation() {
        assert!(PositionCurve::new(vec![]).is_err());
        assert!(PositionCurve::new(vec![1.0, 1.0]).is_err());
        assert!(PositionCurve::new(vec![1.2, 0.5]).is_err());
        assert!(PositionCurve::new(vec![0.5, 0.0]).is_err());
        let c: PositionCurve = serde_json::from_str("[1.0, 0.5]").unwrap();
        assert_eq!(c.slots(), 2);
        assert!(serde_json::from_str::<PositionCurve>("[0.5, 1.0]").is_err());
    }

    fn two_bidder_model() -> AuctionOutcomeModel {
        AuctionOutcomeModel::new(
            vec![AuctionInstance {
                bidders: vec![0, 1],
                values: vec![10.0, 8.0],
            }],
            vec![BidderProfile::new(0.0, 11.0).unwrap(), BidderProfile::new(0.0, 9.0).unwrap()],
            Mechanism::SecondPrice,
        )
        .unwrap()
    }

    #[test]
    fn welfare_tte_example() {
        let m = two_bidder_model();
        let y1 = m.auction_welfare_outcomes(&Assignment::constant(2, true)).unwrap();
        let y0 = m.auction_welfare_outcomes(&Assignment::constant(2, false)).unwrap();
        assert_eq!(y1.iter().sum::<f64>() - y0.iter().sum::<f64>(), -2.0);
        assert_eq!(total_treatment_effect(&m, Noise::Off).unwrap(), -1.0);
        assert_eq!(m.treatment_bite(), 1.0);
    }

    #[test]
    fn welfare_disjoint_auctions_add_up() {
        let m = AuctionOutcomeModel::new(
            vec![
                AuctionInstance { bidders: vec![0], values: vec![4.0] },
                AuctionInstance { bidders: vec![1], values: vec![6.0] },
                AuctionInstance { bidders: vec![0], values: vec![1.5] },
            ],
            vec![BidderProfile::new(0.0, 5.0).unwrap(), BidderProfile::new(1.0, 2.0).unwrap()],
            Mechanism::SecondPrice,
        )
        .unwrap();
        let y = m.auction_welfare_outcomes(&Assignment::from_bits(&[0, 1]).unwrap()).unwrap();
        assert_eq!(y, vec![5.5, 4.0]);
    }

    #[test]
    fn model_rejects_unknown_bidder() {
        let r = AuctionOutcomeModel::new(
            vec![AuctionInstance { bidders: vec![3], values: vec![1.0] }],
            vec![BidderProfile::new(0.0, 1.0).unwrap()],
            Mechanism::SecondPrice,
        );
        assert!(matches!(r, Err(Error::Data(_))));
        assert!(BidderProfile::new(2.0, 2.0).is_err());
    }

    #[test]
    fn pointwise_check_finds_planted_violation() {
        struct Envy;
        impl OutcomeModel for Envy {
            fn n_units(&self) -> usize {
                3
            }
            fn outcomes(&self, z: &Assignment, _: Noise) -> Result<Vec<f64>> {
                // unit 2 loses when unit 0 is treated
                Ok(vec![0.0, 0.0, if z.is_treated(0) { -1.0 } else { 0.0 }])
            }
        }
        match pointwise_monotonicity_check(&Envy, 8).unwrap() {
            PointwiseVerdict::Violated(w) => assert_eq!((w.unit, w.flipped), (2, 0)),
            PointwiseVerdict::Holds => panic!("expected a witness"),
        }
        assert_eq!(
            pointwise_monotonicity_check(&two_bidder_model(), 8).unwrap(),
            PointwiseVerdict::Holds
        );
        assert!(pointwise_monotonicity_check(&two_bidder_model(), 1).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let auctions = "auction_id,bidder_id,value\nk1-d1,alice,10\nk1-d1,bob,8\nk2-d1,bob,3\n";
        let profiles = "bidder_id,control_reserve,treatment_reserve\nbob,0,9\nalice,0,11\n";
        let ar = read_auction_csv(auctions.as_bytes()).unwrap();
        let pr = read_profile_csv(profiles.as_bytes()).unwrap();
        let m = AuctionOutcomeModel::from_rows(&ar, &pr, Mechanism::SecondPrice).unwrap();
        assert_eq!(m.auctions().len(), 2);
        assert_eq!(m.auctions()[0].bidders, vec![1, 0]);
        let y = m.auction_welfare_outcomes(&Assignment::constant(2, false)).unwrap();
        assert_eq!(y, vec![3.0, 2.0]);
        let mut buf = Vec::new();
        write_auction_csv(&mut buf, &ar).unwrap();
        assert_eq!(read_auction_csv(buf.as_slice()).unwrap(), ar);
        let missing = "auction_id,bidder_id,value\na,carol,1\n";
        let rows = read_auction_csv(missing.as_bytes()).unwrap();
        assert!(AuctionOutcomeModel::from_rows(&rows, &pr, Mechanism::SecondPrice).is_err());
    }
}
