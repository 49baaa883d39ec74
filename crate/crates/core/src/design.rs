//! Randomization procedures: completely randomized, cluster-based, and the
//! two-stage experiment-of-experiments design.
//!
//! The experiment-of-experiments design splits the units into two arms of
//! sizes `⌊N/2⌋` and `⌈N/2⌉`, restricts each candidate clustering to its arm,
//! and runs a cluster-based design inside each arm with `⌊M_k/2⌋` treated
//! clusters.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Assignment, Clustering};
use crate::rng;

/// Stream tags for the stages of [`eoe_assign`].
pub mod stage {
    pub const SPLIT: u64 = 1;
    pub const ARM_ONE: u64 = 2;
    pub const ARM_TWO: u64 = 3;
}

/// Draws exactly `n_treated` treated units uniformly at random.
pub fn complete_randomization<R: Rng + ?Sized>(
    n_units: usize,
    n_treated: usize,
    rng: &mut R,
) -> Result<Assignment> {
    if n_treated > n_units {
        return Err(Error::Parameter(format!(
            "cannot treat {n_treated} of {n_units} units"
        )));
    }
    let mut units = vec![false; n_units];
    for i in sample(rng, n_units, n_treated) {
        units[i] = true;
    }
    Ok(Assignment::from_units(units))
}

/// Draws `m_treated` clusters uniformly and treats every unit in them.
pub fn cluster_based_assignment<R: Rng + ?Sized>(
    clustering: &Clustering,
    m_treated: usize,
    rng: &mut R,
) -> Result<Assignment> {
    let m = clustering.n_clusters();
    if m_treated > m {
        return Err(Error::Parameter(format!(
            "cannot treat {m_treated} of {m} clusters"
        )));
    }
    let mut z = vec![false; m];
    for j in sample(rng, m, m_treated) {
        z[j] = true;
    }
    Assignment::from_clusters(clustering, z)
}

/// One of the two arms of an experiment-of-experiments design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    One,
    Two,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::One, Arm::Two];

    pub fn index(self) -> usize {
        match self {
            Arm::One => 0,
            Arm::Two => 1,
        }
    }

    pub fn label(self) -> u8 {
        self.index() as u8 + 1
    }
}

/// Assignment of units to design arms (`W_i ∈ {1, 2}`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArmSplit {
    arm_of: Vec<Arm>,
    units: [Vec<usize>; 2],
}

impl ArmSplit {
    /// Balanced split: exactly `⌊N/2⌋` units in arm one, uniformly at random.
    pub fn balanced<R: Rng + ?Sized>(n_units: usize, rng: &mut R) -> Self {
        let ones = complete_randomization(n_units, n_units / 2, rng)
            .expect("n/2 never exceeds n");
        Self::from_arms(
            ones.units()
                .iter()
                .map(|&t| if t { Arm::One } else { Arm::Two })
                .collect(),
        )
    }

    pub fn from_arms(arm_of: Vec<Arm>) -> Self {
        let mut units = [Vec::new(), Vec::new()];
        for (i, a) in arm_of.iter().enumerate() {
            units[a.index()].push(i);
        }
        Self { arm_of, units }
    }

    /// Builds a split from `W` labels in `{1, 2}`.
    pub fn from_labels(w: &[u8]) -> Result<Self> {
        let arms = w
            .iter()
            .enumerate()
            .map(|(i, &l)| match l {
                1 => Ok(Arm::One),
                2 => Ok(Arm::Two),
                other => Err(Error::Parameter(format!(
                    "arm label of unit {i} is {other}, expected 1 or 2"
                ))),
            })
            .collect::<Result<_>>()?;
        Ok(Self::from_arms(arms))
    }

    pub fn n_units(&self) -> usize {
        self.arm_of.len()
    }

    pub fn arm_of(&self, unit: usize) -> Arm {
        self.arm_of[unit]
    }

    pub fn units(&self, arm: Arm) -> &[usize] {
        &self.units[arm.index()]
    }

    pub fn labels(&self) -> Vec<u8> {
        self.arm_of.iter().map(|a| a.label()).collect()
    }
}

/// A clustering restricted to the units of one arm. Cluster indices are local
/// to the arm; `units[local]` gives the global unit index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArmClustering {
    pub units: Vec<usize>,
    pub clustering: Clustering,
}

impl ArmClustering {
    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.clustering.n_clusters()
    }

    /// Restricts a global vector to this arm's units.
    pub fn restrict<T: Copy>(&self, values: &[T]) -> Vec<T> {
        self.units.iter().map(|&u| values[u]).collect()
    }
}

/// Restriction of `base` to the units of `arm`, preserving co-membership.
/// Base clusters with no unit in the arm disappear.
pub fn induced_clustering(base: &Clustering, split: &ArmSplit, arm: Arm) -> Result<ArmClustering> {
    if base.n_units() != split.n_units() {
        return Err(Error::Dimension {
            what: "arm split vs clustering",
            expected: base.n_units(),
            found: split.n_units(),
        });
    }
    let units = split.units(arm).to_vec();
    if units.is_empty() {
        return Err(Error::EmptyArm { arm: arm.label() as usize });
    }
    let labels = units.iter().map(|&u| base.cluster_of(u)).collect();
    Ok(ArmClustering {
        units,
        clustering: Clustering::from_labels(labels),
    })
}

/// A realized experiment-of-experiments design.
#[derive(Debug, Clone, PartialEq)]
pub struct EoeDesign {
    pub split: ArmSplit,
    pub arms: [ArmClustering; 2],
    /// Cluster-level draws, indexed by local cluster of each arm.
    pub cluster_z: [Vec<bool>; 2],
    /// Unit-level assignment over all `N` units.
    pub assignment: Assignment,
}

impl EoeDesign {
    pub fn arm(&self, arm: Arm) -> &ArmClustering {
        &self.arms[arm.index()]
    }

    pub fn cluster_z(&self, arm: Arm) -> &[bool] {
        &self.cluster_z[arm.index()]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&EoeDesignWire::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: EoeDesignWire = serde_json::from_str(text)?;
        wire.try_into()
    }
}

/// Number of treated clusters used inside an arm with `m` clusters.
pub fn arm_treated_clusters(m: usize) -> usize {
    m / 2
}

/// Runs the experiment-of-experiments design for clusterings `c1` and `c2`.
///
/// The arm split, the arm-one draw and the arm-two draw each use their own
/// child stream of `seed`.
pub fn eoe_assign(c1: &Clustering, c2: &Clustering, seed: u64) -> Result<EoeDesign> {
    if c1.n_units() != c2.n_units() {
        return Err(Error::Dimension {
            what: "second clustering",
            expected: c1.n_units(),
            found: c2.n_units(),
        });
    }
    let n = c1.n_units();
    let split = ArmSplit::balanced(n, &mut rng::child(seed, &[stage::SPLIT]));
    let arm_one = induced_clustering(c1, &split, Arm::One)?;
    let arm_two = induced_clustering(c2, &split, Arm::Two)?;
    let mut units = vec![false; n];
    let mut cluster_z: [Vec<bool>; 2] = [Vec::new(), Vec::new()];
    for (arm, ac, tag) in [
        (Arm::One, &arm_one, stage::ARM_ONE),
        (Arm::Two, &arm_two, stage::ARM_TWO),
    ] {
        let m = ac.n_clusters();
        if m < 2 {
            return Err(Error::DegenerateDesign(format!(
                "arm {} has {m} induced cluster(s); at least 2 are needed",
                arm.label()
            )));
        }
        let local = cluster_based_assignment(
            &ac.clustering,
            arm_treated_clusters(m),
            &mut rng::child(seed, &[tag]),
        )?;
        for (l, &u) in ac.units.iter().enumerate() {
            units[u] = local.is_treated(l);
        }
        cluster_z[arm.index()] = local.clusters().expect("cluster draw").to_vec();
    }
    Ok(EoeDesign {
        split,
        arms: [arm_one, arm_two],
        cluster_z,
        assignment: Assignment::from_units(units),
    })
}

#[derive(Serialize, Deserialize)]
struct EoeDesignWire {
    n_units: usize,
    w: Vec<u8>,
    z: Vec<u8>,
    z1: Vec<u8>,
    z2: Vec<u8>,
    /// `[unit, induced_cluster]` pairs for arm one.
    clusters1: Vec<(usize, usize)>,
    clusters2: Vec<(usize, usize)>,
}

impl From<&EoeDesign> for EoeDesignWire {
    fn from(d: &EoeDesign) -> Self {
        let pairs = |ac: &ArmClustering| {
            ac.units
                .iter()
                .zip(ac.clustering.labels())
                .map(|(&u, &c)| (u, c))
                .collect()
        };
        let bits = |z: &[bool]| z.iter().map(|&t| u8::from(t)).collect();
        Self {
            n_units: d.split.n_units(),
            w: d.split.labels(),
            z: d.assignment.to_bits(),
            z1: bits(&d.cluster_z[0]),
            z2: bits(&d.cluster_z[1]),
            clusters1: pairs(&d.arms[0]),
            clusters2: pairs(&d.arms[1]),
        }
    }
}

impl TryFrom<EoeDesignWire> for EoeDesign {
    type Error = Error;

    fn try_from(w: EoeDesignWire) -> Result<Self> {
        let split = ArmSplit::from_labels(&w.w)?;
        let assignment = Assignment::from_bits(&w.z)?;
        for (what, len) in [("w", split.n_units()), ("z", assignment.len())] {
            if len != w.n_units {
                return Err(Error::Data(format!(
                    "field {what} has length {len}, expected {}",
                    w.n_units
                )));
            }
        }
        let mut arms = Vec::with_capacity(2);
        let mut cluster_z = Vec::with_capacity(2);
        for (arm, pairs, z) in [(Arm::One, &w.clusters1, &w.z1), (Arm::Two, &w.clusters2, &w.z2)] {
            let units: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            if units != split.units(arm) {
                return Err(Error::Data(format!(
                    "cluster map of arm {} does not match w",
                    arm.label()
                )));
            }
            let clustering = Clustering::from_labels(pairs.iter().map(|p| p.1).collect());
            let zc = Assignment::from_bits(z)?;
            let expanded = Assignment::from_clusters(&clustering, zc.units().to_vec())?;
            for (l, &u) in units.iter().enumerate() {
                if expanded.is_treated(l) != assignment.is_treated(u) {
                    return Err(Error::Data(format!(
                        "unit {u} treatment disagrees with its cluster draw"
                    )));
                }
            }
            arms.push(ArmClustering { units, clustering });
            cluster_z.push(zc.units().to_vec());
        }
        let [a1, a2]: [ArmClustering; 2] = arms.try_into().expect("two arms");
        let [z1, z2]: [Vec<bool>; 2] = cluster_z.try_into().expect("two arms");
        Ok(Self {
            split,
            arms: [a1, a2],
            cluster_z: [z1, z2],
            assignment,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn complete_randomization_extremes() {
        let mut r = seeded(1);
        assert_eq!(complete_randomization(4, 0, &mut r).unwrap().to_bits(), vec![0; 4]);
        assert_eq!(complete_randomization(4, 4, &mut r).unwrap().to_bits(), vec![1; 4]);
        assert!(complete_randomization(4, 5, &mut r).is_err());
    }

    #[test]
    fn complete_randomization_marginals() {
        let mut r = seeded(11);
        let draws = 100_000;
        let mut hits = [0usize; 6];
        for _ in 0..draws {
            let z = complete_randomization(6, 3, &mut r).unwrap();
            assert_eq!(z.n_treated(), 3);
            for (i, h) in hits.iter_mut().enumerate() {
                *h += usize::from(z.is_treated(i));
            }
        }
        for h in hits {
            let p = h as f64 / draws as f64;
            assert!((p - 0.5).abs() < 0.01, "marginal {p}");
        }
    }

    #[test]
    fn cluster_assignment_two_pairs() {
        let c = Clustering::from_labels(vec![0, 0, 1, 1]);
        let mut r = seeded(5);
        let draws = 20_000;
        let mut first = 0;
        for _ in 0..draws {
            let z = cluster_based_assignment(&c, 1, &mut r).unwrap().to_bits();
            match z.as_slice() {
                [1, 1, 0, 0] => first += 1,
                [0, 0, 1, 1] => {}
                other => panic!("inadmissible assignment {other:?}"),
            }
        }
        let p = first as f64 / draws as f64;
        assert!((p - 0.5).abs() < 0.02);
    }

    #[test]
    fn cluster_assignment_all_treated() {
        let c = Clustering::from_labels(vec![0, 1, 1, 2]);
        let z = cluster_based_assignment(&c, 3, &mut seeded(0)).unwrap();
        assert_eq!(z.n_treated(), 4);
        assert!(cluster_based_assignment(&c, 4, &mut seeded(0)).is_err());
    }

    #[test]
    fn singleton_clusters_match_complete_randomization() {
        let c = Clustering::singletons(7);
        let a = cluster_based_assignment(&c, 3, &mut seeded(9)).unwrap();
        let b = complete_randomization(7, 3, &mut seeded(9)).unwrap();
        assert_eq!(a.units(), b.units());
    }

    #[test]
    fn induced_restriction() {
        // a,b,c,d = 0..4; base {a,b},{c,d}; arm one holds {a,c}
        let base = Clustering::from_labels(vec![0, 0, 1, 1]);
        let split = ArmSplit::from_labels(&[1, 2, 1, 2]).unwrap();
        let ac = induced_clustering(&base, &split, Arm::One).unwrap();
        assert_eq!(ac.units, vec![0, 2]);
        assert_eq!(ac.n_clusters(), 2);
    }

    #[test]
    fn induced_full_arm_equals_base() {
        let base = Clustering::from_labels(vec![0, 1, 0, 2]);
        let split = ArmSplit::from_labels(&[2, 2, 2, 2]).unwrap();
        let ac = induced_clustering(&base, &split, Arm::Two).unwrap();
        assert_eq!(ac.clustering, base);
        assert!(matches!(
            induced_clustering(&base, &split, Arm::One),
            Err(Error::EmptyArm { arm: 1 })
        ));
    }

    #[test]
    fn eoe_singletons_n4() {
        let c = Clustering::singletons(4);
        let d = eoe_assign(&c, &c, 3).unwrap();
        for arm in Arm::BOTH {
            assert_eq!(d.arm(arm).n_units(), 2);
            assert_eq!(d.arm(arm).n_clusters(), 2);
            assert_eq!(d.cluster_z(arm).iter().filter(|&&t| t).count(), 1);
        }
    }

    #[test]
    fn eoe_n2_is_degenerate() {
        let c = Clustering::singletons(2);
        assert!(matches!(
            eoe_assign(&c, &c, 0),
            Err(Error::DegenerateDesign(_))
        ));
    }

    #[test]
    fn eoe_is_reproducible_and_json_round_trips() {
        let c1 = Clustering::from_labels((0..30).map(|i| i % 5).collect());
        let c2 = Clustering::from_labels((0..30).map(|i| i / 6).collect());
        let a = eoe_assign(&c1, &c2, 42).unwrap();
        let b = eoe_assign(&c1, &c2, 42).unwrap();
        assert_eq!(a, b);
        let back = EoeDesign::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn eoe_json_rejects_inconsistent_z() {
        let c = Clustering::singletons(6);
        let d = eoe_assign(&c, &c, 1).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&d.to_json().unwrap()).unwrap();
        let u = v["clusters1"][0][0].as_u64().unwrap() as usize;
        let cur = v["z"][u].as_u64().unwrap();
        v["z"][u] = serde_json::json!(1 - cur);
        assert!(EoeDesign::from_json(&v.to_string()).is_err());
    }
}
