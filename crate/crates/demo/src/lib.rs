//! Browser demo. Each exported function takes a JSON request and returns a
//! JSON response; the `run_*` functions behind them are plain Rust and are
//! tested natively.

use eoe_core::estimators::{compare_estimates, monte_carlo_expectation, CbrSampler, Direction, EoeSampler};
use eoe_core::harness::bidder_projection;
use eoe_core::interference::LinearInterferenceModel;
use eoe_core::partition::{
    planted_bipartite_graph, project_bidder_partition, random_balanced_partition, random_clustering,
    rldg_partition, weighted_cut_ratio, PlantedParams, RldgConfig,
};
use eoe_core::model::cluster_exposure;
use eoe_core::{rng, Clustering, Result};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Planted community graph shared by the bias and experiment demos.
#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct Communities {
    pub communities: usize,
    pub bidders_per_community: usize,
    pub keyphrases_per_community: usize,
    pub degree: usize,
    pub cross_probability: f64,
    pub seed: u64,
}

impl Default for Communities {
    fn default() -> Self {
        Self {
            communities: 10,
            bidders_per_community: 10,
            keyphrases_per_community: 5,
            degree: 4,
            cross_probability: 0.1,
            seed: 1,
        }
    }
}

impl Communities {
    fn params(&self) -> PlantedParams {
        PlantedParams {
            n_bidders: self.communities * self.bidders_per_community,
            n_keyphrases: self.communities * self.keyphrases_per_community,
            blocks: self.communities,
            degree: self.degree,
            cross_probability: self.cross_probability,
            ..PlantedParams::default()
        }
    }

    /// Linear model on the bidder graph, with the planted communities.
    fn model(&self, gamma: f64, noise_sd: f64) -> Result<(LinearInterferenceModel, Clustering)> {
        let planted = planted_bipartite_graph(&self.params(), self.seed)?;
        let graph = bidder_projection(&planted.graph)?;
        let truth = project_bidder_partition(&planted.truth(self.communities)?, &planted.graph)?;
        Ok((LinearInterferenceModel::homogeneous(graph, 0.0, 1.0, gamma, noise_sd)?, truth))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct BiasRequest {
    #[serde(flatten)]
    pub graph: Communities,
    pub gamma: f64,
}

impl Default for BiasRequest {
    fn default() -> Self {
        Self {
            graph: Communities::default(),
            gamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BiasRow {
    pub clustering: String,
    pub clusters: usize,
    pub theta: f64,
    pub expectation: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BiasResponse {
    pub tte: f64,
    pub rows: Vec<BiasRow>,
}

/// Closed-form estimator expectation for the planted communities, a random
/// clustering of the same size, and coarser random clusterings.
pub fn run_bias_explorer(req: &BiasRequest) -> Result<BiasResponse> {
    let (model, truth) = req.graph.model(req.gamma, 0.0)?;
    let n = model.n_units();
    let m = truth.n_clusters();
    let mut rng = rng::seeded(req.graph.seed);
    let mut candidates = vec![("communities".to_string(), truth)];
    for k in [m, (m / 2).max(2), 2] {
        candidates.push((format!("random k={k}"), random_clustering(n, k, &mut rng)?));
    }
    let tte = model.closed_form_tte();
    let rows = candidates
        .into_iter()
        .map(|(name, c)| {
            let expectation = model.linear_closed_form_expectation(&c)?;
            Ok(BiasRow {
                clustering: name,
                clusters: c.n_clusters(),
                theta: cluster_exposure(&c, model.graph())?.theta_mean,
                expectation,
                bias: expectation - tte,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BiasResponse { tte, rows })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct TrajectoryRequest {
    pub blocks: usize,
    pub k: usize,
    pub passes: usize,
    pub within_weight: f64,
    pub cross_weight: f64,
    pub cross_probability: f64,
    pub seed: u64,
}

impl Default for TrajectoryRequest {
    fn default() -> Self {
        let p = PlantedParams::default();
        Self {
            blocks: p.blocks,
            k: p.blocks,
            passes: 10,
            within_weight: p.within_weight,
            cross_weight: p.cross_weight,
            cross_probability: p.cross_probability,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryResponse {
    pub random_baseline: f64,
    pub cut_ratios: Vec<f64>,
}

/// Cut ratio after each restreaming pass on a planted bipartite graph.
pub fn run_rldg_trajectory(req: &TrajectoryRequest) -> Result<TrajectoryResponse> {
    let params = PlantedParams {
        blocks: req.blocks,
        within_weight: req.within_weight,
        cross_weight: req.cross_weight,
        cross_probability: req.cross_probability,
        ..PlantedParams::default()
    };
    let graph = planted_bipartite_graph(&params, req.seed)?.graph;
    let baseline = random_balanced_partition(&graph, req.k, &mut rng::seeded(req.seed))?;
    let mut cfg = RldgConfig::new(req.k).passes(req.passes);
    cfg.min_improvement = f64::NEG_INFINITY;
    let (_, report) = rldg_partition(&graph, &cfg)?;
    Ok(TrajectoryResponse {
        random_baseline: weighted_cut_ratio(&graph, &baseline)?,
        cut_ratios: report.history,
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct ExperimentRequest {
    #[serde(flatten)]
    pub graph: Communities,
    pub gamma: f64,
    pub noise_sd: f64,
    pub replications: usize,
}

impl Default for ExperimentRequest {
    fn default() -> Self {
        Self {
            graph: Communities::default(),
            gamma: 1.0,
            noise_sd: 0.5,
            replications: 300,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ArmEstimate {
    pub label: String,
    pub mean: f64,
    pub stderr: f64,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResponse {
    pub tte: f64,
    pub arms: Vec<ArmEstimate>,
    pub better: String,
    pub p_value: f64,
}

/// Communities against a random clustering, run directly and as an
/// experiment of experiments.
pub fn run_eoe_experiment(req: &ExperimentRequest) -> Result<ExperimentResponse> {
    let (model, truth) = req.graph.model(req.gamma, req.noise_sd)?;
    let random = random_clustering(model.n_units(), truth.n_clusters(), &mut rng::seeded(req.graph.seed))?;
    let seed = req.graph.seed;
    let d1 = monte_carlo_expectation(&CbrSampler::new(&truth).labeled("direct communities"), &model, req.replications, seed)?;
    let d2 = monte_carlo_expectation(&CbrSampler::new(&random).labeled("direct random"), &model, req.replications, seed + 1)?;
    let eoe = monte_carlo_expectation(
        &EoeSampler::new(&truth, &random).labeled("EoE communities", "EoE random"),
        &model,
        req.replications,
        seed + 2,
    )?;
    let (e1, e2) = (eoe.arm(0), eoe.arm(1));
    let verdict = compare_estimates(
        e1.mean,
        e1.stderr.powi(2),
        e2.mean,
        e2.stderr.powi(2),
        0.05,
        Direction::Increasing,
        0.0,
    )?;
    let arms = [d1.arm(0), d2.arm(0), e1, e2]
        .into_iter()
        .map(|a| ArmEstimate {
            label: a.label.clone(),
            mean: a.mean,
            stderr: a.stderr,
            samples: a.samples(),
        })
        .collect();
    Ok(ExperimentResponse {
        tte: model.closed_form_tte(),
        arms,
        better: format!("{:?}", verdict.better).to_lowercase(),
        p_value: verdict.p_value,
    })
}

fn call<Req, Resp>(json: &str, run: fn(&Req) -> Result<Resp>) -> std::result::Result<String, JsValue>
where
    Req: for<'de> Deserialize<'de>,
    Resp: Serialize,
{
    let req: Req = serde_json::from_str(json).map_err(|e| JsValue::from_str(&format!("bad request: {e}")))?;
    let resp = run(&req).map_err(|e| JsValue::from_str(&e.to_string()))?;
    serde_json::to_string(&resp).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen]
pub fn bias_explorer(request: &str) -> std::result::Result<String, JsValue> {
    call(request, run_bias_explorer)
}

#[wasm_bindgen]
pub fn rldg_trajectory(request: &str) -> std::result::Result<String, JsValue> {
    call(request, run_rldg_trajectory)
}

#[wasm_bindgen]
pub fn eoe_experiment(request: &str) -> std::result::Result<String, JsValue> {
    call(request, run_eoe_experiment)
}
