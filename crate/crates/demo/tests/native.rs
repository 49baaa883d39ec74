use eoe_demo::{
    bias_explorer, run_bias_explorer, run_eoe_experiment, run_rldg_trajectory, BiasRequest, ExperimentRequest,
    TrajectoryRequest,
};

#[test]
fn communities_beat_random_clusterings() {
    let resp = run_bias_explorer(&BiasRequest::default()).unwrap();
    assert_eq!(resp.tte, 2.0);
    let communities = &resp.rows[0];
    assert!(communities.theta > 0.6);
    for other in &resp.rows[1..] {
        assert!(other.bias < communities.bias, "{other:?} vs {communities:?}");
        assert!(other.bias < 0.0);
    }
}

#[test]
fn trajectory_drops_below_random() {
    let resp = run_rldg_trajectory(&TrajectoryRequest::default()).unwrap();
    assert_eq!(resp.cut_ratios.len(), 10);
    assert!((resp.random_baseline - 0.5).abs() < 0.1);
    assert!(resp.cut_ratios.last().unwrap() < &0.2);
}

#[test]
fn experiment_prefers_communities() {
    let resp = run_eoe_experiment(&ExperimentRequest::default()).unwrap();
    assert_eq!(resp.arms.len(), 4);
    assert!(resp.arms.iter().all(|a| a.mean < resp.tte));
    assert!(resp.arms[0].mean > resp.arms[1].mean);
    assert!(resp.arms[2].mean > resp.arms[3].mean);
    assert_eq!(resp.better, "clustering1");
    assert_eq!(resp.arms[0].samples.len(), 300);
}

#[test]
fn json_entry_point_fills_defaults() {
    let out = bias_explorer(r#"{"gamma": -1.0, "communities": 4}"#).unwrap();
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);
    assert_eq!(v["tte"], 0.0);
}
