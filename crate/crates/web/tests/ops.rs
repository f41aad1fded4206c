use cellfree_web::{convergence_json, csi_sweep_json, layout_json};
use serde_json::Value;

const DESK: &str = r#"{"num_aps": 25, "num_users": 10, "cluster_size": 5, "csi_size": 4}"#;

#[test]
fn layout_has_one_cluster_per_user() {
    let v: Value = serde_json::from_str(&layout_json(DESK, 1, 0).unwrap()).unwrap();
    assert_eq!(v["aps"].as_array().unwrap().len(), 25);
    assert_eq!(v["users"].as_array().unwrap().len(), 10);
    let serving = v["serving"].as_array().unwrap();
    assert_eq!(serving.len(), 10);
    assert!(serving.iter().all(|m| m.as_array().unwrap().len() == 5));
    assert_eq!(v["area"], 500.0);
}

#[test]
fn convergence_trace_length() {
    let v: Value = serde_json::from_str(&convergence_json(DESK, 1, 0, 4).unwrap()).unwrap();
    assert_eq!(v["sum_se"].as_array().unwrap().len(), 5);
    assert_eq!(v["max_violation"].as_array().unwrap().len(), 5);
    assert!(v["reference_se"].as_f64().unwrap() > v["pinv_se"].as_f64().unwrap());
}

#[test]
fn sweep_reports_infeasible_values() {
    let cfg = r#"{"num_aps": 25, "num_users": 10, "cluster_size": 1}"#;
    let v: Value = serde_json::from_str(&csi_sweep_json(cfg, 1, 2, &[1, 4, 5]).unwrap()).unwrap();
    assert_eq!(v["points"].as_array().unwrap().len(), 2);
    assert_eq!(v["skipped"], serde_json::json!([5]));
}

#[test]
fn bad_config_is_an_error() {
    assert!(layout_json(r#"{"num_ap": 4}"#, 1, 0).is_err());
    assert!(layout_json(r#"{"num_aps": 10}"#, 1, 0).is_err());
    assert!(layout_json("", 1, 0).is_ok());
}
