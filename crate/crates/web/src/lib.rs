//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every operation takes an experiment configuration as a JSON object (any
//! subset of the TOML keys) and returns JSON.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use cellfree::dualopt::{
    run_centralized_reference, run_dual_decomposition, ClusterProblem, DualConfig,
};
use cellfree::harness::{sweep, trial_setup, ExperimentConfig, Scheme, SchemeList, SweepAxis};
use cellfree::metrics;
use cellfree::precoding::pinv_epa_solution;

fn parse(config: &str) -> Result<ExperimentConfig, String> {
    let text = if config.trim().is_empty() {
        "{}"
    } else {
        config
    };
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

#[derive(Serialize)]
struct Layout {
    area: f64,
    aps: Vec<[f64; 2]>,
    users: Vec<[f64; 2]>,
    serving: Vec<Vec<usize>>,
    csi: Vec<Vec<usize>>,
    master: Vec<usize>,
}

/// AP grid, user drop and cluster plan of one trial.
pub fn layout_json(config: &str, seed: u32, trial: u32) -> Result<String, String> {
    let cfg = ExperimentConfig {
        seed: seed.into(),
        ..parse(config)?
    };
    let (real, plan) = trial_setup(&cfg, trial.into()).map_err(|e| e.to_string())?;
    let out = Layout {
        area: real.geometry.area_side,
        aps: real.geometry.ap_positions,
        users: real.geometry.user_positions,
        serving: plan.serving_sets,
        csi: plan.csi_sets,
        master: plan.master_ap,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Convergence {
    sum_se: Vec<f64>,
    max_violation: Vec<f64>,
    reference_se: f64,
    reference_iterations: usize,
    pinv_se: f64,
    bytes: usize,
}

/// Per-iteration sum-SE and worst power excess of the distributed run on one trial.
pub fn convergence_json(
    config: &str,
    seed: u32,
    trial: u32,
    iterations: u32,
) -> Result<String, String> {
    let cfg = ExperimentConfig {
        seed: seed.into(),
        trace_iterations: true,
        ..parse(config)?
    };
    let err = |e: cellfree::Error| e.to_string();
    let (real, plan) = trial_setup(&cfg, trial.into()).map_err(err)?;
    let problems = ClusterProblem::build_all(&real.channels, &plan).map_err(err)?;
    let dual = cfg.dual();
    let rho = dual.rho_max;
    let run = run_dual_decomposition(&problems, &plan, &real.channels, &dual, iterations as usize)
        .map_err(err)?;
    let quiet = DualConfig {
        track_se: false,
        ..dual
    };
    let reference =
        run_centralized_reference(&problems, &plan, &real.channels, &quiet, cfg.stop_rule())
            .map_err(err)?;
    let pinv = pinv_epa_solution(&real.channels, &plan, rho).map_err(err)?;
    let se = |sol| metrics::sum_se(&metrics::all_sinrs(&real.channels, sol, &plan));
    let out = Convergence {
        sum_se: run
            .trace
            .records
            .iter()
            .map(|r| r.sum_se.unwrap_or(f64::NAN))
            .collect(),
        max_violation: run
            .trace
            .records
            .iter()
            .map(|r| r.gradient.iter().copied().fold(0.0, f64::max))
            .collect(),
        reference_se: se(&reference.solution),
        reference_iterations: reference.state.iteration,
        pinv_se: se(&pinv),
        bytes: run.state.bytes_exchanged,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SweepPoint {
    csi_size: usize,
    dual: f64,
    pinv: f64,
}

#[derive(Serialize)]
struct Sweep {
    points: Vec<SweepPoint>,
    skipped: Vec<usize>,
}

/// Mean sum-SE of pzf-dual and pinv-epa over CSI sharing set sizes.
pub fn csi_sweep_json(
    config: &str,
    seed: u32,
    trials: u32,
    values: &[u32],
) -> Result<String, String> {
    let cfg = ExperimentConfig {
        seed: seed.into(),
        trials: trials as usize,
        scheme: SchemeList(vec![Scheme::PzfDual, Scheme::PinvEpa]),
        ..parse(config)?
    };
    let values: Vec<usize> = values.iter().map(|&v| v as usize).collect();
    let result = sweep(&cfg, SweepAxis::CsiSize, &values).map_err(|e| e.to_string())?;
    let mean = |o: &cellfree::harness::ExperimentOutput, s| {
        o.summary(s).map_or(f64::NAN, |x| x.mean_sum_se)
    };
    let out = Sweep {
        points: result
            .points
            .iter()
            .map(|(v, o)| SweepPoint {
                csi_size: *v,
                dual: mean(o, Scheme::PzfDual),
                pinv: mean(o, Scheme::PinvEpa),
            })
            .collect(),
        skipped: result.skipped.iter().map(|(v, _)| *v).collect(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn layout(config: &str, seed: u32, trial: u32) -> Result<String, JsValue> {
    layout_json(config, seed, trial).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn convergence(
    config: &str,
    seed: u32,
    trial: u32,
    iterations: u32,
) -> Result<String, JsValue> {
    convergence_json(config, seed, trial, iterations).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = csiSweep)]
pub fn csi_sweep(
    config: &str,
    seed: u32,
    trials: u32,
    values: Vec<u32>,
) -> Result<String, JsValue> {
    csi_sweep_json(config, seed, trials, &values).map_err(|e| JsValue::from_str(&e))
}
