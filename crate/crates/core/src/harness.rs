//! Monte Carlo driver: configuration files, trials, sweeps, CSV and SVG output.
//!
//! Every scheme of an experiment sees the same channel realization for a given
//! trial index, and sweeps reuse the master seed at every point, so all
//! comparisons use common random numbers.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dualopt::{
    account_messages, run_centralized_reference, run_dual_decomposition, ClusterProblem,
    DualConfig, LambdaInit, StepRule, StopRule,
};
use crate::error::{Error, Result};
use crate::metrics::{self, OverheadParams, OverheadReport};
use crate::netmodel::{NetworkConfig, NetworkRealization};
use crate::precoding::pinv_epa_solution;
use crate::topology::{build_plan, check_feasible, ClusterPlan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    /// Distributed dual decomposition with a fixed iteration budget.
    PzfDual,
    /// Dual method run to convergence at the CPU.
    PzfCentralized,
    /// Pseudo-inverse directions with equal power allocation.
    PinvEpa,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::PzfDual, Scheme::PzfCentralized, Scheme::PinvEpa];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::PzfDual => "pzf-dual",
            Scheme::PzfCentralized => "pzf-centralized",
            Scheme::PinvEpa => "pinv-epa",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

/// Comma-separated list of schemes, e.g. `"pzf-dual,pinv-epa"`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SchemeList(pub Vec<Scheme>);

impl TryFrom<String> for SchemeList {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for SchemeList {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let list = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(Scheme::from_str)
            .collect::<Result<Vec<_>>>()?;
        if list.is_empty() {
            return Err(Error::Config("no scheme given".into()));
        }
        Ok(SchemeList(list))
    }
}

impl From<SchemeList> for String {
    fn from(s: SchemeList) -> String {
        s.0.iter().map(|x| x.as_str()).collect::<Vec<_>>().join(",")
    }
}

/// Flat key/value experiment description. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub num_aps: usize,
    pub antennas_per_ap: usize,
    pub num_users: usize,
    pub area_side: Option<f64>,
    pub ap_grid_spacing: f64,
    pub ap_grid_columns: Option<usize>,
    pub ap_height_delta: f64,
    pub shadow_std: f64,
    pub shadow_decorrelation: f64,
    pub asd_deg: f64,
    pub rho_max_db: f64,
    pub pathloss_intercept: f64,
    pub pathloss_exponent_coeff: f64,
    pub cluster_size: usize,
    pub csi_size: usize,
    pub scheme: SchemeList,
    /// Dual iterations of the distributed scheme.
    pub iterations: usize,
    pub trials: usize,
    pub seed: u64,
    pub output: PathBuf,
    pub tau_d: f64,
    pub quant_bits: f64,
    pub bits_per_symbol: f64,
    pub step_size: f64,
    pub scalar_bytes: usize,
    pub reference_tolerance: f64,
    pub reference_max_iterations: usize,
    pub reference_step: StepRule,
    pub lambda_init: LambdaInit,
    /// Emit one row per dual iteration instead of the final one only.
    pub trace_iterations: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let net = NetworkConfig::default();
        let overhead = OverheadParams::default();
        let stop = StopRule::default();
        Self {
            num_aps: net.num_aps,
            antennas_per_ap: net.antennas_per_ap,
            num_users: net.num_users,
            area_side: net.area_side,
            ap_grid_spacing: net.ap_grid_spacing,
            ap_grid_columns: net.ap_grid_columns,
            ap_height_delta: net.ap_height_delta,
            shadow_std: net.shadow_std,
            shadow_decorrelation: net.shadow_decorrelation,
            asd_deg: net.asd_deg,
            rho_max_db: net.rho_max_db,
            pathloss_intercept: net.pathloss_intercept,
            pathloss_exponent_coeff: net.pathloss_exponent_coeff,
            cluster_size: 5,
            csi_size: 4,
            scheme: SchemeList(vec![Scheme::PzfDual]),
            iterations: 2,
            trials: 100,
            seed: 1,
            output: PathBuf::from("results.csv"),
            tau_d: overhead.tau_d,
            quant_bits: overhead.quant_bits,
            bits_per_symbol: overhead.bits_per_symbol,
            step_size: 0.05,
            scalar_bytes: 4,
            reference_tolerance: stop.tolerance,
            reference_max_iterations: stop.max_iterations,
            reference_step: stop.step,
            lambda_init: LambdaInit::default(),
            trace_iterations: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn network(&self) -> NetworkConfig {
        NetworkConfig {
            num_aps: self.num_aps,
            antennas_per_ap: self.antennas_per_ap,
            num_users: self.num_users,
            area_side: self.area_side,
            ap_grid_spacing: self.ap_grid_spacing,
            ap_grid_columns: self.ap_grid_columns,
            ap_height_delta: self.ap_height_delta,
            shadow_std: self.shadow_std,
            shadow_decorrelation: self.shadow_decorrelation,
            asd_deg: self.asd_deg,
            rho_max_db: self.rho_max_db,
            pathloss_intercept: self.pathloss_intercept,
            pathloss_exponent_coeff: self.pathloss_exponent_coeff,
        }
    }

    pub fn dual(&self) -> DualConfig {
        DualConfig {
            step_size: self.step_size,
            rho_max: self.network().rho_max(),
            scalar_bytes: self.scalar_bytes,
            track_se: self.trace_iterations,
            lambda_init: self.lambda_init,
        }
    }

    pub fn stop_rule(&self) -> StopRule {
        StopRule {
            tolerance: self.reference_tolerance,
            max_iterations: self.reference_max_iterations,
            step: self.reference_step,
        }
    }

    pub fn overhead_params(&self) -> OverheadParams {
        OverheadParams {
            tau_d: self.tau_d,
            bits_per_symbol: self.bits_per_symbol,
            quant_bits: self.quant_bits,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.network().validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.cluster_size == 0 || self.cluster_size > self.num_aps {
            return Err(Error::Config(format!(
                "cluster_size {} must lie in 1..={}",
                self.cluster_size, self.num_aps
            )));
        }
        if self.csi_size == 0 || self.csi_size > self.num_users {
            return Err(Error::Config(format!(
                "csi_size {} must lie in 1..={}",
                self.csi_size, self.num_users
            )));
        }
        check_feasible(self.antennas_per_ap, self.cluster_size, self.csi_size)?;
        if !(self.step_size > 0.0) {
            return Err(Error::Config("step_size must be positive".into()));
        }
        if !(self.tau_d > 0.0) {
            return Err(Error::Config("tau_d must be positive".into()));
        }
        Ok(())
    }
}

/// One CSV line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub trial: u64,
    pub scheme: String,
    pub m_size: usize,
    pub c_size: usize,
    pub iter: usize,
    pub sum_se: f64,
    pub max_power_violation: f64,
    pub msg_bytes: usize,
}

/// Final result of one scheme on one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeOutcome {
    pub scheme: Scheme,
    pub sum_se: f64,
    pub max_power_violation: f64,
    pub msg_bytes: usize,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct TrialOutput {
    pub trial: u64,
    pub outcomes: Vec<SchemeOutcome>,
    pub rows: Vec<ResultRow>,
    pub mean_served: f64,
}

/// Draws the network of one trial and builds its cluster plan.
pub fn trial_setup(
    config: &ExperimentConfig,
    trial: u64,
) -> Result<(NetworkRealization, ClusterPlan)> {
    let net = config.network();
    let real = NetworkRealization::generate(&net, config.seed, trial)?;
    let plan = build_plan(
        &real.fading.beta,
        net.antennas_per_ap,
        config.cluster_size,
        config.csi_size,
    )?;
    Ok((real, plan))
}

pub fn run_trial(config: &ExperimentConfig, trial: u64) -> Result<TrialOutput> {
    let (real, plan) = trial_setup(config, trial)?;
    let channels = &real.channels;
    let rho_max = config.network().rho_max();
    let dual = config.dual();
    let row = |scheme: Scheme, iter: usize, sum_se: f64, viol: f64, bytes: usize| ResultRow {
        trial,
        scheme: scheme.to_string(),
        m_size: config.cluster_size,
        c_size: config.csi_size,
        iter,
        sum_se,
        max_power_violation: viol,
        msg_bytes: bytes,
    };

    let needs_problems = config.scheme.0.iter().any(|s| *s != Scheme::PinvEpa);
    let problems = if needs_problems {
        ClusterProblem::build_all(channels, &plan)?
    } else {
        Vec::new()
    };

    let mut outcomes = Vec::new();
    let mut rows = Vec::new();
    for &scheme in &config.scheme.0 {
        let outcome = match scheme {
            Scheme::PinvEpa => {
                let sol = pinv_epa_solution(channels, &plan, rho_max)?;
                let rep = metrics::evaluate(channels, &sol, &plan, rho_max, scheme.as_str());
                SchemeOutcome {
                    scheme,
                    sum_se: rep.sum_se,
                    max_power_violation: rep.max_power_violation,
                    msg_bytes: 0,
                    iterations: 0,
                }
            }
            Scheme::PzfDual => {
                let out =
                    run_dual_decomposition(&problems, &plan, channels, &dual, config.iterations)?;
                let rep =
                    metrics::evaluate(channels, &out.solution, &plan, rho_max, scheme.as_str());
                if config.trace_iterations {
                    let tally = account_messages(&out.trace, config.scalar_bytes);
                    let mut bytes = 0;
                    for (n, rec) in out.trace.records.iter().enumerate() {
                        if n > 0 {
                            bytes += tally.per_iteration[n - 1].bytes;
                        }
                        let viol = rec
                            .ap_power
                            .iter()
                            .map(|p| (p - rho_max) / rho_max)
                            .fold(0.0, f64::max);
                        // The last record is the returned solution; keep its exact SE.
                        let se = if n + 1 == out.trace.records.len() {
                            rep.sum_se
                        } else {
                            rec.sum_se.unwrap_or(f64::NAN)
                        };
                        rows.push(row(scheme, n, se, viol, bytes));
                    }
                }
                SchemeOutcome {
                    scheme,
                    sum_se: rep.sum_se,
                    max_power_violation: rep.max_power_violation,
                    msg_bytes: out.state.bytes_exchanged,
                    iterations: out.state.iteration,
                }
            }
            Scheme::PzfCentralized => {
                let quiet = DualConfig {
                    track_se: false,
                    ..dual.clone()
                };
                let out = run_centralized_reference(
                    &problems,
                    &plan,
                    channels,
                    &quiet,
                    config.stop_rule(),
                )?;
                let rep =
                    metrics::evaluate(channels, &out.solution, &plan, rho_max, scheme.as_str());
                SchemeOutcome {
                    scheme,
                    sum_se: rep.sum_se,
                    max_power_violation: rep.max_power_violation,
                    msg_bytes: 0,
                    iterations: out.state.iteration,
                }
            }
        };
        if !(config.trace_iterations && scheme == Scheme::PzfDual) {
            rows.push(row(
                scheme,
                outcome.iterations,
                outcome.sum_se,
                outcome.max_power_violation,
                outcome.msg_bytes,
            ));
        }
        outcomes.push(outcome);
    }
    Ok(TrialOutput {
        trial,
        outcomes,
        rows,
        mean_served: plan.mean_served_per_active_ap(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub trials: usize,
    pub mean_sum_se: f64,
    pub std_error: f64,
    pub mean_max_violation: f64,
    pub mean_msg_bytes: f64,
}

impl fmt::Display for SchemeSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<16} trials={:<5} sum-SE={:.4} ± {:.4} bit/s/Hz  max-violation={:.3e}  msg-bytes={:.1}",
            self.scheme.as_str(),
            self.trials,
            self.mean_sum_se,
            self.std_error,
            self.mean_max_violation,
            self.mean_msg_bytes
        )
    }
}

/// Mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub trials: Vec<TrialOutput>,
    pub summaries: Vec<SchemeSummary>,
    /// Trials dropped after a numerical failure.
    pub aborted: usize,
    pub overhead: OverheadReport,
}

impl ExperimentOutput {
    pub fn summary(&self, scheme: Scheme) -> Option<&SchemeSummary> {
        self.summaries.iter().find(|s| s.scheme == scheme)
    }

    /// Final sum-SE per completed trial for `scheme`, in trial order.
    pub fn sum_se(&self, scheme: Scheme) -> Vec<f64> {
        self.trials
            .iter()
            .flat_map(|t| {
                t.outcomes
                    .iter()
                    .filter(|o| o.scheme == scheme)
                    .map(|o| o.sum_se)
            })
            .collect()
    }
}

fn map_trials<T: Send>(trials: usize, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..trials as u64).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..trials as u64).map(f).collect()
    }
}

/// Runs all trials of `config`. Trials that fail numerically are logged and
/// excluded; configuration errors abort before any trial runs.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let results = map_trials(config.trials, |t| run_trial(config, t));
    let mut trials = Vec::new();
    let mut aborted = 0;
    for (t, r) in results.into_iter().enumerate() {
        match r {
            Ok(out) => trials.push(out),
            Err(e @ Error::Config(_)) => return Err(e),
            Err(e) => {
                log::warn!("trial {t} aborted: {e}");
                aborted += 1;
            }
        }
    }
    let rows: Vec<ResultRow> = trials.iter().flat_map(|t| t.rows.iter().cloned()).collect();
    let summaries = config
        .scheme
        .0
        .iter()
        .map(|&scheme| {
            let picked: Vec<&SchemeOutcome> = trials
                .iter()
                .flat_map(|t| t.outcomes.iter().filter(move |o| o.scheme == scheme))
                .collect();
            let se: Vec<f64> = picked.iter().map(|o| o.sum_se).collect();
            let (mean, stderr) = mean_and_stderr(&se);
            let n = picked.len().max(1) as f64;
            SchemeSummary {
                scheme,
                trials: picked.len(),
                mean_sum_se: mean,
                std_error: stderr,
                mean_max_violation: picked.iter().map(|o| o.max_power_violation).sum::<f64>() / n,
                mean_msg_bytes: picked.iter().map(|o| o.msg_bytes as f64).sum::<f64>() / n,
            }
        })
        .collect();
    let mean_served = if trials.is_empty() {
        0.0
    } else {
        trials.iter().map(|t| t.mean_served).sum::<f64>() / trials.len() as f64
    };
    Ok(ExperimentOutput {
        rows,
        trials,
        summaries,
        aborted,
        overhead: metrics::overhead_for(
            &config.overhead_params(),
            mean_served,
            config.antennas_per_ap,
        ),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    ClusterSize,
    CsiSize,
    Iterations,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cluster_size" => Ok(SweepAxis::ClusterSize),
            "csi_size" => Ok(SweepAxis::CsiSize),
            "iterations" => Ok(SweepAxis::Iterations),
            other => Err(Error::Config(format!(
                "unknown sweep axis '{other}' (cluster_size, csi_size, iterations)"
            ))),
        }
    }
}

impl SweepAxis {
    pub fn apply(self, config: &ExperimentConfig, value: usize) -> ExperimentConfig {
        let mut c = config.clone();
        match self {
            SweepAxis::ClusterSize => c.cluster_size = value,
            SweepAxis::CsiSize => c.csi_size = value,
            SweepAxis::Iterations => c.iterations = value,
        }
        c
    }
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub points: Vec<(usize, ExperimentOutput)>,
    /// Values rejected as infeasible, with the reason.
    pub skipped: Vec<(usize, String)>,
}

impl SweepOutput {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.points
            .iter()
            .flat_map(|(_, o)| o.rows.iter().cloned())
            .collect()
    }

    /// `(value, mean sum-SE)` for one scheme.
    pub fn curve(&self, scheme: Scheme) -> Vec<(usize, f64)> {
        self.points
            .iter()
            .filter_map(|(v, o)| o.summary(scheme).map(|s| (*v, s.mean_sum_se)))
            .collect()
    }
}

/// One experiment per value, all with the same master seed.
pub fn sweep(config: &ExperimentConfig, axis: SweepAxis, values: &[usize]) -> Result<SweepOutput> {
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for &v in values {
        let point = axis.apply(config, v);
        match point.validate() {
            Ok(()) => points.push((v, run_experiment(&point)?)),
            Err(e) => {
                log::warn!("sweep value {v} skipped: {e}");
                skipped.push((v, e.to_string()));
            }
        }
    }
    Ok(SweepOutput { points, skipped })
}

pub fn write_rows<W: Write>(writer: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record([
            "trial",
            "scheme",
            "m_size",
            "c_size",
            "iter",
            "sum_se",
            "max_power_violation",
            "msg_bytes",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows_to_path(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_rows(std::fs::File::create(path)?, rows)
}

pub fn read_rows<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| Ok(row?)).collect()
}

/// Data series of a plot: scheme -> sorted `(x, mean y)` points.
pub type Series = BTreeMap<String, Vec<(f64, f64)>>;

/// Picks the x axis of a result file and averages sum-SE per scheme and x.
///
/// The x axis is the first of `c_size`, `m_size` that takes more than one
/// value. Otherwise it is `iter`: for traced runs every iteration row is
/// used, for sweeps over `iterations` only the final row of each run.
pub fn plot_series(rows: &[ResultRow]) -> (String, Series) {
    let distinct = |f: &dyn Fn(&ResultRow) -> usize| {
        let mut v: Vec<usize> = rows.iter().map(f).collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    // Traced runs are contiguous with ascending `iter`; the last row of each run is its final one.
    let same_run = |a: &ResultRow, b: &ResultRow| {
        a.scheme == b.scheme
            && a.m_size == b.m_size
            && a.c_size == b.c_size
            && a.trial == b.trial
            && b.iter > a.iter
    };
    let final_rows: Vec<&ResultRow> = rows
        .iter()
        .enumerate()
        .filter(|(i, r)| rows.get(i + 1).is_none_or(|next| !same_run(r, next)))
        .map(|(_, r)| r)
        .collect();

    let (label, picked, x): (&str, Vec<&ResultRow>, fn(&ResultRow) -> usize) =
        if distinct(&|r| r.c_size) > 1 {
            ("CSI sharing set size |C|", final_rows, |r| r.c_size)
        } else if distinct(&|r| r.m_size) > 1 {
            ("cluster size |M|", final_rows, |r| r.m_size)
        } else {
            let traced = rows.len() > final_rows.len();
            let source = if traced {
                rows.iter().collect()
            } else {
                final_rows
            };
            ("dual iterations", source, |r| r.iter)
        };
    let mut acc: BTreeMap<String, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for r in picked {
        if !r.sum_se.is_finite() {
            continue;
        }
        let e = acc
            .entry(r.scheme.clone())
            .or_default()
            .entry(x(r))
            .or_insert((0.0, 0));
        e.0 += r.sum_se;
        e.1 += 1;
    }
    let series = acc
        .into_iter()
        .map(|(s, pts)| {
            (
                s,
                pts.into_iter()
                    .map(|(x, (sum, n))| (x as f64, sum / n as f64))
                    .collect(),
            )
        })
        .collect();
    (label.to_string(), series)
}

/// Renders mean sum-SE curves as a standalone SVG line chart.
pub fn render_svg(x_label: &str, series: &Series) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const PAD_L: f64 = 70.0;
    const PAD_R: f64 = 150.0;
    const PAD_T: f64 = 30.0;
    const PAD_B: f64 = 55.0;
    const COLORS: [&str; 6] = [
        "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
    ];

    let pts: Vec<(f64, f64)> = series.values().flatten().copied().collect();
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if pts.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let margin = ((y1 - y0) * 0.08).max(1e-3);
    y0 -= margin;
    y1 += margin;
    let sx = |x: f64| PAD_L + (x - x0) / (x1 - x0) * (W - PAD_L - PAD_R);
    let sy = |y: f64| H - PAD_B - (y - y0) / (y1 - y0) * (H - PAD_T - PAD_B);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"{PAD_L}\" y=\"{PAD_T}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n",
        W - PAD_L - PAD_R,
        H - PAD_T - PAD_B
    ));
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        svg.push_str(&format!(
            "<line x1=\"{PAD_L}\" x2=\"{0}\" y1=\"{1:.1}\" y2=\"{1:.1}\" stroke=\"#ddd\"/><text x=\"{2}\" y=\"{3:.1}\" text-anchor=\"end\">{4:.2}</text>\n",
            W - PAD_R,
            sy(y),
            PAD_L - 6.0,
            sy(y) + 4.0,
            y
        ));
    }
    let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for x in xs {
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            sx(x),
            H - PAD_B + 16.0,
            x
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        (PAD_L + W - PAD_R) / 2.0,
        H - 12.0,
        x_label
    ));
    svg.push_str(&format!(
        "<text transform=\"translate(18 {:.1}) rotate(-90)\" text-anchor=\"middle\">mean sum-SE (bit/s/Hz)</text>\n",
        (PAD_T + H - PAD_B) / 2.0
    ));
    for (i, (name, points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        for &(x, y) in points {
            svg.push_str(&format!(
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>\n",
                sx(x),
                sy(y)
            ));
        }
        let ly = PAD_T + 14.0 + 18.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{0}\" x2=\"{1}\" y1=\"{ly}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{2}\" y=\"{3}\">{name}</text>\n",
            W - PAD_R + 10.0,
            W - PAD_R + 30.0,
            W - PAD_R + 36.0,
            ly + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
