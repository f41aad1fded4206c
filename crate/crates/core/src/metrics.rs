//! True SINR / spectral efficiency from the full channels, and fronthaul
//! overhead of the distributed and centralized schemes.
//!
//! Noise is normalized to unit power, in the same scale as `rho_max`.

use serde::{Deserialize, Serialize};

use crate::linalg::C64;
use crate::netmodel::ChannelRealization;
use crate::precoding::PrecodingSolution;
use crate::topology::ClusterPlan;

/// `sum_{l in M_j} h_{k,l}^H sqrt(rho_{j,l}) w_{j,l}`: the effective channel
/// from user `j`'s precoder to user `k`.
fn effective_gain(
    channels: &ChannelRealization,
    solution: &PrecodingSolution,
    k: usize,
    j: usize,
) -> C64 {
    let p = &solution.users[j];
    p.aps
        .iter()
        .zip(p.directions.iter().zip(&p.powers))
        .map(|(&l, (w, &rho))| channels.h(k, l).dotc(w) * rho.sqrt())
        .sum()
}

/// Linear SINR of user `k`, residual interference included.
pub fn sinr(
    channels: &ChannelRealization,
    solution: &PrecodingSolution,
    plan: &ClusterPlan,
    k: usize,
) -> f64 {
    let signal = effective_gain(channels, solution, k, k).norm_sqr();
    let interference: f64 = (0..plan.num_users())
        .filter(|&j| j != k)
        .map(|j| effective_gain(channels, solution, k, j).norm_sqr())
        .sum();
    signal / (interference + 1.0)
}

/// Interference power at user `k` (without noise).
pub fn interference(
    channels: &ChannelRealization,
    solution: &PrecodingSolution,
    plan: &ClusterPlan,
    k: usize,
) -> f64 {
    (0..plan.num_users())
        .filter(|&j| j != k)
        .map(|j| effective_gain(channels, solution, k, j).norm_sqr())
        .sum()
}

pub fn all_sinrs(
    channels: &ChannelRealization,
    solution: &PrecodingSolution,
    plan: &ClusterPlan,
) -> Vec<f64> {
    (0..plan.num_users())
        .map(|k| sinr(channels, solution, plan, k))
        .collect()
}

pub fn spectral_efficiency(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

/// `sum_k log2(1 + SINR_k)`.
pub fn sum_se(sinrs: &[f64]) -> f64 {
    sinrs.iter().map(|&s| spectral_efficiency(s)).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeReport {
    pub scheme: String,
    pub trial: u64,
    pub sinr: Vec<f64>,
    pub se: Vec<f64>,
    pub sum_se: f64,
    pub ap_power: Vec<f64>,
    /// Largest `(power_l - rho_max) / rho_max`, floored at 0.
    pub max_power_violation: f64,
}

pub fn evaluate(
    channels: &ChannelRealization,
    solution: &PrecodingSolution,
    plan: &ClusterPlan,
    rho_max: f64,
    scheme: &str,
) -> SeReport {
    let sinr = all_sinrs(channels, solution, plan);
    let se: Vec<f64> = sinr.iter().map(|&s| spectral_efficiency(s)).collect();
    SeReport {
        scheme: scheme.to_string(),
        trial: channels.trial,
        sum_se: se.iter().sum(),
        sinr,
        se,
        ap_power: solution.ap_power(plan.num_aps()),
        max_power_violation: solution.max_power_violation(plan.num_aps(), rho_max),
    }
}

/// Parameters of the data-related fronthaul overhead model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadParams {
    /// Downlink channel uses per coherence interval.
    pub tau_d: f64,
    /// Bits per data symbol.
    pub bits_per_symbol: f64,
    /// Quantization bits per I and per Q sample.
    pub quant_bits: f64,
}

impl Default for OverheadParams {
    fn default() -> Self {
        Self {
            tau_d: 190.0,
            bits_per_symbol: 4.0,
            quant_bits: 8.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverheadReport {
    pub tau_d: f64,
    pub mean_served: f64,
    pub bits_per_symbol: f64,
    pub quant_bits: f64,
    pub antennas: usize,
    /// `tau_d * K_bar * B`: data symbols sent to one AP.
    pub distributed_bits: f64,
    /// `2 * tau_d * N * A`: quantized transmit samples sent to one AP.
    pub centralized_bits: f64,
    pub reduction: f64,
}

pub fn overhead_for(params: &OverheadParams, mean_served: f64, antennas: usize) -> OverheadReport {
    let distributed_bits = params.tau_d * mean_served * params.bits_per_symbol;
    let centralized_bits = 2.0 * params.tau_d * antennas as f64 * params.quant_bits;
    OverheadReport {
        tau_d: params.tau_d,
        mean_served,
        bits_per_symbol: params.bits_per_symbol,
        quant_bits: params.quant_bits,
        antennas,
        distributed_bits,
        centralized_bits,
        reduction: 1.0 - distributed_bits / centralized_bits,
    }
}

/// Overhead with `K_bar` taken from the plan's active APs.
pub fn overhead(params: &OverheadParams, plan: &ClusterPlan, antennas: usize) -> OverheadReport {
    overhead_for(params, plan.mean_served_per_active_ap(), antennas)
}
