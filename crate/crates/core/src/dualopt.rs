//! Joint PZF precoding and per-AP power control by dual decomposition.
//!
//! Relaxing the per-AP power constraints with multipliers `lambda_l` splits the
//! problem into one subproblem per user cluster:
//!
//! ```text
//! min_c  sum_{l in M_k} lambda_l ||N_{k,l} c||^2 - ln(h_k^H N_k c)
//! ```
//!
//! whose minimizer is `c* = A u / sqrt(u^H A u)` with `u = N_k^H h_k` and
//! `A = (sum_l 2 lambda_l N_{k,l}^H N_{k,l})^{-1}`. The dual is maximized by
//! projected gradient ascent; the partial derivative for AP `l` is its power
//! usage minus the budget.
//!
//! The runners work with powers normalized by the per-AP budget, so the budget
//! is 1 and `lambda` is expressed as `rho_max * lambda`. In those units the
//! step size is dimensionless and `lambda = 1/2` is the single-user optimum.
//! At any optimum the normalized multipliers sum to `K / 2`.
//! Coefficients are scaled back by `sqrt(rho_max)` when the precoder is
//! assembled. The free functions ([`solve_subproblem`], [`dual_gradient`],
//! [`dual_value`]) work in whatever units they are given.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};
use crate::metrics;
use crate::netmodel::ChannelRealization;
use crate::precoding::{
    assemble_precoder, user_null_spaces, NullSpaceBasis, PrecodingSolution, UserPrecoder,
};
use crate::topology::ClusterPlan;

/// Lower clamp on `lambda` when forming `A_k`, keeping it invertible at `lambda = 0`.
pub const LAMBDA_FLOOR: f64 = 1e-8;

/// Own-channel energy left in the null space, relative to `||h_k||`, below
/// which a user is treated as degenerate.
pub const DEGENERATE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DualConfig {
    /// Step size of the projected gradient ascent, in normalized units.
    pub step_size: f64,
    /// Linear per-AP budget.
    pub rho_max: f64,
    /// Bytes per exchanged scalar.
    pub scalar_bytes: usize,
    /// Evaluate the true sum-SE at every iteration.
    pub track_se: bool,
    pub lambda_init: LambdaInit,
}

/// Starting multiplier, the same for every active AP (normalized units).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaInit {
    /// `1 / (2 rho_max)`: the optimum of a lone user on a lone AP.
    #[default]
    SingleUser,
    /// `K / (2 A)` over the `A` active APs. At any optimum the multipliers
    /// sum to `K / 2`, so this is the uniform vector on that level set.
    Balanced,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            rho_max: 10f64.powf(9.4),
            scalar_bytes: 4,
            track_se: true,
            lambda_init: LambdaInit::SingleUser,
        }
    }
}

impl DualConfig {
    /// Initial multiplier in normalized units for `num_users` users over
    /// `active_aps` active APs.
    pub fn initial_lambda(&self, num_users: usize, active_aps: usize) -> f64 {
        match self.lambda_init {
            LambdaInit::SingleUser => 0.5,
            LambdaInit::Balanced => num_users as f64 / (2.0 * active_aps.max(1) as f64),
        }
    }
}

/// Per-user data the cluster master needs: the null space of the shared CSI
/// and the projection of the own channel onto it.
#[derive(Clone, Debug)]
pub struct ClusterProblem {
    pub user: usize,
    pub serving: Vec<usize>,
    pub basis: NullSpaceBasis,
    /// `N_{k,j}^H N_{k,j}` for each AP of the cluster.
    pub gram_blocks: Vec<CMat>,
    /// `u = N_k^H h_k`.
    pub projected_channel: CVec,
    /// `||h_k||` over the cluster.
    pub own_norm: f64,
}

impl ClusterProblem {
    pub fn new(user: usize, serving: Vec<usize>, basis: NullSpaceBasis, own: &CVec) -> Self {
        let gram_blocks = (0..serving.len())
            .map(|j| {
                let b = basis.block(j);
                b.adjoint() * b
            })
            .collect();
        let projected_channel = basis.basis.adjoint() * own;
        Self {
            user,
            serving,
            basis,
            gram_blocks,
            projected_channel,
            own_norm: own.norm(),
        }
    }

    /// Null spaces and projections for every user of the plan.
    pub fn build_all(channels: &ChannelRealization, plan: &ClusterPlan) -> Result<Vec<Self>> {
        Ok(user_null_spaces(channels, plan)?
            .into_iter()
            .enumerate()
            .map(|(k, (agg, basis))| Self::new(k, plan.serving_sets[k].clone(), basis, &agg.own))
            .collect())
    }

    pub fn is_degenerate(&self) -> bool {
        self.projected_channel.norm() <= DEGENERATE_TOLERANCE * self.own_norm
            || self.projected_channel.is_empty()
    }

    /// `||N_{k,j} c||^2` for each AP of the cluster.
    pub fn segment_powers(&self, coeff: &CVec) -> Vec<f64> {
        self.gram_blocks
            .iter()
            .map(|g| coeff.dotc(&(g * coeff)).re)
            .collect()
    }

    /// `h_k^H N_k c`.
    pub fn gain(&self, coeff: &CVec) -> C64 {
        self.projected_channel.dotc(coeff)
    }
}

#[derive(Clone, Debug)]
pub struct SubproblemSolution {
    pub coeff: CVec,
    /// `h_k^H N_k c*`, real and positive for a regular user.
    pub gain: f64,
    /// `||N_{k,j} c*||^2` over the cluster's APs.
    pub segment_powers: Vec<f64>,
}

impl SubproblemSolution {
    fn zero(problem: &ClusterProblem) -> Self {
        Self {
            coeff: CVec::zeros(problem.basis.dim()),
            gain: 0.0,
            segment_powers: vec![0.0; problem.serving.len()],
        }
    }
}

/// Closed-form minimizer of the per-cluster subproblem. `lambda` holds one
/// multiplier per AP of the cluster, in cluster order.
pub fn solve_subproblem(problem: &ClusterProblem, lambda: &[f64]) -> Result<SubproblemSolution> {
    if lambda.len() != problem.serving.len() {
        return Err(Error::Dimension(format!(
            "{} multipliers for a cluster of {}",
            lambda.len(),
            problem.serving.len()
        )));
    }
    if problem.is_degenerate() {
        return Err(Error::DegenerateUser(problem.user));
    }
    let d = problem.basis.dim();
    let mut weighted = CMat::zeros(d, d);
    for (g, &l) in problem.gram_blocks.iter().zip(lambda) {
        weighted += g * C64::new(2.0 * l.max(LAMBDA_FLOOR), 0.0);
    }
    let chol = nalgebra::Cholesky::new(weighted)
        .ok_or_else(|| Error::NonFinite(format!("subproblem matrix of user {}", problem.user)))?;
    let x = chol.solve(&problem.projected_channel);
    let quad = problem.projected_channel.dotc(&x).re;
    if !(quad > 0.0) || !quad.is_finite() {
        return Err(Error::DegenerateUser(problem.user));
    }
    let root = quad.sqrt();
    let coeff = x.unscale(root);
    let segment_powers = problem.segment_powers(&coeff);
    Ok(SubproblemSolution {
        coeff,
        gain: root,
        segment_powers,
    })
}

/// `sum_j lambda_j ||N_{k,j} c||^2 - ln(Re h^H N c)`; `+inf` outside the domain.
pub fn subproblem_objective(problem: &ClusterProblem, lambda: &[f64], coeff: &CVec) -> f64 {
    let gain = problem.gain(coeff).re;
    if !(gain > 0.0) {
        return f64::INFINITY;
    }
    let quad: f64 = problem
        .segment_powers(coeff)
        .iter()
        .zip(lambda)
        .map(|(p, l)| p * l)
        .sum();
    quad - gain.ln()
}

/// Multipliers of the APs of `problem`'s cluster, picked from a per-AP vector.
pub fn cluster_lambda(problem: &ClusterProblem, lambda_by_ap: &[f64]) -> Vec<f64> {
    problem.serving.iter().map(|&l| lambda_by_ap[l]).collect()
}

/// Solves every subproblem; degenerate users get a zero solution.
pub fn solve_all(
    problems: &[ClusterProblem],
    lambda_by_ap: &[f64],
) -> Result<(Vec<SubproblemSolution>, Vec<usize>)> {
    let solve = |p: &ClusterProblem| match solve_subproblem(p, &cluster_lambda(p, lambda_by_ap)) {
        Ok(s) => Ok((s, false)),
        Err(Error::DegenerateUser(_)) => Ok((SubproblemSolution::zero(p), true)),
        Err(e) => Err(e),
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(SubproblemSolution, bool)>> = {
        use rayon::prelude::*;
        problems.par_iter().map(solve).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(SubproblemSolution, bool)>> = problems.iter().map(solve).collect();

    let mut solutions = Vec::with_capacity(problems.len());
    let mut degenerate = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        let (s, deg) = r?;
        if deg {
            degenerate.push(k);
        }
        solutions.push(s);
    }
    Ok((solutions, degenerate))
}

/// Power each AP would spend under the given subproblem solutions.
fn ap_usage(
    ap: usize,
    plan: &ClusterPlan,
    problems: &[ClusterProblem],
    solutions: &[SubproblemSolution],
) -> f64 {
    let mut used = 0.0;
    for &k in &plan.served_sets[ap] {
        let j = problems[k]
            .serving
            .iter()
            .position(|&l| l == ap)
            .expect("served set consistent with serving set");
        used += solutions[k].segment_powers[j];
    }
    used
}

/// `dg/dlambda_l = sum_{k in D_l} ||N_{k,l} c_k*||^2 - budget` for every active AP.
pub fn dual_gradient(
    problems: &[ClusterProblem],
    solutions: &[SubproblemSolution],
    plan: &ClusterPlan,
    budget: f64,
) -> Vec<f64> {
    plan.active_aps()
        .into_iter()
        .map(|l| ap_usage(l, plan, problems, solutions) - budget)
        .collect()
}

/// Dual function `g(lambda)`, with `lambda` given per AP (entries of inactive APs ignored).
pub fn dual_value(
    problems: &[ClusterProblem],
    plan: &ClusterPlan,
    lambda_by_ap: &[f64],
    budget: f64,
) -> Result<f64> {
    let mut value = 0.0;
    for p in problems {
        let lam = cluster_lambda(p, lambda_by_ap);
        let s = solve_subproblem(p, &lam)?;
        value += subproblem_objective(p, &lam, &s.coeff);
    }
    for l in plan.active_aps() {
        value -= lambda_by_ap[l] * budget;
    }
    Ok(value)
}

/// `lambda' = max(lambda + alpha * gradient, 0)` element-wise.
pub fn project_update(lambda: &[f64], alpha: f64, gradient: &[f64]) -> Vec<f64> {
    lambda
        .iter()
        .zip(gradient)
        .map(|(l, g)| (l + alpha * g).max(0.0))
        .collect()
}

/// Multipliers held by the CPU.
#[derive(Clone, Debug)]
pub struct DualState {
    pub active_aps: Vec<usize>,
    /// One multiplier per active AP, normalized units.
    pub lambda: Vec<f64>,
    pub iteration: usize,
    pub step_size: f64,
    /// Last gradient, normalized units.
    pub gradient: Vec<f64>,
    pub bytes_exchanged: usize,
}

impl DualState {
    pub fn new(plan: &ClusterPlan, config: &DualConfig) -> Self {
        let active_aps = plan.active_aps();
        let n = active_aps.len();
        Self {
            active_aps,
            lambda: vec![config.initial_lambda(plan.num_users(), n); n],
            iteration: 0,
            step_size: config.step_size,
            gradient: vec![0.0; n],
            bytes_exchanged: 0,
        }
    }

    /// Multipliers spread over all `num_aps` APs (zero for inactive ones).
    pub fn by_ap(&self, num_aps: usize) -> Vec<f64> {
        let mut full = vec![0.0; num_aps];
        for (&l, &v) in self.active_aps.iter().zip(&self.lambda) {
            full[l] = v;
        }
        full
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    /// Number of multiplier updates applied before this record.
    pub iteration: usize,
    /// Multipliers per active AP, normalized units.
    pub lambda: Vec<f64>,
    /// Gradient at these multipliers, normalized units.
    pub gradient: Vec<f64>,
    /// Power per active AP under the subproblem solutions, linear units.
    pub ap_power: Vec<f64>,
    /// `sum_k ln(h_k^H N_k c_k)` over non-degenerate users.
    pub approx_objective: f64,
    pub sum_se: Option<f64>,
    /// Scalars sent CPU -> APs since the previous record.
    pub scalars_down: usize,
    /// Scalars sent APs -> CPU since the previous record.
    pub scalars_up: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    pub fn lambda_trajectory(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.lambda.clone()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct DualOutcome {
    pub solution: PrecodingSolution,
    pub trace: IterationTrace,
    pub state: DualState,
    pub degenerate_users: Vec<usize>,
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn assemble_solution(
    problems: &[ClusterProblem],
    solutions: &[SubproblemSolution],
    rho_max: f64,
) -> PrecodingSolution {
    let scale = rho_max.sqrt();
    let users = problems
        .iter()
        .zip(solutions)
        .map(|(p, s)| {
            if s.gain > 0.0 {
                assemble_precoder(&p.basis, &s.coeff.scale(scale), &p.serving)
            } else {
                UserPrecoder::zero(&p.serving, p.basis.antennas)
            }
        })
        .collect();
    PrecodingSolution { users }
}

#[allow(clippy::too_many_arguments)]
fn record(
    iteration: usize,
    state: &DualState,
    gradient: &[f64],
    solutions: &[SubproblemSolution],
    problems: &[ClusterProblem],
    plan: &ClusterPlan,
    channels: &ChannelRealization,
    config: &DualConfig,
    messages: (usize, usize),
) -> IterationRecord {
    let half_log_rho = 0.5 * config.rho_max.ln();
    let approx_objective = solutions
        .iter()
        .filter(|s| s.gain > 0.0)
        .map(|s| s.gain.ln() + half_log_rho)
        .sum();
    let sum_se = config.track_se.then(|| {
        let sol = assemble_solution(problems, solutions, config.rho_max);
        metrics::sum_se(&metrics::all_sinrs(channels, &sol, plan))
    });
    IterationRecord {
        iteration,
        lambda: state.lambda.clone(),
        gradient: gradient.to_vec(),
        ap_power: gradient
            .iter()
            .map(|g| (g + 1.0) * config.rho_max)
            .collect(),
        approx_objective,
        sum_se,
        scalars_down: messages.0,
        scalars_up: messages.1,
    }
}

/// Scalar messages on the CPU/AP fronthaul.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FronthaulMessage {
    /// CPU -> AP: updated multiplier.
    Lambda { ap: usize, value: f64 },
    /// AP -> CPU: partial derivative of the dual.
    Gradient { ap: usize, value: f64 },
}

/// In-process fronthaul: a FIFO of scalar messages with running counters.
#[derive(Debug, Default)]
pub struct Fronthaul {
    queue: VecDeque<FronthaulMessage>,
    pub scalars_down: usize,
    pub scalars_up: usize,
}

impl Fronthaul {
    pub fn send(&mut self, msg: FronthaulMessage) {
        match msg {
            FronthaulMessage::Lambda { .. } => self.scalars_down += 1,
            FronthaulMessage::Gradient { .. } => self.scalars_up += 1,
        }
        self.queue.push_back(msg);
    }

    pub fn drain(&mut self) -> impl Iterator<Item = FronthaulMessage> + '_ {
        self.queue.drain(..)
    }

    pub fn total_scalars(&self) -> usize {
        self.scalars_down + self.scalars_up
    }
}

/// Local state of one AP.
#[derive(Clone, Debug)]
struct ApNode {
    lambda: f64,
    /// Power contributions reported by cluster masters, in user order.
    contributions: Vec<f64>,
}

/// Distributed run: the CPU only ever sees one multiplier and one gradient per
/// active AP and iteration. Each round the cluster masters solve their
/// subproblems from the multipliers of their APs, push the per-AP power
/// contributions to those APs, the APs report their gradient to the CPU, and
/// the CPU answers with projected multipliers. After `iterations` rounds the
/// masters assemble the precoders from the last multipliers received.
pub fn run_dual_decomposition(
    problems: &[ClusterProblem],
    plan: &ClusterPlan,
    channels: &ChannelRealization,
    config: &DualConfig,
    iterations: usize,
) -> Result<DualOutcome> {
    let num_aps = plan.num_aps();
    let mut state = DualState::new(plan, config);
    let mut aps: Vec<ApNode> = (0..num_aps)
        .map(|_| ApNode {
            lambda: 0.0,
            contributions: Vec::new(),
        })
        .collect();
    // The initial multiplier is a protocol constant, known without signaling.
    let lambda0 = config.initial_lambda(plan.num_users(), state.active_aps.len());
    for &l in &state.active_aps {
        aps[l].lambda = lambda0;
    }
    let mut fronthaul = Fronthaul::default();
    let mut trace = IterationTrace::default();
    let mut last_counts = (0, 0);

    loop {
        // Masters: gather multipliers of the cluster APs and solve.
        let lambda_by_ap: Vec<f64> = aps.iter().map(|a| a.lambda).collect();
        let (solutions, degenerate) = solve_all(problems, &lambda_by_ap)?;
        for ap in aps.iter_mut() {
            ap.contributions.clear();
        }
        for (p, s) in problems.iter().zip(&solutions) {
            for (&l, &pw) in p.serving.iter().zip(&s.segment_powers) {
                aps[l].contributions.push(pw);
            }
        }
        // APs: local partial derivatives.
        let gradient: Vec<f64> = state
            .active_aps
            .iter()
            .map(|&l| aps[l].contributions.iter().fold(0.0, |acc, p| acc + p) - 1.0)
            .collect();
        check_finite(&gradient, "dual gradient")?;
        state.gradient = gradient.clone();

        let counts = (fronthaul.scalars_down, fronthaul.scalars_up);
        trace.records.push(record(
            state.iteration,
            &state,
            &gradient,
            &solutions,
            problems,
            plan,
            channels,
            config,
            (counts.0 - last_counts.0, counts.1 - last_counts.1),
        ));
        last_counts = counts;

        if state.iteration == iterations {
            state.bytes_exchanged = fronthaul.total_scalars() * config.scalar_bytes;
            return Ok(DualOutcome {
                solution: assemble_solution(problems, &solutions, config.rho_max),
                trace,
                state,
                degenerate_users: degenerate,
            });
        }

        for (&l, &g) in state.active_aps.iter().zip(&gradient) {
            fronthaul.send(FronthaulMessage::Gradient { ap: l, value: g });
        }
        // CPU: collect gradients, project, broadcast.
        let index: Vec<Option<usize>> = {
            let mut idx = vec![None; num_aps];
            for (i, &l) in state.active_aps.iter().enumerate() {
                idx[l] = Some(i);
            }
            idx
        };
        let mut received = vec![0.0; state.active_aps.len()];
        for msg in fronthaul.drain().collect::<Vec<_>>() {
            if let FronthaulMessage::Gradient { ap, value } = msg {
                received[index[ap].expect("gradient from an active AP")] = value;
            }
        }
        state.lambda = project_update(&state.lambda, config.step_size, &received);
        state.iteration += 1;
        for (&l, &v) in state.active_aps.iter().zip(&state.lambda) {
            fronthaul.send(FronthaulMessage::Lambda { ap: l, value: v });
        }
        for msg in fronthaul.drain().collect::<Vec<_>>() {
            if let FronthaulMessage::Lambda { ap, value } = msg {
                aps[ap].lambda = value;
            }
        }
    }
}

/// Step-size rule of the reference run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// The configured step every iteration, exactly as in the distributed run.
    Fixed,
    /// Barzilai-Borwein steps (first step: the configured one) with a
    /// nonmonotone Armijo backtrack along the projection arc.
    #[default]
    Spectral,
}

/// Stopping rule of the reference run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopRule {
    /// Threshold on the infinity norm of the projected gradient (normalized units).
    pub tolerance: f64,
    pub max_iterations: usize,
    pub step: StepRule,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 2000,
            step: StepRule::Spectral,
        }
    }
}

impl StopRule {
    /// Exactly `iterations` fixed steps, no early exit.
    pub fn fixed(iterations: usize) -> Self {
        Self {
            tolerance: 0.0,
            max_iterations: iterations,
            step: StepRule::Fixed,
        }
    }
}

/// Gradient with components that push an already-zero multiplier further
/// below zero removed; zero exactly at a KKT point.
pub fn projected_gradient(lambda: &[f64], gradient: &[f64]) -> Vec<f64> {
    lambda
        .iter()
        .zip(gradient)
        .map(|(&l, &g)| if l <= 0.0 { g.max(0.0) } else { g })
        .collect()
}

/// `g(lambda)` from already-solved subproblems (normalized budget of 1).
fn dual_value_from(
    problems: &[ClusterProblem],
    solutions: &[SubproblemSolution],
    lambda_by_ap: &[f64],
    active_aps: &[usize],
) -> f64 {
    let mut value = 0.0;
    for (p, s) in problems.iter().zip(solutions) {
        if s.gain > 0.0 {
            value += subproblem_objective(p, &cluster_lambda(p, lambda_by_ap), &s.coeff);
        }
    }
    for &l in active_aps {
        value -= lambda_by_ap[l];
    }
    value
}

const ARMIJO_SIGMA: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
/// Window of past dual values the nonmonotone test compares against.
const NONMONOTONE_WINDOW: usize = 10;
/// Dual values closer than this (relative) are indistinguishable.
const ROUNDOFF: f64 = 64.0 * f64::EPSILON;
const MIN_SPECTRAL_STEP: f64 = 1e-10;
const MAX_SPECTRAL_STEP: f64 = 1e4;

fn spread(active_aps: &[usize], values: &[f64], num_aps: usize) -> Vec<f64> {
    let mut by_ap = vec![0.0; num_aps];
    for (&l, &v) in active_aps.iter().zip(values) {
        by_ap[l] = v;
    }
    by_ap
}

/// Centralized benchmark: projected gradient ascent on the full multiplier
/// vector, run until the stopping rule. With [`StepRule::Fixed`] the iterates
/// are those of [`run_dual_decomposition`].
pub fn run_centralized_reference(
    problems: &[ClusterProblem],
    plan: &ClusterPlan,
    channels: &ChannelRealization,
    config: &DualConfig,
    stop: StopRule,
) -> Result<DualOutcome> {
    let num_aps = plan.num_aps();
    let mut state = DualState::new(plan, config);
    let mut trace = IterationTrace::default();
    let (mut solutions, mut degenerate) = solve_all(problems, &state.by_ap(num_aps))?;
    let mut history: VecDeque<f64> = VecDeque::new();
    let mut previous: Option<(Vec<f64>, Vec<f64>)> = None;
    loop {
        let gradient = dual_gradient(problems, &solutions, plan, 1.0);
        check_finite(&gradient, "dual gradient")?;
        state.gradient = gradient.clone();
        trace.records.push(record(
            state.iteration,
            &state,
            &gradient,
            &solutions,
            problems,
            plan,
            channels,
            config,
            (0, 0),
        ));
        let residual = projected_gradient(&state.lambda, &gradient)
            .into_iter()
            .fold(0.0, |m, g| f64::max(m, g.abs()));
        let done = residual < stop.tolerance || state.iteration >= stop.max_iterations;
        if done {
            return Ok(DualOutcome {
                solution: assemble_solution(problems, &solutions, config.rho_max),
                trace,
                state,
                degenerate_users: degenerate,
            });
        }

        if stop.step == StepRule::Fixed {
            state.lambda = project_update(&state.lambda, config.step_size, &gradient);
            let (sol, deg) = solve_all(problems, &state.by_ap(num_aps))?;
            solutions = sol;
            degenerate = deg;
            state.iteration += 1;
            continue;
        }

        let current = dual_value_from(
            problems,
            &solutions,
            &state.by_ap(num_aps),
            &state.active_aps,
        );
        history.push_back(current);
        if history.len() > NONMONOTONE_WINDOW {
            history.pop_front();
        }
        let floor = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut step = match &previous {
            None => config.step_size,
            Some((lambda_prev, grad_prev)) => {
                let mut ss = 0.0;
                let mut sy = 0.0;
                for i in 0..state.lambda.len() {
                    let s = state.lambda[i] - lambda_prev[i];
                    let y = gradient[i] - grad_prev[i];
                    ss += s * s;
                    sy += s * y;
                }
                if sy < 0.0 {
                    (-ss / sy).clamp(MIN_SPECTRAL_STEP, MAX_SPECTRAL_STEP)
                } else {
                    MAX_SPECTRAL_STEP
                }
            }
        };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = project_update(&state.lambda, step, &gradient);
            let moved: f64 = candidate
                .iter()
                .zip(&state.lambda)
                .zip(&gradient)
                .map(|((n, o), g)| g * (n - o))
                .sum();
            let by_ap = spread(&state.active_aps, &candidate, num_aps);
            match solve_all(problems, &by_ap) {
                Ok((sol, deg)) => {
                    let value = dual_value_from(problems, &sol, &by_ap, &state.active_aps);
                    let slack = ROUNDOFF * (1.0 + floor.abs());
                    if value.is_finite() && value >= floor + ARMIJO_SIGMA * moved - slack {
                        accepted = Some((candidate, sol, deg));
                        break;
                    }
                }
                Err(Error::NonFinite(_)) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        let Some((lambda, sol, deg)) = accepted else {
            log::debug!("reference run stalled at iteration {}", state.iteration);
            return Ok(DualOutcome {
                solution: assemble_solution(problems, &solutions, config.rho_max),
                trace,
                state,
                degenerate_users: degenerate,
            });
        };
        previous = Some((std::mem::replace(&mut state.lambda, lambda), gradient));
        solutions = sol;
        degenerate = deg;
        state.iteration += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IterationMessages {
    pub scalars_down: usize,
    pub scalars_up: usize,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageTally {
    pub per_iteration: Vec<IterationMessages>,
    pub total_scalars: usize,
    pub total_bytes: usize,
}

/// Scalar and byte counts per iteration of a traced run.
pub fn account_messages(trace: &IterationTrace, scalar_bytes: usize) -> MessageTally {
    let per_iteration: Vec<IterationMessages> = trace
        .records
        .iter()
        .skip(1)
        .map(|r| IterationMessages {
            scalars_down: r.scalars_down,
            scalars_up: r.scalars_up,
            bytes: (r.scalars_down + r.scalars_up) * scalar_bytes,
        })
        .collect();
    let total_scalars = per_iteration
        .iter()
        .map(|m| m.scalars_down + m.scalars_up)
        .sum();
    MessageTally {
        total_bytes: total_scalars * scalar_bytes,
        per_iteration,
        total_scalars,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::trial_rng;
    use crate::precoding::null_space;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn cvec(n: usize, rng: &mut impl Rng) -> CVec {
        CVec::from_fn(n, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    }

    fn identity_problem(h: CVec) -> ClusterProblem {
        let n = h.len();
        let basis = null_space(&CMat::zeros(n, 0), n);
        ClusterProblem::new(0, vec![0], basis, &h)
    }

    #[test]
    fn identity_basis_unit_power() {
        let mut rng = trial_rng(1, 0);
        let h = cvec(3, &mut rng);
        let p = identity_problem(h.clone());
        let s = solve_subproblem(&p, &[0.5]).unwrap();
        assert!((&s.coeff - h.unscale(h.norm())).norm() < 1e-12);
        assert!((s.segment_powers[0] - 1.0).abs() < 1e-12);
        for lam in [0.1, 0.7, 3.0] {
            let s = solve_subproblem(&p, &[lam]).unwrap();
            assert!((s.coeff.norm_squared() - 1.0 / (2.0 * lam)).abs() < 1e-12);
        }
    }

    #[test]
    fn gain_is_real_positive_and_stationary() {
        let mut rng = trial_rng(2, 0);
        let h_int = CMat::from_fn(8, 3, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let basis = null_space(&h_int, 2);
        let own = cvec(8, &mut rng);
        let p = ClusterProblem::new(0, vec![0, 1, 2, 3], basis, &own);
        let lam = [0.3, 1.2, 0.05, 2.0];
        let s = solve_subproblem(&p, &lam).unwrap();
        let g = p.gain(&s.coeff);
        assert!(g.im.abs() < 1e-10 * g.norm());
        assert!((g.re - s.gain).abs() < 1e-10 * s.gain);
        // Wirtinger gradient: sum 2 lambda_j G_j c - u / conj(u^H c)... with u^H c real.
        let mut grad = CVec::zeros(p.basis.dim());
        for (gj, &l) in p.gram_blocks.iter().zip(&lam) {
            grad += (gj * &s.coeff) * C64::new(2.0 * l, 0.0);
        }
        grad -= p.projected_channel.unscale(g.re);
        assert!(grad.norm() < 1e-8 * (1.0 + s.coeff.norm()));
    }

    #[test]
    fn degenerate_user_detected() {
        let mut rng = trial_rng(3, 0);
        let h = cvec(4, &mut rng);
        let mut inter = CMat::zeros(4, 1);
        inter.set_column(0, &h);
        let basis = null_space(&inter, 4);
        let p = ClusterProblem::new(7, vec![0], basis, &h);
        assert!(matches!(
            solve_subproblem(&p, &[1.0]),
            Err(Error::DegenerateUser(7))
        ));
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_update(&[0.1], 0.05, &[-4.0]), vec![0.0]);
        assert_eq!(project_update(&[1.0], 0.05, &[0.0]), vec![1.0]);
        assert!((project_update(&[0.0], 0.05, &[2.0])[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn gradient_boundaries() {
        let mut rng = trial_rng(4, 0);
        let p = identity_problem(cvec(2, &mut rng));
        let plan = ClusterPlan {
            serving_sets: vec![vec![0]],
            csi_sets: vec![vec![0]],
            served_sets: vec![vec![0]],
            master_ap: vec![0],
        };
        let zero = SubproblemSolution::zero(&p);
        assert_eq!(
            dual_gradient(std::slice::from_ref(&p), &[zero], &plan, 10.0),
            vec![-10.0]
        );
        let s = solve_subproblem(&p, &[0.05]).unwrap();
        // ||c||^2 = 1 / (2 * 0.05) = 10.
        let g = dual_gradient(&[p], &[s], &plan, 10.0);
        assert!(g[0].abs() < 1e-12);
    }

    #[test]
    fn message_tally_closed_form() {
        let rec = |down, up| IterationRecord {
            iteration: 0,
            lambda: vec![],
            gradient: vec![],
            ap_power: vec![],
            approx_objective: 0.0,
            sum_se: None,
            scalars_down: down,
            scalars_up: up,
        };
        let mut trace = IterationTrace {
            records: vec![rec(0, 0)],
        };
        assert_eq!(account_messages(&trace, 4).total_scalars, 0);
        for _ in 0..3 {
            trace.records.push(rec(10, 10));
        }
        let t = account_messages(&trace, 4);
        assert_eq!(t.total_scalars, 60);
        assert_eq!(t.total_bytes, 240);
        for _ in 0..3 {
            trace.records.push(rec(10, 10));
        }
        assert_eq!(account_messages(&trace, 4).total_bytes, 480);
    }
}
