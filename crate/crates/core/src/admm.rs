//! Outer optimization drivers.
//!
//! Every round has the same skeleton: estimate the network averages of the
//! primal and dual stacks, prox the combined estimate to update each agent's
//! copy of the shared variable, solve the strongly convex local subproblem,
//! and ascend the dual. The drivers differ only in how the averages are
//! obtained:
//!
//! - **centralized**: exact averages, as if a coordinator node existed;
//! - **distributed**: a consensus inner loop whose length follows the
//!   logarithmic schedule;
//! - **naive**: a fixed (default one) averaging step per round — the variant
//!   that is not guaranteed to converge and exists for comparison runs.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::consensus::{mix_in_place, ConsensusError, ConsensusSchedule};
use crate::graph::WeightMatrix;
use crate::metrics::{self, MetricsRecord};
use crate::problem::{PreparedSubproblem, ProblemError, ProblemSpec};

#[derive(Debug, Error)]
pub enum AdmmError {
    #[error("penalty beta = {beta} must exceed the largest Lipschitz constant {l_max}")]
    PenaltyTooSmall { beta: f64, l_max: f64 },
    #[error("weight matrix has {weights} nodes but the problem has {agents} agents")]
    SizeMismatch { weights: usize, agents: usize },
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("initial state for agent {agent} has dimension {got}, expected {expected}")]
    InitShape { agent: usize, expected: usize, got: usize },
    #[error("non-finite value in agent {agent}'s state after round {round}")]
    Divergence { round: usize, agent: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
}

/// Per-agent state carried across rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    /// Local primal iterate `x_i`.
    pub x: DVector<f64>,
    /// Dual variable `λ_i`.
    pub dual: DVector<f64>,
    /// The agent's copy of the shared variable `x_{0,i}`.
    pub shared: DVector<f64>,
    /// Consensus estimate of the network mean of the primal stack.
    pub avg_x: DVector<f64>,
    /// Consensus estimate of the network mean of the dual stack.
    pub avg_dual: DVector<f64>,
}

impl AgentState {
    fn is_finite(&self) -> bool {
        [&self.x, &self.dual, &self.shared, &self.avg_x, &self.avg_dual]
            .iter()
            .all(|v| v.iter().all(|e| e.is_finite()))
    }
}

/// Execution mode of [`run`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Exact averaging each round (requires a coordinator in a real network).
    Centralized,
    /// Consensus inner loop with the logarithmic step schedule.
    Distributed,
    /// Fixed consensus steps per round (default 1), convergence not
    /// guaranteed.
    Naive,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "centralized" => Ok(Mode::Centralized),
            "distributed" => Ok(Mode::Distributed),
            "naive" => Ok(Mode::Naive),
            other => Err(format!(
                "unknown mode {other:?} (expected centralized, distributed, or naive)"
            )),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Centralized => "centralized",
            Mode::Distributed => "distributed",
            Mode::Naive => "naive",
        })
    }
}

/// Explicit starting point, overriding the default initialization.
#[derive(Debug, Clone)]
pub struct InitialState {
    pub x: Vec<DVector<f64>>,
    pub dual: Vec<DVector<f64>>,
    pub shared: Vec<DVector<f64>>,
}

/// Everything a run needs besides the problem and the graph.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Penalty β; must exceed the largest local Lipschitz constant.
    pub beta: f64,
    /// Stopping tolerance δ on all three residuals.
    pub delta: f64,
    pub max_rounds: usize,
    pub mode: Mode,
    /// Inner-loop schedule (used by [`Mode::Distributed`]).
    pub schedule: ConsensusSchedule,
    /// Recorded for provenance; the drivers themselves are deterministic.
    pub seed: u64,
    /// Stopping-check period: residuals are acted on every this many rounds,
    /// modeling the cost of a network-wide max-consensus.
    pub check_every: usize,
    /// Consensus steps per round in [`Mode::Naive`].
    pub naive_steps: usize,
    pub initial: Option<InitialState>,
}

impl RunConfig {
    pub fn new(
        beta: f64,
        delta: f64,
        max_rounds: usize,
        mode: Mode,
        schedule: ConsensusSchedule,
    ) -> Self {
        RunConfig {
            beta,
            delta,
            max_rounds,
            mode,
            schedule,
            seed: 0,
            check_every: 1,
            naive_steps: 1,
            initial: None,
        }
    }

    fn validate(&self, problem: &ProblemSpec, weights: &WeightMatrix) -> Result<(), AdmmError> {
        if self.beta <= problem.l_max() {
            return Err(AdmmError::PenaltyTooSmall {
                beta: self.beta,
                l_max: problem.l_max(),
            });
        }
        if weights.n() != problem.agents() {
            return Err(AdmmError::SizeMismatch {
                weights: weights.n(),
                agents: problem.agents(),
            });
        }
        if !(self.delta > 0.0) {
            return Err(AdmmError::InvalidConfig(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if self.max_rounds == 0 {
            return Err(AdmmError::InvalidConfig("max_rounds must be at least 1".into()));
        }
        if self.check_every == 0 {
            return Err(AdmmError::InvalidConfig("check_every must be at least 1".into()));
        }
        if self.naive_steps == 0 {
            return Err(AdmmError::InvalidConfig("naive_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// The three residuals of the stopping rule, mirroring the KKT system:
/// local stationarity, the subgradient match on the shared variable, and
/// consensus feasibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopResiduals {
    /// `max_i ‖∇f_i(x_i) + λ_i‖`
    pub gradient: f64,
    /// `max_i ‖s_{0,i} − n·λ̃_i‖` with `s_{0,i} = nβ(y_{0,i} − x_{0,i})`
    pub subgradient: f64,
    /// `max_i ‖x_i − x_{0,i}‖`
    pub feasibility: f64,
}

impl StopResiduals {
    pub fn max(&self) -> f64 {
        self.gradient.max(self.subgradient).max(self.feasibility)
    }

    pub fn all_below(&self, delta: f64) -> bool {
        self.max() < delta
    }
}

/// Result of one driver round.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub round: usize,
    /// Consensus steps spent this round (0 in centralized mode).
    pub consensus_steps: usize,
    pub residuals: StopResiduals,
    /// True when this round's residual check fired below δ.
    pub stopped: bool,
}

/// Default starting point: `x_i = 0`, `λ_i = −∇f_i(0)` (so local stationarity
/// holds exactly at round 0), `x_{0,i} = 0`; average estimates start at the
/// agents' own values. An explicit [`InitialState`] overrides all of it.
pub fn initialize(problem: &ProblemSpec, config: &RunConfig) -> Result<Vec<AgentState>, AdmmError> {
    let dim = problem.dim();
    let n = problem.agents();
    match &config.initial {
        None => {
            let zero = DVector::zeros(dim);
            Ok((0..n)
                .map(|i| {
                    let dual = -problem.local(i).gradient(&zero);
                    AgentState {
                        x: zero.clone(),
                        avg_x: zero.clone(),
                        avg_dual: dual.clone(),
                        dual,
                        shared: zero.clone(),
                    }
                })
                .collect())
        }
        Some(init) => {
            for (name, vectors) in [("x", &init.x), ("dual", &init.dual), ("shared", &init.shared)]
            {
                if vectors.len() != n {
                    return Err(AdmmError::InvalidConfig(format!(
                        "initial {name} has {} entries, expected {n}",
                        vectors.len()
                    )));
                }
                if let Some((agent, v)) =
                    vectors.iter().enumerate().find(|(_, v)| v.len() != dim)
                {
                    return Err(AdmmError::InitShape { agent, expected: dim, got: v.len() });
                }
            }
            Ok((0..n)
                .map(|i| AgentState {
                    x: init.x[i].clone(),
                    dual: init.dual[i].clone(),
                    shared: init.shared[i].clone(),
                    avg_x: init.x[i].clone(),
                    avg_dual: init.dual[i].clone(),
                })
                .collect())
        }
    }
}

/// Cached per-agent subproblem solvers for a fixed penalty.
pub struct LocalSolvers {
    beta: f64,
    prepared: Vec<PreparedSubproblem>,
}

impl LocalSolvers {
    pub fn new(problem: &ProblemSpec, beta: f64) -> Result<Self, AdmmError> {
        let prepared = problem
            .locals()
            .iter()
            .map(|local| PreparedSubproblem::new(local, beta))
            .collect::<Result<_, _>>()?;
        Ok(LocalSolvers { beta, prepared })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Shared tail of every round: per-agent prox of the combined average, local
/// subproblem, and dual ascent. `y_{0,i} = x̃_i + λ̃_i/β` is read from the
/// state's average estimates, which the caller has just refreshed.
fn finish_round(
    states: &mut [AgentState],
    problem: &ProblemSpec,
    solvers: &LocalSolvers,
    shared_prox: Option<&DVector<f64>>,
) -> Result<(), AdmmError> {
    let n = problem.agents() as f64;
    let beta = solvers.beta;
    let gamma = 1.0 / (n * beta);
    for (i, state) in states.iter_mut().enumerate() {
        state.shared = match shared_prox {
            Some(shared) => shared.clone(),
            None => {
                let y0 = &state.avg_x + &state.avg_dual / beta;
                problem.regularizer().prox(gamma, &y0)
            }
        };
        state.x = solvers.prepared[i].solve(problem.local(i), &state.dual, &state.shared)?;
        state.dual += beta * (&state.x - &state.shared);
    }
    Ok(())
}

/// One round with exact averaging: all agents receive the same shared-variable
/// update `prox((1/nβ)·g)(x̄ + λ̄/β)`.
///
/// The averages accumulate with the same coefficient-times-term ordering as
/// one uniform consensus step, so a distributed round with the uniform
/// averaging matrix reproduces this trajectory bit for bit.
pub fn centralized_round(
    states: &mut [AgentState],
    problem: &ProblemSpec,
    solvers: &LocalSolvers,
) -> Result<(), AdmmError> {
    let dim = problem.dim();
    let weight = 1.0 / states.len() as f64;
    let mut avg_x = DVector::<f64>::zeros(dim);
    let mut avg_dual = DVector::<f64>::zeros(dim);
    for state in states.iter() {
        for k in 0..dim {
            avg_x[k] += weight * state.x[k];
            avg_dual[k] += weight * state.dual[k];
        }
    }
    let y0 = &avg_x + &avg_dual / solvers.beta;
    let shared = problem
        .regularizer()
        .prox(1.0 / (states.len() as f64 * solvers.beta), &y0);
    for state in states.iter_mut() {
        state.avg_x = avg_x.clone();
        state.avg_dual = avg_dual.clone();
    }
    finish_round(states, problem, solvers, Some(&shared))
}

/// One distributed round: `t_r` consensus steps on the concatenated primal
/// and dual stacks (one joint pass; mixing is coordinatewise, so this equals
/// two independent passes), then the per-agent tail against each agent's own
/// estimates.
pub fn distributed_round(
    states: &mut [AgentState],
    problem: &ProblemSpec,
    solvers: &LocalSolvers,
    weights: &WeightMatrix,
    consensus_steps: usize,
) -> Result<(), AdmmError> {
    let n = states.len();
    let dim = problem.dim();
    let mut stacked = DMatrix::<f64>::zeros(n, 2 * dim);
    for (i, state) in states.iter().enumerate() {
        for k in 0..dim {
            stacked[(i, k)] = state.x[k];
            stacked[(i, dim + k)] = state.dual[k];
        }
    }
    mix_in_place(weights, &mut stacked, consensus_steps);
    for (i, state) in states.iter_mut().enumerate() {
        for k in 0..dim {
            state.avg_x[k] = stacked[(i, k)];
            state.avg_dual[k] = stacked[(i, dim + k)];
        }
    }
    finish_round(states, problem, solvers, None)
}

/// Stopping residuals of the current state. The subgradient of `g` at the
/// shared variable is recovered from the prox optimality residual
/// `s_{0,i} = nβ(y_{0,i} − x_{0,i})`, and `λ̃_i` is the estimate produced by
/// this round's consensus stage — no extra communication is spent.
pub fn compute_stop_residuals(
    states: &[AgentState],
    problem: &ProblemSpec,
    beta: f64,
) -> StopResiduals {
    let n = states.len() as f64;
    let mut gradient = 0.0f64;
    let mut subgradient = 0.0f64;
    let mut feasibility = 0.0f64;
    for (i, state) in states.iter().enumerate() {
        gradient = gradient.max((problem.local(i).gradient(&state.x) + &state.dual).norm());
        let y0 = &state.avg_x + &state.avg_dual / beta;
        let prox_subgradient = n * beta * (y0 - &state.shared);
        subgradient = subgradient.max((prox_subgradient - n * &state.avg_dual).norm());
        feasibility = feasibility.max((&state.x - &state.shared).norm());
    }
    StopResiduals { gradient, subgradient, feasibility }
}

/// Incremental driver exposing per-round control; [`run`] is the convenience
/// wrapper that drives it to completion.
pub struct Driver<'a> {
    problem: &'a ProblemSpec,
    config: &'a RunConfig,
    weights: &'a WeightMatrix,
    solvers: LocalSolvers,
    states: Vec<AgentState>,
    round: usize,
    cumulative_comm: u64,
    stopped: bool,
}

impl<'a> Driver<'a> {
    pub fn new(
        problem: &'a ProblemSpec,
        config: &'a RunConfig,
        weights: &'a WeightMatrix,
    ) -> Result<Self, AdmmError> {
        config.validate(problem, weights)?;
        let solvers = LocalSolvers::new(problem, config.beta)?;
        let states = initialize(problem, config)?;
        Ok(Driver {
            problem,
            config,
            weights,
            solvers,
            states,
            round: 0,
            cumulative_comm: 0,
            stopped: false,
        })
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    /// Rounds completed so far.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn stopped(&self) -> bool {
        self.stopped
    }

    pub fn cumulative_comm(&self) -> u64 {
        self.cumulative_comm
    }

    /// Executes one round and evaluates the stopping rule (acted on every
    /// `check_every` rounds).
    pub fn advance(&mut self) -> Result<RoundOutcome, AdmmError> {
        let round = self.round;
        let consensus_steps = match self.config.mode {
            Mode::Centralized => 0,
            Mode::Naive => self.config.naive_steps,
            Mode::Distributed => self.config.schedule.steps_for_round(round),
        };
        match self.config.mode {
            Mode::Centralized => {
                centralized_round(&mut self.states, self.problem, &self.solvers)?
            }
            Mode::Distributed | Mode::Naive => distributed_round(
                &mut self.states,
                self.problem,
                &self.solvers,
                self.weights,
                consensus_steps,
            )?,
        }
        if let Some(agent) = self.states.iter().position(|s| !s.is_finite()) {
            return Err(AdmmError::Divergence { round, agent });
        }
        self.round += 1;
        self.cumulative_comm += consensus_steps as u64;
        let residuals = compute_stop_residuals(&self.states, self.problem, self.config.beta);
        let check_now = self.round % self.config.check_every == 0;
        let stopped = check_now && residuals.all_below(self.config.delta);
        self.stopped = stopped;
        Ok(RoundOutcome { round, consensus_steps, residuals, stopped })
    }

    /// Metrics for the state the driver is currently in.
    pub fn evaluate_metrics(&self, outcome: &RoundOutcome) -> MetricsRecord {
        metrics::evaluate(
            outcome,
            self.cumulative_comm,
            &self.states,
            self.problem,
            self.config.beta,
        )
    }

    /// Drives rounds until the stopping rule fires or `max_rounds` is
    /// reached, recording metrics each round.
    pub fn run_to_completion(&mut self) -> Result<Vec<MetricsRecord>, AdmmError> {
        let mut records = Vec::new();
        while !self.stopped && self.round < self.config.max_rounds {
            let outcome = self.advance()?;
            records.push(self.evaluate_metrics(&outcome));
        }
        Ok(records)
    }
}

/// Runs a full trajectory and returns one metrics record per round.
pub fn run(
    problem: &ProblemSpec,
    config: &RunConfig,
    weights: &WeightMatrix,
) -> Result<Vec<MetricsRecord>, AdmmError> {
    Driver::new(problem, config, weights)?.run_to_completion()
}
