//! Iteration engines: standard value iteration, interval iteration and
//! sound value iteration.
//!
//! All engines work on full-length state vectors. States outside the
//! iterated set keep fixed boundary values (1 on goal states for
//! probabilities, 0 elsewhere), which lets the topological driver reuse the
//! same engines on a single SCC by seeding the boundary with certified
//! bounds of already-solved states.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::graph::{check_contracting, GraphError};
use crate::model::{Direction, ModelError, Partition, SparseModel};
use crate::variants::StateOrdering;

mod bellman;
mod ii;
mod svi;
mod vi;

pub use bellman::{
    bellman_step_f, bellman_step_g, bellman_step_h, choice_scores, decision_from_scores,
    decision_value, find_action, select_choice, update_global_bounds, ChoiceScore,
};
pub use ii::{ii_solve, ii_solve_traced, IiRun};
pub(crate) use bellman::optimal_value;
pub(crate) use ii::initial_interval;
pub use svi::{svi_solve, svi_solve_traced, IterationState, SviRun};
pub use vi::{vi_solve, vi_solve_traced, ViRun};

/// Default cap on the number of iterations of one solve.
pub const DEFAULT_MAX_ITERATIONS: u64 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Standard value iteration (no error certificate).
    Vi,
    /// Interval iteration.
    Ii,
    /// Sound value iteration.
    Svi,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Vi => "vi",
            Method::Ii => "ii",
            Method::Svi => "svi",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    /// Reachability probability of the goal set.
    Probability,
    /// Expected reward accumulated until the goal set is reached.
    Reward,
}

impl Objective {
    #[inline]
    pub fn is_reward(self) -> bool {
        matches!(self, Objective::Reward)
    }
}

/// Per-state initial bounds, indexed by state of the solved model.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    pub direction: Direction,
    pub objective: Objective,
    /// Absolute precision.
    pub epsilon: f64,
    pub gauss_seidel: bool,
    pub topological: bool,
    /// Scalar bounds valid for every undetermined state.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub state_bounds: Option<StateBounds>,
    pub max_iterations: u64,
}

impl SolverConfig {
    pub fn new(method: Method, direction: Direction, objective: Objective, epsilon: f64) -> Self {
        SolverConfig {
            method,
            direction,
            objective,
            epsilon,
            gauss_seidel: false,
            topological: false,
            lower: None,
            upper: None,
            state_bounds: None,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    pub fn with_gauss_seidel(mut self, on: bool) -> Self {
        self.gauss_seidel = on;
        self
    }

    pub fn with_topological(mut self, on: bool) -> Self {
        self.topological = on;
        self
    }

    pub fn with_bounds(mut self, lower: f64, upper: f64) -> Self {
        self.lower = Some(lower);
        self.upper = Some(upper);
        self
    }

    pub fn with_max_iterations(mut self, n: u64) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(SolveError::InvalidConfig("epsilon must be positive and finite"));
        }
        if let (Some(l), Some(u)) = (self.lower, self.upper) {
            if !(l <= u) {
                return Err(SolveError::InvalidConfig("lower bound exceeds upper bound"));
            }
        }
        if let Some(b) = &self.state_bounds {
            if b.lower.iter().zip(&b.upper).any(|(l, u)| !(l <= u)) {
                return Err(SolveError::InvalidConfig("per-state lower bound exceeds upper bound"));
            }
        }
        Ok(())
    }

    /// Scalar initial bounds `(ℓ₀, u₀)` over `states`, infinite if unknown.
    pub(crate) fn scalar_bounds(&self, states: &[usize]) -> (f64, f64) {
        let mut lo = self.lower.unwrap_or(f64::NEG_INFINITY);
        let mut hi = self.upper.unwrap_or(f64::INFINITY);
        if let Some(b) = &self.state_bounds {
            let l = states.iter().map(|&s| b.lower[s]).fold(f64::INFINITY, f64::min);
            let u = states.iter().map(|&s| b.upper[s]).fold(f64::NEG_INFINITY, f64::max);
            if !states.is_empty() {
                lo = lo.max(l);
                hi = hi.min(u);
            }
        }
        (lo, hi)
    }
}

/// When a run is considered converged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Precision is only required at this state.
    State(usize),
    /// Precision is required at every iterated state.
    AllStates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// The reported value `r`.
    pub value: f64,
    /// Certified interval at the initial state (equal to `value` for VI).
    pub lower: f64,
    pub upper: f64,
    pub iterations: u64,
    /// Wall-clock time of the solve; left at 0 by this crate, filled in
    /// by timing front ends.
    pub time_ms: f64,
    pub method: Method,
    pub gauss_seidel: bool,
    pub topological: bool,
    /// `false` for standard value iteration.
    pub sound: bool,
}

impl SolveResult {
    pub(crate) fn exact(value: f64, config: &SolverConfig) -> Self {
        SolveResult {
            value,
            lower: value,
            upper: value,
            iterations: 0,
            time_ms: 0.0,
            method: config.method,
            gauss_seidel: config.gauss_seidel,
            topological: config.topological,
            sound: config.method != Method::Vi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("model is not contracting with respect to the goal and zero states")]
    NotContracting,
    #[error("reward query on a model with end components outside the goal")]
    RewardOnMec,
    #[error("iteration limit reached after {} iterations (current interval [{}, {}])", .0.iterations, .0.lower, .0.upper)]
    IterationLimit(Box<SolveResult>),
    #[error("interval iteration for rewards needs user-supplied bounds")]
    MissingRewardBounds,
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One line of per-iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: u64,
    pub lower: f64,
    pub upper: f64,
    /// Decision value (SVI on models with choices).
    pub decision: Option<f64>,
    /// Probability of staying undetermined at the initial state (SVI).
    pub stay: Option<f64>,
}

/// Per-iteration callback used by tracing front ends.
pub type Observer<'a> = &'a mut dyn FnMut(&TraceRow);

/// Initial value vector: 1 on goal states for probabilities, 0 elsewhere.
pub(crate) fn boundary_vector(model: &SparseModel, partition: &Partition, objective: Objective) -> Vec<f64> {
    let mut x = vec![0.0; model.num_states()];
    if !objective.is_reward() {
        for s in partition.goal.iter() {
            x[s] = 1.0;
        }
    }
    x
}

/// Returns the exact answer if the initial state is not undetermined.
pub(crate) fn shortcut(model: &SparseModel, partition: &Partition, config: &SolverConfig) -> Option<SolveResult> {
    let init = model.initial_state();
    if partition.goal.contains(init) {
        let v = if config.objective.is_reward() { 0.0 } else { 1.0 };
        Some(SolveResult::exact(v, config))
    } else if partition.s0.contains(init) {
        Some(SolveResult::exact(0.0, config))
    } else {
        None
    }
}

/// The engines need every scheduler to leave the undetermined states.
pub(crate) fn require_contracting(
    model: &SparseModel,
    partition: &Partition,
    objective: Objective,
) -> Result<(), SolveError> {
    if check_contracting(model, &partition.goal.union(&partition.s0)) {
        Ok(())
    } else if objective.is_reward() {
        Err(SolveError::RewardOnMec)
    } else {
        Err(SolveError::NotContracting)
    }
}

/// Undetermined states in processing order: ascending index, or the
/// default Gauss-Seidel ordering when sweeping in place.
pub(crate) fn iteration_order(model: &SparseModel, partition: &Partition, gauss_seidel: bool) -> Vec<usize> {
    if gauss_seidel {
        StateOrdering::reverse_topological(model).restrict(&partition.maybe)
    } else {
        partition.maybe.iter().collect()
    }
}
