//! The end-to-end query pipeline.

use alloc::vec::Vec;

use crate::graph::{collapse_end_components, prob0_max, prob0_min};
use crate::model::{make_absorbing, Direction, Partition, SparseModel};
use crate::set::StateSet;
use crate::solvers::{
    ii_solve_traced, svi_solve_traced, vi_solve_traced, Method, Objective, Observer, SolveError, SolveResult,
    SolverConfig,
};
use crate::variants::topological_solve_traced;

/// A model and partition ready for the iteration engines.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedQuery {
    /// The model with absorbing goal states, collapsed for maximal
    /// reachability probabilities.
    pub model: SparseModel,
    pub partition: Partition,
    /// State of `model` for every state of the input model.
    pub state_map: Vec<usize>,
}

/// Makes the goal absorbing and computes the partition.
///
/// Maximal probabilities use `S₀ = prob0_max` and collapse the end
/// components among the undetermined states. Minimal probabilities use
/// `S₀ = prob0_min` without collapsing; the engines reject the query if the
/// model is not contracting. Rewards use `S₀ = ∅`.
pub fn prepare(model: &SparseModel, goal: &StateSet, config: &SolverConfig) -> Result<PreparedQuery, SolveError> {
    let absorbing = make_absorbing(model, goal);
    let identity = || (0..model.num_states()).collect();
    match (config.objective, config.direction) {
        (Objective::Probability, Direction::Maximize) => {
            let s0 = prob0_max(&absorbing, goal);
            let partition = Partition::new(&absorbing, s0, goal.clone())?;
            let q = collapse_end_components(&absorbing, &partition)?;
            Ok(PreparedQuery {
                model: q.model,
                partition: q.partition,
                state_map: q.state_map,
            })
        }
        (Objective::Probability, Direction::Minimize) => {
            let s0 = prob0_min(&absorbing, goal);
            let partition = Partition::new(&absorbing, s0, goal.clone())?;
            Ok(PreparedQuery {
                model: absorbing,
                partition,
                state_map: identity(),
            })
        }
        (Objective::Reward, _) => {
            let partition = Partition::new(&absorbing, StateSet::new(model.num_states()), goal.clone())?;
            Ok(PreparedQuery {
                model: absorbing,
                partition,
                state_map: identity(),
            })
        }
    }
}

/// Answers the query for the initial state of `model`.
pub fn check(model: &SparseModel, goal: &StateSet, config: &SolverConfig) -> Result<SolveResult, SolveError> {
    check_traced(model, goal, config, None)
}

/// [`check`] reporting each iteration to `observer`.
pub fn check_traced(
    model: &SparseModel,
    goal: &StateSet,
    config: &SolverConfig,
    observer: Option<Observer<'_>>,
) -> Result<SolveResult, SolveError> {
    config.validate()?;
    let q = prepare(model, goal, config)?;
    solve_prepared(&q, config, observer)
}

/// Dispatches a prepared query to the configured engine.
pub fn solve_prepared(
    query: &PreparedQuery,
    config: &SolverConfig,
    observer: Option<Observer<'_>>,
) -> Result<SolveResult, SolveError> {
    let (m, p) = (&query.model, &query.partition);
    if config.topological {
        return topological_solve_traced(m, p, config, observer);
    }
    match config.method {
        Method::Svi => svi_solve_traced(m, p, config, observer),
        Method::Ii => ii_solve_traced(m, p, config, observer),
        Method::Vi => vi_solve_traced(m, p, config, observer),
    }
}
