//! Sound value iteration for Markov chains and Markov decision processes.
//!
//! The crate computes reachability probabilities and expected reachability
//! rewards with certified error bounds. Besides sound value iteration (SVI)
//! it ships the two classic baselines, standard value iteration (VI, no
//! error certificate) and interval iteration (II), plus Gauss-Seidel and
//! topological (SCC-by-SCC) drivers for all three.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, timing and
//! the command line front end live in the `svi` companion crate.
//!
//! A typical query goes through [`check`], which makes the goal states
//! absorbing, runs the qualitative precomputation from [`graph`], collapses
//! end components where required and dispatches to the configured engine:
//!
//! ```
//! use svi_core::{check, Direction, Method, ModelBuilder, Objective, SolverConfig};
//!
//! let mut b = ModelBuilder::new(3);
//! b.choice(0, &[(0, 0.5), (1, 0.25), (2, 0.25)]);
//! b.choice(1, &[(1, 1.0)]);
//! b.choice(2, &[(2, 1.0)]);
//! let model = b.build().unwrap();
//! let goal = model.state_set(&[1]);
//!
//! let config = SolverConfig::new(Method::Svi, Direction::Maximize, Objective::Probability, 1e-6);
//! let res = check(&model, &goal, &config).unwrap();
//! assert!((res.value - 0.5).abs() < 1e-6);
//! ```

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod check;
pub mod graph;
pub mod model;
pub mod oracle;
pub mod set;
pub mod solvers;
pub mod variants;

pub use check::{check, check_traced, prepare, solve_prepared, PreparedQuery};
pub use graph::{
    check_contracting, collapse_end_components, mec_decompose, prob0_max, prob0_min, scc_order,
    MecDecomposition, QuotientMap, SccOrder,
};
pub use model::{
    induce_mc, make_absorbing, validate_model, Direction, ModelBuilder, ModelError, Partition,
    RawChoice, RawModel, Scheduler, SparseModel,
};
pub use oracle::{oracle_solve, OracleError};
pub use set::StateSet;
pub use solvers::{
    ii_solve, svi_solve, vi_solve, IterationState, Method, Objective, SolveError, SolveResult,
    SolverConfig, StateBounds, SviRun, Termination, TraceRow,
};
pub use variants::{gs_sweep, topological_solve, StateOrdering};
