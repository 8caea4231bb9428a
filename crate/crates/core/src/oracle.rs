//! Reference solutions for small models by direct linear algebra.
//!
//! Markov chains are solved by Gaussian elimination; MDPs by enumerating
//! every positional scheduler and solving the induced chain. Only the goal
//! set of the partition is used, so the oracle does not depend on the
//! qualitative precomputation it is meant to check.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::graph::check_contracting;
use crate::model::{Direction, Partition, SparseModel};
use crate::set::StateSet;
use crate::solvers::Objective;

pub const MAX_ORACLE_STATES: usize = 12;
pub const MAX_ORACLE_SCHEDULERS: usize = 4096;
/// Markov chains need no enumeration and may be larger.
pub const MAX_ORACLE_MC_STATES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("model too large for the oracle ({states} states, {schedulers} schedulers)")]
    TooLargeForOracle { states: usize, schedulers: usize },
    #[error("expected reward undefined: goal not reached almost surely under every scheduler")]
    RewardUndefined,
}

/// Optimal value of every state.
pub fn oracle_solve(
    model: &SparseModel,
    partition: &Partition,
    objective: Objective,
    direction: Direction,
) -> Result<Vec<f64>, OracleError> {
    let n = model.num_states();
    let goal = &partition.goal;
    if objective.is_reward() && !check_contracting(model, goal) {
        return Err(OracleError::RewardUndefined);
    }
    let free: Vec<usize> = (0..n).filter(|&s| model.num_choices_of(s) > 1).collect();
    let mut schedulers: usize = 1;
    for &s in &free {
        schedulers = schedulers.saturating_mul(model.num_choices_of(s));
    }
    let limit = if free.is_empty() { MAX_ORACLE_MC_STATES } else { MAX_ORACLE_STATES };
    if n > limit || schedulers > MAX_ORACLE_SCHEDULERS {
        return Err(OracleError::TooLargeForOracle { states: n, schedulers });
    }

    let mut choice = vec![0usize; n];
    let mut best: Option<Vec<f64>> = None;
    loop {
        let values = solve_induced(model, goal, objective, &choice);
        best = Some(match best {
            None => values,
            Some(b) => b.iter().zip(&values).map(|(&a, &v)| direction.opt(a, v)).collect(),
        });
        // next scheduler in mixed-radix order
        let mut i = 0;
        loop {
            if i == free.len() {
                return Ok(best.unwrap_or_default());
            }
            let s = free[i];
            choice[s] += 1;
            if choice[s] < model.num_choices_of(s) {
                break;
            }
            choice[s] = 0;
            i += 1;
        }
    }
}

/// Values of the chain induced by the local choices `choice`.
fn solve_induced(model: &SparseModel, goal: &StateSet, objective: Objective, choice: &[usize]) -> Vec<f64> {
    let n = model.num_states();
    let row = |s: usize| model.choice_index(s, choice[s]);

    // states that can reach the goal in the induced chain
    let mut reach = goal.clone();
    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..n {
            if !reach.contains(s) && model.targets(row(s)).iter().any(|&t| reach.contains(t)) {
                reach.insert(s);
                changed = true;
            }
        }
    }
    let unknowns: Vec<usize> = reach.difference(goal).iter().collect();
    let mut index = vec![usize::MAX; n];
    for (i, &s) in unknowns.iter().enumerate() {
        index[s] = i;
    }
    let m = unknowns.len();
    // (I - P) x = b over the unknowns
    let mut a = vec![vec![0.0; m + 1]; m];
    for (i, &s) in unknowns.iter().enumerate() {
        let c = row(s);
        a[i][i] += 1.0;
        if objective.is_reward() {
            a[i][m] += model.reward(c);
        }
        for (t, p) in model.entries(c) {
            if goal.contains(t) {
                if !objective.is_reward() {
                    a[i][m] += p;
                }
            } else if index[t] != usize::MAX {
                a[i][index[t]] -= p;
            }
        }
    }
    let sol = gauss(a);
    let mut out = vec![0.0; n];
    for s in goal.iter() {
        out[s] = if objective.is_reward() { 0.0 } else { 1.0 };
    }
    for (i, &s) in unknowns.iter().enumerate() {
        out[s] = sol[i];
    }
    out
}

/// Solves the augmented system `a` by elimination with partial pivoting.
fn gauss(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let m = a.len();
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        a.swap(col, pivot);
        let p = a[col][col];
        if p == 0.0 {
            continue;
        }
        for r in 0..m {
            if r != col && a[r][col] != 0.0 {
                let f = a[r][col] / p;
                for c in col..=m {
                    let v = a[col][c];
                    a[r][c] -= f * v;
                }
            }
        }
    }
    (0..m)
        .map(|i| if a[i][i] == 0.0 { 0.0 } else { a[i][m] / a[i][i] })
        .collect()
}
