use alloc::boxed::Box;
use alloc::vec::Vec;

use super::bellman::optimal_value;
use super::{
    boundary_vector, iteration_order, require_contracting, shortcut, Objective, Observer, SolveError,
    SolveResult, SolverConfig, TraceRow,
};
use crate::model::{Direction, Partition, SparseModel};

/// Interval iteration: two value iteration runs, one from a lower and one
/// from an upper bound vector, under the same optimizing operator.
pub struct IiRun<'m> {
    model: &'m SparseModel,
    states: Vec<usize>,
    objective: Objective,
    direction: Direction,
    gauss_seidel: bool,
    lo: Vec<f64>,
    hi: Vec<f64>,
    scratch: Vec<f64>,
    k: u64,
}

impl<'m> IiRun<'m> {
    /// `lo` and `hi` are full-length starting vectors; entries outside
    /// `states` are kept fixed.
    pub fn new(
        model: &'m SparseModel,
        states: Vec<usize>,
        lo: Vec<f64>,
        hi: Vec<f64>,
        objective: Objective,
        direction: Direction,
        gauss_seidel: bool,
    ) -> Self {
        IiRun {
            model,
            states,
            objective,
            direction,
            gauss_seidel,
            scratch: lo.clone(),
            lo,
            hi,
            k: 0,
        }
    }

    fn sweep(&mut self, upper: bool) {
        let v = if upper { &mut self.hi } else { &mut self.lo };
        if self.gauss_seidel {
            for &s in &self.states {
                v[s] = optimal_value(self.model, s, v, self.objective, self.direction).0;
            }
        } else {
            self.scratch.copy_from_slice(v);
            for &s in &self.states {
                v[s] = optimal_value(self.model, s, &self.scratch, self.objective, self.direction).0;
            }
        }
    }

    pub fn step(&mut self) {
        self.k += 1;
        self.sweep(false);
        self.sweep(true);
    }

    /// Largest gap between the two vectors over the iterated states.
    pub fn width(&self) -> f64 {
        self.states
            .iter()
            .map(|&s| self.hi[s] - self.lo[s])
            .fold(0.0, f64::max)
    }

    pub fn converged(&self, epsilon: f64) -> bool {
        self.width() < 2.0 * epsilon
    }

    pub fn lower(&self) -> &[f64] {
        &self.lo
    }

    pub fn upper(&self) -> &[f64] {
        &self.hi
    }

    pub fn iteration(&self) -> u64 {
        self.k
    }
}

/// Starting interval of one state: user bounds if supplied, otherwise
/// `[0, 1]` for probabilities.
pub(crate) fn initial_interval(config: &SolverConfig, s: usize) -> Result<(f64, f64), SolveError> {
    let (dl, du) = if config.objective.is_reward() {
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        (0.0, 1.0)
    };
    let (mut l, mut u) = (config.lower.unwrap_or(dl), config.upper.unwrap_or(du));
    if let Some(b) = &config.state_bounds {
        l = l.max(b.lower[s]);
        u = u.min(b.upper[s]);
    }
    if !l.is_finite() || !u.is_finite() {
        return Err(SolveError::MissingRewardBounds);
    }
    Ok((l, u))
}

fn initial_vectors(
    model: &SparseModel,
    partition: &Partition,
    config: &SolverConfig,
    states: &[usize],
) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
    let mut lo = boundary_vector(model, partition, config.objective);
    let mut hi = lo.clone();
    for &s in states {
        (lo[s], hi[s]) = initial_interval(config, s)?;
    }
    Ok((lo, hi))
}

pub fn ii_solve(model: &SparseModel, partition: &Partition, config: &SolverConfig) -> Result<SolveResult, SolveError> {
    ii_solve_traced(model, partition, config, None)
}

pub fn ii_solve_traced(
    model: &SparseModel,
    partition: &Partition,
    config: &SolverConfig,
    mut observer: Option<Observer<'_>>,
) -> Result<SolveResult, SolveError> {
    config.validate()?;
    if let Some(res) = shortcut(model, partition, config) {
        return Ok(res);
    }
    let states = iteration_order(model, partition, config.gauss_seidel);
    let (lo, hi) = initial_vectors(model, partition, config, &states)?;
    require_contracting(model, partition, config.objective)?;
    let init = model.initial_state();
    let mut run = IiRun::new(model, states, lo, hi, config.objective, config.direction, config.gauss_seidel);
    let finish = |run: &IiRun<'_>| {
        let (l, u) = (run.lower()[init], run.upper()[init]);
        SolveResult {
            value: (l + u) / 2.0,
            lower: l,
            upper: u,
            iterations: run.iteration(),
            ..SolveResult::exact(0.0, config)
        }
    };
    while !run.converged(config.epsilon) {
        if run.iteration() >= config.max_iterations {
            return Err(SolveError::IterationLimit(Box::new(finish(&run))));
        }
        run.step();
        if let Some(obs) = observer.as_mut() {
            obs(&TraceRow {
                iteration: run.iteration(),
                lower: run.lower()[init],
                upper: run.upper()[init],
                decision: None,
                stay: None,
            });
        }
    }
    Ok(finish(&run))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::ModelBuilder;
    use crate::set::StateSet;
    use crate::solvers::Method;

    fn cfg(objective: Objective) -> SolverConfig {
        SolverConfig::new(Method::Ii, Direction::Maximize, objective, 1e-6)
    }

    #[test]
    fn leaky_chain() {
        let m = leaky_mc();
        let p = Partition::new(&m, m.state_set(&[3]), m.state_set(&[4])).unwrap();
        let res = ii_solve(&m, &p, &cfg(Objective::Probability)).unwrap();
        assert!((res.value - 0.75).abs() < 1e-6);
        assert!(res.upper - res.lower < 2e-6);
    }

    #[test]
    fn leaky_mdp_needs_many_iterations() {
        let m = leaky_mdp();
        let p = Partition::new(&m, m.state_set(&[3]), m.state_set(&[4])).unwrap();
        let res = ii_solve(&m, &p, &cfg(Objective::Probability)).unwrap();
        assert!((res.value - 0.75).abs() < 1e-6);
        assert!((240_000..=360_000).contains(&res.iterations), "{}", res.iterations);
    }

    #[test]
    fn rewards_need_bounds() {
        let mut b = ModelBuilder::new(2);
        b.choice_with_reward(0, &[(0, 0.5), (1, 0.5)], 1.0);
        b.choice(1, &[(1, 1.0)]);
        let m = b.build().unwrap();
        let p = Partition::new(&m, StateSet::new(2), m.state_set(&[1])).unwrap();
        assert_eq!(ii_solve(&m, &p, &cfg(Objective::Reward)), Err(SolveError::MissingRewardBounds));
        let res = ii_solve(&m, &p, &cfg(Objective::Reward).with_bounds(0.0, 10.0)).unwrap();
        assert!((res.value - 2.0).abs() < 1e-6);
    }
}
