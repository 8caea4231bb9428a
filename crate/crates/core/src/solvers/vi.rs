use alloc::boxed::Box;
use alloc::vec::Vec;

use super::bellman::optimal_value;
use super::{
    boundary_vector, iteration_order, require_contracting, shortcut, Objective, Observer, SolveError,
    SolveResult, SolverConfig, TraceRow,
};
use crate::model::{Direction, Partition, SparseModel};

/// Standard value iteration from below. Stops once two consecutive
/// iterates differ by less than `epsilon`, which says nothing about the
/// distance to the fixpoint.
pub struct ViRun<'m> {
    model: &'m SparseModel,
    states: Vec<usize>,
    objective: Objective,
    direction: Direction,
    gauss_seidel: bool,
    x: Vec<f64>,
    x_prev: Vec<f64>,
    delta: f64,
    k: u64,
}

impl<'m> ViRun<'m> {
    /// `x` holds the starting vector, including the boundary values of
    /// states outside `states`.
    pub fn new(
        model: &'m SparseModel,
        states: Vec<usize>,
        x: Vec<f64>,
        objective: Objective,
        direction: Direction,
        gauss_seidel: bool,
    ) -> Self {
        ViRun {
            model,
            states,
            objective,
            direction,
            gauss_seidel,
            x_prev: x.clone(),
            x,
            delta: f64::INFINITY,
            k: 0,
        }
    }

    pub fn step(&mut self) {
        self.k += 1;
        let mut delta: f64 = 0.0;
        if self.gauss_seidel {
            for &s in &self.states {
                let (v, _) = optimal_value(self.model, s, &self.x, self.objective, self.direction);
                delta = delta.max((v - self.x[s]).abs());
                self.x[s] = v;
            }
        } else {
            core::mem::swap(&mut self.x, &mut self.x_prev);
            for &s in &self.states {
                let (v, _) = optimal_value(self.model, s, &self.x_prev, self.objective, self.direction);
                delta = delta.max((v - self.x_prev[s]).abs());
                self.x[s] = v;
            }
        }
        self.delta = delta;
    }

    pub fn converged(&self, epsilon: f64) -> bool {
        self.delta < epsilon
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn iteration(&self) -> u64 {
        self.k
    }
}

/// Standard value iteration; the result is flagged unsound.
pub fn vi_solve(model: &SparseModel, partition: &Partition, config: &SolverConfig) -> Result<SolveResult, SolveError> {
    vi_solve_traced(model, partition, config, None)
}

pub fn vi_solve_traced(
    model: &SparseModel,
    partition: &Partition,
    config: &SolverConfig,
    mut observer: Option<Observer<'_>>,
) -> Result<SolveResult, SolveError> {
    config.validate()?;
    if let Some(res) = shortcut(model, partition, config) {
        return Ok(res);
    }
    require_contracting(model, partition, config.objective)?;
    let init = model.initial_state();
    let mut run = ViRun::new(
        model,
        iteration_order(model, partition, config.gauss_seidel),
        boundary_vector(model, partition, config.objective),
        config.objective,
        config.direction,
        config.gauss_seidel,
    );
    let finish = |run: &ViRun<'_>| {
        let v = run.x()[init];
        SolveResult {
            iterations: run.iteration(),
            ..SolveResult::exact(v, config)
        }
    };
    while !run.converged(config.epsilon) {
        if run.iteration() >= config.max_iterations {
            return Err(SolveError::IterationLimit(Box::new(finish(&run))));
        }
        run.step();
        if let Some(obs) = observer.as_mut() {
            let v = run.x()[init];
            obs(&TraceRow {
                iteration: run.iteration(),
                lower: v,
                upper: v,
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
    use crate::solvers::Method;

    #[test]
    fn leaky_mdp_stops_far_from_the_fixpoint() {
        let m = leaky_mdp();
        let p = Partition::new(&m, m.state_set(&[3]), m.state_set(&[4])).unwrap();
        let config = SolverConfig::new(Method::Vi, Direction::Maximize, Objective::Probability, 1e-6);
        let res = vi_solve(&m, &p, &config).unwrap();
        assert!(!res.sound);
        assert!((0.72..0.73).contains(&res.value), "{}", res.value);
        let res = vi_solve(&m, &p, &SolverConfig { epsilon: 1e-8, ..config }).unwrap();
        assert!((0.749..0.75).contains(&res.value), "{}", res.value);
    }

    #[test]
    fn fixpoint_start_takes_one_iteration() {
        let m = leaky_mc();
        let fix = alloc::vec![0.75, 0.75, 0.75, 0.0, 1.0];
        let mut run = ViRun::new(&m, alloc::vec![0, 1, 2], fix, Objective::Probability, Direction::Maximize, false);
        run.step();
        assert!(run.converged(1e-12));
        assert_eq!(run.iteration(), 1);
    }
}
