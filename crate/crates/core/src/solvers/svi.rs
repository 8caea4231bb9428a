use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use super::bellman::{choice_scores, decision_from_scores, select_choice, update_global_bounds, ChoiceScore};
use super::{
    boundary_vector, iteration_order, require_contracting, shortcut, Objective, Observer, SolveError,
    SolveResult, SolverConfig, Termination, TraceRow,
};
use crate::model::{Direction, Partition, Scheduler, SparseModel};

/// Snapshot of one sound value iteration step.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationState {
    /// `x_k`: k-step goal probability (or k-step reward).
    pub x: Vec<f64>,
    /// `y_k`: probability of staying undetermined for k steps.
    pub y: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    /// `d_k`; stays at the direction's neutral element for MCs.
    pub decision: f64,
    pub k: u64,
    /// `σ_k`, meaningful on the iterated states.
    pub scheduler: Scheduler,
}

/// A sound value iteration run over a fixed set of iterated states.
///
/// States outside `states` keep the values they have in `boundary` (and
/// `y = 0`). With `gauss_seidel` the vectors are updated in place in the
/// order of `states`; otherwise the order is irrelevant.
pub struct SviRun<'m> {
    model: &'m SparseModel,
    states: Vec<usize>,
    objective: Objective,
    direction: Direction,
    gauss_seidel: bool,
    epsilon: f64,
    termination: Termination,
    x: Vec<f64>,
    y: Vec<f64>,
    x_prev: Vec<f64>,
    y_prev: Vec<f64>,
    lower: f64,
    upper: f64,
    prev_lower: f64,
    prev_upper: f64,
    decision: f64,
    k: u64,
    scheduler: Scheduler,
    has_choices: bool,
    buf: Vec<ChoiceScore>,
}

impl<'m> SviRun<'m> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &'m SparseModel,
        states: Vec<usize>,
        boundary: Vec<f64>,
        objective: Objective,
        direction: Direction,
        gauss_seidel: bool,
        epsilon: f64,
        termination: Termination,
        initial_bounds: (f64, f64),
    ) -> Self {
        let n = model.num_states();
        assert_eq!(boundary.len(), n, "boundary vector has wrong length");
        let mut y = vec![0.0; n];
        let mut x = boundary;
        for &s in &states {
            y[s] = 1.0;
            x[s] = 0.0;
        }
        let has_choices = states.iter().any(|&s| model.num_choices_of(s) > 1);
        SviRun {
            model,
            objective,
            direction,
            gauss_seidel,
            epsilon,
            termination,
            x_prev: x.clone(),
            y_prev: y.clone(),
            x,
            y,
            lower: initial_bounds.0,
            upper: initial_bounds.1,
            prev_lower: initial_bounds.0,
            prev_upper: initial_bounds.1,
            decision: direction.worst(),
            k: 0,
            scheduler: Scheduler::first_choice(model),
            has_choices,
            states,
            buf: Vec::new(),
        }
    }

    /// A run over the undetermined states of `partition`, configured from
    /// `config` and terminating at the initial state.
    pub fn for_partition(model: &'m SparseModel, partition: &Partition, config: &SolverConfig) -> Self {
        let states = iteration_order(model, partition, config.gauss_seidel);
        let bounds = config.scalar_bounds(&states);
        SviRun::new(
            model,
            states,
            boundary_vector(model, partition, config.objective),
            config.objective,
            config.direction,
            config.gauss_seidel,
            config.epsilon,
            Termination::State(model.initial_state()),
            bounds,
        )
    }

    /// Performs iteration `k + 1`.
    pub fn step(&mut self) {
        self.k += 1;
        self.prev_lower = self.lower;
        self.prev_upper = self.upper;
        let bound = match self.direction {
            Direction::Maximize => self.upper,
            Direction::Minimize => self.lower,
        };
        if self.gauss_seidel {
            for &s in &self.states {
                self.x_prev[s] = self.x[s];
                self.y_prev[s] = self.y[s];
            }
        } else {
            core::mem::swap(&mut self.x, &mut self.x_prev);
            core::mem::swap(&mut self.y, &mut self.y_prev);
        }
        let mut decision = self.decision;
        for &s in &self.states {
            let (xr, yr) = if self.gauss_seidel {
                (&self.x, &self.y)
            } else {
                (&self.x_prev, &self.y_prev)
            };
            choice_scores(self.model, s, xr, yr, self.objective, &mut self.buf);
            let alpha = if self.buf.len() > 1 {
                let a = select_choice(&self.buf, bound, self.direction);
                decision = self.direction.opt(decision, decision_from_scores(&self.buf, a, self.direction));
                a
            } else {
                0
            };
            let sc = self.buf[alpha];
            self.x[s] = sc.x;
            self.y[s] = sc.y;
            self.scheduler.set(s, alpha);
        }
        self.decision = decision;
        let (l, u) = update_global_bounds(
            &self.x,
            &self.y,
            &self.states,
            self.lower,
            self.upper,
            self.decision,
            self.direction,
        );
        self.lower = l;
        self.upper = u;
    }

    fn state_converged(&self, s: usize) -> bool {
        let y = self.y[s];
        y == 0.0 || (self.lower.is_finite() && self.upper.is_finite() && y * (self.upper - self.lower) < 2.0 * self.epsilon)
    }

    pub fn converged(&self) -> bool {
        if self.k == 0 {
            return false;
        }
        match self.termination {
            Termination::State(s) => self.state_converged(s),
            Termination::AllStates => self.states.iter().all(|&s| self.state_converged(s)),
        }
    }

    /// `(r, lo, hi)` at `s`. The interval is infinite on a side whose
    /// global bound is not yet known (unless `y[s] = 0`).
    pub fn value_at(&self, s: usize) -> (f64, f64, f64) {
        let (x, y) = (self.x[s], self.y[s]);
        if y == 0.0 {
            return (x, x, x);
        }
        let lo = x + y * self.lower;
        let hi = x + y * self.upper;
        let r = x + y * (self.lower + self.upper) / 2.0;
        (r, lo.min(hi), hi.max(lo))
    }

    pub fn iteration(&self) -> u64 {
        self.k
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// `x_{k−1}` and `y_{k−1}` on the iterated states (the vectors read by
    /// the last step when not sweeping in place).
    pub fn previous(&self) -> (&[f64], &[f64]) {
        (&self.x_prev, &self.y_prev)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Bounds before the last step.
    pub fn previous_bounds(&self) -> (f64, f64) {
        (self.prev_lower, self.prev_upper)
    }

    pub fn decision(&self) -> f64 {
        self.decision
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn has_choices(&self) -> bool {
        self.has_choices
    }

    pub fn snapshot(&self) -> IterationState {
        IterationState {
            x: self.x.clone(),
            y: self.y.clone(),
            lower: self.lower,
            upper: self.upper,
            decision: self.decision,
            k: self.k,
            scheduler: self.scheduler.clone(),
        }
    }

    pub(crate) fn trace_row(&self, s: Option<usize>) -> TraceRow {
        TraceRow {
            iteration: self.k,
            lower: self.lower,
            upper: self.upper,
            decision: self.has_choices.then_some(self.decision),
            stay: s.map(|s| self.y[s]),
        }
    }
}

/// Sound value iteration on the undetermined states of `partition`.
pub fn svi_solve(model: &SparseModel, partition: &Partition, config: &SolverConfig) -> Result<SolveResult, SolveError> {
    svi_solve_traced(model, partition, config, None)
}

/// [`svi_solve`] reporting every iteration to `observer`.
pub fn svi_solve_traced(
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
    let mut run = SviRun::for_partition(model, partition, config);
    let finish = |run: &SviRun<'_>| {
        let (value, lower, upper) = run.value_at(init);
        SolveResult {
            value,
            lower,
            upper,
            iterations: run.iteration(),
            ..SolveResult::exact(0.0, config)
        }
    };
    while !run.converged() {
        if run.iteration() >= config.max_iterations {
            return Err(SolveError::IterationLimit(Box::new(finish(&run))));
        }
        run.step();
        if let Some(obs) = observer.as_mut() {
            obs(&run.trace_row(Some(init)));
        }
    }
    Ok(finish(&run))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::ModelBuilder;
    use crate::solvers::Method;
    use crate::set::StateSet;

    fn cfg(direction: Direction, eps: f64) -> SolverConfig {
        SolverConfig::new(Method::Svi, direction, Objective::Probability, eps)
    }

    #[test]
    fn leaky_chain_converges_at_third_iteration() {
        let m = leaky_mc();
        let p = Partition::new(&m, m.state_set(&[3]), m.state_set(&[4])).unwrap();
        for eps in [1e-2, 1e-6, 1e-10] {
            let mut run = SviRun::for_partition(&m, &p, &cfg(Direction::Maximize, eps));
            for _ in 0..3 {
                assert!(!run.converged());
                run.step();
            }
            assert!((run.x()[0] - 0.00003).abs() < 1e-12);
            assert!((run.y()[0] - 0.99996).abs() < 1e-12);
            assert!((run.lower() - 0.75).abs() < 1e-12);
            assert!((run.upper() - 0.75).abs() < 1e-12);
            assert!(run.converged());
            let res = svi_solve(&m, &p, &cfg(Direction::Maximize, eps)).unwrap();
            assert_eq!(res.iterations, 3);
            assert!((res.value - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn decision_example_first_two_iterations() {
        let m = decision_mdp();
        let p = Partition::new(&m, m.state_set(&[5, 6]), m.state_set(&[3, 4])).unwrap();
        let mut run = SviRun::for_partition(&m, &p, &cfg(Direction::Maximize, 1e-6));
        run.step();
        assert_eq!(run.scheduler().choice_of(0), 0);
        assert!((run.decision() - 0.75).abs() < 1e-12);
        assert!(run.lower().abs() < 1e-12);
        assert!((run.upper() - 1.0).abs() < 1e-12);
        run.step();
        assert!((run.lower() - 0.1).abs() < 1e-12);
        assert!((run.upper() - 0.75).abs() < 1e-12);
        let res = svi_solve(&m, &p, &cfg(Direction::Maximize, 1e-6)).unwrap();
        assert!((res.value - 0.5).abs() < 1e-6);
        assert!(res.upper - res.lower < 2e-6);
    }

    #[test]
    fn leaky_mdp_reaches_three_quarters() {
        let m = leaky_mdp();
        let p = Partition::new(&m, m.state_set(&[3]), m.state_set(&[4])).unwrap();
        let res = svi_solve(&m, &p, &cfg(Direction::Maximize, 1e-6)).unwrap();
        assert!((res.value - 0.75).abs() < 1e-6);
        assert!(res.lower <= 0.75 + 1e-12 && 0.75 <= res.upper + 1e-12);
    }

    #[test]
    fn shortcuts() {
        let m = leaky_mc().with_initial_state(4).unwrap();
        let p = Partition::new(&m, m.state_set(&[3]), m.state_set(&[4])).unwrap();
        let res = svi_solve(&m, &p, &cfg(Direction::Maximize, 1e-6)).unwrap();
        assert_eq!((res.value, res.iterations), (1.0, 0));
        let m = m.with_initial_state(3).unwrap();
        assert_eq!(svi_solve(&m, &p, &cfg(Direction::Maximize, 1e-6)).unwrap().value, 0.0);
    }

    #[test]
    fn geometric_reward() {
        let mut b = ModelBuilder::new(2);
        b.choice_with_reward(0, &[(0, 0.5), (1, 0.5)], 1.0);
        b.choice(1, &[(1, 1.0)]);
        let m = b.build().unwrap();
        let p = Partition::new(&m, StateSet::new(2), m.state_set(&[1])).unwrap();
        let config = SolverConfig::new(Method::Svi, Direction::Maximize, Objective::Reward, 1e-9);
        let res = svi_solve(&m, &p, &config).unwrap();
        assert!((res.value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn non_contracting_is_rejected() {
        let mut b = ModelBuilder::new(2);
        b.choice(0, &[(0, 1.0)]);
        b.choice(0, &[(1, 1.0)]);
        b.choice(1, &[(1, 1.0)]);
        let m = b.build().unwrap();
        let p = Partition::new(&m, StateSet::new(2), m.state_set(&[1])).unwrap();
        assert_eq!(svi_solve(&m, &p, &cfg(Direction::Maximize, 1e-6)), Err(SolveError::NotContracting));
        let config = SolverConfig::new(Method::Svi, Direction::Maximize, Objective::Reward, 1e-6);
        assert_eq!(svi_solve(&m, &p, &config), Err(SolveError::RewardOnMec));
    }

    #[test]
    fn iteration_limit_returns_partial_interval() {
        let m = leaky_mdp();
        let p = Partition::new(&m, m.state_set(&[3]), m.state_set(&[4])).unwrap();
        let config = cfg(Direction::Maximize, 1e-12).with_max_iterations(1);
        match svi_solve(&m, &p, &config) {
            Err(SolveError::IterationLimit(partial)) => assert_eq!(partial.iterations, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
