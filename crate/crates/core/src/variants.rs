//! Gauss-Seidel and topological drivers.
//!
//! Gauss-Seidel sweeps update the value vectors in place along a state
//! ordering `≺`, so a state reads the fresh values of every state before it
//! in the ordering. Topological solving processes the SCCs of the
//! undetermined states from the bottom up; each nontrivial SCC is handled by
//! a pair of runs whose exits are seeded with the certified lower and upper
//! values of SCCs solved earlier.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{reachable_within, scc_order, scc_order_within};
use crate::model::{Direction, Partition, SparseModel};
use crate::set::StateSet;
use crate::solvers::{
    boundary_vector, choice_scores, initial_interval, optimal_value, require_contracting, select_choice,
    shortcut, IiRun, Method, Objective, Observer, SolveError, SolveResult, SolverConfig, SviRun, Termination,
    TraceRow, ViRun,
};

/// A total order `≺` on the states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateOrdering {
    order: Vec<usize>,
    position: Vec<usize>,
}

impl StateOrdering {
    /// `order` must be a permutation of `0..order.len()`.
    pub fn new(order: Vec<usize>) -> Option<Self> {
        let n = order.len();
        let mut position = vec![usize::MAX; n];
        for (i, &s) in order.iter().enumerate() {
            if s >= n || position[s] != usize::MAX {
                return None;
            }
            position[s] = i;
        }
        Some(StateOrdering { order, position })
    }

    /// Position in the reverse topological SCC order, then state index.
    pub fn reverse_topological(model: &SparseModel) -> Self {
        let order: Vec<usize> = scc_order(model).sccs.into_iter().flatten().collect();
        StateOrdering::new(order).expect("SCCs partition the states")
    }

    #[inline]
    pub fn precedes(&self, a: usize, b: usize) -> bool {
        self.position[a] < self.position[b]
    }

    /// Step count of a transition `s → t`: 0 if `t ≺ s`, 1 otherwise.
    #[inline]
    pub fn kappa(&self, s: usize, t: usize) -> u32 {
        u32::from(!self.precedes(t, s))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.order
    }

    /// The members of `states` in this order.
    pub fn restrict(&self, states: &StateSet) -> Vec<usize> {
        self.order.iter().copied().filter(|&s| states.contains(s)).collect()
    }
}

/// One in-place sweep of `x` and `y` over the undetermined states in `≺`
/// order. On MDPs the choice at each state is picked on the partially
/// updated vectors, against `bound` (upper bound when maximizing, lower
/// bound when minimizing).
#[allow(clippy::too_many_arguments)]
pub fn gs_sweep(
    model: &SparseModel,
    partition: &Partition,
    x: &[f64],
    y: &[f64],
    ordering: &StateOrdering,
    direction: Direction,
    objective: Objective,
    bound: f64,
) -> (Vec<f64>, Vec<f64>) {
    let (mut x, mut y) = (x.to_vec(), y.to_vec());
    let mut buf = Vec::new();
    for s in ordering.restrict(&partition.maybe) {
        choice_scores(model, s, &x, &y, objective, &mut buf);
        let a = select_choice(&buf, bound, direction);
        x[s] = buf[a].x;
        y[s] = buf[a].y;
    }
    (x, y)
}

/// Solves SCC by SCC, from the bottom of the SCC graph up to the SCC of the
/// initial state. Only undetermined states reachable from the initial state
/// are visited.
pub fn topological_solve(
    model: &SparseModel,
    partition: &Partition,
    config: &SolverConfig,
) -> Result<SolveResult, SolveError> {
    topological_solve_traced(model, partition, config, None)
}

pub fn topological_solve_traced(
    model: &SparseModel,
    partition: &Partition,
    config: &SolverConfig,
    observer: Option<Observer<'_>>,
) -> Result<SolveResult, SolveError> {
    config.validate()?;
    if let Some(res) = shortcut(model, partition, config) {
        return Ok(res);
    }
    require_contracting(model, partition, config.objective)?;
    let init = model.initial_state();
    let reach = reachable_within(model, init, &partition.maybe);
    if config.method == Method::Ii {
        for s in reach.iter() {
            initial_interval(config, s)?;
        }
    }
    let order = scc_order_within(model, &reach);
    let config = &SolverConfig {
        topological: true,
        ..config.clone()
    };

    let mut lo = boundary_vector(model, partition, config.objective);
    let mut hi = lo.clone();
    let mut solver = SccSolver {
        model,
        config,
        init,
        total: 0,
        observer,
    };
    for id in 0..order.sccs.len() {
        let scc = &order.sccs[id];
        if order.is_trivial(model, id) {
            let s = scc[0];
            lo[s] = optimal_value(model, s, &lo, config.objective, config.direction).0;
            hi[s] = optimal_value(model, s, &hi, config.objective, config.direction).0;
            solver.total += 1;
            continue;
        }
        let root = scc.contains(&init);
        let outcome = match config.method {
            Method::Svi => solver.svi(scc, &lo, &hi, root),
            Method::Ii => solver.ii(scc, &lo, &hi, root),
            Method::Vi => solver.vi(scc, &lo, &hi),
        };
        match outcome {
            Ok((l, h)) => {
                for (i, &s) in scc.iter().enumerate() {
                    lo[s] = l[i];
                    hi[s] = h[i];
                }
            }
            Err(()) => {
                let partial = SolveResult {
                    value: (lo[init] + hi[init]) / 2.0,
                    lower: f64::NEG_INFINITY,
                    upper: f64::INFINITY,
                    iterations: solver.total,
                    ..SolveResult::exact(0.0, config)
                };
                return Err(SolveError::IterationLimit(Box::new(partial)));
            }
        }
    }
    let (l, h) = (lo[init], hi[init]);
    Ok(SolveResult {
        value: (l + h) / 2.0,
        lower: l,
        upper: h,
        iterations: solver.total,
        ..SolveResult::exact(0.0, config)
    })
}

struct SccSolver<'a, 'o> {
    model: &'a SparseModel,
    config: &'a SolverConfig,
    init: usize,
    total: u64,
    observer: Option<&'o mut dyn FnMut(&TraceRow)>,
}

type SccBounds = Result<(Vec<f64>, Vec<f64>), ()>;

impl SccSolver<'_, '_> {
    fn tick(&mut self) -> Result<(), ()> {
        if self.total >= self.config.max_iterations {
            return Err(());
        }
        self.total += 1;
        Ok(())
    }

    fn emit(&mut self, row: TraceRow) {
        if let Some(obs) = self.observer.as_mut() {
            obs(&TraceRow {
                iteration: self.total,
                ..row
            });
        }
    }

    fn svi(&mut self, scc: &[usize], lo: &[f64], hi: &[f64], root: bool) -> SccBounds {
        let c = self.config;
        let (model, init) = (self.model, self.init);
        let exact = scc.iter().all(|&s| {
            model
                .successors(s)
                .filter(|t| !scc.contains(t))
                .all(|t| lo[t] == hi[t])
        });
        let termination = if root { Termination::State(init) } else { Termination::AllStates };
        let (l0, u0) = c.scalar_bounds(scc);
        // User bounds hold for the true values only; the lower run's fixpoint
        // may lie below `l0`, the upper run's above `u0`.
        let (lo_bounds, hi_bounds) = if exact {
            ((l0, u0), (l0, u0))
        } else {
            ((f64::NEG_INFINITY, u0), (l0, f64::INFINITY))
        };
        let new_run = |boundary: &[f64], bounds| {
            SviRun::new(
                model,
                scc.to_vec(),
                boundary.to_vec(),
                c.objective,
                c.direction,
                c.gauss_seidel,
                c.epsilon,
                termination,
                bounds,
            )
        };
        let mut lo_run = new_run(lo, lo_bounds);
        let mut hi_run = if exact { None } else { Some(new_run(hi, hi_bounds)) };

        let interval = |lo_run: &SviRun<'_>, hi_run: &Option<SviRun<'_>>, s: usize| {
            let l = lo_run.value_at(s).1;
            let h = hi_run.as_ref().map_or(lo_run.value_at(s).2, |r| r.value_at(s).2);
            (l, h)
        };
        let done = |lo_run: &SviRun<'_>, hi_run: &Option<SviRun<'_>>| {
            if lo_run.iteration() == 0 {
                return false;
            }
            let narrow = |s: usize| {
                let (l, h) = interval(lo_run, hi_run, s);
                h - l < 2.0 * c.epsilon
            };
            if root {
                narrow(init)
            } else {
                scc.iter().all(|&s| narrow(s))
            }
        };
        while !done(&lo_run, &hi_run) {
            self.tick()?;
            lo_run.step();
            if let Some(r) = hi_run.as_mut() {
                r.step();
            }
            if self.observer.is_some() {
                let upper = hi_run.as_ref().map_or(lo_run.upper(), |r| r.upper());
                self.emit(TraceRow {
                    iteration: 0,
                    lower: lo_run.lower(),
                    upper,
                    decision: lo_run.has_choices().then_some(lo_run.decision()),
                    stay: root.then(|| lo_run.y()[init]),
                });
            }
        }
        Ok(scc.iter().map(|&s| interval(&lo_run, &hi_run, s)).unzip())
    }

    fn ii(&mut self, scc: &[usize], lo: &[f64], hi: &[f64], root: bool) -> SccBounds {
        let c = self.config;
        let (mut l, mut h) = (lo.to_vec(), hi.to_vec());
        for &s in scc {
            // missing reward bounds are rejected before any SCC is solved
            let (a, b) = initial_interval(c, s).map_err(|_| ())?;
            l[s] = a;
            h[s] = b;
        }
        let mut run = IiRun::new(self.model, scc.to_vec(), l, h, c.objective, c.direction, c.gauss_seidel);
        while run.iteration() == 0 || !run.converged(c.epsilon) {
            self.tick()?;
            run.step();
            if root && self.observer.is_some() {
                let (a, b) = (run.lower()[self.init], run.upper()[self.init]);
                self.emit(TraceRow {
                    iteration: 0,
                    lower: a,
                    upper: b,
                    decision: None,
                    stay: None,
                });
            }
        }
        Ok(scc.iter().map(|&s| (run.lower()[s], run.upper()[s])).unzip())
    }

    fn vi(&mut self, scc: &[usize], lo: &[f64], _hi: &[f64]) -> SccBounds {
        let c = self.config;
        let mut run = ViRun::new(self.model, scc.to_vec(), lo.to_vec(), c.objective, c.direction, c.gauss_seidel);
        while !run.converged(c.epsilon) {
            self.tick()?;
            run.step();
        }
        Ok(scc.iter().map(|&s| (run.x()[s], run.x()[s])).unzip())
    }
}
