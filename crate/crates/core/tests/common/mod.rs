#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use svi_core::{
    make_absorbing, oracle_solve, prepare, Direction, ModelBuilder, Objective, Partition, PreparedQuery,
    Scheduler, SolverConfig, SparseModel, StateSet,
};
use svi_core::solvers::Method;

#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub model: SparseModel,
    pub goal: StateSet,
    pub objective: Objective,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub mdp: bool,
    pub reward: bool,
    pub max_states: usize,
}

/// A random model with 2 to `max_states` states, 1 to 3 choices per state
/// (1 for chains) and at most 4096 positional schedulers. Reward instances
/// get rewards in [-2, 5] and a leak to the goal on every choice so that
/// the goal is reached almost surely.
pub fn random_instance(seed: u64, shape: Shape) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=shape.max_states);
    let mut states: Vec<usize> = (0..n).collect();
    states.shuffle(&mut rng);
    let goal_size = rng.gen_range(1..=2.min(n - 1));
    let goal: Vec<usize> = states[..goal_size].to_vec();

    let mut arity: Vec<usize> = (0..n)
        .map(|_| if shape.mdp { rng.gen_range(1..=3) } else { 1 })
        .collect();
    while arity.iter().product::<usize>() > 4096 {
        let i = rng.gen_range(0..n);
        arity[i] = arity[i].saturating_sub(1).max(1);
    }

    let mut b = ModelBuilder::new(n);
    for s in 0..n {
        for _ in 0..arity[s] {
            let k = rng.gen_range(1..=3.min(n));
            let mut targets: Vec<usize> = (0..n).collect();
            targets.shuffle(&mut rng);
            let mut entries: Vec<(usize, f64)> = targets[..k]
                .iter()
                .map(|&t| (t, rng.gen_range(0.05..1.0)))
                .collect();
            if shape.reward {
                let g = goal[rng.gen_range(0..goal.len())];
                entries.push((g, rng.gen_range(0.05..0.5)));
            }
            let total: f64 = entries.iter().map(|e| e.1).sum();
            for e in &mut entries {
                e.1 /= total;
            }
            if shape.reward {
                b.choice_with_reward(s, &entries, rng.gen_range(-2.0..5.0));
            } else {
                b.choice(s, &entries);
            }
        }
    }
    let init = states[rng.gen_range(goal_size..n)];
    b.initial(init);
    let model = b.build().expect("generated rows are stochastic");
    let goal = model.state_set(&goal);
    Instance {
        seed,
        model,
        goal,
        objective: if shape.reward { Objective::Reward } else { Objective::Probability },
        direction: if rng.gen_bool(0.5) { Direction::Maximize } else { Direction::Minimize },
    }
}

/// The suite used by the acceptance checks: chains and MDPs, probabilities
/// and rewards, both directions.
pub fn suite(count: usize, max_states: usize) -> Vec<Instance> {
    (0..count as u64)
        .map(|i| {
            let shape = Shape {
                mdp: i % 2 == 1,
                reward: i % 4 >= 2,
                max_states,
            };
            random_instance(0x5eed_0000 + i, shape)
        })
        .collect()
}

impl Instance {
    pub fn config(&self, method: Method, epsilon: f64) -> SolverConfig {
        SolverConfig::new(method, self.direction, self.objective, epsilon)
    }

    pub fn prepared(&self) -> PreparedQuery {
        prepare(&self.model, &self.goal, &self.config(Method::Svi, 1e-8)).expect("generated instance is solvable")
    }

    /// Oracle values of every original state.
    pub fn oracle(&self) -> Vec<f64> {
        let m = make_absorbing(&self.model, &self.goal);
        let p = Partition::new(&m, StateSet::new(m.num_states()), self.goal.clone()).unwrap();
        oracle_solve(&m, &p, self.objective, self.direction).expect("small instance")
    }

    /// Oracle values on the prepared model, indexed by its states.
    pub fn prepared_oracle(&self, q: &PreparedQuery) -> Vec<f64> {
        let p = Partition::new(&q.model, StateSet::new(q.model.num_states()), q.partition.goal.clone()).unwrap();
        oracle_solve(&q.model, &p, self.objective, self.direction).expect("small instance")
    }

    /// Scalar bounds valid for every state: `[0, 1]` for probabilities, a
    /// padded oracle range for rewards.
    pub fn bounds(&self) -> (f64, f64) {
        match self.objective {
            Objective::Probability => (0.0, 1.0),
            Objective::Reward => {
                let v = self.oracle();
                let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                ((lo - 1.0).floor(), (hi + 1.0).ceil())
            }
        }
    }
}

/// Bounded measures by enumerating every path of length `schedulers.len()`
/// from `start`. At remaining horizon `j` the choice is
/// `schedulers[j - 1]`. Returns `(x, y)`: the probability of reaching the
/// goal (or the reward accumulated before the goal) and the probability of
/// staying in `partition.maybe` throughout.
pub fn enumerate_paths(
    model: &SparseModel,
    partition: &Partition,
    objective: Objective,
    schedulers: &[Scheduler],
    start: usize,
) -> (f64, f64) {
    let mut x = 0.0;
    let mut y = 0.0;
    // stack of (state, remaining horizon, path probability, accumulated reward)
    let mut stack = vec![(start, schedulers.len(), 1.0, 0.0)];
    while let Some((s, j, p, acc)) = stack.pop() {
        if partition.goal.contains(s) {
            x += if objective == Objective::Reward { p * acc } else { p };
            continue;
        }
        if partition.s0.contains(s) {
            if objective == Objective::Reward {
                x += p * acc;
            }
            continue;
        }
        if j == 0 {
            y += p;
            if objective == Objective::Reward {
                x += p * acc;
            }
            continue;
        }
        let c = model.choice_index(s, schedulers[j - 1].choice_of(s));
        let r = model.reward(c);
        for (t, q) in model.entries(c) {
            stack.push((t, j - 1, p * q, acc + r));
        }
    }
    (x, y)
}
