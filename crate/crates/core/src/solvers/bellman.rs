//! Bellman operators and the per-state pieces of sound value iteration.

use alloc::vec;
use alloc::vec::Vec;

use super::Objective;
use crate::model::{Direction, Partition, Scheduler, SparseModel};

/// Per-choice sums `(Σ P·x (+ ρ), Σ P·y)` at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChoiceScore {
    pub x: f64,
    pub y: f64,
}

/// Fills `out` with one [`ChoiceScore`] per choice of `state`, in local
/// choice order. The reward is added to `x` in reward mode.
#[inline]
pub fn choice_scores(
    model: &SparseModel,
    state: usize,
    x: &[f64],
    y: &[f64],
    objective: Objective,
    out: &mut Vec<ChoiceScore>,
) {
    out.clear();
    for c in model.choices(state) {
        let mut sx = if objective.is_reward() { model.reward(c) } else { 0.0 };
        let mut sy = 0.0;
        for (&t, &p) in model.targets(c).iter().zip(model.probs(c)) {
            sx += p * x[t];
            sy += p * y[t];
        }
        out.push(ChoiceScore { x: sx, y: sy });
    }
}

/// Optimal one-step value `opt_α (ρ) + Σ P·x` at `state` and the first
/// choice attaining it.
#[inline]
pub(crate) fn optimal_value(
    model: &SparseModel,
    state: usize,
    x: &[f64],
    objective: Objective,
    direction: Direction,
) -> (f64, usize) {
    let mut best = direction.worst();
    let mut arg = 0;
    for (i, c) in model.choices(state).enumerate() {
        let mut v = if objective.is_reward() { model.reward(c) } else { 0.0 };
        for (&t, &p) in model.targets(c).iter().zip(model.probs(c)) {
            v += p * x[t];
        }
        if i == 0 || direction.better(v, best) {
            best = v;
            arg = i;
        }
    }
    (best, arg)
}

/// Picks the optimal choice for the combined value `x + y·bound`.
///
/// `bound` is the current upper bound when maximizing and the current lower
/// bound when minimizing. If it is infinite the ordering is decided by `y`
/// alone (larger is better in both directions, since the bound dominates),
/// then by `x`. Ties go to the lowest index.
pub fn select_choice(scores: &[ChoiceScore], bound: f64, direction: Direction) -> usize {
    let mut best = 0;
    if bound.is_finite() {
        let mut best_val = scores[0].x + scores[0].y * bound;
        for (i, sc) in scores.iter().enumerate().skip(1) {
            let v = sc.x + sc.y * bound;
            if direction.better(v, best_val) {
                best = i;
                best_val = v;
            }
        }
    } else {
        for (i, sc) in scores.iter().enumerate().skip(1) {
            let b = &scores[best];
            if sc.y > b.y || (sc.y == b.y && direction.better(sc.x, b.x)) {
                best = i;
            }
        }
    }
    best
}

/// Decision value of the chosen choice `alpha`.
///
/// Maximizing: the smallest bound for which `alpha` stays optimal,
/// `max { x_Δ / y_Δ | y_Δ > 0 }` with `y_Δ = Y_α − Y_β`, `x_Δ = X_β − X_α`,
/// or −∞. Minimizing: the largest bound for which `alpha` stays optimal,
/// the `min` of the same ratios, or +∞.
pub fn decision_from_scores(scores: &[ChoiceScore], alpha: usize, direction: Direction) -> f64 {
    let a = scores[alpha];
    let mut d = direction.worst();
    for (i, b) in scores.iter().enumerate() {
        if i == alpha {
            continue;
        }
        let y_delta = a.y - b.y;
        if y_delta > 0.0 {
            let x_delta = b.x - a.x;
            d = direction.opt(d, x_delta / y_delta);
        }
    }
    d
}

/// One application of the probability operator `f`. Returns the new vector
/// and the choice taken at every undetermined state (0 elsewhere).
pub fn bellman_step_f(
    model: &SparseModel,
    partition: &Partition,
    x: &[f64],
    direction: Direction,
) -> (Vec<f64>, Scheduler) {
    step_opt(model, partition, x, direction, Objective::Probability)
}

/// One application of the reward operator `g` (0 on goal states).
pub fn bellman_step_g(model: &SparseModel, partition: &Partition, x: &[f64], direction: Direction) -> Vec<f64> {
    step_opt(model, partition, x, direction, Objective::Reward).0
}

fn step_opt(
    model: &SparseModel,
    partition: &Partition,
    x: &[f64],
    direction: Direction,
    objective: Objective,
) -> (Vec<f64>, Scheduler) {
    let n = model.num_states();
    let mut out = vec![0.0; n];
    let mut sched = Scheduler::first_choice(model);
    if !objective.is_reward() {
        for s in partition.goal.iter() {
            out[s] = 1.0;
        }
    }
    for s in partition.maybe.iter() {
        let (v, best) = optimal_value(model, s, x, objective, direction);
        out[s] = v;
        sched.set(s, best);
    }
    (out, sched)
}

/// One application of `h`: `y'[s] = Σ P(s, σ(s), s')·y[s']` on undetermined
/// states, 0 elsewhere. `scheduler` fixes the choice per state (MDPs); with
/// `None` every state must have a single choice.
pub fn bellman_step_h(
    model: &SparseModel,
    partition: &Partition,
    y: &[f64],
    scheduler: Option<&Scheduler>,
) -> Vec<f64> {
    let mut out = vec![0.0; model.num_states()];
    for s in partition.maybe.iter() {
        let local = scheduler.map_or(0, |sc| sc.choice_of(s));
        let c = model.choice_index(s, local);
        out[s] = model.entries(c).map(|(t, p)| p * y[t]).sum();
    }
    out
}

/// The choice sound value iteration takes at `state`. `bound` is the upper
/// bound when maximizing, the lower bound when minimizing; infinite if not
/// yet known.
pub fn find_action(
    model: &SparseModel,
    state: usize,
    x: &[f64],
    y: &[f64],
    bound: f64,
    direction: Direction,
    objective: Objective,
) -> usize {
    let mut buf = Vec::new();
    choice_scores(model, state, x, y, objective, &mut buf);
    select_choice(&buf, bound, direction)
}

/// Decision value of `alpha` at `state`; see [`decision_from_scores`].
pub fn decision_value(
    model: &SparseModel,
    state: usize,
    x: &[f64],
    y: &[f64],
    alpha: usize,
    direction: Direction,
    objective: Objective,
) -> f64 {
    let mut buf = Vec::new();
    choice_scores(model, state, x, y, objective, &mut buf);
    decision_from_scores(&buf, alpha, direction)
}

/// Global bound update. Bounds are left unchanged unless `y[s] < 1` for
/// every state in `states`.
///
/// Maximizing: `ℓ = max(ℓ, min_s r_s)`, `u = min(u, max(d, max_s r_s))`;
/// minimizing: `ℓ = max(ℓ, min(d, min_s r_s))`, `u = min(u, max_s r_s)`,
/// with `r_s = x[s] / (1 − y[s])`.
pub fn update_global_bounds(
    x: &[f64],
    y: &[f64],
    states: &[usize],
    lower: f64,
    upper: f64,
    decision: f64,
    direction: Direction,
) -> (f64, f64) {
    if states.is_empty() || states.iter().any(|&s| !(y[s] < 1.0)) {
        return (lower, upper);
    }
    let mut rmin = f64::INFINITY;
    let mut rmax = f64::NEG_INFINITY;
    for &s in states {
        let r = x[s] / (1.0 - y[s]);
        rmin = rmin.min(r);
        rmax = rmax.max(r);
    }
    match direction {
        Direction::Maximize => (lower.max(rmin), upper.min(decision.max(rmax))),
        Direction::Minimize => (lower.max(decision.min(rmin)), upper.min(rmax)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::ModelBuilder;
    use crate::set::StateSet;

    fn leaky_partition(m: &SparseModel) -> Partition {
        Partition::new(m, m.state_set(&[3]), m.state_set(&[4])).unwrap()
    }

    fn decision_partition(m: &SparseModel) -> Partition {
        Partition::new(m, m.state_set(&[5, 6]), m.state_set(&[3, 4])).unwrap()
    }

    fn x0(p: &Partition, n: usize) -> Vec<f64> {
        (0..n).map(|s| if p.goal.contains(s) { 1.0 } else { 0.0 }).collect()
    }

    fn y0(p: &Partition, n: usize) -> Vec<f64> {
        (0..n).map(|s| if p.maybe.contains(s) { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn f_one_step_on_leaky_mc() {
        let m = leaky_mc();
        let p = leaky_partition(&m);
        let (x1, _) = bellman_step_f(&m, &p, &x0(&p, 5), Direction::Maximize);
        assert_eq!(x1, vec![0.0, 0.0, 0.3, 0.0, 1.0]);
    }

    #[test]
    fn f_fixpoint_is_stable() {
        let m = leaky_mc();
        let p = leaky_partition(&m);
        let fix = [0.75, 0.75, 0.75, 0.0, 1.0];
        let (x1, _) = bellman_step_f(&m, &p, &fix, Direction::Maximize);
        for (a, b) in x1.iter().zip(fix) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn f_maximizes_over_choices() {
        let m = leaky_mdp();
        let p = leaky_partition(&m);
        let x = [0.1, 0.2, 0.3, 0.0, 1.0];
        let (x1, sched) = bellman_step_f(&m, &p, &x, Direction::Maximize);
        let alpha = 0.01 * x[1] + 0.99 * x[0];
        let beta = 0.2 * 0.0 + 0.8 * 0.3;
        assert_eq!(x1[0], alpha.max(beta));
        assert_eq!(sched.choice_of(0), 1);
        let (x1, sched) = bellman_step_f(&m, &p, &x, Direction::Minimize);
        assert!((x1[0] - alpha.min(beta)).abs() < 1e-15);
        assert_eq!(sched.choice_of(0), 0);
    }

    #[test]
    fn g_examples() {
        // s -> G with certainty, reward 2
        let mut b = ModelBuilder::new(2);
        b.choice_with_reward(0, &[(1, 1.0)], 2.0);
        b.choice(1, &[(1, 1.0)]);
        let m = b.build().unwrap();
        let p = Partition::new(&m, StateSet::new(2), m.state_set(&[1])).unwrap();
        assert_eq!(bellman_step_g(&m, &p, &[0.0, 0.0], Direction::Maximize), vec![2.0, 0.0]);

        let mut b = ModelBuilder::new(2);
        b.choice_with_reward(0, &[(0, 0.5), (1, 0.5)], 1.0);
        b.choice(1, &[(1, 1.0)]);
        let m = b.build().unwrap();
        let p = Partition::new(&m, StateSet::new(2), m.state_set(&[1])).unwrap();
        assert_eq!(bellman_step_g(&m, &p, &[2.0, 0.0], Direction::Maximize), vec![2.0, 0.0]);

        let m = leaky_mc();
        let p = leaky_partition(&m);
        assert_eq!(bellman_step_g(&m, &p, &[0.0; 5], Direction::Maximize), vec![0.0; 5]);
    }

    #[test]
    fn h_three_steps_on_leaky_mc() {
        let m = leaky_mc();
        let p = leaky_partition(&m);
        let mut y = y0(&p, 5);
        for _ in 0..3 {
            y = bellman_step_h(&m, &p, &y, None);
        }
        assert!((y[0] - 0.99996).abs() < 1e-12);
        assert!((y[1] - 0.996).abs() < 1e-12);
        assert!((y[2] - 0.6).abs() < 1e-12);
        assert_eq!(bellman_step_h(&m, &p, &[0.0; 5], None), vec![0.0; 5]);
    }

    #[test]
    fn h_under_alpha_on_decision_mdp() {
        let m = decision_mdp();
        let p = decision_partition(&m);
        let y1 = bellman_step_h(&m, &p, &y0(&p, 7), Some(&Scheduler::first_choice(&m)));
        assert!((y1[0] - 0.8).abs() < 1e-15);
        assert!((y1[1] - 0.9).abs() < 1e-15);
        assert_eq!(y1[2], 0.0);
    }

    #[test]
    fn find_action_examples() {
        let m = decision_mdp();
        let p = decision_partition(&m);
        let (x0, y0) = (x0(&p, 7), y0(&p, 7));
        let dir = Direction::Maximize;
        let obj = Objective::Probability;
        assert_eq!(find_action(&m, 0, &x0, &y0, f64::INFINITY, dir, obj), 0);

        let x1 = [0.0, 0.1, 0.1, 1.0, 1.0, 0.0, 0.0];
        let y1 = [0.8, 0.9, 0.0, 0.0, 0.0, 0.0, 0.0];
        let mut buf = Vec::new();
        choice_scores(&m, 0, &x1, &y1, obj, &mut buf);
        assert!((buf[0].x + buf[0].y - 0.8).abs() < 1e-15);
        assert!((buf[1].x + buf[1].y - 0.62).abs() < 1e-15);
        assert_eq!(find_action(&m, 0, &x1, &y1, 1.0, dir, obj), 0);

        assert_eq!(find_action(&m, 1, &x1, &y1, 1.0, dir, obj), 0);
    }

    #[test]
    fn decision_value_examples() {
        let m = decision_mdp();
        let p = decision_partition(&m);
        let (x0, y0) = (x0(&p, 7), y0(&p, 7));
        let obj = Objective::Probability;
        let d = decision_value(&m, 0, &x0, &y0, 0, Direction::Maximize, obj);
        assert!((d - 0.75).abs() < 1e-12);
        assert_eq!(
            decision_value(&m, 1, &x0, &y0, 0, Direction::Maximize, obj),
            f64::NEG_INFINITY
        );

        let same = [ChoiceScore { x: 0.2, y: 0.5 }, ChoiceScore { x: 0.2, y: 0.5 }];
        assert_eq!(decision_from_scores(&same, 0, Direction::Maximize), f64::NEG_INFINITY);
        assert_eq!(decision_from_scores(&same, 0, Direction::Minimize), f64::INFINITY);
    }

    #[test]
    fn minimizing_decision_value_is_largest_stable_bound() {
        // α: x=0.1, y=0.8 ; β: x=0.5, y=0.2. For a lower bound v, α is
        // optimal (minimal) iff 0.1 + 0.8v <= 0.5 + 0.2v, i.e. v <= 2/3.
        let scores = [ChoiceScore { x: 0.1, y: 0.8 }, ChoiceScore { x: 0.5, y: 0.2 }];
        assert_eq!(select_choice(&scores, 0.0, Direction::Minimize), 0);
        let d = decision_from_scores(&scores, 0, Direction::Minimize);
        assert!((d - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(select_choice(&scores, 0.7, Direction::Minimize), 1);
    }

    #[test]
    fn infinite_bound_prefers_staying_then_x() {
        let scores = [
            ChoiceScore { x: 0.1, y: 0.5 },
            ChoiceScore { x: 0.3, y: 0.5 },
            ChoiceScore { x: 0.0, y: 0.4 },
        ];
        assert_eq!(select_choice(&scores, f64::INFINITY, Direction::Maximize), 1);
        assert_eq!(select_choice(&scores, f64::NEG_INFINITY, Direction::Minimize), 0);
    }

    #[test]
    fn global_bounds_examples() {
        let states = [0, 1, 2];
        // converged leaky chain after three steps
        let x3 = [0.00003, 0.003, 0.3];
        let y3 = [0.99996, 0.996, 0.6];
        let (l, u) = update_global_bounds(
            &x3,
            &y3,
            &states,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            Direction::Maximize,
        );
        assert!((l - 0.75).abs() < 1e-9 && (u - 0.75).abs() < 1e-9);

        let x2 = [0.08, 0.19, 0.1];
        let y2 = [0.72, 0.0, 0.0];
        let (l, u) = update_global_bounds(&x2, &y2, &states, 0.0, 1.0, 0.75, Direction::Maximize);
        assert!((l - 0.1).abs() < 1e-15);
        assert_eq!(u, 0.75);

        let y = [1.0, 0.5, 0.5];
        assert_eq!(
            update_global_bounds(&x2, &y, &states, 0.0, 1.0, 0.75, Direction::Maximize),
            (0.0, 1.0)
        );
    }
}
