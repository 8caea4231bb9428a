//! Immutable sparse MC/MDP representation.
//!
//! States own a contiguous group of choices (rows), each choice owns a
//! contiguous run of `(target, probability)` entries sorted by target. A
//! Markov chain is simply a model in which every row group has one choice.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use thiserror::Error;

use crate::set::StateSet;

/// Absolute tolerance on per-choice probability sums at ingest.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Rows whose sum is within this distance of one are kept as-is; anything
/// further off (but within [`ROW_SUM_TOLERANCE`]) is divided by its sum.
/// Keeps `validate_model` idempotent.
const RENORMALIZE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("state {state}, choice {choice}: probabilities sum to {sum}")]
    RowSumError { state: usize, choice: usize, sum: f64 },
    #[error("state {state}, choice {choice}: target {target} is not a state (model has {num_states})")]
    DanglingTarget {
        state: usize,
        choice: usize,
        target: usize,
        num_states: usize,
    },
    #[error("state {0} has no enabled choice")]
    EmptyRowGroup(usize),
    #[error("state {state}, choice {choice}: invalid probability {value}")]
    NegativeProbability { state: usize, choice: usize, value: f64 },
    #[error("state {state}, choice {choice}: reward {value} is not finite")]
    InvalidReward { state: usize, choice: usize, value: f64 },
    #[error("state {state}: choice index {choice} out of range ({available} available)")]
    InvalidChoiceIndex {
        state: usize,
        choice: usize,
        available: usize,
    },
    #[error("initial state {0} out of range")]
    InvalidInitialState(usize),
    #[error("label `{0}` has the wrong capacity")]
    LabelCapacity(String),
    #[error("state {0} is claimed by more than one partition block")]
    OverlappingPartition(usize),
    #[error("goal state {0} is not absorbing")]
    GoalNotAbsorbing(usize),
}

/// Optimization direction for nondeterministic choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    /// `true` if `a` is strictly better than `b`.
    #[inline]
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Maximize => a > b,
            Direction::Minimize => a < b,
        }
    }

    #[inline]
    pub fn opt(self, a: f64, b: f64) -> f64 {
        if self.better(b, a) {
            b
        } else {
            a
        }
    }

    /// The neutral element of `opt`.
    #[inline]
    pub fn worst(self) -> f64 {
        match self {
            Direction::Maximize => f64::NEG_INFINITY,
            Direction::Minimize => f64::INFINITY,
        }
    }
}

/// A single choice before validation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawChoice {
    pub entries: Vec<(usize, f64)>,
    pub reward: f64,
    pub action: Option<String>,
}

impl RawChoice {
    pub fn new(entries: Vec<(usize, f64)>) -> Self {
        RawChoice {
            entries,
            reward: 0.0,
            action: None,
        }
    }
}

/// Unvalidated model data as produced by parsers or builders.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawModel {
    pub num_states: usize,
    pub initial_state: usize,
    /// One entry per state; each state lists its choices in order.
    pub rows: Vec<Vec<RawChoice>>,
    pub labels: BTreeMap<String, StateSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseModel {
    num_states: usize,
    initial_state: usize,
    row_groups: Vec<usize>,
    choice_starts: Vec<usize>,
    targets: Vec<usize>,
    probs: Vec<f64>,
    rewards: Vec<f64>,
    actions: Vec<Option<String>>,
    labels: BTreeMap<String, StateSet>,
}

/// Canonicalizes raw model data: entries sorted by target, duplicate
/// targets merged, zero entries dropped, row sums checked against
/// [`ROW_SUM_TOLERANCE`] and renormalized.
pub fn validate_model(raw: RawModel) -> Result<SparseModel, ModelError> {
    let n = raw.num_states;
    if raw.initial_state >= n {
        return Err(ModelError::InvalidInitialState(raw.initial_state));
    }
    for (name, set) in &raw.labels {
        if set.capacity() != n {
            return Err(ModelError::LabelCapacity(name.clone()));
        }
    }
    let mut row_groups = Vec::with_capacity(n + 1);
    let mut choice_starts = vec![0];
    let mut targets = Vec::new();
    let mut probs = Vec::new();
    let mut rewards = Vec::new();
    let mut actions = Vec::new();
    row_groups.push(0);

    let mut rows = raw.rows;
    rows.resize_with(n.max(rows.len()), Vec::new);
    for (state, row) in rows.into_iter().enumerate() {
        if state >= n {
            // rows for a state the header does not declare
            return Err(ModelError::DanglingTarget {
                state,
                choice: 0,
                target: state,
                num_states: n,
            });
        }
        if row.is_empty() {
            return Err(ModelError::EmptyRowGroup(state));
        }
        for (choice, rc) in row.into_iter().enumerate() {
            let mut entries = rc.entries;
            for &(target, p) in &entries {
                if target >= n {
                    return Err(ModelError::DanglingTarget {
                        state,
                        choice,
                        target,
                        num_states: n,
                    });
                }
                if !(p >= 0.0) || !p.is_finite() {
                    return Err(ModelError::NegativeProbability {
                        state,
                        choice,
                        value: p,
                    });
                }
            }
            if !rc.reward.is_finite() {
                return Err(ModelError::InvalidReward {
                    state,
                    choice,
                    value: rc.reward,
                });
            }
            entries.sort_by_key(|&(t, _)| t);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
            for (t, p) in entries {
                match merged.last_mut() {
                    Some(last) if last.0 == t => last.1 += p,
                    _ => merged.push((t, p)),
                }
            }
            merged.retain(|&(_, p)| p > 0.0);
            let sum: f64 = merged.iter().map(|&(_, p)| p).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(ModelError::RowSumError { state, choice, sum });
            }
            let renormalize = (sum - 1.0).abs() > RENORMALIZE_THRESHOLD;
            for (t, p) in merged {
                targets.push(t);
                probs.push(if renormalize { p / sum } else { p });
            }
            choice_starts.push(targets.len());
            rewards.push(rc.reward);
            actions.push(rc.action);
        }
        row_groups.push(rewards.len());
    }

    Ok(SparseModel {
        num_states: n,
        initial_state: raw.initial_state,
        row_groups,
        choice_starts,
        targets,
        probs,
        rewards,
        actions,
        labels: raw.labels,
    })
}

impl SparseModel {
    #[inline]
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn num_choices(&self) -> usize {
        self.rewards.len()
    }

    #[inline]
    pub fn num_transitions(&self) -> usize {
        self.targets.len()
    }

    #[inline]
    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    /// Global choice indices belonging to `state`.
    #[inline]
    pub fn choices(&self, state: usize) -> Range<usize> {
        self.row_groups[state]..self.row_groups[state + 1]
    }

    #[inline]
    pub fn num_choices_of(&self, state: usize) -> usize {
        self.row_groups[state + 1] - self.row_groups[state]
    }

    /// Global index of the `local`-th choice of `state`.
    #[inline]
    pub fn choice_index(&self, state: usize, local: usize) -> usize {
        self.row_groups[state] + local
    }

    #[inline]
    pub fn targets(&self, choice: usize) -> &[usize] {
        &self.targets[self.choice_starts[choice]..self.choice_starts[choice + 1]]
    }

    #[inline]
    pub fn probs(&self, choice: usize) -> &[f64] {
        &self.probs[self.choice_starts[choice]..self.choice_starts[choice + 1]]
    }

    #[inline]
    pub fn entries(&self, choice: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.targets(choice)
            .iter()
            .copied()
            .zip(self.probs(choice).iter().copied())
    }

    /// Probability of moving from the choice to `target` (0 if absent).
    pub fn prob(&self, choice: usize, target: usize) -> f64 {
        match self.targets(choice).binary_search(&target) {
            Ok(i) => self.probs(choice)[i],
            Err(_) => 0.0,
        }
    }

    #[inline]
    pub fn reward(&self, choice: usize) -> f64 {
        self.rewards[choice]
    }

    pub fn action(&self, choice: usize) -> Option<&str> {
        self.actions[choice].as_deref()
    }

    pub fn labels(&self) -> &BTreeMap<String, StateSet> {
        &self.labels
    }

    pub fn label(&self, name: &str) -> Option<&StateSet> {
        self.labels.get(name)
    }

    /// `true` iff every state has exactly one choice.
    pub fn is_mc(&self) -> bool {
        self.num_choices() == self.num_states
    }

    /// Every enabled choice of `state` is a self-loop.
    pub fn is_absorbing(&self, state: usize) -> bool {
        self.choices(state)
            .all(|c| self.targets(c) == [state])
    }

    pub fn state_set(&self, states: &[usize]) -> StateSet {
        StateSet::from_indices(self.num_states, states.iter().copied())
    }

    /// Successor states over all choices, possibly with repetitions.
    pub fn successors(&self, state: usize) -> impl Iterator<Item = usize> + '_ {
        let first = self.choice_starts[self.row_groups[state]];
        let last = self.choice_starts[self.row_groups[state + 1]];
        self.targets[first..last].iter().copied()
    }

    pub fn with_initial_state(mut self, state: usize) -> Result<Self, ModelError> {
        if state >= self.num_states {
            return Err(ModelError::InvalidInitialState(state));
        }
        self.initial_state = state;
        Ok(self)
    }

    /// Replaces all choice rewards. `rewards` is indexed by global choice.
    pub fn with_rewards(mut self, rewards: Vec<f64>) -> Result<Self, ModelError> {
        assert_eq!(rewards.len(), self.num_choices(), "one reward per choice");
        for s in 0..self.num_states {
            for c in self.choices(s) {
                if !rewards[c].is_finite() {
                    return Err(ModelError::InvalidReward {
                        state: s,
                        choice: c - self.row_groups[s],
                        value: rewards[c],
                    });
                }
            }
        }
        self.rewards = rewards;
        Ok(self)
    }

    pub fn with_label(mut self, name: &str, states: StateSet) -> Result<Self, ModelError> {
        if states.capacity() != self.num_states {
            return Err(ModelError::LabelCapacity(name.into()));
        }
        self.labels.insert(name.into(), states);
        Ok(self)
    }

    /// Back to raw rows, e.g. for writers or re-validation.
    pub fn to_raw(&self) -> RawModel {
        let rows = (0..self.num_states)
            .map(|s| {
                self.choices(s)
                    .map(|c| RawChoice {
                        entries: self.entries(c).collect(),
                        reward: self.rewards[c],
                        action: self.actions[c].clone(),
                    })
                    .collect()
            })
            .collect();
        RawModel {
            num_states: self.num_states,
            initial_state: self.initial_state,
            rows,
            labels: self.labels.clone(),
        }
    }
}

/// Programmatic model construction.
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    raw: RawModel,
}

impl ModelBuilder {
    pub fn new(num_states: usize) -> Self {
        ModelBuilder {
            raw: RawModel {
                num_states,
                initial_state: 0,
                rows: vec![Vec::new(); num_states],
                labels: BTreeMap::new(),
            },
        }
    }

    /// Appends a choice to `state` and returns its local index.
    pub fn choice(&mut self, state: usize, entries: &[(usize, f64)]) -> usize {
        self.raw.rows[state].push(RawChoice::new(entries.to_vec()));
        self.raw.rows[state].len() - 1
    }

    pub fn choice_with_reward(&mut self, state: usize, entries: &[(usize, f64)], reward: f64) -> usize {
        let c = self.choice(state, entries);
        self.raw.rows[state][c].reward = reward;
        c
    }

    pub fn action(&mut self, state: usize, name: &str) -> usize {
        let row = &mut self.raw.rows[state];
        let last = row.len() - 1;
        row[last].action = Some(name.into());
        last
    }

    pub fn initial(&mut self, state: usize) -> &mut Self {
        self.raw.initial_state = state;
        self
    }

    pub fn label(&mut self, name: &str, states: &[usize]) -> &mut Self {
        let set = StateSet::from_indices(self.raw.num_states, states.iter().copied());
        self.raw.labels.insert(name.into(), set);
        self
    }

    pub fn build(self) -> Result<SparseModel, ModelError> {
        validate_model(self.raw)
    }
}

/// A positional scheduler: one local choice index per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scheduler {
    choice_of: Vec<usize>,
}

impl Scheduler {
    pub fn new(choice_of: Vec<usize>) -> Self {
        Scheduler { choice_of }
    }

    /// Picks the first choice everywhere; the only scheduler of an MC.
    pub fn first_choice(model: &SparseModel) -> Self {
        Scheduler {
            choice_of: vec![0; model.num_states()],
        }
    }

    #[inline]
    pub fn choice_of(&self, state: usize) -> usize {
        self.choice_of[state]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.choice_of
    }

    pub fn set(&mut self, state: usize, choice: usize) {
        self.choice_of[state] = choice;
    }
}

/// `S = S₀ ∪ G ∪ S?` with all three blocks pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub s0: StateSet,
    pub goal: StateSet,
    pub maybe: StateSet,
}

impl Partition {
    /// Builds the partition with `maybe` as the remainder. Goal states must
    /// be absorbing.
    pub fn new(model: &SparseModel, s0: StateSet, goal: StateSet) -> Result<Self, ModelError> {
        if let Some(s) = s0.intersection(&goal).iter().next() {
            return Err(ModelError::OverlappingPartition(s));
        }
        if let Some(s) = goal.iter().find(|&s| !model.is_absorbing(s)) {
            return Err(ModelError::GoalNotAbsorbing(s));
        }
        let maybe = s0.union(&goal).complement();
        Ok(Partition { s0, goal, maybe })
    }
}

/// Replaces the row group of every listed state by a single self-loop with
/// probability 1 and reward 0.
pub fn make_absorbing(model: &SparseModel, states: &StateSet) -> SparseModel {
    if states.iter().all(|s| {
        model.num_choices_of(s) == 1 && model.is_absorbing(s) && model.reward(model.choices(s).start) == 0.0
    }) {
        return model.clone();
    }
    let mut raw = model.to_raw();
    for s in states.iter() {
        raw.rows[s] = vec![RawChoice::new(vec![(s, 1.0)])];
    }
    validate_model(raw).expect("absorbing rows keep the model valid")
}

/// The Markov chain obtained by fixing `scheduler`'s choice in every state.
pub fn induce_mc(model: &SparseModel, scheduler: &Scheduler) -> Result<SparseModel, ModelError> {
    let mut raw = model.to_raw();
    for (s, row) in raw.rows.iter_mut().enumerate() {
        let c = scheduler.choice_of.get(s).copied().unwrap_or(usize::MAX);
        if c >= row.len() {
            return Err(ModelError::InvalidChoiceIndex {
                state: s,
                choice: c,
                available: row.len(),
            });
        }
        let keep = row.swap_remove(c);
        *row = vec![keep];
    }
    validate_model(raw)
}

#[cfg(test)]
pub(crate) mod fixtures {
    //! The small example models used across unit tests.
    use super::*;

    /// Five-state MC: s0 loops with 0.99, s2 exits to the goal s4 with 0.3
    /// and to the sink s3 with 0.1.
    pub fn leaky_mc() -> SparseModel {
        let mut b = ModelBuilder::new(5);
        b.choice(0, &[(1, 0.01), (0, 0.99)]);
        b.choice(1, &[(2, 0.01), (0, 0.99)]);
        b.choice(2, &[(4, 0.3), (3, 0.1), (0, 0.6)]);
        b.choice(3, &[(3, 1.0)]);
        b.choice(4, &[(4, 1.0)]);
        b.label("init", &[0]).label("goal", &[4]);
        b.build().unwrap()
    }

    /// The MDP variant: s0 additionally offers β = {s3: 0.2, s2: 0.8}.
    pub fn leaky_mdp() -> SparseModel {
        let mut b = ModelBuilder::new(5);
        b.choice(0, &[(1, 0.01), (0, 0.99)]);
        b.action(0, "alpha");
        b.choice(0, &[(3, 0.2), (2, 0.8)]);
        b.action(0, "beta");
        b.choice(1, &[(2, 0.01), (0, 0.99)]);
        b.choice(2, &[(4, 0.3), (3, 0.1), (0, 0.6)]);
        b.choice(3, &[(3, 1.0)]);
        b.choice(4, &[(4, 1.0)]);
        b.label("init", &[0]).label("goal", &[4]);
        b.build().unwrap()
    }

    /// Seven-state MDP whose optimal choice at s0 flips as bounds tighten.
    pub fn decision_mdp() -> SparseModel {
        let mut b = ModelBuilder::new(7);
        b.choice(0, &[(1, 0.8), (6, 0.2)]);
        b.action(0, "alpha");
        b.choice(0, &[(0, 0.4), (3, 0.3), (5, 0.3)]);
        b.action(0, "beta");
        b.choice(1, &[(2, 0.9), (4, 0.1)]);
        b.choice(2, &[(4, 0.1), (6, 0.9)]);
        for s in 3..7 {
            b.choice(s, &[(s, 1.0)]);
        }
        b.label("init", &[0]).label("goal", &[3, 4]);
        b.build().unwrap()
    }
}
