//! Qualitative precomputation and structural transformations.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::model::{validate_model, Partition, RawChoice, RawModel, SparseModel};
use crate::set::StateSet;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("end component contains goal state {0}")]
    MecContainsGoal(usize),
}

/// Predecessor lists in CSR form.
struct Predecessors {
    starts: Vec<usize>,
    preds: Vec<usize>,
}

impl Predecessors {
    fn new(model: &SparseModel) -> Self {
        let n = model.num_states();
        let mut counts = vec![0usize; n + 1];
        for s in 0..n {
            for t in model.successors(s) {
                counts[t + 1] += 1;
            }
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut preds = vec![0; counts[n]];
        for s in 0..n {
            for t in model.successors(s) {
                preds[fill[t]] = s;
                fill[t] += 1;
            }
        }
        Predecessors {
            starts: counts,
            preds,
        }
    }

    fn of(&self, s: usize) -> &[usize] {
        &self.preds[self.starts[s]..self.starts[s + 1]]
    }
}

/// States from which no scheduler reaches `goal`.
pub fn prob0_max(model: &SparseModel, goal: &StateSet) -> StateSet {
    let preds = Predecessors::new(model);
    let mut reach = goal.clone();
    let mut stack: Vec<usize> = goal.iter().collect();
    while let Some(t) = stack.pop() {
        for &p in preds.of(t) {
            if reach.insert(p) {
                stack.push(p);
            }
        }
    }
    reach.complement()
}

/// States from which some scheduler avoids `goal` with probability 1.
///
/// Greatest fixpoint: keep the non-goal states that have a choice whose
/// successors all stay in the kept set.
pub fn prob0_min(model: &SparseModel, goal: &StateSet) -> StateSet {
    let mut keep = goal.complement();
    loop {
        let mut changed = false;
        for s in keep.clone().iter() {
            let stays = model
                .choices(s)
                .any(|c| model.targets(c).iter().all(|&t| keep.contains(t)));
            if !stays {
                keep.remove(s);
                changed = true;
            }
        }
        if !changed {
            return keep;
        }
    }
}

/// One maximal end component: its states and, per state, the local
/// indices of the choices that stay inside it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mec {
    pub states: Vec<usize>,
    pub choices: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MecDecomposition {
    pub mecs: Vec<Mec>,
    /// MEC id per state, `None` outside every MEC.
    pub mec_of: Vec<Option<usize>>,
}

/// Maximal end components of the sub-MDP induced by `restrict`, where
/// choices that can leave `restrict` are dropped.
///
/// Repeated SCC decomposition with choice pruning until nothing changes.
pub fn mec_decompose(model: &SparseModel, restrict: &StateSet) -> MecDecomposition {
    let n = model.num_states();
    let mut alive = restrict.clone();
    let mut allowed: Vec<bool> = (0..model.num_choices()).map(|_| false).collect();
    for s in restrict.iter() {
        for c in model.choices(s) {
            allowed[c] = model.targets(c).iter().all(|&t| restrict.contains(t));
        }
    }

    let sccs = loop {
        for s in alive.clone().iter() {
            if !model.choices(s).any(|c| allowed[c]) {
                alive.remove(s);
            }
        }
        let sccs = tarjan(n, &alive, |s, out| {
            for c in model.choices(s).filter(|&c| allowed[c]) {
                out.extend(model.targets(c).iter().copied().filter(|&t| alive.contains(t)));
            }
        });
        let mut scc_of = vec![usize::MAX; n];
        for (i, scc) in sccs.iter().enumerate() {
            for &s in scc {
                scc_of[s] = i;
            }
        }
        let mut changed = false;
        for s in alive.iter() {
            for c in model.choices(s) {
                if allowed[c] && model.targets(c).iter().any(|&t| scc_of[t] != scc_of[s]) {
                    allowed[c] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break sccs;
        }
    };

    let mut mec_of = vec![None; n];
    let mut mecs = Vec::new();
    for mut states in sccs {
        if !states.iter().all(|&s| alive.contains(s)) {
            continue;
        }
        states.sort_unstable();
        let choices = states
            .iter()
            .map(|&s| {
                model
                    .choices(s)
                    .filter(|&c| allowed[c])
                    .map(|c| c - model.choices(s).start)
                    .collect()
            })
            .collect();
        for &s in &states {
            mec_of[s] = Some(mecs.len());
        }
        mecs.push(Mec { states, choices });
    }
    MecDecomposition { mecs, mec_of }
}

/// `true` iff every scheduler reaches `target` almost surely from every
/// state, i.e. no end component avoids `target`.
pub fn check_contracting(model: &SparseModel, target: &StateSet) -> bool {
    mec_decompose(model, &target.complement()).mecs.is_empty()
}

/// The end-component quotient of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientMap {
    pub model: SparseModel,
    /// Quotient state of every original state.
    pub state_map: Vec<usize>,
    /// The partition carried over to the quotient.
    pub partition: Partition,
}

impl QuotientMap {
    fn identity(model: &SparseModel, partition: &Partition) -> Self {
        QuotientMap {
            model: model.clone(),
            state_map: (0..model.num_states()).collect(),
            partition: partition.clone(),
        }
    }
}

/// Collapses every MEC inside `partition.maybe` into one fresh state whose
/// choices are the member choices with at least one successor outside the
/// MEC. Non-MEC states keep their relative order; MEC states are appended.
pub fn collapse_end_components(
    model: &SparseModel,
    partition: &Partition,
) -> Result<QuotientMap, GraphError> {
    let dec = mec_decompose(model, &partition.maybe);
    if dec.mecs.is_empty() {
        return Ok(QuotientMap::identity(model, partition));
    }
    for mec in &dec.mecs {
        if let Some(&s) = mec.states.iter().find(|&&s| partition.goal.contains(s)) {
            return Err(GraphError::MecContainsGoal(s));
        }
    }

    let n = model.num_states();
    let mut state_map = vec![0; n];
    let mut next = 0;
    for s in 0..n {
        if dec.mec_of[s].is_none() {
            state_map[s] = next;
            next += 1;
        }
    }
    let first_mec = next;
    for s in 0..n {
        if let Some(m) = dec.mec_of[s] {
            state_map[s] = first_mec + m;
        }
    }
    let qn = first_mec + dec.mecs.len();

    let redirect = |c: usize| -> RawChoice {
        RawChoice {
            entries: model.entries(c).map(|(t, p)| (state_map[t], p)).collect(),
            reward: model.reward(c),
            action: model.action(c).map(Into::into),
        }
    };
    let mut rows: Vec<Vec<RawChoice>> = vec![Vec::new(); qn];
    for s in 0..n {
        if dec.mec_of[s].is_none() {
            rows[state_map[s]] = model.choices(s).map(redirect).collect();
        }
    }
    let mut dead_mecs = Vec::new();
    for (m, mec) in dec.mecs.iter().enumerate() {
        let q = first_mec + m;
        for &s in &mec.states {
            for c in model.choices(s) {
                if model.targets(c).iter().any(|&t| dec.mec_of[t] != Some(m)) {
                    rows[q].push(redirect(c));
                }
            }
        }
        if rows[q].is_empty() {
            // no exit at all: the component can never reach the goal
            rows[q].push(RawChoice::new(vec![(q, 1.0)]));
            dead_mecs.push(q);
        }
    }

    let map_set = |set: &StateSet| StateSet::from_indices(qn, set.iter().map(|s| state_map[s]));
    let labels = model
        .labels()
        .iter()
        .map(|(k, v)| (k.clone(), map_set(v)))
        .collect();
    let quotient = validate_model(RawModel {
        num_states: qn,
        initial_state: state_map[model.initial_state()],
        rows,
        labels,
    })
    .expect("quotient of a valid model is valid");

    let mut s0 = map_set(&partition.s0);
    for q in dead_mecs {
        s0.insert(q);
    }
    let goal = map_set(&partition.goal);
    let partition = Partition::new(&quotient, s0, goal).expect("goal stays absorbing");
    Ok(QuotientMap {
        model: quotient,
        state_map,
        partition,
    })
}

/// SCCs in reverse topological order: every SCC comes after all SCCs it
/// can reach.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SccOrder {
    pub sccs: Vec<Vec<usize>>,
    /// SCC id per state (`usize::MAX` for states outside the decomposition).
    pub scc_of: Vec<usize>,
}

impl SccOrder {
    /// `true` if the SCC has a single state without a self-loop.
    pub fn is_trivial(&self, model: &SparseModel, id: usize) -> bool {
        let scc = &self.sccs[id];
        scc.len() == 1 && !model.successors(scc[0]).any(|t| t == scc[0])
    }
}

pub fn scc_order(model: &SparseModel) -> SccOrder {
    scc_order_within(model, &StateSet::full(model.num_states()))
}

/// SCC decomposition of the subgraph induced by `states`.
pub fn scc_order_within(model: &SparseModel, states: &StateSet) -> SccOrder {
    let n = model.num_states();
    let mut sccs = tarjan(n, states, |s, out| {
        out.extend(model.successors(s).filter(|&t| states.contains(t)));
    });
    let mut scc_of = vec![usize::MAX; n];
    for (i, scc) in sccs.iter_mut().enumerate() {
        scc.sort_unstable();
        for &s in scc.iter() {
            scc_of[s] = i;
        }
    }
    SccOrder { sccs, scc_of }
}

/// States reachable from `start` without leaving `within` (`start` included
/// if it lies in `within`).
pub fn reachable_within(model: &SparseModel, start: usize, within: &StateSet) -> StateSet {
    let mut seen = StateSet::new(model.num_states());
    if !within.contains(start) {
        return seen;
    }
    seen.insert(start);
    let mut stack = vec![start];
    while let Some(s) = stack.pop() {
        for t in model.successors(s) {
            if within.contains(t) && seen.insert(t) {
                stack.push(t);
            }
        }
    }
    seen
}

/// Iterative Tarjan over the nodes in `nodes`. `succ(s, out)` appends the
/// successors of `s`; they must lie in `nodes`. SCCs are emitted sinks
/// first.
fn tarjan(n: usize, nodes: &StateSet, mut succ: impl FnMut(usize, &mut Vec<usize>)) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut sccs = Vec::new();
    let mut counter = 0;
    // (node, successor list, position in list)
    let mut call: Vec<(usize, Vec<usize>, usize)> = Vec::new();

    for root in nodes.iter() {
        if index[root] != UNVISITED {
            continue;
        }
        let mut out = Vec::new();
        succ(root, &mut out);
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        call.push((root, out, 0));

        while let Some(frame) = call.last_mut() {
            let v = frame.0;
            if frame.2 < frame.1.len() {
                let w = frame.1[frame.2];
                frame.2 += 1;
                if index[w] == UNVISITED {
                    let mut out = Vec::new();
                    succ(w, &mut out);
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, out, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(parent) = call.last() {
                    low[parent.0] = low[parent.0].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut scc = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        scc.push(w);
                        if w == v {
                            break;
                        }
                    }
                    sccs.push(scc);
                }
            }
        }
    }
    sccs
}
