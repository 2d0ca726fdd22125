use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use super::{ground_actions, GroundAction, State};
use crate::pddl::{rebind_problem, Atom, Diagnostic, Domain, Problem};

pub type AtomId = u32;

/// Dense bitset over interned atom ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitState {
    words: Vec<u64>,
}

impl BitState {
    pub fn empty(n_atoms: usize) -> Self {
        BitState {
            words: vec![0; n_atoms.div_ceil(64)],
        }
    }

    pub fn contains(&self, id: AtomId) -> bool {
        let i = id as usize;
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn insert(&mut self, id: AtomId) {
        let i = id as usize;
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, id: AtomId) {
        let i = id as usize;
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn contains_all(&self, ids: &[AtomId]) -> bool {
        ids.iter().all(|&i| self.contains(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = AtomId> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &bits)| {
            (0..64u32)
                .filter(move |b| bits >> b & 1 == 1)
                .map(move |b| (w as u32) * 64 + b)
        })
    }
}

/// A ground action over interned ids. `del` excludes atoms in `add`.
#[derive(Debug, Clone)]
pub struct CompiledAction {
    pub ground: GroundAction,
    pub pre: Vec<AtomId>,
    pub add: Vec<AtomId>,
    pub del: Vec<AtomId>,
}

/// A grounded problem with interned atoms. `actions` keeps the
/// (name, args) order of [`ground_actions`].
#[derive(Debug, Clone)]
pub struct Task {
    pub atoms: Vec<Atom>,
    pub index: HashMap<Atom, AtomId>,
    pub actions: Vec<CompiledAction>,
    pub init: BitState,
    pub goal: Vec<AtomId>,
}

/// Exploration stopped after the given number of states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLimit(pub usize);

impl Task {
    pub fn compile(domain: &Domain, problem: &Problem, distinct_args: bool) -> Result<Task, Vec<Diagnostic>> {
        let bound = rebind_problem(problem, domain)?;
        let ground = ground_actions(domain, &bound, distinct_args)?;
        let mut atoms: Vec<Atom> = Vec::new();
        let mut index: HashMap<Atom, AtomId> = HashMap::new();
        let mut intern = |a: &Atom| -> AtomId {
            if let Some(&id) = index.get(a) {
                return id;
            }
            let id = atoms.len() as AtomId;
            atoms.push(a.clone());
            index.insert(a.clone(), id);
            id
        };
        let init_ids: Vec<AtomId> = bound.init.iter().map(&mut intern).collect();
        let goal: Vec<AtomId> = bound.goal.iter().map(&mut intern).collect();
        let actions: Vec<CompiledAction> = ground
            .into_iter()
            .map(|g| CompiledAction {
                pre: g.pre.iter().map(&mut intern).collect(),
                add: g.add.iter().map(&mut intern).collect(),
                del: g.del.iter().map(&mut intern).collect(),
                ground: g,
            })
            .collect();
        let mut init = BitState::empty(atoms.len());
        for id in init_ids {
            init.insert(id);
        }
        Ok(Task {
            atoms,
            index,
            actions,
            init,
            goal,
        })
    }

    pub fn applicable(&self, state: &BitState, action: usize) -> bool {
        state.contains_all(&self.actions[action].pre)
    }

    /// Successor under `action`; preconditions are not checked.
    pub fn apply(&self, state: &BitState, action: usize) -> BitState {
        let a = &self.actions[action];
        let mut next = state.clone();
        for &d in &a.del {
            next.remove(d);
        }
        for &x in &a.add {
            next.insert(x);
        }
        next
    }

    pub fn is_goal(&self, state: &BitState) -> bool {
        state.contains_all(&self.goal)
    }

    pub fn successors<'a>(&'a self, state: &'a BitState) -> impl Iterator<Item = (usize, BitState)> + 'a {
        (0..self.actions.len())
            .filter(move |&i| self.applicable(state, i))
            .map(move |i| (i, self.apply(state, i)))
    }

    pub fn to_state(&self, state: &BitState) -> State {
        State::new(state.ids().map(|i| self.atoms[i as usize].clone()))
    }

    pub fn atom_set(&self, ids: &[AtomId]) -> BTreeSet<Atom> {
        ids.iter().map(|&i| self.atoms[i as usize].clone()).collect()
    }

    /// All states reachable from `init`, or an error once more than `limit`
    /// states have been seen.
    pub fn reachable_states(&self, limit: usize) -> Result<Vec<BitState>, StateLimit> {
        let mut seen: HashSet<BitState> = HashSet::from([self.init.clone()]);
        let mut order = vec![self.init.clone()];
        let mut queue = VecDeque::from([self.init.clone()]);
        while let Some(s) = queue.pop_front() {
            for (_, next) in self.successors(&s) {
                if seen.insert(next.clone()) {
                    if seen.len() > limit {
                        return Err(StateLimit(limit));
                    }
                    order.push(next.clone());
                    queue.push_back(next);
                }
            }
        }
        Ok(order)
    }

    /// Indices of actions reachable under the delete relaxation.
    pub fn relaxed_reachable_actions(&self) -> Vec<usize> {
        let mut facts = self.init.clone();
        let mut done = vec![false; self.actions.len()];
        loop {
            let mut changed = false;
            for (i, a) in self.actions.iter().enumerate() {
                if !done[i] && facts.contains_all(&a.pre) {
                    done[i] = true;
                    changed = true;
                    for &x in &a.add {
                        facts.insert(x);
                    }
                }
            }
            if !changed {
                break;
            }
        }
        (0..self.actions.len()).filter(|&i| done[i]).collect()
    }
}
