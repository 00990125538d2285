//! Brute-force reference machinery over small, fully enumerated regions.

use std::collections::{HashMap, HashSet, VecDeque};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::concepts::{ConceptId, ConceptVector, Vocabulary};
use crate::model::{ActionId, BlackBoxModel};
use crate::{Error, Result};

pub const DEFAULT_RADIUS: usize = 12;
pub const DEFAULT_STATE_CAP: usize = 100_000;

/// All live states within `radius` transitions of an anchor, in BFS order.
pub fn enumerate_local_states<M>(model: &M, anchors: &[M::State], radius: usize, cap: usize) -> Result<Vec<M::State>>
where
    M: BlackBoxModel,
    M::State: Hash + Eq,
{
    let mut seen: HashSet<M::State> = HashSet::new();
    let mut order = Vec::new();
    let mut queue = VecDeque::new();
    for a in anchors {
        if seen.insert(a.clone()) {
            order.push(a.clone());
            queue.push_back((a.clone(), 0));
        }
    }
    while let Some((s, d)) = queue.pop_front() {
        if d == radius {
            continue;
        }
        for a in model.actions() {
            if let Some(n) = model.simulate(&s, a)?.next {
                if seen.insert(n.clone()) {
                    if seen.len() > cap {
                        return Err(Error::StateCap(cap));
                    }
                    order.push(n.clone());
                    queue.push_back((n, d + 1));
                }
            }
        }
    }
    Ok(order)
}

/// Concepts true in every local state where `action` executes; `None` when
/// it executes nowhere.
pub fn true_preconditions<M: BlackBoxModel>(
    model: &M,
    action: ActionId,
    states: &[M::State],
    vocab: &Vocabulary<M::State>,
) -> Result<Option<Vec<ConceptId>>> {
    let mut acc: Option<ConceptVector> = None;
    for s in states {
        if !model.simulate(s, action)?.is_failure() {
            let cv = vocab.evaluate(s);
            acc = Some(match acc {
                None => cv,
                Some(a) => a.intersect(&cv),
            });
        }
    }
    Ok(acc.map(|a| a.iter_true().collect()))
}

/// Exact minimum cost of `action` over local executable states containing
/// `subset`.
pub fn true_abstract_cost<M: BlackBoxModel>(
    model: &M,
    subset: &[ConceptId],
    action: ActionId,
    states: &[M::State],
    vocab: &Vocabulary<M::State>,
) -> Result<Option<f64>> {
    let mut best: Option<f64> = None;
    for s in states {
        let out = model.simulate(s, action)?;
        if !out.is_failure() && vocab.evaluate(s).contains_all(subset) {
            best = Some(best.map_or(out.cost, |b: f64| b.min(out.cost)));
        }
    }
    Ok(best)
}

/// A model over concept maps.
pub trait SymbolicModel {
    /// `None` when the action is inapplicable; the inner `None` maps to the
    /// failure state.
    fn apply(&self, state: &ConceptVector, action: ActionId) -> Option<Option<ConceptVector>>;
    fn cost(&self, state: &ConceptVector, action: ActionId) -> Option<f64>;
    /// Concepts that characterise goal states.
    fn goal(&self) -> &ConceptVector;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    /// Transition agreement.
    A,
    /// Cost agreement.
    B,
    /// Goal agreement.
    C,
}

impl Condition {
    pub fn letter(self) -> char {
        match self {
            Condition::A => 'a',
            Condition::B => 'b',
            Condition::C => 'c',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Index into the checked state list; `None` for the goal condition.
    pub state: Option<usize>,
    pub action: Option<ActionId>,
    pub condition: Condition,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub states_checked: usize,
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that `symbolic` reproduces the transitions, costs and goal of
/// `model` on every given state under `vocab`.
pub fn verify_local_approximation<M: BlackBoxModel>(
    symbolic: &dyn SymbolicModel,
    model: &M,
    states: &[M::State],
    vocab: &Vocabulary<M::State>,
) -> Result<VerificationReport> {
    let mut report = VerificationReport {
        states_checked: states.len(),
        ..Default::default()
    };
    let mut goal_meet: Option<ConceptVector> = None;
    for (i, s) in states.iter().enumerate() {
        let cs = vocab.evaluate(s);
        if model.is_goal(s) {
            goal_meet = Some(match goal_meet {
                None => cs.clone(),
                Some(g) => g.intersect(&cs),
            });
        }
        for a in model.actions() {
            let out = model.simulate(s, a)?;
            let expected = out.next.as_ref().map(|n| vocab.evaluate(n));
            if symbolic.apply(&cs, a) != Some(expected) {
                report.violations.push(Violation {
                    state: Some(i),
                    action: Some(a),
                    condition: Condition::A,
                });
            }
            if symbolic.cost(&cs, a) != Some(out.cost) {
                report.violations.push(Violation {
                    state: Some(i),
                    action: Some(a),
                    condition: Condition::B,
                });
            }
        }
    }
    if let Some(g) = goal_meet {
        if &g != symbolic.goal() {
            report.violations.push(Violation {
                state: None,
                action: None,
                condition: Condition::C,
            });
        }
    }
    Ok(report)
}

/// A symbolic model given by an explicit table over concept maps.
#[derive(Clone, Debug, PartialEq)]
pub struct TableModel {
    pub transitions: HashMap<(ConceptVector, ActionId), (Option<ConceptVector>, f64)>,
    pub goal: ConceptVector,
}

impl SymbolicModel for TableModel {
    fn apply(&self, state: &ConceptVector, action: ActionId) -> Option<Option<ConceptVector>> {
        self.transitions.get(&(state.clone(), action)).map(|(n, _)| n.clone())
    }

    fn cost(&self, state: &ConceptVector, action: ActionId) -> Option<f64> {
        self.transitions.get(&(state.clone(), action)).map(|(_, c)| *c)
    }

    fn goal(&self) -> &ConceptVector {
        &self.goal
    }
}

impl TableModel {
    /// Runs a sequence symbolically from `start`: `Some((cost, final))`, or
    /// `None` if it fails or leaves the table.
    pub fn execute(&self, start: &ConceptVector, actions: &[ActionId]) -> Option<(f64, ConceptVector)> {
        let mut cur = start.clone();
        let mut total = 0.0;
        for &a in actions {
            let (next, cost) = self.transitions.get(&(cur.clone(), a))?;
            total += cost;
            cur = next.clone()?;
        }
        Some((total, cur))
    }

    pub fn is_goal(&self, state: &ConceptVector) -> bool {
        state.contains_all(&self.goal.iter_true().collect::<Vec<_>>())
    }
}

/// One indicator concept per local state plus the full transition table.
/// Unless the region holds exactly one goal state, an extra `is_goal_state`
/// concept carries the goal, since a conjunction of state indicators cannot
/// describe several goal states (or none).
pub fn construct_trivial_approximation<M>(model: &M, states: &[M::State]) -> Result<(Vocabulary<M::State>, TableModel)>
where
    M: BlackBoxModel + Clone + Send + Sync + 'static,
    M::State: PartialEq + Send + Sync + 'static,
{
    let mut vocab = Vocabulary::new();
    for (i, s) in states.iter().enumerate() {
        let s = s.clone();
        vocab.add_base(format!("is_state_{i}"), format!("the model is in local state {i}"), move |x: &M::State| {
            *x == s
        })?;
    }
    if states.iter().filter(|s| model.is_goal(s)).count() != 1 {
        let m = model.clone();
        vocab.add_base("is_goal_state", "the model is in a goal state", move |x: &M::State| m.is_goal(x))?;
    }
    let mut transitions = HashMap::new();
    let mut goal: Option<ConceptVector> = None;
    for s in states {
        let cs = vocab.evaluate(s);
        if model.is_goal(s) {
            goal = Some(match goal {
                None => cs.clone(),
                Some(g) => g.intersect(&cs),
            });
        }
        for a in model.actions() {
            let out = model.simulate(s, a)?;
            transitions.insert((cs.clone(), a), (out.next.as_ref().map(|n| vocab.evaluate(n)), out.cost));
        }
    }
    let goal = goal.unwrap_or_else(|| {
        let mut g = ConceptVector::new(vocab.len());
        if let Some(id) = vocab.find("is_goal_state") {
            g.set(id, true);
        }
        g
    });
    Ok((vocab, TableModel { transitions, goal }))
}

/// Valid, goal-reaching sequences of length ≤ `max_len` are compared pairwise
/// under the model and the symbolic table; returns the pairs whose
/// preference ordering differs.
pub fn preference_violations<M: BlackBoxModel>(
    model: &M,
    symbolic: &TableModel,
    vocab: &Vocabulary<M::State>,
    initial: &M::State,
    max_len: usize,
) -> Result<Vec<(Vec<ActionId>, Vec<ActionId>)>> {
    let mut seqs: Vec<Vec<ActionId>> = vec![vec![]];
    let mut frontier = seqs.clone();
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for a in model.actions() {
                let mut t = s.clone();
                t.push(a);
                next.push(t);
            }
        }
        seqs.extend(next.iter().cloned());
        frontier = next;
    }
    let start = vocab.evaluate(initial);
    let mut scored = Vec::with_capacity(seqs.len());
    for seq in seqs {
        let t = crate::model::execute_sequence(model, initial, &seq)?;
        let real = (t.is_valid() && model.is_goal(t.last_state())).then(|| t.total_cost());
        let sym = symbolic
            .execute(&start, &seq)
            .and_then(|(c, fin)| symbolic.is_goal(&fin).then_some(c));
        scored.push((seq, real, sym));
    }
    let mut bad = Vec::new();
    for i in 0..scored.len() {
        for j in 0..scored.len() {
            let (a, b) = (&scored[i], &scored[j]);
            let real_pref = matches!((a.1, b.1), (Some(x), Some(y)) if x <= y) || (a.1.is_some() && b.1.is_none());
            let sym_pref = matches!((a.2, b.2), (Some(x), Some(y)) if x <= y) || (a.2.is_some() && b.2.is_none());
            if real_pref != sym_pref {
                bad.push((a.0.clone(), b.0.clone()));
            }
        }
    }
    Ok(bad)
}

/// A factored sokoban-switch model written directly over positional
/// concepts (`agent_at_r_c`, `box_at_r_c`, `switch_on`), independent of the
/// grid simulator.
pub mod positional {
    use super::*;
    use crate::env::{Cell, GridState, GridWorld, Variant};

    pub struct PositionalSokoban {
        walls: HashSet<(i32, i32)>,
        switch: HashSet<(i32, i32)>,
        cells: Vec<(i32, i32)>,
        variant: Variant,
        goal: ConceptVector,
    }

    fn index(cells: &[(i32, i32)], p: (i32, i32)) -> Option<usize> {
        cells.iter().position(|&c| c == p)
    }

    /// Vocabulary and model for a sokoban-switch map.
    pub fn build(world: &GridWorld) -> (Vocabulary<GridState>, PositionalSokoban) {
        let mut cells = Vec::new();
        let mut walls = HashSet::new();
        let mut switch = HashSet::new();
        for r in 0..world.rows() as i32 {
            for c in 0..world.cols() as i32 {
                match world.cell_at(r, c) {
                    Cell::Wall => {
                        walls.insert((r, c));
                    }
                    Cell::Switch => {
                        switch.insert((r, c));
                        cells.push((r, c));
                    }
                    _ => cells.push((r, c)),
                }
            }
        }
        let mut v = Vocabulary::new();
        for &(r, c) in &cells {
            let p = (r as u8, c as u8);
            v.add_base(format!("agent_at_{r}_{c}"), "agent position", move |s: &GridState| s.agent == p)
                .unwrap();
        }
        for &(r, c) in &cells {
            let p = (r as u8, c as u8);
            v.add_base(format!("box_at_{r}_{c}"), "box position", move |s: &GridState| s.box_pos == Some(p))
                .unwrap();
        }
        v.add_base("switch_on", "the switch is on", |s: &GridState| s.switch_on).unwrap();
        let mut goal = ConceptVector::new(v.len());
        let t = world.target().expect("sokoban map");
        goal.set(ConceptId(cells.len() + index(&cells, (t.0 as i32, t.1 as i32)).unwrap()), true);
        (
            v,
            PositionalSokoban {
                walls,
                switch,
                cells,
                variant: world.variant(),
                goal,
            },
        )
    }

    type Decoded = ((i32, i32), (i32, i32), bool);

    impl PositionalSokoban {
        fn decode(&self, cv: &ConceptVector) -> Option<Decoded> {
            let n = self.cells.len();
            let agent = (0..n).find(|&i| cv.get(ConceptId(i)))?;
            let bx = (0..n).find(|&i| cv.get(ConceptId(n + i)))?;
            Some((self.cells[agent], self.cells[bx], cv.get(ConceptId(2 * n))))
        }

        fn encode(&self, agent: (i32, i32), bx: (i32, i32), on: bool) -> ConceptVector {
            let n = self.cells.len();
            let mut cv = ConceptVector::new(2 * n + 1);
            cv.set(ConceptId(index(&self.cells, agent).unwrap()), true);
            cv.set(ConceptId(n + index(&self.cells, bx).unwrap()), true);
            cv.set(ConceptId(2 * n), on);
            cv
        }

        fn step(&self, cv: &ConceptVector, a: ActionId) -> Option<(Option<ConceptVector>, f64)> {
            let (agent, bx, on) = self.decode(cv)?;
            if a.0 == 8 {
                return Some((Some(cv.clone()), 1.0));
            }
            let d = [(-1, 0), (1, 0), (0, -1), (0, 1)][a.0 % 4];
            let to = (agent.0 + d.0, agent.1 + d.1);
            let flip = |on: bool| on ^ self.switch.contains(&to);
            if a.0 < 4 {
                // move: the target cell must be free
                if self.walls.contains(&to) || to == bx {
                    return Some((None, 1.0));
                }
                return Some((Some(self.encode(to, bx, flip(on))), 1.0));
            }
            // push: box adjacent in the push direction, free cell beyond
            let beyond = (to.0 + d.0, to.1 + d.1);
            if to != bx || self.walls.contains(&beyond) {
                return Some((None, 1.0));
            }
            let cost = match (self.variant, on) {
                (Variant::SokobanSwitchPrec, false) => return Some((None, 1.0)),
                (Variant::SokobanSwitchCost, false) => 10.0,
                _ => 1.0,
            };
            Some((Some(self.encode(to, beyond, flip(on))), cost))
        }
    }

    impl SymbolicModel for PositionalSokoban {
        fn apply(&self, state: &ConceptVector, action: ActionId) -> Option<Option<ConceptVector>> {
            self.step(state, action).map(|(n, _)| n)
        }

        fn cost(&self, state: &ConceptVector, action: ActionId) -> Option<f64> {
            self.step(state, action).map(|(_, c)| c)
        }

        fn goal(&self) -> &ConceptVector {
            &self.goal
        }
    }
}
