//! Black-box model abstraction, trajectories, goal compilation and foil
//! classification.

use std::fmt::Debug;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Index of an action inside a model's finite action set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

/// Result of one simulated step. `next == None` is the absorber failure
/// state: nothing is ever simulated from it.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionOutcome<S> {
    pub next: Option<S>,
    pub cost: f64,
}

impl<S> TransitionOutcome<S> {
    pub fn live(next: S, cost: f64) -> Self {
        Self {
            next: Some(next),
            cost,
        }
    }

    pub fn failure(cost: f64) -> Self {
        Self { next: None, cost }
    }

    pub fn is_failure(&self) -> bool {
        self.next.is_none()
    }
}

/// An opaque deterministic transition system with costs.
///
/// Implementations must be pure: the same `(state, action)` always yields the
/// same outcome.
pub trait BlackBoxModel {
    type State: Clone + Eq + Hash + Debug;

    fn action_count(&self) -> usize;

    fn action_label(&self, action: ActionId) -> &str;

    fn simulate(&self, state: &Self::State, action: ActionId) -> Result<TransitionOutcome<Self::State>>;

    fn is_goal(&self, state: &Self::State) -> bool;

    fn actions(&self) -> Vec<ActionId> {
        (0..self.action_count()).map(ActionId).collect()
    }

    fn action_by_label(&self, label: &str) -> Option<ActionId> {
        self.actions().into_iter().find(|a| self.action_label(*a) == label)
    }
}

impl<M: BlackBoxModel + ?Sized> BlackBoxModel for &M {
    type State = M::State;

    fn action_count(&self) -> usize {
        (**self).action_count()
    }

    fn action_label(&self, action: ActionId) -> &str {
        (**self).action_label(action)
    }

    fn simulate(&self, state: &Self::State, action: ActionId) -> Result<TransitionOutcome<Self::State>> {
        (**self).simulate(state, action)
    }

    fn is_goal(&self, state: &Self::State) -> bool {
        (**self).is_goal(state)
    }
}

pub fn simulate<M: BlackBoxModel>(
    model: &M,
    state: &M::State,
    action: ActionId,
) -> Result<TransitionOutcome<M::State>> {
    model.simulate(state, action)
}

/// States visited by an action sequence. When `terminated_at` is set, the
/// action at that index produced the failure state and `states` stops at the
/// last live state.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<S> {
    pub states: Vec<S>,
    pub actions: Vec<ActionId>,
    pub costs: Vec<f64>,
    pub terminated_at: Option<usize>,
}

impl<S> Trajectory<S> {
    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }

    pub fn is_valid(&self) -> bool {
        self.terminated_at.is_none()
    }

    pub fn last_state(&self) -> &S {
        self.states.last().expect("trajectory always holds the initial state")
    }
}

pub fn execute_sequence<M: BlackBoxModel>(
    model: &M,
    initial: &M::State,
    actions: &[ActionId],
) -> Result<Trajectory<M::State>> {
    let mut states = vec![initial.clone()];
    let mut costs = Vec::with_capacity(actions.len());
    let mut terminated_at = None;
    for (i, &a) in actions.iter().enumerate() {
        let out = model.simulate(states.last().unwrap(), a)?;
        costs.push(out.cost);
        match out.next {
            Some(s) => states.push(s),
            None => {
                terminated_at = Some(i);
                break;
            }
        }
    }
    Ok(Trajectory {
        states,
        actions: actions.to_vec(),
        costs,
        terminated_at,
    })
}

/// Label of the synthetic final action added by goal compilation.
pub const ACHIEVE_GOAL: &str = "achieve-goal";

/// State of a goal-compiled model: either a state of the wrapped model or
/// the end state reached by `achieve-goal` (remembering the goal state it was
/// entered from).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Compiled<S> {
    Live(S),
    End(S),
}

impl<S> Compiled<S> {
    pub fn inner(&self) -> &S {
        match self {
            Compiled::Live(s) | Compiled::End(s) => s,
        }
    }

    pub fn is_end(&self) -> bool {
        matches!(self, Compiled::End(_))
    }
}

/// Wraps a model with the `achieve-goal` action: from a goal state it moves
/// to the end state at cost 0, from any other state it fails. Every action
/// fails from the end state.
#[derive(Clone, Debug)]
pub struct GoalCompiled<M> {
    inner: M,
}

impl<M: BlackBoxModel> GoalCompiled<M> {
    pub fn new(inner: M) -> Self {
        Self { inner }
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    pub fn goal_action(&self) -> ActionId {
        ActionId(self.inner.action_count())
    }
}

impl<M: BlackBoxModel> BlackBoxModel for GoalCompiled<M> {
    type State = Compiled<M::State>;

    fn action_count(&self) -> usize {
        self.inner.action_count() + 1
    }

    fn action_label(&self, action: ActionId) -> &str {
        if action == self.goal_action() {
            ACHIEVE_GOAL
        } else {
            self.inner.action_label(action)
        }
    }

    fn simulate(&self, state: &Self::State, action: ActionId) -> Result<TransitionOutcome<Self::State>> {
        if action.0 > self.inner.action_count() {
            return Err(Error::UnknownAction(action.0));
        }
        let s = match state {
            Compiled::End(_) => return Ok(TransitionOutcome::failure(0.0)),
            Compiled::Live(s) => s,
        };
        if action == self.goal_action() {
            return Ok(if self.inner.is_goal(s) {
                TransitionOutcome::live(Compiled::End(s.clone()), 0.0)
            } else {
                TransitionOutcome::failure(0.0)
            });
        }
        let out = self.inner.simulate(s, action)?;
        Ok(TransitionOutcome {
            next: out.next.map(Compiled::Live),
            cost: out.cost,
        })
    }

    fn is_goal(&self, state: &Self::State) -> bool {
        state.is_end()
    }
}

/// The unit of dialogue: the agent's plan and the user's foil from a shared
/// initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveQuery<S> {
    pub initial: S,
    pub plan: Vec<ActionId>,
    pub foil: Vec<ActionId>,
}

impl<S: Clone> ContrastiveQuery<S> {
    pub fn new(initial: S, plan: Vec<ActionId>, foil: Vec<ActionId>) -> Result<Self> {
        if plan.is_empty() || foil.is_empty() {
            return Err(Error::Contract("plan and foil must be nonempty".into()));
        }
        Ok(Self { initial, plan, foil })
    }
}

/// Appends `achieve-goal` to plan and foil, lifting the query onto
/// `compiled`.
pub fn compile_goal_action<M: BlackBoxModel>(
    compiled: &GoalCompiled<M>,
    query: &ContrastiveQuery<M::State>,
) -> ContrastiveQuery<Compiled<M::State>> {
    let goal = compiled.goal_action();
    let mut plan = query.plan.clone();
    plan.push(goal);
    let mut foil = query.foil.clone();
    foil.push(goal);
    ContrastiveQuery {
        initial: Compiled::Live(query.initial.clone()),
        plan,
        foil,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum QueryKind<S> {
    InvalidFoil {
        fail_index: usize,
        fail_state: S,
        fail_action: ActionId,
    },
    CostlierFoil {
        plan_cost: f64,
        foil_cost: f64,
    },
    FoilPreferred {
        plan_cost: f64,
        foil_cost: f64,
    },
}

/// A classified query together with the goal-compiled trajectories it was
/// derived from.
#[derive(Clone, Debug)]
pub struct Classification<S> {
    pub kind: QueryKind<S>,
    pub plan: Trajectory<S>,
    pub foil: Trajectory<S>,
}

/// Classifies a query on an already goal-compiled query.
pub fn classify_compiled<M: BlackBoxModel>(
    compiled: &M,
    query: &ContrastiveQuery<M::State>,
) -> Result<Classification<M::State>> {
    let plan = execute_sequence(compiled, &query.initial, &query.plan)?;
    if let Some(i) = plan.terminated_at {
        return Err(Error::InvalidPlan(format!(
            "plan fails at step {i} ({})",
            compiled.action_label(plan.actions[i])
        )));
    }
    let foil = execute_sequence(compiled, &query.initial, &query.foil)?;
    let plan_cost = plan.total_cost();
    let foil_cost = foil.total_cost();
    let kind = match foil.terminated_at {
        Some(i) => QueryKind::InvalidFoil {
            fail_index: i,
            fail_state: foil.states[i].clone(),
            fail_action: foil.actions[i],
        },
        None if foil_cost > plan_cost => QueryKind::CostlierFoil { plan_cost, foil_cost },
        None => QueryKind::FoilPreferred { plan_cost, foil_cost },
    };
    Ok(Classification { kind, plan, foil })
}

/// Compiles the goal action into the query and classifies the foil.
pub fn classify_query<M: BlackBoxModel>(
    model: &M,
    query: &ContrastiveQuery<M::State>,
) -> Result<QueryKind<Compiled<M::State>>> {
    let compiled = GoalCompiled::new(model);
    let q = compile_goal_action(&compiled, query);
    Ok(classify_compiled(&compiled, &q)?.kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Counter on 0..=4; `inc` fails at 4, `dec` fails at 0, `noop` always
    /// succeeds. Goal is 3.
    struct Counter;

    impl BlackBoxModel for Counter {
        type State = u8;
        fn action_count(&self) -> usize {
            3
        }
        fn action_label(&self, a: ActionId) -> &str {
            ["inc", "dec", "noop"][a.0]
        }
        fn simulate(&self, s: &u8, a: ActionId) -> Result<TransitionOutcome<u8>> {
            Ok(match a.0 {
                0 if *s < 4 => TransitionOutcome::live(s + 1, 1.0),
                1 if *s > 0 => TransitionOutcome::live(s - 1, 2.0),
                2 => TransitionOutcome::live(*s, 1.0),
                0 | 1 => TransitionOutcome::failure(1.0),
                n => return Err(Error::UnknownAction(n)),
            })
        }
        fn is_goal(&self, s: &u8) -> bool {
            *s == 3
        }
    }

    const INC: ActionId = ActionId(0);
    const DEC: ActionId = ActionId(1);
    const NOOP: ActionId = ActionId(2);

    #[test]
    fn empty_sequence_is_single_state() {
        let t = execute_sequence(&Counter, &0, &[]).unwrap();
        assert_eq!(t.states, vec![0]);
        assert_eq!(t.total_cost(), 0.0);
        assert!(t.is_valid());
    }

    #[test]
    fn failing_third_action() {
        let t = execute_sequence(&Counter, &0, &[INC, DEC, DEC, INC]).unwrap();
        assert_eq!(t.terminated_at, Some(2));
        assert_eq!(t.states.len(), 3);
        // failing step's cost is included, nothing after it
        assert_eq!(t.total_cost(), 1.0 + 2.0 + 1.0);
    }

    #[test]
    fn unknown_action_is_error() {
        assert_eq!(Counter.simulate(&0, ActionId(9)), Err(Error::UnknownAction(9)));
        let g = GoalCompiled::new(Counter);
        assert!(g.simulate(&Compiled::Live(0), ActionId(9)).is_err());
    }

    #[test]
    fn goal_action_semantics() {
        let g = GoalCompiled::new(Counter);
        let ga = g.goal_action();
        assert_eq!(g.action_label(ga), ACHIEVE_GOAL);
        let ok = g.simulate(&Compiled::Live(3), ga).unwrap();
        assert_eq!(ok, TransitionOutcome::live(Compiled::End(3), 0.0));
        assert!(g.simulate(&Compiled::Live(2), ga).unwrap().is_failure());
        for a in g.actions() {
            assert!(g.simulate(&Compiled::End(3), a).unwrap().is_failure());
        }
    }

    #[test]
    fn compiled_foil_failing_early_keeps_fail_index() {
        let q = ContrastiveQuery::new(0, vec![INC, INC, INC], vec![DEC, INC]).unwrap();
        match classify_query(&Counter, &q).unwrap() {
            QueryKind::InvalidFoil { fail_index, fail_state, fail_action } => {
                assert_eq!(fail_index, 0);
                assert_eq!(fail_state, Compiled::Live(0));
                assert_eq!(fail_action, DEC);
            }
            k => panic!("{k:?}"),
        }
    }

    #[test]
    fn foil_ending_off_goal_fails_at_goal_action() {
        let q = ContrastiveQuery::new(0, vec![INC, INC, INC], vec![INC, INC]).unwrap();
        match classify_query(&Counter, &q).unwrap() {
            QueryKind::InvalidFoil { fail_index, fail_action, .. } => {
                assert_eq!(fail_index, 2);
                assert_eq!(fail_action, ActionId(3));
            }
            k => panic!("{k:?}"),
        }
    }

    #[test]
    fn plan_at_goal_compiles_valid_with_same_cost() {
        let g = GoalCompiled::new(Counter);
        let q = ContrastiveQuery::new(0, vec![INC, INC, INC], vec![INC, INC, INC]).unwrap();
        let cq = compile_goal_action(&g, &q);
        let t = execute_sequence(&g, &cq.initial, &cq.plan).unwrap();
        assert!(t.is_valid());
        assert_eq!(t.total_cost(), 3.0);
    }

    #[test]
    fn identical_foil_is_preferred() {
        let q = ContrastiveQuery::new(0, vec![INC, INC, INC], vec![INC, INC, INC]).unwrap();
        assert_eq!(
            classify_query(&Counter, &q).unwrap(),
            QueryKind::FoilPreferred { plan_cost: 3.0, foil_cost: 3.0 }
        );
    }

    #[test]
    fn costlier_and_cheaper_foils() {
        let q = ContrastiveQuery::new(0, vec![INC, INC, INC], vec![INC, INC, INC, NOOP]).unwrap();
        assert_eq!(
            classify_query(&Counter, &q).unwrap(),
            QueryKind::CostlierFoil { plan_cost: 3.0, foil_cost: 4.0 }
        );
        let q = ContrastiveQuery::new(0, vec![INC, INC, INC, INC, DEC], vec![INC, INC, INC]).unwrap();
        assert!(matches!(classify_query(&Counter, &q).unwrap(), QueryKind::FoilPreferred { .. }));
    }

    #[test]
    fn invalid_plan_is_error() {
        let q = ContrastiveQuery::new(0, vec![DEC], vec![INC]).unwrap();
        assert!(matches!(classify_query(&Counter, &q), Err(Error::InvalidPlan(_))));
        let q = ContrastiveQuery::new(0, vec![INC], vec![INC]).unwrap();
        assert!(matches!(classify_query(&Counter, &q), Err(Error::InvalidPlan(_))));
    }

    #[test]
    fn empty_plan_or_foil_rejected() {
        assert!(ContrastiveQuery::new(0u8, vec![], vec![INC]).is_err());
        assert!(ContrastiveQuery::new(0u8, vec![INC], vec![]).is_err());
    }
}
