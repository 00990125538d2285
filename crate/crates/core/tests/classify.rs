use foilscope::env::{GridState, GridWorld};
use foilscope::model::{
    classify_query, compile_goal_action, execute_sequence, ActionId, BlackBoxModel, Compiled, ContrastiveQuery,
    GoalCompiled, QueryKind,
};
use foilscope::Error;
use proptest::prelude::*;

// Box one push away from the target; the plan is move-down, push-right.
const GRID: &str = "variant: sokoban-cell\n#####\n#@..#\n#.$T#\n#.P.#\n#####\n";

fn world() -> GridWorld {
    GridWorld::parse(GRID).unwrap()
}

fn plan(w: &GridWorld) -> Vec<ActionId> {
    vec![w.action_by_label("move-down").unwrap(), w.action_by_label("push-right").unwrap()]
}

enum Expected {
    Invalid(usize, GridState),
    Costlier(f64, f64),
    Preferred(f64, f64),
}

/// Step-by-step re-simulation, independent of goal compilation.
fn expected(w: &GridWorld, foil: &[ActionId], plan_cost: f64) -> Expected {
    let mut s = w.initial_state();
    let mut cost = 0.0;
    for (i, &a) in foil.iter().enumerate() {
        let out = w.simulate(&s, a).unwrap();
        cost += out.cost;
        match out.next {
            Some(n) => s = n,
            None => return Expected::Invalid(i, s),
        }
    }
    if !w.is_goal(&s) {
        Expected::Invalid(foil.len(), s)
    } else if cost > plan_cost {
        Expected::Costlier(plan_cost, cost)
    } else {
        Expected::Preferred(plan_cost, cost)
    }
}

fn all_foils(n_actions: usize, max_len: usize) -> Vec<Vec<ActionId>> {
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<ActionId>> = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for f in &frontier {
            for a in 0..n_actions {
                let mut g = f.clone();
                g.push(ActionId(a));
                next.push(g);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[test]
fn trichotomy_over_all_short_foils() {
    let w = world();
    let p = plan(&w);
    let plan_cost = execute_sequence(&w, &w.initial_state(), &p).unwrap().total_cost();
    let (mut inv, mut cost, mut pref) = (0, 0, 0);
    for foil in all_foils(w.action_count(), 4) {
        let q = ContrastiveQuery::new(w.initial_state(), p.clone(), foil.clone()).unwrap();
        let got = classify_query(&w, &q).unwrap();
        match (expected(&w, &foil, plan_cost), got) {
            (Expected::Invalid(i, s), QueryKind::InvalidFoil { fail_index, fail_state, .. }) => {
                assert_eq!(fail_index, i, "{foil:?}");
                assert_eq!(fail_state, Compiled::Live(s));
                inv += 1;
            }
            (Expected::Costlier(a, b), QueryKind::CostlierFoil { plan_cost, foil_cost }) => {
                assert_eq!((plan_cost, foil_cost), (a, b));
                assert!(foil_cost > plan_cost);
                cost += 1;
            }
            (Expected::Preferred(a, b), QueryKind::FoilPreferred { plan_cost, foil_cost }) => {
                assert_eq!((plan_cost, foil_cost), (a, b));
                assert!(foil_cost <= plan_cost);
                pref += 1;
            }
            (_, got) => panic!("{foil:?} classified as {got:?}"),
        }
    }
    assert!(inv > 0 && cost > 0 && pref > 0, "{inv} {cost} {pref}");
}

#[test]
fn goal_compilation_examples() {
    let w = world();
    let p = plan(&w);
    let compiled = GoalCompiled::new(&w);
    let noop = w.action_by_label("noop").unwrap();
    let up = w.action_by_label("move-up").unwrap();

    // foil ending outside the goal fails on the goal action
    let q = ContrastiveQuery::new(w.initial_state(), p.clone(), vec![noop]).unwrap();
    let cq = compile_goal_action(&compiled, &q);
    assert_eq!(cq.foil.last(), Some(&compiled.goal_action()));
    let t = execute_sequence(&compiled, &cq.initial, &cq.foil).unwrap();
    assert_eq!(t.terminated_at, Some(1));

    // plan cost unchanged by the zero-cost goal action
    let raw = execute_sequence(&w, &w.initial_state(), &p).unwrap();
    let t = execute_sequence(&compiled, &cq.initial, &cq.plan).unwrap();
    assert!(t.is_valid() && t.last_state().is_end());
    assert_eq!(t.total_cost(), raw.total_cost());

    // an early failure is kept
    let q = ContrastiveQuery::new(w.initial_state(), p.clone(), vec![up, noop]).unwrap();
    match classify_query(&w, &q).unwrap() {
        QueryKind::InvalidFoil { fail_index, .. } => assert_eq!(fail_index, 0),
        other => panic!("{other:?}"),
    }

    // foil identical to plan
    let q = ContrastiveQuery::new(w.initial_state(), p.clone(), p.clone()).unwrap();
    assert!(matches!(classify_query(&w, &q).unwrap(), QueryKind::FoilPreferred { plan_cost, foil_cost } if plan_cost == foil_cost));
}

#[test]
fn invalid_plan_and_empty_sequences_are_rejected() {
    let w = world();
    let up = w.action_by_label("move-up").unwrap();
    let q = ContrastiveQuery::new(w.initial_state(), vec![up], vec![up]).unwrap();
    assert!(matches!(classify_query(&w, &q), Err(Error::InvalidPlan(_))));
    assert!(ContrastiveQuery::new(w.initial_state(), vec![], vec![up]).is_err());
    assert!(ContrastiveQuery::new(w.initial_state(), vec![up], vec![]).is_err());
    assert!(matches!(w.simulate(&w.initial_state(), ActionId(99)), Err(Error::UnknownAction(99))));
}

#[test]
fn execute_sequence_examples() {
    let w = world();
    let t = execute_sequence(&w, &w.initial_state(), &[]).unwrap();
    assert_eq!((t.states.len(), t.total_cost()), (1, 0.0));
    let a = |l: &str| w.action_by_label(l).unwrap();
    let t = execute_sequence(&w, &w.initial_state(), &[a("move-right"), a("noop"), a("move-up"), a("noop")]).unwrap();
    assert_eq!(t.terminated_at, Some(2));
    assert_eq!(t.states.len(), 3);
    assert_eq!(t.total_cost(), 3.0);
}

proptest! {
    #[test]
    fn execution_is_deterministic_additive_and_absorbing(foil in prop::collection::vec(0usize..9, 0..12)) {
        let w = world();
        let acts: Vec<ActionId> = foil.into_iter().map(ActionId).collect();
        let t1 = execute_sequence(&w, &w.initial_state(), &acts).unwrap();
        let t2 = execute_sequence(&w, &w.initial_state(), &acts).unwrap();
        prop_assert_eq!(&t1, &t2);
        let mut sum = 0.0;
        for (i, s) in t1.states.iter().enumerate().take(t1.costs.len()) {
            let out = w.simulate(s, acts[i]).unwrap();
            sum += out.cost;
            prop_assert_eq!(out.next.as_ref(), t1.states.get(i + 1));
        }
        prop_assert_eq!(sum, t1.total_cost());
        if let Some(k) = t1.terminated_at {
            prop_assert_eq!(t1.states.len(), k + 1);
            prop_assert_eq!(t1.costs.len(), k + 1);
            // extending a failed sequence never extends its trajectory
            let mut longer = acts.clone();
            longer.push(ActionId(8));
            let t3 = execute_sequence(&w, &w.initial_state(), &longer).unwrap();
            prop_assert_eq!(&t3.states, &t1.states);
        }
        let compiled = GoalCompiled::new(&w);
        let end = Compiled::End(*t1.last_state());
        for a in compiled.actions() {
            let out = compiled.simulate(&end, a).unwrap();
            prop_assert!(out.next.is_none());
        }
    }
}
