use std::sync::Arc;

use super::{Cell, GridState, GridWorld};
use crate::concepts::Detector;
use crate::model::{ActionId, TransitionOutcome};

const STEP: f64 = 1.0;
const ATTACK_HIT: f64 = 500.0;

// Action indices follow `KEY_QUEST_ACTIONS`.
const LEFT: usize = 0;
const RIGHT: usize = 1;
const UP: usize = 2;
const DOWN: usize = 3;
const JUMP_LEFT: usize = 4;
const JUMP_RIGHT: usize = 5;
const ATTACK: usize = 6;

fn climbable(c: Cell) -> bool {
    matches!(c, Cell::Ladder | Cell::Rope)
}

fn hazard(w: &GridWorld, s: &GridState, r: i32, c: i32) -> bool {
    w.cell_at(r, c) == Cell::Crab || (s.skull_alive && w.skull().is_some_and(|k| (k.0 as i32, k.1 as i32) == (r, c)))
}

fn to(s: &GridState, r: i32, c: i32) -> GridState {
    GridState {
        agent: (r as u8, c as u8),
        ..*s
    }
}

pub(super) fn step(w: &GridWorld, s: &GridState, a: ActionId) -> TransitionOutcome<GridState> {
    let fail = TransitionOutcome::failure(STEP);
    let here = w.cell(s.agent);
    let (r, c) = GridWorld::offset(s.agent, 0, 0);
    match a.0 {
        LEFT | RIGHT => {
            let dc = if a.0 == LEFT { -1 } else { 1 };
            let (tr, tc) = (r, c + dc);
            if climbable(here)
                || w.cell_at(tr, tc) == Cell::Wall
                || hazard(w, s, tr, tc)
                || !w.supported_at(tr, tc)
            {
                return fail;
            }
            TransitionOutcome::live(to(s, tr, tc), STEP)
        }
        UP => {
            let above = w.cell_at(r - 1, c);
            if !(climbable(here) || climbable(above)) || above == Cell::Wall || hazard(w, s, r - 1, c) {
                return fail;
            }
            if !w.supported_at(r - 1, c) {
                return fail;
            }
            TransitionOutcome::live(to(s, r - 1, c), STEP)
        }
        DOWN => {
            let below = w.cell_at(r + 1, c);
            if below == Cell::Wall || hazard(w, s, r + 1, c) {
                return fail;
            }
            if climbable(below) || (climbable(here) && w.supported_at(r + 1, c)) {
                TransitionOutcome::live(to(s, r + 1, c), STEP)
            } else {
                fail
            }
        }
        JUMP_LEFT | JUMP_RIGHT => {
            let dc = if a.0 == JUMP_LEFT { -1 } else { 1 };
            if here == Cell::Ladder || w.cell_at(r, c + dc) == Cell::Wall {
                return fail;
            }
            let (tr, tc) = (r, c + 2 * dc);
            if w.cell_at(tr, tc) == Cell::Wall || hazard(w, s, tr, tc) || !w.supported_at(tr, tc) {
                return fail;
            }
            TransitionOutcome::live(to(s, tr, tc), STEP)
        }
        ATTACK => {
            let adjacent = s.skull_alive
                && w.skull().is_some_and(|k| k.0 == s.agent.0 && (k.1 as i32 - c).abs() == 1);
            if adjacent {
                TransitionOutcome::live(
                    GridState {
                        skull_alive: false,
                        ..*s
                    },
                    ATTACK_HIT,
                )
            } else {
                TransitionOutcome::live(*s, STEP)
            }
        }
        _ => TransitionOutcome::live(*s, STEP),
    }
}

fn standing(w: &GridWorld, s: &GridState) -> bool {
    let (r, c) = GridWorld::offset(s.agent, 0, 0);
    matches!(w.cell_at(r + 1, c), Cell::Wall | Cell::Ladder)
}

fn on_ledge(w: &GridWorld, s: &GridState, dc: i32) -> bool {
    let (r, c) = GridWorld::offset(s.agent, 0, dc);
    !climbable(w.cell(s.agent)) && standing(w, s) && w.cell_at(r, c) != Cell::Wall && !w.supported_at(r, c)
}

fn skull_at(w: &GridWorld, s: &GridState, dc: i32) -> bool {
    let (r, c) = GridWorld::offset(s.agent, 0, dc);
    s.skull_alive && w.skull().is_some_and(|k| (k.0 as i32, k.1 as i32) == (r, c))
}

pub(super) fn base_detectors(w: &GridWorld) -> Vec<(String, String, Detector<GridState>)> {
    let mut out: Vec<(String, String, Detector<GridState>)> = Vec::new();
    let mut add = |name: &str, desc: &str, d: Detector<GridState>| out.push((name.into(), desc.into(), d));
    let wc = w.clone();
    add("on_rope", "the agent hangs on a rope", Arc::new(move |s| wc.cell(s.agent) == Cell::Rope));
    let wc = w.clone();
    add("on_ladder", "the agent is on a ladder", Arc::new(move |s| wc.cell(s.agent) == Cell::Ladder));
    let wc = w.clone();
    add(
        "on_left_ledge",
        "the agent stands at a ledge with a drop to its left",
        Arc::new(move |s| on_ledge(&wc, s, -1)),
    );
    let wc = w.clone();
    add(
        "on_right_ledge",
        "the agent stands at a ledge with a drop to its right",
        Arc::new(move |s| on_ledge(&wc, s, 1)),
    );
    let wc = w.clone();
    add("skull_on_left", "a live skull is directly left of the agent", Arc::new(move |s| skull_at(&wc, s, -1)));
    let wc = w.clone();
    add("skull_on_right", "a live skull is directly right of the agent", Arc::new(move |s| skull_at(&wc, s, 1)));
    let wc = w.clone();
    add(
        "wall_on_left",
        "a wall is directly left of the agent",
        Arc::new(move |s| {
            let (r, c) = GridWorld::offset(s.agent, 0, -1);
            wc.cell_at(r, c) == Cell::Wall
        }),
    );
    let wc = w.clone();
    add(
        "wall_on_right",
        "a wall is directly right of the agent",
        Arc::new(move |s| {
            let (r, c) = GridWorld::offset(s.agent, 0, 1);
            wc.cell_at(r, c) == Cell::Wall
        }),
    );
    add("skull_alive", "a skull is still alive on the screen", Arc::new(|s| s.skull_alive));
    let wc = w.clone();
    add(
        "is_clear_down_of_crab",
        "no crab is directly below the agent",
        Arc::new(move |s| {
            let (r, c) = GridWorld::offset(s.agent, 1, 0);
            wc.cell_at(r, c) != Cell::Crab
        }),
    );
    out
}
