use std::sync::Arc;

use super::{Cell, GridState, GridWorld, Pos, Variant};
use crate::concepts::Detector;
use crate::model::{ActionId, TransitionOutcome};

const STEP: f64 = 1.0;
const EXPENSIVE: f64 = 10.0;

pub(super) const DIRS: [(&str, i32, i32); 4] = [("up", -1, 0), ("down", 1, 0), ("left", 0, -1), ("right", 0, 1)];

fn shift(p: Pos, dr: i32, dc: i32) -> Pos {
    ((p.0 as i32 + dr) as u8, (p.1 as i32 + dc) as u8)
}

pub(super) fn step(w: &GridWorld, s: &GridState, a: ActionId) -> TransitionOutcome<GridState> {
    if a.0 == 8 {
        return TransitionOutcome::live(*s, STEP);
    }
    let (_, dr, dc) = DIRS[a.0 % 4];
    let (tr, tc) = GridWorld::offset(s.agent, dr, dc);
    if w.cell_at(tr, tc) == Cell::Wall {
        return TransitionOutcome::failure(STEP);
    }
    let t = (tr as u8, tc as u8);
    let toggle = |on: bool, p: Pos| on ^ (w.cell(p) == Cell::Switch);
    if a.0 < 4 {
        if s.box_pos == Some(t) {
            return TransitionOutcome::failure(STEP);
        }
        let next = GridState {
            agent: t,
            switch_on: toggle(s.switch_on, t),
            ..*s
        };
        return TransitionOutcome::live(next, STEP);
    }
    if s.box_pos != Some(t) {
        return TransitionOutcome::failure(STEP);
    }
    let (br, bc) = GridWorld::offset(t, dr, dc);
    if w.cell_at(br, bc) == Cell::Wall {
        return TransitionOutcome::failure(STEP);
    }
    let cost = match w.variant() {
        Variant::SokobanSwitchCost if !s.switch_on => EXPENSIVE,
        Variant::SokobanSwitchPrec if !s.switch_on => return TransitionOutcome::failure(STEP),
        Variant::SokobanCell if w.cell(s.agent) == Cell::Pink => EXPENSIVE,
        _ => STEP,
    };
    let next = GridState {
        agent: t,
        box_pos: Some(shift(t, dr, dc)),
        switch_on: toggle(s.switch_on, t),
        ..*s
    };
    TransitionOutcome::live(next, cost)
}

pub(super) fn base_detectors(w: &GridWorld) -> Vec<(String, String, Detector<GridState>)> {
    let mut out: Vec<(String, String, Detector<GridState>)> = Vec::new();
    let mut add = |name: &str, desc: &str, d: Detector<GridState>| out.push((name.to_string(), desc.to_string(), d));
    match w.variant() {
        Variant::SokobanCell => {
            let w1 = w.clone();
            add("on_pink_cell", "the agent stands on a pink cell", Arc::new(move |s| w1.cell(s.agent) == Cell::Pink));
        }
        _ => {
            add("switch_on", "the switch is on", Arc::new(|s| s.switch_on));
            let w1 = w.clone();
            add(
                "on_switch_cell",
                "the agent stands on the switch cell",
                Arc::new(move |s| w1.cell(s.agent) == Cell::Switch),
            );
        }
    }
    for (dir, dr, dc) in DIRS {
        let side = match dir {
            "up" => "above",
            "down" => "below",
            other => other,
        };
        add(
            &format!("box_{side}"),
            &format!("the box is directly {side} the agent"),
            Arc::new(move |s| {
                let (r, c) = GridWorld::offset(s.agent, dr, dc);
                s.box_pos.is_some_and(|b| (b.0 as i32, b.1 as i32) == (r, c))
            }),
        );
    }
    for (dir, dr, dc) in DIRS {
        let side = match dir {
            "up" => "above",
            "down" => "below",
            other => other,
        };
        let wc = w.clone();
        add(
            &format!("wall_{side}"),
            &format!("a wall is directly {side} the agent"),
            Arc::new(move |s| {
                let (r, c) = GridWorld::offset(s.agent, dr, dc);
                wc.cell_at(r, c) == Cell::Wall
            }),
        );
    }
    let target = w.target();
    add(
        "box_on_target",
        "the box rests on the target",
        Arc::new(move |s| s.box_pos.is_some() && s.box_pos == target),
    );
    out
}
