//! Hand-derived ground truth for the bundled variants, used to score
//! explanations.

use super::{GridWorld, Variant};

/// A lower bound on an action's cost whenever all `concepts` hold.
#[derive(Clone, Debug, PartialEq)]
pub struct CostRule {
    pub action: &'static str,
    pub concepts: Vec<String>,
    pub min_cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// Every concept that necessarily holds whenever the action executes.
    pub preconditions: Vec<(&'static str, Vec<String>)>,
    pub cost_rules: Vec<CostRule>,
}

impl GroundTruth {
    pub fn preconditions_of(&self, action: &str) -> &[String] {
        self.preconditions
            .iter()
            .find(|(a, _)| *a == action)
            .map(|(_, c)| c.as_slice())
            .unwrap_or(&[])
    }

    pub fn is_precondition(&self, action: &str, concept: &str) -> bool {
        self.preconditions_of(action).iter().any(|c| c == concept)
    }

    /// Highest bound implied by the rules given the concepts present.
    pub fn cost_bound(&self, action: &str, present: &[&str]) -> f64 {
        self.cost_rules
            .iter()
            .filter(|r| r.action == action && r.concepts.iter().all(|c| present.contains(&c.as_str())))
            .map(|r| r.min_cost)
            .fold(1.0, f64::max)
    }
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn ground_truth(world: &GridWorld) -> GroundTruth {
    match world.variant() {
        Variant::KeyQuest => key_quest(),
        v => sokoban(v),
    }
}

fn sokoban(variant: Variant) -> GroundTruth {
    let sides = [("up", "above"), ("down", "below"), ("left", "left"), ("right", "right")];
    let mut pre = Vec::new();
    for (dir, side) in sides {
        let mv: &'static str = match dir {
            "up" => "move-up",
            "down" => "move-down",
            "left" => "move-left",
            _ => "move-right",
        };
        pre.push((mv, vec![format!("not_wall_{side}"), format!("not_box_{side}")]));
    }
    for (dir, side) in sides {
        let push: &'static str = match dir {
            "up" => "push-up",
            "down" => "push-down",
            "left" => "push-left",
            _ => "push-right",
        };
        let mut c = vec![format!("box_{side}"), format!("not_wall_{side}")];
        for (_, other) in sides.iter().filter(|(d, _)| *d != dir) {
            c.push(format!("not_box_{other}"));
        }
        if variant == Variant::SokobanSwitchPrec {
            c.push("switch_on".into());
        }
        pre.push((push, c));
    }
    let trigger = match variant {
        Variant::SokobanSwitchCost => Some("not_switch_on"),
        Variant::SokobanCell => Some("on_pink_cell"),
        _ => None,
    };
    let mut rules = Vec::new();
    if let Some(t) = trigger {
        for push in ["push-up", "push-down", "push-left", "push-right"] {
            rules.push(CostRule {
                action: push,
                concepts: names(&[t]),
                min_cost: 10.0,
            });
        }
    }
    GroundTruth {
        preconditions: pre,
        cost_rules: rules,
    }
}

fn key_quest() -> GroundTruth {
    let side = |a: &'static str, s: &str| {
        (
            a,
            vec![
                "not_on_rope".to_string(),
                "not_on_ladder".to_string(),
                format!("not_on_{s}_ledge"),
                format!("not_skull_on_{s}"),
                format!("not_wall_on_{s}"),
            ],
        )
    };
    GroundTruth {
        preconditions: vec![
            side("move-left", "left"),
            side("move-right", "right"),
            ("move-down", names(&["is_clear_down_of_crab"])),
            ("jump-left", names(&["not_on_ladder", "not_wall_on_left"])),
            ("jump-right", names(&["not_on_ladder", "not_wall_on_right"])),
        ],
        cost_rules: vec![
            CostRule {
                action: "attack",
                concepts: names(&["skull_on_left"]),
                min_cost: 500.0,
            },
            CostRule {
                action: "attack",
                concepts: names(&["skull_on_right"]),
                min_cost: 500.0,
            },
        ],
    }
}
