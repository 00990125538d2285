//! Desk-scale deterministic grid environments.
//!
//! Map files start with a `variant: <tag>` header followed by a rectangular
//! grid:
//!
//! | glyph | meaning |
//! |-------|---------|
//! | `#` | wall / solid ground |
//! | `.` | open cell |
//! | `@` | agent start (open cell) |
//! | `$` | box start (sokoban) |
//! | `T` | box target (sokoban) |
//! | `G` | switch cell (sokoban-switch) |
//! | `P` | pink cell (sokoban-cell) |
//! | `K` | key (key-quest goal) |
//! | `S` | skull (key-quest) |
//! | `L` | ladder (key-quest) |
//! | `R` | rope (key-quest) |
//! | `E` | ledge-edge marker, behaves as an open cell (key-quest) |
//! | `C` | crab, a deadly cell (key-quest) |
//!
//! Plans and foils are text files holding one action mnemonic per line;
//! blank lines and `#` comments are ignored.

mod ground_truth;
mod keyquest;
mod random;
mod sokoban;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::concepts::{ObservationRates, Vocabulary};
use crate::model::{ActionId, BlackBoxModel, TransitionOutcome};
use crate::{Error, Result};

pub use ground_truth::{ground_truth, CostRule, GroundTruth};
pub use random::{random_sokoban, random_sokoban_text};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    SokobanSwitchPrec,
    SokobanSwitchCost,
    SokobanCell,
    KeyQuest,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::SokobanSwitchPrec,
        Variant::SokobanSwitchCost,
        Variant::SokobanCell,
        Variant::KeyQuest,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::SokobanSwitchPrec => "sokoban-switch-prec",
            Variant::SokobanSwitchCost => "sokoban-switch-cost",
            Variant::SokobanCell => "sokoban-cell",
            Variant::KeyQuest => "key-quest",
        }
    }

    pub fn is_sokoban(self) -> bool {
        !matches!(self, Variant::KeyQuest)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.tag() == s)
            .ok_or_else(|| Error::Contract(format!("unknown variant `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cell {
    Wall,
    Open,
    Target,
    Switch,
    Pink,
    Key,
    Ladder,
    Rope,
    Ledge,
    Crab,
}

pub type Pos = (u8, u8);

/// A concrete environment state. Fields irrelevant to a variant keep their
/// initial values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridState {
    pub agent: Pos,
    pub box_pos: Option<Pos>,
    pub switch_on: bool,
    pub skull_alive: bool,
}

/// A parsed map implementing [`BlackBoxModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridWorld {
    variant: Variant,
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    lines: Vec<String>,
    initial: GridState,
    target: Option<Pos>,
    skull: Option<Pos>,
}

pub const SOKOBAN_ACTIONS: [&str; 9] = [
    "move-up",
    "move-down",
    "move-left",
    "move-right",
    "push-up",
    "push-down",
    "push-left",
    "push-right",
    "noop",
];

pub const KEY_QUEST_ACTIONS: [&str; 8] = [
    "move-left",
    "move-right",
    "move-up",
    "move-down",
    "jump-left",
    "jump-right",
    "attack",
    "noop",
];

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::MapParse {
        line,
        column,
        message: message.into(),
    }
}

impl GridWorld {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or_else(|| parse_err(1, 1, "empty map"))?;
        let tag = header
            .trim()
            .strip_prefix("variant:")
            .ok_or_else(|| parse_err(hline + 1, 1, "expected `variant: <tag>` header"))?
            .trim();
        let variant: Variant = tag
            .parse()
            .map_err(|_| parse_err(hline + 1, 10, format!("unknown variant `{tag}`")))?;
        let rows: Vec<(usize, &str)> = lines.map(|(i, l)| (i + 1, l.trim_end())).collect();
        Self::from_rows(variant, &rows)
    }

    fn from_rows(variant: Variant, rows: &[(usize, &str)]) -> Result<Self> {
        if rows.is_empty() {
            return Err(parse_err(2, 1, "map has no rows"));
        }
        if rows.len() > 255 {
            return Err(parse_err(rows[255].0, 1, "map too tall"));
        }
        let cols = rows[0].1.chars().count();
        if cols == 0 || cols > 255 {
            return Err(parse_err(rows[0].0, 1, "row width must be between 1 and 255"));
        }
        let mut cells = Vec::with_capacity(rows.len() * cols);
        let (mut agent, mut boxp, mut target, mut skull) = (None, None, None, None);
        let mut keys = 0;
        for (r, &(line, text)) in rows.iter().enumerate() {
            let width = text.chars().count();
            if width != cols {
                return Err(parse_err(line, width.min(cols) + 1, format!("row has width {width}, expected {cols}")));
            }
            for (c, ch) in text.chars().enumerate() {
                let col = c + 1;
                let pos = (r as u8, c as u8);
                let sokoban_only = matches!(ch, '$' | 'T' | 'G' | 'P');
                let quest_only = matches!(ch, 'K' | 'S' | 'L' | 'R' | 'E' | 'C');
                if (sokoban_only && !variant.is_sokoban()) || (quest_only && variant.is_sokoban()) {
                    return Err(parse_err(line, col, format!("glyph `{ch}` not allowed in {variant}")));
                }
                let cell = match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Open,
                    '@' => {
                        if agent.replace(pos).is_some() {
                            return Err(parse_err(line, col, "more than one agent"));
                        }
                        Cell::Open
                    }
                    '$' => {
                        if boxp.replace(pos).is_some() {
                            return Err(parse_err(line, col, "more than one box"));
                        }
                        Cell::Open
                    }
                    'T' => {
                        if target.replace(pos).is_some() {
                            return Err(parse_err(line, col, "more than one target"));
                        }
                        Cell::Target
                    }
                    'G' => Cell::Switch,
                    'P' => Cell::Pink,
                    'K' => {
                        keys += 1;
                        Cell::Key
                    }
                    'S' => {
                        if skull.replace(pos).is_some() {
                            return Err(parse_err(line, col, "more than one skull"));
                        }
                        Cell::Open
                    }
                    'L' => Cell::Ladder,
                    'R' => Cell::Rope,
                    'E' => Cell::Ledge,
                    'C' => Cell::Crab,
                    other => return Err(parse_err(line, col, format!("unknown glyph `{other}`"))),
                };
                let boundary = r == 0 || r == rows.len() - 1 || c == 0 || c == cols - 1;
                if boundary && cell != Cell::Wall {
                    return Err(parse_err(line, col, "outer boundary must be wall"));
                }
                cells.push(cell);
            }
        }
        let last = rows.last().unwrap().0;
        let agent = agent.ok_or_else(|| parse_err(last, 1, "map has no agent `@`"))?;
        if variant.is_sokoban() {
            if boxp.is_none() {
                return Err(parse_err(last, 1, "sokoban map needs exactly one box `$`"));
            }
            if target.is_none() {
                return Err(parse_err(last, 1, "sokoban map needs exactly one target `T`"));
            }
        } else if keys == 0 {
            return Err(parse_err(last, 1, "key-quest map needs a key `K`"));
        }
        let world = GridWorld {
            variant,
            rows: rows.len(),
            cols,
            cells,
            lines: rows.iter().map(|(_, l)| l.to_string()).collect(),
            initial: GridState {
                agent,
                box_pos: boxp,
                switch_on: false,
                skull_alive: skull.is_some(),
            },
            target,
            skull,
        };
        if !variant.is_sokoban() && !world.supported(agent) {
            let (r, c) = agent;
            return Err(parse_err(rows[r as usize].0, c as usize + 1, "agent starts in mid-air"));
        }
        Ok(world)
    }

    /// Same layout under another variant tag with compatible glyphs.
    pub fn with_variant(&self, variant: Variant) -> Result<Self> {
        if variant.is_sokoban() != self.variant.is_sokoban() {
            return Err(Error::Contract(format!("cannot reinterpret {} as {variant}", self.variant)));
        }
        let mut w = self.clone();
        w.variant = variant;
        Ok(w)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// The grid rows as authored (without the header).
    pub fn grid_lines(&self) -> &[String] {
        &self.lines
    }

    pub fn initial_state(&self) -> GridState {
        self.initial
    }

    pub fn target(&self) -> Option<Pos> {
        self.target
    }

    pub fn skull(&self) -> Option<Pos> {
        self.skull
    }

    pub fn cell(&self, pos: Pos) -> Cell {
        self.cell_at(pos.0 as i32, pos.1 as i32)
    }

    pub(crate) fn cell_at(&self, r: i32, c: i32) -> Cell {
        if r < 0 || c < 0 || r as usize >= self.rows || c as usize >= self.cols {
            Cell::Wall
        } else {
            self.cells[r as usize * self.cols + c as usize]
        }
    }

    pub(crate) fn offset(pos: Pos, dr: i32, dc: i32) -> (i32, i32) {
        (pos.0 as i32 + dr, pos.1 as i32 + dc)
    }

    /// Whether an agent can rest in this cell without falling.
    pub(crate) fn supported(&self, pos: Pos) -> bool {
        self.supported_at(pos.0 as i32, pos.1 as i32)
    }

    pub(crate) fn supported_at(&self, r: i32, c: i32) -> bool {
        matches!(self.cell_at(r, c), Cell::Ladder | Cell::Rope)
            || matches!(self.cell_at(r + 1, c), Cell::Wall | Cell::Ladder)
    }

    pub fn action_labels(&self) -> &'static [&'static str] {
        if self.variant.is_sokoban() {
            &SOKOBAN_ACTIONS
        } else {
            &KEY_QUEST_ACTIONS
        }
    }

    /// Parses an action list file (one mnemonic per line).
    pub fn parse_actions(&self, text: &str) -> Result<Vec<ActionId>> {
        parse_action_list(self, text)
    }

    pub fn mnemonics(&self, actions: &[ActionId]) -> Vec<String> {
        actions.iter().map(|&a| self.action_label(a).to_string()).collect()
    }

    /// Base concept detectors with descriptions for this variant.
    pub fn base_detectors(&self) -> Vec<(String, String, crate::concepts::Detector<GridState>)> {
        if self.variant.is_sokoban() {
            sokoban::base_detectors(self)
        } else {
            keyquest::base_detectors(self)
        }
    }

    /// The bundled vocabulary: base concepts plus their negations.
    pub fn vocabulary(&self) -> Vocabulary<GridState> {
        let mut v = Vocabulary::new();
        for (name, desc, det) in self.base_detectors() {
            v.add_base_arc(name, desc, det).expect("detector names are unique");
        }
        v.extend_with_negations()
    }

    pub fn manifest(&self, rates: Option<ObservationRates>) -> crate::manifest::VocabularyManifest {
        crate::manifest::VocabularyManifest::from_vocabulary(&self.vocabulary(), rates)
    }

    /// Renders a state onto the grid using the map glyphs.
    pub fn render(&self, state: &GridState) -> Vec<String> {
        let mut out = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let mut line = String::with_capacity(self.cols);
            for c in 0..self.cols {
                let pos = (r as u8, c as u8);
                let ch = if state.agent == pos {
                    '@'
                } else if state.box_pos == Some(pos) {
                    '$'
                } else if state.skull_alive && self.skull == Some(pos) {
                    'S'
                } else {
                    match self.cell(pos) {
                        Cell::Wall => '#',
                        Cell::Open => '.',
                        Cell::Target => 'T',
                        Cell::Switch => 'G',
                        Cell::Pink => 'P',
                        Cell::Key => 'K',
                        Cell::Ladder => 'L',
                        Cell::Rope => 'R',
                        Cell::Ledge => 'E',
                        Cell::Crab => 'C',
                    }
                };
                line.push(ch);
            }
            out.push(line);
        }
        out
    }
}

impl BlackBoxModel for GridWorld {
    type State = GridState;

    fn action_count(&self) -> usize {
        self.action_labels().len()
    }

    fn action_label(&self, action: ActionId) -> &str {
        self.action_labels()[action.0]
    }

    fn simulate(&self, state: &GridState, action: ActionId) -> Result<TransitionOutcome<GridState>> {
        if action.0 >= self.action_count() {
            return Err(Error::UnknownAction(action.0));
        }
        Ok(if self.variant.is_sokoban() {
            sokoban::step(self, state, action)
        } else {
            keyquest::step(self, state, action)
        })
    }

    fn is_goal(&self, state: &GridState) -> bool {
        if self.variant.is_sokoban() {
            state.box_pos.is_some() && state.box_pos == self.target
        } else {
            self.cell(state.agent) == Cell::Key
        }
    }
}

/// Parses one-mnemonic-per-line action files against any model.
pub fn parse_action_list<M: BlackBoxModel>(model: &M, text: &str) -> Result<Vec<ActionId>> {
    let mut out = Vec::new();
    for raw in text.lines() {
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let a = model
            .action_by_label(l)
            .ok_or_else(|| Error::UnknownMnemonic(l.to_string()))?;
        out.push(a);
    }
    Ok(out)
}

/// A map bundled with the library together with its plan and foils.
#[derive(Clone, Copy, Debug)]
pub struct BundledMap {
    pub id: &'static str,
    pub map: &'static str,
    pub plan: &'static str,
    pub foils: &'static [(&'static str, &'static str)],
}

impl BundledMap {
    pub fn world(&self) -> GridWorld {
        GridWorld::parse(self.map).expect("bundled maps parse")
    }

    pub fn foil(&self, name: &str) -> Option<&'static str> {
        self.foils.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
    }
}

pub const BUNDLED: [BundledMap; 4] = [
    BundledMap {
        id: "sokoban_switch",
        map: include_str!("../../maps/sokoban_switch.map"),
        plan: include_str!("../../maps/sokoban_switch.plan"),
        foils: &[("push", include_str!("../../maps/sokoban_switch.push.foil"))],
    },
    BundledMap {
        id: "sokoban_cell",
        map: include_str!("../../maps/sokoban_cell.map"),
        plan: include_str!("../../maps/sokoban_cell.plan"),
        foils: &[("pink", include_str!("../../maps/sokoban_cell.pink.foil"))],
    },
    BundledMap {
        id: "key_quest_s1",
        map: include_str!("../../maps/key_quest_s1.map"),
        plan: include_str!("../../maps/key_quest_s1.plan"),
        foils: &[
            ("a", include_str!("../../maps/key_quest_s1.a.foil")),
            ("b", include_str!("../../maps/key_quest_s1.b.foil")),
            ("c", include_str!("../../maps/key_quest_s1.c.foil")),
            ("attack", include_str!("../../maps/key_quest_s1.attack.foil")),
        ],
    },
    BundledMap {
        id: "key_quest_s4",
        map: include_str!("../../maps/key_quest_s4.map"),
        plan: include_str!("../../maps/key_quest_s4.plan"),
        foils: &[("d", include_str!("../../maps/key_quest_s4.d.foil"))],
    },
];

pub fn bundled(id: &str) -> Option<&'static BundledMap> {
    BUNDLED.iter().find(|b| b.id == id)
}
