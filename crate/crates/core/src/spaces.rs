//! Observation vectors, action decoding and validity masks for the three agent
//! types.
//!
//! | agent      | actions | observations |
//! |------------|---------|--------------|
//! | sorting    | 2       | 13           |
//! | pressing   | 11      | 16           |
//! | monolithic | 22      | 29           |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{N_CONTAINERS, N_MODES, N_PRESSES};
use crate::error::{Error, Result};
use crate::sim::EnvState;

pub const SORT_ACTIONS: usize = N_MODES;
pub const PRESS_ACTIONS: usize = 1 + N_PRESSES * N_CONTAINERS;
pub const MONO_ACTIONS: usize = SORT_ACTIONS * PRESS_ACTIONS;
pub const SORT_OBS: usize = 13;
pub const PRESS_OBS: usize = 16;
pub const MONO_OBS: usize = SORT_OBS + PRESS_OBS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Sorting,
    Pressing,
    Monolithic,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::Sorting, AgentKind::Pressing, AgentKind::Monolithic];

    pub fn spec(self) -> AgentSpec {
        let (n_actions, obs_len) = match self {
            AgentKind::Sorting => (SORT_ACTIONS, SORT_OBS),
            AgentKind::Pressing => (PRESS_ACTIONS, PRESS_OBS),
            AgentKind::Monolithic => (MONO_ACTIONS, MONO_OBS),
        };
        AgentSpec {
            kind: self,
            n_actions,
            obs_len,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Sorting => "sorting",
            AgentKind::Pressing => "pressing",
            AgentKind::Monolithic => "monolithic",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            AgentKind::Sorting => 0,
            AgentKind::Pressing => 1,
            AgentKind::Monolithic => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        AgentKind::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown agent `{s}` (expected sorting, pressing or monolithic)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub kind: AgentKind,
    pub n_actions: usize,
    pub obs_len: usize,
}

/// Sensor configuration of the sorting machine; each mode boosts one group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SortingMode {
    GroupA,
    GroupB,
}

impl SortingMode {
    pub fn index(self) -> usize {
        match self {
            SortingMode::GroupA => 0,
            SortingMode::GroupB => 1,
        }
    }

    pub fn from_index(index: usize) -> Result<Self> {
        match index {
            0 => Ok(SortingMode::GroupA),
            1 => Ok(SortingMode::GroupB),
            _ => Err(Error::ActionOutOfRange {
                index,
                n_actions: SORT_ACTIONS,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PressingAction {
    NoOp,
    Press { press: usize, container: usize },
}

impl PressingAction {
    /// `0` is NoOp, `1 + 5 * press + container` otherwise.
    pub fn index(self) -> usize {
        match self {
            PressingAction::NoOp => 0,
            PressingAction::Press { press, container } => 1 + N_CONTAINERS * press + container,
        }
    }
}

pub fn decode_pressing_action(index: usize) -> Result<PressingAction> {
    if index >= PRESS_ACTIONS {
        return Err(Error::ActionOutOfRange {
            index,
            n_actions: PRESS_ACTIONS,
        });
    }
    Ok(match index {
        0 => PressingAction::NoOp,
        i => PressingAction::Press {
            press: (i - 1) / N_CONTAINERS,
            container: (i - 1) % N_CONTAINERS,
        },
    })
}

/// Joint plant action: a sorting mode and a pressing sub-action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub mode: SortingMode,
    pub press: PressingAction,
}

impl Action {
    /// Mode-major flattening: `11 * mode + pressing index`.
    pub fn index(self) -> usize {
        PRESS_ACTIONS * self.mode.index() + self.press.index()
    }
}

pub fn decode_monolithic_action(index: usize) -> Result<Action> {
    if index >= MONO_ACTIONS {
        return Err(Error::ActionOutOfRange {
            index,
            n_actions: MONO_ACTIONS,
        });
    }
    Ok(Action {
        mode: SortingMode::from_index(index / PRESS_ACTIONS)?,
        press: decode_pressing_action(index % PRESS_ACTIONS)?,
    })
}

pub fn sorting_observation(state: &EnvState) -> [f64; SORT_OBS] {
    let cfg = &state.config;
    let mut obs = [0.0; SORT_OBS];
    obs[0] = (state.belt_mass() / cfg.belt_capacity).clamp(0.0, 1.0);
    obs[1..6].copy_from_slice(&state.belt_contents().proportions());
    obs[6..8].copy_from_slice(&state.machine.accuracies);
    for (o, c) in obs[8..13].iter_mut().zip(&state.containers) {
        *o = (c.purity() - c.threshold).clamp(-1.0, 1.0);
    }
    obs
}

pub fn pressing_observation(state: &EnvState) -> [f64; PRESS_OBS] {
    let cfg = &state.config;
    let mut obs = [0.0; PRESS_OBS];
    for (i, c) in state.containers.iter().enumerate() {
        obs[i] = (c.fill() / c.capacity).clamp(0.0, 1.0);
        obs[5 + i] = (c.fill() / cfg.bale_size).fract();
    }
    let [ga, gb] = state.machine.load.group_masses();
    obs[10] = (ga / cfg.belt_capacity).clamp(0.0, 1.0);
    obs[11] = (gb / cfg.belt_capacity).clamp(0.0, 1.0);
    let max_duration = cfg.max_press_duration();
    for (p, press) in state.presses.iter().enumerate() {
        obs[12 + p] = if max_duration > 0.0 {
            (press.remaining as f64 / max_duration).clamp(0.0, 1.0)
        } else {
            0.0
        };
        obs[14 + p] = if press.is_idle() { 1.0 } else { 0.0 };
    }
    obs
}

pub fn monolithic_observation(state: &EnvState) -> [f64; MONO_OBS] {
    let mut obs = [0.0; MONO_OBS];
    obs[..SORT_OBS].copy_from_slice(&sorting_observation(state));
    obs[SORT_OBS..].copy_from_slice(&pressing_observation(state));
    obs
}

pub fn observation(kind: AgentKind, state: &EnvState) -> Vec<f64> {
    match kind {
        AgentKind::Sorting => sorting_observation(state).to_vec(),
        AgentKind::Pressing => pressing_observation(state).to_vec(),
        AgentKind::Monolithic => monolithic_observation(state).to_vec(),
    }
}

/// NoOp is always valid; `Press(p, c)` needs an idle press and a nonempty container.
pub fn pressing_action_mask(state: &EnvState) -> [bool; PRESS_ACTIONS] {
    let mut mask = [false; PRESS_ACTIONS];
    mask[0] = true;
    for (p, press) in state.presses.iter().enumerate() {
        if !press.is_idle() {
            continue;
        }
        for (c, container) in state.containers.iter().enumerate() {
            mask[PressingAction::Press { press: p, container: c }.index()] = !container.is_empty();
        }
    }
    mask
}

/// Both sorting modes are always valid, so the pressing mask repeats per mode.
pub fn monolithic_action_mask(state: &EnvState) -> [bool; MONO_ACTIONS] {
    let press = pressing_action_mask(state);
    std::array::from_fn(|i| press[i % PRESS_ACTIONS])
}

pub fn action_mask(kind: AgentKind, state: &EnvState) -> Vec<bool> {
    match kind {
        AgentKind::Sorting => vec![true; SORT_ACTIONS],
        AgentKind::Pressing => pressing_action_mask(state).to_vec(),
        AgentKind::Monolithic => monolithic_action_mask(state).to_vec(),
    }
}

const SORT_LAYOUT: [&str; SORT_OBS] = [
    "belt occupancy: belt mass / belt_capacity",
    "belt share of material 0",
    "belt share of material 1",
    "belt share of material 2",
    "belt share of material 3",
    "belt share of material 4",
    "sorting accuracy, group A (materials 0-2)",
    "sorting accuracy, group B (materials 3-4)",
    "purity deviation p - theta, container 0 (clamped to [-1, 1])",
    "purity deviation p - theta, container 1",
    "purity deviation p - theta, container 2",
    "purity deviation p - theta, container 3",
    "purity deviation p - theta, container 4",
];

const PRESS_LAYOUT: [&str; PRESS_OBS] = [
    "fill level, container 0: fill / container_capacity",
    "fill level, container 1",
    "fill level, container 2",
    "fill level, container 3",
    "fill level, container 4",
    "bale progress, container 0: frac(fill / bale_size)",
    "bale progress, container 1",
    "bale progress, container 2",
    "bale progress, container 3",
    "bale progress, container 4",
    "sorting machine group A mass / belt_capacity",
    "sorting machine group B mass / belt_capacity",
    "press 0 remaining time / max press duration",
    "press 1 remaining time / max press duration",
    "press 0 idle flag (1 = idle)",
    "press 1 idle flag (1 = idle)",
];

/// Markdown table mapping every observation index to its meaning.
pub fn observation_spec_markdown() -> String {
    let mut out = String::from("# Observation layout\n\nGenerated by `recyclegym obs-spec`; do not edit by hand.\n");
    let sections = [
        ("Sorting agent (13 entries, range [-1, 1])", 0usize, &SORT_LAYOUT[..]),
        ("Pressing agent (16 entries, range [0, 1])", 0, &PRESS_LAYOUT[..]),
    ];
    for (title, offset, rows) in sections {
        out.push_str(&format!("\n## {title}\n\n| index | meaning |\n|---|---|\n"));
        for (i, r) in rows.iter().enumerate() {
            out.push_str(&format!("| {} | {} |\n", offset + i, r));
        }
    }
    out.push_str("\n## Monolithic agent (29 entries)\n\n| index | meaning |\n|---|---|\n");
    for (i, r) in SORT_LAYOUT.iter().chain(PRESS_LAYOUT.iter()).enumerate() {
        out.push_str(&format!("| {i} | {r} |\n"));
    }
    out.push_str("\n## Actions\n\n");
    out.push_str("- Sorting: `0` boosts group A, `1` boosts group B.\n");
    out.push_str("- Pressing: `0` is NoOp, `1 + 5 * press + container` presses `container` (0-4) with `press` (0-1).\n");
    out.push_str("- Monolithic: `11 * mode + pressing index`.\n");
    out
}
