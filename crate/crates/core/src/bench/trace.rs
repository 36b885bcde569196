//! Episode traces as JSON Lines: one record per step, then one summary.
//!
//! Floats are rounded to 9 significant digits before serialization, so a
//! trace is stable text that replays byte-for-byte.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::EnvConfig;
use crate::error::{Error, Result};
use crate::material::N_MATERIALS;
use crate::sim::{Bale, EnvState, PressOutcome, PressStatus, RewardBreakdown, StepOutputs};
use crate::spaces::{self, Action, PressingAction, SortingMode, MONO_ACTIONS};

/// Rounds to 9 significant digits.
pub fn sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn sig9_all<const N: usize>(xs: [f64; N]) -> [f64; N] {
    xs.map(sig9)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Cumulative {
    pub sort: f64,
    pub press: f64,
    pub total: f64,
}

impl Cumulative {
    pub fn add(&mut self, r: &RewardBreakdown) {
        self.sort += r.sort;
        self.press += r.press;
        self.total += r.total;
    }

    fn rounded(&self) -> Self {
        Cumulative {
            sort: sig9(self.sort),
            press: sig9(self.press),
            total: sig9(self.total),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressRecord {
    pub status: PressStatus,
    pub remaining: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub action: usize,
    pub mode: SortingMode,
    pub press_action: PressingAction,
    pub outcome: PressOutcome,
    pub input: [f64; N_MATERIALS],
    pub belt_mass: f64,
    pub machine_mass: f64,
    pub accuracies: [f64; 2],
    pub fill: Vec<f64>,
    pub purity: Vec<f64>,
    pub presses: Vec<PressRecord>,
    pub overflow: f64,
    pub r_sort: f64,
    pub r_press_state: f64,
    pub r_press_action: f64,
    pub r_press: f64,
    pub r_total: f64,
    pub cumulative: Cumulative,
    /// Monolithic observation after the step.
    pub observation: Vec<f64>,
    /// Monolithic action mask after the step.
    pub mask: Vec<bool>,
    pub truncated: bool,
}

fn press_records(state: &EnvState) -> Vec<PressRecord> {
    state
        .presses
        .iter()
        .map(|p| PressRecord {
            status: p.status(),
            remaining: p.remaining,
        })
        .collect()
}

impl StepRecord {
    /// `state` is the plant after the step, `cumulative` includes it.
    pub fn new(state: &EnvState, out: &StepOutputs, cumulative: &Cumulative) -> Self {
        let outcome = match out.info.outcome {
            PressOutcome::Executed { press, container, bales } => PressOutcome::Executed {
                press,
                container,
                bales: sig9(bales),
            },
            o => o,
        };
        let r = &out.rewards;
        StepRecord {
            step: out.info.step,
            action: out.info.action.index(),
            mode: out.info.action.mode,
            press_action: out.info.action.press,
            outcome,
            input: sig9_all(out.info.input.0),
            belt_mass: sig9(state.belt_mass()),
            machine_mass: sig9(state.machine_mass()),
            accuracies: sig9_all(state.machine.accuracies),
            fill: state.containers.iter().map(|c| sig9(c.fill())).collect(),
            purity: state.containers.iter().map(|c| sig9(c.purity())).collect(),
            presses: press_records(state),
            overflow: sig9(out.info.overflow),
            r_sort: sig9(r.sort),
            r_press_state: sig9(r.press_state),
            r_press_action: sig9(r.press_action),
            r_press: sig9(r.press),
            r_total: sig9(r.total),
            cumulative: cumulative.rounded(),
            observation: out.monolithic_obs.iter().map(|&x| sig9(x)).collect(),
            mask: out.monolithic_mask.to_vec(),
            truncated: out.info.truncated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerRecord {
    pub contents: [f64; N_MATERIALS],
    pub fill: f64,
    pub purity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub policy: String,
    pub masked: bool,
    pub seed: u64,
    pub steps: usize,
    pub config: EnvConfig,
    pub containers: Vec<ContainerRecord>,
    pub presses: Vec<PressRecord>,
    pub bales: Vec<Bale>,
    pub cumulative: Cumulative,
    pub invalid_actions: usize,
}

impl TraceSummary {
    pub fn new(policy: &str, masked: bool, state: &EnvState, cumulative: &Cumulative) -> Self {
        let bales = state
            .bales()
            .into_iter()
            .map(|b| Bale {
                size_bales: sig9(b.size_bales),
                volume: sig9(b.volume),
                purity: sig9(b.purity),
                ..b
            })
            .collect();
        TraceSummary {
            policy: policy.to_string(),
            masked,
            seed: state.seed,
            steps: state.step,
            config: state.config.clone(),
            containers: state
                .containers
                .iter()
                .map(|c| ContainerRecord {
                    contents: sig9_all(c.contents.0),
                    fill: sig9(c.fill()),
                    purity: sig9(c.purity()),
                })
                .collect(),
            presses: press_records(state),
            bales,
            cumulative: cumulative.rounded(),
            invalid_actions: state.ignored_presses,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceLine {
    Step(StepRecord),
    Summary(TraceSummary),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub steps: Vec<StepRecord>,
    pub summary: Option<TraceSummary>,
}

impl Trace {
    pub fn lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .steps
            .iter()
            .map(|s| serde_json::to_string(&TraceLine::Step(s.clone())).expect("trace records serialize"))
            .collect();
        if let Some(summary) = &self.summary {
            out.push(serde_json::to_string(&TraceLine::Summary(summary.clone())).expect("trace records serialize"));
        }
        out
    }

    pub fn actions(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.action).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for line in self.lines() {
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut trace = Trace::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: TraceLine = serde_json::from_str(&line).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: format!("line {}: {e}", i + 1),
            })?;
            if trace.summary.is_some() {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    reason: format!("line {}: record after the summary", i + 1),
                });
            }
            match record {
                TraceLine::Step(s) => trace.steps.push(s),
                TraceLine::Summary(s) => trace.summary = Some(s),
            }
        }
        Ok(trace)
    }
}

/// Drives one episode from `seed` with `next_action` choosing each action
/// from the current state. Stops at truncation or after `max_steps`.
pub fn record_episode(
    config: &EnvConfig,
    seed: u64,
    policy: &str,
    masked: bool,
    max_steps: Option<usize>,
    mut next_action: impl FnMut(&EnvState) -> Result<Action>,
) -> Result<(EnvState, Trace, Cumulative)> {
    let mut state = EnvState::reset(config.clone(), seed)?;
    let mut cumulative = Cumulative::default();
    let mut trace = Trace::default();
    let limit = max_steps.unwrap_or(usize::MAX);
    while !state.is_truncated() && trace.steps.len() < limit {
        let action = next_action(&state)?;
        let out = state.step(action)?;
        cumulative.add(&out.rewards);
        trace.steps.push(StepRecord::new(&state, &out, &cumulative));
    }
    trace.summary = Some(TraceSummary::new(policy, masked, &state, &cumulative));
    Ok((state, trace, cumulative))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub steps: usize,
    /// First differing line (0-based; the summary is line `steps`).
    pub first_mismatch: Option<usize>,
}

impl ReplayReport {
    pub fn matches(&self) -> bool {
        self.first_mismatch.is_none()
    }
}

/// Re-runs a trace's actions from its recorded seed and config and compares
/// the regenerated records with the stored ones.
pub fn replay(trace: &Trace) -> Result<ReplayReport> {
    let summary = trace
        .summary
        .as_ref()
        .ok_or_else(|| Error::Contract("trace has no summary record".into()))?;
    let actions = trace.actions();
    let mut it = actions.iter();
    let (_, regenerated, _) = record_episode(
        &summary.config,
        summary.seed,
        &summary.policy,
        summary.masked,
        Some(actions.len()),
        |_| spaces::decode_monolithic_action(*it.next().expect("one action per record")),
    )?;
    let (a, b) = (trace.lines(), regenerated.lines());
    let first_mismatch = (0..a.len().max(b.len())).find(|&i| a.get(i) != b.get(i));
    Ok(ReplayReport {
        steps: actions.len(),
        first_mismatch,
    })
}

/// Checks that the mask in each record has the monolithic length.
pub fn validate_shape(trace: &Trace) -> bool {
    trace.steps.iter().all(|s| s.mask.len() == MONO_ACTIONS && s.observation.len() == spaces::MONO_OBS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::rule_based_action;

    #[test]
    fn sig9_examples() {
        assert_eq!(sig9(0.123456789123), 0.123456789);
        assert_eq!(sig9(1234567891234.0), 1234567890000.0);
        assert_eq!(sig9(-2.0), -2.0);
        assert_eq!(sig9(0.0), 0.0);
        assert_eq!(serde_json::to_string(&sig9(1.0 / 3.0)).unwrap(), "0.333333333");
    }

    fn rule_trace() -> Trace {
        record_episode(&EnvConfig::default(), 7, "rule", true, None, |s| Ok(rule_based_action(s, 0.0)))
            .unwrap()
            .1
    }

    #[test]
    fn full_episode_has_200_steps_and_a_summary() {
        let t = rule_trace();
        assert_eq!(t.steps.len(), 200);
        assert_eq!(t.lines().len(), 201);
        assert!(t.steps[199].truncated && !t.steps[198].truncated);
        assert!(validate_shape(&t));
        let executed = t.steps.iter().filter(|s| matches!(s.outcome, PressOutcome::Executed { .. })).count();
        assert_eq!(t.summary.as_ref().unwrap().bales.len(), executed);
    }

    #[test]
    fn write_read_replay_roundtrip() {
        let t = rule_trace();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        t.write(&path).unwrap();
        let back = Trace::read(&path).unwrap();
        assert_eq!(back.lines(), t.lines());
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().collect::<Vec<_>>(), t.lines());
        assert!(replay(&back).unwrap().matches());
    }

    #[test]
    fn tampered_trace_is_detected() {
        let mut t = rule_trace();
        t.steps[50].action = (t.steps[50].action + 11) % 22;
        let report = replay(&t).unwrap();
        assert_eq!(report.first_mismatch, Some(50));
    }

    #[test]
    fn partial_episode_replays() {
        let (_, t, _) =
            record_episode(&EnvConfig::default(), 3, "rule", false, Some(17), |s| Ok(rule_based_action(s, 0.0))).unwrap();
        assert_eq!(t.steps.len(), 17);
        assert!(replay(&t).unwrap().matches());
    }
}
