//! The five-policy benchmark: composes controllers, runs one episode per
//! (policy, seed, masking condition), aggregates and persists the results.

pub mod trace;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::EnvConfig;
use crate::error::{ConfigError, Error, Result};
use crate::num::mean_and_stdev;
use crate::policies::{Policy, RandomPolicy, RulePressing, RuleSorting};
use crate::ppo::{Checkpoint, GreedyPolicy};
use crate::sim::{Bale, EnvState};
use crate::spaces::{self, Action, AgentKind, SortingMode};
use trace::{record_episode, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub eval_seeds: Vec<u64>,
    /// Policies to run; empty means all five.
    pub policies: Vec<String>,
    pub write_traces: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            eval_seeds: (1000..1010).collect(),
            policies: Vec::new(),
            write_traces: true,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.eval_seeds.is_empty() {
            return Err(ConfigError::bound("eval_seeds", "needs at least one seed"));
        }
        for p in &self.policies {
            p.parse::<PolicyId>()?;
        }
        Ok(())
    }

    pub fn policy_ids(&self) -> Result<Vec<PolicyId>, ConfigError> {
        if self.policies.is_empty() {
            return Ok(PolicyId::ALL.to_vec());
        }
        self.policies.iter().map(|p| p.parse()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyId {
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "rule")]
    Rule,
    #[serde(rename = "ppo-sort+rule-press")]
    PpoSortRulePress,
    #[serde(rename = "ppo-sort+ppo-press")]
    PpoSortPpoPress,
    #[serde(rename = "ppo-mono")]
    PpoMono,
}

impl PolicyId {
    pub const ALL: [PolicyId; 5] = [
        PolicyId::Random,
        PolicyId::Rule,
        PolicyId::PpoSortRulePress,
        PolicyId::PpoSortPpoPress,
        PolicyId::PpoMono,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyId::Random => "random",
            PolicyId::Rule => "rule",
            PolicyId::PpoSortRulePress => "ppo-sort+rule-press",
            PolicyId::PpoSortPpoPress => "ppo-sort+ppo-press",
            PolicyId::PpoMono => "ppo-mono",
        }
    }

    /// Checkpoints the policy is built from.
    pub fn required(self) -> &'static [AgentKind] {
        match self {
            PolicyId::Random | PolicyId::Rule => &[],
            PolicyId::PpoSortRulePress => &[AgentKind::Sorting],
            PolicyId::PpoSortPpoPress => &[AgentKind::Sorting, AgentKind::Pressing],
            PolicyId::PpoMono => &[AgentKind::Monolithic],
        }
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        PolicyId::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let known: Vec<_> = PolicyId::ALL.iter().map(|p| p.name()).collect();
            ConfigError::bound("policy", format!("unknown policy {s:?}; known: {}", known.join(", ")))
        })
    }
}

pub fn condition_name(masked: bool) -> &'static str {
    if masked {
        "masked"
    } else {
        "unmasked"
    }
}

/// Default checkpoint file name inside a checkpoint directory.
pub fn checkpoint_file_name(kind: AgentKind, masked: bool) -> String {
    format!("{}_{}.ckpt", kind.name(), condition_name(masked))
}

/// Trained networks for one masking condition.
#[derive(Debug, Clone, Default)]
pub struct CheckpointSet {
    pub sorting: Option<Checkpoint>,
    pub pressing: Option<Checkpoint>,
    pub monolithic: Option<Checkpoint>,
}

impl CheckpointSet {
    /// Loads whichever of the three default files exist in `dir`. A file that
    /// exists but fails to load is an error.
    pub fn load_dir(dir: &Path, masked: bool) -> Result<Self> {
        let load = |kind: AgentKind| -> Result<Option<Checkpoint>> {
            let path = dir.join(checkpoint_file_name(kind, masked));
            if !path.exists() {
                return Ok(None);
            }
            let ckpt = Checkpoint::load(&path)?;
            if ckpt.kind != kind {
                return Err(ConfigError::SpecMismatch {
                    expected: kind.name(),
                    found: ckpt.kind.name(),
                }
                .into());
            }
            Ok(Some(ckpt))
        };
        Ok(CheckpointSet {
            sorting: load(AgentKind::Sorting)?,
            pressing: load(AgentKind::Pressing)?,
            monolithic: load(AgentKind::Monolithic)?,
        })
    }

    pub fn get(&self, kind: AgentKind) -> Option<&Checkpoint> {
        match kind {
            AgentKind::Sorting => self.sorting.as_ref(),
            AgentKind::Pressing => self.pressing.as_ref(),
            AgentKind::Monolithic => self.monolithic.as_ref(),
        }
    }

    pub fn missing(&self, policy: PolicyId) -> Vec<AgentKind> {
        policy.required().iter().copied().filter(|&k| self.get(k).is_none()).collect()
    }
}

/// A full plant controller.
pub enum Controller {
    Joint(Box<dyn Policy + Send>),
    Split {
        sorting: Box<dyn Policy + Send>,
        pressing: Box<dyn Policy + Send>,
    },
}

impl Controller {
    pub fn build(policy: PolicyId, checkpoints: &CheckpointSet, seed: u64) -> Result<Self> {
        let missing = checkpoints.missing(policy);
        if !missing.is_empty() {
            return Err(Error::Contract(format!("{policy} needs a {} checkpoint", missing[0])));
        }
        let greedy = |kind| -> Box<dyn Policy + Send> {
            let ckpt = checkpoints.get(kind).expect("presence checked above");
            Box::new(GreedyPolicy::from_checkpoint(ckpt))
        };
        Ok(match policy {
            PolicyId::Random => Controller::Joint(Box::new(RandomPolicy::new(AgentKind::Monolithic, seed))),
            PolicyId::Rule => Controller::Split {
                sorting: Box::new(RuleSorting),
                pressing: Box::new(RulePressing::default()),
            },
            PolicyId::PpoSortRulePress => Controller::Split {
                sorting: greedy(AgentKind::Sorting),
                pressing: Box::new(RulePressing::default()),
            },
            PolicyId::PpoSortPpoPress => Controller::Split {
                sorting: greedy(AgentKind::Sorting),
                pressing: greedy(AgentKind::Pressing),
            },
            PolicyId::PpoMono => Controller::Joint(greedy(AgentKind::Monolithic)),
        })
    }

    pub fn act(&mut self, state: &EnvState, masked: bool) -> Result<Action> {
        match self {
            Controller::Joint(p) => {
                let mask = masked.then(|| spaces::action_mask(p.spec().kind, state));
                let a = p.act(state, mask.as_deref());
                spaces::decode_monolithic_action(a)
            }
            Controller::Split { sorting, pressing } => {
                let mode = SortingMode::from_index(sorting.act(state, None))?;
                let mask = masked.then(|| spaces::pressing_action_mask(state));
                let press = spaces::decode_pressing_action(pressing.act(state, mask.as_ref().map(|m| &m[..])))?;
                Ok(Action { mode, press })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub policy: PolicyId,
    pub masked: bool,
    pub seed: u64,
    pub episode_length: usize,
    pub cumulative_sort: f64,
    pub cumulative_press: f64,
    pub cumulative_total: f64,
    pub bales: Vec<Bale>,
    pub invalid_actions: usize,
}

/// Runs one episode. Random policies draw from a stream keyed by `seed`.
pub fn run_episode(
    policy: PolicyId,
    checkpoints: &CheckpointSet,
    config: &EnvConfig,
    seed: u64,
    masked: bool,
) -> Result<(EpisodeRecord, Trace)> {
    let mut controller = Controller::build(policy, checkpoints, seed)?;
    let (state, trace, cumulative) =
        record_episode(config, seed, policy.name(), masked, None, |s| controller.act(s, masked))?;
    let record = EpisodeRecord {
        policy,
        masked,
        seed,
        episode_length: state.step,
        cumulative_sort: cumulative.sort,
        cumulative_press: cumulative.press,
        cumulative_total: cumulative.total,
        bales: state.bales(),
        invalid_actions: state.ignored_presses,
    };
    Ok((record, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: PolicyId,
    pub masking: String,
    pub mean: f64,
    pub stdev: f64,
    pub n: usize,
}

/// Mean and sample stdev of cumulative total reward per policy, sorted by
/// mean descending (ties by name).
pub fn evaluate(records: &[EpisodeRecord], masked: bool) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = PolicyId::ALL
        .iter()
        .filter_map(|&policy| {
            let xs: Vec<f64> = records
                .iter()
                .filter(|r| r.policy == policy && r.masked == masked)
                .map(|r| r.cumulative_total)
                .collect();
            if xs.is_empty() {
                return None;
            }
            let (mean, stdev) = mean_and_stdev(&xs);
            Some(SummaryRow {
                policy,
                masking: condition_name(masked).to_string(),
                mean,
                stdev,
                n: xs.len(),
            })
        })
        .collect();
    rows.sort_by(|a, b| b.mean.total_cmp(&a.mean).then(a.policy.name().cmp(b.policy.name())));
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub policy: PolicyId,
    pub masking: String,
    pub missing: Vec<AgentKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub partial: bool,
    pub seeds: Vec<u64>,
    pub config: EnvConfig,
    pub rows: Vec<SummaryRow>,
    pub skipped: Vec<Skipped>,
    pub records: Vec<EpisodeRecord>,
}

impl BenchmarkReport {
    /// Summary row for a policy and condition.
    pub fn row(&self, policy: PolicyId, masked: bool) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.policy == policy && r.masking == condition_name(masked))
    }

    /// Writes `report.json`, `report.csv` and returns their paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))?;
        let csv_path = dir.join("report.csv");
        let fmt_err = |e: csv::Error| Error::Format {
            path: csv_path.clone(),
            reason: e.to_string(),
        };
        let mut w = csv::Writer::from_path(&csv_path).map_err(fmt_err)?;
        for row in &self.rows {
            w.serialize(row).map_err(fmt_err)?;
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))?;
        Ok(vec![json, csv_path])
    }
}

/// Where traces go: `<dir>/traces/<condition>/<policy>_<seed>.jsonl`.
pub fn trace_path(dir: &Path, policy: PolicyId, masked: bool, seed: u64) -> PathBuf {
    dir.join("traces")
        .join(condition_name(masked))
        .join(format!("{}_{seed}.jsonl", policy.name()))
}

/// Runs every requested policy under both masking conditions. Policies whose
/// checkpoints are missing are skipped and the report is marked partial.
/// Traces are written under `trace_dir` when given. Episodes run on the
/// current rayon pool; results are merged in a fixed order.
pub fn run_benchmark(
    env: &EnvConfig,
    bench: &BenchConfig,
    masked_set: &CheckpointSet,
    unmasked_set: &CheckpointSet,
    trace_dir: Option<&Path>,
) -> Result<BenchmarkReport> {
    env.validate()?;
    bench.validate()?;
    let policies = bench.policy_ids()?;
    let mut jobs = Vec::new();
    let mut skipped = Vec::new();
    for masked in [true, false] {
        let set = if masked { masked_set } else { unmasked_set };
        for &policy in &policies {
            let missing = set.missing(policy);
            if !missing.is_empty() {
                skipped.push(Skipped {
                    policy,
                    masking: condition_name(masked).to_string(),
                    missing,
                });
                continue;
            }
            for &seed in &bench.eval_seeds {
                jobs.push((masked, policy, seed, set));
            }
        }
    }

    let records: Vec<EpisodeRecord> = jobs
        .par_iter()
        .map(|&(masked, policy, seed, set)| {
            let (record, trace) = run_episode(policy, set, env, seed, masked)?;
            if let Some(dir) = trace_dir {
                trace.write(&trace_path(dir, policy, masked, seed))?;
            }
            Ok(record)
        })
        .collect::<Result<_>>()?;

    let mut rows = evaluate(&records, true);
    rows.extend(evaluate(&records, false));
    Ok(BenchmarkReport {
        partial: !skipped.is_empty(),
        seeds: bench.eval_seeds.clone(),
        config: env.clone(),
        rows,
        skipped,
        records,
    })
}
