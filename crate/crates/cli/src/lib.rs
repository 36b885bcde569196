//! Command-line front end: simulate, train, evaluate, benchmark, trace-replay
//! and obs-spec, all over one flat run config.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use recyclegym::bench::trace::{self, record_episode, Trace};
use recyclegym::bench::{
    self, checkpoint_file_name, condition_name, evaluate, run_benchmark, trace_path, CheckpointSet, Controller,
};
use recyclegym::ppo::train::{train_agent, write_curve_csv, Partner};
use recyclegym::ppo::{Checkpoint, PolicyArtifact};
use recyclegym::spaces::observation_spec_markdown;
use recyclegym::{AgentKind, PolicyId, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "recyclegym", version, about = "Sorting and pressing plant benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory [default: runs/<timestamp>].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed: training seed for `train`, episode seed for `simulate`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Enable action masking.
    #[arg(long, global = true)]
    masked: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AgentArg {
    Sorting,
    Pressing,
    Monolithic,
    /// Every agent under both masking conditions.
    All,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one episode with a policy and write its trace.
    Simulate {
        #[arg(long, default_value = "rule")]
        policy: String,
        /// Steps to run [default: episode_length].
        #[arg(long)]
        steps: Option<usize>,
        /// Directory holding trained checkpoints.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a PPO agent.
    Train {
        #[arg(long, value_enum)]
        agent: AgentArg,
        /// Total training timesteps [default: total_timesteps].
        #[arg(long)]
        steps: Option<usize>,
        /// Frozen sorter for pressing training [default: <out>/sorting_<condition>.ckpt].
        #[arg(long)]
        sorter: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate one policy over the evaluation seeds.
    Evaluate {
        #[arg(long)]
        policy: String,
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the five-policy benchmark under both masking conditions.
    Benchmark {
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        /// Worker threads [default: available cores].
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Replay a trace and check that it reproduces exactly.
    TraceReplay {
        trace: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Print (or write) the observation layout document.
    ObsSpec {
        #[arg(long)]
        write: Option<PathBuf>,
    },
}

fn default_out() -> PathBuf {
    PathBuf::from("runs").join(chrono::Local::now().format("%Y%m%d-%H%M%S").to_string())
}

struct Prepared {
    cfg: RunConfig,
    out: PathBuf,
}

/// Resolves config (defaults, file, `--set`, then dedicated flags), prints it
/// and saves it in the output directory.
fn prepare(common: &Common, steps_key: Option<(&str, usize)>) -> anyhow::Result<Prepared> {
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    if common.masked {
        overrides.push("masked=true".into());
    }
    if let Some((key, n)) = steps_key {
        overrides.push(format!("{key}={n}"));
    }
    let cfg = RunConfig::resolve(common.config.as_deref(), &overrides)?;
    let out = common.out.clone().unwrap_or_else(default_out);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let text = cfg.to_toml();
    println!("# resolved config\n{text}");
    let path = out.join("config.toml");
    std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
    Ok(Prepared { cfg, out })
}

fn load_set(dir: Option<&Path>, masked: bool) -> anyhow::Result<CheckpointSet> {
    match dir {
        Some(d) => Ok(CheckpointSet::load_dir(d, masked)?),
        None => Ok(CheckpointSet::default()),
    }
}

fn save_artifact(out: &Path, art: &PolicyArtifact) -> anyhow::Result<()> {
    let ckpt = &art.checkpoint;
    let cond = condition_name(ckpt.masked);
    let path = out.join(checkpoint_file_name(ckpt.kind, ckpt.masked));
    ckpt.save(&path)?;
    let curve = out.join(format!("{}_{cond}_curve.csv", ckpt.kind));
    write_curve_csv(&art.curve, &curve)?;
    let last = art.curve.last();
    println!(
        "trained {} ({cond}): {} updates, final mean episode reward {:.3}, {} ignored actions, checksum {}",
        ckpt.kind,
        art.curve.len(),
        last.map_or(f64::NAN, |r| r.mean_episode_reward),
        art.ignored_actions(),
        &ckpt.checksum()[..16]
    );
    println!("  {}\n  {}", path.display(), curve.display());
    Ok(())
}

fn train_one(cfg: &RunConfig, kind: AgentKind, partner: Partner) -> anyhow::Result<PolicyArtifact> {
    let n = cfg.train.n_updates();
    let cond = condition_name(cfg.train.masked);
    let art = train_agent(kind, &cfg.env, &cfg.train, partner, |row| {
        eprintln!(
            "[{kind} {cond}] update {}/{n} steps {} reward {:.3} kl {:.4}",
            row.update + 1,
            row.timesteps,
            row.mean_episode_reward,
            row.approx_kl
        );
    })?;
    Ok(art)
}

fn cmd_train(common: &Common, agent: AgentArg, steps: Option<usize>, sorter: Option<PathBuf>) -> anyhow::Result<i32> {
    let Prepared { cfg, out } = prepare(common, steps.map(|n| ("total_timesteps", n)))?;
    let rule = || Partner::RulePressing { min_fill: 0.0 };
    match agent {
        AgentArg::Sorting => save_artifact(&out, &train_one(&cfg, AgentKind::Sorting, rule())?)?,
        AgentArg::Monolithic => save_artifact(&out, &train_one(&cfg, AgentKind::Monolithic, Partner::None)?)?,
        AgentArg::Pressing => {
            let path = sorter.unwrap_or_else(|| out.join(checkpoint_file_name(AgentKind::Sorting, cfg.train.masked)));
            let frozen = Checkpoint::load(&path).context("pressing training needs a sorting checkpoint (--sorter)")?;
            if frozen.kind != AgentKind::Sorting {
                bail!("{} holds a {} checkpoint, not a sorting one", path.display(), frozen.kind);
            }
            save_artifact(&out, &train_one(&cfg, AgentKind::Pressing, Partner::FrozenSorter(frozen.net))?)?;
        }
        AgentArg::All => {
            // The sorter's action mask is always all-true, so one sorter
            // serves both conditions.
            let sorter = train_one(&cfg, AgentKind::Sorting, rule())?;
            for masked in [true, false] {
                let mut c = cfg.clone();
                c.train.masked = masked;
                let mut s = sorter.clone();
                s.checkpoint.masked = masked;
                save_artifact(&out, &s)?;
                let frozen = Partner::FrozenSorter(s.checkpoint.net.clone());
                save_artifact(&out, &train_one(&c, AgentKind::Pressing, frozen)?)?;
                save_artifact(&out, &train_one(&c, AgentKind::Monolithic, Partner::None)?)?;
            }
        }
    }
    Ok(EXIT_OK)
}

fn cmd_simulate(
    common: &Common,
    policy: &str,
    steps: Option<usize>,
    checkpoints: Option<&Path>,
) -> anyhow::Result<i32> {
    let Prepared { cfg, out } = prepare(common, None)?;
    let policy: PolicyId = policy.parse()?;
    let masked = cfg.train.masked;
    let set = load_set(checkpoints, masked)?;
    let seed = cfg.train.seed;
    let mut controller = Controller::build(policy, &set, seed)?;
    let (_, trace, cum) = record_episode(&cfg.env, seed, policy.name(), masked, steps, |s| controller.act(s, masked))?;
    let path = out.join(format!("{}_{seed}.jsonl", policy.name()));
    trace.write(&path)?;
    let invalid = trace.summary.as_ref().map_or(0, |s| s.invalid_actions);
    println!(
        "simulated {} ({}) seed {seed}: {} steps, r_sort {:.4}, r_press {:.4}, r_total {:.4}, {invalid} ignored",
        policy,
        condition_name(masked),
        trace.steps.len(),
        cum.sort,
        cum.press,
        cum.total
    );
    println!("  {}", path.display());
    Ok(EXIT_OK)
}

fn cmd_evaluate(common: &Common, policy: &str, checkpoints: Option<&Path>) -> anyhow::Result<i32> {
    let Prepared { mut cfg, out } = prepare(common, None)?;
    let policy: PolicyId = policy.parse()?;
    let masked = cfg.train.masked;
    cfg.bench.policies = vec![policy.name().to_string()];
    let set = load_set(checkpoints, masked)?;
    let missing = set.missing(policy);
    if !missing.is_empty() {
        bail!("{policy} needs a {} checkpoint in --checkpoints", missing[0]);
    }
    let records = cfg
        .bench
        .eval_seeds
        .iter()
        .map(|&seed| {
            let (rec, trace) = bench::run_episode(policy, &set, &cfg.env, seed, masked)?;
            if cfg.bench.write_traces {
                trace.write(&trace_path(&out, policy, masked, seed))?;
            }
            Ok(rec)
        })
        .collect::<recyclegym::Result<Vec<_>>>()?;
    let row = &evaluate(&records, masked)[0];
    println!(
        "{} ({}): mean {:.4} stdev {:.4} over {} seeds",
        policy, row.masking, row.mean, row.stdev, row.n
    );
    Ok(EXIT_OK)
}

fn cmd_benchmark(common: &Common, checkpoints: Option<&Path>, jobs: Option<usize>) -> anyhow::Result<i32> {
    let Prepared { cfg, out } = prepare(common, None)?;
    let masked_set = load_set(checkpoints, true)?;
    let unmasked_set = load_set(checkpoints, false)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    let trace_dir = cfg.bench.write_traces.then_some(out.as_path());
    let report = pool.install(|| run_benchmark(&cfg.env, &cfg.bench, &masked_set, &unmasked_set, trace_dir))?;
    let paths = report.write(&out)?;
    println!("{:<22} {:<9} {:>10} {:>9} {:>3}", "policy", "masking", "mean", "stdev", "n");
    for row in &report.rows {
        println!(
            "{:<22} {:<9} {:>10.3} {:>9.3} {:>3}",
            row.policy.name(),
            row.masking,
            row.mean,
            row.stdev,
            row.n
        );
    }
    for s in &report.skipped {
        let missing: Vec<_> = s.missing.iter().map(|k| k.name()).collect();
        println!("skipped {} ({}): missing {} checkpoint", s.policy, s.masking, missing.join(" and "));
    }
    println!(
        "benchmark {}: {} rows, {} episodes",
        if report.partial { "partial" } else { "complete" },
        report.rows.len(),
        report.records.len()
    );
    for p in paths {
        println!("  {}", p.display());
    }
    Ok(if report.partial { EXIT_PARTIAL } else { EXIT_OK })
}

fn cmd_trace_replay(path: &Path) -> anyhow::Result<i32> {
    let t = Trace::read(path)?;
    let report = trace::replay(&t)?;
    match report.first_mismatch {
        None => {
            println!("replay ok: {} steps reproduce {}", report.steps, path.display());
            Ok(EXIT_OK)
        }
        Some(line) => bail!("replay diverges from {} at line {}", path.display(), line + 1),
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Simulate {
            policy,
            steps,
            checkpoints,
            common,
        } => cmd_simulate(&common, &policy, steps, checkpoints.as_deref()),
        Command::Train {
            agent,
            steps,
            sorter,
            common,
        } => cmd_train(&common, agent, steps, sorter),
        Command::Evaluate {
            policy,
            checkpoints,
            common,
        } => cmd_evaluate(&common, &policy, checkpoints.as_deref()),
        Command::Benchmark {
            checkpoints,
            jobs,
            common,
        } => cmd_benchmark(&common, checkpoints.as_deref(), jobs),
        Command::TraceReplay { trace, .. } => cmd_trace_replay(&trace),
        Command::ObsSpec { write } => {
            let doc = observation_spec_markdown();
            match write {
                Some(p) => std::fs::write(&p, doc).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{doc}"),
            }
            Ok(EXIT_OK)
        }
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            let usage = e
                .downcast_ref::<recyclegym::Error>()
                .is_some_and(|e| matches!(e, recyclegym::Error::Config(_)))
                || e.downcast_ref::<recyclegym::ConfigError>().is_some();
            eprintln!("error: {e:#}");
            if usage {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}
