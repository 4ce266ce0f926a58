//! `cfho` — train, evaluate, and inspect handoff policies for a simulated
//! user-centric cell-free network.

use anyhow::{bail, Context, Result};
use cfho_cli::{action_space_sizes, bench, config_file, eval, train, validate};
use cfho_core::env::ObsMode;
use cfho_core::nn::Mlp;
use cfho_core::ScenarioConfig;
use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "cfho", version, about = "Cell-free massive MIMO handoff lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Da,
    Ha,
    #[value(name = "po-da")]
    PoDa,
    #[value(name = "po-ha")]
    PoHa,
}

impl From<ModeArg> for ObsMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Da => ObsMode::Da,
            ModeArg::Ha => ObsMode::Ha,
            ModeArg::PoDa => ObsMode::PoDa,
            ModeArg::PoHa => ObsMode::PoHa,
        }
    }
}

#[derive(clap::Args, Clone)]
struct ScenarioArgs {
    /// Scenario config file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base overhead for initiating handoffs, channel uses (overrides the
    /// config).
    #[arg(long)]
    tau0: Option<u32>,
    /// Base seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => config_file::load_config(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(tau0) = self.tau0 {
            cfg.ho_base_overhead = tau0;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a handoff policy with soft actor-critic.
    Train {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Observation mode.
        #[arg(long, value_enum, default_value = "da")]
        mode: ModeArg,
        /// Training episodes.
        #[arg(long, default_value_t = 2000)]
        episodes: u64,
        /// Output directory for train_log.csv and policy.ckpt.
        #[arg(long)]
        out: PathBuf,
        /// Suppress progress lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate policies over matched trials and emit CSV reports.
    Evaluate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Trained policy checkpoint (required when `drl` is requested).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated policies: drl, lsf, random.
        #[arg(long, default_value = "drl,lsf,random", value_delimiter = ',')]
        policies: Vec<String>,
        /// Observation mode; defaults to the checkpoint's trained mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Evaluation episodes.
        #[arg(long, default_value_t = 2000)]
        episodes: u64,
        /// Output directory for rate_cdf.csv, ho_accum.csv, and traces.
        #[arg(long)]
        out: PathBuf,
        /// Run trials sequentially for exact cross-platform reproduction.
        #[arg(long)]
        single_thread: bool,
    },
    /// Check the closed-form rate moments against the signal simulation.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Monte Carlo draws per instance.
        #[arg(long, default_value_t = 200_000)]
        samples: u64,
        /// Number of random instances.
        #[arg(long, default_value_t = 10)]
        instances: usize,
        /// Output directory for validation.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Report the continuous action dimension and the discrete cardinality.
    ActionSpace {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// AP count (overrides the config).
        #[arg(long)]
        b: Option<usize>,
        /// Serving-set size (overrides the config).
        #[arg(long)]
        b_con: Option<usize>,
    },
    /// Measure policy inference latency.
    Bench {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Trained policy checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Timed calls (at least 1000).
        #[arg(long, default_value_t = 2000)]
        calls: u64,
        /// Output directory for bench.json.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_actor(path: &PathBuf) -> Result<(Mlp, ObsMode, usize)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let ckpt = cfho_core::checkpoint::deserialize(&bytes).map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok((ckpt.params.actor, ckpt.mode, ckpt.ap_count as usize))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train {
            scenario,
            mode,
            episodes,
            out,
            quiet,
        } => {
            let cfg = scenario.load()?;
            let result = train::cmd_train(&cfg, mode.into(), episodes, &out, quiet)?;
            println!(
                "trained {episodes} episodes; best rolling reward {:.3}; checkpoint at {}",
                result.best_rolling,
                out.join("policy.ckpt").display()
            );
        }
        Command::Evaluate {
            scenario,
            checkpoint,
            policies,
            mode,
            episodes,
            out,
            single_thread,
        } => {
            let cfg = scenario.load()?;
            let mut list = Vec::new();
            let mut trained_mode = None;
            for name in &policies {
                match name.as_str() {
                    "drl" => {
                        let path = checkpoint
                            .as_ref()
                            .context("--checkpoint is required for the drl policy")?;
                        let (actor, ckpt_mode, ap_count) = load_actor(path)?;
                        if ap_count != cfg.ap_count {
                            bail!(
                                "checkpoint was trained for {ap_count} APs, config has {}",
                                cfg.ap_count
                            );
                        }
                        trained_mode = Some(ckpt_mode);
                        list.push(eval::Policy::Drl(actor));
                    }
                    "lsf" => list.push(eval::Policy::Lsf),
                    "random" => list.push(eval::Policy::Random),
                    other => bail!("unknown policy `{other}` (expected drl, lsf, random)"),
                }
            }
            let mode: ObsMode = match (mode, trained_mode) {
                (Some(m), Some(t)) if ObsMode::from(m) != t => {
                    bail!("--mode disagrees with the checkpoint's trained mode")
                }
                (Some(m), _) => m.into(),
                (None, Some(t)) => t,
                (None, None) => ObsMode::Da,
            };
            let report = eval::evaluate(&cfg, mode, &list, episodes, single_thread)?;
            report.write_csv(&out)?;
            eval::write_layout_csv(&cfg, 0, &out)?;
            for p in &report.policies {
                println!(
                    "{:>7}: mean rate {:.4}  mean penalized reward {:.4}  HO steps/episode {:.2}",
                    p.policy, p.mean_rate, p.mean_reward, p.mean_ho_steps
                );
            }
            println!("reports written to {}", out.display());
        }
        Command::Validate {
            scenario,
            samples,
            instances,
            out,
        } => {
            let cfg = scenario.load()?;
            let rows = validate::run_validation(instances, samples, cfg.seed);
            validate::write_csv(&rows, &out)?;
            let failed: Vec<_> = rows.iter().filter(|r| !r.passes()).collect();
            for r in &rows {
                println!(
                    "instance {:>2} {:<28} closed {:>12.6e} empirical {:>12.6e} rel {:.4} {}",
                    r.instance,
                    r.term,
                    r.closed_form,
                    r.empirical,
                    r.rel_err,
                    if r.passes() { "ok" } else { "FAIL" }
                );
            }
            if !failed.is_empty() {
                bail!("{} validation rows failed", failed.len());
            }
            println!("all {} terms within tolerance", rows.len());
        }
        Command::ActionSpace { scenario, b, b_con } => {
            let cfg = scenario.load().unwrap_or_default();
            let ap_count = b.unwrap_or(cfg.ap_count);
            let serving = b_con.unwrap_or(cfg.serving_size);
            if serving > ap_count {
                bail!("b_con exceeds b ({serving} > {ap_count})");
            }
            let (cont, disc) = action_space_sizes(ap_count, serving);
            println!("continuous action dimension: {cont}");
            println!("discrete action cardinality: {disc}");
        }
        Command::Bench {
            scenario,
            checkpoint,
            calls,
            out,
        } => {
            let cfg = scenario.load()?;
            let (actor, _, ap_count) = load_actor(&checkpoint)?;
            let report = bench::bench_latency(&actor, ap_count, cfg.serving_size, calls);
            bench::write_json(&report, &out)?;
            println!(
                "latency over {} calls: median {:.4} ms, p95 {:.4} ms",
                report.calls, report.median_ms, report.p95_ms
            );
        }
    }
    Ok(())
}
