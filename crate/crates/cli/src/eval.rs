//! Matched-trial Monte Carlo evaluation of handoff policies.
//!
//! Every policy replays the same trials: episode `k` uses the same network
//! realization, trajectory, and loads regardless of who is choosing the
//! serving sets, so policy comparisons are paired. The trained policy acts
//! deterministically (tanh of the actor mean).

use anyhow::{bail, Result};
use cfho_core::env::{baseline_random, purpose, HandoffEnv, ObsMode};
use cfho_core::nn::Mlp;
use cfho_core::rng::RngStream;
use cfho_core::sac::{actor_sample, SacHyper};
use cfho_core::ScenarioConfig;
use rayon::prelude::*;
use std::fmt;
use std::io::Write;
use std::path::Path;

/// Policy under evaluation.
#[derive(Clone)]
pub enum Policy {
    /// Trained actor, deterministic at evaluation.
    Drl(Mlp),
    /// Best observable LSF (full observability only).
    Lsf,
    /// Uniform serving sets.
    Random,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Drl(_) => "drl",
            Policy::Lsf => "lsf",
            Policy::Random => "random",
        }
    }
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One evaluated episode.
#[derive(Clone, Debug, Default)]
pub struct EpisodeTrace {
    pub episode: u64,
    pub rates: Vec<f64>,
    pub rewards: Vec<f64>,
    pub alphas: Vec<f64>,
    pub handoffs: Vec<u32>,
    pub serving_sets: Vec<Vec<bool>>,
}

impl EpisodeTrace {
    pub fn sum_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Decision steps that charged at least one handoff.
    pub fn ho_steps(&self) -> u32 {
        self.handoffs.iter().filter(|&&n| n > 0).count() as u32
    }
}

/// Aggregated evaluation of one policy.
#[derive(Clone, Debug)]
pub struct PolicyReport {
    pub policy: String,
    /// Per-step rate samples, episode-major.
    pub rates: Vec<f64>,
    pub mean_rate: f64,
    pub mean_reward: f64,
    /// Mean cumulative handoffs by step index.
    pub mean_cumulative_hos: Vec<f64>,
    /// Mean number of steps per episode containing at least one handoff.
    pub mean_ho_steps: f64,
    pub episodes: u64,
}

/// Full evaluation output across policies, plus the trial pairing.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub policies: Vec<PolicyReport>,
    pub steps_per_episode: u32,
    /// Seed and episode indices defining the matched trials.
    pub seed: u64,
    pub episodes: u64,
    pub first_episode_traces: Vec<(String, EpisodeTrace)>,
}

/// Run one episode under a policy.
pub fn run_episode(
    cfg: &ScenarioConfig,
    mode: ObsMode,
    episode: u64,
    policy: &Policy,
) -> Result<EpisodeTrace> {
    let mut env = HandoffEnv::new(cfg.clone(), mode);
    let mut obs = env.reset(episode);
    let hyper = SacHyper::for_action_dim(cfg.ap_count);
    let mut policy_rng = RngStream::for_purpose(cfg.seed, purpose::POLICY, episode);
    let mut trace = EpisodeTrace {
        episode,
        ..EpisodeTrace::default()
    };
    loop {
        let out = match policy {
            Policy::Drl(actor) => {
                let a = actor_sample(actor, &hyper, &obs, None).action;
                env.step(&a)
            }
            Policy::Lsf => {
                let a = env.baseline_lsf().map_err(|e| anyhow::anyhow!("{e}"))?;
                env.step_binary(&a)
            }
            Policy::Random => {
                let a = baseline_random(cfg.ap_count, cfg.serving_size, &mut policy_rng);
                env.step_binary(&a)
            }
        }
        .map_err(|e| anyhow::anyhow!("{e}"))?;
        trace.rates.push(out.rate);
        trace.rewards.push(out.reward);
        trace.alphas.push(out.data_time_fraction);
        trace.handoffs.push(out.handoffs);
        trace.serving_sets.push(env.serving_set().to_vec());
        obs = out.observation;
        if out.done {
            break;
        }
    }
    Ok(trace)
}

/// Evaluate the requested policies over matched trials.
pub fn evaluate(
    cfg: &ScenarioConfig,
    mode: ObsMode,
    policies: &[Policy],
    episodes: u64,
    single_thread: bool,
) -> Result<EvalReport> {
    if mode.partial() && policies.iter().any(|p| matches!(p, Policy::Lsf)) {
        bail!("the LSF baseline cannot run in a partially observable mode");
    }
    let steps = cfg.steps_per_episode();
    let mut reports = Vec::new();
    let mut first_traces = Vec::new();
    for policy in policies {
        let run = |episode: u64| run_episode(cfg, mode, episode, policy);
        let traces: Vec<EpisodeTrace> = if single_thread {
            (0..episodes).map(run).collect::<Result<_>>()?
        } else {
            (0..episodes)
                .into_par_iter()
                .map(run)
                .collect::<Result<_>>()?
        };
        let mut rates = Vec::with_capacity((episodes * u64::from(steps)) as usize);
        let mut sum_reward = 0.0;
        let mut cum = vec![0.0; steps as usize];
        let mut ho_steps = 0.0;
        for t in &traces {
            rates.extend_from_slice(&t.rates);
            sum_reward += t.sum_reward();
            let mut acc = 0.0;
            for (s, &n) in t.handoffs.iter().enumerate() {
                acc += f64::from(n);
                cum[s] += acc;
            }
            ho_steps += f64::from(t.ho_steps());
        }
        let n_ep = episodes as f64;
        let mean_rate = rates.iter().sum::<f64>() / rates.len() as f64;
        reports.push(PolicyReport {
            policy: policy.name().to_string(),
            mean_rate,
            mean_reward: sum_reward / (n_ep * f64::from(steps)),
            mean_cumulative_hos: cum.iter().map(|c| c / n_ep).collect(),
            mean_ho_steps: ho_steps / n_ep,
            episodes,
            rates,
        });
        first_traces.push((policy.name().to_string(), traces[0].clone()));
    }
    Ok(EvalReport {
        policies: reports,
        steps_per_episode: steps,
        seed: cfg.seed,
        episodes,
        first_episode_traces: first_traces,
    })
}

/// Empirical rate CDF on a fixed probability grid: each row is an order
/// statistic, so the inverse CDF of the emitted points reproduces the
/// sorted samples exactly.
pub fn rate_cdf(samples: &[f64], grid: usize) -> Vec<(f64, f64)> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let points = grid.min(n);
    (1..=points)
        .map(|j| {
            let f = j as f64 / points as f64;
            let idx = ((f * n as f64).ceil() as usize).clamp(1, n) - 1;
            (sorted[idx], f)
        })
        .collect()
}

impl EvalReport {
    /// Write `rate_cdf.csv`, `ho_accum.csv`, and per-policy first-episode
    /// traces into a directory.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut cdf = std::fs::File::create(dir.join("rate_cdf.csv"))?;
        writeln!(cdf, "policy,rate,cdf")?;
        for p in &self.policies {
            for (rate, f) in rate_cdf(&p.rates, 1000) {
                writeln!(cdf, "{},{rate},{f}", p.policy)?;
            }
        }

        let mut ho = std::fs::File::create(dir.join("ho_accum.csv"))?;
        writeln!(ho, "step,policy,mean_cumulative_hos")?;
        for p in &self.policies {
            for (s, c) in p.mean_cumulative_hos.iter().enumerate() {
                writeln!(ho, "{},{},{c}", s + 1, p.policy)?;
            }
        }

        for (name, trace) in &self.first_episode_traces {
            let mut f = std::fs::File::create(dir.join(format!("trace_{name}.csv")))?;
            writeln!(f, "step,serving_aps,rate,alpha,handoffs,reward")?;
            for s in 0..trace.rates.len() {
                let aps: Vec<String> = trace.serving_sets[s]
                    .iter()
                    .enumerate()
                    .filter(|(_, &on)| on)
                    .map(|(b, _)| b.to_string())
                    .collect();
                writeln!(
                    f,
                    "{},{},{},{},{},{}",
                    s + 1,
                    aps.join(" "),
                    trace.rates[s],
                    trace.alphas[s],
                    trace.handoffs[s],
                    trace.rewards[s]
                )?;
            }
        }

        let mut summary = std::fs::File::create(dir.join("eval_summary.csv"))?;
        writeln!(summary, "policy,episodes,mean_rate,mean_penalized_reward,mean_ho_steps")?;
        for p in &self.policies {
            writeln!(
                summary,
                "{},{},{},{},{}",
                p.policy, p.episodes, p.mean_rate, p.mean_reward, p.mean_ho_steps
            )?;
        }
        Ok(())
    }
}

/// Write the AP layout of one trial as `layout.csv` (ap_id, x, y).
pub fn write_layout_csv(cfg: &ScenarioConfig, episode: u64, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut env = HandoffEnv::new(cfg.clone(), ObsMode::Da);
    env.reset(episode);
    let mut f = std::fs::File::create(dir.join("layout.csv"))?;
    writeln!(f, "ap_id,x,y")?;
    for (i, p) in env.layout().ap_positions.iter().enumerate() {
        writeln!(f, "{i},{},{}", p.x, p.y)?;
    }
    Ok(())
}
