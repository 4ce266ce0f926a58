//! Training driver: runs the SAC loop, streams the training log, and
//! checkpoints the actor on every new best rolling reward.

use anyhow::{Context, Result};
use cfho_core::env::ObsMode;
use cfho_core::sac::{train, SacHyper, TrainResult};
use cfho_core::ScenarioConfig;
use std::io::Write;
use std::path::Path;

/// Train a policy, writing `train_log.csv` and `policy.ckpt` under
/// `out_dir`. The checkpoint always holds the parameters at the best
/// rolling reward seen so far.
pub fn cmd_train(
    cfg: &ScenarioConfig,
    mode: ObsMode,
    episodes: u64,
    out_dir: &Path,
    quiet: bool,
) -> Result<TrainResult> {
    std::fs::create_dir_all(out_dir)?;
    let log_path = out_dir.join("train_log.csv");
    let mut log = std::fs::File::create(&log_path)
        .with_context(|| format!("creating {}", log_path.display()))?;
    writeln!(
        log,
        "episode,sum_reward,rolling_reward,temperature,critic_loss,actor_loss"
    )?;

    let ckpt_path = out_dir.join("policy.ckpt");
    let hyper = SacHyper::for_action_dim(cfg.ap_count);
    let mut log_err: Option<std::io::Error> = None;
    let result = {
        let mut on_episode = |ep: &cfho_core::sac::EpisodeStats| {
            if let Err(e) = writeln!(
                log,
                "{},{},{},{},{},{}",
                ep.episode,
                ep.sum_reward,
                ep.rolling_reward,
                ep.temperature,
                ep.mean_critic_loss,
                ep.mean_actor_loss
            ) {
                log_err.get_or_insert(e);
            }
            if !quiet && (ep.episode + 1) % 100 == 0 {
                eprintln!(
                    "episode {:>6}  rolling reward {:>10.3}  temperature {:.4}",
                    ep.episode + 1,
                    ep.rolling_reward,
                    ep.temperature
                );
            }
        };
        let ckpt = ckpt_path.clone();
        let cfg_c = cfg.clone();
        let mut on_best = move |trainer: &cfho_core::sac::SacTrainer,
                                _ep: &cfho_core::sac::EpisodeStats| {
            let bytes =
                cfho_core::checkpoint::serialize(trainer, mode, cfg_c.ap_count, 4 * cfg_c.ap_count);
            if let Err(e) = std::fs::write(&ckpt, bytes) {
                eprintln!("warning: checkpoint write failed: {e}");
            }
        };
        train(cfg, mode, hyper, episodes, &mut on_episode, &mut on_best)
    };
    if let Some(e) = log_err {
        return Err(e).context("writing train_log.csv");
    }
    Ok(result)
}
