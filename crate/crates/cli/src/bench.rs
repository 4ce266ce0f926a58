//! Inference latency of the deployed policy: actor forward plus the
//! continuous-to-serving-set mapping, observation construction excluded.

use anyhow::Result;
use cfho_core::env::map_action;
use cfho_core::nn::Mlp;
use cfho_core::rng::RngStream;
use cfho_core::sac::{actor_sample, SacHyper};
use serde::Serialize;
use std::path::Path;
use std::time::Instant;

#[derive(Clone, Debug, Serialize)]
pub struct LatencyReport {
    pub ap_count: usize,
    pub serving_size: usize,
    pub calls: u64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
}

/// Measure per-decision latency over `calls` warm invocations on one
/// thread.
pub fn bench_latency(
    actor: &Mlp,
    ap_count: usize,
    serving_size: usize,
    calls: u64,
) -> LatencyReport {
    let calls = calls.max(1000);
    let obs_dim = actor.in_dim();
    let hyper = SacHyper::for_action_dim(ap_count);
    let mut rng = RngStream::new(99, 0);
    let obs: Vec<Vec<f64>> = (0..64)
        .map(|_| (0..obs_dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
        .collect();

    // warm the caches and the branch predictors
    for i in 0..200 {
        let s = actor_sample(actor, &hyper, &obs[i % obs.len()], None);
        std::hint::black_box(map_action(&s.action, serving_size));
    }

    let mut samples_ms = Vec::with_capacity(calls as usize);
    for i in 0..calls {
        let o = &obs[(i as usize) % obs.len()];
        let t0 = Instant::now();
        let s = actor_sample(actor, &hyper, o, None);
        let decision = map_action(&s.action, serving_size);
        let dt = t0.elapsed();
        std::hint::black_box(decision);
        samples_ms.push(dt.as_secs_f64() * 1e3);
    }
    samples_ms.sort_by(f64::total_cmp);
    let pick = |q: f64| samples_ms[((q * calls as f64) as usize).min(samples_ms.len() - 1)];
    LatencyReport {
        ap_count,
        serving_size,
        calls,
        median_ms: pick(0.5),
        p95_ms: pick(0.95),
        mean_ms: samples_ms.iter().sum::<f64>() / calls as f64,
    }
}

/// Write `bench.json`.
pub fn write_json(report: &LatencyReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("bench.json"),
        serde_json::to_string_pretty(report)?,
    )?;
    Ok(())
}
