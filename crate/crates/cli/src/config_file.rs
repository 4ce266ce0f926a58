//! Scenario config files: TOML, one key per parameter, SI units except the
//! transmit powers which carry an explicit `_dbm` suffix.
//!
//! Omitted keys fall back to the reference scenario; `n_c`, `sigma_z2`, and
//! `beta_threshold` additionally derive from the other parameters when not
//! given (cycles per step from the step duration, noise power from a
//! -174 dBm/Hz density over 2 MHz with an 8 dB noise figure, and the
//! good-channel threshold from the path loss at 300 m).

use anyhow::{bail, Context, Result};
use cfho_core::config::{dbm_to_watts, ScenarioConfig};
use cfho_core::math;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub b: Option<usize>,
    pub m: Option<usize>,
    pub b_con: Option<usize>,
    pub p_d_dbm: Option<f64>,
    pub p_u_dbm: Option<f64>,
    pub tau_c: Option<u32>,
    pub tau_p: Option<u32>,
    pub t_s: Option<f64>,
    pub f_c: Option<f64>,
    pub v_u: Option<f64>,
    pub delta_bar: Option<f64>,
    pub n_c: Option<u32>,
    pub sigma_z2: Option<f64>,
    pub alpha_pl: Option<f64>,
    pub d_0: Option<f64>,
    pub d_h: Option<f64>,
    pub sigma_sh_db: Option<f64>,
    pub iota: Option<f64>,
    pub d_decorr: Option<f64>,
    pub gamma_o: Option<f64>,
    pub beta_threshold: Option<f64>,
    pub tau_0: Option<u32>,
    pub tau_ho: Option<u32>,
    pub mu_e: Option<f64>,
    pub load_max: Option<u32>,
    pub area_side: Option<f64>,
    pub episode_distance: Option<f64>,
    pub seed: Option<u64>,
    pub lag_est: Option<u32>,
    pub jitter_frac: Option<f64>,
    pub equal_loads: Option<bool>,
    pub mobility: Option<String>,
    pub nat_log: Option<bool>,
}

/// Parse and validate a scenario config file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let file: ConfigFile = toml::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    apply(file)
}

/// Turn a parsed file into a validated config.
pub fn apply(file: ConfigFile) -> Result<ScenarioConfig> {
    let base = ScenarioConfig::default();
    let waypoint = match file.mobility.as_deref() {
        None | Some("straight") => false,
        Some("waypoint") => true,
        Some(other) => bail!("config field `mobility`: unknown pattern `{other}`"),
    };
    let mut cfg = ScenarioConfig {
        ap_count: file.b.unwrap_or(base.ap_count),
        antennas: file.m.unwrap_or(base.antennas),
        serving_size: file.b_con.unwrap_or(base.serving_size),
        dl_power_w: file.p_d_dbm.map_or(base.dl_power_w, dbm_to_watts),
        ul_power_w: file.p_u_dbm.map_or(base.ul_power_w, dbm_to_watts),
        cycle_len: file.tau_c.unwrap_or(base.cycle_len),
        pilot_len: file.tau_p.unwrap_or(base.pilot_len),
        sample_period_s: file.t_s.unwrap_or(base.sample_period_s),
        carrier_hz: file.f_c.unwrap_or(base.carrier_hz),
        user_speed_mps: file.v_u.unwrap_or(base.user_speed_mps),
        step_duration_s: file.delta_bar.unwrap_or(base.step_duration_s),
        cycles_per_step: file.n_c.unwrap_or(0),
        noise_power_w: file.sigma_z2.unwrap_or(0.0),
        pl_exponent: file.alpha_pl.unwrap_or(base.pl_exponent),
        pl_ref_dist_m: file.d_0.unwrap_or(base.pl_ref_dist_m),
        height_gap_m: file.d_h.unwrap_or(base.height_gap_m),
        shadow_std_db: file.sigma_sh_db.unwrap_or(base.shadow_std_db),
        shadow_mix: file.iota.unwrap_or(base.shadow_mix),
        decorr_dist_m: file.d_decorr.unwrap_or(base.decorr_dist_m),
        history_discount: file.gamma_o.unwrap_or(base.history_discount),
        good_lsf_threshold: file.beta_threshold.unwrap_or(0.0),
        ho_base_overhead: file.tau_0.unwrap_or(base.ho_base_overhead),
        ho_unit_overhead: file.tau_ho.unwrap_or(base.ho_unit_overhead),
        mean_load: file.mu_e.unwrap_or(base.mean_load),
        max_load: file.load_max.unwrap_or(base.max_load),
        area_side_m: file.area_side.unwrap_or(base.area_side_m),
        episode_distance_m: file.episode_distance.unwrap_or(base.episode_distance_m),
        seed: file.seed.unwrap_or(base.seed),
        est_lag: file.lag_est.unwrap_or(0),
        jitter_frac: file.jitter_frac.unwrap_or(base.jitter_frac),
        equal_loads: file.equal_loads.unwrap_or(false),
        waypoint_mobility: waypoint,
        natural_log_rates: file.nat_log.unwrap_or(false),
    };
    if cfg.est_lag == 0 {
        cfg.est_lag = cfg.pilot_len / 2;
    }
    cfg.fill_derived();
    cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(cfg)
}

/// Render a config back into its file form (every key explicit).
pub fn to_file(cfg: &ScenarioConfig) -> ConfigFile {
    ConfigFile {
        b: Some(cfg.ap_count),
        m: Some(cfg.antennas),
        b_con: Some(cfg.serving_size),
        p_d_dbm: Some(watts_to_dbm(cfg.dl_power_w)),
        p_u_dbm: Some(watts_to_dbm(cfg.ul_power_w)),
        tau_c: Some(cfg.cycle_len),
        tau_p: Some(cfg.pilot_len),
        t_s: Some(cfg.sample_period_s),
        f_c: Some(cfg.carrier_hz),
        v_u: Some(cfg.user_speed_mps),
        delta_bar: Some(cfg.step_duration_s),
        n_c: Some(cfg.cycles_per_step),
        sigma_z2: Some(cfg.noise_power_w),
        alpha_pl: Some(cfg.pl_exponent),
        d_0: Some(cfg.pl_ref_dist_m),
        d_h: Some(cfg.height_gap_m),
        sigma_sh_db: Some(cfg.shadow_std_db),
        iota: Some(cfg.shadow_mix),
        d_decorr: Some(cfg.decorr_dist_m),
        gamma_o: Some(cfg.history_discount),
        beta_threshold: Some(cfg.good_lsf_threshold),
        tau_0: Some(cfg.ho_base_overhead),
        tau_ho: Some(cfg.ho_unit_overhead),
        mu_e: Some(cfg.mean_load),
        load_max: Some(cfg.max_load),
        area_side: Some(cfg.area_side_m),
        episode_distance: Some(cfg.episode_distance_m),
        seed: Some(cfg.seed),
        lag_est: Some(cfg.est_lag),
        jitter_frac: Some(cfg.jitter_frac),
        equal_loads: Some(cfg.equal_loads),
        mobility: Some(if cfg.waypoint_mobility { "waypoint" } else { "straight" }.to_string()),
        nat_log: Some(cfg.natural_log_rates),
    }
}

/// Serialize a config to TOML text.
pub fn save_config(cfg: &ScenarioConfig) -> Result<String> {
    Ok(toml::to_string_pretty(&to_file(cfg))?)
}

fn watts_to_dbm(w: f64) -> f64 {
    10.0 * math::log10(w) + 30.0
}
