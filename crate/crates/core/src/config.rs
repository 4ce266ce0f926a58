//! Scenario configuration: every physical, protocol, and penalty parameter
//! of the simulated network, with validation of the cross-field invariants.

use crate::math;
use alloc::format;
use alloc::string::String;

/// Convert a power from dBm to watts.
#[inline]
pub fn dbm_to_watts(dbm: f64) -> f64 {
    math::powf(10.0, (dbm - 30.0) / 10.0)
}

/// Full parameter set for one simulated scenario.
///
/// Durations with a `_s` suffix are seconds, distances `_m` meters, powers
/// `_w` watts; `cycle_len`, `pilot_len`, and the handoff overheads are in
/// channel uses.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    /// Number of access points (B).
    pub ap_count: usize,
    /// Antennas per access point (M).
    pub antennas: usize,
    /// Serving-set size (B_con).
    pub serving_size: usize,
    /// Downlink power budget per AP, watts.
    pub dl_power_w: f64,
    /// Uplink pilot power per user, watts.
    pub ul_power_w: f64,
    /// Channel uses per communication cycle (tau_c).
    pub cycle_len: u32,
    /// Pilot phase length in channel uses (tau_p).
    pub pilot_len: u32,
    /// Sampling period of one channel use, seconds (T_s).
    pub sample_period_s: f64,
    /// Carrier frequency, Hz (f_c).
    pub carrier_hz: f64,
    /// User speed, m/s (v_u).
    pub user_speed_mps: f64,
    /// Wall time between consecutive decision steps, seconds.
    pub step_duration_s: f64,
    /// Communication cycles per decision step (N_c).
    pub cycles_per_step: u32,
    /// Noise power, watts (sigma_z^2).
    pub noise_power_w: f64,
    /// Path-loss exponent (alpha_pl).
    pub pl_exponent: f64,
    /// Path-loss reference distance, m (d_0).
    pub pl_ref_dist_m: f64,
    /// Fixed AP/user height gap, m (d_h).
    pub height_gap_m: f64,
    /// Shadowing standard deviation, dB.
    pub shadow_std_db: f64,
    /// Mixing weight between AP-side and user-side shadowing components (iota).
    pub shadow_mix: f64,
    /// Shadowing decorrelation distance, m.
    pub decorr_dist_m: f64,
    /// Discount for the channel-quality history (gamma_o).
    pub history_discount: f64,
    /// Linear LSF threshold classifying a channel as good.
    pub good_lsf_threshold: f64,
    /// Base overhead for initiating any handoffs, channel uses (tau_0).
    pub ho_base_overhead: u32,
    /// Additional overhead per handoff, channel uses (tau_HO).
    pub ho_unit_overhead: u32,
    /// Mean AP load used as the partial-observability substitute (mu_E).
    pub mean_load: f64,
    /// Maximum AP load; loads are drawn uniformly on {0..max_load}.
    pub max_load: u32,
    /// Side of the wraparound square, m.
    pub area_side_m: f64,
    /// Distance the user travels per episode, m.
    pub episode_distance_m: f64,
    /// Base seed for all random streams.
    pub seed: u64,
    /// Pilot aging lag n_est - i used for the typical user's estimate.
    pub est_lag: u32,
    /// AP placement jitter as a fraction of the grid pitch.
    pub jitter_frac: f64,
    /// Give every AP the same unit load instead of drawing loads.
    pub equal_loads: bool,
    /// Random-waypoint mobility instead of a straight line.
    pub waypoint_mobility: bool,
    /// Report rates in nats instead of bits.
    pub natural_log_rates: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let mut cfg = Self {
            ap_count: 27,
            antennas: 8,
            serving_size: 5,
            dl_power_w: dbm_to_watts(30.0),
            ul_power_w: dbm_to_watts(20.0),
            cycle_len: 200,
            pilot_len: 16,
            sample_period_s: 66.7e-6,
            carrier_hz: 1.8e9,
            user_speed_mps: 10.0,
            step_duration_s: 5.0,
            cycles_per_step: 0,
            noise_power_w: 0.0,
            pl_exponent: 3.8,
            pl_ref_dist_m: 1.1,
            height_gap_m: 13.5,
            shadow_std_db: 6.0,
            shadow_mix: 0.5,
            decorr_dist_m: 100.0,
            history_discount: 0.8,
            good_lsf_threshold: 0.0,
            ho_base_overhead: 2000,
            ho_unit_overhead: 100,
            mean_load: 3.0,
            max_load: 5,
            area_side_m: 1000.0,
            episode_distance_m: 1000.0,
            seed: 1,
            est_lag: 8,
            jitter_frac: 0.25,
            equal_loads: false,
            waypoint_mobility: false,
            natural_log_rates: false,
        };
        cfg.fill_derived();
        cfg
    }
}

impl ScenarioConfig {
    /// Fill the fields whose defaults derive from other fields: the cycle
    /// count per decision step, the noise power (-174 dBm/Hz over 2 MHz with
    /// an 8 dB noise figure), and the good-channel threshold (path loss at
    /// 300 m). Zero marks "unset".
    pub fn fill_derived(&mut self) {
        if self.cycles_per_step == 0 {
            let n = math::round(self.step_duration_s / (self.cycle_len as f64 * self.sample_period_s));
            self.cycles_per_step = n as u32;
        }
        if self.noise_power_w == 0.0 {
            self.noise_power_w = dbm_to_watts(-174.0 + 10.0 * math::log10(2e6) + 8.0);
        }
        if self.good_lsf_threshold == 0.0 {
            self.good_lsf_threshold = crate::propagation::path_loss(300.0, self);
        }
    }

    /// Check every invariant; the error names the offending field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |f: &str, why: String| Err(ConfigError { field: f.into(), reason: why });
        if self.ap_count == 0 {
            return err("b", "must be positive".into());
        }
        if self.serving_size == 0 || self.serving_size > self.ap_count {
            return err("b_con", format!("b_con exceeds b ({} > {})", self.serving_size, self.ap_count));
        }
        if self.pilot_len >= self.cycle_len {
            return err("tau_p", format!("must be below tau_c ({} >= {})", self.pilot_len, self.cycle_len));
        }
        if !(0.0..=1.0).contains(&self.shadow_mix) {
            return err("iota", "must lie in [0, 1]".into());
        }
        if !(self.history_discount > 0.0 && self.history_discount <= 1.0) {
            return err("gamma_o", "must lie in (0, 1]".into());
        }
        for (name, v) in [
            ("p_d", self.dl_power_w),
            ("p_u", self.ul_power_w),
            ("t_s", self.sample_period_s),
            ("f_c", self.carrier_hz),
            ("v_u", self.user_speed_mps),
            ("delta_bar", self.step_duration_s),
            ("sigma_z2", self.noise_power_w),
            ("d_0", self.pl_ref_dist_m),
            ("d_h", self.height_gap_m),
            ("d_decorr", self.decorr_dist_m),
            ("beta_threshold", self.good_lsf_threshold),
            ("area_side", self.area_side_m),
            ("episode_distance", self.episode_distance_m),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return err(name, "must be strictly positive".into());
            }
        }
        if self.antennas == 0 {
            return err("m", "must be positive".into());
        }
        if self.cycles_per_step == 0 {
            return err("n_c", "must be positive".into());
        }
        let step_budget = u64::from(self.cycles_per_step) * u64::from(self.cycle_len);
        let full_swap = u64::from(self.ho_base_overhead)
            + self.serving_size as u64 * u64::from(self.ho_unit_overhead);
        if step_budget < full_swap {
            return err(
                "tau_0",
                format!("n_c*tau_c = {step_budget} cannot absorb a full swap overhead of {full_swap}"),
            );
        }
        if self.est_lag == 0 || self.est_lag > self.pilot_len {
            return err("lag_est", "must lie in [1, tau_p]".into());
        }
        if !(0.0..=0.5).contains(&self.jitter_frac) {
            return err("jitter_frac", "must lie in [0, 0.5]".into());
        }
        if !(self.mean_load >= 0.0) {
            return err("mu_e", "must be non-negative".into());
        }
        Ok(())
    }

    /// Instant at which channel estimation completes (n_est = tau_p + 1).
    #[inline]
    pub fn estimation_instant(&self) -> u32 {
        self.pilot_len + 1
    }

    /// Maximum Doppler shift f_D = f_c v_u / c, Hz (c = 3e8 m/s).
    #[inline]
    pub fn doppler_hz(&self) -> f64 {
        self.carrier_hz * self.user_speed_mps / 3.0e8
    }

    /// Distance covered between two consecutive decision steps, m.
    #[inline]
    pub fn step_length_m(&self) -> f64 {
        self.user_speed_mps * self.step_duration_s
    }

    /// Decision steps per episode.
    #[inline]
    pub fn steps_per_episode(&self) -> u32 {
        math::round(self.episode_distance_m / self.step_length_m()) as u32
    }
}

/// A configuration field violated its invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl core::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.reason)
    }
}
