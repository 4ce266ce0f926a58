//! Closed-form achievable rates under conjugate beamforming, plus the
//! signal-level Monte Carlo that validates them.
//!
//! Two rate expressions live here:
//!
//! * [`reward_rate`] — the single-user, SNR-flavored rate that drives the
//!   decision reward. Its estimate variance drops the pilot interference
//!   term and the interference from non-serving APs is emulated from their
//!   LSF alone, so the expression depends only on quantities the typical
//!   user can track.
//! * [`rate_lower_bound_full`] — the multiuser capacity lower bound built
//!   from the exact moment terms ([`xi_terms_full`]): coherent desired
//!   power, beamformer-uncertainty plus channel-aging power, and per
//!   interferer multiuser interference with a pilot-contamination branch.
//!
//! [`monte_carlo_moments`] simulates the whole pilot/estimation/precoding
//! chain and reports the empirical moments with standard errors; the moment
//! expressions here carry an `M` prefactor on the noncoherent terms (and
//! `M^2` on the coherent ones), which is what the simulated signal model
//! actually produces.

use crate::complex::{dot_conj, Complex};
use crate::config::ScenarioConfig;
use crate::math;
use crate::propagation::temporal_corr;
use crate::rng::RngStream;
use alloc::vec;
use alloc::vec::Vec;

/// Power normalization `eta = p_d / (M (load + 1) psi_S)` for one AP. A
/// fully aged link (`psi_S = 0`) gets zero power and contributes nothing.
pub fn power_normalization(est_var_snr: f64, load: u32, cfg: &ScenarioConfig) -> f64 {
    if est_var_snr <= 0.0 {
        return 0.0;
    }
    cfg.dl_power_w / (cfg.antennas as f64 * f64::from(load + 1) * est_var_snr)
}

/// Interference proxy from the non-serving APs: `p_d sum_b (1 - a_b) beta_b`.
pub fn emulated_interference(serving: &[bool], lsf: &[f64], cfg: &ScenarioConfig) -> f64 {
    debug_assert_eq!(serving.len(), lsf.len());
    cfg.dl_power_w
        * serving
            .iter()
            .zip(lsf)
            .filter(|(&a, _)| !a)
            .map(|(_, &b)| b)
            .sum::<f64>()
}

/// Everything the reward-side rate needs for one decision step.
pub struct RewardRateInputs<'a> {
    /// Serving decisions, one per AP.
    pub serving: &'a [bool],
    /// Large-scale fading per AP.
    pub lsf: &'a [f64],
    /// SNR-based estimate variance per AP.
    pub est_var_snr: &'a [f64],
    /// Power normalization per AP.
    pub power_norm: &'a [f64],
    /// AP loads (used for bookkeeping; the power norms already reflect them).
    pub loads: &'a [u32],
    /// Temporal correlation at data lags `0..=tau_c - n_est`, i.e. one entry
    /// per data-phase channel use.
    pub rho_data: &'a [f64],
    pub cfg: &'a ScenarioConfig,
}

/// Achievable rate averaged over the small-scale fading, in bits (or nats)
/// per channel use:
/// `(1/tau_c) sum_n log(1 + xi1_S[n] / (xi23_S + I_hat + sigma_z^2))` with
/// `xi1_S[n] = M^2 rho^2[n] (sum_b a_b sqrt(eta_b) psi_S_b)^2` and
/// `xi23_S = M^2 sum_b a_b eta_b beta_b psi_S_b`.
pub fn reward_rate(inputs: &RewardRateInputs) -> f64 {
    let cfg = inputs.cfg;
    let m = cfg.antennas as f64;
    let m2 = m * m;
    let mut coherent = 0.0;
    let mut noncoherent = 0.0;
    for b in 0..inputs.serving.len() {
        if inputs.serving[b] {
            let eta = inputs.power_norm[b];
            let psi = inputs.est_var_snr[b];
            coherent += math::sqrt(eta) * psi;
            noncoherent += eta * inputs.lsf[b] * psi;
        }
    }
    let denom = m2 * noncoherent
        + emulated_interference(inputs.serving, inputs.lsf, cfg)
        + cfg.noise_power_w;
    let mut acc = 0.0;
    for &rho in inputs.rho_data {
        let sinr = m2 * rho * rho * coherent * coherent / denom;
        acc += log_rate(sinr, cfg);
    }
    acc / cfg.cycle_len as f64
}

#[inline]
fn log_rate(sinr: f64, cfg: &ScenarioConfig) -> f64 {
    if cfg.natural_log_rates {
        math::ln_1p(sinr)
    } else {
        math::ln_1p(sinr) * core::f64::consts::LOG2_E
    }
}

/// A multiuser network snapshot for the exact rate path: serving sets,
/// pilot assignment, and per-(AP, user) gains.
#[derive(Clone, Debug)]
pub struct MultiUserRateInputs {
    pub ap_count: usize,
    pub users: usize,
    /// Row-major `[user][ap]` serving flags.
    pub serving: Vec<bool>,
    /// Pilot group index per user; groups partition the users.
    pub pilot_group_of: Vec<usize>,
    /// Training instant of each pilot group (1-based, within the pilot phase).
    pub group_instants: Vec<u32>,
    /// Row-major `[ap][user]` large-scale fading.
    pub lsf: Vec<f64>,
    /// Row-major `[ap][user]` power normalization.
    pub power_norm: Vec<f64>,
    pub cfg: ScenarioConfig,
}

impl MultiUserRateInputs {
    #[inline]
    pub fn lsf_at(&self, ap: usize, user: usize) -> f64 {
        self.lsf[ap * self.users + user]
    }

    #[inline]
    pub fn power_at(&self, ap: usize, user: usize) -> f64 {
        self.power_norm[ap * self.users + user]
    }

    #[inline]
    pub fn serves(&self, user: usize, ap: usize) -> bool {
        self.serving[user * self.ap_count + ap]
    }

    /// Estimate variance of user `u` at AP `b` with the full copilot
    /// denominator of its pilot group.
    pub fn estimate_variance(&self, ap: usize, user: usize) -> f64 {
        let cfg = &self.cfg;
        let group = self.pilot_group_of[user];
        let lag = cfg.estimation_instant() - self.group_instants[group];
        let rho = temporal_corr(lag, cfg);
        let mut den = cfg.noise_power_w;
        for w in 0..self.users {
            if self.pilot_group_of[w] == group {
                den += cfg.ul_power_w * self.lsf_at(ap, w);
            }
        }
        let b = self.lsf_at(ap, user);
        rho * rho * cfg.ul_power_w * b * b / den
    }

    fn data_rho(&self, n: u32) -> f64 {
        temporal_corr(n - self.cfg.estimation_instant(), &self.cfg)
    }
}

/// The closed-form moment terms for one user at one data instant.
#[derive(Clone, Debug)]
pub struct XiTerms {
    /// Coherent desired-signal power (`xi_1`).
    pub desired: f64,
    /// Beamformer-uncertainty plus channel-aging power (`xi_23`),
    /// independent of the data instant.
    pub beam_aging: f64,
    /// Multiuser interference power per other user (`xi_4`).
    pub interference: Vec<(usize, f64)>,
}

/// Evaluate the closed-form moments for `target_user` at data instant `n`.
pub fn xi_terms_full(inputs: &MultiUserRateInputs, target_user: usize, n: u32) -> XiTerms {
    let m = inputs.cfg.antennas as f64;
    let rho_n = inputs.data_rho(n);
    let target_group = inputs.pilot_group_of[target_user];

    let mut coherent = 0.0;
    let mut noncoherent = 0.0;
    for b in 0..inputs.ap_count {
        if inputs.serves(target_user, b) {
            let eta = inputs.power_at(b, target_user);
            let psi = inputs.estimate_variance(b, target_user);
            coherent += math::sqrt(eta) * psi;
            noncoherent += eta * inputs.lsf_at(b, target_user) * psi;
        }
    }

    let mut interference = Vec::new();
    for u in 0..inputs.users {
        if u == target_user {
            continue;
        }
        let copilot = inputs.pilot_group_of[u] == target_group;
        let mut plain = 0.0;
        let mut contaminated = 0.0;
        for b in 0..inputs.ap_count {
            if inputs.serves(u, b) {
                let eta = inputs.power_at(b, u);
                let psi_u = inputs.estimate_variance(b, u);
                plain += eta * inputs.lsf_at(b, target_user) * psi_u;
                if copilot {
                    let psi_t = inputs.estimate_variance(b, target_user);
                    contaminated += math::sqrt(eta) * math::sqrt(psi_t * psi_u);
                }
            }
        }
        let mut xi4 = m * plain;
        if copilot {
            xi4 += rho_n * rho_n * m * m * contaminated * contaminated;
        }
        interference.push((u, xi4));
    }

    XiTerms {
        desired: m * m * rho_n * rho_n * coherent * coherent,
        beam_aging: m * noncoherent,
        interference,
    }
}

/// Capacity lower bound for `target_user`, bits (or nats) per channel use.
pub fn rate_lower_bound_full(inputs: &MultiUserRateInputs, target_user: usize) -> f64 {
    let cfg = &inputs.cfg;
    let mut acc = 0.0;
    for n in cfg.estimation_instant()..=cfg.cycle_len {
        let xi = xi_terms_full(inputs, target_user, n);
        let interference: f64 = xi.interference.iter().map(|&(_, v)| v).sum();
        let sinr = xi.desired / (xi.beam_aging + interference + cfg.noise_power_w);
        acc += log_rate(sinr, cfg);
    }
    acc / cfg.cycle_len as f64
}

/// One empirical moment with its standard error.
#[derive(Clone, Copy, Debug)]
pub struct Moment {
    pub value: f64,
    pub std_err: f64,
}

/// Empirical moment report from the signal-level simulation.
#[derive(Clone, Debug)]
pub struct MomentReport {
    /// `|E{DS}|^2`.
    pub desired: Moment,
    /// `E{|BU|^2}` (variance of the through-estimate path).
    pub beam_uncertainty: Moment,
    /// `E{|CA|^2}`.
    pub aging: Moment,
    /// `E{|DS + BU|^2}`, for the variance-identity check.
    pub desired_plus_bu: Moment,
    /// `E{|MI|^2}` per interfering user.
    pub interference: Vec<(usize, Moment)>,
    /// Empirical correlation between estimation error and estimate.
    pub estimate_error_corr: f64,
    pub samples: u64,
}

/// Simulate pilot reception, LMMSE estimation, conjugate beamforming, and
/// the term decomposition at data instant `n`; returns empirical moments
/// with block-based standard errors. Samples are drawn in blocks with one
/// derived stream per block and reduced in a fixed order.
pub fn monte_carlo_moments(
    inputs: &MultiUserRateInputs,
    target_user: usize,
    n: u32,
    samples: u64,
    rng: &mut RngStream,
) -> MomentReport {
    let cfg = &inputs.cfg;
    let b_count = inputs.ap_count;
    let users = inputs.users;
    let m = cfg.antennas;
    let n_est = cfg.estimation_instant();
    let rho_n = inputs.data_rho(n);
    let rho_n_bar = math::sqrt((1.0 - rho_n * rho_n).max(0.0));

    // per-group constants
    let groups = inputs.group_instants.len();
    let group_rho: Vec<f64> = (0..groups)
        .map(|g| temporal_corr(n_est - inputs.group_instants[g], cfg))
        .collect();
    let group_members: Vec<Vec<usize>> = (0..groups)
        .map(|g| {
            (0..users)
                .filter(|&u| inputs.pilot_group_of[u] == g)
                .collect()
        })
        .collect();
    // LMMSE scaling per (ap, user)
    let mut est_gain = vec![0.0; b_count * users];
    for b in 0..b_count {
        for g in 0..groups {
            let mut den = cfg.noise_power_w;
            for &w in &group_members[g] {
                den += cfg.ul_power_w * inputs.lsf_at(b, w);
            }
            for &w in &group_members[g] {
                est_gain[b * users + w] =
                    group_rho[g] * math::sqrt(cfg.ul_power_w) * inputs.lsf_at(b, w) / den;
            }
        }
    }

    let key = rng.next_u64();
    let blocks = 40u64.min(samples.max(1));
    let others: Vec<usize> = (0..users).filter(|&u| u != target_user).collect();

    // per-block estimates
    let mut bl_desired = Vec::with_capacity(blocks as usize);
    let mut bl_bu = Vec::with_capacity(blocks as usize);
    let mut bl_ca = Vec::with_capacity(blocks as usize);
    let mut bl_dsbu = Vec::with_capacity(blocks as usize);
    let mut bl_mi = vec![Vec::with_capacity(blocks as usize); others.len()];
    let mut err_dot = Complex::ZERO;
    let mut err_sq = 0.0;
    let mut est_sq = 0.0;
    let first_serving = (0..b_count)
        .find(|&b| inputs.serves(target_user, b))
        .unwrap_or(0);

    // workspaces
    let mut g_est = vec![Complex::ZERO; b_count * users * m];
    let mut h_hat = vec![Complex::ZERO; b_count * users * m];
    let mut y = vec![Complex::ZERO; m];
    let mut v_n = vec![Complex::ZERO; b_count * m];
    let mut h_target_n = vec![Complex::ZERO; m];

    let mut done = 0u64;
    for block in 0..blocks {
        let mut blk = RngStream::new(key, block);
        let quota = (samples * (block + 1)) / blocks - done;
        done += quota;

        let mut sum_x = Complex::ZERO;
        let mut sum_x2 = 0.0;
        let mut sum_ca = 0.0;
        let mut sum_mi = vec![0.0; others.len()];

        for _ in 0..quota {
            // channels at the estimation instant (unit-variance parts)
            for z in g_est.iter_mut() {
                let (re, im) = blk.complex_normal();
                *z = Complex::new(re, im);
            }
            // pilot phase and LMMSE estimates
            for b in 0..b_count {
                for g in 0..groups {
                    let (rho_g, rho_g_bar) =
                        (group_rho[g], math::sqrt((1.0 - group_rho[g] * group_rho[g]).max(0.0)));
                    for item in y.iter_mut() {
                        let (re, im) = blk.complex_normal();
                        *item = Complex::new(re, im).scale(math::sqrt(cfg.noise_power_w));
                    }
                    for &w in &group_members[g] {
                        let amp = math::sqrt(cfg.ul_power_w * inputs.lsf_at(b, w));
                        for a in 0..m {
                            let (vr, vi) = blk.complex_normal();
                            let aged = g_est[(b * users + w) * m + a].scale(rho_g)
                                + Complex::new(vr, vi).scale(rho_g_bar);
                            y[a] += aged.scale(amp);
                        }
                    }
                    for &w in &group_members[g] {
                        let c = est_gain[b * users + w];
                        for a in 0..m {
                            h_hat[(b * users + w) * m + a] = y[a].scale(c);
                        }
                    }
                }
            }
            // innovations of the target user's channels at the data instant
            for z in v_n.iter_mut() {
                let (re, im) = blk.complex_normal();
                *z = Complex::new(re, im);
            }

            // desired + beamformer-uncertainty path and aging path
            let mut x = Complex::ZERO;
            let mut ca = Complex::ZERO;
            for b in 0..b_count {
                if !inputs.serves(target_user, b) {
                    continue;
                }
                let beta = inputs.lsf_at(b, target_user);
                let eta = inputs.power_at(b, target_user);
                let base = (b * users + target_user) * m;
                let h_est = &g_est[base..base + m];
                let h_hat_bu = &h_hat[base..base + m];
                let mut a_dot = dot_conj(h_est, h_hat_bu);
                a_dot = a_dot.scale(math::sqrt(beta) * math::sqrt(eta));
                x += a_dot;
                let ca_dot = dot_conj(&v_n[b * m..(b + 1) * m], h_hat_bu);
                ca += ca_dot.scale(math::sqrt(eta * beta));
            }
            x = x.scale(rho_n);
            ca = ca.scale(rho_n_bar);
            sum_x += x;
            sum_x2 += x.abs_sq();
            sum_ca += ca.abs_sq();

            // multiuser interference per other user
            for (k, &u2) in others.iter().enumerate() {
                let mut mi = Complex::ZERO;
                for b in 0..b_count {
                    if !inputs.serves(u2, b) {
                        continue;
                    }
                    let beta_t = inputs.lsf_at(b, target_user);
                    for a in 0..m {
                        let g_n = g_est[(b * users + target_user) * m + a].scale(rho_n)
                            + v_n[b * m + a].scale(rho_n_bar);
                        h_target_n[a] = g_n.scale(math::sqrt(beta_t));
                    }
                    let base2 = (b * users + u2) * m;
                    let d = dot_conj(&h_target_n, &h_hat[base2..base2 + m]);
                    mi += d.scale(math::sqrt(inputs.power_at(b, u2)));
                }
                sum_mi[k] += mi.abs_sq();
            }

            // estimation error versus estimate on the first serving AP
            let base = (first_serving * users + target_user) * m;
            let beta = inputs.lsf_at(first_serving, target_user);
            for a in 0..m {
                let h = g_est[base + a].scale(math::sqrt(beta));
                let e = h - h_hat[base + a];
                err_dot += e * h_hat[base + a].conj();
                err_sq += e.abs_sq();
                est_sq += h_hat[base + a].abs_sq();
            }
        }

        let q = quota as f64;
        let mean = sum_x.scale(1.0 / q);
        let ds = mean.abs_sq();
        let dsbu = sum_x2 / q;
        bl_desired.push(ds);
        bl_bu.push(dsbu - ds);
        bl_ca.push(sum_ca / q);
        bl_dsbu.push(dsbu);
        for (k, s) in sum_mi.iter().enumerate() {
            bl_mi[k].push(s / q);
        }
    }

    let corr = math::sqrt(err_dot.abs_sq()) / math::sqrt(err_sq * est_sq);
    MomentReport {
        desired: blocks_to_moment(&bl_desired),
        beam_uncertainty: blocks_to_moment(&bl_bu),
        aging: blocks_to_moment(&bl_ca),
        desired_plus_bu: blocks_to_moment(&bl_dsbu),
        interference: others
            .iter()
            .zip(&bl_mi)
            .map(|(&u, bl)| (u, blocks_to_moment(bl)))
            .collect(),
        estimate_error_corr: corr,
        samples,
    }
}

fn blocks_to_moment(blocks: &[f64]) -> Moment {
    let k = blocks.len() as f64;
    let mean = blocks.iter().sum::<f64>() / k;
    let var = blocks.iter().map(|&b| (b - mean) * (b - mean)).sum::<f64>() / (k - 1.0).max(1.0);
    Moment {
        value: mean,
        std_err: math::sqrt(var / k),
    }
}
