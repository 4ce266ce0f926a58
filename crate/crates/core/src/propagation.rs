//! Large-scale fading, correlated shadowing, and channel aging.
//!
//! The channel between an AP and the user factors into a path-loss term, a
//! log-normal shadowing term, and unit-variance small-scale fading whose
//! temporal correlation follows the classic Bessel profile
//! `rho[lag] = J0(2 pi lag f_D T_s)`.
//!
//! Shadowing uses a two-component model: a static per-AP component drawn
//! once per episode with spatial covariance `2^(-d/d_decorr)` between APs,
//! and a user-side component that evolves as a stationary AR(1) process
//! whose one-step correlation is `2^(-v_u dt / d_decorr)`. Mixing weight
//! `iota` splits the variance between the two, so the combined shadowing
//! deviate keeps unit variance at every step.

use crate::bessel::j0;
use crate::complex::Complex;
use crate::config::ScenarioConfig;
use crate::math;
use crate::mobility::{toroidal_distance, NetworkLayout, UserTrack};
use crate::rng::RngStream;
use alloc::vec;
use alloc::vec::Vec;

/// Path gain at in-plane distance `d_xy`, linear scale:
/// `(sqrt(d_xy^2 + d_h^2) / d_0)^(-alpha_pl)`.
pub fn path_loss(d_xy: f64, cfg: &ScenarioConfig) -> f64 {
    let d = math::hypot(d_xy, cfg.height_gap_m);
    math::powf(d / cfg.pl_ref_dist_m, -cfg.pl_exponent)
}

/// Temporal correlation of the small-scale fading at an integer channel-use
/// lag.
pub fn temporal_corr(lag: u32, cfg: &ScenarioConfig) -> f64 {
    j0(2.0 * core::f64::consts::PI * lag as f64 * cfg.doppler_hz() * cfg.sample_period_s)
}

/// Correlation table for every lag a communication cycle can produce.
pub fn temporal_corr_table(cfg: &ScenarioConfig) -> Vec<f64> {
    (0..cfg.cycle_len).map(|lag| temporal_corr(lag, cfg)).collect()
}

/// Two-component shadowing state.
#[derive(Clone, Debug)]
pub struct ShadowField {
    /// Static AP-side deviates (kappa_1), spatially correlated across APs.
    pub ap_component: Vec<f64>,
    /// User-side deviate (kappa_2), refreshed by the AR(1) step.
    pub user_component: f64,
    /// Lower-triangular factor of the AP covariance, kept for diagnostics.
    pub chol: Vec<f64>,
}

/// The AP covariance could not be factored even after diagonal jitter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShadowingError;

impl core::fmt::Display for ShadowingError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "AP shadowing covariance is not positive definite")
    }
}

/// Draw the initial shadowing state for a layout.
pub fn init_shadowing(
    layout: &NetworkLayout,
    cfg: &ScenarioConfig,
    rng: &mut RngStream,
) -> Result<ShadowField, ShadowingError> {
    let b = layout.ap_positions.len();
    let mut cov = vec![0.0; b * b];
    for i in 0..b {
        for j in 0..b {
            let (d, _) = toroidal_distance(
                layout.ap_positions[i],
                layout.ap_positions[j],
                layout.area_side,
            );
            cov[i * b + j] = math::powf(2.0, -d / cfg.decorr_dist_m);
        }
    }
    let chol = cholesky(&cov, b)
        .or_else(|| {
            let mut jittered = cov.clone();
            for i in 0..b {
                jittered[i * b + i] += 1e-10;
            }
            cholesky(&jittered, b)
        })
        .ok_or(ShadowingError)?;

    let white: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
    let mut ap_component = vec![0.0; b];
    for i in 0..b {
        let mut acc = 0.0;
        for j in 0..=i {
            acc += chol[i * b + j] * white[j];
        }
        ap_component[i] = acc;
    }
    Ok(ShadowField {
        ap_component,
        user_component: rng.normal(),
        chol,
    })
}

/// Advance the user-side component one decision step. The AP-side obstacles
/// are static, so only kappa_2 moves; the AR(1) form keeps its marginal
/// variance at one.
pub fn step_shadowing(field: &mut ShadowField, cfg: &ScenarioConfig, rng: &mut RngStream) {
    let c = math::powf(
        2.0,
        -cfg.user_speed_mps * cfg.step_duration_s / cfg.decorr_dist_m,
    );
    field.user_component = c * field.user_component + math::sqrt(1.0 - c * c) * rng.normal();
}

/// Per-AP large-scale fading `beta_b = PL(d_b) * 10^(sigma_sh kappa_b / 10)`
/// with `kappa_b = sqrt(iota) kappa_1b + sqrt(1-iota) kappa_2`.
pub fn large_scale_fading(
    layout: &NetworkLayout,
    track: &UserTrack,
    field: &ShadowField,
    cfg: &ScenarioConfig,
) -> Vec<f64> {
    let w_ap = math::sqrt(cfg.shadow_mix);
    let w_user = math::sqrt(1.0 - cfg.shadow_mix);
    layout
        .ap_positions
        .iter()
        .zip(&field.ap_component)
        .map(|(&ap, &k1)| {
            let (d, _) = toroidal_distance(track.position, ap, layout.area_side);
            let kappa = w_ap * k1 + w_user * field.user_component;
            path_loss(d, cfg) * math::powf(10.0, cfg.shadow_std_db * kappa / 10.0)
        })
        .collect()
}

/// Variance of the LMMSE channel estimate with the full pilot denominator:
/// `rho^2[lag] p_u beta^2 / (sum_copilots p_u beta' + sigma_z^2)`.
/// `copilot_lsfs` must include the user's own LSF.
pub fn mmse_estimate_variance(
    lsf: f64,
    copilot_lsfs: &[f64],
    lag_est: u32,
    cfg: &ScenarioConfig,
) -> f64 {
    let rho = temporal_corr(lag_est, cfg);
    let den: f64 = copilot_lsfs.iter().map(|&b| cfg.ul_power_w * b).sum::<f64>() + cfg.noise_power_w;
    rho * rho * cfg.ul_power_w * lsf * lsf / den
}

/// SNR-based estimate variance used on the reward side:
/// `rho^2[lag] p_u beta^2 / sigma_z^2`, deliberately unclamped (it can
/// exceed beta at high SNR because the pilot interference term is dropped).
pub fn snr_estimate_variance(lsf: f64, lag_est: u32, cfg: &ScenarioConfig) -> f64 {
    let rho = temporal_corr(lag_est, cfg);
    rho * rho * cfg.ul_power_w * lsf * lsf / cfg.noise_power_w
}

/// Per-AP link statistics the decision environment consumes each step.
#[derive(Clone, Debug)]
pub struct LinkStats {
    /// Large-scale fading, linear.
    pub lsf: Vec<f64>,
    /// Estimate variance with the full pilot denominator (no copilots are
    /// modeled for the typical user, so the denominator is its own pilot).
    pub est_var: Vec<f64>,
    /// SNR-based estimate variance.
    pub est_var_snr: Vec<f64>,
    /// Conjugate-beamforming power normalization per AP.
    pub power_norm: Vec<f64>,
    /// Temporal correlation per channel-use lag, `table[0] = 1`.
    pub rho_table: Vec<f64>,
}

impl LinkStats {
    pub fn compute(lsf: &[f64], loads: &[u32], rho_table: &[f64], cfg: &ScenarioConfig) -> Self {
        debug_assert_eq!(lsf.len(), loads.len());
        let est_var: Vec<f64> = lsf
            .iter()
            .map(|&b| mmse_estimate_variance(b, &[b], cfg.est_lag, cfg))
            .collect();
        let est_var_snr: Vec<f64> = lsf
            .iter()
            .map(|&b| snr_estimate_variance(b, cfg.est_lag, cfg))
            .collect();
        let power_norm: Vec<f64> = est_var_snr
            .iter()
            .zip(loads)
            .map(|(&psi, &load)| crate::rate::power_normalization(psi, load, cfg))
            .collect();
        Self {
            lsf: lsf.to_vec(),
            est_var,
            est_var_snr,
            power_norm,
            rho_table: rho_table.to_vec(),
        }
    }
}

/// Draw a channel vector at the estimation instant together with its aged
/// version at correlation `rho_lag`: `h[n] = rho h[0] + sqrt(1-rho^2) v`,
/// both scaled by `sqrt(beta)`.
pub fn sample_aged_channel(
    beta: f64,
    rho_lag: f64,
    antennas: usize,
    rng: &mut RngStream,
) -> (Vec<Complex>, Vec<Complex>) {
    let s = math::sqrt(beta);
    let rho_bar = math::sqrt((1.0 - rho_lag * rho_lag).max(0.0));
    let mut h0 = Vec::with_capacity(antennas);
    let mut hn = Vec::with_capacity(antennas);
    for _ in 0..antennas {
        let (gr, gi) = rng.complex_normal();
        let (vr, vi) = rng.complex_normal();
        h0.push(Complex::new(s * gr, s * gi));
        hn.push(Complex::new(
            s * (rho_lag * gr + rho_bar * vr),
            s * (rho_lag * gi + rho_bar * vi),
        ));
    }
    (h0, hn)
}

/// Plain lower-triangular Cholesky factor of a row-major symmetric matrix;
/// `None` when the matrix is not positive definite.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = math::sqrt(sum);
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}
