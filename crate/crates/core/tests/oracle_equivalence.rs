//! Signal-level Monte Carlo versus the closed-form moment terms on a small
//! random instance.

use cfho_core::config::ScenarioConfig;
use cfho_core::rate::{monte_carlo_moments, power_normalization, xi_terms_full, MultiUserRateInputs};
use cfho_core::rng::RngStream;

fn random_instance(seed: u64, ap_count: usize, users: usize) -> MultiUserRateInputs {
    let mut rng = RngStream::new(seed, 0);
    let cfg = ScenarioConfig {
        ap_count,
        antennas: 8,
        ..ScenarioConfig::default()
    };
    let mut lsf = vec![0.0; ap_count * users];
    for v in lsf.iter_mut() {
        // spread over two decades around typical LSF magnitudes
        *v = cfho_core::math::powf(10.0, rng.uniform_in(-10.0, -8.0));
    }
    // users 0 and 1 share a pilot when there are at least two users
    let pilot_group_of: Vec<usize> = (0..users).map(|u| u.saturating_sub(1)).collect();
    let groups = pilot_group_of.iter().max().unwrap() + 1;
    let group_instants: Vec<u32> = (0..groups as u32).map(|g| g + 1).collect();
    let mut serving = vec![false; users * ap_count];
    for u in 0..users {
        // each user is served by a random majority subset
        let mut chosen = 0;
        while chosen < ap_count.div_ceil(2) {
            let b = rng.uniform_int(ap_count as u64) as usize;
            if !serving[u * ap_count + b] {
                serving[u * ap_count + b] = true;
                chosen += 1;
            }
        }
    }
    let mut inst = MultiUserRateInputs {
        ap_count,
        users,
        serving,
        pilot_group_of,
        group_instants,
        lsf,
        power_norm: vec![0.0; ap_count * users],
        cfg,
    };
    for b in 0..ap_count {
        for u in 0..users {
            let psi = inst.estimate_variance(b, u);
            let load = 1 + (b % 3) as u32;
            inst.power_norm[b * users + u] = power_normalization(psi, load, &inst.cfg);
        }
    }
    inst
}

#[test]
fn closed_forms_match_simulation() {
    let inst = random_instance(2024, 3, 2);
    let n = inst.cfg.estimation_instant() + 40;
    let mut rng = RngStream::new(606, 0);
    let rep = monte_carlo_moments(&inst, 0, n, 200_000, &mut rng);
    let xi = xi_terms_full(&inst, 0, n);

    let within = |emp: f64, se: f64, form: f64, label: &str| {
        let rel = (emp - form).abs() / form;
        assert!(
            rel < 0.02 || (emp - form).abs() < 3.0 * se,
            "{label}: empirical {emp:.6e} vs closed form {form:.6e} (rel {rel:.4})"
        );
    };
    within(rep.desired.value, rep.desired.std_err, xi.desired, "desired");
    within(
        rep.beam_uncertainty.value + rep.aging.value,
        rep.beam_uncertainty.std_err + rep.aging.std_err,
        xi.beam_aging,
        "beam+aging",
    );
    for ((u, m), (u2, form)) in rep.interference.iter().zip(&xi.interference) {
        assert_eq!(u, u2);
        within(m.value, m.std_err, *form, "interference");
    }

    // decomposition consistency: E{|DS+BU|^2} = |E{DS}|^2 + E{|BU|^2}
    let lhs = rep.desired_plus_bu.value;
    let rhs = rep.desired.value + rep.beam_uncertainty.value;
    assert!(
        (lhs - rhs).abs() <= 3.0 * (rep.desired_plus_bu.std_err + rep.beam_uncertainty.std_err) + 1e-18,
        "variance identity: {lhs:.6e} vs {rhs:.6e}"
    );

    // LMMSE orthogonality
    assert!(
        rep.estimate_error_corr < 0.01,
        "error/estimate correlation {}",
        rep.estimate_error_corr
    );
}
