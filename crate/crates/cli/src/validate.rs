//! Closed-form validation: run the signal-level Monte Carlo against the
//! moment expressions on randomized small instances and report every term.

use anyhow::Result;
use cfho_core::math;
use cfho_core::rate::{
    monte_carlo_moments, power_normalization, xi_terms_full, Moment, MultiUserRateInputs,
};
use cfho_core::rng::RngStream;
use cfho_core::ScenarioConfig;
use std::io::Write;
use std::path::Path;

/// One validated term.
#[derive(Clone, Debug)]
pub struct TermRow {
    pub instance: usize,
    pub term: String,
    pub closed_form: f64,
    pub empirical: f64,
    pub std_err: f64,
    pub rel_err: f64,
}

impl TermRow {
    /// Inside 2% relative error, or 3 standard errors for noisy terms.
    pub fn passes(&self) -> bool {
        self.rel_err < 0.02 || (self.empirical - self.closed_form).abs() <= 3.0 * self.std_err
    }
}

/// Randomized small multiuser instance (a few APs, up to three users, the
/// first two sharing a pilot so contamination is exercised).
pub fn random_instance(seed: u64, ap_count: usize, users: usize) -> MultiUserRateInputs {
    let mut rng = RngStream::new(seed, 0);
    let cfg = ScenarioConfig {
        ap_count,
        antennas: 8,
        ..ScenarioConfig::default()
    };
    let mut lsf = vec![0.0; ap_count * users];
    for v in lsf.iter_mut() {
        *v = math::powf(10.0, rng.uniform_in(-10.0, -8.0));
    }
    let pilot_group_of: Vec<usize> = (0..users).map(|u| u.saturating_sub(1)).collect();
    let groups = pilot_group_of.iter().max().unwrap() + 1;
    let group_instants: Vec<u32> = (0..groups as u32).map(|g| g + 1).collect();
    let mut serving = vec![false; users * ap_count];
    for u in 0..users {
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

fn row(instance: usize, term: String, closed: f64, m: Moment) -> TermRow {
    TermRow {
        instance,
        term,
        closed_form: closed,
        empirical: m.value,
        std_err: m.std_err,
        rel_err: if closed != 0.0 {
            (m.value - closed).abs() / closed
        } else {
            m.value.abs()
        },
    }
}

/// Validate `instances` random instances at `samples` draws each.
pub fn run_validation(instances: usize, samples: u64, base_seed: u64) -> Vec<TermRow> {
    let specs: Vec<(usize, usize, usize)> = (0..instances)
        .map(|i| {
            let ap_count = 2 + i % 4; // 2..=5 APs
            let users = 1 + i % 3; // 1..=3 users
            (i, ap_count, users)
        })
        .collect();
    let mut rows: Vec<TermRow> = Vec::new();
    for &(i, ap_count, users) in &specs {
        let inst = random_instance(base_seed + i as u64, ap_count, users);
        // vary the data instant across instances, including n_est itself
        let n_est = inst.cfg.estimation_instant();
        let n = n_est + (i as u32 * 17) % (inst.cfg.cycle_len - n_est);
        let mut rng = RngStream::new(base_seed ^ 0xACE1, i as u64);
        let rep = monte_carlo_moments(&inst, 0, n, samples, &mut rng);
        let xi = xi_terms_full(&inst, 0, n);
        rows.push(row(i, "desired_power".into(), xi.desired, rep.desired));
        let bu_ca = Moment {
            value: rep.beam_uncertainty.value + rep.aging.value,
            std_err: rep.beam_uncertainty.std_err + rep.aging.std_err,
        };
        rows.push(row(i, "beam_uncertainty_plus_aging".into(), xi.beam_aging, bu_ca));
        for ((u, m), (u2, form)) in rep.interference.iter().zip(&xi.interference) {
            assert_eq!(u, u2);
            rows.push(row(i, format!("interference_user{u}"), *form, *m));
        }
    }
    rows
}

/// Write `validation.csv`.
pub fn write_csv(rows: &[TermRow], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join("validation.csv"))?;
    writeln!(f, "instance,term,closed_form,empirical,std_err,rel_err,pass")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            r.instance, r.term, r.closed_form, r.empirical, r.std_err, r.rel_err, r.passes()
        )?;
    }
    Ok(())
}
