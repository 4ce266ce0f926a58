//! Host-side plumbing for the cell-free handoff lab: the config file
//! format, training and evaluation drivers with their CSV outputs, the
//! closed-form validation harness, and the latency benchmark.

pub mod bench;
pub mod config_file;
pub mod eval;
pub mod train;
pub mod validate;

/// Exact binomial coefficient; the discrete action-space cardinality
/// `C(B, B_con)` a one-hot policy head would need.
pub fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc * u128::from(n - k + i) / u128::from(i);
    }
    acc
}

/// Continuous action dimension and discrete action-space cardinality.
pub fn action_space_sizes(ap_count: usize, serving_size: usize) -> (usize, u128) {
    (
        ap_count,
        binomial(ap_count as u64, serving_size as u64),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_space_reference_values() {
        assert_eq!(action_space_sizes(9, 5), (9, 126));
        assert_eq!(action_space_sizes(27, 5), (27, 80730));
        assert_eq!(action_space_sizes(5, 5), (5, 1));
        assert_eq!(binomial(30, 5), 142506);
    }
}
