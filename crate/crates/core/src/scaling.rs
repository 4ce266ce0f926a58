//! Min-max scaling shared by every observation block.

use alloc::vec::Vec;

/// Map each entry to `2((x - min)/(max - min) - 0.5)`, i.e. onto [-1, 1].
/// A constant vector maps to all zeros so observations stay bounded and
/// symmetric when a block carries no spread.
pub fn minmax_scale(x: &[f64]) -> Vec<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in x {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        return alloc::vec![0.0; x.len()];
    }
    let span = hi - lo;
    x.iter().map(|&v| 2.0 * ((v - lo) / span - 0.5)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn linear_map() {
        assert_eq!(minmax_scale(&[2.0, 4.0, 6.0]), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_vector_maps_to_zero() {
        assert_eq!(minmax_scale(&[5.0, 5.0, 5.0]), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn endpoints() {
        assert_eq!(minmax_scale(&[0.0, 1.0]), vec![-1.0, 1.0]);
    }

    #[test]
    fn empty_is_empty() {
        assert!(minmax_scale(&[]).is_empty());
    }
}
