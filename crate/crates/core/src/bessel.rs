//! Zeroth-order Bessel function of the first kind.
//!
//! Own implementation so the temporal-correlation model carries no external
//! special-function dependency and stays bit-reproducible. The ascending
//! series is used for small arguments and the Hankel asymptotic expansion
//! beyond; the crossover sits where both sides are comfortably inside an
//! absolute error of 1e-9 (validated in tests against a frozen high
//! precision table).

use crate::math;

const SERIES_LIMIT: f64 = 12.0;

/// J0(x) with absolute error below 1e-9 for all finite arguments.
pub fn j0(x: f64) -> f64 {
    let ax = math::abs(x);
    if ax < SERIES_LIMIT {
        j0_series(ax)
    } else {
        j0_asymptotic(ax)
    }
}

/// Ascending series: sum_k (-1)^k (x^2/4)^k / (k!)^2.
fn j0_series(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= -q / (k * k);
        sum += term;
        if math::abs(term) < 1e-18 {
            return sum;
        }
        k += 1.0;
        if k > 200.0 {
            return sum;
        }
    }
}

/// Hankel expansion J0(x) ~ sqrt(2/(pi x)) (P cos(chi) - Q sin(chi)),
/// chi = x - pi/4, with the P/Q series truncated at their smallest term.
fn j0_asymptotic(x: f64) -> f64 {
    // c_k = ((2k-1)!!)^2 / (k! 8^k); even k feed P, odd k feed Q, signs
    // alternating pairwise: P = c0 - c2/x^2 + ..., Q = -c1/x + c3/x^3 - ...
    let mut p = 0.0;
    let mut q = 0.0;
    let mut c = 1.0; // c_0
    let mut xk = 1.0; // x^k
    let mut last = f64::INFINITY;
    let mut k = 0u32;
    loop {
        let t = c / xk;
        if t >= last {
            break; // divergent tail reached
        }
        last = t;
        let sign = if ((k + 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * t;
        } else {
            q += sign * t;
        }
        if t < 1e-17 || k > 40 {
            break;
        }
        let kf = k as f64;
        c *= (2.0 * kf + 1.0) * (2.0 * kf + 1.0) / (8.0 * (kf + 1.0));
        xk *= x;
        k += 1;
    }
    let chi = x - core::f64::consts::FRAC_PI_4;
    math::sqrt(2.0 / (core::f64::consts::PI * x)) * (p * math::cos(chi) - q * math::sin(chi))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen 30-digit reference values (x, J0(x)).
    const J0_TABLE: &[(f64, f64)] = &[
        (0.0, 1.0),
        (1e-08, 1.0),
        (0.01, 0.9999750001562495),
        (0.025145, 0.9998419384899941),
        (0.1, 0.99750156206604),
        (0.5, 0.9384698072408129),
        (1.0, 0.7651976865579666),
        (2.0, 0.22389077914123567),
        (2.404825557695773, -6.10876525973673e-17),
        (2.5145, -0.05556549031314845),
        (3.0, -0.26005195490193345),
        (4.0, -0.39714980986384735),
        (5.0, -0.1775967713143383),
        (5.520078110286311, -2.7522649432621832e-17),
        (6.0, 0.15064525725099692),
        (7.0, 0.3000792705195556),
        (7.9, 0.19436184484127825),
        (8.0, 0.1716508071375539),
        (8.653727912911013, -7.948465570525162e-17),
        (9.0, -0.09033361118287614),
        (10.0, -0.24593576445134835),
        (11.0, -0.1711903004071961),
        (11.791534439014281, -6.538994895807815e-17),
        (12.0, 0.047689310796833535),
        (13.0, 0.20692610237706782),
        (14.930917708487787, -1.460389551237033e-16),
        (16.0, -0.1748990739836292),
        (20.0, 0.16702466434058316),
        (25.0, 0.09626678327595811),
        (30.0, -0.08636798358104021),
        (40.0, 0.00736689058423729),
        (50.0, 0.055812327669251816),
    ];

    #[test]
    fn matches_reference_table_to_1e9() {
        for &(x, want) in J0_TABLE {
            let got = j0(x);
            assert!(
                crate::math::abs(got - want) < 1e-9,
                "j0({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn at_zero_is_exactly_one() {
        assert_eq!(j0(0.0), 1.0);
    }

    #[test]
    fn even_in_x() {
        for &(x, _) in J0_TABLE {
            assert_eq!(j0(x), j0(-x));
        }
    }

    #[test]
    fn magnitude_bounded_by_one() {
        let mut x = 0.0;
        while x < 100.0 {
            assert!(crate::math::abs(j0(x)) <= 1.0 + 1e-12);
            x += 0.0137;
        }
    }
}
