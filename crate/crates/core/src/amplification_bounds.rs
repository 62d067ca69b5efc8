//! The single-box bound chain and the bias thresholds: the observed-to-true
//! ratio bound, the induced upper bounds on the true Bell value and the
//! randomness distance, the closed-form asymptotic envelope `delta_big`, and
//! the two epsilon thresholds (plain and Ky Fan refined).

use std::sync::OnceLock;

use serde::Serialize;

use crate::boxes::delta_q;
use crate::numeric::{binary_entropy, bisect, ln_add_exp};
use crate::sv_source::{ky_fan_bounds, setting_prob_bounds, ConditionalBounds, SvParameter};

/// Everything the bound chain yields for one `(epsilon, r)` point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundChainResult {
    pub epsilon: f64,
    pub r_bits: u32,
    pub n_settings: usize,
    pub ky_fan: bool,
    /// Lower bound on `delta_obs / delta_true`: `n p_min zeta_min / p_max`.
    pub ratio_lower_bound: f64,
    /// Upper bound on the true Bell value when `delta_Q` is observed.
    pub delta_true_upper: f64,
    /// Upper bound on the randomness distance; equals
    /// `(n/2) * delta_true_upper`.
    pub d_upper: f64,
    /// The closed-form asymptotic envelope of `d_upper` (always evaluated
    /// with the plain bounds).
    pub delta_big: f64,
    pub ln_delta_true_upper: f64,
    pub ln_d_upper: f64,
    pub ln_delta_big: f64,
}

/// `n p_min zeta_min / p_max`, the guaranteed observed-to-true ratio.
/// Equals 1 exactly for an unbiased source.
pub fn ratio_bound(bounds: &ConditionalBounds) -> f64 {
    ln_ratio_bound(bounds).exp()
}

fn ln_ratio_bound(bounds: &ConditionalBounds) -> f64 {
    let ln_n = (bounds.n_settings as f64).ln();
    (ln_n + bounds.ln_p_min) + (bounds.ln_zeta_min - bounds.ln_p_max)
}

/// `delta_Q p_max / (n p_min zeta_min)`: what observing the quantum value
/// still allows the true Bell value to be.
pub fn delta_true_upper(bounds: &ConditionalBounds) -> f64 {
    ln_delta_true_upper(bounds).exp()
}

pub fn ln_delta_true_upper(bounds: &ConditionalBounds) -> f64 {
    delta_q(bounds.n_settings).ln() - ln_ratio_bound(bounds)
}

/// `delta_Q p_max / (2 p_min zeta_min)`: the induced bound on the
/// randomness distance, `(n/2)` times [`delta_true_upper`].
pub fn d_upper(bounds: &ConditionalBounds) -> f64 {
    ln_d_upper(bounds).exp()
}

pub fn ln_d_upper(bounds: &ConditionalBounds) -> f64 {
    ln_delta_true_upper(bounds) + (bounds.n_settings as f64 / 2.0).ln()
}

fn ln_pow2_minus_one(exponent: u32) -> f64 {
    // ln(2^exponent - 1)
    if exponent <= 63 {
        (((1u64 << exponent) - 1) as f64).ln()
    } else {
        let ln2 = std::f64::consts::LN_2;
        exponent as f64 * ln2 + (-((-(exponent as f64) * ln2).exp())).ln_1p()
    }
}

/// The asymptotic envelope
/// `(pi^2/8) 4^{r+1} p_+^{12r} / (p_-^{6r} (p_+^{2r} + (2^{r+1}-1) p_-^{2r})^3)`,
/// evaluated in log space so that no power underflows.
pub fn ln_delta_big(params: SvParameter, r_bits: u32) -> f64 {
    let r = r_bits as f64;
    let lp = params.p_plus().ln();
    let lm = params.p_minus().ln();
    let ln_denom_core = ln_add_exp(2.0 * r * lp, ln_pow2_minus_one(r_bits + 1) + 2.0 * r * lm);
    (std::f64::consts::PI.powi(2) / 8.0).ln() + (r + 1.0) * 4.0_f64.ln() + 12.0 * r * lp
        - 6.0 * r * lm
        - 3.0 * ln_denom_core
}

pub fn delta_big(params: SvParameter, r_bits: u32) -> f64 {
    ln_delta_big(params, r_bits).exp()
}

/// The plain threshold `(2^{1/12} - 1) / (2 (2^{1/12} + 1))`, the largest
/// bias for which `delta_big` eventually decays.
pub fn threshold_epsilon1() -> f64 {
    let t = 2.0_f64.powf(1.0 / 12.0);
    (t - 1.0) / (2.0 * (t + 1.0))
}

/// The constant `c` solving `H(c/2) = 1/2` for the binary entropy, found by
/// bisection (the entropy is monotone on `(0, 1/2)`).
pub fn solve_entropy_constant_with_tol(tol: f64) -> f64 {
    2.0 * bisect(1e-12, 0.5 - 1e-12, tol, |x| binary_entropy(x) - 0.5)
}

pub fn solve_entropy_constant() -> f64 {
    static CACHE: OnceLock<f64> = OnceLock::new();
    *CACHE.get_or_init(|| solve_entropy_constant_with_tol(1e-14))
}

/// The Ky Fan refined threshold
/// `(2^{1/(6(2-c))} - 1) / (2 (2^{1/(6(2-c))} + 1))`.
pub fn threshold_ky_fan() -> f64 {
    threshold_ky_fan_with_constant(solve_entropy_constant())
}

pub fn threshold_ky_fan_with_constant(c: f64) -> f64 {
    let t = 2.0_f64.powf(1.0 / (6.0 * (2.0 - c)));
    (t - 1.0) / (2.0 * (t + 1.0))
}

/// Assemble the full bound chain at `(epsilon, r)`, with `n = 2^{r+1}`.
pub fn bound_chain(
    params: SvParameter,
    r_bits: u32,
    use_ky_fan: bool,
) -> crate::error::Result<BoundChainResult> {
    let n_settings = 1usize << (r_bits + 1);
    let bounds = if use_ky_fan {
        ky_fan_bounds(params, r_bits)?
    } else {
        setting_prob_bounds(params, r_bits, n_settings)?
    };
    Ok(result_from_bounds(params, &bounds, use_ky_fan))
}

fn result_from_bounds(
    params: SvParameter,
    bounds: &ConditionalBounds,
    ky_fan: bool,
) -> BoundChainResult {
    let ln_dtu = ln_delta_true_upper(bounds);
    let ln_du = ln_d_upper(bounds);
    let ln_db = ln_delta_big(params, bounds.r_bits);
    BoundChainResult {
        epsilon: params.epsilon(),
        r_bits: bounds.r_bits,
        n_settings: bounds.n_settings,
        ky_fan,
        ratio_lower_bound: ratio_bound(bounds),
        delta_true_upper: ln_dtu.exp(),
        d_upper: ln_du.exp(),
        delta_big: ln_db.exp(),
        ln_delta_true_upper: ln_dtu,
        ln_d_upper: ln_du,
        ln_delta_big: ln_db,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(eps: f64) -> SvParameter {
        SvParameter::new(eps).unwrap()
    }

    #[test]
    fn ratio_is_exactly_one_for_unbiased_source() {
        for r in [0u32, 2, 5, 10] {
            let b = setting_prob_bounds(params(0.0), r, 1 << (r + 1)).unwrap();
            assert_eq!(ratio_bound(&b), 1.0);
        }
    }

    #[test]
    fn ratio_composes_the_cited_bounds() {
        let b = setting_prob_bounds(params(0.1), 1, 4).unwrap();
        let expected = 4.0 * (1.0 / 9.0) * b.zeta_min() / (3.0 / 7.0);
        assert!((ratio_bound(&b) - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn ratio_decreases_with_bias() {
        let r = 3;
        let n = 16;
        let lo = ratio_bound(&setting_prob_bounds(params(0.01), r, n).unwrap());
        let hi = ratio_bound(&setting_prob_bounds(params(0.05), r, n).unwrap());
        assert!(lo > hi);
        for &eps in &[0.0, 0.05, 0.2, 0.4, 0.49] {
            let v = ratio_bound(&setting_prob_bounds(params(eps), r, n).unwrap());
            assert!(v > 0.0 && v <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn delta_true_upper_equals_quantum_value_when_unbiased() {
        let b = setting_prob_bounds(params(0.0), 2, 8).unwrap();
        assert!((delta_true_upper(&b) - delta_q(8)).abs() < 1e-15);
    }

    #[test]
    fn delta_true_upper_agrees_with_ratio_route() {
        for &eps in &[0.0, 0.01, 0.1] {
            for r in [1u32, 4, 11] {
                let n = 1usize << (r + 1);
                let b = setting_prob_bounds(params(eps), r, n).unwrap();
                let via_ratio = delta_q(n) / ratio_bound(&b);
                let direct = delta_true_upper(&b);
                assert!((via_ratio - direct).abs() / direct < 1e-12);
                assert!(direct.is_finite() && direct > 0.0);
            }
        }
    }

    #[test]
    fn d_upper_is_half_chain_times_true_upper() {
        for &eps in &[0.0, 0.02, 0.3] {
            for r in [1u32, 6, 10] {
                let b = setting_prob_bounds(params(eps), r, 1 << (r + 1)).unwrap();
                let n = b.n_settings as f64;
                let lhs = d_upper(&b);
                let rhs = n / 2.0 * delta_true_upper(&b);
                assert!((lhs - rhs).abs() / rhs < 1e-12);
            }
        }
    }

    #[test]
    fn d_upper_unbiased_small_case() {
        let b = setting_prob_bounds(params(0.0), 1, 4).unwrap();
        let expected = 2.0 * (std::f64::consts::PI / 8.0).sin().powi(2);
        assert!((d_upper(&b) - expected).abs() < 1e-14);
    }

    #[test]
    fn delta_big_matches_direct_arithmetic_for_small_r() {
        for &eps in &[0.0, 0.05, 0.1] {
            let p = params(eps);
            for r in 1..=10u32 {
                let pp = p.p_plus();
                let pm = p.p_minus();
                let n_minus = (1u64 << (r + 1)) as f64 - 1.0;
                let direct = std::f64::consts::PI.powi(2) / 8.0
                    * 4.0_f64.powi(r as i32 + 1)
                    * pp.powi(12 * r as i32)
                    / (pm.powi(6 * r as i32)
                        * (pp.powi(2 * r as i32) + n_minus * pm.powi(2 * r as i32)).powi(3));
                let ln_direct = direct.ln();
                assert!(
                    (ln_delta_big(p, r) - ln_direct).abs() < 1e-12,
                    "eps={eps} r={r}"
                );
            }
        }
    }

    #[test]
    fn delta_big_decays_when_unbiased() {
        let p = params(0.0);
        let mut prev = f64::INFINITY;
        for r in 1..=12u32 {
            let v = delta_big(p, r);
            assert!(v > 0.0 && v < prev, "r={r}");
            prev = v;
        }
    }

    #[test]
    fn delta_big_brackets_the_threshold() {
        // Below the plain threshold the envelope shrinks with r; above it
        // grows.
        let below = params(0.0143);
        assert!(ln_delta_big(below, 60) < ln_delta_big(below, 30));
        let above = params(0.016);
        assert!(ln_delta_big(above, 60) > ln_delta_big(above, 30));
    }

    #[test]
    fn delta_big_is_eventually_monotone_each_side_of_the_threshold() {
        let threshold = threshold_epsilon1();
        for &eps in &[0.0, 0.005, 0.012, threshold - 1e-4] {
            let p = params(eps);
            for r in [30u32, 40, 50, 60] {
                assert!(
                    ln_delta_big(p, r + 10) < ln_delta_big(p, r),
                    "eps={eps} r={r}"
                );
            }
        }
        for &eps in &[threshold + 1e-3, 0.0155, 0.02, 0.05] {
            let p = params(eps);
            for r in [30u32, 40, 50, 60] {
                assert!(
                    ln_delta_big(p, r + 10) > ln_delta_big(p, r),
                    "eps={eps} r={r}"
                );
            }
        }
    }

    #[test]
    fn plain_threshold_matches_root_finding_oracle() {
        let t = threshold_epsilon1();
        assert!((t * 1e4).round() / 1e4 == 0.0144);
        // Independent oracle: bisection on (p_+/p_-)^12 = 2.
        let root = bisect(0.0, 0.1, 1e-15, |eps| {
            ((0.5 + eps) / (0.5 - eps)).powi(12) - 2.0
        });
        assert!((t - root).abs() < 1e-12);
    }

    #[test]
    fn entropy_constant_solves_defining_equation() {
        let c = solve_entropy_constant();
        assert!((binary_entropy(c / 2.0) - 0.5).abs() < 1e-10);
        assert!((c - 0.2201).abs() < 5e-4);
        assert!((binary_entropy(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ky_fan_threshold_value_and_stability() {
        let t = threshold_ky_fan();
        assert!((t * 1e4).round() / 1e4 == 0.0162);
        assert!(t > threshold_epsilon1());
        let t10 = threshold_ky_fan_with_constant(solve_entropy_constant_with_tol(1e-10));
        let t12 = threshold_ky_fan_with_constant(solve_entropy_constant_with_tol(1e-12));
        assert!((t10 - t12).abs() < 1e-9);
    }

    #[test]
    fn bound_chain_assembles_consistently() {
        let res = bound_chain(params(0.01), 11, false).unwrap();
        assert_eq!(res.n_settings, 1 << 12);
        assert!(res.delta_true_upper.is_finite() && res.delta_true_upper > 0.0);
        assert!(res.delta_true_upper < 1.0);
        assert!(
            (res.d_upper - res.n_settings as f64 / 2.0 * res.delta_true_upper).abs() / res.d_upper
                < 1e-12
        );
        let ky = bound_chain(params(0.01), 11, true).unwrap();
        assert!(ky.ky_fan);
        assert!(ky.d_upper.is_finite());
    }

    #[test]
    fn d_upper_collapses_below_threshold_at_large_r() {
        let b = setting_prob_bounds(params(0.01), 40, 1usize << 41).unwrap();
        assert!(d_upper(&b) < 1e-2);
        // Closer to the threshold the decay rate flattens; push r instead.
        let near = setting_prob_bounds(params(0.012), 62, 1usize << 63).unwrap();
        assert!(ln_d_upper(&near) < (1e-2f64).ln());
    }
}
