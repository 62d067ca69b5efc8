//! Exhaustive enumeration oracle for the cloud machinery. Every sequence of
//! ideal/single-contradiction boxes is listed explicitly, clouds are formed
//! from raw detection patterns, and the steering conditionals and constraint
//! residuals are recomputed from first principles for comparison against
//! the closed-form expressions and the program rows.

use serde::Serialize;

use super::{cloud_probability, lp_constraints, AttackEnsemble, AttackParams};
use crate::error::{Error, Result};
use crate::numeric::binomial_f64;

const MAX_M: usize = 6;
const MAX_N: usize = 4;

/// Per-`k` comparison between enumeration and formulas.
#[derive(Debug, Clone, Serialize)]
pub struct CloudCheck {
    pub k: usize,
    pub q_formula: f64,
    pub q_enumerated: f64,
    /// `P(f = i | cloud)` for a detected position `i`, from the formula.
    pub p_f_formula: f64,
    pub p_f_enumerated: f64,
    /// Raw constraint residual `sum (1/(k+s) - c_+) C(m-k, s) (n-1)^s r_{k+s}`.
    pub residual_enumerated: f64,
    /// Matching program row evaluated on the type probabilities, which
    /// equals the raw residual times `C(m, k) n^k`.
    pub lp_row_residual: f64,
    pub scale: f64,
    /// Whether the enumerated conditional respects the steering bound
    /// `P(f = i | cloud) <= c_+`.
    pub satisfies_upper_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CloudOracleReport {
    pub m: usize,
    pub n: usize,
    pub checks: Vec<CloudCheck>,
    /// Largest discrepancy between enumerated and formula cloud
    /// probabilities.
    pub max_q_error: f64,
    /// Largest discrepancy between the scaled enumerated residual and the
    /// program row.
    pub max_residual_error: f64,
}

/// Slot encoding: 0 = ideal box, e in 1..=n = bad box contradicting edge e.
fn sequence_type(seq: &[usize]) -> usize {
    seq.iter().filter(|&&s| s != 0).count()
}

/// Enumerate all `(n+1)^m` sequences; type-0 carries no probability.
fn all_sequences(m: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity((n + 1).pow(m as u32));
    let mut current = vec![0usize; m];
    loop {
        out.push(current.clone());
        let mut pos = 0;
        loop {
            if pos == m {
                return out;
            }
            current[pos] += 1;
            if current[pos] <= n {
                break;
            }
            current[pos] = 0;
            pos += 1;
        }
    }
}

/// Enumerate every cloud exactly and compare against the closed forms.
///
/// The measured edge is fixed to edge 1 in every run (the cloud quantities
/// depend only on the detection count, which the enumeration itself
/// verifies by checking every detection pattern of each size). A cloud is
/// the set of sequences with the detected bad box at each flagged position
/// and anything non-contradicting elsewhere.
pub fn brute_force_cloud_oracle(
    params: &AttackParams,
    ensemble: &AttackEnsemble,
) -> Result<CloudOracleReport> {
    let m = params.m;
    let n = params.n;
    if m > MAX_M || n > MAX_N {
        return Err(Error::OracleRegimeExceeded {
            m,
            n,
            max_m: MAX_M,
            max_n: MAX_N,
        });
    }
    if ensemble.m() != m || ensemble.n() != n {
        return Err(Error::InvalidAttackParameter(
            "ensemble dimensions do not match the attack parameters".into(),
        ));
    }

    let sequences = all_sequences(m, n);
    let prob_of = |seq: &[usize]| -> f64 {
        match sequence_type(seq) {
            0 => 0.0,
            j => ensemble.seq_weight(j),
        }
    };

    let lp = lp_constraints(params);
    let mut checks = Vec::with_capacity(m);
    let mut max_q_error = 0.0f64;
    let mut max_residual_error = 0.0f64;

    for pattern in 1u32..(1 << m) {
        let detected: Vec<usize> = (0..m).filter(|&i| pattern >> i & 1 == 1).collect();
        let k = detected.len();

        // Members: detected slots hold exactly the bad box on the measured
        // edge; undetected slots hold anything that shows no contradiction
        // there.
        let mut q_enumerated = 0.0;
        let mut f_mass = 0.0; // joint mass of {f = first detected position}
        let mut residual = 0.0;
        for seq in &sequences {
            let member = (0..m).all(|i| {
                if detected.contains(&i) {
                    seq[i] == 1
                } else {
                    seq[i] != 1
                }
            });
            if !member {
                continue;
            }
            let p = prob_of(seq);
            if p == 0.0 {
                continue;
            }
            let j = sequence_type(seq);
            q_enumerated += p;
            // The attack points f uniformly at the bad boxes.
            f_mass += p / j as f64;
            residual += p * (1.0 / j as f64 - params.c_plus);
        }

        let q_formula = cloud_probability(ensemble, k, n)?;
        max_q_error = max_q_error.max((q_formula - q_enumerated).abs());

        // Only record one check per detection count; all patterns of the
        // same size must agree, which the assertion below enforces.
        if detected == (0..k).collect::<Vec<_>>() {
            // Zero-probability clouds leave the conditional undefined; the
            // steering bound is vacuous there.
            let p_f_enumerated = if q_enumerated > 0.0 {
                f_mass / q_enumerated
            } else {
                0.0
            };
            let p_f_formula = if q_formula > 0.0 {
                (0..=m - k)
                    .map(|s| {
                        binomial_f64((m - k) as u64, s as u64)
                            * ((n - 1) as f64).powi(s as i32)
                            * ensemble.seq_weight(k + s)
                            / (k + s) as f64
                    })
                    .sum::<f64>()
                    / q_formula
            } else {
                0.0
            };
            let scale = binomial_f64(m as u64, k as u64) * (n as f64).powi(k as i32);
            let lp_row_residual: f64 = (0..m)
                .map(|col| lp.matrix[k - 1][col] * ensemble.type_prob(col + 1))
                .sum();
            max_residual_error = max_residual_error.max((scale * residual - lp_row_residual).abs());
            checks.push(CloudCheck {
                k,
                q_formula,
                q_enumerated,
                p_f_formula,
                p_f_enumerated,
                residual_enumerated: residual,
                lp_row_residual,
                scale,
                satisfies_upper_bound: p_f_enumerated <= params.c_plus + 1e-12,
            });
        } else {
            // Symmetry across same-size patterns.
            let reference = checks
                .iter()
                .find(|c| c.k == k)
                .expect("canonical pattern enumerated first");
            if (reference.q_enumerated - q_enumerated).abs() > 1e-12 {
                return Err(Error::Invalid(format!(
                    "cloud probability not symmetric for k = {k}"
                )));
            }
        }
    }

    checks.sort_by_key(|c| c.k);
    Ok(CloudOracleReport {
        m,
        n,
        checks,
        max_q_error,
        max_residual_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sv_source::SvParameter;

    #[test]
    fn two_run_chsh_cloud_matches_hand_computation() {
        // m = 2, n = 2, uniform r: P(f = i | C^{(1,0)}) = (r1 + r2/2)/(r1 + r2).
        let params = AttackParams::new(2, 2, 0.9, 0.6).unwrap();
        let ensemble = AttackEnsemble::uniform_sequences(2, 2).unwrap();
        let report = brute_force_cloud_oracle(&params, &ensemble).unwrap();
        let (r1, r2) = (ensemble.seq_weight(1), ensemble.seq_weight(2));
        let expected = (r1 + 0.5 * r2) / (r1 + r2);
        let check = &report.checks[0];
        assert!((check.p_f_enumerated - expected).abs() < 1e-15);
        assert!((check.p_f_formula - expected).abs() < 1e-15);
        assert!(report.max_q_error < 1e-15);
    }

    #[test]
    fn residuals_match_lp_rows_across_regime() {
        for (m, n) in [(2usize, 2usize), (3, 2), (4, 4), (6, 4)] {
            let sv = SvParameter::new(0.1).unwrap();
            let r_bits = (n as f64).log2() as u32 - 1;
            let params = AttackParams {
                m,
                n,
                one_minus_a: 0.2,
                c_plus: crate::sv_source::c_plus(sv, m as u64),
                ln_c_plus: crate::sv_source::c_plus(sv, m as u64).ln(),
                c_minus: None,
                epsilon: Some(0.1),
                r_bits: Some(r_bits),
            };
            let ensemble = AttackEnsemble::uniform_sequences(m, n).unwrap();
            let report = brute_force_cloud_oracle(&params, &ensemble).unwrap();
            assert!(report.max_q_error < 1e-12, "m={m} n={n}");
            assert!(report.max_residual_error < 1e-12, "m={m} n={n}");
            assert_eq!(report.checks.len(), m);
        }
    }

    #[test]
    fn regime_guard_rejects_large_instances() {
        let params = AttackParams::new(7, 2, 0.9, 0.5).unwrap();
        let ensemble = AttackEnsemble::uniform_sequences(7, 2).unwrap();
        assert!(matches!(
            brute_force_cloud_oracle(&params, &ensemble),
            Err(Error::OracleRegimeExceeded { .. })
        ));
    }

    #[test]
    fn feasible_optimum_respects_steering_bound_in_enumeration() {
        let sv = SvParameter::new(0.1).unwrap();
        let params = AttackParams::from_source(sv, 1, 4).unwrap();
        let opt = super::super::closed_form_optimum(&params);
        let ensemble =
            AttackEnsemble::from_type_probs(params.m, params.n, opt.to_dense(params.m)).unwrap();
        let report = brute_force_cloud_oracle(&params, &ensemble).unwrap();
        for check in &report.checks {
            assert!(
                check.satisfies_upper_bound,
                "k={} conditional {} exceeds c_+ {}",
                check.k, check.p_f_enumerated, params.c_plus
            );
        }
    }
}
