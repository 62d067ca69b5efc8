//! The symmetric attack model on the amplification protocol: typed box
//! sequences, clouds of sequences compatible with an observation, the
//! acceptance-probability linear program with its closed-form optimum and
//! dual certificate, a brute-force enumeration oracle for the cloud
//! constraints, the multi-contradiction symmetrization, and the protocol
//! bias threshold.

mod oracle;
pub mod simplex;

pub use oracle::{brute_force_cloud_oracle, CloudCheck, CloudOracleReport};
pub use simplex::{LpSolution, LpStatus};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{binomial_f64, bisect, ln_binomial, ln_sum_exp};
use crate::sv_source::{ln_c_plus, setting_prob_bounds, SvParameter};

/// Parameters of the acceptance analysis: `m` runs, `n` chain edges, `a`
/// the per-run probability that a single-contradiction box escapes
/// detection, and the steering bound `c_+`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AttackParams {
    pub m: usize,
    pub n: usize,
    /// Stored as `1 - a`; the non-detection probability is close to 1 in
    /// the regimes of interest and the complement keeps full precision.
    pub one_minus_a: f64,
    pub c_plus: f64,
    pub ln_c_plus: f64,
    /// Lower steering bound `c_- = p_-^{log2 m}` when the parameters came
    /// from a source; enables the optional lower-side constraint rows.
    pub c_minus: Option<f64>,
    /// Source bias these parameters were derived from, if any.
    pub epsilon: Option<f64>,
    pub r_bits: Option<u32>,
}

impl AttackParams {
    /// Assemble directly from already-computed quantities.
    pub fn new(m: usize, n: usize, a: f64, c_plus: f64) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidAttackParameter(format!("m = {m} < 1")));
        }
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidAttackParameter(format!(
                "n = {n} must be even and >= 2"
            )));
        }
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidAttackParameter(format!(
                "a = {a} outside (0, 1)"
            )));
        }
        if !(c_plus > 0.0 && c_plus <= 1.0) {
            return Err(Error::InvalidAttackParameter(format!(
                "c_plus = {c_plus} outside (0, 1]"
            )));
        }
        Ok(Self {
            m,
            n,
            one_minus_a: 1.0 - a,
            c_plus,
            ln_c_plus: c_plus.ln(),
            c_minus: None,
            epsilon: None,
            r_bits: None,
        })
    }

    /// Derive `a = 1 - p_min zeta_min / p_max` and `c_+ = p_+^{log2 m}`
    /// from the source bounds at `(epsilon, r)`, with `n = 2^{r+1}` and an
    /// explicit run count `m`.
    pub fn from_source(params: SvParameter, r_bits: u32, m: usize) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidAttackParameter(format!("m = {m} < 1")));
        }
        let n = 1usize << (r_bits + 1);
        let bounds = setting_prob_bounds(params, r_bits, n)?;
        let one_minus_a = (bounds.ln_p_min + bounds.ln_zeta_min - bounds.ln_p_max).exp();
        if !(one_minus_a > 0.0 && one_minus_a < 1.0) {
            return Err(Error::InvalidAttackParameter(format!(
                "derived a = {} outside (0, 1)",
                1.0 - one_minus_a
            )));
        }
        // An unbiased source gives c_+ = 2^{-log2 m} = 1/m; storing the
        // division keeps the top-type constraint coefficient 1/m - c_+
        // exactly zero instead of an ulp of noise with the wrong sign.
        let (c_plus, lcp) = if params.is_unbiased() {
            (1.0 / m as f64, -(m as f64).ln())
        } else {
            let lcp = ln_c_plus(params, m as u64);
            (lcp.exp(), lcp)
        };
        let c_minus = ((m as f64).log2() * params.p_minus().ln()).exp();
        Ok(Self {
            m,
            n,
            one_minus_a,
            c_plus,
            ln_c_plus: lcp,
            c_minus: Some(c_minus),
            epsilon: Some(params.epsilon()),
            r_bits: Some(r_bits),
        })
    }

    pub fn a(&self) -> f64 {
        1.0 - self.one_minus_a
    }

    /// `ln a`, accurate even when `1 - a` is far below an ulp of 1.
    pub fn ln_a(&self) -> f64 {
        (-self.one_minus_a).ln_1p()
    }

    /// Whether the dual-certificate precondition `1 - a <= 1/n` holds.
    /// Source-derived parameters always satisfy it.
    pub fn dual_precondition_holds(&self) -> bool {
        self.one_minus_a <= 1.0 / self.n as f64 + 1e-12
    }
}

/// `m = round((n/2)^exponent)` with `n = 2^{r+1}`, plus the derived `a`
/// and `c_+`. The exponent defaults to 1.99 in the protocol analysis.
pub fn derive_attack_params(
    params: SvParameter,
    r_bits: u32,
    m_exponent: f64,
) -> Result<AttackParams> {
    let n = 1usize << (r_bits + 1);
    let m = ((n as f64 / 2.0).powf(m_exponent)).round() as usize;
    AttackParams::from_source(params, r_bits, m.max(1))
}

/// Symmetric attack ensemble: one probability per sequence type
/// (`type_probs[j-1] = P_j`), tied to the per-sequence weights by
/// `P_j = C(m, j) n^j r_j`. `P_0 = 0` throughout.
#[derive(Debug, Clone, Serialize)]
pub struct AttackEnsemble {
    m: usize,
    n: usize,
    type_probs: Vec<f64>,
    ln_seq_weights: Vec<f64>,
}

impl AttackEnsemble {
    pub fn from_type_probs(m: usize, n: usize, type_probs: Vec<f64>) -> Result<Self> {
        if m < 1 || type_probs.len() != m {
            return Err(Error::InvalidAttackParameter(format!(
                "need {m} type probabilities, got {}",
                type_probs.len()
            )));
        }
        let sum: f64 = type_probs.iter().sum();
        if type_probs.iter().any(|&p| p < -1e-12) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidAttackParameter(format!(
                "type probabilities must be nonnegative and sum to 1, got {sum}"
            )));
        }
        let ln_n = (n as f64).ln();
        let ln_seq_weights = type_probs
            .iter()
            .enumerate()
            .map(|(idx, &p)| {
                let j = (idx + 1) as u64;
                p.ln() - ln_binomial(m as u64, j) - j as f64 * ln_n
            })
            .collect();
        Ok(Self {
            m,
            n,
            type_probs,
            ln_seq_weights,
        })
    }

    pub fn from_sequence_weights(m: usize, n: usize, seq_weights: Vec<f64>) -> Result<Self> {
        if m < 1 || seq_weights.len() != m {
            return Err(Error::InvalidAttackParameter(format!(
                "need {m} sequence weights, got {}",
                seq_weights.len()
            )));
        }
        if seq_weights.iter().any(|&r| r < 0.0) {
            return Err(Error::InvalidAttackParameter(
                "sequence weights must be nonnegative".into(),
            ));
        }
        let type_probs: Vec<f64> = seq_weights
            .iter()
            .enumerate()
            .map(|(idx, &r)| {
                let j = (idx + 1) as u64;
                binomial_f64(m as u64, j) * (n as f64).powi(j as i32) * r
            })
            .collect();
        let sum: f64 = type_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidAttackParameter(format!(
                "sequence weights induce total mass {sum}, expected 1"
            )));
        }
        // Renormalize the rounding residue away so the invariant is exact.
        let probs: Vec<f64> = type_probs.iter().map(|p| p / sum).collect();
        Self::from_type_probs(m, n, probs)
    }

    /// Every sequence equally likely: `r_j` constant over all
    /// `(n+1)^m - 1` sequences with at least one bad box.
    pub fn uniform_sequences(m: usize, n: usize) -> Result<Self> {
        let total = ((n + 1) as f64).powi(m as i32) - 1.0;
        let r = 1.0 / total;
        let mut probs: Vec<f64> = (1..=m)
            .map(|j| binomial_f64(m as u64, j as u64) * (n as f64).powi(j as i32) * r)
            .collect();
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        Self::from_type_probs(m, n, probs)
    }

    /// All mass on sequences of one type.
    pub fn single_type(m: usize, n: usize, j: usize) -> Result<Self> {
        if j < 1 || j > m {
            return Err(Error::InvalidAttackParameter(format!(
                "type {j} outside 1..={m}"
            )));
        }
        let mut probs = vec![0.0; m];
        probs[j - 1] = 1.0;
        Self::from_type_probs(m, n, probs)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `P_j` for `j` in `1..=m`.
    pub fn type_prob(&self, j: usize) -> f64 {
        self.type_probs[j - 1]
    }

    pub fn type_probs(&self) -> &[f64] {
        &self.type_probs
    }

    /// `r_j = P_j / (C(m, j) n^j)` for `j` in `1..=m`.
    pub fn seq_weight(&self, j: usize) -> f64 {
        self.ln_seq_weights[j - 1].exp()
    }

    pub fn ln_seq_weight(&self, j: usize) -> f64 {
        self.ln_seq_weights[j - 1]
    }
}

/// Cloud probability
/// `Q_k = sum_{s=0}^{m-k} C(m-k, s) (n-1)^s r_{k+s}`, evaluated in log
/// space.
pub fn cloud_probability(ensemble: &AttackEnsemble, k: usize, n: usize) -> Result<f64> {
    let m = ensemble.m;
    if k < 1 || k > m {
        return Err(Error::CloudIndexOutOfRange { k, m });
    }
    let ln_n1 = ((n - 1) as f64).ln();
    let terms: Vec<f64> = (0..=m - k)
        .map(|s| {
            ln_binomial((m - k) as u64, s as u64) + s as f64 * ln_n1 + ensemble.ln_seq_weight(k + s)
        })
        .collect();
    Ok(ln_sum_exp(&terms).exp())
}

/// The acceptance program in standard form:
/// maximize `(a, ..., a^m) . P` subject to the m cloud rows, the two
/// normalization rows, and `P >= 0`.
#[derive(Debug, Clone, Serialize)]
pub struct LpStandardForm {
    pub objective: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    /// Number of cloud constraint rows at the top of `matrix` (m, or 2m
    /// when the optional lower-side rows are included).
    pub cloud_rows: usize,
}

/// Build the program exactly as displayed: row `k` holds
/// `C(j, j-k) ((n-1)/n)^{j-k} (1/j - c_+)` for `j >= k`, then an all-ones
/// and an all-minus-ones row with right-hand sides 1 and -1.
pub fn lp_constraints(params: &AttackParams) -> LpStandardForm {
    lp_constraints_extended(params, false).expect("upper-side rows need no extra data")
}

/// As [`lp_constraints`], optionally appending the lower-side rows
/// `sum_s (c_- - 1/(k+s)) C ((n-1)/n)^s P_{k+s} <= 0`. The acceptance
/// analysis never needs the lower side; the rows are available for
/// experiments and require source-derived parameters.
pub fn lp_constraints_extended(
    params: &AttackParams,
    include_lower: bool,
) -> Result<LpStandardForm> {
    let m = params.m;
    let n = params.n as f64;
    let q = (n - 1.0) / n;
    let a = params.a();
    let objective: Vec<f64> = (1..=m).map(|k| a.powi(k as i32)).collect();

    let upper_row = |k: usize, bound: f64, sign: f64| -> Vec<f64> {
        (1..=m)
            .map(|j| {
                if j < k {
                    0.0
                } else {
                    sign * binomial_f64(j as u64, (j - k) as u64)
                        * q.powi((j - k) as i32)
                        * (1.0 / j as f64 - bound)
                }
            })
            .collect()
    };

    let mut matrix: Vec<Vec<f64>> = (1..=m).map(|k| upper_row(k, params.c_plus, 1.0)).collect();
    let mut cloud_rows = m;
    if include_lower {
        let c_minus = params.c_minus.ok_or_else(|| {
            Error::InvalidAttackParameter(
                "lower-side rows need source-derived parameters (c_minus)".into(),
            )
        })?;
        // c_- - 1/j = -(1/j - c_-)
        for k in 1..=m {
            matrix.push(upper_row(k, c_minus, -1.0));
        }
        cloud_rows = 2 * m;
    }
    matrix.push(vec![1.0; m]);
    matrix.push(vec![-1.0; m]);
    let mut rhs = vec![0.0; cloud_rows];
    rhs.push(1.0);
    rhs.push(-1.0);
    Ok(LpStandardForm {
        objective,
        matrix,
        rhs,
        cloud_rows,
    })
}

/// Solve the program with the deterministic two-phase simplex.
pub fn simplex_solve(lp: &LpStandardForm) -> Result<LpSolution> {
    simplex::solve(&lp.objective, &lp.matrix, &lp.rhs)
}

/// The closed-form optimum of the acceptance program.
#[derive(Debug, Clone, Serialize)]
pub struct ClosedFormOptimum {
    /// Nonzero primal entries as `(type, probability)`.
    pub support: Vec<(usize, f64)>,
    pub value: f64,
    pub ln_value: f64,
}

impl ClosedFormOptimum {
    pub fn to_dense(&self, m: usize) -> Vec<f64> {
        let mut x = vec![0.0; m];
        for &(j, p) in &self.support {
            x[j - 1] = p;
        }
        x
    }
}

fn inverse_c_plus(params: &AttackParams) -> f64 {
    (-params.ln_c_plus).exp()
}

/// Two-point optimum on types `u = floor(1/c_+)` and `v = u + 1` with
/// `P_v / P_u = s(u, v) = u n (c_+ - 1/u) / (v (n-1) (1/v - c_+))`;
/// collapses to the single point `a^{1/c_+}` when `1/c_+` is integral, and
/// to the boundary `P_m = 1` when the support does not fit.
pub fn closed_form_optimum(params: &AttackParams) -> ClosedFormOptimum {
    let m = params.m;
    let n = params.n as f64;
    let ln_a = params.ln_a();
    let inv_c = inverse_c_plus(params);

    let single = |j: usize| -> ClosedFormOptimum {
        let ln_value = j as f64 * ln_a;
        ClosedFormOptimum {
            support: vec![(j, 1.0)],
            value: ln_value.exp(),
            ln_value,
        }
    };

    let rounded = inv_c.round();
    let integral = (inv_c - rounded).abs() < 1e-9 * rounded.max(1.0);
    if integral {
        let u = rounded as usize;
        return single(u.min(m));
    }
    let u = inv_c.floor() as usize;
    if u >= m {
        return single(m);
    }
    let v = u + 1;
    let c = params.c_plus;
    let s = (u as f64 * n * (c - 1.0 / u as f64)) / (v as f64 * (n - 1.0) * (1.0 / v as f64 - c));
    if !s.is_finite() {
        return single(v);
    }
    let s = s.max(0.0);
    let p_u = 1.0 / (1.0 + s);
    let p_v = s / (1.0 + s);
    let ln_value = ln_sum_exp(&[p_u.ln() + u as f64 * ln_a, p_v.ln() + v as f64 * ln_a]);
    ClosedFormOptimum {
        support: vec![(u, p_u), (v, p_v)],
        value: ln_value.exp(),
        ln_value,
    }
}

/// Dual feasibility certificate with support on `y_1` and `y_{m+1}`,
/// built from the two tight constraints of the two-point primal (the
/// integral case reduces to
/// `y_1 = a^{1/c_+}(1-a) / (c_+ ((n-1)/n)^{1/c_+})`, `y_{m+1} = a^{1/c_+}`).
#[derive(Debug, Clone, Serialize)]
pub struct DualCertificate {
    pub y: Vec<f64>,
    /// Dual objective `y_{m+1} - y_{m+2}`.
    pub objective: f64,
    /// Per-constraint slack `(A^T y)_k - a^k`.
    pub slacks: Vec<f64>,
    pub min_slack: f64,
    pub feasible: bool,
}

pub fn dual_certificate(params: &AttackParams) -> Result<DualCertificate> {
    if !params.dual_precondition_holds() {
        return Err(Error::DualPreconditionViolated {
            one_minus_a: params.one_minus_a,
            inv_n: 1.0 / params.n as f64,
        });
    }
    let m = params.m;
    let n = params.n as f64;
    let ln_q = ((n - 1.0) / n).ln();
    let ln_a = params.ln_a();
    let c = params.c_plus;
    let inv_c = inverse_c_plus(params);

    // coef(k): the only nonzero transposed-row coefficient,
    // C(k, k-1) ((n-1)/n)^{k-1} (1/k - c_+) = (1 - k c_+) ((n-1)/n)^{k-1}.
    let coef = |k: usize| (1.0 - k as f64 * c) * ((k as f64 - 1.0) * ln_q).exp();

    let rounded = inv_c.round();
    let integral = (inv_c - rounded).abs() < 1e-9 * rounded.max(1.0);
    let u_star = if integral {
        rounded as usize
    } else {
        inv_c.floor() as usize
    };

    let (y1, y_top) = if integral || u_star >= m {
        let exponent = if u_star >= m { m as f64 } else { inv_c };
        let y_top = (exponent * ln_a).exp();
        let y1 = y_top * params.one_minus_a / (c * (exponent * ln_q).exp());
        (y1, y_top)
    } else {
        let u = u_star;
        let v = u + 1;
        let au = (u as f64 * ln_a).exp();
        let av = (v as f64 * ln_a).exp();
        let y1 = (au - av) / (coef(u) - coef(v));
        (y1, au - coef(u) * y1)
    };

    let mut y = vec![0.0; m + 2];
    y[0] = y1;
    y[m] = y_top; // y_{m+1}
                  // Only y_1 and y_{m+1} are nonzero, so constraint k reduces to
                  // coef(k) y_1 + y_{m+1} >= a^k; evaluating through coef keeps the
                  // check finite for run counts where the dense matrix would overflow.
    let slacks: Vec<f64> = (1..=m)
        .map(|k| coef(k) * y1 + y_top - (k as f64 * ln_a).exp())
        .collect();
    let min_slack = slacks.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(DualCertificate {
        objective: y_top,
        y,
        slacks,
        min_slack,
        feasible: min_slack >= -1e-9,
    })
}

/// `P(ACC) = sum_k P_k a^k`.
pub fn acceptance_probability(ensemble: &AttackEnsemble, a: f64) -> f64 {
    ensemble
        .type_probs
        .iter()
        .enumerate()
        .map(|(idx, &p)| p * a.powi(idx as i32 + 1))
        .sum()
}

/// One sequence of an explicitly described attack: per run, the set of
/// edges on which the supplied box contradicts the ideal correlations
/// (empty set = ideal box).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawSequence {
    pub slots: Vec<Vec<usize>>,
    pub mass: f64,
}

/// An arbitrary multi-contradiction ensemble description.
#[derive(Debug, Clone, Serialize)]
pub struct RawEnsemble {
    pub m: usize,
    pub n: usize,
    pub sequences: Vec<RawSequence>,
}

impl RawEnsemble {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::MalformedRawEnsemble("m must be >= 1".into()));
        }
        if self.sequences.is_empty() {
            return Err(Error::MalformedRawEnsemble("no sequences".into()));
        }
        let mut total = 0.0;
        for seq in &self.sequences {
            if seq.slots.len() != self.m {
                return Err(Error::MalformedRawEnsemble(format!(
                    "sequence has {} slots, expected {}",
                    seq.slots.len(),
                    self.m
                )));
            }
            if seq.mass < 0.0 {
                return Err(Error::MalformedRawEnsemble("negative mass".into()));
            }
            if seq.slots.iter().all(|s| s.is_empty()) && seq.mass > 0.0 {
                return Err(Error::MalformedRawEnsemble(
                    "all-ideal sequences must have probability zero".into(),
                ));
            }
            for slot in &seq.slots {
                let mut seen = vec![false; self.n + 1];
                for &e in slot {
                    if e < 1 || e > self.n {
                        return Err(Error::MalformedRawEnsemble(format!(
                            "edge {e} outside 1..={}",
                            self.n
                        )));
                    }
                    if seen[e] {
                        return Err(Error::MalformedRawEnsemble(format!(
                            "edge {e} repeated within a slot"
                        )));
                    }
                    seen[e] = true;
                }
            }
            total += seq.mass;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::MalformedRawEnsemble(format!(
                "total mass {total}, expected 1"
            )));
        }
        Ok(())
    }

    /// Acceptance probability of the raw attack under uniformly measured
    /// edges: a box contradicting `c` edges survives one run with
    /// probability `1 - c/n`.
    pub fn acceptance_probability(&self) -> f64 {
        let n = self.n as f64;
        self.sequences
            .iter()
            .map(|seq| {
                let survive: f64 = seq
                    .slots
                    .iter()
                    .map(|slot| 1.0 - slot.len() as f64 / n)
                    .product();
                seq.mass * survive
            })
            .sum()
    }
}

/// Result of the multi-contradiction reduction.
#[derive(Debug, Clone, Serialize)]
pub struct SymmetrizedAttack {
    pub ensemble: AttackEnsemble,
    /// The intermediate single-contradiction sequence distribution after
    /// each k-contradiction box is replaced, with probability 1/k, by a
    /// box contradicting exactly one of its edges.
    pub replaced_sequences: Vec<RawSequence>,
    pub raw_acceptance: f64,
    pub symmetric_acceptance: f64,
}

/// Replace every multi-contradiction box by an equal mixture of its
/// single-contradiction restrictions and project onto the symmetric typed
/// ensemble. The number of bad boxes per sequence is unchanged, so the type
/// distribution carries over; acceptance never decreases.
pub fn symmetrize_attack(raw: &RawEnsemble) -> Result<SymmetrizedAttack> {
    raw.validate()?;
    let mut replaced: Vec<RawSequence> = Vec::new();
    for seq in &raw.sequences {
        if seq.mass == 0.0 {
            continue;
        }
        // Cartesian product over slots of the 1/k single-edge choices.
        let mut partial: Vec<(Vec<Vec<usize>>, f64)> = vec![(Vec::new(), seq.mass)];
        for slot in &seq.slots {
            let mut next = Vec::with_capacity(partial.len() * slot.len().max(1));
            for (prefix, mass) in &partial {
                if slot.is_empty() {
                    let mut p = prefix.clone();
                    p.push(Vec::new());
                    next.push((p, *mass));
                } else {
                    let share = *mass / slot.len() as f64;
                    for &edge in slot {
                        let mut p = prefix.clone();
                        p.push(vec![edge]);
                        next.push((p, share));
                    }
                }
            }
            partial = next;
        }
        for (slots, mass) in partial {
            match replaced.iter_mut().find(|r| r.slots == slots) {
                Some(r) => r.mass += mass,
                None => replaced.push(RawSequence { slots, mass }),
            }
        }
    }

    let mut type_probs = vec![0.0; raw.m];
    for seq in &raw.sequences {
        let j = seq.slots.iter().filter(|s| !s.is_empty()).count();
        if j >= 1 {
            type_probs[j - 1] += seq.mass;
        }
    }
    let total: f64 = type_probs.iter().sum();
    for p in &mut type_probs {
        *p /= total;
    }
    let ensemble = AttackEnsemble::from_type_probs(raw.m, raw.n, type_probs)?;
    let a = 1.0 - 1.0 / raw.n as f64;
    Ok(SymmetrizedAttack {
        raw_acceptance: raw.acceptance_probability(),
        symmetric_acceptance: acceptance_probability(&ensemble, a),
        ensemble,
        replaced_sequences: replaced,
    })
}

/// Bias threshold of the protocol analysis: the root of
/// `(0.5 - eps)^12 = 2 (0.5 + eps)^{12 + m_exponent}` on `(0, 0.5)`.
pub fn threshold_epsilon2(m_exponent: f64) -> f64 {
    let exponent = 12.0 + m_exponent;
    bisect(0.0, 0.5 - 1e-12, 1e-15, |eps| {
        12.0 * (0.5 - eps).ln() - (2.0f64.ln() + exponent * (0.5 + eps).ln())
    })
}
