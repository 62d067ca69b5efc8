//! Santha-Vazirani source models and every probability bound derived from
//! source bias: the per-setting bounds `p_min`/`p_max`, the reversed
//! conditional bounds `zeta_min`/`zeta_max`, the steering bound `c_+`, and
//! the Ky Fan large-n refinement.
//!
//! All power-of-`p` quantities are held in natural-log space; direct powers
//! underflow near `r ~ 40` where the threshold behaviour is examined.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Bias parameter of an SV source: every conditional bit probability lies in
/// `[0.5 - epsilon, 0.5 + epsilon]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SvParameter {
    epsilon: f64,
}

impl SvParameter {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&epsilon) {
            return Err(Error::EpsilonOutOfRange(epsilon));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `p_- = 0.5 - epsilon`.
    pub fn p_minus(&self) -> f64 {
        0.5 - self.epsilon
    }

    /// `p_+ = 0.5 + epsilon`.
    pub fn p_plus(&self) -> f64 {
        0.5 + self.epsilon
    }

    /// True when the source is unbiased; the bound bundle collapses to the
    /// uniform case and is computed exactly.
    pub fn is_unbiased(&self) -> bool {
        self.epsilon == 0.0
    }
}

/// How the generator fills the SV bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "table")]
pub enum BiasStrategy {
    /// Fair bits, the honest baseline.
    Uniform,
    /// I.i.d. bits with `P(1) = p_+`, one of the extremal SV distributions.
    ExtremalBernoulli,
    /// Explicit per-position conditional probabilities `P(bit_i = 1)`,
    /// cycled when shorter than the requested count. Entries must respect
    /// the SV bound.
    AdversarialTable(Vec<f64>),
}

/// Streaming SV bit generator. Single-owner; concurrent sampling should use
/// independent seeds.
#[derive(Debug)]
pub struct SvSource {
    params: SvParameter,
    strategy: BiasStrategy,
    rng: ChaCha8Rng,
    position: u64,
}

impl SvSource {
    pub fn new(params: SvParameter, strategy: BiasStrategy, seed: u64) -> Result<Self> {
        if let BiasStrategy::AdversarialTable(table) = &strategy {
            if table.is_empty() {
                return Err(Error::EmptyTable);
            }
            for (index, &value) in table.iter().enumerate() {
                if value < params.p_minus() - 1e-12 || value > params.p_plus() + 1e-12 {
                    return Err(Error::TableEntryOutOfBounds {
                        index,
                        value,
                        lo: params.p_minus(),
                        hi: params.p_plus(),
                    });
                }
            }
        }
        Ok(Self {
            params,
            strategy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            position: 0,
        })
    }

    pub fn params(&self) -> SvParameter {
        self.params
    }

    /// Draw one bit together with the conditional probability it was
    /// emitted under.
    pub fn next_bit_with_prob(&mut self) -> (u8, f64) {
        let p_one = match &self.strategy {
            BiasStrategy::Uniform => 0.5,
            BiasStrategy::ExtremalBernoulli => self.params.p_plus(),
            BiasStrategy::AdversarialTable(table) => table[(self.position as usize) % table.len()],
        };
        self.position += 1;
        let bit = u8::from(self.rng.random::<f64>() < p_one);
        (bit, p_one)
    }

    pub fn next_bit(&mut self) -> u8 {
        self.next_bit_with_prob().0
    }

    /// Draw a biased bit from an externally supplied conditional probability,
    /// clipped to the SV bound. Returns the bit, the clipped probability and
    /// whether clipping occurred. This is the hook the attack simulator uses
    /// to steer while staying a valid SV stream.
    pub fn next_bit_clipped(&mut self, wanted_p_one: f64) -> (u8, f64, bool) {
        let clipped = wanted_p_one.clamp(self.params.p_minus(), self.params.p_plus());
        self.position += 1;
        let bit = u8::from(self.rng.random::<f64>() < clipped);
        (bit, clipped, clipped != wanted_p_one)
    }
}

/// A finite sample from an SV source with the per-bit conditional
/// probabilities the generator used, so the SV bound is assertable.
#[derive(Debug, Clone, Serialize)]
pub struct SvBitString {
    pub bits: Vec<u8>,
    pub probs: Vec<f64>,
    pub seed: u64,
    pub strategy: BiasStrategy,
}

/// Sample `count` bits. Deterministic for a fixed seed.
pub fn sample_sv_bits(
    params: SvParameter,
    count: i64,
    strategy: BiasStrategy,
    seed: u64,
) -> Result<SvBitString> {
    if count < 1 {
        return Err(Error::CountNotPositive(count));
    }
    let mut source = SvSource::new(params, strategy.clone(), seed)?;
    let mut bits = Vec::with_capacity(count as usize);
    let mut probs = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let (bit, p) = source.next_bit_with_prob();
        bits.push(bit);
        probs.push(p);
    }
    Ok(SvBitString {
        bits,
        probs,
        seed,
        strategy,
    })
}

/// The bound bundle tying source bias to setting distributions: `p_min`,
/// `p_max` for the forward conditional, `zeta_min`, `zeta_max` for the
/// reversed one, and the steering bound `c_+`. Stored in natural-log space;
/// the linear accessors exponentiate.
///
/// `zeta_min`/`zeta_max` double as the generic condition pair
/// `eta_min`/`eta_max`; the JSON form carries both names.
#[derive(Debug, Clone, Copy)]
pub struct ConditionalBounds {
    pub epsilon: f64,
    pub r_bits: u32,
    pub n_settings: usize,
    pub ln_p_min: f64,
    pub ln_p_max: f64,
    pub ln_zeta_min: f64,
    pub ln_zeta_max: f64,
    pub ln_c_plus: f64,
    /// Number of runs the `c_+` field was evaluated at.
    pub c_plus_runs: u64,
}

impl ConditionalBounds {
    pub fn p_min(&self) -> f64 {
        self.ln_p_min.exp()
    }
    pub fn p_max(&self) -> f64 {
        self.ln_p_max.exp()
    }
    pub fn zeta_min(&self) -> f64 {
        self.ln_zeta_min.exp()
    }
    pub fn zeta_max(&self) -> f64 {
        self.ln_zeta_max.exp()
    }
    pub fn c_plus(&self) -> f64 {
        self.ln_c_plus.exp()
    }
    /// Generic lower bound of the source-device condition (instantiated as
    /// `zeta_min`).
    pub fn eta_min(&self) -> f64 {
        self.zeta_min()
    }
    /// Generic upper bound of the source-device condition (instantiated as
    /// `zeta_max`).
    pub fn eta_max(&self) -> f64 {
        self.zeta_max()
    }
}

impl Serialize for ConditionalBounds {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("ConditionalBounds", 15)?;
        s.serialize_field("epsilon", &self.epsilon)?;
        s.serialize_field("r_bits", &self.r_bits)?;
        s.serialize_field("n_settings", &self.n_settings)?;
        s.serialize_field("p_min", &self.p_min())?;
        s.serialize_field("p_max", &self.p_max())?;
        s.serialize_field("zeta_min", &self.zeta_min())?;
        s.serialize_field("zeta_max", &self.zeta_max())?;
        s.serialize_field("eta_min", &self.eta_min())?;
        s.serialize_field("eta_max", &self.eta_max())?;
        s.serialize_field("c_plus", &self.c_plus())?;
        s.serialize_field("c_plus_runs", &self.c_plus_runs)?;
        s.serialize_field("ln_p_min", &self.ln_p_min)?;
        s.serialize_field("ln_p_max", &self.ln_p_max)?;
        s.serialize_field("ln_zeta_min", &self.ln_zeta_min)?;
        s.serialize_field("ln_zeta_max", &self.ln_zeta_max)?;
        s.end()
    }
}

/// Default run count `m = round((n/2)^1.99)` used to fill the `c_+` field
/// of a bound bundle; attack analyses recompute `c_+` for their own `m`.
pub fn default_run_count(n_settings: usize, m_exponent: f64) -> u64 {
    ((n_settings as f64 / 2.0).powf(m_exponent)).round() as u64
}

fn zeta_ln_from(ln_p_min: f64, ln_p_max: f64, n: usize) -> Result<(f64, f64)> {
    let ln_n = (n as f64).ln();
    let ln_zeta_min = 2.0 * (ln_p_min - ln_p_max) - ln_n;
    let zeta_min = ln_zeta_min.exp();
    let zeta_max = 1.0 - (n as f64 - 1.0) * zeta_min;
    if zeta_max <= 0.0 {
        return Err(Error::InconsistentZeta(zeta_max));
    }
    let ln_zeta_max = (-(n as f64 - 1.0) * zeta_min).ln_1p();
    Ok((ln_zeta_min, ln_zeta_max))
}

/// Reversed conditional bounds: from `p_min <= P(B|A) <= p_max` over `n`
/// values, `zeta_min = p_min^2 / (n p_max^2)` and
/// `zeta_max = 1 - (n-1) zeta_min`.
pub fn derive_conditional_bounds(p_min: f64, p_max: f64, n: usize) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::Invalid(format!("n_settings must be >= 2, got {n}")));
    }
    if !(p_min > 0.0 && p_min < 1.0 && p_max > 0.0 && p_max < 1.0) {
        return Err(Error::InvalidProbabilityBounds { p_min, p_max });
    }
    let (ln_zeta_min, ln_zeta_max) = zeta_ln_from(p_min.ln(), p_max.ln(), n)?;
    if p_min > p_max {
        return Err(Error::InvalidProbabilityBounds { p_min, p_max });
    }
    Ok((ln_zeta_min.exp(), ln_zeta_max.exp()))
}

/// Per-setting probability bounds for a 2r-bit block mapped onto `n`
/// settings:
/// `p_min = p_-^{2r} / (n p_+^{2r})`,
/// `p_max = p_+^{2r} / (p_+^{2r} + (n-1) p_-^{2r})`,
/// with the zeta pair derived on top. Requires `n = 2^{r+1}`.
pub fn setting_prob_bounds(
    params: SvParameter,
    r_bits: u32,
    n_settings: usize,
) -> Result<ConditionalBounds> {
    if n_settings != (1usize << (r_bits + 1)) {
        return Err(Error::SettingsCountMismatch {
            n: n_settings,
            r: r_bits,
        });
    }
    let n = n_settings as f64;
    let ln_n = n.ln();
    let (ln_p_min, ln_p_max) = if params.is_unbiased() {
        // p_- = p_+ makes both bounds exactly 1/n.
        (-ln_n, -ln_n)
    } else {
        let d = params.p_minus().ln() - params.p_plus().ln(); // < 0
        let two_r = 2.0 * r_bits as f64;
        let ln_p_min = two_r * d - ln_n;
        // p_max = 1 / (1 + (n-1) (p_-/p_+)^{2r})
        let ln_p_max = -((n - 1.0) * (two_r * d).exp()).ln_1p();
        (ln_p_min, ln_p_max)
    };
    let (ln_zeta_min, ln_zeta_max) = zeta_ln_from(ln_p_min, ln_p_max, n_settings)?;
    let runs = default_run_count(n_settings, 1.99);
    Ok(ConditionalBounds {
        epsilon: params.epsilon(),
        r_bits,
        n_settings,
        ln_p_min,
        ln_p_max,
        ln_zeta_min,
        ln_zeta_max,
        ln_c_plus: ln_c_plus(params, runs),
        c_plus_runs: runs,
    })
}

/// Ky Fan refinement of the per-setting bounds, valid in the large-n
/// regime:
/// `p_min = p_-^{2r} / (p_-^{2r} + 2^r p_+^{(2-c)r} p_-^{cr})`,
/// `p_max = p_+^{2r} / (p_+^{2r} + 2^r p_-^{(2-c)r} p_+^{cr})`,
/// where `c` solves `H(c/2) = 1/2`.
pub fn ky_fan_bounds(params: SvParameter, r_bits: u32) -> Result<ConditionalBounds> {
    if r_bits < 1 {
        return Err(Error::KyFanRequiresPositiveR(r_bits));
    }
    let c = crate::amplification_bounds::solve_entropy_constant();
    let n_settings = 1usize << (r_bits + 1);
    let r = r_bits as f64;
    let ln2 = std::f64::consts::LN_2;
    let d = params.p_plus().ln() - params.p_minus().ln(); // >= 0
                                                          // denominator / p_-^{2r} = 1 + 2^r (p_+/p_-)^{(2-c)r}
    let ln_p_min = -((r * ln2 + (2.0 - c) * r * d).exp()).ln_1p();
    let ln_p_max = -((r * ln2 - (2.0 - c) * r * d).exp()).ln_1p();
    let (ln_zeta_min, ln_zeta_max) = zeta_ln_from(ln_p_min, ln_p_max, n_settings)?;
    let runs = default_run_count(n_settings, 1.99);
    Ok(ConditionalBounds {
        epsilon: params.epsilon(),
        r_bits,
        n_settings,
        ln_p_min,
        ln_p_max,
        ln_zeta_min,
        ln_zeta_max,
        ln_c_plus: ln_c_plus(params, runs),
        c_plus_runs: runs,
    })
}

/// Steering bound `c_+ = p_+^{log2 m}`. Non-power-of-two `m` uses the real
/// logarithm; the analyses need `m = (n/2)^{1.99}` which is never a power of
/// two.
pub fn c_plus(params: SvParameter, m: u64) -> f64 {
    ln_c_plus(params, m).exp()
}

/// `ln c_+`, exact at `m = 1` (exponent zero).
pub fn ln_c_plus(params: SvParameter, m: u64) -> f64 {
    debug_assert!(m >= 1);
    (m as f64).log2() * params.p_plus().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(eps: f64) -> SvParameter {
        SvParameter::new(eps).unwrap()
    }

    #[test]
    fn unbiased_source_emits_fair_bits() {
        let s = sample_sv_bits(params(0.0), 8, BiasStrategy::Uniform, 1).unwrap();
        assert_eq!(s.bits.len(), 8);
        assert!(s.probs.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn extremal_bernoulli_concentrates_near_p_plus() {
        // Binomial 3-sigma band around p_+ = 0.6 over 1e5 draws.
        let count = 100_000;
        let s = sample_sv_bits(params(0.1), count, BiasStrategy::ExtremalBernoulli, 7).unwrap();
        let ones = s.bits.iter().map(|&b| b as u64).sum::<u64>() as f64;
        let freq = ones / count as f64;
        let sigma = (0.6 * 0.4 / count as f64).sqrt();
        assert!(
            (freq - 0.6).abs() < 3.0 * sigma,
            "freq {freq} outside 3 sigma of 0.6"
        );
    }

    #[test]
    fn adversarial_table_rejects_entries_beyond_bound() {
        let err = SvSource::new(
            params(0.1),
            BiasStrategy::AdversarialTable(vec![0.5, 0.75]),
            3,
        )
        .unwrap_err();
        assert!(matches!(err, Error::TableEntryOutOfBounds { index: 1, .. }));
    }

    #[test]
    fn adversarial_table_cycles_and_records_probs() {
        let s = sample_sv_bits(
            params(0.1),
            5,
            BiasStrategy::AdversarialTable(vec![0.4, 0.6]),
            11,
        )
        .unwrap();
        assert_eq!(s.probs, vec![0.4, 0.6, 0.4, 0.6, 0.4]);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let a = sample_sv_bits(params(0.2), 64, BiasStrategy::ExtremalBernoulli, 42).unwrap();
        let b = sample_sv_bits(params(0.2), 64, BiasStrategy::ExtremalBernoulli, 42).unwrap();
        assert_eq!(a.bits, b.bits);
    }

    #[test]
    fn nonpositive_count_rejected() {
        assert!(matches!(
            sample_sv_bits(params(0.1), 0, BiasStrategy::Uniform, 1),
            Err(Error::CountNotPositive(0))
        ));
    }

    #[test]
    fn emitted_probs_stay_within_sv_bound() {
        for (eps, strategy) in [
            (0.0, BiasStrategy::Uniform),
            (0.1, BiasStrategy::ExtremalBernoulli),
            (0.1, BiasStrategy::AdversarialTable(vec![0.42, 0.55, 0.6])),
        ] {
            let p = params(eps);
            let s = sample_sv_bits(p, 1000, strategy, 5).unwrap();
            assert!(s
                .probs
                .iter()
                .all(|&q| q >= p.p_minus() - 1e-12 && q <= p.p_plus() + 1e-12));
        }
    }

    #[test]
    fn unbiased_setting_bounds_are_uniform() {
        let b = setting_prob_bounds(params(0.0), 3, 16).unwrap();
        assert_eq!(b.p_min(), 1.0 / 16.0);
        assert_eq!(b.p_max(), 1.0 / 16.0);
        assert!((b.zeta_min() - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn setting_bounds_match_direct_arithmetic() {
        // eps = 0.1, r = 1, n = 4: p_min = 0.4^2/(4*0.6^2) = 1/9,
        // p_max = 0.36/(0.36 + 3*0.16) = 3/7.
        let b = setting_prob_bounds(params(0.1), 1, 4).unwrap();
        assert!((b.p_min() - 1.0 / 9.0).abs() < 1e-15);
        assert!((b.p_max() - 3.0 / 7.0).abs() < 1e-15);
        let zeta_direct = (1.0_f64 / 9.0).powi(2) / (4.0 * (3.0_f64 / 7.0).powi(2));
        assert!((b.zeta_min() - zeta_direct).abs() / zeta_direct < 1e-14);
        assert!((b.zeta_max() - (1.0 - 3.0 * zeta_direct)).abs() < 1e-14);
    }

    #[test]
    fn setting_bounds_reject_mismatched_n() {
        assert!(matches!(
            setting_prob_bounds(params(0.1), 2, 4),
            Err(Error::SettingsCountMismatch { n: 4, r: 2 })
        ));
    }

    #[test]
    fn log_space_agrees_with_direct_powers_up_to_r10() {
        for r in 1..=10u32 {
            let n = 1usize << (r + 1);
            for &eps in &[0.01, 0.1, 0.3, 0.49] {
                let p = params(eps);
                let b = setting_prob_bounds(p, r, n).unwrap();
                let pm = p.p_minus().powi(2 * r as i32);
                let pp = p.p_plus().powi(2 * r as i32);
                let direct_min = pm / (n as f64 * pp);
                let direct_max = pp / (pp + (n as f64 - 1.0) * pm);
                assert!((b.p_min() - direct_min).abs() / direct_min < 1e-12);
                assert!((b.p_max() - direct_max).abs() / direct_max < 1e-12);
                let direct_zeta = direct_min * direct_min / (n as f64 * direct_max * direct_max);
                assert!((b.zeta_min() - direct_zeta).abs() / direct_zeta < 1e-12);
            }
        }
    }

    #[test]
    fn setting_bounds_bracket_uniform_mass() {
        // p_min * n <= 1 <= p_max * n over a parameter sweep.
        for &eps in &[0.0, 0.01, 0.1, 0.25, 0.4, 0.49] {
            for r in 0..=8u32 {
                let n = 1usize << (r + 1);
                let b = setting_prob_bounds(params(eps), r, n).unwrap();
                assert!(b.p_min() * n as f64 <= 1.0 + 1e-12);
                assert!(b.p_max() * n as f64 >= 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn derive_bounds_uniform_case() {
        // Uniform inputs reproduce the uniform posterior: zeta_min =
        // (1/4)^2 / (4 (1/4)^2) = 1/4 and zeta_max = 1 - 3/4 = 1/4.
        let (zmin, zmax) = derive_conditional_bounds(0.25, 0.25, 4).unwrap();
        assert!((zmin - 0.25).abs() < 1e-15);
        assert!((zmax - 0.25).abs() < 1e-14);
    }

    #[test]
    fn derive_bounds_worked_example() {
        let (zmin, zmax) = derive_conditional_bounds(1.0 / 9.0, 3.0 / 7.0, 4).unwrap();
        assert!((zmin - 49.0 / 2916.0).abs() < 1e-15);
        assert!((zmax - (1.0 - 3.0 * 49.0 / 2916.0)).abs() < 1e-14);
    }

    #[test]
    fn derive_bounds_flags_inconsistent_bundle() {
        assert!(matches!(
            derive_conditional_bounds(0.6, 0.3, 4),
            Err(Error::InconsistentZeta(_))
        ));
        assert!(matches!(
            derive_conditional_bounds(0.51, 0.5, 2),
            Err(Error::InvalidProbabilityBounds { .. })
        ));
    }

    // Exhaustive oracle: enumerate every extremal assignment
    // of four sequential SV bits (each conditional probability is p_- or
    // p_+ given its history), split them into two 2-bit blocks A and B, and
    // check zeta_min <= P(A=a|B=b) <= zeta_max for every realization.
    #[test]
    fn zeta_bounds_hold_on_exhaustive_extremal_enumeration() {
        let p = params(0.1);
        let b = setting_prob_bounds(p, 1, 4).unwrap();
        let (zmin, zmax) = (b.zeta_min(), b.zeta_max());
        // Histories: bit k has 2^k of them; choice vector packs one
        // p_+/p_- decision per (bit, history) pair: 1 + 2 + 4 + 8 = 15 bits.
        for choice in 0u32..(1 << 15) {
            let mut joint = [[0.0f64; 4]; 4]; // joint[a][b]
            for bits in 0u32..16 {
                let mut prob = 1.0;
                let mut offset = 0usize;
                for k in 0..4 {
                    let history = (bits >> (4 - k)) & ((1 << k) - 1);
                    let take_plus = (choice >> (offset + history as usize)) & 1 == 1;
                    let p_one = if take_plus { p.p_plus() } else { p.p_minus() };
                    let bit = (bits >> (3 - k)) & 1;
                    prob *= if bit == 1 { p_one } else { 1.0 - p_one };
                    offset += 1 << k;
                }
                let a = (bits >> 2) as usize;
                let bb = (bits & 3) as usize;
                joint[a][bb] += prob;
            }
            for bb in 0..4 {
                let pb: f64 = (0..4).map(|a| joint[a][bb]).sum();
                for a in 0..4 {
                    let cond = joint[a][bb] / pb;
                    assert!(
                        cond >= zmin - 1e-12 && cond <= zmax + 1e-12,
                        "P(A={a}|B={bb}) = {cond} outside [{zmin}, {zmax}]"
                    );
                }
            }
        }
    }

    #[test]
    fn ky_fan_unbiased_bounds_coincide() {
        // p_- = p_+ collapses both refined bounds to 1/(1 + 2^r).
        let b = ky_fan_bounds(params(0.0), 3).unwrap();
        assert_eq!(b.p_min(), b.p_max());
        assert!((b.p_min() - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn ky_fan_biased_bounds_are_ordered_probabilities() {
        let b = ky_fan_bounds(params(0.01), 10).unwrap();
        assert!(b.p_min() > 0.0 && b.p_min() < b.p_max() && b.p_max() < 1.0);
    }

    #[test]
    fn ky_fan_rejects_r_zero() {
        assert!(matches!(
            ky_fan_bounds(params(0.1), 0),
            Err(Error::KyFanRequiresPositiveR(0))
        ));
    }

    #[test]
    fn c_plus_examples() {
        assert!((c_plus(params(0.0), 8) - 0.125).abs() < 1e-15);
        assert!((c_plus(params(0.1), 4) - 0.36).abs() < 1e-15);
        assert_eq!(c_plus(params(0.05), 1), 1.0);
    }
}
