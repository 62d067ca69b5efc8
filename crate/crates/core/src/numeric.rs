//! Shared numerical routines: log-space arithmetic, binomial coefficients,
//! bracketed root finding, binary entropy, and the small statistics toolbox
//! used by the simulation estimators.

/// Two-sided 95% normal quantile used for Wilson intervals.
pub const Z_95: f64 = 1.959963984540054;

/// Stable `ln(exp(a) + exp(b))`.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Sum of `ln`-space terms: `ln(sum_i exp(x_i))`.
pub fn ln_sum_exp(terms: &[f64]) -> f64 {
    let hi = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = terms.iter().map(|&x| (x - hi).exp()).sum();
    hi + sum.ln()
}

/// Binomial coefficient as an exact `u128`, or `None` on overflow.
pub fn binomial_u128(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)?;
        acc /= (i + 1) as u128;
    }
    Some(acc)
}

/// `ln C(n, k)` via `ln_gamma`, valid for any `n`, `k <= n`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    ln_gamma((n + 1) as f64) - ln_gamma((k + 1) as f64) - ln_gamma((n - k + 1) as f64)
}

/// Binomial coefficient as `f64`: exact through `u128` when it fits
/// (covers all m <= 60 programs), `exp(ln C)` beyond.
pub fn binomial_f64(n: u64, k: u64) -> f64 {
    match binomial_u128(n, k) {
        Some(v) if v <= (1u128 << 127) => v as f64,
        _ => ln_binomial(n, k).exp(),
    }
}

/// Bisection on `[lo, hi]`; `f(lo)` and `f(hi)` must differ in sign.
/// Iterates until the bracket shrinks below `tol` (or 200 iterations),
/// then returns the midpoint.
pub fn bisect<F: Fn(f64) -> f64>(mut lo: f64, mut hi: f64, tol: f64, f: F) -> f64 {
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return lo;
    }
    if fhi == 0.0 {
        return hi;
    }
    debug_assert!(
        flo.signum() != fhi.signum(),
        "bisect requires a sign change on the bracket"
    );
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo < tol || mid == lo || mid == hi {
            return mid;
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return mid;
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Binary entropy in bits: `H(x) = -x log2 x - (1-x) log2 (1-x)`, with
/// `H(0) = H(1) = 0`.
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    let ln2 = std::f64::consts::LN_2;
    -(x * x.ln() + (1.0 - x) * (1.0 - x).ln()) / ln2
}

/// Lanczos approximation of `ln Gamma(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    // g = 7, n = 9 coefficients
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    debug_assert!(x > 0.0);
    if x < 0.5 {
        // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma `P(s, x)`; series for `x < s + 1`,
/// continued fraction otherwise.
pub fn reg_lower_gamma(s: f64, x: f64) -> f64 {
    debug_assert!(s > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    let ln_pre = s * x.ln() - x - ln_gamma(s);
    if x < s + 1.0 {
        // series: P = pre * sum_k x^k / (s (s+1) ... (s+k))
        let mut term = 1.0 / s;
        let mut sum = term;
        for k in 1..500 {
            term *= x / (s + k as f64);
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        (ln_pre.exp() * sum).clamp(0.0, 1.0)
    } else {
        // Lentz continued fraction for Q(s, x)
        let tiny = 1e-300;
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (1.0 - ln_pre.exp() * h).clamp(0.0, 1.0)
    }
}

/// Chi-square upper tail probability with `df` degrees of freedom.
pub fn chi_square_p_value(statistic: f64, df: f64) -> f64 {
    1.0 - reg_lower_gamma(df / 2.0, statistic / 2.0)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}
