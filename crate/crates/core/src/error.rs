use thiserror::Error;

/// Errors raised by constructors and operations across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("epsilon must lie in [0, 0.5), got {0}")]
    EpsilonOutOfRange(f64),
    #[error("bit count must be >= 1, got {0}")]
    CountNotPositive(i64),
    #[error(
        "adversarial table entry {value} at position {index} violates the SV bound [{lo}, {hi}]"
    )]
    TableEntryOutOfBounds {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("adversarial table must be non-empty")]
    EmptyTable,
    #[error("n_settings must equal 2^(r_bits+1): got n={n} for r={r}")]
    SettingsCountMismatch { n: usize, r: u32 },
    #[error("Ky Fan refinement requires r_bits >= 1, got {0}")]
    KyFanRequiresPositiveR(u32),
    #[error("probability bounds must satisfy 0 < p_min <= p_max < 1, got ({p_min}, {p_max})")]
    InvalidProbabilityBounds { p_min: f64, p_max: f64 },
    #[error("inconsistent bound bundle: zeta_max = {0} <= 0")]
    InconsistentZeta(f64),
    #[error("chain size must be a positive even integer, got {0}")]
    InvalidChainSize(i64),
    #[error("edge index {edge} out of range 1..={n}")]
    EdgeOutOfRange { edge: usize, n: usize },
    #[error("edge {edge} distribution sums to {sum}, expected 1")]
    EdgeNotNormalized { edge: usize, sum: f64 },
    #[error("edge {edge} has a negative entry {value}")]
    NegativeProbability { edge: usize, value: f64 },
    #[error("box violates chain no-signaling: {0}")]
    NoSignalingViolated(String),
    #[error("mix requires boxes of equal n, got {0} and {1}")]
    MixedChainSizes(usize, usize),
    #[error("weights must be nonnegative and sum to 1, got sum {0}")]
    InvalidWeights(f64),
    #[error("mix requires as many weights as boxes ({boxes} boxes, {weights} weights)")]
    WeightCountMismatch { boxes: usize, weights: usize },
    #[error("box is outside the ideal/bad mixture family: {0}")]
    OutsideDecompositionFamily(String),
    #[error("observed-value evaluation needs one box and one source weight per edge")]
    SourceDomainMismatch,
    #[error("attack parameter out of range: {0}")]
    InvalidAttackParameter(String),
    #[error("cloud index k={k} out of range 1..={m}")]
    CloudIndexOutOfRange { k: usize, m: usize },
    #[error("exhaustive oracle limited to m <= {max_m}, n <= {max_n}; got m={m}, n={n}")]
    OracleRegimeExceeded {
        m: usize,
        n: usize,
        max_m: usize,
        max_n: usize,
    },
    #[error("malformed raw ensemble: {0}")]
    MalformedRawEnsemble(String),
    #[error("dual certificate precondition violated: 1 - a = {one_minus_a} exceeds 1/n = {inv_n}")]
    DualPreconditionViolated { one_minus_a: f64, inv_n: f64 },
    #[error("linear program is {0}")]
    LpNotOptimal(&'static str),
    #[error("protocol requires even n >= 4 with n/2 a power of two, got {0}")]
    InvalidProtocolChain(usize),
    #[error("trial count must be >= 1")]
    NoTrials,
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
