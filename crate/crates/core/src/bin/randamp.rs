//! Command-line front end: thresholds, bound chains, the acceptance linear
//! program with its certificates, exhaustive cloud verification, the
//! protocol simulator, and the local-box toy example. Every command emits
//! one JSON document (floats at 15 significant digits) echoing the full
//! resolved parameter set.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use randamp::amplification_bounds::{
    bound_chain, ln_delta_big, solve_entropy_constant, threshold_epsilon1, threshold_ky_fan,
};
use randamp::attack_lp::{
    brute_force_cloud_oracle, closed_form_optimum, derive_attack_params, dual_certificate,
    simplex_solve, AttackEnsemble, AttackParams, LpStatus,
};
use randamp::boxes::{toy_attack, true_bell_value, BellExpression, ChainBox, ToyScenario};
use randamp::error::Error;
use randamp::output::to_json_string;
use randamp::protocol_sim::{
    estimate_acceptance, estimate_output_bias, run_protocol, trial_seed, AttackConfig, BadBoxMode,
    BoxSupplier, ProtocolConfig, ProtocolResult,
};
use randamp::sv_source::{ky_fan_bounds, setting_prob_bounds, BiasStrategy, SvParameter};

/// Analysis and simulation toolkit for randomness amplification from
/// weak sources on the chained Bell scenario.
#[derive(Parser)]
#[command(name = "randamp", version, about)]
struct Cli {
    /// Write the JSON document to a file instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// The bias thresholds of the analysis.
    Threshold(ThresholdArgs),
    /// Probability-bound bundle and bound chain at one (epsilon, r) point.
    Bounds(BoundsArgs),
    /// Acceptance-probability linear program: simplex, closed form, dual.
    Lp(LpArgs),
    /// Dual feasibility certificate only.
    DualCheck(DualCheckArgs),
    /// Exhaustive cloud enumeration against the closed-form constraints.
    CloudVerify(CloudVerifyArgs),
    /// Seeded Monte Carlo simulation of the protocol.
    Simulate(SimulateArgs),
    /// The local-box mimicry example and its condition-violation witness.
    ToyExample,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Exponent in m = (n/2)^x, driving the protocol threshold.
    #[arg(long, default_value_t = 1.99)]
    m_exponent: f64,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    r_bits: u32,
    /// Use the Ky Fan refined bounds.
    #[arg(long)]
    ky_fan: bool,
    /// Also emit a gnuplot script plotting ln(delta_big) against r.
    #[arg(long)]
    gnuplot_script: Option<PathBuf>,
}

#[derive(Args)]
struct LpArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    r_bits: u32,
    /// Run count; defaults to round((n/2)^m_exponent).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 1.99)]
    m_exponent: f64,
    /// Also run the brute-force cloud oracle (m <= 6, n <= 4).
    #[arg(long)]
    oracle: bool,
    /// Append the optional lower-side steering constraints.
    #[arg(long)]
    lower_side: bool,
}

#[derive(Args)]
struct DualCheckArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    r_bits: u32,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 1.99)]
    m_exponent: f64,
}

#[derive(Args)]
struct CloudVerifyArgs {
    #[arg(long)]
    epsilon: f64,
    /// Number of runs (m <= 6).
    #[arg(long)]
    m: usize,
    /// Chain size (2 or 4).
    #[arg(long)]
    n: usize,
    /// Comma-separated per-sequence weights r_1..r_m, rescaled so the
    /// induced type probabilities sum to one; defaults to the
    /// uniform-sequence ensemble.
    #[arg(long, value_delimiter = ',')]
    seq_weights: Option<Vec<f64>>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SupplierArg {
    HonestIdeal,
    HonestQuantum,
    Attack,
    Toy,
    Box,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SourceArg {
    Uniform,
    Extremal,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BadBoxModeArg {
    UniformMarginal,
    DeterministicZeros,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    /// Total runs M; defaults to round((n/2)^2.99).
    #[arg(long, visible_alias = "M")]
    runs: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = SupplierArg::HonestIdeal)]
    supplier: SupplierArg,
    /// JSON file holding a chain box (supplier = box).
    #[arg(long)]
    box_file: Option<PathBuf>,
    /// Attack ensemble: all mass on this sequence type.
    #[arg(long)]
    attack_type: Option<usize>,
    /// Attack ensemble type space size m; defaults to round((n/2)^1.99).
    #[arg(long)]
    attack_m: Option<usize>,
    #[arg(long, value_enum, default_value_t = BadBoxModeArg::UniformMarginal)]
    bad_box_mode: BadBoxModeArg,
    #[arg(long, value_enum, default_value_t = SourceArg::Uniform)]
    source: SourceArg,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    /// Seed; falls back to RANDAMP_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the first trial's transcript as CSV.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(document) => {
            let rendered = to_json_string(&document);
            match &cli.output {
                None => print!("{rendered}"),
                Some(path) => {
                    if let Err(e) = fs::write(path, rendered) {
                        eprintln!("error: cannot write {}: {e}", path.display());
                        return ExitCode::from(1);
                    }
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: &Command) -> Result<Value, Error> {
    match command {
        Command::Threshold(args) => threshold_cmd(args),
        Command::Bounds(args) => bounds_cmd(args),
        Command::Lp(args) => lp_cmd(args),
        Command::DualCheck(args) => dual_check_cmd(args),
        Command::CloudVerify(args) => cloud_verify_cmd(args),
        Command::Simulate(args) => simulate_cmd(args),
        Command::ToyExample => toy_example_cmd(),
    }
}

fn envelope(command: &str, params: Value, result: Value) -> Value {
    json!({"command": command, "params": params, "result": result})
}

fn threshold_cmd(args: &ThresholdArgs) -> Result<Value, Error> {
    let result = json!({
        "epsilon1": threshold_epsilon1(),
        "epsilon_kyfan": threshold_ky_fan(),
        "entropy_constant_c": solve_entropy_constant(),
        "epsilon2": randamp::attack_lp::threshold_epsilon2(args.m_exponent),
    });
    Ok(envelope(
        "threshold",
        json!({"m_exponent": args.m_exponent}),
        result,
    ))
}

fn bounds_cmd(args: &BoundsArgs) -> Result<Value, Error> {
    let params = SvParameter::new(args.epsilon)?;
    let n = 1usize
        .checked_shl(args.r_bits + 1)
        .ok_or_else(|| Error::Invalid("r_bits too large".into()))?;
    let bundle = if args.ky_fan {
        ky_fan_bounds(params, args.r_bits)?
    } else {
        setting_prob_bounds(params, args.r_bits, n)?
    };
    let chain = bound_chain(params, args.r_bits, args.ky_fan)?;
    let mut result = json!({
        "conditional_bounds": serde_json::to_value(bundle).expect("serializable"),
        "chain": serde_json::to_value(chain).expect("serializable"),
    });
    if let Some(path) = &args.gnuplot_script {
        let script = gnuplot_script(params);
        fs::write(path, script).map_err(|e| Error::Invalid(format!("cannot write script: {e}")))?;
        result["gnuplot_script"] = json!(path.display().to_string());
    }
    Ok(envelope(
        "bounds",
        json!({"epsilon": args.epsilon, "r_bits": args.r_bits, "ky_fan": args.ky_fan}),
        result,
    ))
}

fn gnuplot_script(params: SvParameter) -> String {
    let mut data = String::new();
    for r in 1..=60u32 {
        data.push_str(&format!("{r} {}\n", ln_delta_big(params, r)));
    }
    format!(
        "set title 'distance-bound envelope, epsilon = {}'\n\
         set xlabel 'r'\nset ylabel 'ln delta_big'\nplot '-' with linespoints notitle\n{data}e\n",
        params.epsilon()
    )
}

fn resolve_attack_params(
    epsilon: f64,
    r_bits: u32,
    m: Option<usize>,
    m_exponent: f64,
) -> Result<AttackParams, Error> {
    let sv = SvParameter::new(epsilon)?;
    match m {
        Some(m) => AttackParams::from_source(sv, r_bits, m),
        None => derive_attack_params(sv, r_bits, m_exponent),
    }
}

/// Largest run count the dense tableau handles at full precision; the
/// binomial spread degrades the numeric duals beyond this, while the
/// closed form and the certificate stay exact at any scale.
const SIMPLEX_LIMIT: usize = 64;

fn lp_cmd(args: &LpArgs) -> Result<Value, Error> {
    let params = resolve_attack_params(args.epsilon, args.r_bits, args.m, args.m_exponent)?;
    let closed = closed_form_optimum(&params);
    let certificate = dual_certificate(&params)?;
    let mut result = json!({
        "m": params.m,
        "n": params.n,
        "a": params.a(),
        "one_minus_a": params.one_minus_a,
        "c_plus": params.c_plus,
        "primal": closed.to_dense(params.m),
        "value": closed.value,
        "dual": certificate.y,
        "slacks": certificate.slacks,
        "closed_form": serde_json::to_value(&closed).expect("serializable"),
        "dual_certificate": {
            "objective": certificate.objective,
            "min_slack": certificate.min_slack,
            "feasible": certificate.feasible,
        },
        "primal_dual_agreement": (closed.value - certificate.objective).abs(),
    });
    if params.m <= SIMPLEX_LIMIT {
        let lp = randamp::attack_lp::lp_constraints_extended(&params, args.lower_side)?;
        let solution = simplex_solve(&lp)?;
        if solution.status != LpStatus::Optimal {
            return Err(Error::LpNotOptimal(match solution.status {
                LpStatus::Infeasible => "infeasible",
                _ => "unbounded",
            }));
        }
        result["simplex"] = json!({
            "primal": solution.primal,
            "value": solution.optimal_value,
            "dual": solution.dual,
            "duality_gap": solution.duality_gap,
            "complementarity_residual": solution.complementarity_residual,
            "vs_closed_form": (solution.optimal_value - closed.value).abs(),
        });
    }
    if args.oracle {
        let ensemble =
            AttackEnsemble::from_type_probs(params.m, params.n, closed.to_dense(params.m))?;
        let report = brute_force_cloud_oracle(&params, &ensemble)?;
        result["oracle"] = serde_json::to_value(&report).expect("serializable");
    }
    Ok(envelope(
        "lp",
        json!({
            "epsilon": args.epsilon,
            "r_bits": args.r_bits,
            "m": params.m,
            "m_exponent": args.m_exponent,
            "oracle": args.oracle,
            "lower_side": args.lower_side,
        }),
        result,
    ))
}

fn dual_check_cmd(args: &DualCheckArgs) -> Result<Value, Error> {
    let params = resolve_attack_params(args.epsilon, args.r_bits, args.m, args.m_exponent)?;
    let certificate = dual_certificate(&params)?;
    Ok(envelope(
        "dual-check",
        json!({
            "epsilon": args.epsilon,
            "r_bits": args.r_bits,
            "m": params.m,
            "m_exponent": args.m_exponent,
        }),
        json!({
            "m": params.m,
            "n": params.n,
            "a": params.a(),
            "c_plus": params.c_plus,
            "y": certificate.y,
            "objective": certificate.objective,
            "slacks": certificate.slacks,
            "min_slack": certificate.min_slack,
            "feasible": certificate.feasible,
        }),
    ))
}

fn cloud_verify_cmd(args: &CloudVerifyArgs) -> Result<Value, Error> {
    let sv = SvParameter::new(args.epsilon)?;
    if args.n < 2 || !args.n.is_power_of_two() {
        return Err(Error::Invalid(
            "cloud verification needs n = 2^(r+1) (2 or 4)".into(),
        ));
    }
    let r_bits = args.n.trailing_zeros() - 1;
    let params = AttackParams::from_source(sv, r_bits, args.m)?;
    let ensemble = match &args.seq_weights {
        Some(weights) => {
            if weights.len() != args.m {
                return Err(Error::InvalidAttackParameter(format!(
                    "need {} sequence weights, got {}",
                    args.m,
                    weights.len()
                )));
            }
            let induced: f64 = weights
                .iter()
                .enumerate()
                .map(|(idx, &r)| {
                    randamp::numeric::binomial_f64(args.m as u64, idx as u64 + 1)
                        * (args.n as f64).powi(idx as i32 + 1)
                        * r
                })
                .sum();
            if induced <= 0.0 {
                return Err(Error::InvalidAttackParameter(
                    "sequence weights must carry positive mass".into(),
                ));
            }
            let scaled: Vec<f64> = weights.iter().map(|r| r / induced).collect();
            AttackEnsemble::from_sequence_weights(args.m, args.n, scaled)?
        }
        None => AttackEnsemble::uniform_sequences(args.m, args.n)?,
    };
    let report = brute_force_cloud_oracle(&params, &ensemble)?;
    Ok(envelope(
        "cloud-verify",
        json!({
            "epsilon": args.epsilon,
            "m": args.m,
            "n": args.n,
            "seq_weights": args.seq_weights,
        }),
        serde_json::to_value(&report).expect("serializable"),
    ))
}

fn simulate_cmd(args: &SimulateArgs) -> Result<Value, Error> {
    let seed = args.seed.unwrap_or_else(|| {
        std::env::var("RANDAMP_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(0)
    });
    let runs = args
        .runs
        .unwrap_or_else(|| ProtocolConfig::default_runs(args.n));
    let supplier = match args.supplier {
        SupplierArg::HonestIdeal => BoxSupplier::HonestIdeal,
        SupplierArg::HonestQuantum => BoxSupplier::HonestQuantum,
        SupplierArg::Toy => BoxSupplier::Toy,
        SupplierArg::Box => {
            let path = args
                .box_file
                .as_ref()
                .ok_or_else(|| Error::Invalid("supplier 'box' needs --box-file".into()))?;
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
            let bx: ChainBox = serde_json::from_str(&text)
                .map_err(|e| Error::Invalid(format!("invalid box JSON: {e}")))?;
            BoxSupplier::UserBox(bx)
        }
        SupplierArg::Attack => {
            let m = args
                .attack_m
                .unwrap_or_else(|| ((args.n as f64 / 2.0).powf(1.99)).round() as usize);
            let ensemble = match args.attack_type {
                Some(j) => AttackEnsemble::single_type(m, args.n, j)?,
                None => AttackEnsemble::uniform_sequences(m, args.n)?,
            };
            BoxSupplier::Attack(AttackConfig {
                ensemble,
                bad_box_mode: match args.bad_box_mode {
                    BadBoxModeArg::UniformMarginal => BadBoxMode::UniformMarginal,
                    BadBoxModeArg::DeterministicZeros => BadBoxMode::DeterministicZeros,
                },
            })
        }
    };
    let config = ProtocolConfig {
        n: args.n,
        runs,
        epsilon: args.epsilon,
        source_strategy: match args.source {
            SourceArg::Uniform => BiasStrategy::Uniform,
            SourceArg::Extremal => BiasStrategy::ExtremalBernoulli,
        },
        supplier,
        seed,
    };
    config.validate()?;

    let acceptance = estimate_acceptance(&config, args.trials)?;
    let bias = estimate_output_bias(&config, args.trials)?;

    if let Some(path) = &args.transcript {
        let first = run_protocol(&ProtocolConfig {
            seed: trial_seed(seed, 0),
            ..config.clone()
        })?;
        let mut csv = String::from("index,alice_setting,bob_setting,in_s,edge,x,y,consistent\n");
        for rec in &first.transcript {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                rec.index,
                rec.alice_setting,
                rec.bob_setting,
                rec.in_s,
                rec.edge.map_or_else(String::new, |e| e.to_string()),
                rec.outcome.0,
                rec.outcome.1,
                rec.consistent
            ));
        }
        fs::write(path, csv)
            .map_err(|e| Error::Invalid(format!("cannot write transcript: {e}")))?;
    }

    let sample = run_protocol(&ProtocolConfig {
        seed: trial_seed(seed, 0),
        ..config.clone()
    })?;
    Ok(envelope(
        "simulate",
        serde_json::to_value(&config).expect("serializable"),
        json!({
            "trials": args.trials,
            "acceptance": serde_json::to_value(&acceptance).expect("serializable"),
            "output_bias": serde_json::to_value(&bias).expect("serializable"),
            "first_trial": {
                "result": match sample.result {
                    ProtocolResult::Bit(b) => json!({"kind": "bit", "bit": b}),
                    ProtocolResult::FailCardinality => json!({"kind": "fail_cardinality"}),
                    ProtocolResult::FailConsistency => json!({"kind": "fail_consistency"}),
                },
                "s_size": sample.s_size,
                "f_index": sample.f_index,
                "steering": serde_json::to_value(&sample.steering).expect("serializable"),
            },
        }),
    ))
}

fn toy_example_cmd() -> Result<Value, Error> {
    let scenario = ToyScenario::canonical();
    let expr = BellExpression::new(4)?;
    let mixture = scenario.mixture();
    let mut witnesses = Vec::new();
    for edge in 1..=4usize {
        let consistent_obs = scenario.outcome(edge, edge);
        let consistent = toy_attack(&scenario, edge, consistent_obs)?;
        let inconsistent_obs = (consistent_obs.0, consistent_obs.1 ^ 1);
        let inconsistent = toy_attack(&scenario, edge, inconsistent_obs)?;
        witnesses.push(json!({
            "tester_edge": edge,
            "input_pair": expr.input_pair(edge),
            "consistent_observation": consistent_obs,
            "posterior_after_consistent": consistent.posterior,
            "inconsistent_observation": inconsistent_obs,
            "posterior_after_inconsistent": inconsistent.posterior,
            "excludes_matched_source": inconsistent.excludes_matched_source,
        }));
    }
    Ok(envelope(
        "toy-example",
        json!({}),
        json!({
            "assignments": scenario.assignments,
            "mixture_true_bell_value": true_bell_value(&mixture),
            "classical_bound": 0.25,
            "witnesses": witnesses,
        }),
    ))
}
