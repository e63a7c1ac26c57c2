//! `qtomo`: simulate Pauli tomography data, estimate states, run benchmarks.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use qtomo_core::data::{empirical_frequencies, load_dataset, simulate_dataset};
use qtomo_core::gibbs::{run_chain, ChainInit, PriorParams, SamplerConfig};
use qtomo_core::harness::{self, EigenReportConfig, EstimatorKind, ExperimentConfig, SamplerSettings};
use qtomo_core::{rng, validate_density, Error, LambdaRule, LossFamily, LossKind, MatrixJson, StateScenario};

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "qtomo", version, about = "Pauli-measurement state tomography with pseudo-Bayesian estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a true state and write simulated counts as CSV.
    Simulate(SimulateArgs),
    /// Estimate a density matrix from a counts CSV and write it as JSON.
    Estimate(EstimateArgs),
    /// Run a benchmark grid from a config file and write the results CSV.
    Benchmark(BenchmarkArgs),
    /// Eigenvalues of truth and estimates for an approximately rank-2 state.
    Eigenvalues(EigenvaluesArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Number of qubits.
    #[arg(long)]
    n: usize,
    /// State family: pure, rank2, approx-rank2, maximally-mixed.
    #[arg(long, default_value = "pure")]
    state: StateScenario,
    /// Mixing weight for approx-rank2.
    #[arg(long)]
    weight: Option<f64>,
    /// Shots per measurement setting.
    #[arg(long)]
    m: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path; stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also write the true state as JSON.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Counts CSV as written by `simulate`.
    #[arg(long)]
    data: PathBuf,
    /// inversion, thresholding, prob or dens.
    #[arg(long, conflicts_with = "loss")]
    estimator: Option<EstimatorKind>,
    /// Pseudo-posterior loss; shorthand for `--estimator prob|dens`.
    #[arg(long)]
    loss: Option<LossFamily>,
    /// Inverse temperature rule: m2, N4, N4-theory.
    #[arg(long, conflicts_with = "lambda")]
    lambda_rule: Option<LambdaRule>,
    /// Explicit inverse temperature.
    #[arg(long)]
    lambda: Option<f64>,
    /// Thresholding level; defaults to 2*sqrt(log(2d) d / N).
    #[arg(long)]
    tau: Option<f64>,
    #[command(flatten)]
    chain: ChainArgs,
    /// Chain seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the per-sweep chain trace CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Output JSON path; stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ChainArgs {
    /// Number of sweeps.
    #[arg(long, default_value_t = 10_000)]
    iterations: usize,
    #[arg(long, default_value_t = 2_000)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    thinning: usize,
    /// Symmetric Dirichlet parameter.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Half-width h of the log-uniform weight proposal.
    #[arg(long, default_value_t = 0.5)]
    proposal_halfwidth: f64,
    /// Chain start: `spectral` (inversion eigenvectors) or `prior` (one prior draw).
    #[arg(long, default_value = "spectral")]
    init: ChainInit,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// Use one true state per scenario for all replicates.
    #[arg(long)]
    fixed_state: bool,
    /// Record wall-clock seconds (output is then not reproducible).
    #[arg(long)]
    wall_time: bool,
    /// Overrides the config seed.
    #[arg(long, env = "QTOMO_SEED")]
    seed: Option<u64>,
    /// Output CSV path; stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EigenvaluesArgs {
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    m: u64,
    #[arg(long, default_value_t = 0.98)]
    weight: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated estimators.
    #[arg(long, value_delimiter = ',', default_value = "inversion,prob,dens")]
    estimators: Vec<EstimatorKind>,
    #[arg(long, default_value = "m2")]
    lambda_prob: LambdaRule,
    #[arg(long, default_value = "N4")]
    lambda_dens: LambdaRule,
    #[command(flatten)]
    chain: ChainArgs,
    /// Output CSV path; stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn open_output(path: Option<&Path>) -> qtomo_core::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::from(e).context(format!("creating {}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn simulate(args: SimulateArgs) -> qtomo_core::Result<()> {
    if args.n == 0 {
        return Err(Error::Config("--n must be positive".into()));
    }
    let scenario = match (args.state, args.weight) {
        (StateScenario::ApproxRank2 { .. }, Some(weight)) => StateScenario::ApproxRank2 { weight },
        (_, Some(_)) => return Err(Error::Config("--weight only applies to approx-rank2".into())),
        (s, None) => s,
    };
    let truth = scenario.generate(1 << args.n, &mut rng::stream(args.seed, &[1]))?;
    let data = simulate_dataset(&truth, args.m, &mut rng::stream(args.seed, &[2]))?;
    if let Some(path) = &args.truth {
        let doc = MatrixJson::from_matrix(&truth).with_metadata("truth", json!({ "state": scenario.to_string(), "seed": args.seed }));
        let mut out = open_output(Some(path))?;
        serde_json::to_writer_pretty(&mut out, &doc)?;
        writeln!(out)?;
    }
    let mut out = open_output(args.output.as_deref())?;
    out.write_all(data.to_csv_string().as_bytes())?;
    out.flush()?;
    Ok(())
}

fn estimate(args: EstimateArgs) -> qtomo_core::Result<()> {
    let data = load_dataset(&args.data)?;
    let n = data.qubits();
    let m = data.shots_per_setting();
    let freqs = empirical_frequencies(&data);
    let kind = match (args.estimator, args.loss) {
        (Some(k), _) => k,
        (None, Some(LossFamily::Prob)) => EstimatorKind::Prob,
        (None, Some(LossFamily::Dens)) => EstimatorKind::Dens,
        (None, None) => return Err(Error::Config("one of --estimator or --loss is required".into())),
    };
    let family = match kind {
        EstimatorKind::Prob => Some(LossFamily::Prob),
        EstimatorKind::Dens => Some(LossFamily::Dens),
        _ => None,
    };
    if family.is_none() && (args.lambda.is_some() || args.lambda_rule.is_some() || args.trace.is_some()) {
        return Err(Error::Config(format!("--lambda, --lambda-rule and --trace need a pseudo-posterior estimator, not {kind}")));
    }

    let (estimate, params) = match family {
        None => {
            let settings = SamplerSettings { tau: args.tau, ..SamplerSettings::default() };
            let est = harness::estimate(kind, &freqs, m, &settings, args.seed)?;
            let params = match kind {
                EstimatorKind::Thresholding => json!({ "tau": args.tau.unwrap_or_else(|| qtomo_core::default_tau(n, m)) }),
                _ => json!({}),
            };
            (est, params)
        }
        Some(family) => {
            let rule = match (args.lambda, args.lambda_rule) {
                (Some(v), _) => LambdaRule::Fixed(v),
                (None, Some(r)) => r,
                (None, None) => LambdaRule::default_for(family),
            };
            let config = SamplerConfig {
                lambda: rule.evaluate(n, m),
                iterations: args.chain.iterations,
                burn_in: args.chain.burn_in,
                thinning: args.chain.thinning,
                seed: args.seed,
                proposal_halfwidth: args.chain.proposal_halfwidth,
                record_trace: args.trace.is_some(),
                init: args.chain.init,
            };
            let loss = LossKind::from_family(family, &freqs)?;
            let prior = PriorParams::symmetric(1 << n, args.chain.alpha)?;
            let out = run_chain(&loss, &config, &prior)?;
            if let Some(path) = &args.trace {
                let mut w = open_output(Some(path))?;
                out.write_trace_csv(&mut w)?;
                w.flush()?;
            }
            let params = json!({
                "lambda": config.lambda,
                "lambda_rule": rule.to_string(),
                "iterations": config.iterations,
                "burn_in": config.burn_in,
                "thinning": config.thinning,
                "alpha": args.chain.alpha,
                "proposal_halfwidth": config.proposal_halfwidth,
                "seed": config.seed,
                "init": config.init.name(),
                "accept_rate_y": out.accept_rate_y,
                "accept_rate_v": out.accept_rate_v,
                "samples_averaged": out.samples_averaged,
            });
            (out.estimate.into_hermitian(), params)
        }
    };
    let physical = validate_density(&estimate).is_ok();
    let mut params = params;
    params["m"] = json!(m);
    params["physical"] = json!(physical);
    let doc = MatrixJson::from_matrix(&estimate).with_metadata(kind.name(), params);
    let mut out = open_output(args.output.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &doc)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn benchmark(args: BenchmarkArgs) -> qtomo_core::Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::from(e).context(format!("reading {}", args.config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text).map_err(|e| e.context(format!("in {}", args.config.display())))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.fixed_state |= args.fixed_state;
    cfg.wall_time |= args.wall_time;
    log::info!(
        "benchmark n = {}, {} cells x {} replicates",
        cfg.n,
        cfg.scenarios.len() * cfg.m_values.len(),
        cfg.replications
    );
    let rows = harness::run_benchmark(&cfg)?;
    let mut out = open_output(args.output.as_deref())?;
    harness::write_results_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(())
}

fn eigenvalues(args: EigenvaluesArgs) -> qtomo_core::Result<()> {
    let cfg = EigenReportConfig {
        n: args.n,
        m: args.m,
        weight: args.weight,
        seed: args.seed,
        estimators: args.estimators,
        sampler: SamplerSettings {
            iterations: args.chain.iterations,
            burn_in: args.chain.burn_in,
            thinning: args.chain.thinning,
            alpha: args.chain.alpha,
            lambda_prob: args.lambda_prob,
            lambda_dens: args.lambda_dens,
            proposal_halfwidth: args.chain.proposal_halfwidth,
            tau: None,
            init: args.chain.init,
        },
    };
    let report = harness::eigenvalue_report(&cfg)?;
    let mut out = open_output(args.output.as_deref())?;
    report.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Eigenvalues(a) => eigenvalues(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
