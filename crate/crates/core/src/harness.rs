//! Benchmark grid runner and eigenvalue report.
//!
//! A benchmark is a pure function of its [`ExperimentConfig`]: every random
//! draw comes from a stream derived from the config seed and the coordinates
//! of the draw, so results do not depend on thread scheduling.
//!
//! Stream layout:
//! - true state: `(seed, STATE, scenario, replicate)`, shared by every `m`
//!   so the m-trend is measured on the same states;
//! - dataset: `(seed, DATA, scenario, m, replicate)`;
//! - chains: `(seed, CHAIN, scenario, m, replicate, estimator)`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::data::{empirical_frequencies, simulate_dataset};
use crate::error::{Error, Result};
use crate::estimators::{default_tau, inversion_estimator, thresholding_estimator, LambdaRule, LossFamily, LossKind};
use crate::gibbs::{run_chain, ChainInit, PriorParams, SamplerConfig};
use crate::pauli::{HermitianMatrix, ProbabilityTable};
use crate::rng;
use crate::states::{mse, validate_density, StateScenario, DEFAULT_MIXING_WEIGHT};

pub const RESULTS_HEADER: &str = "scenario,estimator,n,m,mse_mean,mse_std,wall_time_s,seed";
pub const EIGENVALUES_HEADER: &str = "source,rank_index,eigenvalue";
pub const SEED_ENV: &str = "QTOMO_SEED";

const TAG_STATE: u64 = 1;
const TAG_DATA: u64 = 2;
const TAG_CHAIN: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Inversion,
    Thresholding,
    Prob,
    Dens,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Inversion,
        EstimatorKind::Thresholding,
        EstimatorKind::Prob,
        EstimatorKind::Dens,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Inversion => "inversion",
            EstimatorKind::Thresholding => "thresholding",
            EstimatorKind::Prob => "prob",
            EstimatorKind::Dens => "dens",
        }
    }

    fn tag(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|e| e.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown estimator `{s}`")))
    }
}

/// Settings shared by every pseudo-posterior run.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub alpha: f64,
    pub lambda_prob: LambdaRule,
    pub lambda_dens: LambdaRule,
    pub proposal_halfwidth: f64,
    /// Thresholding level; `None` uses [`default_tau`].
    pub tau: Option<f64>,
    pub init: ChainInit,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        SamplerSettings {
            iterations: 10_000,
            burn_in: 2_000,
            thinning: 1,
            alpha: 0.5,
            lambda_prob: LambdaRule::HalfShots,
            lambda_dens: LambdaRule::QuarterSampleSize,
            proposal_halfwidth: 0.5,
            tau: None,
            init: ChainInit::default(),
        }
    }
}

impl SamplerSettings {
    fn sampler_config(&self, family: LossFamily, n: usize, m: u64, seed: u64) -> SamplerConfig {
        let rule = match family {
            LossFamily::Prob => self.lambda_prob,
            LossFamily::Dens => self.lambda_dens,
        };
        SamplerConfig {
            lambda: rule.evaluate(n, m),
            iterations: self.iterations,
            burn_in: self.burn_in,
            thinning: self.thinning,
            seed,
            proposal_halfwidth: self.proposal_halfwidth,
            record_trace: false,
            init: self.init,
        }
    }
}

/// One benchmark grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m_values: Vec<u64>,
    pub scenarios: Vec<StateScenario>,
    pub estimators: Vec<EstimatorKind>,
    pub replications: usize,
    pub seed: u64,
    pub sampler: SamplerSettings,
    /// Reuse one true state for all replicates of a scenario.
    pub fixed_state: bool,
    /// Record wall-clock time (makes the CSV non-reproducible).
    pub wall_time: bool,
}

impl ExperimentConfig {
    /// The full grid for `n` qubits with default settings.
    pub fn grid(n: usize) -> Self {
        ExperimentConfig {
            n,
            m_values: vec![20, 200, 1000, 2000],
            scenarios: vec![
                StateScenario::Pure,
                StateScenario::Rank2,
                StateScenario::ApproxRank2 {
                    weight: DEFAULT_MIXING_WEIGHT,
                },
                StateScenario::MaximallyMixed,
            ],
            estimators: EstimatorKind::ALL.to_vec(),
            replications: 10,
            seed: 0,
            sampler: SamplerSettings::default(),
            fixed_state: false,
            wall_time: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if self.m_values.is_empty() || self.m_values.contains(&0) {
            return Err(Error::Config("m must be a nonempty list of positive integers".into()));
        }
        if self.scenarios.is_empty() || self.estimators.is_empty() {
            return Err(Error::Config("scenarios and estimators must be nonempty".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !(self.sampler.alpha > 0.0) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        let probe = self.sampler.sampler_config(LossFamily::Prob, self.n, self.m_values[0], 0);
        probe.validate()
    }

    /// Parses the flat `key = value` format; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::grid(2);
        let mut weight = DEFAULT_MIXING_WEIGHT;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: line_no, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |what: &str| -> Result<f64> {
                value.parse::<f64>().map_err(|_| err(format!("invalid {what} `{value}`")))
            };
            let int = |what: &str| -> Result<u64> {
                value.parse::<u64>().map_err(|_| err(format!("invalid {what} `{value}`")))
            };
            let flag = || -> Result<bool> {
                match value {
                    "true" | "yes" | "1" | "on" => Ok(true),
                    "false" | "no" | "0" | "off" => Ok(false),
                    _ => Err(err(format!("invalid boolean `{value}` for `{key}`"))),
                }
            };
            let list = || value.split(',').map(str::trim).filter(|s| !s.is_empty());
            match key {
                "n" => cfg.n = int("n")? as usize,
                "m" | "m_values" => {
                    cfg.m_values = list()
                        .map(|s| s.parse::<u64>().map_err(|_| err(format!("invalid m `{s}`"))))
                        .collect::<Result<_>>()?
                }
                "scenarios" => {
                    cfg.scenarios = list()
                        .map(|s| s.parse().map_err(|e: Error| err(e.to_string())))
                        .collect::<Result<_>>()?
                }
                "estimators" => {
                    cfg.estimators = list()
                        .map(|s| s.parse().map_err(|e: Error| err(e.to_string())))
                        .collect::<Result<_>>()?
                }
                "replications" => cfg.replications = int("replications")? as usize,
                "seed" => cfg.seed = int("seed")?,
                "iterations" => cfg.sampler.iterations = int("iterations")? as usize,
                "burn_in" => cfg.sampler.burn_in = int("burn_in")? as usize,
                "thinning" => cfg.sampler.thinning = int("thinning")? as usize,
                "alpha" => cfg.sampler.alpha = num("alpha")?,
                "lambda_prob" => cfg.sampler.lambda_prob = value.parse().map_err(|e: Error| err(e.to_string()))?,
                "lambda_dens" => cfg.sampler.lambda_dens = value.parse().map_err(|e: Error| err(e.to_string()))?,
                "proposal_halfwidth" => cfg.sampler.proposal_halfwidth = num("proposal_halfwidth")?,
                "tau" => {
                    cfg.sampler.tau = match value {
                        "default" | "auto" => None,
                        _ => Some(num("tau")?),
                    }
                }
                "init" => cfg.sampler.init = value.parse().map_err(|e: Error| err(e.to_string()))?,
                "mixing_weight" => weight = num("mixing_weight")?,
                "fixed_state" => cfg.fixed_state = flag()?,
                "wall_time" => cfg.wall_time = flag()?,
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        for s in cfg.scenarios.iter_mut() {
            if let StateScenario::ApproxRank2 { weight: w } = s {
                *w = weight;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `QTOMO_SEED` if set.
    pub fn with_env_overrides(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))?;
        }
        Ok(self)
    }
}

/// One aggregated table cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: StateScenario,
    pub estimator: EstimatorKind,
    pub n: usize,
    pub m: u64,
    pub mse_mean: f64,
    /// Population standard deviation across replicates.
    pub mse_std: f64,
    pub wall_time_s: Option<f64>,
    pub seed: u64,
}

/// Outcome of one estimator on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub scenario: StateScenario,
    pub estimator: EstimatorKind,
    pub m: u64,
    pub replicate: usize,
    pub mse: f64,
    /// Whether the estimate passes the density-matrix checks.
    pub physical: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    pub rows: Vec<ResultRow>,
    pub records: Vec<ReplicateRecord>,
}

fn scenario_tag(cfg: &ExperimentConfig, s: usize) -> u64 {
    // index plus a discriminant so reordering the scenario list keeps streams per family
    (s as u64) << 8 | match cfg.scenarios[s] {
        StateScenario::Pure => 1,
        StateScenario::Rank2 => 2,
        StateScenario::ApproxRank2 { .. } => 3,
        StateScenario::MaximallyMixed => 4,
    }
}

/// Runs one estimator on a frequency table.
pub fn estimate(
    kind: EstimatorKind,
    freqs: &ProbabilityTable,
    m: u64,
    settings: &SamplerSettings,
    chain_seed: u64,
) -> Result<HermitianMatrix> {
    let n = freqs.qubits();
    match kind {
        EstimatorKind::Inversion => inversion_estimator(freqs),
        EstimatorKind::Thresholding => {
            let tau = settings.tau.unwrap_or_else(|| default_tau(n, m));
            Ok(thresholding_estimator(freqs, tau)?.into_hermitian())
        }
        EstimatorKind::Prob | EstimatorKind::Dens => {
            let family = if kind == EstimatorKind::Prob {
                LossFamily::Prob
            } else {
                LossFamily::Dens
            };
            let loss = LossKind::from_family(family, freqs)?;
            let config = settings.sampler_config(family, n, m, chain_seed);
            let params = PriorParams::symmetric(1 << n, settings.alpha)?;
            Ok(run_chain(&loss, &config, &params)?.estimate.into_hermitian())
        }
    }
}

fn run_cell(cfg: &ExperimentConfig, s: usize, mi: usize, rep: usize) -> Result<Vec<ReplicateRecord>> {
    let scenario = cfg.scenarios[s];
    let m = cfg.m_values[mi];
    let d = 1usize << cfg.n;
    let st = scenario_tag(cfg, s);
    let state_rep = if cfg.fixed_state { 0 } else { rep as u64 };
    let truth = scenario.generate(d, &mut rng::stream(cfg.seed, &[TAG_STATE, st, state_rep]))?;
    let data = simulate_dataset(&truth, m, &mut rng::stream(cfg.seed, &[TAG_DATA, st, m, rep as u64]))?;
    let freqs = empirical_frequencies(&data);
    cfg.estimators
        .iter()
        .map(|&kind| {
            let chain_seed = rng::derive_seed(cfg.seed, &[TAG_CHAIN, st, m, rep as u64, kind.tag()]);
            let start = Instant::now();
            let est = estimate(kind, &freqs, m, &cfg.sampler, chain_seed)?;
            let seconds = start.elapsed().as_secs_f64();
            Ok(ReplicateRecord {
                scenario,
                estimator: kind,
                m,
                replicate: rep,
                mse: mse(&est, &truth)?,
                physical: validate_density(&est).is_ok(),
                seconds,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e: Error| e.context(format!("scenario {scenario}, m = {m}, replicate {rep}")))
}

/// Runs the grid and keeps per-replicate records.
pub fn run_benchmark_detailed(cfg: &ExperimentConfig) -> Result<BenchmarkOutput> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize, usize)> = (0..cfg.scenarios.len())
        .flat_map(|s| (0..cfg.m_values.len()).flat_map(move |mi| (0..cfg.replications).map(move |r| (s, mi, r))))
        .collect();
    let per_job: Vec<Vec<ReplicateRecord>> = jobs
        .par_iter()
        .map(|&(s, mi, r)| run_cell(cfg, s, mi, r))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (ji, chunk) in per_job.chunks(cfg.replications).enumerate() {
        let (s, mi, _) = jobs[ji * cfg.replications];
        for (ei, &kind) in cfg.estimators.iter().enumerate() {
            let values: Vec<f64> = chunk.iter().map(|recs| recs[ei].mse).collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
            let seconds: f64 = chunk.iter().map(|recs| recs[ei].seconds).sum();
            rows.push(ResultRow {
                scenario: cfg.scenarios[s],
                estimator: kind,
                n: cfg.n,
                m: cfg.m_values[mi],
                mse_mean: mean,
                mse_std: var.sqrt(),
                wall_time_s: cfg.wall_time.then_some(seconds),
                seed: cfg.seed,
            });
        }
    }
    Ok(BenchmarkOutput {
        rows,
        records: per_job.into_iter().flatten().collect(),
    })
}

pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    Ok(run_benchmark_detailed(cfg)?.rows)
}

pub fn write_results_csv<W: Write>(rows: &[ResultRow], mut out: W) -> Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in rows {
        let wall = r.wall_time_s.map_or_else(|| "NA".to_string(), |t| format!("{t:.3}"));
        writeln!(
            out,
            "{},{},{},{},{:e},{:e},{},{}",
            r.scenario, r.estimator, r.n, r.m, r.mse_mean, r.mse_std, wall, r.seed
        )?;
    }
    Ok(())
}

/// Settings for the eigenvalue comparison on an approximately rank-2 state.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenReportConfig {
    pub n: usize,
    pub m: u64,
    pub weight: f64,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub sampler: SamplerSettings,
}

impl Default for EigenReportConfig {
    fn default() -> Self {
        EigenReportConfig {
            n: 3,
            m: 200,
            weight: DEFAULT_MIXING_WEIGHT,
            seed: 0,
            estimators: vec![EstimatorKind::Inversion, EstimatorKind::Prob, EstimatorKind::Dens],
            sampler: SamplerSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenvalueReport {
    /// Descending spectrum of the true state.
    pub truth: Vec<f64>,
    pub estimates: Vec<(EstimatorKind, Vec<f64>)>,
}

impl EigenvalueReport {
    pub fn spectrum(&self, kind: EstimatorKind) -> Option<&[f64]> {
        self.estimates.iter().find(|(k, _)| *k == kind).map(|(_, v)| v.as_slice())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{EIGENVALUES_HEADER}")?;
        let sources = std::iter::once(("truth", &self.truth)).chain(self.estimates.iter().map(|(k, v)| (k.name(), v)));
        for (name, values) in sources {
            for (i, v) in values.iter().enumerate() {
                writeln!(out, "{name},{},{v:e}", i + 1)?;
            }
        }
        Ok(())
    }
}

/// Draws one approximately rank-2 state, simulates data and returns the
/// sorted spectra of the truth and of every requested estimate.
pub fn eigenvalue_report(cfg: &EigenReportConfig) -> Result<EigenvalueReport> {
    let d = 1usize << cfg.n;
    let scenario = StateScenario::ApproxRank2 { weight: cfg.weight };
    let truth = scenario.generate(d, &mut rng::stream(cfg.seed, &[TAG_STATE]))?;
    let data = simulate_dataset(&truth, cfg.m, &mut rng::stream(cfg.seed, &[TAG_DATA]))?;
    let freqs = empirical_frequencies(&data);
    let estimates = cfg
        .estimators
        .iter()
        .map(|&kind| {
            let seed = rng::derive_seed(cfg.seed, &[TAG_CHAIN, kind.tag()]);
            let est = estimate(kind, &freqs, cfg.m, &cfg.sampler, seed)?;
            Ok((kind, est.sorted_eigenvalues()))
        })
        .collect::<Result<_>>()?;
    Ok(EigenvalueReport {
        truth: truth.sorted_eigenvalues(),
        estimates,
    })
}
