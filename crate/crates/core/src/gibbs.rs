//! Pseudo-posterior sampling over density matrices.
//!
//! The prior draws `nu = sum_i gamma_i V_i V_i^H` with Dirichlet weights
//! `gamma = Y / sum(Y)`, `Y_i ~ Gamma(alpha_i, 1)`, and `V_i` uniform on the
//! unit sphere of `C^d`. The target is `exp(-lambda * loss(nu)) * prior`.
//!
//! Each sweep proposes a multiplicative log-uniform move for every `Y_i`
//! followed by an independent sphere draw for every `V_i`, one accept/reject
//! decision per site. Both losses are squared distances between a linear
//! image of `nu` and a fixed target, so the sampler keeps the running sum
//! `sum_j Y_j f(V_j)` of per-component features and evaluates every proposal
//! in time linear in the feature length.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::estimators::{LossFamily, LossKind};
use crate::pauli::{rank_one_probabilities, CMatrix, HermitianMatrix};
use crate::states::{isotropic_unit_vector, DensityMatrix};

/// Sweeps between from-scratch loss checks.
pub const RESYNC_INTERVAL: usize = 100;
/// Allowed disagreement between incremental and recomputed loss.
pub const RESYNC_TOL: f64 = 1e-8;
/// Smallest starting weight under [`ChainInit::Spectral`].
pub const SPECTRAL_FLOOR: f64 = 1e-6;

/// Dirichlet parameters of the prior weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorParams {
    alpha: Vec<f64>,
}

/// Record of how the prior compares with the low-rank regularity condition
/// (every `alpha_i <= 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorReport {
    pub all_at_most_one: bool,
    pub sum: f64,
    pub product: f64,
}

impl PriorParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::Config("prior needs at least one Dirichlet parameter".into()));
        }
        if let Some(bad) = alpha.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::Config(format!("Dirichlet parameters must be positive, got {bad}")));
        }
        let params = PriorParams { alpha };
        let report = params.report();
        if !report.all_at_most_one {
            log::warn!(
                "Dirichlet parameters exceed 1 (sum {}, product {}); low-rank guarantees do not apply",
                report.sum,
                report.product
            );
        }
        Ok(params)
    }

    /// `Dir(alpha, ..., alpha)` in dimension `d`.
    pub fn symmetric(d: usize, alpha: f64) -> Result<Self> {
        Self::new(vec![alpha; d])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn report(&self) -> PriorReport {
        PriorReport {
            all_at_most_one: self.alpha.iter().all(|a| *a <= 1.0),
            sum: self.alpha.iter().sum(),
            product: self.alpha.iter().product(),
        }
    }
}

/// MCMC state: positive weights `Y` and unit vectors `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub y: Vec<f64>,
    pub v: Vec<DVector<Complex64>>,
}

impl ChainState {
    pub fn dim(&self) -> usize {
        self.y.len()
    }

    /// `gamma_i = Y_i / sum_j Y_j`.
    pub fn gammas(&self) -> Vec<f64> {
        let total: f64 = self.y.iter().sum();
        self.y.iter().map(|y| y / total).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.y.len();
        if self.v.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: self.v.len(),
            });
        }
        if let Some(y) = self.y.iter().find(|y| !(**y > 0.0 && y.is_finite())) {
            return Err(Error::Sampler(format!("weight {y} is not a positive real")));
        }
        for v in &self.v {
            if v.len() != d {
                return Err(Error::Dimension { expected: d, got: v.len() });
            }
            if (v.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::Sampler(format!("vector norm {} is not 1", v.norm())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    /// Inverse temperature.
    pub lambda: f64,
    /// Number of sweeps `T`.
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    /// `h` in `Y' = Y exp(u)`, `u ~ U(-h, h)`.
    pub proposal_halfwidth: f64,
    /// Keep a per-sweep trace (weights and acceptances).
    pub record_trace: bool,
    pub init: ChainInit,
}

/// Starting point of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChainInit {
    /// One draw from the prior.
    Prior,
    /// Eigenvectors of the inversion estimate, weights from its clipped spectrum.
    #[default]
    Spectral,
}

impl ChainInit {
    pub fn name(self) -> &'static str {
        match self {
            ChainInit::Prior => "prior",
            ChainInit::Spectral => "spectral",
        }
    }
}

impl fmt::Display for ChainInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChainInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "prior" => Ok(ChainInit::Prior),
            "spectral" => Ok(ChainInit::Spectral),
            other => Err(Error::Config(format!("unknown chain init `{other}` (expected prior or spectral)"))),
        }
    }
}

impl SamplerConfig {
    pub fn new(lambda: f64) -> Self {
        SamplerConfig {
            lambda,
            iterations: 10_000,
            burn_in: 2_000,
            thinning: 1,
            seed: 0,
            proposal_halfwidth: 0.5,
            record_trace: false,
            init: ChainInit::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "need iterations > burn_in, got T = {} and burn-in = {}",
                self.iterations, self.burn_in
            )));
        }
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be positive".into()));
        }
        if !(self.proposal_halfwidth > 0.0 && self.proposal_halfwidth.is_finite()) {
            return Err(Error::Config("proposal half-width must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the optional chain trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub gammas: Vec<f64>,
    pub accepted_y: usize,
    pub accepted_v: usize,
}

#[derive(Debug, Clone)]
pub struct GibbsOutput {
    /// Pseudo-posterior mean over the kept sweeps.
    pub estimate: DensityMatrix,
    pub accept_rate_y: f64,
    pub accept_rate_v: f64,
    /// Loss after every sweep.
    pub loss_trace: Vec<f64>,
    /// Average of the weights sorted in non-increasing order.
    pub mean_sorted_gamma: Vec<f64>,
    pub samples_averaged: usize,
    /// Largest gap seen between incremental and recomputed loss.
    pub max_resync_drift: f64,
    pub trace: Option<Vec<TraceRow>>,
}

impl GibbsOutput {
    /// CSV columns `iteration,loss,gamma_1..gamma_d,accepted_Y,accepted_V`.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let trace = self
            .trace
            .as_ref()
            .ok_or_else(|| Error::Config("chain was run without trace recording".into()))?;
        let d = self.mean_sorted_gamma.len();
        let gamma_cols: Vec<String> = (1..=d).map(|i| format!("gamma_{i}")).collect();
        writeln!(out, "iteration,loss,{},accepted_Y,accepted_V", gamma_cols.join(","))?;
        for row in trace {
            let gammas: Vec<String> = row.gammas.iter().map(|g| g.to_string()).collect();
            writeln!(
                out,
                "{},{},{},{},{}",
                row.iteration,
                row.loss,
                gammas.join(","),
                row.accepted_y,
                row.accepted_v
            )?;
        }
        Ok(())
    }
}

/// Uniform draw from the unit sphere of `C^d`.
pub fn sample_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<Complex64> {
    isotropic_unit_vector(d, rng)
}

pub fn sample_prior<R: Rng + ?Sized>(params: &PriorParams, rng: &mut R) -> ChainState {
    let d = params.dim();
    let y = params
        .alpha
        .iter()
        .map(|&a| {
            let g = Gamma::new(a, 1.0).expect("positive shape");
            loop {
                let y: f64 = g.sample(rng);
                if y > 0.0 {
                    break y;
                }
            }
        })
        .collect();
    let v = (0..d).map(|_| sample_sphere(d, rng)).collect();
    ChainState { y, v }
}

/// `sum_i gamma_i V_i V_i^H`.
pub fn state_density(state: &ChainState) -> Result<DensityMatrix> {
    state.validate()?;
    let d = state.dim();
    let mut m = CMatrix::zeros(d, d);
    accumulate_density(state, 1.0, &mut m);
    let h = HermitianMatrix::new(m)?;
    DensityMatrix::new(h)
}

fn accumulate_density(state: &ChainState, scale: f64, into: &mut CMatrix) {
    let total: f64 = state.y.iter().sum();
    for (y, v) in state.y.iter().zip(&state.v) {
        let w = Complex64::new(scale * y / total, 0.0);
        let d = v.len();
        for c in 0..d {
            let vc = v[c].conj() * w;
            for r in 0..d {
                into[(r, c)] += v[r] * vc;
            }
        }
    }
}

/// `-lambda * loss(nu) + sum_i [(alpha_i - 1) log Y_i - Y_i]`, up to a constant.
pub fn log_unnormalized_target(state: &ChainState, lambda: f64, loss: &LossKind, params: &PriorParams) -> Result<f64> {
    if state.dim() != params.dim() {
        return Err(Error::Dimension {
            expected: params.dim(),
            got: state.dim(),
        });
    }
    if let Some(y) = state.y.iter().find(|y| **y <= 0.0) {
        return Err(Error::Sampler(format!("weight {y} is not positive")));
    }
    let nu = state_density(state)?;
    Ok(-lambda * loss.evaluate(&nu)? + log_prior(&state.y, &params.alpha))
}

fn log_prior(y: &[f64], alpha: &[f64]) -> f64 {
    y.iter().zip(alpha).map(|(y, a)| (a - 1.0) * y.ln() - y).sum()
}

/// A loss written as `|| F(nu) - target ||^2` for a real-linear feature map `F`.
#[derive(Debug, Clone)]
enum Objective {
    Prob { qubits: usize, target: Vec<f64> },
    Dens { target: Vec<f64> },
}

impl Objective {
    fn new(loss: &LossKind) -> Self {
        match loss {
            LossKind::Prob { freqs } => Objective::Prob {
                qubits: freqs.qubits(),
                target: freqs.values().to_vec(),
            },
            LossKind::Dens { rho_hat } => Objective::Dens {
                target: rho_hat.matrix().iter().flat_map(|z| [z.re, z.im]).collect(),
            },
        }
    }

    fn target(&self) -> &[f64] {
        match self {
            Objective::Prob { target, .. } | Objective::Dens { target } => target,
        }
    }

    fn features(&self, v: &DVector<Complex64>) -> Vec<f64> {
        match self {
            Objective::Prob { qubits, .. } => rank_one_probabilities(*qubits, v.as_slice()),
            Objective::Dens { .. } => {
                // column-major, matching nalgebra's iteration order of rho_hat
                let d = v.len();
                let mut f = Vec::with_capacity(2 * d * d);
                for c in 0..d {
                    for r in 0..d {
                        let z = v[r] * v[c].conj();
                        f.push(z.re);
                        f.push(z.im);
                    }
                }
                f
            }
        }
    }
}

/// A running chain with incrementally maintained loss.
pub struct Chain {
    objective: Objective,
    loss_kind: LossKind,
    lambda: f64,
    alpha: Vec<f64>,
    halfwidth: f64,
    state: ChainState,
    features: Vec<Vec<f64>>,
    weighted: Vec<f64>,
    y_total: f64,
    loss: f64,
}

impl Chain {
    pub fn new(loss: &LossKind, lambda: f64, params: &PriorParams, state: ChainState) -> Result<Self> {
        state.validate()?;
        let d = 1usize << loss.qubits();
        if state.dim() != d || params.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                got: if state.dim() != d { state.dim() } else { params.dim() },
            });
        }
        let objective = Objective::new(loss);
        let features = state.v.iter().map(|v| objective.features(v)).collect();
        let mut chain = Chain {
            objective,
            loss_kind: loss.clone(),
            lambda,
            alpha: params.alpha.clone(),
            halfwidth: 0.5,
            state,
            features,
            weighted: Vec::new(),
            y_total: 0.0,
            loss: 0.0,
        };
        chain.rebuild();
        Ok(chain)
    }

    pub fn with_proposal_halfwidth(mut self, h: f64) -> Self {
        self.halfwidth = h;
        self
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    /// Incrementally tracked loss of the current state.
    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn log_target(&self) -> f64 {
        -self.lambda * self.loss + log_prior(&self.state.y, &self.alpha)
    }

    fn rebuild(&mut self) {
        let len = self.objective.target().len();
        let mut weighted = vec![0.0; len];
        for (y, f) in self.state.y.iter().zip(&self.features) {
            for (w, x) in weighted.iter_mut().zip(f) {
                *w += y * x;
            }
        }
        self.y_total = self.state.y.iter().sum();
        self.loss = self.loss_of(&weighted, self.y_total);
        self.weighted = weighted;
    }

    fn loss_of(&self, weighted: &[f64], total: f64) -> f64 {
        weighted
            .iter()
            .zip(self.objective.target())
            .map(|(w, t)| {
                let r = w / total - t;
                r * r
            })
            .sum()
    }

    fn loss_with_y(&self, i: usize, y_new: f64) -> f64 {
        let delta = y_new - self.state.y[i];
        let total = self.y_total + delta;
        self.weighted
            .iter()
            .zip(&self.features[i])
            .zip(self.objective.target())
            .map(|((w, f), t)| {
                let r = (w + delta * f) / total - t;
                r * r
            })
            .sum()
    }

    fn loss_with_v(&self, i: usize, features: &[f64]) -> f64 {
        let y = self.state.y[i];
        self.weighted
            .iter()
            .zip(&self.features[i])
            .zip(features)
            .zip(self.objective.target())
            .map(|(((w, old), new), t)| {
                let r = (w + y * (new - old)) / self.y_total - t;
                r * r
            })
            .sum()
    }

    /// Log acceptance ratio of moving `Y_i` to `Y_i exp(log_step)`, with the
    /// Hastings term `log_step` for the multiplicative proposal. `None` if
    /// the proposal underflows or overflows.
    pub fn log_ratio_y(&self, i: usize, log_step: f64) -> Option<(f64, f64)> {
        let y_old = self.state.y[i];
        let y_new = y_old * log_step.exp();
        if !(y_new > 0.0 && y_new.is_finite()) {
            return None;
        }
        let new_loss = self.loss_with_y(i, y_new);
        let prior = (self.alpha[i] - 1.0) * log_step - (y_new - y_old);
        Some((-self.lambda * (new_loss - self.loss) + prior + log_step, new_loss))
    }

    /// MH update of `Y_i` with explicit randomness: accepts when
    /// `log_uniform < log R`.
    pub fn step_y_with(&mut self, i: usize, log_step: f64, log_uniform: f64) -> bool {
        let Some((log_r, new_loss)) = self.log_ratio_y(i, log_step) else {
            return false;
        };
        if log_uniform < log_r {
            let y_old = self.state.y[i];
            let y_new = y_old * log_step.exp();
            let delta = y_new - y_old;
            for (w, f) in self.weighted.iter_mut().zip(&self.features[i]) {
                *w += delta * f;
            }
            self.state.y[i] = y_new;
            self.y_total += delta;
            self.loss = new_loss;
            true
        } else {
            false
        }
    }

    pub fn mh_step_y<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) -> bool {
        let h = self.halfwidth;
        let log_step = rng.random_range(-h..h);
        let log_uniform = rng.random::<f64>().ln();
        self.step_y_with(i, log_step, log_uniform)
    }

    /// MH update of `V_i` with an explicit proposal; the prior cancels
    /// against the independence proposal.
    pub fn step_v_with(&mut self, i: usize, proposal: DVector<Complex64>, log_uniform: f64) -> bool {
        let features = self.objective.features(&proposal);
        let new_loss = self.loss_with_v(i, &features);
        let log_a = -self.lambda * (new_loss - self.loss);
        if log_uniform < log_a {
            let y = self.state.y[i];
            for ((w, old), new) in self.weighted.iter_mut().zip(&self.features[i]).zip(&features) {
                *w += y * (new - old);
            }
            self.features[i] = features;
            self.state.v[i] = proposal;
            self.loss = new_loss;
            true
        } else {
            false
        }
    }

    pub fn mh_step_v<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) -> bool {
        let proposal = sample_sphere(self.state.dim(), rng);
        let log_uniform = rng.random::<f64>().ln();
        self.step_v_with(i, proposal, log_uniform)
    }

    /// Recomputes the loss through the density matrix, checks it against the
    /// incremental value and resets the running sums. Returns the gap.
    pub fn resync(&mut self) -> Result<f64> {
        let nu = state_density(&self.state)?;
        let fresh = self.loss_kind.evaluate(&nu)?;
        let drift = (fresh - self.loss).abs();
        if drift > RESYNC_TOL * fresh.abs().max(1.0) {
            return Err(Error::Sampler(format!(
                "incremental loss {} drifted from recomputed {} by {drift:.3e}",
                self.loss, fresh
            )));
        }
        self.rebuild();
        Ok(drift)
    }
}

/// Chain state whose density is the positive part of `pilot`, renormalized.
///
/// Weights below `SPECTRAL_FLOOR` are raised to it so every `Y` stays positive.
/// The `Y` are scaled to sum to the prior mean of their total.
pub fn spectral_start(pilot: &HermitianMatrix, params: &PriorParams) -> ChainState {
    let eig = pilot.matrix().clone().symmetric_eigen();
    let w: Vec<f64> = eig.eigenvalues.iter().map(|&x| x.max(SPECTRAL_FLOOR)).collect();
    let total: f64 = w.iter().sum();
    let scale = params.alpha().iter().sum::<f64>() / total;
    ChainState {
        y: w.iter().map(|x| x * scale).collect(),
        v: (0..pilot.dim()).map(|i| eig.eigenvectors.column(i).normalize()).collect(),
    }
}

/// Runs the sampler and returns the pseudo-posterior mean.
pub fn run_chain(loss: &LossKind, config: &SamplerConfig, params: &PriorParams) -> Result<GibbsOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    run_chain_with_rng(loss, config, params, &mut rng)
}

pub fn run_chain_with_rng<R: Rng + ?Sized>(
    loss: &LossKind,
    config: &SamplerConfig,
    params: &PriorParams,
    rng: &mut R,
) -> Result<GibbsOutput> {
    config.validate()?;
    let d = 1usize << loss.qubits();
    if params.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            got: params.dim(),
        });
    }
    let start = match config.init {
        ChainInit::Prior => sample_prior(params, rng),
        ChainInit::Spectral => spectral_start(&loss.pilot_estimate()?, params),
    };
    let mut chain = Chain::new(loss, config.lambda, params, start)?.with_proposal_halfwidth(config.proposal_halfwidth);

    let mut sum = CMatrix::zeros(d, d);
    let mut gamma_sum = vec![0.0; d];
    let mut kept = 0usize;
    let (mut acc_y, mut acc_v) = (0usize, 0usize);
    let mut loss_trace = Vec::with_capacity(config.iterations);
    let mut trace = config.record_trace.then(|| Vec::with_capacity(config.iterations));
    let mut max_drift = 0.0f64;

    for t in 0..config.iterations {
        let sweep_y = (0..d).filter(|&i| chain.mh_step_y(i, rng)).count();
        let sweep_v = (0..d).filter(|&i| chain.mh_step_v(i, rng)).count();
        acc_y += sweep_y;
        acc_v += sweep_v;

        if (t + 1) % RESYNC_INTERVAL == 0 {
            max_drift = max_drift.max(chain.resync()?);
        }
        loss_trace.push(chain.loss());

        if t >= config.burn_in && (t - config.burn_in) % config.thinning == 0 {
            accumulate_density(chain.state(), 1.0, &mut sum);
            let mut g = chain.state().gammas();
            g.sort_by(|a, b| b.total_cmp(a));
            gamma_sum.iter_mut().zip(&g).for_each(|(s, x)| *s += x);
            kept += 1;
        }
        if let Some(rows) = trace.as_mut() {
            rows.push(TraceRow {
                iteration: t + 1,
                loss: chain.loss(),
                gammas: chain.state().gammas(),
                accepted_y: sweep_y,
                accepted_v: sweep_v,
            });
        }
    }

    let mean = sum.unscale(kept as f64);
    let trace_re = mean.trace().re;
    let estimate = DensityMatrix::new(HermitianMatrix::symmetrized(mean.unscale(trace_re)))
        .map_err(|e| e.context("posterior mean"))?;
    let proposals = (config.iterations * d) as f64;
    Ok(GibbsOutput {
        estimate,
        accept_rate_y: acc_y as f64 / proposals,
        accept_rate_v: acc_v as f64 / proposals,
        loss_trace,
        mean_sorted_gamma: gamma_sum.iter().map(|s| s / kept as f64).collect(),
        samples_averaged: kept,
        max_resync_drift: max_drift,
        trace,
    })
}

/// Convenience wrapper: build the loss from frequencies and run.
pub fn gibbs_estimate(
    family: LossFamily,
    freqs: &crate::pauli::ProbabilityTable,
    config: &SamplerConfig,
    params: &PriorParams,
) -> Result<GibbsOutput> {
    run_chain(&LossKind::from_family(family, freqs)?, config, params)
}

/// Effective sample size from Geyer's initial positive sequence estimator.
pub fn effective_sample_size(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return n as f64;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let var = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if var == 0.0 {
        return n as f64;
    }
    let autocorr = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * var)
    };
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = autocorr(lag) + autocorr(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (n as f64 / tau.max(1.0)).min(n as f64)
}
