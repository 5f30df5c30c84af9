//! The alternated GNN-ES loop.
//!
//! Per generation:
//! 1. sample `z ~ ν_μ`, `x = g_η(z)` and evaluate `f(x)`;
//! 2. update the latent Gaussian with the latent optimizer on `(z, f)`;
//! 3. fit the coupling layers by minimizing the importance-weighted objective
//!    plus `λ` times a Monte-Carlo KL to the previous flow;
//! 4. grow or shrink `λ` depending on the KL actually reached.
//!
//! Step 3 only reuses the `N` points already evaluated, so the objective is
//! called exactly `N` times per generation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::es::{make_utilities, EvaluatedLatentPopulation, LatentOptimizer};
use crate::flow::{self, Checkpoint, FlowConfig, FlowParams};
use crate::latent::LatentParams;
use crate::objectives::ObjectiveSpec;
use crate::record::{GenerationRecord, RunRecord, StopReason};

/// How objective values enter the importance-weighted loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessMode {
    /// Negated rank utilities, the same weights the xNES update uses.
    #[default]
    Shaped,
    /// Raw objective values; infinite values are clamped to the worst finite one.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverConfig {
    pub population_size: usize,
    pub kl_radius: f64,
    pub kl_sample_size: usize,
    pub initial_lambda: f64,
    /// Adam steps on the flow parameters per generation.
    pub inner_steps: usize,
    pub inner_step_size: f64,
    /// Multiply the step size by the geometric-mean standard deviation of the
    /// latent Gaussian, `exp(log|det A| / d)`.
    pub relative_step: bool,
    pub max_generations: Option<u64>,
    pub max_evaluations: Option<u64>,
    /// Stop when the best value improved by less than `stall_tolerance` over
    /// the last `stall_generations` generations. Zero disables the test.
    pub stall_generations: usize,
    pub stall_tolerance: f64,
    pub fitness_mode: FitnessMode,
    /// Without flow training the flow stays the identity and the run is the
    /// plain latent optimizer.
    pub train_flow: bool,
    pub flow: FlowConfig,
}

impl DriverConfig {
    /// `N = 10 d`, `M = 10 N`, `ε = 0.01`, `λ₀ = 1`, 20 Adam steps of size 1e-3.
    pub fn for_dimension(dim: usize) -> Self {
        let n = 10 * dim;
        Self {
            population_size: n,
            kl_radius: 0.01,
            kl_sample_size: 10 * n,
            initial_lambda: 1.0,
            inner_steps: 20,
            inner_step_size: 1e-3,
            relative_step: true,
            max_generations: None,
            max_evaluations: None,
            stall_generations: 50,
            stall_tolerance: 1e-12,
            fitness_mode: FitnessMode::Shaped,
            train_flow: true,
            flow: FlowConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.population_size < 2 {
            return fail("population size must be at least 2");
        }
        if self.kl_sample_size < 2 {
            return fail("KL sample size must be at least 2");
        }
        if !(self.kl_radius > 0.0) {
            return fail("KL radius must be positive");
        }
        if !(self.initial_lambda > 0.0) {
            return fail("initial lambda must be positive");
        }
        if !(self.inner_step_size >= 0.0) {
            return fail("inner step size must be non-negative");
        }
        if self.max_generations.is_none() && self.max_evaluations.is_none() && self.stall_generations == 0 {
            return fail("no stopping criterion configured");
        }
        Ok(())
    }
}

/// Loop state between generations.
#[derive(Clone, Debug)]
pub struct GenerationState {
    pub latent: LatentParams,
    pub flow: FlowParams,
    pub lambda: f64,
    pub generation: u64,
    pub evaluations: u64,
    pub best_x: Vec<f64>,
    pub best_f: f64,
}

/// `π_new(x) / π_old(x)`, computed in log space.
pub fn importance_weight(x: &[f64], new: (&LatentParams, &FlowParams), old: (&LatentParams, &FlowParams)) -> Result<f64> {
    let log_new = flow::log_density(new.0, new.1, x)?;
    let log_old = flow::log_density(old.0, old.1, x)?;
    Ok((log_new - log_old).exp())
}

/// `1/M Σ log(π_{μ,η_p}(x̃) / π_{μ,η_q}(x̃))` over `samples` drawn from the first
/// distribution. Not clamped: it can come out slightly negative.
pub fn mc_kl(latent: &LatentParams, p_flow: &FlowParams, q_flow: &FlowParams, samples: &[Vec<f64>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("KL estimate needs samples".into()));
    }
    let mut total = 0.0;
    for x in samples {
        total += flow::log_density(latent, p_flow, x)? - flow::log_density(latent, q_flow, x)?;
    }
    Ok(total / samples.len() as f64)
}

/// Multiplies `λ` by 1.5 when the KL exceeds `2ε`, divides it by 1.5 when the KL
/// is below `ε/2`, and leaves it alone otherwise.
pub fn adapt_lambda(lambda: f64, kl: f64, radius: f64) -> f64 {
    if kl > 2.0 * radius {
        lambda * 1.5
    } else if kl < 0.5 * radius {
        lambda / 1.5
    } else {
        lambda
    }
}

/// Evaluated points of one generation in the search space.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub x: Vec<Vec<f64>>,
    pub f: Vec<f64>,
}

/// Penalized off-line objective for the flow parameters, with the latent
/// Gaussian frozen at `μ_{t+1}`:
///
/// ```text
/// L(η) = 1/N Σ f̃_i π_η(x_i)/π_{η_t}(x_i) + λ/M Σ log(π_{η_t}(x̃_j)/π_η(x̃_j))
/// ```
#[derive(Clone, Debug)]
pub struct PenalizedObjective {
    latent: LatentParams,
    x: Vec<Vec<f64>>,
    fitness: Vec<f64>,
    log_old: Vec<f64>,
    kl_samples: Vec<Vec<f64>>,
    kl_log_old: Vec<f64>,
    lambda: f64,
}

impl PenalizedObjective {
    /// `fitness` is used as given (already shaped or raw). Reference densities
    /// are those of `(latent, flow_old)`.
    pub fn new(
        latent: LatentParams,
        flow_old: &FlowParams,
        x: Vec<Vec<f64>>,
        fitness: Vec<f64>,
        kl_samples: Vec<Vec<f64>>,
        lambda: f64,
    ) -> Result<Self> {
        check_len(x.len(), fitness.len())?;
        if x.is_empty() || kl_samples.is_empty() {
            return Err(Error::InvalidConfig("penalized objective needs samples".into()));
        }
        let log_old = x.iter().map(|xi| flow::log_density(&latent, flow_old, xi)).collect::<Result<_>>()?;
        let kl_log_old = kl_samples.iter().map(|xi| flow::log_density(&latent, flow_old, xi)).collect::<Result<_>>()?;
        Ok(Self { latent, x, fitness, log_old, kl_samples, kl_log_old, lambda })
    }

    pub fn kl(&self, flow: &FlowParams) -> f64 {
        let total: f64 = self
            .kl_samples
            .iter()
            .zip(&self.kl_log_old)
            .map(|(xi, old)| old - self.latent.log_density_unchecked(&flow.inverse_unchecked(xi)))
            .sum();
        total / self.kl_samples.len() as f64
    }

    pub fn loss(&self, flow: &FlowParams) -> f64 {
        let n = self.x.len() as f64;
        let weighted: f64 = self
            .x
            .iter()
            .zip(&self.fitness)
            .zip(&self.log_old)
            .map(|((xi, fi), old)| fi * (self.latent.log_density_unchecked(&flow.inverse_unchecked(xi)) - old).exp())
            .sum();
        weighted / n + self.lambda * self.kl(flow)
    }

    /// Loss and its gradient in the flat layout of [`FlowParams::to_flat`].
    pub fn loss_and_grad(&self, flow: &FlowParams) -> (f64, Vec<f64>) {
        let n = self.x.len() as f64;
        let m = self.kl_samples.len() as f64;
        let mut grad = vec![0.0; flow.num_params()];
        let mut weighted = 0.0;
        for ((xi, &fi), &old) in self.x.iter().zip(&self.fitness).zip(&self.log_old) {
            flow.accumulate_grad_log_density(
                &self.latent,
                xi,
                |log_new| {
                    let term = fi * (log_new - old).exp();
                    weighted += term;
                    term / n
                },
                &mut grad,
            );
        }
        let mut kl = 0.0;
        let penalty = -self.lambda / m;
        for (xi, &old) in self.kl_samples.iter().zip(&self.kl_log_old) {
            let log_new = flow.accumulate_grad_log_density(&self.latent, xi, |_| penalty, &mut grad);
            kl += old - log_new;
        }
        (weighted / n + self.lambda * kl / m, grad)
    }
}

/// Result of one flow update.
#[derive(Clone, Debug)]
pub struct EtaOutcome {
    pub flow: FlowParams,
    /// KL between the old and the returned flow, on the generation's KL samples.
    pub kl: f64,
    pub steps_taken: usize,
}

/// Fits `η_{t+1}` by Adam on [`PenalizedObjective`], starting from `flow_old`.
///
/// The `M` KL samples are drawn once from `(latent_new, flow_old)` using `rng`
/// and reused for every inner step. If the loss or its gradient turns
/// non-finite the last finite iterate is returned.
pub fn eta_step(
    pop: &Population,
    latent_new: &LatentParams,
    flow_old: &FlowParams,
    lambda: f64,
    cfg: &DriverConfig,
    rng: &mut ChaCha8Rng,
) -> Result<EtaOutcome> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidConfig("lambda must be positive".into()));
    }
    let kl_samples = flow::sample(latent_new, flow_old, cfg.kl_sample_size, rng)?.x;
    let fitness = shape_fitness(&pop.f, cfg.fitness_mode);
    let problem = PenalizedObjective::new(latent_new.clone(), flow_old, pop.x.clone(), fitness, kl_samples, lambda)?;

    let mut flow = flow_old.clone();
    let mut params = flow.to_flat();
    let mut last_good = params.clone();
    let scale = if cfg.relative_step { (latent_new.log_det_factor() / latent_new.dim() as f64).exp() } else { 1.0 };
    let mut adam = Adam::new(params.len(), cfg.inner_step_size * scale);
    let mut steps_taken = 0;
    for _ in 0..cfg.inner_steps {
        let (loss, grad) = problem.loss_and_grad(&flow);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            break;
        }
        last_good.copy_from_slice(&params);
        adam.step(&mut params, &grad);
        flow.set_flat(&params)?;
        steps_taken += 1;
    }
    let mut kl = problem.kl(&flow);
    if !kl.is_finite() || params.iter().any(|p| !p.is_finite()) {
        flow.set_flat(&last_good)?;
        kl = problem.kl(&flow);
    }
    Ok(EtaOutcome { flow, kl, steps_taken })
}

fn shape_fitness(f: &[f64], mode: FitnessMode) -> Vec<f64> {
    match mode {
        FitnessMode::Shaped => make_utilities(f).into_inner().into_iter().map(|u| -u).collect(),
        FitnessMode::Raw => {
            let worst = f.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
            f.iter().map(|&v| if v.is_finite() { v } else { worst }).collect()
        }
    }
}

/// Bias-corrected adaptive-moment descent.
struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self { lr, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Independent random streams of one run, all derived from its seed.
struct Streams {
    population: ChaCha8Rng,
    kl: ChaCha8Rng,
    init: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self { population: stream(0), kl: stream(1), init: stream(2) }
    }
}

/// Runs the loop from `initial` until the budget, the generation cap or the
/// stall test stops it.
///
/// The population, the KL samples and the flow initialization use separate
/// streams derived from `seed`, so training the flow never changes which
/// latent samples are drawn.
pub fn run(
    objective: &ObjectiveSpec,
    cfg: &DriverConfig,
    optimizer: &mut dyn LatentOptimizer,
    initial: LatentParams,
    seed: u64,
) -> Result<RunRecord> {
    cfg.validate()?;
    let dim = objective.dim();
    check_len(dim, initial.dim())?;
    let mut streams = Streams::new(seed);
    let flow = if cfg.train_flow {
        FlowParams::random(dim, &cfg.flow, &mut streams.init)?
    } else {
        FlowParams::identity(dim)
    };
    let n = cfg.population_size;

    let mut state = GenerationState {
        latent: initial,
        flow,
        lambda: cfg.initial_lambda,
        generation: 0,
        evaluations: 0,
        best_x: Vec::new(),
        best_f: f64::INFINITY,
    };
    let mut rows: Vec<GenerationRecord> = Vec::new();
    let stop = loop {
        if cfg.max_generations.is_some_and(|g| state.generation >= g) {
            break StopReason::MaxGenerations;
        }
        if cfg.max_evaluations.is_some_and(|b| state.evaluations + n as u64 > b) {
            break StopReason::Budget;
        }

        let samples = flow::sample(&state.latent, &state.flow, n, &mut streams.population)?;
        let fitness: Vec<f64> = samples
            .x
            .iter()
            .map(|x| {
                let v = objective.evaluate(x);
                if v.is_nan() {
                    f64::INFINITY
                } else {
                    v
                }
            })
            .collect();
        state.evaluations += n as u64;
        for (x, &f) in samples.x.iter().zip(&fitness) {
            if f < state.best_f {
                state.best_f = f;
                state.best_x = x.clone();
            }
        }
        let finite: Vec<f64> = fitness.iter().copied().filter(|v| v.is_finite()).collect();
        let mean_f = (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64);

        let pop = EvaluatedLatentPopulation::new(samples.z, fitness.clone())?;
        // A diverging update keeps the current distribution; the generation's
        // evaluations are still logged before stopping.
        let (latent_new, diverged) = match optimizer.update(&state.latent, &pop) {
            Ok(l) => (l, None),
            Err(Error::Divergence(msg)) => (state.latent.clone(), Some(msg)),
            Err(e) => return Err(e),
        };

        let mut kl = 0.0;
        if cfg.train_flow && diverged.is_none() {
            let population = Population { x: samples.x, f: fitness };
            let outcome = eta_step(&population, &latent_new, &state.flow, state.lambda, cfg, &mut streams.kl)?;
            kl = outcome.kl;
            state.flow = outcome.flow;
            state.lambda = adapt_lambda(state.lambda, kl, cfg.kl_radius);
        }
        state.latent = latent_new;

        rows.push(GenerationRecord {
            generation: state.generation,
            evaluations: state.evaluations,
            best_f: state.best_f,
            mean_f,
            lambda: state.lambda,
            kl,
            entropy: state.latent.entropy(),
        });
        state.generation += 1;
        if let Some(msg) = diverged {
            break StopReason::Diverged(msg);
        }

        let window = cfg.stall_generations;
        if window > 0 && rows.len() > window {
            let earlier = rows[rows.len() - 1 - window].best_f;
            if earlier - state.best_f < cfg.stall_tolerance {
                break StopReason::Converged;
            }
        }
    };

    Ok(RunRecord {
        generations: rows,
        best_x: state.best_x,
        best_f: state.best_f,
        evaluations: state.evaluations,
        stop,
        final_state: Checkpoint { latent: state.latent, flow: state.flow },
    })
}
