//! ABC rejection and sequential ABC with adaptive tolerances.
//!
//! Distances are squared Euclidean over observed entries. Candidates are
//! evaluated in deterministic batches: attempt `a` of a generation uses
//! substream `(generation seed, a)`, and acceptances are taken in attempt
//! order, so populations do not depend on the worker count. A batch is
//! charged before it runs; candidates simulated past the M-th acceptance
//! stay charged.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{quantile, weighted_covariance};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ledger::BudgetLedger;
use crate::model::simulate::{advance, count_realisations, Scratch};
use crate::model::ObservedDataset;
use crate::prior::{ParameterPrior, PriorComponent};
use crate::problem::InferenceProblem;
use crate::rng::{substream, SimRng};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const MIN_BATCH: usize = 16;
const MAX_BATCH: usize = 8192;

/// Squared Euclidean distance over the entries observed in both datasets.
pub fn distance(d: &ObservedDataset, candidate: &ObservedDataset) -> Result<f64> {
    if d.times != candidate.times || d.model.observed != candidate.model.observed {
        return Err(Error::Shape("datasets differ in time grid or observation mask".into()));
    }
    Ok(d.values
        .iter()
        .zip(&candidate.values)
        .map(|(a, b)| row_distance(a, b))
        .sum())
}

fn row_distance(a: &[Option<f64>], b: &[Option<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => (x - y) * (x - y),
            _ => 0.0,
        })
        .sum()
}

/// Simulates one candidate row by row, handing each noisy row to `visit`,
/// which returns false to stop early. Returns false if the path exploded.
fn simulate_rows<R, F>(problem: &InferenceProblem, log_params: &[f64], rng: &mut R, mut visit: F) -> Result<bool>
where
    R: Rng + ?Sized,
    F: FnMut(usize, Vec<Option<f64>>) -> bool,
{
    let (theta, sigma) = problem.unpack(log_params)?;
    let net = &problem.network;
    let data = &problem.dataset;
    count_realisations(1);
    let mut x = problem.state_prior.sample(rng);
    let mut scratch = Scratch::new(net);
    let mut t = 0.0;
    for (k, &tk) in data.times.iter().enumerate() {
        if tk > t {
            if advance(
                net,
                theta.values(),
                &mut x,
                t,
                tk,
                rng,
                &problem.limits,
                &mut scratch,
                |_, _| {},
            )
            .is_err()
            {
                return Ok(false);
            }
            t = tk;
        }
        if !visit(k, data.model.emit(&x, sigma, rng)) {
            break;
        }
    }
    Ok(true)
}

/// Candidate dataset at `log_params` on the problem's time grid and mask,
/// with noise drawn at the candidate's σ. Charges one unit.
pub fn simulate_candidate<R: Rng + ?Sized>(
    problem: &InferenceProblem,
    log_params: &[f64],
    rng: &mut R,
    ledger: &BudgetLedger,
) -> Result<ObservedDataset> {
    problem.unpack(log_params)?;
    ledger.charge(1)?;
    let mut rows = Vec::with_capacity(problem.dataset.num_times());
    if !simulate_rows(problem, log_params, rng, |_, row| {
        rows.push(row);
        true
    })? {
        return Err(Error::HazardOverflow(
            "candidate path exceeded simulation limits".into(),
        ));
    }
    ObservedDataset::new(problem.dataset.times.clone(), rows, problem.dataset.model.clone())
}

/// Distance of a fresh candidate to the data, abandoned once the partial sum
/// reaches `eps`. Exploded paths are infinitely far. Does not charge.
fn candidate_distance(problem: &InferenceProblem, log_params: &[f64], eps: f64, rng: &mut SimRng) -> Result<f64> {
    let mut acc = 0.0;
    let data = &problem.dataset.values;
    let finished = simulate_rows(problem, log_params, rng, |k, row| {
        acc += row_distance(&data[k], &row);
        acc < eps
    })?;
    Ok(if finished { acc } else { f64::INFINITY })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotOutcome {
    pub epsilon: f64,
    pub distances: Vec<f64>,
}

/// ε₀ as the `q`-quantile of `n_pilot` prior-predictive distances.
pub fn pilot_tolerance<R: Rng + ?Sized>(
    problem: &InferenceProblem,
    n_pilot: usize,
    q: f64,
    rng: &mut R,
    ledger: &BudgetLedger,
    exec: Exec,
) -> Result<PilotOutcome> {
    if n_pilot < 100 {
        return Err(Error::Invalid(format!(
            "pilot needs at least 100 candidates, got {n_pilot}"
        )));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Invalid(format!("pilot quantile {q} must lie in (0, 1]")));
    }
    ledger.charge(n_pilot as u64)?;
    let seed: u64 = rng.random();
    let distances = exec
        .map(n_pilot, |a| {
            let mut r = substream(seed, a as u64, 0);
            let theta = problem.prior.sample(&mut r);
            candidate_distance(problem, &theta, f64::INFINITY, &mut r)
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    Ok(PilotOutcome {
        epsilon: quantile(&distances, q),
        distances,
    })
}

/// One ABC population on the log-parameter scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub generation: usize,
    pub tolerance: f64,
    pub names: Vec<String>,
    pub particles: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub distances: Vec<f64>,
    /// Proposals drawn, including prior-unsupported ones that cost nothing.
    pub attempts: u64,
    /// Budget units spent on this generation.
    pub simulations: u64,
    /// Ledger reading when the generation closed.
    pub budget_mark: u64,
    /// Particles whose weight denominator underflowed.
    pub zero_weights: usize,
}

impl Population {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.simulations == 0 {
            0.0
        } else {
            self.len() as f64 / self.simulations as f64
        }
    }

    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.particles.iter().map(|p| p[i]).collect()
    }

    pub fn manifest(&self) -> GenerationManifest {
        GenerationManifest {
            generation: self.generation,
            epsilon: self.tolerance,
            accepted: self.len(),
            attempts: self.attempts,
            simulations: self.simulations,
            acceptance_rate: self.acceptance_rate(),
            cumulative_budget: self.budget_mark,
            zero_weights: self.zero_weights,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["particle".to_string()];
        header.extend(self.names.iter().cloned());
        header.extend(["weight".to_string(), "distance".to_string()]);
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![i.to_string()];
            rec.extend(self.particles[i].iter().map(|x| x.to_string()));
            rec.push(self.weights[i].to_string());
            rec.push(self.distances[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads particles back; generation metadata comes from `manifest`.
    pub fn read_csv<R: Read>(reader: R, manifest: &GenerationManifest) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let n = header.len();
        if n < 4 || &header[0] != "particle" {
            return Err(Error::Parse("population header must start with particle".into()));
        }
        let names: Vec<String> = header.iter().skip(1).take(n - 3).map(str::to_string).collect();
        let mut pop = Population {
            generation: manifest.generation,
            tolerance: manifest.epsilon,
            names,
            particles: Vec::new(),
            weights: Vec::new(),
            distances: Vec::new(),
            attempts: manifest.attempts,
            simulations: manifest.simulations,
            budget_mark: manifest.cumulative_budget,
            zero_weights: manifest.zero_weights,
        };
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("population field {:?}: {e}", &rec[i])))
            };
            pop.particles.push((1..n - 2).map(num).collect::<Result<_>>()?);
            pop.weights.push(num(n - 2)?);
            pop.distances.push(num(n - 1)?);
        }
        Ok(pop)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub generation: usize,
    #[serde(with = "crate::textnum")]
    pub epsilon: f64,
    pub accepted: usize,
    pub attempts: u64,
    pub simulations: u64,
    pub acceptance_rate: f64,
    pub cumulative_budget: u64,
    pub zero_weights: usize,
}

/// Gaussian perturbation kernel over the coordinates not fixed by a
/// point-mass prior.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub active: Vec<usize>,
    pub covariance: DMatrix<f64>,
    lower: DMatrix<f64>,
    log_norm: f64,
}

impl KernelSpec {
    pub fn new(active: Vec<usize>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != active.len() || !covariance.is_square() {
            return Err(Error::Shape(
                "kernel covariance does not match active coordinates".into(),
            ));
        }
        if covariance.diagonal().iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Degenerate(
                "kernel needs a population with spread in every free coordinate".into(),
            ));
        }
        let lower = nalgebra::Cholesky::new(covariance.clone())
            .ok_or(Error::NotPositiveDefinite)?
            .l();
        let log_det: f64 = lower.diagonal().iter().map(|l| l.ln()).sum();
        let log_norm = -log_det - 0.5 * active.len() as f64 * LN_2PI;
        Ok(Self {
            active,
            covariance,
            lower,
            log_norm,
        })
    }

    pub fn perturb<R: Rng + ?Sized>(&self, from: &[f64], rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.active.len(), |_, _| StandardNormal.sample(rng));
        let step = &self.lower * z;
        let mut out = from.to_vec();
        for (k, &i) in self.active.iter().enumerate() {
            out[i] += step[k];
        }
        out
    }

    /// log K(from → to) over the active coordinates.
    pub fn log_density(&self, from: &[f64], to: &[f64]) -> f64 {
        let diff = DVector::from_fn(self.active.len(), |k, _| to[self.active[k]] - from[self.active[k]]);
        let z = self
            .lower
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a nonzero diagonal");
        -0.5 * z.norm_squared() + self.log_norm
    }
}

/// Coordinates a kernel may move: those without a point-mass prior.
pub fn free_coordinates(prior: &ParameterPrior) -> Vec<usize> {
    prior
        .components
        .iter()
        .enumerate()
        .filter(|(_, c)| !matches!(c, PriorComponent::PointMass { .. }))
        .map(|(i, _)| i)
        .collect()
}

/// Kernel covariance = 2 × weighted empirical covariance of the population
/// over the `active` coordinates.
pub fn adaptive_kernel(population: &Population, active: &[usize]) -> Result<KernelSpec> {
    if population.is_empty() {
        return Err(Error::Degenerate(
            "kernel needs a population with spread in every free coordinate".into(),
        ));
    }
    let projected: Vec<Vec<f64>> = population
        .particles
        .iter()
        .map(|p| active.iter().map(|&i| p[i]).collect())
        .collect();
    let (_, cov) = weighted_covariance(&projected, &population.weights);
    let d = active.len();
    KernelSpec::new(active.to_vec(), DMatrix::from_fn(d, d, |i, j| 2.0 * cov[i][j]))
}

/// Unnormalized log-weight π(θ) / Σ_j w_j K(θ_j → θ). The second value is
/// true when the denominator underflowed, in which case the weight is zero.
pub fn smc_weight(theta: &[f64], prior: &ParameterPrior, prev: &Population, kernel: &KernelSpec) -> (f64, bool) {
    let terms: Vec<f64> = prev
        .particles
        .iter()
        .zip(&prev.weights)
        .map(|(p, &w)| w.ln() + kernel.log_density(p, theta))
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return (f64::NEG_INFINITY, true);
    }
    let log_den = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    (prior.log_density(theta) - log_den, false)
}

/// The `q`-quantile of the accepted distances, or `None` when it does not
/// fall strictly below the current tolerance.
pub fn next_tolerance(population: &Population, q: f64) -> Option<f64> {
    if population.is_empty() {
        return None;
    }
    let next = quantile(&population.distances, q);
    (next < population.tolerance).then_some(next)
}

struct Accepted {
    attempt: u64,
    theta: Vec<f64>,
    distance: f64,
}

struct GenerationDraw {
    accepted: Vec<Accepted>,
    attempts: u64,
    simulations: u64,
    complete: bool,
}

/// Draws candidates until `m` are accepted at `eps` or the ledger runs dry.
/// `propose` returns `None` for prior-unsupported proposals, which are
/// skipped without simulation.
fn draw_generation<R, P>(
    problem: &InferenceProblem,
    m: usize,
    eps: f64,
    rng: &mut R,
    ledger: &BudgetLedger,
    exec: Exec,
    propose: P,
) -> Result<GenerationDraw>
where
    R: Rng + ?Sized,
    P: Fn(&mut SimRng) -> Option<Vec<f64>> + Sync,
{
    let seed: u64 = rng.random();
    let mut accepted: Vec<Accepted> = Vec::with_capacity(m);
    let mut attempts = 0u64;
    let mut simulations = 0u64;
    loop {
        let batch = if accepted.is_empty() {
            256
        } else {
            let per = simulations as f64 / accepted.len() as f64;
            ((m - accepted.len()) as f64 * per * 1.2).ceil() as usize
        }
        .clamp(MIN_BATCH, MAX_BATCH);

        let proposals: Vec<Option<Vec<f64>>> =
            exec.map(batch, |k| propose(&mut substream(seed, attempts + k as u64, 0)));
        // keep the longest prefix of the batch whose simulations are affordable
        let remaining = ledger.remaining();
        let mut cost = 0u64;
        let mut take = 0;
        for theta in &proposals {
            let c = u64::from(theta.is_some());
            if cost + c > remaining {
                break;
            }
            cost += c;
            take += 1;
        }
        let exhausted = take < batch;
        if cost > 0 {
            ledger.charge(cost)?;
        }
        let results: Vec<Result<Option<f64>>> = exec.map(take, |k| match &proposals[k] {
            Some(theta) => {
                candidate_distance(problem, theta, eps, &mut substream(seed, attempts + k as u64, 1)).map(Some)
            }
            None => Ok(None),
        });
        simulations += cost;
        for (k, (res, theta)) in results.into_iter().zip(proposals).enumerate() {
            if let (Some(d), Some(theta)) = (res?, theta) {
                if d < eps && accepted.len() < m {
                    accepted.push(Accepted {
                        attempt: attempts + k as u64,
                        theta,
                        distance: d,
                    });
                }
            }
        }
        attempts += take as u64;
        if accepted.len() >= m {
            return Ok(GenerationDraw {
                accepted,
                attempts,
                simulations,
                complete: true,
            });
        }
        if exhausted {
            return Ok(GenerationDraw {
                accepted,
                attempts,
                simulations,
                complete: false,
            });
        }
    }
}

/// ABC rejection at fixed `eps`: prior draws until `m` acceptances or the
/// ledger is exhausted. Weights are uniform.
pub fn abc_rejection<R: Rng + ?Sized>(
    problem: &InferenceProblem,
    eps: f64,
    m: usize,
    rng: &mut R,
    ledger: &BudgetLedger,
    exec: Exec,
) -> Result<Population> {
    if !(eps > 0.0) {
        return Err(Error::Invalid(format!("tolerance {eps} must be positive")));
    }
    if m == 0 {
        return Err(Error::Invalid("population size must be positive".into()));
    }
    let draw = draw_generation(problem, m, eps, rng, ledger, exec, |r| Some(problem.prior.sample(r)))?;
    if draw.accepted.is_empty() {
        return Err(Error::NoAcceptances {
            attempts: draw.attempts,
            spent: draw.simulations,
        });
    }
    let n = draw.accepted.len();
    Ok(Population {
        generation: 0,
        tolerance: eps,
        names: problem.parameter_names(),
        particles: draw.accepted.iter().map(|a| a.theta.clone()).collect(),
        weights: vec![1.0 / n as f64; n],
        distances: draw.accepted.iter().map(|a| a.distance).collect(),
        attempts: draw.attempts,
        simulations: draw.simulations,
        budget_mark: ledger.consumed(),
        zero_weights: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ToleranceRule {
    /// ε_{t+1} is the q-quantile of generation t's distances.
    Quantile { q: f64 },
    /// ε stays at ε₀.
    Fixed,
}

impl Default for ToleranceRule {
    fn default() -> Self {
        ToleranceRule::Quantile { q: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcConfig {
    pub population_size: usize,
    #[serde(with = "crate::textnum")]
    pub epsilon0: f64,
    pub rule: ToleranceRule,
    pub max_generations: Option<usize>,
    pub exec: Exec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Budget,
    ToleranceStalled,
    MaxGenerations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbcRun {
    pub populations: Vec<Population>,
    pub termination: Termination,
    /// Units spent on a final generation that was abandoned.
    pub discarded_simulations: u64,
}

/// Sequential ABC. Generation 0 is [`abc_rejection`] at ε₀; later
/// generations resample, perturb, weight and normalize. A generation cut
/// short by the budget is discarded.
pub fn run_abc_smc<R: Rng + ?Sized>(
    problem: &InferenceProblem,
    config: &AbcConfig,
    rng: &mut R,
    ledger: &BudgetLedger,
) -> Result<AbcRun> {
    let m = config.population_size;
    if m < 2 {
        return Err(Error::Invalid(format!("population size {m} must be at least 2")));
    }
    if let ToleranceRule::Quantile { q } = config.rule {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::Invalid(format!("tolerance quantile {q} must lie in (0, 1]")));
        }
    }
    let mut populations = vec![abc_rejection(problem, config.epsilon0, m, rng, ledger, config.exec)?];
    if populations[0].len() < m {
        return Ok(AbcRun {
            populations,
            termination: Termination::Budget,
            discarded_simulations: 0,
        });
    }
    let active = free_coordinates(&problem.prior);
    loop {
        let prev = populations.last().expect("generation 0 exists");
        if config.max_generations.is_some_and(|g| populations.len() >= g) {
            return Ok(AbcRun {
                populations,
                termination: Termination::MaxGenerations,
                discarded_simulations: 0,
            });
        }
        let eps = match config.rule {
            ToleranceRule::Fixed => prev.tolerance,
            ToleranceRule::Quantile { q } => match next_tolerance(prev, q) {
                Some(e) => e,
                None => {
                    return Ok(AbcRun {
                        populations,
                        termination: Termination::ToleranceStalled,
                        discarded_simulations: 0,
                    })
                }
            },
        };
        let kernel = adaptive_kernel(prev, &active)?;
        let cumulative: Vec<f64> = prev
            .weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        let total = *cumulative.last().expect("nonempty population");
        let prior = &problem.prior;
        let draw = draw_generation(problem, m, eps, rng, ledger, config.exec, |r| {
            let u = r.random::<f64>() * total;
            let j = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
            let theta = kernel.perturb(&prev.particles[j], r);
            prior.in_support(&theta).then_some(theta)
        })?;
        if !draw.complete {
            return Ok(AbcRun {
                populations,
                termination: Termination::Budget,
                discarded_simulations: draw.simulations,
            });
        }
        let weighed: Vec<(f64, bool)> = config.exec.map(draw.accepted.len(), |k| {
            smc_weight(&draw.accepted[k].theta, prior, prev, &kernel)
        });
        let zero_weights = weighed.iter().filter(|w| w.1).count();
        let max = weighed.iter().map(|w| w.0).fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::ZeroWeights);
        }
        let raw: Vec<f64> = weighed.iter().map(|w| (w.0 - max).exp()).collect();
        let sum: f64 = raw.iter().sum();
        debug_assert!(draw.accepted.windows(2).all(|w| w[0].attempt < w[1].attempt));
        let generation = populations.len();
        populations.push(Population {
            generation,
            tolerance: eps,
            names: problem.parameter_names(),
            particles: draw.accepted.iter().map(|a| a.theta.clone()).collect(),
            weights: raw.iter().map(|w| w / sum).collect(),
            distances: draw.accepted.iter().map(|a| a.distance).collect(),
            attempts: draw.attempts,
            simulations: draw.simulations,
            budget_mark: ledger.consumed(),
            zero_weights,
        });
    }
}
