//! Bootstrap particle filter and particle-count tuning.
//!
//! The filter returns an unbiased estimate of the likelihood π(D|θ) (on the
//! log scale). One call with N particles is charged N budget units: each
//! particle accounts for one latent path over the full observation window.
//!
//! Work inside a call is a parallel map over particles. Particle `i` on
//! interval `k` draws from the substream `(call_seed, k, i)`, where
//! `call_seed` is the single value the filter takes from the caller's
//! generator, so estimates do not depend on the worker count.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ledger::BudgetLedger;
use crate::model::simulate::{advance, count_realisations, Scratch};
use crate::model::{ObservedDataset, RateParameters, ReactionNetwork, SimulationLimits};
use crate::prior::StatePrior;
use crate::rng::substream;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const RESAMPLE_STREAM: u64 = u64::MAX - 1;

/// Σ over observed species of log N(d | x, σ²). Missing entries contribute 0.
pub fn emission_logdensity(row: &[Option<f64>], x: &[i64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Invalid(format!("noise sd {sigma} must be positive")));
    }
    if row.len() != x.len() {
        return Err(Error::Shape(format!(
            "observation row of width {} for {} species",
            row.len(),
            x.len()
        )));
    }
    Ok(emission_unchecked(row, x, sigma))
}

#[inline]
pub(crate) fn emission_unchecked(row: &[Option<f64>], x: &[i64], sigma: f64) -> f64 {
    let norm = -sigma.ln() - LN_SQRT_2PI;
    let inv = 1.0 / sigma;
    let mut acc = 0.0;
    for (d, &c) in row.iter().zip(x) {
        if let Some(d) = d {
            let z = (d - c as f64) * inv;
            acc += norm - 0.5 * z * z;
        }
    }
    acc
}

/// log((1/n) Σ exp(l_i)), −∞ when every term is −∞.
pub fn log_mean_exp(logs: &[f64]) -> f64 {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    max + (sum / logs.len() as f64).ln()
}

/// Draws `n` i.i.d. indices from the categorical distribution ∝ `weights`.
pub fn multinomial_resample<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Result<Vec<usize>> {
    let cumulative = cumulative_weights(weights)?;
    let total = *cumulative.last().expect("nonempty");
    Ok((0..n)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            cumulative.partition_point(|&c| c <= u).min(weights.len() - 1)
        })
        .collect())
}

/// Systematic resampling: one uniform offset, `n` evenly spaced points.
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Result<Vec<usize>> {
    let cumulative = cumulative_weights(weights)?;
    let total = *cumulative.last().expect("nonempty");
    let offset = rng.random::<f64>();
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for i in 0..n {
        let u = (i as f64 + offset) / n as f64 * total;
        while j + 1 < cumulative.len() && cumulative[j] <= u {
            j += 1;
        }
        out.push(j);
    }
    Ok(out)
}

fn cumulative_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::Invalid("no weights to resample".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Invalid("weights must be finite and nonnegative".into()));
    }
    let mut acc = 0.0;
    let cumulative: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    if acc <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    Ok(cumulative)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    #[default]
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct FilterOptions {
    pub resampling: Resampling,
    pub exec: Exec,
    pub limits: SimulationLimits,
}

/// Weighted particles at one observation time.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub states: Vec<Vec<i64>>,
    pub weights: Vec<f64>,
}

impl ParticleSet {
    fn from_log_weights(states: Vec<Vec<i64>>, log_w: &[f64]) -> Self {
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self { states, weights }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLikEstimate {
    pub log_value: f64,
    /// log π̂(d_t | d_0..d_{t−1}) per observation time; may stop early at a −∞ term.
    pub per_observation_terms: Vec<f64>,
}

impl LogLikEstimate {
    fn from_terms(per_observation_terms: Vec<f64>) -> Self {
        Self {
            log_value: per_observation_terms.iter().sum(),
            per_observation_terms,
        }
    }
}

struct Particle {
    x: Vec<i64>,
    log_w: f64,
}

/// Runs the bootstrap filter at rates `theta` and noise sd `sigma`.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_filter<R: Rng + ?Sized>(
    net: &ReactionNetwork,
    theta: &RateParameters,
    sigma: f64,
    dataset: &ObservedDataset,
    n: usize,
    state_prior: &StatePrior,
    rng: &mut R,
    ledger: &BudgetLedger,
    opts: &FilterOptions,
) -> Result<LogLikEstimate> {
    run_filter(net, theta, sigma, dataset, n, state_prior, rng, ledger, opts, |_, _| {})
}

/// As [`bootstrap_filter`], also handing the normalized particle set after
/// each observation to `inspect`.
#[allow(clippy::too_many_arguments)]
pub fn run_filter<R, F>(
    net: &ReactionNetwork,
    theta: &RateParameters,
    sigma: f64,
    dataset: &ObservedDataset,
    n: usize,
    state_prior: &StatePrior,
    rng: &mut R,
    ledger: &BudgetLedger,
    opts: &FilterOptions,
    mut inspect: F,
) -> Result<LogLikEstimate>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &ParticleSet),
{
    if n == 0 {
        return Err(Error::Invalid("particle filter needs at least one particle".into()));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Invalid(format!("noise sd {sigma} must be positive")));
    }
    if dataset.num_species() != net.num_species() || state_prior.num_species() != net.num_species() {
        return Err(Error::Shape(
            "dataset, state prior and network disagree on species count".into(),
        ));
    }
    net.check_dims(&vec![0; net.num_species()], theta)?;
    ledger.charge(n as u64)?;
    count_realisations(n as u64);

    let call_seed: u64 = rng.random();
    let times = &dataset.times;
    let first_row = &dataset.values[0];
    let mut particles: Vec<Particle> = opts.exec.map(n, |i| {
        let mut prng = substream(call_seed, 0, i as u64);
        let mut x = state_prior.sample(&mut prng);
        // the state prior sits at time 0; carry it to the first observation
        let reached = times[0] == 0.0
            || advance(
                net,
                theta.values(),
                &mut x,
                0.0,
                times[0],
                &mut prng,
                &opts.limits,
                &mut Scratch::new(net),
                |_, _| {},
            )
            .is_ok();
        let log_w = if reached {
            emission_unchecked(first_row, &x, sigma)
        } else {
            f64::NEG_INFINITY
        };
        Particle { x, log_w }
    });

    let mut terms = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        if k > 0 {
            let weights = normalized(&particles);
            let mut rrng = substream(call_seed, RESAMPLE_STREAM, k as u64);
            let picks = match opts.resampling {
                Resampling::Multinomial => multinomial_resample(&weights, n, &mut rrng)?,
                Resampling::Systematic => systematic_resample(&weights, n, &mut rrng)?,
            };
            let mut next: Vec<Particle> = picks
                .into_iter()
                .map(|p| Particle {
                    x: particles[p].x.clone(),
                    log_w: 0.0,
                })
                .collect();
            let (t0, t1) = (times[k - 1], times[k]);
            let row = &dataset.values[k];
            let theta = theta.values();
            opts.exec.for_each_mut(&mut next, |i, p| {
                let mut prng = substream(call_seed, k as u64, i as u64);
                let mut scratch = Scratch::new(net);
                p.log_w = match advance(
                    net,
                    theta,
                    &mut p.x,
                    t0,
                    t1,
                    &mut prng,
                    &opts.limits,
                    &mut scratch,
                    |_, _| {},
                ) {
                    Ok(_) => emission_unchecked(row, &p.x, sigma),
                    Err(_) => f64::NEG_INFINITY,
                };
            });
            particles = next;
        }
        let logs: Vec<f64> = particles.iter().map(|p| p.log_w).collect();
        let term = log_mean_exp(&logs);
        terms.push(term);
        if term == f64::NEG_INFINITY {
            return Ok(LogLikEstimate::from_terms(terms));
        }
        let set = ParticleSet::from_log_weights(particles.iter().map(|p| p.x.clone()).collect(), &logs);
        inspect(k, &set);
    }
    Ok(LogLikEstimate::from_terms(terms))
}

fn normalized(particles: &[Particle]) -> Vec<f64> {
    let max = particles.iter().map(|p| p.log_w).fold(f64::NEG_INFINITY, f64::max);
    particles.iter().map(|p| (p.log_w - max).exp()).collect()
}

/// Unbiased sample variance; +∞ if any value is −∞.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.contains(&f64::NEG_INFINITY) {
        return f64::INFINITY;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Sample variance of `reps` independent log-likelihood estimates.
#[allow(clippy::too_many_arguments)]
pub fn loglik_variance<R: Rng + ?Sized>(
    net: &ReactionNetwork,
    theta: &RateParameters,
    sigma: f64,
    dataset: &ObservedDataset,
    n: usize,
    reps: usize,
    state_prior: &StatePrior,
    rng: &mut R,
    ledger: &BudgetLedger,
    opts: &FilterOptions,
) -> Result<f64> {
    Ok(sample_variance(&loglik_draws(
        net,
        theta,
        sigma,
        dataset,
        n,
        reps,
        state_prior,
        rng,
        ledger,
        opts,
    )?))
}

#[allow(clippy::too_many_arguments)]
fn loglik_draws<R: Rng + ?Sized>(
    net: &ReactionNetwork,
    theta: &RateParameters,
    sigma: f64,
    dataset: &ObservedDataset,
    n: usize,
    reps: usize,
    state_prior: &StatePrior,
    rng: &mut R,
    ledger: &BudgetLedger,
    opts: &FilterOptions,
) -> Result<Vec<f64>> {
    if reps < 2 {
        return Err(Error::Invalid("variance needs at least two repetitions".into()));
    }
    if !ledger.can_afford((n * reps) as u64) {
        return Err(Error::BudgetExhausted {
            requested: (n * reps) as u64,
            remaining: ledger.remaining(),
        });
    }
    (0..reps)
        .map(|_| bootstrap_filter(net, theta, sigma, dataset, n, state_prior, rng, ledger, opts).map(|e| e.log_value))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    /// Target band for Var(log π̂).
    pub band: (f64, f64),
    pub start: usize,
    pub reps: usize,
    pub max_particles: usize,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            band: (1.5, 1.8),
            start: 8,
            reps: 20,
            max_particles: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub particles: usize,
    pub variance: f64,
    /// Every (N, measured variance) pair, in search order.
    pub history: Vec<(usize, f64)>,
    pub spent: u64,
}

/// Searches for a particle count whose log-likelihood variance lies in the
/// band: doubling (or halving) from `start` until the band is bracketed,
/// then bisection. When no integer count lands inside the band, the smallest
/// count below the band's upper edge is returned.
#[allow(clippy::too_many_arguments)]
pub fn tune_particle_count<R: Rng + ?Sized>(
    net: &ReactionNetwork,
    theta: &RateParameters,
    sigma: f64,
    dataset: &ObservedDataset,
    state_prior: &StatePrior,
    rng: &mut R,
    ledger: &BudgetLedger,
    filter: &FilterOptions,
    opts: &TuneOptions,
) -> Result<TuneOutcome> {
    let (lo, hi) = opts.band;
    if !(lo < hi) {
        return Err(Error::Invalid(format!("band ({lo}, {hi}) is empty")));
    }
    if opts.start == 0 {
        return Err(Error::Invalid("tuning must start from at least one particle".into()));
    }
    let start_consumed = ledger.consumed();
    let mut history = Vec::new();
    let mut measure = |n: usize, history: &mut Vec<(usize, f64)>| -> Result<f64> {
        let draws = loglik_draws(
            net,
            theta,
            sigma,
            dataset,
            n,
            opts.reps,
            state_prior,
            rng,
            ledger,
            filter,
        )
        .map_err(|e| Error::Tuning {
            spent: ledger.consumed() - start_consumed,
            reason: e.to_string(),
        })?;
        if draws.iter().all(|d| *d == f64::NEG_INFINITY) {
            return Err(Error::Tuning {
                spent: ledger.consumed() - start_consumed,
                reason: format!("every estimate at N={n} is -inf; the parameters are incompatible with the data"),
            });
        }
        let v = sample_variance(&draws);
        history.push((n, v));
        Ok(v)
    };
    let in_band = |v: f64| v > lo && v < hi;
    // an in-band reading is confirmed by a second independent measurement and
    // the pooled variance decides
    let mut probe = |n: usize, history: &mut Vec<(usize, f64)>| -> Result<f64> {
        let v = measure(n, history)?;
        if !in_band(v) {
            return Ok(v);
        }
        Ok(0.5 * (v + measure(n, history)?))
    };
    let done = |n: usize, v: f64, history: Vec<(usize, f64)>| TuneOutcome {
        particles: n,
        variance: v,
        history,
        spent: ledger.consumed() - start_consumed,
    };

    let mut n = opts.start;
    let mut v = probe(n, &mut history)?;
    if in_band(v) {
        return Ok(done(n, v, history));
    }
    // `noisy` has variance above the band, `quiet` below it.
    let (mut noisy, mut quiet, mut quiet_v);
    if v >= hi {
        loop {
            noisy = n;
            n *= 2;
            if n > opts.max_particles {
                return Err(Error::Tuning {
                    spent: ledger.consumed() - start_consumed,
                    reason: format!("variance still {v} at the particle cap {}", opts.max_particles),
                });
            }
            v = probe(n, &mut history)?;
            if in_band(v) {
                return Ok(done(n, v, history));
            }
            if v <= lo {
                quiet = n;
                quiet_v = v;
                break;
            }
        }
    } else {
        loop {
            quiet = n;
            quiet_v = v;
            if n == 1 {
                return Ok(done(1, v, history));
            }
            n /= 2;
            v = probe(n, &mut history)?;
            if in_band(v) {
                return Ok(done(n, v, history));
            }
            if v >= hi {
                noisy = n;
                break;
            }
        }
    }
    while quiet - noisy > 1 {
        let mid = noisy + (quiet - noisy) / 2;
        let v = probe(mid, &mut history)?;
        if in_band(v) {
            return Ok(done(mid, v, history));
        }
        if v >= hi {
            noisy = mid;
        } else {
            quiet = mid;
            quiet_v = v;
        }
    }
    Ok(done(quiet, quiet_v, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_network, NoiseSd, ObservationModel};
    use crate::rng::seeded;

    #[test]
    fn emission_at_mode() {
        let l = emission_logdensity(&[Some(5.0)], &[5], 1.0).unwrap();
        assert!((l + LN_SQRT_2PI).abs() < 1e-15);
    }

    #[test]
    fn emission_two_species() {
        let l = emission_logdensity(&[Some(6.0), Some(8.0)], &[5, 7], 1.0).unwrap();
        let expected = -(2.0 * std::f64::consts::PI).ln() - 1.0;
        assert!((l - expected).abs() < 1e-14);
    }

    #[test]
    fn emission_skips_missing() {
        let both = emission_logdensity(&[Some(6.0), None], &[5, 700], 1.0).unwrap();
        let prey = emission_logdensity(&[Some(6.0)], &[5], 1.0).unwrap();
        assert_eq!(both, prey);
        assert!(emission_logdensity(&[Some(1.0)], &[1], 0.0).is_err());
        assert!(emission_logdensity(&[Some(1.0)], &[1], -1.0).is_err());
    }

    #[test]
    fn resample_degenerate_and_zero() {
        let idx = multinomial_resample(&[1.0, 0.0, 0.0], 50, &mut seeded(1)).unwrap();
        assert!(idx.iter().all(|&i| i == 0));
        assert!(matches!(
            multinomial_resample(&[0.0, 0.0], 5, &mut seeded(1)),
            Err(Error::ZeroWeights)
        ));
        let idx = systematic_resample(&[0.0, 1.0, 0.0], 10, &mut seeded(1)).unwrap();
        assert!(idx.iter().all(|&i| i == 1));
    }

    #[test]
    fn resample_frequencies() {
        let n = 10_000;
        let idx = multinomial_resample(&[0.25; 4], n, &mut seeded(2)).unwrap();
        let se = (0.25f64 * 0.75 / n as f64).sqrt();
        for k in 0..4 {
            let f = idx.iter().filter(|&&i| i == k).count() as f64 / n as f64;
            assert!((f - 0.25).abs() < 3.0 * se, "index {k}: {f}");
        }
        let idx = multinomial_resample(&[0.9, 0.1], n, &mut seeded(3)).unwrap();
        let f = idx.iter().filter(|&&i| i == 0).count() as f64 / n as f64;
        assert!((f - 0.9).abs() < 3.0 * (0.09f64 / n as f64).sqrt());
    }

    fn death_setup() -> (ReactionNetwork, ObservedDataset) {
        let net = build_network(&[vec![1]], &[vec![0]], &["X"]).unwrap();
        let model = ObservationModel::new(NoiseSd::Known(2.0), vec![true]).unwrap();
        let data = ObservedDataset::new(
            vec![0.0, 1.0, 2.0],
            vec![vec![Some(19.0)], vec![Some(12.5)], vec![Some(7.0)]],
            model,
        )
        .unwrap();
        (net, data)
    }

    #[test]
    fn single_observation_is_pure_emission() {
        let (net, data) = death_setup();
        let one = ObservedDataset::new(vec![0.0], vec![vec![Some(19.0)]], data.model.clone()).unwrap();
        let prior = StatePrior::point(vec![20]).unwrap();
        let est = bootstrap_filter(
            &net,
            &RateParameters::new(vec![0.5]).unwrap(),
            2.0,
            &one,
            7,
            &prior,
            &mut seeded(1),
            &BudgetLedger::unlimited(),
            &FilterOptions::default(),
        )
        .unwrap();
        let expected = emission_logdensity(&[Some(19.0)], &[20], 2.0).unwrap();
        assert!((est.log_value - expected).abs() < 1e-12);
    }

    #[test]
    fn budget_is_charged_n_and_checked_up_front() {
        let (net, data) = death_setup();
        let prior = StatePrior::point(vec![20]).unwrap();
        let theta = RateParameters::new(vec![0.5]).unwrap();
        let ledger = BudgetLedger::new(25);
        bootstrap_filter(
            &net,
            &theta,
            2.0,
            &data,
            10,
            &prior,
            &mut seeded(1),
            &ledger,
            &FilterOptions::default(),
        )
        .unwrap();
        assert_eq!(ledger.consumed(), 10);
        bootstrap_filter(
            &net,
            &theta,
            2.0,
            &data,
            10,
            &prior,
            &mut seeded(1),
            &ledger,
            &FilterOptions::default(),
        )
        .unwrap();
        let err = bootstrap_filter(
            &net,
            &theta,
            2.0,
            &data,
            10,
            &prior,
            &mut seeded(1),
            &ledger,
            &FilterOptions::default(),
        );
        assert!(matches!(err, Err(Error::BudgetExhausted { .. })));
        assert_eq!(ledger.consumed(), 20);
    }

    #[test]
    fn deterministic_across_exec_policies() {
        let (net, data) = death_setup();
        let prior = StatePrior::point(vec![20]).unwrap();
        let theta = RateParameters::new(vec![0.5]).unwrap();
        let run = |exec| {
            let opts = FilterOptions {
                exec,
                ..Default::default()
            };
            bootstrap_filter(
                &net,
                &theta,
                2.0,
                &data,
                64,
                &prior,
                &mut seeded(5),
                &BudgetLedger::unlimited(),
                &opts,
            )
            .unwrap()
        };
        let a = run(Exec::Sequential);
        let b = run(Exec::Parallel);
        let c = crate::exec::with_workers(3, || run(Exec::Parallel));
        assert_eq!(a.log_value.to_bits(), b.log_value.to_bits());
        assert_eq!(a.log_value.to_bits(), c.log_value.to_bits());
    }

    // Every path fires at least one event, so a zero event limit kills
    // every particle on the first interval.
    fn killing_options() -> FilterOptions {
        FilterOptions {
            limits: SimulationLimits {
                max_events: 0,
                max_count: i64::MAX,
            },
            ..Default::default()
        }
    }

    #[test]
    fn all_particles_dead_gives_negative_infinity() {
        let (net, data) = death_setup();
        let est = bootstrap_filter(
            &net,
            &RateParameters::new(vec![5.0]).unwrap(),
            2.0,
            &data,
            20,
            &StatePrior::point(vec![20]).unwrap(),
            &mut seeded(1),
            &BudgetLedger::unlimited(),
            &killing_options(),
        )
        .unwrap();
        assert_eq!(est.log_value, f64::NEG_INFINITY);
        assert_eq!(sample_variance(&[0.0, f64::NEG_INFINITY]), f64::INFINITY);
    }

    #[test]
    fn vacuous_band_returns_start() {
        let (net, data) = death_setup();
        let out = tune_particle_count(
            &net,
            &RateParameters::new(vec![0.5]).unwrap(),
            2.0,
            &data,
            &StatePrior::point(vec![20]).unwrap(),
            &mut seeded(1),
            &BudgetLedger::unlimited(),
            &FilterOptions::default(),
            &TuneOptions {
                band: (0.0, f64::INFINITY),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.particles, 8);
        // the in-band reading plus its confirmation
        assert_eq!(out.history.len(), 2);
        assert_eq!(out.spent, 2 * 8 * 20);
    }

    #[test]
    fn tuning_failure_reports_spend() {
        let (net, data) = death_setup();
        let ledger = BudgetLedger::unlimited();
        let err = tune_particle_count(
            &net,
            &RateParameters::new(vec![5.0]).unwrap(),
            2.0,
            &data,
            &StatePrior::point(vec![20]).unwrap(),
            &mut seeded(1),
            &ledger,
            &killing_options(),
            &TuneOptions::default(),
        );
        match err {
            Err(Error::Tuning { spent, .. }) => assert_eq!(spent, ledger.consumed()),
            other => panic!("expected tuning error, got {other:?}"),
        }
    }
}
