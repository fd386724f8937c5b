//! Independent reference computations for the pure-death test problem.
//!
//! Transitions of X → ∅ over a gap Δ are Binomial(x, e^{−θΔ}), so the
//! likelihood needs no matrix exponential.
#![allow(dead_code)]

use kinfer::harness::{builtin_pure_death, BuiltinModel};
use kinfer::model::{observe_states, simulate_at_times, ObservationModel, ObservedDataset};
use kinfer::problem::InferenceProblem;
use kinfer::rng::seeded;
use kinfer::BudgetLedger;

pub const DEATH_SEED: u64 = 20_240_611;
pub const GRID_LO: f64 = -3.0;
pub const GRID_HI: f64 = 1.0;

/// Pure death from 20, observed at t = 0..4 with σ = 2.
pub fn death_problem() -> (BuiltinModel, InferenceProblem) {
    let model = builtin_pure_death();
    let times: Vec<f64> = (0..5).map(f64::from).collect();
    let mut rng = seeded(DEATH_SEED);
    let ledger = BudgetLedger::unlimited();
    let states = simulate_at_times(
        &model.network,
        &model.theta,
        &model.x0,
        &times,
        &mut rng,
        &ledger,
        &model.limits,
    )
    .unwrap();
    let obs = ObservationModel::fully_observed(model.sigma, 1).unwrap();
    let data = observe_states(&states, &times, &obs, model.sigma, &mut rng).unwrap();
    let problem = model.problem(data).unwrap();
    (model, problem)
}

pub fn ln_choose(n: u64, k: u64) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

pub fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    let lp = if k == 0 { 0.0 } else { k as f64 * p.ln() };
    let lq = if n == k { 0.0 } else { (n - k) as f64 * (1.0 - p).ln() };
    (ln_choose(n, k) + lp + lq).exp()
}

fn normal_pdf(d: f64, x: f64, sigma: f64) -> f64 {
    let z = (d - x) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Exact log π(D | θ) for pure death from a known x0.
pub fn death_log_likelihood(theta: f64, x0: u64, data: &ObservedDataset, sigma: f64) -> f64 {
    let n = x0 as usize;
    let mut alpha = vec![0.0; n + 1];
    alpha[n] = 1.0;
    let mut log_scale = 0.0;
    let mut prev_t = 0.0;
    for (t, row) in data.times.iter().zip(&data.values) {
        let p = (-theta * (t - prev_t)).exp();
        let mut next = vec![0.0; n + 1];
        for (i, &a) in alpha.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, nx) in next.iter_mut().enumerate().take(i + 1) {
                *nx += a * binomial_pmf(i as u64, j as u64, p);
            }
        }
        if let Some(d) = row[0] {
            for (j, nx) in next.iter_mut().enumerate() {
                *nx *= normal_pdf(d, j as f64, sigma);
            }
        }
        let s: f64 = next.iter().sum();
        log_scale += s.ln();
        alpha = next.into_iter().map(|v| v / s).collect();
        prev_t = *t;
    }
    log_scale
}

/// Posterior of log θ on a uniform grid under a flat prior on [lo, hi].
pub struct Grid {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
}

impl Grid {
    pub fn death_posterior(problem: &InferenceProblem, sigma: f64, points: usize) -> Self {
        let x: Vec<f64> = (0..points)
            .map(|i| GRID_LO + (GRID_HI - GRID_LO) * i as f64 / (points - 1) as f64)
            .collect();
        let logs: Vec<f64> = x
            .iter()
            .map(|&l| death_log_likelihood(l.exp(), 20, &problem.dataset, sigma))
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let h = x[1] - x[0];
        let z = h * (raw.iter().sum::<f64>() - 0.5 * (raw[0] + raw[raw.len() - 1]));
        Grid {
            x,
            density: raw.into_iter().map(|r| r / z).collect(),
        }
    }

    fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let h = self.x[1] - self.x[0];
        let vals: Vec<f64> = self.x.iter().zip(&self.density).map(|(&x, &d)| f(x) * d).collect();
        h * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[vals.len() - 1]))
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|x| x)
    }

    pub fn sd(&self) -> f64 {
        let m = self.mean();
        self.integrate(|x| (x - m) * (x - m)).sqrt()
    }

    /// CDF of the piecewise-linear density.
    pub fn cdf(&self, q: f64) -> f64 {
        if q <= self.x[0] {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 1..self.x.len() {
            let (a, b) = (self.x[i - 1], self.x[i]);
            let (fa, fb) = (self.density[i - 1], self.density[i]);
            if q >= b {
                acc += 0.5 * (fa + fb) * (b - a);
            } else {
                let fq = fa + (fb - fa) * (q - a) / (b - a);
                acc += 0.5 * (fa + fq) * (q - a);
                return acc.min(1.0);
            }
        }
        acc.min(1.0)
    }
}
