//! Exact likelihoods by the forward algorithm, and grid posteriors.

use crate::error::{Error, Result};
use crate::filter::emission_unchecked;
use crate::model::{ObservedDataset, RateParameters, ReactionNetwork, SpeciesState};
use crate::oracle::space::{build_generator, DEFAULT_STATE_CAP};
use crate::oracle::uniformization::{propagate, DEFAULT_TOLERANCE};
use crate::prior::{PriorComponent, StatePrior};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub tolerance: f64,
    /// Largest probability mass the truncation may lose before the result
    /// is refused.
    pub loss_threshold: f64,
    pub state_cap: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            loss_threshold: 1e-6,
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

/// Initial states within `bounds` with their prior probabilities, plus the
/// prior mass falling outside.
fn initial_support(prior: &StatePrior, bounds: &[i64]) -> (Vec<(SpeciesState, f64)>, f64) {
    match prior {
        StatePrior::Point { state } => {
            if state.counts().iter().zip(bounds).all(|(&c, &b)| c <= b) {
                (vec![(state.clone(), 1.0)], 0.0)
            } else {
                (Vec::new(), 1.0)
            }
        }
        StatePrior::Poisson { .. } => {
            let mut support = Vec::new();
            let mut x = vec![0i64; bounds.len()];
            let mut inside = 0.0;
            'outer: loop {
                let p = prior.log_pmf(&x).exp();
                if p > 0.0 {
                    support.push((SpeciesState(x.clone()), p));
                    inside += p;
                }
                for j in 0..x.len() {
                    if x[j] < bounds[j] {
                        x[j] += 1;
                        continue 'outer;
                    }
                    x[j] = 0;
                }
                break;
            }
            (support, (1.0 - inside).max(0.0))
        }
    }
}

/// log π(D | θ) on the truncated space, by the forward recursion with
/// Gaussian emissions. The dataset must carry a known noise sd.
pub fn exact_likelihood(
    net: &ReactionNetwork,
    theta: &RateParameters,
    dataset: &ObservedDataset,
    state_prior: &StatePrior,
    bounds: &[i64],
    opts: &OracleOptions,
) -> Result<f64> {
    let sigma = dataset
        .model
        .known_sigma()
        .ok_or_else(|| Error::Invalid("exact likelihood needs a known noise sd".into()))?;
    if bounds.len() != net.num_species() {
        return Err(Error::Shape(format!(
            "{} bounds for {} species",
            bounds.len(),
            net.num_species()
        )));
    }
    let (support, mut lost) = initial_support(state_prior, bounds);
    let starts: Vec<SpeciesState> = support.iter().map(|(s, _)| s.clone()).collect();
    if starts.is_empty() {
        return Err(Error::TruncationLoss {
            lost,
            threshold: opts.loss_threshold,
        });
    }
    let (space, gen) = build_generator(net, theta, bounds, &starts, opts.state_cap)?;

    let mut alpha = vec![0.0; space.len()];
    for (s, p) in &support {
        alpha[space.index_of(s).expect("start states are enumerated")] = *p;
    }
    let total: f64 = alpha.iter().sum();
    alpha.iter_mut().for_each(|a| *a /= total);

    let mut log_lik = 0.0;
    let mut t = 0.0;
    for (k, &t_obs) in dataset.times.iter().enumerate() {
        if t_obs > t {
            alpha = propagate(&gen, &alpha, t_obs - t, opts.tolerance)?;
            let kept: f64 = alpha.iter().sum();
            lost += (1.0 - kept).max(0.0);
            if kept > 0.0 {
                alpha.iter_mut().for_each(|a| *a /= kept);
            }
            t = t_obs;
        }
        if lost > opts.loss_threshold {
            return Err(Error::TruncationLoss {
                lost,
                threshold: opts.loss_threshold,
            });
        }
        let row = &dataset.values[k];
        let log_e: Vec<f64> = space
            .states()
            .iter()
            .map(|x| emission_unchecked(row, x.counts(), sigma))
            .collect();
        let max = log_e
            .iter()
            .zip(&alpha)
            .filter(|(_, &a)| a > 0.0)
            .map(|(&l, _)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let mut c = 0.0;
        for (a, l) in alpha.iter_mut().zip(&log_e) {
            *a *= (l - max).exp();
            c += *a;
        }
        log_lik += max + c.ln();
        alpha.iter_mut().for_each(|a| *a /= c);
    }
    Ok(log_lik)
}

/// Posterior over one scalar log-parameter, tabulated on a sorted grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPosterior {
    grid: Vec<f64>,
    density: Vec<f64>,
    masses: Vec<f64>,
}

fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| {
            let left = if i > 0 { grid[i] - grid[i - 1] } else { 0.0 };
            let right = if i + 1 < n { grid[i + 1] - grid[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

impl GridPosterior {
    /// Normalizes `exp(log_values)` over `grid` by the trapezoidal rule.
    pub fn from_log_values(grid: Vec<f64>, log_values: &[f64]) -> Result<Self> {
        if grid.is_empty() || grid.len() != log_values.len() {
            return Err(Error::Shape(format!(
                "{} grid points, {} values",
                grid.len(),
                log_values.len()
            )));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("grid must be strictly increasing".into()));
        }
        let max = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::ZeroWeights);
        }
        let raw: Vec<f64> = log_values.iter().map(|l| (l - max).exp()).collect();
        let weights = trapezoid_weights(&grid);
        let z: f64 = raw.iter().zip(&weights).map(|(r, w)| r * w).sum();
        if !(z > 0.0) {
            return Err(Error::ZeroWeights);
        }
        let density: Vec<f64> = raw.iter().map(|r| r / z).collect();
        let masses = density.iter().zip(&weights).map(|(d, w)| d * w).collect();
        Ok(Self { grid, density, masses })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Density values, integrating to one under the trapezoidal rule.
    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Probability mass attached to each grid point; sums to one.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mean(&self) -> f64 {
        self.grid.iter().zip(&self.masses).map(|(x, m)| x * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.grid
            .iter()
            .zip(&self.masses)
            .map(|(x, m)| (x - mean).powi(2) * m)
            .sum()
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// CDF of the piecewise-linear density.
    pub fn cdf(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x <= g[0] {
            return 0.0;
        }
        if x >= g[g.len() - 1] {
            return 1.0;
        }
        let mut acc = 0.0;
        for i in 0..g.len() - 1 {
            let h = g[i + 1] - g[i];
            let (f0, f1) = (self.density[i], self.density[i + 1]);
            if x < g[i + 1] {
                let s = (x - g[i]) / h;
                acc += h * (s * f0 + 0.5 * s * s * (f1 - f0));
                return acc.min(1.0);
            }
            acc += 0.5 * h * (f0 + f1);
        }
        1.0
    }
}

/// Grid posterior for one free log-parameter. `theta_of` maps a grid value
/// (log scale) to the full rate vector.
#[allow(clippy::too_many_arguments)]
pub fn grid_posterior<F>(
    net: &ReactionNetwork,
    dataset: &ObservedDataset,
    state_prior: &StatePrior,
    bounds: &[i64],
    prior: &PriorComponent,
    grid: &[f64],
    theta_of: F,
    opts: &OracleOptions,
) -> Result<GridPosterior>
where
    F: Fn(f64) -> Result<RateParameters>,
{
    let log_values = grid
        .iter()
        .map(|&g| {
            let lp = prior.log_density(g);
            if lp == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            Ok(lp + exact_likelihood(net, &theta_of(g)?, dataset, state_prior, bounds, opts)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    GridPosterior::from_log_values(grid.to_vec(), &log_values)
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_network, NoiseSd, ObservationModel};

    fn death() -> ReactionNetwork {
        build_network(&[vec![1]], &[vec![0]], &["X"]).unwrap()
    }

    fn ln_normal(x: f64, mean: f64, sd: f64) -> f64 {
        let z = (x - mean) / sd;
        -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }

    #[test]
    fn single_observation_is_emission_at_x0() {
        let model = ObservationModel::new(NoiseSd::Known(2.0), vec![true]).unwrap();
        let data = ObservedDataset::new(vec![0.0], vec![vec![Some(18.3)]], model).unwrap();
        let l = exact_likelihood(
            &death(),
            &RateParameters::new(vec![0.5]).unwrap(),
            &data,
            &StatePrior::point(vec![20]).unwrap(),
            &[20],
            &OracleOptions::default(),
        )
        .unwrap();
        assert!((l - ln_normal(18.3, 20.0, 2.0)).abs() < 1e-12);
    }

    #[test]
    fn huge_noise_is_flat_in_theta() {
        let model = ObservationModel::new(NoiseSd::Known(1e6), vec![true]).unwrap();
        let data = ObservedDataset::new(
            vec![0.0, 1.0, 2.0],
            vec![vec![Some(20.0)], vec![Some(11.0)], vec![Some(7.0)]],
            model,
        )
        .unwrap();
        let at = |lt: f64| {
            exact_likelihood(
                &death(),
                &RateParameters::from_log(&[lt]).unwrap(),
                &data,
                &StatePrior::point(vec![20]).unwrap(),
                &[20],
                &OracleOptions::default(),
            )
            .unwrap()
        };
        let h = 1e-3;
        let slope = (at(-0.7 + h) - at(-0.7 - h)) / (2.0 * h);
        assert!(slope.abs() < 1e-6, "slope {slope}");
        let flat = 3.0 * ln_normal(0.0, 0.0, 1e6);
        assert!((at(-0.7) - flat).abs() < 1e-6);
    }

    #[test]
    fn truncation_loss_is_refused() {
        let net = build_network(&[vec![0]], &[vec![1]], &["X"]).unwrap();
        let model = ObservationModel::new(NoiseSd::Known(1.0), vec![true]).unwrap();
        let data = ObservedDataset::new(vec![0.0, 5.0], vec![vec![Some(0.0)], vec![Some(5.0)]], model).unwrap();
        let err = exact_likelihood(
            &net,
            &RateParameters::new(vec![1.0]).unwrap(),
            &data,
            &StatePrior::point(vec![0]).unwrap(),
            &[3],
            &OracleOptions::default(),
        );
        assert!(matches!(err, Err(Error::TruncationLoss { .. })));
    }

    #[test]
    fn grid_symmetric_likelihood_centres() {
        let grid = linspace(-2.0, 2.0, 101);
        let logs: Vec<f64> = grid.iter().map(|g: &f64| -0.5 * (g / 0.4).powi(2)).collect();
        let post = GridPosterior::from_log_values(grid.clone(), &logs).unwrap();
        assert!(post.mean().abs() < grid[1] - grid[0]);
        assert!((post.cdf(0.0) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn grid_delta_puts_unit_mass() {
        let grid = linspace(0.0, 1.0, 11);
        let mut logs = vec![f64::NEG_INFINITY; 11];
        logs[4] = -3.0;
        let post = GridPosterior::from_log_values(grid, &logs).unwrap();
        assert!((post.masses()[4] - 1.0).abs() < 1e-15);
        assert!(post.masses().iter().enumerate().all(|(i, &m)| i == 4 || m == 0.0));
    }

    #[test]
    fn grid_invariant_to_likelihood_scale() {
        let grid = linspace(-1.0, 3.0, 57);
        let logs: Vec<f64> = grid.iter().map(|g| -(g - 1.2f64).powi(2) + 0.3 * g).collect();
        let shifted: Vec<f64> = logs.iter().map(|l| l + 123.4).collect();
        let a = GridPosterior::from_log_values(grid.clone(), &logs).unwrap();
        let b = GridPosterior::from_log_values(grid, &shifted).unwrap();
        for (x, y) in a.density().iter().zip(b.density()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn grid_all_underflow_is_an_error() {
        let grid = linspace(0.0, 1.0, 5);
        assert!(matches!(
            GridPosterior::from_log_values(grid, &[f64::NEG_INFINITY; 5]),
            Err(Error::ZeroWeights)
        ));
    }
}
