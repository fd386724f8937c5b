//! Pseudo-marginal random-walk Metropolis–Hastings on log-parameters, with
//! likelihoods estimated by the bootstrap filter.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{bootstrap_filter, FilterOptions};
use crate::ledger::BudgetLedger;
use crate::prior::{ParameterPrior, PriorComponent};
use crate::problem::InferenceProblem;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gaussian random-walk proposal covariance with its Cholesky factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ProposalSpec {
    covariance: DMatrix<f64>,
    lower: DMatrix<f64>,
}

impl ProposalSpec {
    pub fn new(covariance: DMatrix<f64>) -> Result<Self> {
        if !covariance.is_square() || covariance.nrows() == 0 {
            return Err(Error::Shape(format!(
                "proposal covariance is {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if covariance.iter().any(|c| !c.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        let asym = (&covariance - covariance.transpose()).abs().max();
        if asym > 1e-12 {
            return Err(Error::Invalid(format!("proposal covariance asymmetric by {asym}")));
        }
        let lower = nalgebra::Cholesky::new(covariance.clone())
            .ok_or(Error::NotPositiveDefinite)?
            .l();
        Ok(Self { covariance, lower })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("proposal covariance rows are ragged".into()));
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn isotropic(d: usize, variance: f64) -> Result<Self> {
        Self::new(DMatrix::from_diagonal_element(d, d, variance))
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.covariance
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    /// `from` + L z with z standard normal.
    pub fn propose<R: Rng + ?Sized>(&self, from: &[f64], rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        let step = &self.lower * z;
        from.iter().zip(step.iter()).map(|(a, b)| a + b).collect()
    }

    /// log q(to | from).
    pub fn log_density(&self, to: &[f64], from: &[f64]) -> f64 {
        let d = self.dim();
        let diff = DVector::from_fn(d, |i, _| to[i] - from[i]);
        let z = self
            .lower
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a nonzero diagonal");
        let log_det: f64 = self.lower.diagonal().iter().map(|l| l.ln()).sum();
        -0.5 * z.norm_squared() - log_det - 0.5 * d as f64 * LN_2PI
    }
}

impl TryFrom<Vec<Vec<f64>>> for ProposalSpec {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<ProposalSpec> for Vec<Vec<f64>> {
    fn from(p: ProposalSpec) -> Self {
        p.rows()
    }
}

/// Σ_q = (2.38² / √d) Σ.
pub fn scale_proposal(posterior_cov: &DMatrix<f64>, d: usize) -> Result<ProposalSpec> {
    if d == 0 || posterior_cov.nrows() != d {
        return Err(Error::Shape(format!(
            "covariance is {}x{} for dimension {d}",
            posterior_cov.nrows(),
            posterior_cov.ncols()
        )));
    }
    ProposalSpec::new(posterior_cov * (2.38f64.powi(2) / (d as f64).sqrt()))
}

/// A point of the chain with the likelihood estimate computed when it was
/// proposed. The estimate is never refreshed while the state is retained.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub log_theta: Vec<f64>,
    pub cached_log_estimate: f64,
}

/// log MH ratio with explicit proposal terms. −∞ means certain rejection.
pub fn acceptance_log_ratio<Q>(current: &ChainState, proposal: &ChainState, prior: &ParameterPrior, log_q: Q) -> f64
where
    Q: Fn(&[f64], &[f64]) -> f64,
{
    let prior_new = prior.log_density(&proposal.log_theta);
    if prior_new == f64::NEG_INFINITY || proposal.cached_log_estimate == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let num = proposal.cached_log_estimate + prior_new + log_q(&current.log_theta, &proposal.log_theta);
    let den = current.cached_log_estimate
        + prior.log_density(&current.log_theta)
        + log_q(&proposal.log_theta, &current.log_theta);
    let r = num - den;
    if r.is_nan() {
        f64::NEG_INFINITY
    } else {
        r
    }
}

/// log MH ratio for a symmetric kernel, where the q terms cancel.
pub fn acceptance_log_ratio_symmetric(current: &ChainState, proposal: &ChainState, prior: &ParameterPrior) -> f64 {
    acceptance_log_ratio(current, proposal, prior, |_, _| 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub theta0: Vec<f64>,
    pub particles: usize,
    pub proposal: ProposalSpec,
    /// Stop after this many proposals even if budget remains.
    pub max_iterations: Option<usize>,
    pub filter: FilterOptions,
}

/// One row per iteration; row 0 is the starting state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub names: Vec<String>,
    pub iterations: Vec<u64>,
    pub samples: Vec<Vec<f64>>,
    pub log_estimates: Vec<f64>,
    pub accepted: Vec<bool>,
    pub acceptance_count: usize,
    /// Cumulative ledger reading after each row.
    pub budget_marks: Vec<u64>,
}

impl ChainTrace {
    fn empty(names: Vec<String>) -> Self {
        Self {
            names,
            iterations: Vec::new(),
            samples: Vec::new(),
            log_estimates: Vec::new(),
            accepted: Vec::new(),
            acceptance_count: 0,
            budget_marks: Vec::new(),
        }
    }

    fn push(&mut self, iteration: u64, state: &ChainState, accepted: bool, mark: u64) {
        self.iterations.push(iteration);
        self.samples.push(state.log_theta.clone());
        self.log_estimates.push(state.cached_log_estimate);
        self.accepted.push(accepted);
        self.acceptance_count += usize::from(accepted);
        self.budget_marks.push(mark);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    /// Accepted proposals over proposals made.
    pub fn acceptance_rate(&self) -> f64 {
        let proposals = self.len().saturating_sub(1);
        if proposals == 0 {
            0.0
        } else {
            self.acceptance_count as f64 / proposals as f64
        }
    }

    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[i]).collect()
    }

    /// Rows whose budget mark does not exceed `mark`.
    pub fn up_to_budget(&self, mark: u64) -> ChainTrace {
        let end = self.budget_marks.partition_point(|&m| m <= mark);
        self.select(&(0..end).collect::<Vec<_>>())
    }

    fn select(&self, idx: &[usize]) -> ChainTrace {
        let mut out = ChainTrace::empty(self.names.clone());
        for &i in idx {
            out.iterations.push(self.iterations[i]);
            out.samples.push(self.samples[i].clone());
            out.log_estimates.push(self.log_estimates[i]);
            out.accepted.push(self.accepted[i]);
            out.budget_marks.push(self.budget_marks[i]);
        }
        out.acceptance_count = out.accepted.iter().filter(|&&a| a).count();
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["iteration".to_string(), "cumulative_budget".to_string()];
        header.extend(self.names.iter().cloned());
        header.extend(["log_estimate".to_string(), "accepted".to_string()]);
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.iterations[i].to_string(), self.budget_marks[i].to_string()];
            rec.extend(self.samples[i].iter().map(|x| x.to_string()));
            rec.push(self.log_estimates[i].to_string());
            rec.push(u8::from(self.accepted[i]).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let n = header.len();
        if n < 5 || &header[0] != "iteration" || &header[1] != "cumulative_budget" {
            return Err(Error::Parse(
                "trace header must start with iteration,cumulative_budget".into(),
            ));
        }
        let names: Vec<String> = header.iter().skip(2).take(n - 4).map(str::to_string).collect();
        let mut trace = ChainTrace::empty(names);
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("trace field {:?}: {e}", &rec[i])))
            };
            let int = |i: usize| -> Result<u64> {
                rec[i]
                    .parse::<u64>()
                    .map_err(|e| Error::Parse(format!("trace field {:?}: {e}", &rec[i])))
            };
            let state = ChainState {
                log_theta: (2..n - 2).map(num).collect::<Result<_>>()?,
                cached_log_estimate: num(n - 2)?,
            };
            let accepted = match &rec[n - 1] {
                "0" => false,
                "1" => true,
                other => return Err(Error::Parse(format!("accepted flag {other:?}"))),
            };
            trace.push(int(0)?, &state, accepted, int(1)?);
        }
        Ok(trace)
    }
}

/// Runs the chain until the ledger cannot fund another filter call or the
/// iteration cap is reached.
///
/// Coordinates with a point-mass prior are held at their value. Proposals
/// outside the prior support are rejected without running the filter, so
/// they are recorded with an unchanged budget mark.
pub fn run_chain<R: Rng + ?Sized>(
    problem: &InferenceProblem,
    config: &ChainConfig,
    rng: &mut R,
    ledger: &BudgetLedger,
) -> Result<ChainTrace> {
    let d = problem.dim();
    if config.theta0.len() != d || config.proposal.dim() != d {
        return Err(Error::Shape(format!(
            "problem has {d} parameters, θ0 {} and proposal {}",
            config.theta0.len(),
            config.proposal.dim()
        )));
    }
    if !problem.prior.in_support(&config.theta0) {
        return Err(Error::Invalid(format!(
            "θ0 {:?} lies outside the prior support",
            config.theta0
        )));
    }
    let n = config.particles;
    if n == 0 {
        return Err(Error::Invalid("chain needs at least one particle".into()));
    }
    if !ledger.can_afford(n as u64) {
        return Err(Error::BudgetExhausted {
            requested: n as u64,
            remaining: ledger.remaining(),
        });
    }
    let pinned: Vec<Option<f64>> = problem
        .prior
        .components
        .iter()
        .map(|c| match *c {
            PriorComponent::PointMass { value } => Some(value),
            _ => None,
        })
        .collect();

    let estimate = |log_theta: &[f64], rng: &mut R| -> Result<f64> {
        let (theta, sigma) = problem.unpack(log_theta)?;
        let mut opts = config.filter;
        opts.limits = problem.limits;
        Ok(bootstrap_filter(
            &problem.network,
            &theta,
            sigma,
            &problem.dataset,
            n,
            &problem.state_prior,
            rng,
            ledger,
            &opts,
        )?
        .log_value)
    };

    let mut trace = ChainTrace::empty(problem.parameter_names());
    let mut current = ChainState {
        log_theta: config.theta0.clone(),
        cached_log_estimate: estimate(&config.theta0, rng)?,
    };
    trace.push(0, &current, false, ledger.consumed());

    let mut iteration = 0u64;
    while ledger.can_afford(n as u64) && config.max_iterations.is_none_or(|m| (iteration as usize) < m) {
        iteration += 1;
        let mut log_theta = config.proposal.propose(&current.log_theta, rng);
        for (x, p) in log_theta.iter_mut().zip(&pinned) {
            if let Some(v) = p {
                *x = *v;
            }
        }
        let accepted = if problem.prior.in_support(&log_theta) {
            let proposal = ChainState {
                cached_log_estimate: match estimate(&log_theta, rng) {
                    Ok(v) => v,
                    Err(Error::BudgetExhausted { .. }) => break,
                    Err(e) => return Err(e),
                },
                log_theta,
            };
            let log_ratio = acceptance_log_ratio_symmetric(&current, &proposal, &problem.prior);
            let u: f64 = rng.random();
            if u.ln() < log_ratio {
                // the single point where the retained estimate changes
                current = proposal;
                true
            } else {
                false
            }
        } else {
            false
        };
        trace.push(iteration, &current, accepted, ledger.consumed());
    }
    Ok(trace)
}

/// Evenly strided subsample of exactly `target` rows, indices ⌊i(L−1)/(k−1)⌋.
pub fn thin_chain(trace: &ChainTrace, target: usize) -> Result<ChainTrace> {
    let len = trace.len();
    if target == 0 {
        return Err(Error::Invalid("thinning target must be positive".into()));
    }
    if target > len {
        return Err(Error::Invalid(format!(
            "thinning target {target} exceeds chain length {len}"
        )));
    }
    let idx: Vec<usize> = if target == 1 {
        vec![0]
    } else {
        (0..target).map(|i| i * (len - 1) / (target - 1)).collect()
    };
    Ok(trace.select(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(d: usize) -> ParameterPrior {
        ParameterPrior::new(vec![PriorComponent::Uniform { lo: -10.0, hi: 10.0 }; d]).unwrap()
    }

    fn state(x: Vec<f64>, l: f64) -> ChainState {
        ChainState {
            log_theta: x,
            cached_log_estimate: l,
        }
    }

    #[test]
    fn scaling_examples() {
        let one = scale_proposal(&DMatrix::from_element(1, 1, 1.0), 1).unwrap();
        assert!((one.covariance()[(0, 0)] - 5.6644).abs() < 1e-12);
        let four = scale_proposal(&DMatrix::identity(4, 4), 4).unwrap();
        assert!((four.covariance() - DMatrix::identity(4, 4) * 2.8322).abs().max() < 1e-12);
        assert!(matches!(
            scale_proposal(&DMatrix::zeros(2, 2), 2),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn asymmetric_covariance_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(ProposalSpec::new(m).is_err());
    }

    #[test]
    fn ratio_examples() {
        let prior = flat(1);
        let a = state(vec![0.0], -3.0);
        assert_eq!(acceptance_log_ratio_symmetric(&a, &a, &prior), 0.0);
        let b = state(vec![0.5], -2.0);
        assert!((acceptance_log_ratio_symmetric(&a, &b, &prior) - 1.0).abs() < 1e-15);
        let outside = state(vec![11.0], 0.0);
        assert_eq!(acceptance_log_ratio_symmetric(&a, &outside, &prior), f64::NEG_INFINITY);
        let dead = state(vec![0.0], f64::NEG_INFINITY);
        assert_eq!(acceptance_log_ratio_symmetric(&a, &dead, &prior), f64::NEG_INFINITY);
    }

    #[test]
    fn explicit_gaussian_terms_cancel() {
        let q = ProposalSpec::from_rows(&[vec![0.3, 0.1], vec![0.1, 0.2]]).unwrap();
        let prior = flat(2);
        let a = state(vec![0.2, -1.0], -10.5);
        let b = state(vec![0.9, -0.4], -9.7);
        let explicit = acceptance_log_ratio(&a, &b, &prior, |to, from| q.log_density(to, from));
        let symmetric = acceptance_log_ratio_symmetric(&a, &b, &prior);
        assert!((explicit - symmetric).abs() < 1e-12);
    }

    #[test]
    fn gaussian_log_density_matches_closed_form() {
        let q = ProposalSpec::isotropic(1, 4.0).unwrap();
        let expected = -0.5 * (1.5f64 * 1.5 / 4.0) - 0.5 * (2.0 * std::f64::consts::PI * 4.0).ln();
        assert!((q.log_density(&[1.5], &[0.0]) - expected).abs() < 1e-14);
    }

    fn synthetic(len: usize) -> ChainTrace {
        let mut t = ChainTrace::empty(vec!["log_theta_1".into()]);
        for i in 0..len {
            t.push(
                i as u64,
                &state(vec![i as f64], -(i as f64)),
                i % 2 == 1,
                10 * (i as u64 + 1),
            );
        }
        t
    }

    #[test]
    fn thinning_indices() {
        let t = synthetic(10);
        let thin = thin_chain(&t, 3).unwrap();
        assert_eq!(thin.iterations, vec![0, 4, 9]);
        assert_eq!(thin.budget_marks, vec![10, 50, 100]);
        assert_eq!(thin_chain(&t, 10).unwrap(), t);
        assert!(thin_chain(&t, 0).is_err());
        assert!(thin_chain(&t, 11).is_err());
    }

    #[test]
    fn large_chain_stride() {
        let (len, target) = (750_000usize, 10_000usize);
        let idx: Vec<usize> = (0..target).map(|i| i * (len - 1) / (target - 1)).collect();
        let strides: Vec<usize> = idx.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(strides.iter().all(|&s| s == 75 || s == 76));
        assert_eq!(strides.iter().filter(|&&s| s == 75).count(), target - 1 - 74);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut t = synthetic(4);
        t.samples[1][0] = 0.1 + 0.2;
        t.log_estimates[2] = f64::NEG_INFINITY;
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = ChainTrace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,cumulative_budget,log_theta_1,log_estimate,accepted\n"));
    }

    #[test]
    fn budget_slicing() {
        let t = synthetic(10);
        assert_eq!(t.up_to_budget(35).len(), 3);
        assert_eq!(t.up_to_budget(5).len(), 0);
    }
}
