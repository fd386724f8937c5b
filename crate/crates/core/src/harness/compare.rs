//! Equal-budget comparison of ABC SMC and pMCMC, with persistence and
//! summaries that can be recomputed from the written files.

use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::abc::{pilot_tolerance, run_abc_smc, AbcConfig, GenerationManifest, Population, Termination, ToleranceRule};
use crate::diagnostics::{compute_ess, mean_var, sample_covariance, weighted_mean_var};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::filter::{tune_particle_count, FilterOptions, Resampling, TuneOptions, TuneOutcome};
use crate::ledger::{BudgetLedger, LedgerSnapshot, Phase};
use crate::pmcmc::{run_chain, scale_proposal, thin_chain, ChainConfig, ChainTrace, ProposalSpec};
use crate::problem::InferenceProblem;
use crate::rng::{substream, SimRng};

/// How the pMCMC starting point, proposal and particle count are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum PmcmcTuning {
    /// θ₀ and posterior covariance supplied; N tuned at θ₀ unless given.
    Informed {
        theta0: Vec<f64>,
        covariance: Vec<Vec<f64>>,
        particles: Option<usize>,
    },
    /// A reference chain from `theta0` on its own uncharged ledger supplies
    /// a posterior draw and covariance; N is tuned on the run's ledger.
    Reference {
        theta0: Vec<f64>,
        particles: usize,
        iterations: usize,
        step: f64,
    },
    /// Prior draw for θ₀, then a pilot chain and N tuning, all charged.
    ColdStart {
        particles: usize,
        iterations: usize,
        step: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcSettings {
    pub population_size: usize,
    pub n_pilot: usize,
    pub pilot_quantile: f64,
    pub rule: ToleranceRule,
    pub max_generations: Option<usize>,
}

impl Default for AbcSettings {
    fn default() -> Self {
        Self {
            population_size: 1000,
            n_pilot: 1000,
            pilot_quantile: 0.01,
            rule: ToleranceRule::default(),
            max_generations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmcmcSettings {
    pub tuning: PmcmcTuning,
    pub tune: TuneOptions,
    pub resampling: Resampling,
    pub thin_to: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: String,
    pub regime: Option<String>,
    pub budget: u64,
    pub seed: u64,
    pub abc: Option<AbcSettings>,
    pub pmcmc: Option<PmcmcSettings>,
    pub exec: Exec,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Invalid("budget must be positive".into()));
        }
        if self.abc.is_none() && self.pmcmc.is_none() {
            return Err(Error::Invalid("configuration runs neither sampler".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmcmcOutcome {
    pub trace: ChainTrace,
    pub particles: usize,
    pub theta0: Vec<f64>,
    pub proposal: ProposalSpec,
    pub tuning: Option<TuneOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmcmcRecord {
    pub particles: usize,
    pub theta0: Vec<f64>,
    pub proposal: ProposalSpec,
    pub tuning: Option<TuneOutcome>,
    pub iterations: usize,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbcOutcome {
    pub populations: Vec<Population>,
    pub termination: Termination,
    pub epsilon0: f64,
    pub discarded_simulations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcRecord {
    pub termination: Termination,
    pub epsilon0: f64,
    pub discarded_simulations: u64,
    pub generations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub abc: Option<LedgerSnapshot>,
    pub pmcmc: Option<LedgerSnapshot>,
    /// Uncharged reference chain used for informed tuning.
    pub reference: Option<LedgerSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSummary {
    pub samples: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub ess: Vec<f64>,
    pub acceptance_rate: f64,
    pub final_budget: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbcSummary {
    pub generations: usize,
    pub final_mean: Vec<f64>,
    pub final_variance: Vec<f64>,
    pub tolerances: Vec<f64>,
    pub acceptance_rates: Vec<f64>,
    pub budget_marks: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub parameters: Vec<String>,
    pub pmcmc: Option<ChainSummary>,
    pub abc: Option<AbcSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BracketRow {
    pub bracket: usize,
    pub budget_mark: u64,
    pub parameter: String,
    pub pmcmc_samples: usize,
    pub pmcmc_mean: f64,
    pub pmcmc_variance: f64,
    pub pmcmc_ess: f64,
    pub abc_generation: Option<usize>,
    pub abc_mean: f64,
    pub abc_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub config: ExperimentConfig,
    pub pmcmc: Option<PmcmcOutcome>,
    pub abc: Option<AbcOutcome>,
    pub ledgers: LedgerReport,
    pub summary: RunSummary,
    pub brackets: Vec<BracketRow>,
    pub failures: Vec<String>,
}

fn ess_or_nan(values: &[f64]) -> f64 {
    compute_ess(values).unwrap_or(f64::NAN)
}

pub fn summarize_chain(trace: &ChainTrace) -> ChainSummary {
    let d = trace.dim();
    let (mean, variance): (Vec<f64>, Vec<f64>) = (0..d).map(|i| mean_var(&trace.coordinate(i))).unzip();
    ChainSummary {
        samples: trace.len(),
        mean,
        variance,
        ess: (0..d).map(|i| ess_or_nan(&trace.coordinate(i))).collect(),
        acceptance_rate: trace.acceptance_rate(),
        final_budget: trace.budget_marks.last().copied().unwrap_or(0),
    }
}

pub fn summarize_populations(pops: &[Population]) -> Option<AbcSummary> {
    let last = pops.last()?;
    let (final_mean, final_variance) = (0..last.names.len())
        .map(|i| weighted_mean_var(&last.coordinate(i), &last.weights))
        .unzip();
    Some(AbcSummary {
        generations: pops.len(),
        final_mean,
        final_variance,
        tolerances: pops.iter().map(|p| p.tolerance).collect(),
        acceptance_rates: pops.iter().map(Population::acceptance_rate).collect(),
        budget_marks: pops.iter().map(|p| p.budget_mark).collect(),
    })
}

pub fn summarize(names: &[String], trace: Option<&ChainTrace>, pops: &[Population]) -> RunSummary {
    RunSummary {
        parameters: names.to_vec(),
        pmcmc: trace.filter(|t| !t.is_empty()).map(summarize_chain),
        abc: summarize_populations(pops),
    }
}

/// Bracket marks: the ABC generation marks that some pMCMC sample precedes,
/// then `final_mark`. Without ABC populations, ten even marks up to
/// `final_mark`.
pub fn bracket_marks(trace: Option<&ChainTrace>, pops: &[Population], final_mark: u64) -> Vec<u64> {
    let first_chain = trace.and_then(|t| t.budget_marks.first().copied());
    let mut marks: Vec<u64> = if pops.is_empty() {
        (1..=10).map(|k| final_mark * k / 10).collect()
    } else {
        pops.iter()
            .map(|p| p.budget_mark)
            .filter(|&m| first_chain.is_none_or(|f| m >= f))
            .collect()
    };
    marks.push(final_mark);
    marks.sort_unstable();
    marks.dedup();
    marks.retain(|&m| m > 0);
    marks
}

/// Per bracket and parameter: the pMCMC chain so far, and the latest ABC
/// generation closed by the mark.
pub fn bracketed_summaries(
    names: &[String],
    trace: Option<&ChainTrace>,
    pops: &[Population],
    marks: &[u64],
) -> Result<Vec<BracketRow>> {
    if marks.is_empty() {
        return Err(Error::Invalid("no bracket marks".into()));
    }
    if marks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("bracket marks must increase".into()));
    }
    let mut rows = Vec::new();
    for (b, &mark) in marks.iter().enumerate() {
        let chain = trace.map(|t| t.up_to_budget(mark)).filter(|t| !t.is_empty());
        let generation = pops.iter().rposition(|p| p.budget_mark <= mark);
        if chain.is_none() && generation.is_none() {
            return Err(Error::Invalid(format!("bracket at {mark} holds no samples")));
        }
        for (i, name) in names.iter().enumerate() {
            let (pmcmc_samples, pmcmc_mean, pmcmc_variance, pmcmc_ess) = match &chain {
                Some(c) => {
                    let xs = c.coordinate(i);
                    let (m, v) = mean_var(&xs);
                    (xs.len(), m, v, ess_or_nan(&xs))
                }
                None => (0, f64::NAN, f64::NAN, f64::NAN),
            };
            let (abc_mean, abc_variance) = match generation {
                Some(g) => weighted_mean_var(&pops[g].coordinate(i), &pops[g].weights),
                None => (f64::NAN, f64::NAN),
            };
            rows.push(BracketRow {
                bracket: b,
                budget_mark: mark,
                parameter: name.clone(),
                pmcmc_samples,
                pmcmc_mean,
                pmcmc_variance,
                pmcmc_ess,
                abc_generation: generation,
                abc_mean,
                abc_variance,
            });
        }
    }
    Ok(rows)
}

pub fn write_brackets_csv<W: Write>(rows: &[BracketRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "bracket",
        "budget_mark",
        "parameter",
        "pmcmc_samples",
        "pmcmc_mean",
        "pmcmc_variance",
        "pmcmc_ess",
        "abc_generation",
        "abc_mean",
        "abc_variance",
    ])?;
    for r in rows {
        w.write_record([
            r.bracket.to_string(),
            r.budget_mark.to_string(),
            r.parameter.clone(),
            r.pmcmc_samples.to_string(),
            r.pmcmc_mean.to_string(),
            r.pmcmc_variance.to_string(),
            r.pmcmc_ess.to_string(),
            r.abc_generation.map(|g| g.to_string()).unwrap_or_default(),
            r.abc_mean.to_string(),
            r.abc_variance.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Chain from `theta0` in two halves: an isotropic random walk with sd
/// `step`, then the scaled covariance of the first half's second half.
/// Returns the final state and the covariance of the second half.
#[allow(clippy::too_many_arguments)]
pub fn adapt_by_chain(
    problem: &InferenceProblem,
    theta0: &[f64],
    particles: usize,
    iterations: usize,
    step: f64,
    filter: FilterOptions,
    rng: &mut SimRng,
    ledger: &BudgetLedger,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let d = problem.dim();
    let half = (iterations / 2).max(10);
    let first = run_chain(
        problem,
        &ChainConfig {
            theta0: theta0.to_vec(),
            particles,
            proposal: ProposalSpec::isotropic(d, step * step)?,
            max_iterations: Some(half),
            filter,
        },
        rng,
        ledger,
    )?;
    let fallback = DMatrix::from_diagonal_element(d, d, step * step / (2.38f64.powi(2) / (d as f64).sqrt()));
    let cov_of = |t: &ChainTrace| -> DMatrix<f64> {
        let tail = &t.samples[t.len() / 2..];
        let c = sample_covariance(tail);
        let m = DMatrix::from_fn(d, d, |i, j| c[i][j]);
        if nalgebra::Cholesky::new(m.clone()).is_some() && m.iter().all(|x| x.is_finite()) {
            m
        } else {
            fallback.clone()
        }
    };
    let cov1 = cov_of(&first);
    let start = first.samples.last().expect("chain has its initial row").clone();
    let second = run_chain(
        problem,
        &ChainConfig {
            theta0: start,
            particles,
            proposal: scale_proposal(&cov1, d)?,
            max_iterations: Some(half),
            filter,
        },
        rng,
        ledger,
    )?;
    let cov2 = cov_of(&second);
    Ok((second.samples.last().expect("chain has its initial row").clone(), cov2))
}

fn run_pmcmc(
    problem: &InferenceProblem,
    settings: &PmcmcSettings,
    exec: Exec,
    rng: &mut SimRng,
    ledger: &BudgetLedger,
    reference_ledger: &mut Option<BudgetLedger>,
) -> Result<PmcmcOutcome> {
    let d = problem.dim();
    let filter = FilterOptions {
        resampling: settings.resampling,
        exec,
        limits: problem.limits,
    };
    let (theta0, cov, fixed_n) = match &settings.tuning {
        PmcmcTuning::Informed {
            theta0,
            covariance,
            particles,
        } => {
            let m = ProposalSpec::from_rows(covariance)?;
            (theta0.clone(), m.covariance().clone(), *particles)
        }
        PmcmcTuning::Reference {
            theta0,
            particles,
            iterations,
            step,
        } => {
            let reference = BudgetLedger::unlimited();
            let out = adapt_by_chain(problem, theta0, *particles, *iterations, *step, filter, rng, &reference);
            *reference_ledger = Some(reference);
            let (t, c) = out?;
            (t, c, None)
        }
        PmcmcTuning::ColdStart {
            particles,
            iterations,
            step,
        } => {
            ledger.set_phase(Phase::Pilot);
            let start = problem.prior.sample(rng);
            let (t, c) = adapt_by_chain(problem, &start, *particles, *iterations, *step, filter, rng, ledger)?;
            (t, c, None)
        }
    };
    let proposal = scale_proposal(&cov, d)?;
    let (particles, tuning) = match fixed_n {
        Some(n) => (n, None),
        None => {
            ledger.set_phase(Phase::Tuning);
            let (theta, sigma) = problem.unpack(&theta0)?;
            let outcome = tune_particle_count(
                &problem.network,
                &theta,
                sigma,
                &problem.dataset,
                &problem.state_prior,
                rng,
                ledger,
                &filter,
                &settings.tune,
            )?;
            (outcome.particles, Some(outcome))
        }
    };
    ledger.set_phase(Phase::Main);
    let trace = run_chain(
        problem,
        &ChainConfig {
            theta0: theta0.clone(),
            particles,
            proposal: proposal.clone(),
            max_iterations: None,
            filter,
        },
        rng,
        ledger,
    )?;
    let trace = match settings.thin_to {
        Some(k) if k < trace.len() => thin_chain(&trace, k)?,
        _ => trace,
    };
    Ok(PmcmcOutcome {
        trace,
        particles,
        theta0,
        proposal,
        tuning,
    })
}

fn run_abc(
    problem: &InferenceProblem,
    settings: &AbcSettings,
    exec: Exec,
    rng: &mut SimRng,
    ledger: &BudgetLedger,
) -> Result<AbcOutcome> {
    ledger.set_phase(Phase::Pilot);
    let pilot = pilot_tolerance(problem, settings.n_pilot, settings.pilot_quantile, rng, ledger, exec)?;
    ledger.set_phase(Phase::Main);
    let run = run_abc_smc(
        problem,
        &AbcConfig {
            population_size: settings.population_size,
            epsilon0: pilot.epsilon,
            rule: settings.rule,
            max_generations: settings.max_generations,
            exec,
        },
        rng,
        ledger,
    )?;
    Ok(AbcOutcome {
        populations: run.populations,
        termination: run.termination,
        epsilon0: pilot.epsilon,
        discarded_simulations: run.discarded_simulations,
    })
}

/// Runs the configured samplers on `problem`, each against a fresh ledger
/// of `config.budget` units, and writes the run directory when `out` is
/// given. Sub-run failures are recorded, not raised.
pub fn run_comparison(
    problem: &InferenceProblem,
    config: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<RunArtifacts> {
    config.validate()?;
    let names = problem.parameter_names();
    let mut failures = Vec::new();

    let mut abc = None;
    let mut abc_ledger = None;
    if let Some(settings) = &config.abc {
        let ledger = BudgetLedger::new(config.budget);
        let mut rng = substream(config.seed, 1, 0);
        match run_abc(problem, settings, config.exec, &mut rng, &ledger) {
            Ok(o) => abc = Some(o),
            Err(e) => failures.push(format!("abc: {e}")),
        }
        abc_ledger = Some(ledger.snapshot());
    }

    let mut pmcmc = None;
    let mut pmcmc_ledger = None;
    let mut reference = None;
    if let Some(settings) = &config.pmcmc {
        let ledger = BudgetLedger::new(config.budget);
        let mut rng = substream(config.seed, 2, 0);
        match run_pmcmc(problem, settings, config.exec, &mut rng, &ledger, &mut reference) {
            Ok(o) => pmcmc = Some(o),
            Err(e) => failures.push(format!("pmcmc: {e}")),
        }
        pmcmc_ledger = Some(ledger.snapshot());
    }

    let ledgers = LedgerReport {
        abc: abc_ledger,
        pmcmc: pmcmc_ledger,
        reference: reference.map(|l| l.snapshot()),
    };
    let trace = pmcmc.as_ref().map(|p| &p.trace);
    let pops: &[Population] = abc.as_ref().map_or(&[], |a| &a.populations);
    let summary = summarize(&names, trace, pops);
    let final_mark = final_mark(&ledgers);
    let brackets =
        bracketed_summaries(&names, trace, pops, &bracket_marks(trace, pops, final_mark)).unwrap_or_else(|e| {
            failures.push(format!("brackets: {e}"));
            Vec::new()
        });
    let artifacts = RunArtifacts {
        config: config.clone(),
        pmcmc,
        abc,
        ledgers,
        summary,
        brackets,
        failures,
    };
    if let Some(dir) = out {
        persist(&artifacts, problem, dir)?;
    }
    Ok(artifacts)
}

fn final_mark(ledgers: &LedgerReport) -> u64 {
    ledgers
        .abc
        .iter()
        .chain(&ledgers.pmcmc)
        .map(|l| l.consumed)
        .max()
        .unwrap_or(0)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Writes the run directory: config.json, ledger.json, data.csv(+json),
/// trace.csv and pmcmc.json, populations/, summary.json, brackets.csv and,
/// when something failed, failures.json.
pub fn persist(artifacts: &RunArtifacts, problem: &InferenceProblem, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("config.json"), &artifacts.config)?;
    write_json(&dir.join("ledger.json"), &artifacts.ledgers)?;
    let species = problem.network.species_names().to_vec();
    crate::harness::datasets::save_dataset(
        &dir.join("data.csv"),
        &problem.dataset,
        &crate::harness::datasets::DatasetManifest {
            species,
            sigma: problem.dataset.model.sigma,
            observed: problem.dataset.model.observed.clone(),
            regime: artifacts.config.regime.clone(),
            seed: None,
            true_log_theta: None,
            true_sigma: None,
        },
    )?;
    if let Some(p) = &artifacts.pmcmc {
        p.trace.write_csv(File::create(dir.join("trace.csv"))?)?;
        write_json(
            &dir.join("pmcmc.json"),
            &PmcmcRecord {
                particles: p.particles,
                theta0: p.theta0.clone(),
                proposal: p.proposal.clone(),
                tuning: p.tuning.clone(),
                iterations: p.trace.len(),
                acceptance_rate: p.trace.acceptance_rate(),
            },
        )?;
    }
    if let Some(a) = &artifacts.abc {
        let pdir = dir.join("populations");
        fs::create_dir_all(&pdir)?;
        for p in &a.populations {
            p.write_csv(File::create(pdir.join(format!("gen_{}.csv", p.generation)))?)?;
        }
        let manifests: Vec<GenerationManifest> = a.populations.iter().map(Population::manifest).collect();
        write_json(&pdir.join("manifest.json"), &manifests)?;
        write_json(
            &dir.join("abc.json"),
            &AbcRecord {
                termination: a.termination,
                epsilon0: a.epsilon0,
                discarded_simulations: a.discarded_simulations,
                generations: a.populations.len(),
            },
        )?;
    }
    write_json(&dir.join("summary.json"), &artifacts.summary)?;
    write_brackets_csv(&artifacts.brackets, File::create(dir.join("brackets.csv"))?)?;
    if !artifacts.failures.is_empty() {
        write_json(&dir.join("failures.json"), &artifacts.failures)?;
    }
    Ok(())
}

/// Raw sampler output read back from a run directory.
pub struct RunFiles {
    pub names: Vec<String>,
    pub trace: Option<ChainTrace>,
    pub populations: Vec<Population>,
    pub ledgers: LedgerReport,
}

pub fn load_run(dir: &Path) -> Result<RunFiles> {
    let ledgers: LedgerReport = serde_json::from_reader(File::open(dir.join("ledger.json"))?)?;
    let trace_path = dir.join("trace.csv");
    let trace = if trace_path.exists() {
        Some(ChainTrace::read_csv(File::open(trace_path)?)?)
    } else {
        None
    };
    let manifest_path = dir.join("populations").join("manifest.json");
    let mut populations = Vec::new();
    if manifest_path.exists() {
        let manifests: Vec<GenerationManifest> = serde_json::from_reader(File::open(&manifest_path)?)?;
        for m in &manifests {
            let f = File::open(dir.join("populations").join(format!("gen_{}.csv", m.generation)))?;
            populations.push(Population::read_csv(f, m)?);
        }
    }
    let names = match (&trace, populations.first()) {
        (Some(t), _) => t.names.clone(),
        (None, Some(p)) => p.names.clone(),
        (None, None) => Vec::new(),
    };
    Ok(RunFiles {
        names,
        trace,
        populations,
        ledgers,
    })
}

/// Summary and bracket table rebuilt from the raw files in `dir`.
pub fn recompute_summary(dir: &Path) -> Result<(RunSummary, Vec<BracketRow>)> {
    let files = load_run(dir)?;
    let trace = files.trace.as_ref();
    let summary = summarize(&files.names, trace, &files.populations);
    let marks = bracket_marks(trace, &files.populations, final_mark(&files.ledgers));
    let brackets = bracketed_summaries(&files.names, trace, &files.populations, &marks)?;
    Ok((summary, brackets))
}

/// Serialized forms of a summary and bracket table, as written to disk.
pub fn render_summary(summary: &RunSummary, brackets: &[BracketRow]) -> Result<(String, String)> {
    let mut json = serde_json::to_string_pretty(summary)?;
    json.push('\n');
    let mut csv = Vec::new();
    write_brackets_csv(brackets, &mut csv)?;
    Ok((json, String::from_utf8(csv).expect("csv output is UTF-8")))
}

/// Seed for replicate `r` of a base seed.
pub fn replicate_seed(base: u64, r: u64) -> u64 {
    substream(base, 3, r).random()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand_distr::{Distribution, StandardNormal};

    fn iid_trace(n: usize, seed: u64) -> ChainTrace {
        let mut rng = seeded(seed);
        let mut buf = String::from("iteration,cumulative_budget,log_theta_1,log_estimate,accepted\n");
        for i in 0..n {
            let x: f64 = StandardNormal.sample(&mut rng);
            buf.push_str(&format!("{i},{},{x},0,1\n", 10 * (i + 1)));
        }
        ChainTrace::read_csv(buf.as_bytes()).unwrap()
    }

    #[test]
    fn single_full_bracket_matches_summary() {
        let t = iid_trace(500, 1);
        let names = t.names.clone();
        let rows = bracketed_summaries(&names, Some(&t), &[], &[5000]).unwrap();
        let s = summarize_chain(&t);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].pmcmc_mean, s.mean[0]);
        assert_eq!(rows[0].pmcmc_variance, s.variance[0]);
        assert_eq!(rows[0].pmcmc_ess, s.ess[0]);
    }

    #[test]
    fn iid_brackets_track_generating_law() {
        let t = iid_trace(4000, 2);
        let rows = bracketed_summaries(&t.names.clone(), Some(&t), &[], &[10_000, 20_000, 40_000]).unwrap();
        for r in &rows {
            let n = r.pmcmc_samples as f64;
            assert!(r.pmcmc_mean.abs() < 4.0 / n.sqrt(), "{r:?}");
            assert!((r.pmcmc_variance - 1.0).abs() < 4.0 * (2.0 / n).sqrt(), "{r:?}");
        }
    }

    #[test]
    fn bracket_errors() {
        let t = iid_trace(20, 3);
        let names = t.names.clone();
        assert!(bracketed_summaries(&names, Some(&t), &[], &[]).is_err());
        assert!(bracketed_summaries(&names, Some(&t), &[], &[100, 50]).is_err());
        assert!(bracketed_summaries(&names, Some(&t), &[], &[5]).is_err());
    }

    #[test]
    fn marks_without_populations_are_even() {
        assert_eq!(
            bracket_marks(None, &[], 100),
            vec![10, 20, 30, 40, 50, 60, 70, 80, 90, 100]
        );
    }
}
