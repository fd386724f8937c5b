#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use kinfer::abc::{abc_rejection, pilot_tolerance, GenerationManifest, ToleranceRule};
use kinfer::exec::with_workers;
use kinfer::filter::{tune_particle_count, FilterOptions, Resampling, TuneOptions, TuneOutcome};
use kinfer::harness::{
    adapt_by_chain, generate_dataset, load_dataset, load_model, recompute_summary, render_summary, run_comparison,
    save_dataset, write_latent_csv, AbcSettings, BuiltinModel, DatasetManifest, ExperimentConfig, ObservationRegime,
    PmcmcSettings, PmcmcTuning,
};
use kinfer::model::{observe_states, simulate_at_times, ObservationModel, RateParameters};
use kinfer::oracle::{exact_likelihood, grid_posterior, linspace, OracleOptions};
use kinfer::rng::substream;
use kinfer::{BudgetLedger, Error, Exec, InferenceProblem};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "kinfer",
    version,
    about = "Bayesian inference for stochastic kinetic models under a simulation budget"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate sample paths on a regular grid.
    Simulate(SimulateArgs),
    /// Simulate and write a noisy dataset.
    GenerateData(GenerateArgs),
    /// Tune the pMCMC particle count and, optionally, the proposal.
    Tune(TuneArgs),
    /// Particle marginal Metropolis-Hastings.
    Pmcmc(PmcmcArgs),
    /// ABC SMC with adaptive tolerances.
    AbcSmc(AbcArgs),
    /// ABC rejection at a fixed tolerance.
    AbcReject(RejectArgs),
    /// Both samplers on equal budgets.
    Compare(CompareArgs),
    /// Recompute summaries and bracket tables from a run directory.
    Diagnose(DiagnoseArgs),
    /// Exact likelihood or grid posterior for a small model.
    Oracle(OracleArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// `builtin:<name>` or a model JSON file.
    #[arg(long, default_value = "builtin:lv")]
    model: String,
    /// Simulation budget in realisations; unlimited when absent.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Dataset CSV; its `.json` manifest is read when present.
    #[arg(long, conflicts_with = "regime")]
    data: Option<PathBuf>,
    /// Regenerate a builtin dataset instead, e.g. `D2_up`.
    #[arg(long)]
    regime: Option<String>,
    /// Seed for `--regime` data; defaults to `--seed`.
    #[arg(long)]
    data_seed: Option<u64>,
}

#[derive(Args, Clone)]
struct ExecArgs {
    /// Worker threads; all available cores when absent.
    #[arg(long)]
    workers: Option<usize>,
    /// Run without the thread pool.
    #[arg(long)]
    sequential: bool,
}

impl ExecArgs {
    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }

    fn run<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match self.workers {
            Some(n) => with_workers(n, f),
            None => f(),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Rates on the natural scale; the model's values when absent.
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Grid points per path, including 0 and `t_end`.
    #[arg(long, default_value_t = 101)]
    points: usize,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    /// Builtin dataset and observation regime, e.g. `D2`, `D1_up`, `DS10`.
    #[arg(long)]
    regime: Option<String>,
    /// Observation times `start:end:step` for models without builtin datasets.
    #[arg(long)]
    times: Option<String>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    exec: ExecArgs,
    /// Log-parameters to tune at; the model's true values when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.5, 1.8])]
    band: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Iterations of a pilot chain that estimates the proposal covariance; 0 skips it.
    #[arg(long, default_value_t = 0)]
    chain_iterations: usize,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
}

#[derive(Args, Clone)]
struct PmcmcFlags {
    /// `tune.json` from the `tune` subcommand; switches to informed tuning.
    #[arg(long)]
    tuning: Option<PathBuf>,
    /// Start from a prior draw and charge every pilot cost.
    #[arg(long, conflicts_with = "tuning")]
    cold_start: bool,
    /// Reference-chain start; the model's true values when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100)]
    reference_particles: usize,
    #[arg(long, default_value_t = 1000)]
    reference_iterations: usize,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    #[arg(long)]
    thin_to: Option<usize>,
    #[arg(long, default_value = "multinomial")]
    resampling: String,
}

#[derive(Args, Clone)]
struct AbcFlags {
    #[arg(long, default_value_t = 1000)]
    population: usize,
    #[arg(long, default_value_t = 1000)]
    n_pilot: usize,
    #[arg(long, default_value_t = 0.01)]
    pilot_quantile: f64,
    /// Quantile of accepted distances that sets the next tolerance.
    #[arg(long, default_value_t = 0.5)]
    quantile: f64,
    #[arg(long)]
    max_generations: Option<usize>,
}

#[derive(Args)]
struct PmcmcArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    exec: ExecArgs,
    #[command(flatten)]
    pmcmc: PmcmcFlags,
}

#[derive(Args)]
struct AbcArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    exec: ExecArgs,
    #[command(flatten)]
    abc: AbcFlags,
}

#[derive(Args)]
struct RejectArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    exec: ExecArgs,
    /// Tolerance on squared distance; a pilot sets it when absent.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    population: usize,
    #[arg(long, default_value_t = 1000)]
    n_pilot: usize,
    #[arg(long, default_value_t = 0.01)]
    pilot_quantile: f64,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    exec: ExecArgs,
    /// Full experiment configuration; overrides the sampler flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    pmcmc: PmcmcFlags,
    #[command(flatten)]
    abc: AbcFlags,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Run directory written by `pmcmc`, `abc-smc` or `compare`.
    #[arg(long)]
    run: PathBuf,
    /// Where to write the recomputed files; stdout only when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fail unless the recomputed files match those in the run directory.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    /// Rates on the log scale; the model's values when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    log_theta: Option<Vec<f64>>,
    /// Per-species upper bounds of the truncated state space.
    #[arg(long, value_delimiter = ',')]
    bounds: Option<Vec<i64>>,
    /// Tabulate the posterior of this log-rate on `--grid`.
    #[arg(long)]
    param: Option<usize>,
    /// Grid `lo:hi:points`; the prior's support for uniform priors.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::GenerateData(a) => generate(a),
        Command::Tune(a) => tune(a),
        Command::Pmcmc(a) => pmcmc(a),
        Command::AbcSmc(a) => abc_smc(a),
        Command::AbcReject(a) => abc_reject(a),
        Command::Compare(a) => compare(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Oracle(a) => oracle(a),
    }
}

fn ledger(budget: Option<u64>) -> BudgetLedger {
    budget.map_or_else(BudgetLedger::unlimited, BudgetLedger::new)
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    let dir = common.out.clone().ok_or_else(|| anyhow!("--out is required"))?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn parse_range(text: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("range '{text}'"))?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => bail!("range '{text}' must be start:end:step"),
    }
}

fn problem_for(model: &BuiltinModel, data: &DataArgs, seed: u64) -> Result<InferenceProblem> {
    let dataset = match (&data.data, &data.regime) {
        (Some(path), _) => load_dataset(path)?.0,
        (None, Some(r)) => {
            let regime: ObservationRegime = r.parse()?;
            if regime.id.model().name != model.name {
                bail!(
                    "regime {regime} belongs to model '{}', not '{}'",
                    regime.id.model().name,
                    model.name
                );
            }
            regime.apply(&generate_dataset(regime.id, data.data_seed.unwrap_or(seed))?.dataset)?
        }
        (None, None) => bail!("give --data <csv> or --regime <id>"),
    };
    if model.rate_prior.is_empty() {
        bail!("model '{}' has no rate_prior; inference needs one", model.name);
    }
    Ok(model.problem(dataset)?)
}

fn default_theta0(model: &BuiltinModel, problem: &InferenceProblem, given: &Option<Vec<f64>>) -> Vec<f64> {
    given
        .clone()
        .unwrap_or_else(|| model.true_log_params(problem.infers_sigma()))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let model = load_model(&a.common.model)?;
    let theta = match &a.theta {
        Some(t) => RateParameters::new(t.clone())?,
        None => model.theta.clone(),
    };
    if a.points < 2 || !(a.t_end > 0.0) {
        bail!("need at least two grid points and a positive --t-end");
    }
    let times = linspace(0.0, a.t_end, a.points);
    let dir = out_dir(&a.common)?;
    let paths = dir.join("paths");
    fs::create_dir_all(&paths)?;
    let ledger = ledger(a.common.budget);
    let species = model.network.species_names().to_vec();
    let (mut completed, mut exploded) = (0usize, 0usize);
    let mut final_sum = vec![0.0; species.len()];
    for r in 0..a.reps {
        let mut rng = substream(a.common.seed, 0, r as u64);
        match simulate_at_times(
            &model.network,
            &theta,
            &model.x0,
            &times,
            &mut rng,
            &ledger,
            &model.limits,
        ) {
            Ok(states) => {
                write_latent_csv(
                    &times,
                    &states,
                    &species,
                    File::create(paths.join(format!("rep_{r}.csv")))?,
                )?;
                for (s, v) in final_sum
                    .iter_mut()
                    .zip(states.last().expect("grid is nonempty").counts())
                {
                    *s += *v as f64;
                }
                completed += 1;
            }
            Err(Error::HazardOverflow(_)) => exploded += 1,
            Err(Error::BudgetExhausted { .. }) => break,
            Err(e) => return Err(e.into()),
        }
    }
    #[derive(Serialize)]
    struct Report {
        model: String,
        theta: Vec<f64>,
        t_end: f64,
        completed: usize,
        exploded: usize,
        final_mean: Vec<f64>,
        budget_used: u64,
    }
    let report = Report {
        model: model.name.clone(),
        theta: theta.values().to_vec(),
        t_end: a.t_end,
        completed,
        exploded,
        final_mean: final_sum.iter().map(|s| s / completed.max(1) as f64).collect(),
        budget_used: ledger.consumed(),
    };
    write_json(&dir.join("simulate.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let dir = out_dir(&a.common)?;
    let data_path = dir.join("data.csv");
    match (&a.regime, &a.times) {
        (Some(r), _) => {
            let regime: ObservationRegime = r.parse()?;
            let generated = generate_dataset(regime.id, a.common.seed)?;
            let model = regime.id.model();
            if a.common.model.starts_with("builtin:") && load_model(&a.common.model)?.name != model.name {
                bail!("regime {regime} belongs to model '{}'", model.name);
            }
            let species = model.network.species_names().to_vec();
            save_dataset(
                &data_path,
                &regime.apply(&generated.dataset)?,
                &generated.manifest(&regime)?,
            )?;
            write_latent_csv(
                &generated.dataset.times,
                &generated.latent,
                &species,
                File::create(dir.join("latent.csv"))?,
            )?;
        }
        (None, Some(spec)) => {
            let model = load_model(&a.common.model)?;
            let (start, end, step) = parse_range(spec)?;
            if !(step > 0.0) || end < start {
                bail!("times '{spec}' are empty");
            }
            let n = ((end - start) / step + 1e-9).floor() as usize + 1;
            let times: Vec<f64> = (0..n).map(|i| start + step * i as f64).collect();
            let ledger = BudgetLedger::unlimited();
            let mut rng = substream(a.common.seed, 0, 0);
            let latent = simulate_at_times(
                &model.network,
                &model.theta,
                &model.x0,
                &times,
                &mut rng,
                &ledger,
                &model.limits,
            )?;
            let obs = ObservationModel::fully_observed(model.sigma, model.network.num_species())?;
            let data = observe_states(&latent, &times, &obs, model.sigma, &mut substream(a.common.seed, 0, 1))?;
            let species = model.network.species_names().to_vec();
            let manifest = DatasetManifest {
                species: species.clone(),
                sigma: data.model.sigma,
                observed: data.model.observed.clone(),
                regime: None,
                seed: Some(a.common.seed),
                true_log_theta: Some(model.theta.to_log()),
                true_sigma: Some(model.sigma),
            };
            save_dataset(&data_path, &data, &manifest)?;
            write_latent_csv(&times, &latent, &species, File::create(dir.join("latent.csv"))?)?;
        }
        (None, None) => bail!("give --regime <id> or --times start:end:step"),
    }
    println!("{}", data_path.display());
    Ok(())
}

#[derive(Serialize)]
struct TuneReport {
    theta0: Vec<f64>,
    particles: usize,
    tuning: TuneOutcome,
    /// Posterior covariance estimate from the pilot chain, when run.
    covariance: Option<Vec<Vec<f64>>>,
    budget_used: u64,
}

fn tune(a: TuneArgs) -> Result<()> {
    let model = load_model(&a.common.model)?;
    let problem = problem_for(&model, &a.data, a.common.seed)?;
    let [lo, hi] = a.band[..] else {
        bail!("--band takes two values");
    };
    let theta0 = default_theta0(&model, &problem, &a.theta0);
    let ledger = ledger(a.common.budget);
    let filter = FilterOptions {
        exec: a.exec.exec(),
        limits: problem.limits,
        ..FilterOptions::default()
    };
    let opts = TuneOptions {
        band: (lo, hi),
        reps: a.reps,
        ..TuneOptions::default()
    };
    let report = a.exec.run(|| -> Result<TuneReport> {
        let mut rng = substream(a.common.seed, 4, 0);
        let (theta, sigma) = problem.unpack(&theta0)?;
        let tuning = tune_particle_count(
            &problem.network,
            &theta,
            sigma,
            &problem.dataset,
            &problem.state_prior,
            &mut rng,
            &ledger,
            &filter,
            &opts,
        )?;
        let (theta0, covariance) = if a.chain_iterations > 0 {
            let (end, cov) = adapt_by_chain(
                &problem,
                &theta0,
                tuning.particles,
                a.chain_iterations,
                a.step,
                filter,
                &mut rng,
                &ledger,
            )?;
            let rows = (0..cov.nrows())
                .map(|i| (0..cov.ncols()).map(|j| cov[(i, j)]).collect())
                .collect();
            (end, Some(rows))
        } else {
            (theta0.clone(), None)
        };
        Ok(TuneReport {
            theta0,
            particles: tuning.particles,
            tuning,
            covariance,
            budget_used: ledger.consumed(),
        })
    })?;
    if let Some(dir) = &a.common.out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("tune.json"), &report)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn pmcmc_settings(model: &BuiltinModel, problem: &InferenceProblem, f: &PmcmcFlags) -> Result<PmcmcSettings> {
    let tuning = if let Some(path) = &f.tuning {
        let v: serde_json::Value = serde_json::from_reader(File::open(path)?)?;
        let theta0: Vec<f64> = serde_json::from_value(v["theta0"].clone())?;
        let covariance: Vec<Vec<f64>> = serde_json::from_value(v["covariance"].clone()).with_context(|| {
            format!(
                "{} has no covariance; rerun tune with --chain-iterations",
                path.display()
            )
        })?;
        let particles = v["particles"].as_u64().map(|n| n as usize);
        PmcmcTuning::Informed {
            theta0,
            covariance,
            particles,
        }
    } else if f.cold_start {
        PmcmcTuning::ColdStart {
            particles: f.reference_particles,
            iterations: f.reference_iterations,
            step: f.step,
        }
    } else {
        PmcmcTuning::Reference {
            theta0: default_theta0(model, problem, &f.theta0),
            particles: f.reference_particles,
            iterations: f.reference_iterations,
            step: f.step,
        }
    };
    let resampling: Resampling = serde_json::from_value(serde_json::Value::String(f.resampling.clone()))
        .with_context(|| format!("unknown resampling scheme '{}'", f.resampling))?;
    Ok(PmcmcSettings {
        tuning,
        tune: TuneOptions::default(),
        resampling,
        thin_to: f.thin_to,
    })
}

fn abc_settings(f: &AbcFlags) -> AbcSettings {
    AbcSettings {
        population_size: f.population,
        n_pilot: f.n_pilot,
        pilot_quantile: f.pilot_quantile,
        rule: ToleranceRule::Quantile { q: f.quantile },
        max_generations: f.max_generations,
    }
}

fn budget(common: &Common) -> Result<u64> {
    common.budget.ok_or_else(|| anyhow!("--budget is required"))
}

fn run_experiment(problem: &InferenceProblem, config: ExperimentConfig, exec: &ExecArgs, out: &Path) -> Result<()> {
    let art = exec.run(|| run_comparison(problem, &config, Some(out)))?;
    println!("{}", serde_json::to_string_pretty(&art.summary)?);
    for f in &art.failures {
        eprintln!("warning: {f}");
    }
    if art.pmcmc.is_none() && art.abc.is_none() {
        bail!("every sampler failed");
    }
    Ok(())
}

fn pmcmc(a: PmcmcArgs) -> Result<()> {
    let model = load_model(&a.common.model)?;
    let problem = problem_for(&model, &a.data, a.common.seed)?;
    let config = ExperimentConfig {
        model: model.name.clone(),
        regime: a.data.regime.clone(),
        budget: budget(&a.common)?,
        seed: a.common.seed,
        abc: None,
        pmcmc: Some(pmcmc_settings(&model, &problem, &a.pmcmc)?),
        exec: a.exec.exec(),
    };
    run_experiment(&problem, config, &a.exec, &out_dir(&a.common)?)
}

fn abc_smc(a: AbcArgs) -> Result<()> {
    let model = load_model(&a.common.model)?;
    let problem = problem_for(&model, &a.data, a.common.seed)?;
    let config = ExperimentConfig {
        model: model.name.clone(),
        regime: a.data.regime.clone(),
        budget: budget(&a.common)?,
        seed: a.common.seed,
        abc: Some(abc_settings(&a.abc)),
        pmcmc: None,
        exec: a.exec.exec(),
    };
    run_experiment(&problem, config, &a.exec, &out_dir(&a.common)?)
}

fn compare(a: CompareArgs) -> Result<()> {
    let model = load_model(&a.common.model)?;
    let problem = problem_for(&model, &a.data, a.common.seed)?;
    let config = match &a.config {
        Some(path) => {
            serde_json::from_reader(File::open(path)?).with_context(|| format!("reading {}", path.display()))?
        }
        None => ExperimentConfig {
            model: model.name.clone(),
            regime: a.data.regime.clone(),
            budget: budget(&a.common)?,
            seed: a.common.seed,
            abc: Some(abc_settings(&a.abc)),
            pmcmc: Some(pmcmc_settings(&model, &problem, &a.pmcmc)?),
            exec: a.exec.exec(),
        },
    };
    run_experiment(&problem, config, &a.exec, &out_dir(&a.common)?)
}

fn abc_reject(a: RejectArgs) -> Result<()> {
    let model = load_model(&a.common.model)?;
    let problem = problem_for(&model, &a.data, a.common.seed)?;
    let dir = out_dir(&a.common)?;
    let ledger = ledger(a.common.budget);
    let exec = a.exec.exec();
    let pop = a.exec.run(|| -> Result<_> {
        let mut rng = substream(a.common.seed, 1, 0);
        let eps = match a.epsilon {
            Some(e) => e,
            None => pilot_tolerance(&problem, a.n_pilot, a.pilot_quantile, &mut rng, &ledger, exec)?.epsilon,
        };
        Ok(abc_rejection(&problem, eps, a.population, &mut rng, &ledger, exec)?)
    })?;
    let pdir = dir.join("populations");
    fs::create_dir_all(&pdir)?;
    pop.write_csv(File::create(pdir.join("gen_0.csv"))?)?;
    let manifests: Vec<GenerationManifest> = vec![pop.manifest()];
    write_json(&pdir.join("manifest.json"), &manifests)?;
    write_json(
        &dir.join("ledger.json"),
        &serde_json::json!({ "abc": ledger.snapshot() }),
    )?;
    let summary = kinfer::harness::compare::summarize(&pop.names, None, std::slice::from_ref(&pop));
    write_json(&dir.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn diagnose(a: DiagnoseArgs) -> Result<()> {
    let (summary, brackets) = recompute_summary(&a.run)?;
    let (json, csv) = render_summary(&summary, &brackets)?;
    if a.check {
        for (name, fresh) in [("summary.json", &json), ("brackets.csv", &csv)] {
            let stored = fs::read_to_string(a.run.join(name)).with_context(|| format!("reading {name}"))?;
            if &stored != fresh {
                bail!("{name} differs from the value recomputed from the raw files");
            }
        }
        eprintln!("summary.json and brackets.csv match the raw files");
    }
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("summary.json"), &json)?;
        fs::write(out.join("brackets.csv"), &csv)?;
    }
    print!("{json}");
    Ok(())
}

fn oracle(a: OracleArgs) -> Result<()> {
    let model = load_model(&a.common.model)?;
    let problem = problem_for(&model, &a.data, a.common.seed)?;
    let log_theta = a.log_theta.clone().unwrap_or_else(|| model.theta.to_log());
    let theta = RateParameters::from_log(&log_theta)?;
    let bounds = match &a.bounds {
        Some(b) => b.clone(),
        None => default_bounds(&model, &problem),
    };
    let opts = OracleOptions::default();
    let Some(param) = a.param else {
        let ll = exact_likelihood(
            &problem.network,
            &theta,
            &problem.dataset,
            &problem.state_prior,
            &bounds,
            &opts,
        )?;
        println!(
            "{}",
            serde_json::json!({ "log_theta": log_theta, "bounds": bounds, "log_likelihood": ll })
        );
        return Ok(());
    };
    let prior = *model
        .rate_prior
        .get(param)
        .ok_or_else(|| anyhow!("parameter {param} out of range"))?;
    let (lo, hi, n) = match (&a.grid, prior) {
        (Some(g), _) => {
            let (lo, hi, n) = parse_range(g)?;
            (lo, hi, n as usize)
        }
        (None, kinfer::prior::PriorComponent::Uniform { lo, hi }) => (lo, hi, 801),
        (None, _) => bail!("--grid lo:hi:points is required for a non-uniform prior"),
    };
    let grid = linspace(lo, hi, n);
    let post = grid_posterior(
        &problem.network,
        &problem.dataset,
        &problem.state_prior,
        &bounds,
        &prior,
        &grid,
        |g| {
            let mut v = log_theta.clone();
            v[param] = g;
            RateParameters::from_log(&v)
        },
        &opts,
    )?;
    if let Some(dir) = &a.common.out {
        fs::create_dir_all(dir)?;
        let mut f = File::create(dir.join("posterior.csv"))?;
        writeln!(f, "log_theta,density")?;
        for (x, d) in post.grid().iter().zip(post.density()) {
            writeln!(f, "{x},{d}")?;
        }
    }
    println!(
        "{}",
        serde_json::json!({ "param": param, "mean": post.mean(), "sd": post.sd() })
    );
    Ok(())
}

/// Bounds comfortably above the initial state and the largest observation.
fn default_bounds(model: &BuiltinModel, problem: &InferenceProblem) -> Vec<i64> {
    let sigma = problem.dataset.model.known_sigma().unwrap_or(model.sigma);
    (0..model.network.num_species())
        .map(|s| {
            let observed = problem
                .dataset
                .values
                .iter()
                .filter_map(|row| row[s])
                .fold(0.0f64, f64::max);
            let top = (observed + 6.0 * sigma).max(model.x0.counts()[s] as f64);
            (2.0 * top).ceil() as i64 + 10
        })
        .collect()
}
