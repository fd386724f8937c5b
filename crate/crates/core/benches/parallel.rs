//! Sequential against data-parallel execution for the particle filter and
//! one ABC rejection generation on the Lotka–Volterra D2 data.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kinfer::abc::abc_rejection;
use kinfer::filter::{bootstrap_filter, FilterOptions};
use kinfer::harness::{generate_dataset, DatasetId};
use kinfer::rng::seeded;
use kinfer::{BudgetLedger, Exec, InferenceProblem};

fn lv_problem() -> InferenceProblem {
    let generated = generate_dataset(DatasetId::D2, 1).unwrap();
    DatasetId::D2.model().problem(generated.dataset).unwrap()
}

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn filter(c: &mut Criterion) {
    let problem = lv_problem();
    let model = DatasetId::D2.model();
    let mut group = c.benchmark_group("bootstrap_filter_n256");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        let opts = FilterOptions {
            exec,
            limits: problem.limits,
            ..FilterOptions::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            let ledger = BudgetLedger::unlimited();
            let mut rng = seeded(7);
            b.iter(|| {
                bootstrap_filter(
                    &problem.network,
                    &model.theta,
                    model.sigma,
                    &problem.dataset,
                    256,
                    &problem.state_prior,
                    &mut rng,
                    &ledger,
                    opts,
                )
                .unwrap()
            });
        });
    }
    group.finish();
}

fn abc_generation(c: &mut Criterion) {
    let problem = lv_problem();
    let mut group = c.benchmark_group("abc_rejection_m100");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            let mut rng = seeded(11);
            b.iter(|| {
                let ledger = BudgetLedger::unlimited();
                abc_rejection(&problem, 2e6, 100, &mut rng, &ledger, exec).unwrap()
            });
        });
    }
    group.finish();
}

criterion_group!(benches, filter, abc_generation);
criterion_main!(benches);
