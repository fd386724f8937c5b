mod common;

use std::fs;

use common::death_problem;
use kinfer::filter::TuneOptions;
use kinfer::harness::{
    generate_dataset, load_dataset, load_run, recompute_summary, render_summary, run_comparison, save_dataset,
    AbcSettings, DatasetId, ExperimentConfig, ObservationRegime, PmcmcSettings, PmcmcTuning,
};
use kinfer::Exec;

fn config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        model: "pure-death".into(),
        regime: None,
        budget: 15_000,
        seed,
        abc: Some(AbcSettings {
            population_size: 100,
            n_pilot: 300,
            pilot_quantile: 0.2,
            ..AbcSettings::default()
        }),
        pmcmc: Some(PmcmcSettings {
            tuning: PmcmcTuning::Reference {
                theta0: vec![0.5f64.ln()],
                particles: 5,
                iterations: 100,
                step: 0.3,
            },
            tune: TuneOptions::default(),
            resampling: Default::default(),
            thin_to: None,
        }),
        exec: Exec::Parallel,
    }
}

#[test]
fn summaries_recompute_from_raw_files() {
    let (_, problem) = death_problem();
    let dir = tempfile::tempdir().unwrap();
    let art = run_comparison(&problem, &config(5), Some(dir.path())).unwrap();
    assert!(art.failures.is_empty(), "{:?}", art.failures);

    let (summary, brackets) = recompute_summary(dir.path()).unwrap();
    let (json, csv) = render_summary(&summary, &brackets).unwrap();
    assert_eq!(json, fs::read_to_string(dir.path().join("summary.json")).unwrap());
    assert_eq!(csv, fs::read_to_string(dir.path().join("brackets.csv")).unwrap());

    let files = load_run(dir.path()).unwrap();
    assert_eq!(files.trace.as_ref(), art.pmcmc.as_ref().map(|p| &p.trace));
    assert_eq!(files.populations, art.abc.as_ref().unwrap().populations);
}

#[test]
fn ledgers_match_budget_and_marks() {
    let (_, problem) = death_problem();
    let art = run_comparison(&problem, &config(6), None).unwrap();
    let abc = art.ledgers.abc.unwrap();
    let pmcmc = art.ledgers.pmcmc.unwrap();
    assert_eq!(abc.capacity, 15_000);
    assert_eq!(pmcmc.capacity, 15_000);
    let trace = &art.pmcmc.as_ref().unwrap().trace;
    assert_eq!(*trace.budget_marks.last().unwrap(), pmcmc.consumed);
    let pops = &art.abc.as_ref().unwrap().populations;
    assert!(pops.windows(2).all(|w| w[1].budget_mark > w[0].budget_mark));
    assert!(pops.last().unwrap().budget_mark <= abc.consumed);
    // the reference chain runs on its own ledger
    assert!(art.ledgers.reference.unwrap().consumed > 0);
}

#[test]
fn dataset_round_trips_with_unobserved_cells() {
    let dir = tempfile::tempdir().unwrap();
    for regime in ["D1", "D2_up", "DS10"] {
        let regime: ObservationRegime = regime.parse().unwrap();
        let generated = generate_dataset(regime.id, 9).unwrap();
        let data = regime.apply(&generated.dataset).unwrap();
        let path = dir.path().join(format!("{regime}.csv"));
        save_dataset(&path, &data, &generated.manifest(&regime).unwrap()).unwrap();
        let (back, species, manifest) = load_dataset(&path).unwrap();
        assert_eq!(back, data);
        assert_eq!(species, regime.id.model().network.species_names());
        assert_eq!(manifest.unwrap().regime.as_deref(), Some(regime.to_string().as_str()));
    }
}

#[test]
fn config_json_round_trips() {
    let c = config(1);
    let text = serde_json::to_string(&c).unwrap();
    assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), c);
}

#[test]
fn generated_datasets_are_seed_reproducible() {
    for id in [DatasetId::D1, DatasetId::D2, DatasetId::S1] {
        assert_eq!(
            generate_dataset(id, 4).unwrap().dataset,
            generate_dataset(id, 4).unwrap().dataset
        );
        assert_ne!(
            generate_dataset(id, 4).unwrap().dataset,
            generate_dataset(id, 5).unwrap().dataset
        );
    }
}
