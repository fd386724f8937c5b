//! Built-in models, reference datasets and equal-budget experiments.

pub mod builtins;
pub mod compare;
pub mod datasets;

pub use builtins::{
    builtin, builtin_immigration_death, builtin_lotka_volterra, builtin_pure_death, builtin_schlogl, load_model,
    BuiltinModel, ModelFile,
};
pub use compare::{
    adapt_by_chain, bracketed_summaries, load_run, persist, recompute_summary, render_summary, run_comparison,
    AbcSettings, BracketRow, ExperimentConfig, PmcmcSettings, PmcmcTuning, RunArtifacts, RunSummary,
};
pub use datasets::{
    generate_all_datasets, generate_dataset, load_dataset, save_dataset, write_latent_csv, DatasetId, DatasetManifest,
    GeneratedData, ObservationRegime,
};
