//! Experiment runner, table reproduction, model persistence and the
//! command-line front end.

mod cli;
mod config;
mod experiment;
mod persist;
mod reproduce;

pub use cli::cli_main;
pub use config::{load_experiment_spec, load_estimator_config, output_dir, ExperimentSpec, OUTPUT_DIR_ENV};
pub use experiment::{
    derive_seed, run_experiment, run_experiment_with_model, write_report, write_report_to, ClassifierKind, RepFailure,
    RiskReport, RiskRow,
};
pub use persist::{load_model, load_model_from, save_model, save_model_to, ModelFile, MODEL_FORMAT};
pub use reproduce::{reproduce, reproduce_to_file, Scale, Table};
