//! Parameter sweeps behind the `reproduce` command.
//!
//! | table               | sweep                                   | desk                         | full                 |
//! |---------------------|-----------------------------------------|------------------------------|----------------------|
//! | `bayes_t2`          | cosine θ ∈ {1/2, 3/2, 5/2, 4}, Bayes    | 2000 paths, n = 200, 20 reps | 4000, n = 500, 100   |
//! | `plugin_t3`         | cosine θ, N ∈ {100, 1000}, 1000 test    | n = 100, 20 reps             | n ∈ {100, 500}, 100  |
//! | `ou_t4`             | OU σ ∈ {1/2, 1, 3/2}, N = 100, 1000 test| n = 100, 20 reps             | n = 100, 100 reps    |
//! | `ou_known_sigma_t5` | OU σ = 1 known, A ∈ {√ln N, ln N}, N ∈ {100, 1000} | n = 100, 20 reps  | n = 100, 100 reps    |
//!
//! Every row of a table shares the base seed, so rows are compared on
//! common random numbers.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::estimate::{EstimatorConfig, HalfWidthRule};
use crate::models::ModelId;

use super::config::ExperimentSpec;
use super::experiment::{run_experiment, write_report, ClassifierKind, RiskReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Table {
    BayesT2,
    PluginT3,
    OuT4,
    OuKnownSigmaT5,
}

impl FromStr for Table {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bayes_t2" => Ok(Table::BayesT2),
            "plugin_t3" => Ok(Table::PluginT3),
            "ou_t4" => Ok(Table::OuT4),
            "ou_known_sigma_t5" => Ok(Table::OuKnownSigmaT5),
            other => invalid(format!("unknown table `{other}`")),
        }
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Table::BayesT2 => "bayes_t2",
            Table::PluginT3 => "plugin_t3",
            Table::OuT4 => "ou_t4",
            Table::OuKnownSigmaT5 => "ou_known_sigma_t5",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Full,
}

impl FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            other => invalid(format!("unknown scale `{other}`")),
        }
    }
}

const COSINE_THETAS: [f64; 4] = [0.5, 1.5, 2.5, 4.0];
const OU_SIGMAS: [f64; 3] = [0.5, 1.0, 1.5];

fn reps(scale: Scale) -> usize {
    match scale {
        Scale::Desk => 20,
        Scale::Full => 100,
    }
}

fn specs(table: Table, scale: Scale, seed: u64) -> Vec<(ExperimentSpec, Option<String>)> {
    let reps = reps(scale);
    let mut out = Vec::new();
    match table {
        Table::BayesT2 => {
            let (m, n) = match scale {
                Scale::Desk => (2000, 200),
                Scale::Full => (4000, 500),
            };
            for theta in COSINE_THETAS {
                let mut spec = ExperimentSpec::new(ModelId::Cosine { theta }, 0, m, n, reps, seed);
                spec.classifiers = vec![ClassifierKind::Bayes];
                out.push((spec, None));
            }
        }
        Table::PluginT3 => {
            let lengths: &[usize] = match scale {
                Scale::Desk => &[100],
                Scale::Full => &[100, 500],
            };
            for &n in lengths {
                for n_train in [100, 1000] {
                    for theta in COSINE_THETAS {
                        out.push((ExperimentSpec::new(ModelId::Cosine { theta }, n_train, 1000, n, reps, seed), None));
                    }
                }
            }
        }
        Table::OuT4 => {
            for sigma in OU_SIGMAS {
                out.push((ExperimentSpec::new(ModelId::OrnsteinUhlenbeck { sigma }, 100, 1000, 100, reps, seed), None));
            }
        }
        Table::OuKnownSigmaT5 => {
            for rule in [HalfWidthRule::SqrtLogN, HalfWidthRule::LogN] {
                for n_train in [100, 1000] {
                    let mut spec =
                        ExperimentSpec::new(ModelId::OrnsteinUhlenbeck { sigma: 1.0 }, n_train, 1000, 100, reps, seed);
                    spec.classifiers = vec![ClassifierKind::PlugIn];
                    spec.estimator = EstimatorConfig {
                        a_rule: Some(rule),
                        ..EstimatorConfig::known_sigma(1.0)
                    };
                    out.push((spec, Some(rule.to_string())));
                }
            }
        }
    }
    out
}

/// Runs the sweep of `table`. Rows appear in sweep order.
pub fn reproduce(table: Table, scale: Scale, seed: u64) -> Result<RiskReport> {
    let mut report = RiskReport::default();
    for (spec, label) in specs(table, scale, seed) {
        let mut part = run_experiment(&spec)?;
        if let Some(label) = label {
            part.relabel("a_rule", &label);
        }
        report.extend(part);
    }
    Ok(report)
}

pub fn reproduce_to_file(table: Table, scale: Scale, seed: u64, out: impl AsRef<Path>) -> Result<RiskReport> {
    let report = reproduce(table, scale, seed)?;
    write_report(&report, out)?;
    Ok(report)
}
