use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::classify::{predict_all, PlugInClassifier};
use crate::error::Result;
use crate::estimate::{fit_all, EstimatorConfig};
use crate::models::ModelId;
use crate::simulate::{read_dataset, sample_dataset, write_dataset, DEFAULT_REFINEMENT};

use super::config::{load_estimator_config, load_experiment_spec, output_dir};
use super::experiment::{run_experiment, write_report};
use super::persist::{load_model, save_model, ModelFile};
use super::reproduce::{reproduce_to_file, Scale, Table};

#[derive(Parser, Debug)]
#[command(name = "sdeclass", version, about = "Plug-in classification of diffusion paths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a labelled dataset from a registered model.
    Simulate {
        /// `cosine:<theta>` or `ou:<sigma>`.
        #[arg(long)]
        model: ModelId,
        /// Observation steps per path.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_REFINEMENT)]
        refinement: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit drifts, diffusion and weights on a dataset.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// TOML estimator settings, bare or under `[estimator]`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label every path of a dataset with a fitted model.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run a Monte-Carlo experiment described by a TOML file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Report path; defaults to `report.csv` in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate one of the risk tables.
    Reproduce {
        /// bayes_t2, plugin_t3, ou_t4 or ou_known_sigma_t5.
        #[arg(long)]
        table: Table,
        /// desk or full.
        #[arg(long, default_value = "desk")]
        scale: Scale,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(command: Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Simulate {
            model,
            n,
            paths,
            seed,
            refinement,
            out,
        } => {
            let ds = sample_dataset(&model.build()?, paths, n, refinement, seed)?;
            write_dataset(&ds, out)
        }
        Command::Fit { data, config, out } => {
            let ds = read_dataset(data)?;
            let cfg = match config {
                Some(path) => load_estimator_config(path)?,
                None => EstimatorConfig::default(),
            };
            let fitted = fit_all(&ds, &cfg)?;
            save_model(&ModelFile::new(cfg, fitted), out)
        }
        Command::Classify { model, data } => {
            let file = load_model(model)?;
            let ds = read_dataset(data)?;
            let clf = PlugInClassifier::new(file.model);
            let labels = predict_all(&clf, &ds)?;
            writeln!(stdout, "path,label,predicted")?;
            let mut errors = 0usize;
            for (j, (rec, &pred)) in ds.records().iter().zip(&labels).enumerate() {
                writeln!(stdout, "{j},{},{pred}", rec.label)?;
                errors += usize::from(rec.label != pred);
            }
            let risk = if ds.is_empty() {
                0.0
            } else {
                errors as f64 / ds.len() as f64
            };
            writeln!(stdout, "risk={risk:.6}")?;
            Ok(())
        }
        Command::Experiment { config, out } => {
            let spec = load_experiment_spec(config)?;
            let report = run_experiment(&spec)?;
            let path = out.unwrap_or_else(|| output_dir(&spec.outputs).join("report.csv"));
            write_report(&report, &path)?;
            for f in &report.failures {
                eprintln!("rep {} failed: {}", f.rep, f.message);
            }
            Ok(())
        }
        Command::Reproduce { table, scale, seed, out } => {
            let report = reproduce_to_file(table, scale, seed, out)?;
            for f in &report.failures {
                eprintln!("{}={} N={} rep {} failed: {}", f.param_name, f.param, f.n_paths, f.rep, f.message);
            }
            Ok(())
        }
    }
}

/// Entry point of the `sdeclass` binary. Returns 0 on success, 1 on a usage
/// error and 2 when the command itself fails.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli.command, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(cli_main(["sdeclass", "simulate", "--bogus"]), 1);
        assert_eq!(cli_main(["sdeclass"]), 1);
        assert_eq!(cli_main(["sdeclass", "reproduce", "--table", "t9", "--out", "x.csv"]), 1);
        assert_eq!(cli_main(["sdeclass", "--help"]), 0);
    }

    #[test]
    fn runtime_errors_exit_two() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("missing.csv");
        let out = dir.path().join("m.json");
        let code = cli_main([
            "sdeclass".as_ref(),
            "fit".as_ref(),
            "--data".as_ref(),
            missing.as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
        ]);
        assert_eq!(code, 2);
    }
}
