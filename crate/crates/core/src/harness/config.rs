use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimate::EstimatorConfig;
use crate::models::ModelId;
use crate::simulate::DEFAULT_REFINEMENT;

use super::experiment::ClassifierKind;

/// Environment variable that replaces the `outputs` directory of a config.
pub const OUTPUT_DIR_ENV: &str = "SDECLASS_OUTPUT_DIR";

/// One Monte-Carlo experiment. Parsed from TOML:
///
/// ```toml
/// model = "cosine:2.5"
/// n_train = 1000
/// n_test = 1000
/// n = 100
/// reps = 20
/// seed = 1
///
/// [estimator]
/// mode = "general"
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub model: ModelId,
    /// Training paths per repetition.
    pub n_train: usize,
    /// Test paths per repetition.
    pub n_test: usize,
    /// Observation steps per path.
    pub n: usize,
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_refinement")]
    pub refinement: usize,
    #[serde(default = "default_classifiers")]
    pub classifiers: Vec<ClassifierKind>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
}

fn default_refinement() -> usize {
    DEFAULT_REFINEMENT
}

fn default_classifiers() -> Vec<ClassifierKind> {
    vec![ClassifierKind::PlugIn, ClassifierKind::Bayes]
}

fn default_outputs() -> PathBuf {
    PathBuf::from(".")
}

impl ExperimentSpec {
    pub fn new(model: ModelId, n_train: usize, n_test: usize, n: usize, reps: usize, seed: u64) -> Self {
        Self {
            model,
            n_train,
            n_test,
            n,
            reps,
            seed,
            refinement: DEFAULT_REFINEMENT,
            classifiers: default_classifiers(),
            estimator: EstimatorConfig::default(),
            outputs: default_outputs(),
        }
    }

    pub fn runs(&self, kind: ClassifierKind) -> bool {
        self.classifiers.contains(&kind)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return invalid("reps must be at least 1");
        }
        if self.n_test == 0 {
            return invalid("n_test must be at least 1");
        }
        if self.n == 0 {
            return invalid("n must be at least 1");
        }
        if self.refinement == 0 {
            return invalid("refinement must be at least 1");
        }
        if self.classifiers.is_empty() {
            return invalid("no classifier selected");
        }
        if self.runs(ClassifierKind::PlugIn) {
            if self.n_train == 0 {
                return invalid("n_train must be at least 1 for the plug-in classifier");
            }
            self.estimator.validate()?;
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

pub fn load_experiment_spec(path: impl AsRef<Path>) -> Result<ExperimentSpec> {
    ExperimentSpec::from_toml(&std::fs::read_to_string(path)?)
}

/// Reads an estimator config. Accepts either a bare estimator table or an
/// experiment file, whose `[estimator]` section is used.
pub fn load_estimator_config(path: impl AsRef<Path>) -> Result<EstimatorConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut table: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let table = match table.remove("estimator") {
        Some(toml::Value::Table(inner)) => inner,
        Some(_) => return Err(Error::Config("`estimator` must be a table".into())),
        None => table,
    };
    let cfg: EstimatorConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// `configured`, unless the output-directory override is set.
pub fn output_dir(configured: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => configured.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::{HalfWidthRule, Mode};

    #[test]
    fn parses_minimal_spec_with_defaults() {
        let spec = ExperimentSpec::from_toml("model = \"ou:1\"\nn_train = 50\nn_test = 20\nn = 30\nreps = 2\n").unwrap();
        assert_eq!(spec.model, ModelId::OrnsteinUhlenbeck { sigma: 1.0 });
        assert_eq!(spec.refinement, DEFAULT_REFINEMENT);
        assert_eq!(spec.seed, 0);
        assert_eq!(spec.classifiers, default_classifiers());
        assert_eq!(spec.estimator, EstimatorConfig::default());
    }

    #[test]
    fn parses_estimator_section() {
        let text = "model = \"ou:1\"\nn_train = 50\nn_test = 20\nn = 30\nreps = 2\n\
                    [estimator]\nmode = \"known_sigma\"\nsigma_sq = 1.0\na_rule = \"sqrt_log_n\"\n";
        let spec = ExperimentSpec::from_toml(text).unwrap();
        assert_eq!(spec.estimator.mode, Mode::KnownSigma);
        assert_eq!(spec.estimator.a_rule, Some(HalfWidthRule::SqrtLogN));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(ExperimentSpec::from_toml("model = \"ou:1\"\nn_train = 5\nn_test = 0\nn = 3\nreps = 1\n").is_err());
        assert!(ExperimentSpec::from_toml("model = \"ou:1\"\nn_train = 5\nn_test = 5\nn = 3\nreps = 0\n").is_err());
        assert!(ExperimentSpec::from_toml("model = \"spline:1\"\nn_train = 5\nn_test = 5\nn = 3\nreps = 1\n").is_err());
        assert!(ExperimentSpec::from_toml("model = \"ou:1\"\nn_train = 5\nn_test = 5\nn = 3\nreps = 1\nbogus = 1\n").is_err());
    }

    #[test]
    fn estimator_config_from_either_layout() {
        let dir = tempfile::tempdir().unwrap();
        let bare = dir.path().join("bare.toml");
        std::fs::write(&bare, "degree = 2\nk_grid = [1, 2]\n").unwrap();
        let cfg = load_estimator_config(&bare).unwrap();
        assert_eq!(cfg.degree, 2);
        assert_eq!(cfg.k_grid, vec![1, 2]);

        let nested = dir.path().join("nested.toml");
        std::fs::write(&nested, "model = \"ou:1\"\n[estimator]\nkappa_drift = 0.5\n").unwrap();
        assert_eq!(load_estimator_config(&nested).unwrap().kappa_drift, 0.5);
    }
}
