use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{empirical_risk, BayesClassifier, PlugInClassifier};
use crate::error::{invalid, Result};
use crate::estimate::fit_all;
use crate::models::{DiffusionModel, ModelId};
use crate::simulate::sample_dataset;

use super::config::ExperimentSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassifierKind {
    #[serde(rename = "plugin")]
    PlugIn,
    #[serde(rename = "bayes")]
    Bayes,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::PlugIn => "plugin",
            ClassifierKind::Bayes => "bayes",
        })
    }
}

/// Aggregated risk of one classifier over the successful repetitions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiskRow {
    pub param_name: String,
    pub param: String,
    /// Training size for plug-in experiments, test size for Bayes-only ones.
    pub n_paths: usize,
    pub n: usize,
    pub classifier: ClassifierKind,
    pub mean_risk: f64,
    pub std_risk: f64,
    pub reps: usize,
    pub runtime_secs: f64,
    pub risks: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepFailure {
    pub param_name: String,
    pub param: String,
    pub n_paths: usize,
    pub n: usize,
    pub rep: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RiskReport {
    pub rows: Vec<RiskRow>,
    pub failures: Vec<RepFailure>,
}

impl RiskReport {
    pub fn extend(&mut self, other: RiskReport) {
        self.rows.extend(other.rows);
        self.failures.extend(other.failures);
    }

    pub fn row(&self, param: &str, n_paths: usize, classifier: ClassifierKind) -> Option<&RiskRow> {
        self.rows
            .iter()
            .find(|r| r.param == param && r.n_paths == n_paths && r.classifier == classifier)
    }

    /// Renames the parameter column of every row and failure.
    pub fn relabel(&mut self, name: &str, value: &str) {
        for r in &mut self.rows {
            r.param_name = name.to_string();
            r.param = value.to_string();
        }
        for f in &mut self.failures {
            f.param_name = name.to_string();
            f.param = value.to_string();
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for repetition `rep` and purpose `tag` (0 train, 1 test).
pub fn derive_seed(seed: u64, rep: usize, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(((rep as u64) << 8) | tag))
}

fn param_label(id: ModelId) -> (&'static str, String) {
    match id {
        ModelId::Cosine { theta } => ("theta", theta.to_string()),
        ModelId::OrnsteinUhlenbeck { sigma } => ("sigma", sigma.to_string()),
    }
}

#[derive(Default)]
struct RepOutcome {
    plug_in: Option<(f64, f64)>,
    bayes: Option<(f64, f64)>,
}

fn run_rep(spec: &ExperimentSpec, model: &DiffusionModel, bayes: Option<&BayesClassifier>, rep: usize) -> Result<RepOutcome> {
    let test = sample_dataset(model, spec.n_test, spec.n, spec.refinement, derive_seed(spec.seed, rep, 1))?;
    let mut out = RepOutcome::default();
    if spec.runs(ClassifierKind::PlugIn) {
        let start = Instant::now();
        let train = sample_dataset(model, spec.n_train, spec.n, spec.refinement, derive_seed(spec.seed, rep, 0))?;
        let clf = PlugInClassifier::new(fit_all(&train, &spec.estimator)?);
        let risk = empirical_risk(&clf, &test)?;
        out.plug_in = Some((risk, start.elapsed().as_secs_f64()));
    }
    if let Some(clf) = bayes {
        let start = Instant::now();
        let risk = empirical_risk(clf, &test)?;
        out.bayes = Some((risk, start.elapsed().as_secs_f64()));
    }
    Ok(out)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Runs `spec` on its registered model.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RiskReport> {
    let model = spec.model.build()?;
    run_experiment_with_model(spec, &model)
}

/// Runs `spec` with an explicit generative model; `spec.model` only labels
/// the report. Repetitions run in parallel and failed ones become failure
/// entries that do not enter the means.
pub fn run_experiment_with_model(spec: &ExperimentSpec, model: &DiffusionModel) -> Result<RiskReport> {
    spec.validate()?;
    let bayes = if spec.runs(ClassifierKind::Bayes) {
        Some(BayesClassifier::new(model.clone())?)
    } else {
        None
    };
    let outcomes: Vec<Result<RepOutcome>> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| run_rep(spec, model, bayes.as_ref(), rep))
        .collect();

    let (name, param) = param_label(spec.model);
    let n_paths = if spec.runs(ClassifierKind::PlugIn) {
        spec.n_train
    } else {
        spec.n_test
    };
    let mut report = RiskReport::default();
    let mut plug_in = Vec::new();
    let mut bayes_risks = Vec::new();
    let (mut plug_time, mut bayes_time) = (0.0, 0.0);
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => {
                if let Some((r, t)) = o.plug_in {
                    plug_in.push(r);
                    plug_time += t;
                }
                if let Some((r, t)) = o.bayes {
                    bayes_risks.push(r);
                    bayes_time += t;
                }
            }
            Err(e) => report.failures.push(RepFailure {
                param_name: name.to_string(),
                param: param.clone(),
                n_paths,
                n: spec.n,
                rep,
                message: e.to_string(),
            }),
        }
    }
    for (kind, risks, runtime) in [
        (ClassifierKind::PlugIn, plug_in, plug_time),
        (ClassifierKind::Bayes, bayes_risks, bayes_time),
    ] {
        if risks.is_empty() {
            continue;
        }
        let (mean_risk, std_risk) = mean_std(&risks);
        report.rows.push(RiskRow {
            param_name: name.to_string(),
            param: param.clone(),
            n_paths,
            n: spec.n,
            classifier: kind,
            mean_risk,
            std_risk,
            reps: risks.len(),
            runtime_secs: runtime,
            risks,
        });
    }
    Ok(report)
}

/// CSV with header `<param>,N,n,classifier,mean_risk,std_risk,reps`. The
/// first column is named after the swept parameter when all rows share it.
/// Failed repetitions appear as `failed` rows carrying the failure count.
/// Runtimes are left out so that equal seeds give equal bytes.
pub fn write_report_to<W: Write>(report: &RiskReport, mut out: W) -> Result<()> {
    let first = report
        .rows
        .first()
        .map(|r| r.param_name.as_str())
        .or_else(|| report.failures.first().map(|f| f.param_name.as_str()))
        .unwrap_or("param");
    let shared = report.rows.iter().all(|r| r.param_name == first) && report.failures.iter().all(|f| f.param_name == first);
    let header = if shared { first } else { "param" };
    writeln!(out, "{header},N,n,classifier,mean_risk,std_risk,reps")?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{}",
            r.param, r.n_paths, r.n, r.classifier, r.mean_risk, r.std_risk, r.reps
        )?;
    }
    let mut seen: Vec<(&str, usize, usize, usize)> = Vec::new();
    for f in &report.failures {
        match seen.iter_mut().find(|s| s.0 == f.param && s.1 == f.n_paths && s.2 == f.n) {
            Some(s) => s.3 += 1,
            None => seen.push((&f.param, f.n_paths, f.n, 1)),
        }
    }
    for (param, n_paths, n, count) in seen {
        writeln!(out, "{param},{n_paths},{n},failed,,,{count}")?;
    }
    Ok(())
}

pub fn write_report(report: &RiskReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if path.as_os_str().is_empty() {
        return invalid("empty output path");
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut buf = Vec::new();
    write_report_to(report, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}
