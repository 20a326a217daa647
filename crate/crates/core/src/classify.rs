//! Girsanov statistics, softmax posteriors, and the plug-in / Bayes rules.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::estimate::FittedModel;
use crate::models::DiffusionModel;
use crate::simulate::PathDataset;

/// Anything that maps an observed path to a label in `1..=K`.
pub trait PathClassifier: Sync {
    fn k_classes(&self) -> usize;
    fn classify(&self, path: &[f64]) -> Result<usize>;
}

fn check_path(path: &[f64]) -> Result<f64> {
    if path.len() < 2 {
        return invalid(format!("a path needs at least two points, got {}", path.len()));
    }
    Ok(1.0 / (path.len() - 1) as f64)
}

/// Discretized log-likelihood statistics
/// `F_i = sum_k (b_i/σ²)(X_k) (X_{k+1} - X_k) - (Δ/2) (b_i²/σ²)(X_k)`
/// for every drift, sharing the `σ²` evaluations.
pub fn f_statistics<D>(path: &[f64], drifts: &[D], sigma_sq: impl Fn(f64) -> f64) -> Result<Vec<f64>>
where
    D: Fn(f64) -> f64,
{
    let delta = check_path(path)?;
    let mut stats = vec![0.0; drifts.len()];
    for w in path.windows(2) {
        let (x, dx) = (w[0], w[1] - w[0]);
        let s2 = sigma_sq(x);
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(Error::NumericFailure(format!("diffusion estimate {s2} at x = {x} is not positive")));
        }
        for (f, b) in stats.iter_mut().zip(drifts) {
            let bx = b(x);
            *f += bx / s2 * dx - 0.5 * delta * bx * bx / s2;
        }
    }
    Ok(stats)
}

pub fn f_statistic(path: &[f64], drift: impl Fn(f64) -> f64, sigma_sq: impl Fn(f64) -> f64) -> Result<f64> {
    Ok(f_statistics(path, &[drift], sigma_sq)?[0])
}

/// `π_i = p_i e^{F_i} / sum_k p_k e^{F_k}`, evaluated after subtracting `max F`.
pub fn posterior_probs(weights: &[f64], stats: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != stats.len() {
        return invalid(format!("{} weights for {} statistics", weights.len(), stats.len()));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return invalid("weights must be finite and nonnegative");
    }
    if weights.iter().all(|&w| w == 0.0) {
        return invalid("all weights are zero");
    }
    let m = weights
        .iter()
        .zip(stats)
        .filter(|(w, _)| **w > 0.0)
        .map(|(_, f)| *f)
        .fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::NumericFailure(format!("non-finite statistic {m}")));
    }
    let unnorm: Vec<f64> = weights
        .iter()
        .zip(stats)
        .map(|(&w, &f)| if w > 0.0 { w * (f - m).exp() } else { 0.0 })
        .collect();
    let total: f64 = unnorm.iter().sum();
    Ok(unnorm.into_iter().map(|u| u / total).collect())
}

/// Index of the largest entry; ties go to the first.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Classifier built from estimated drifts, diffusion, and weights.
#[derive(Clone, Debug)]
pub struct PlugInClassifier {
    fitted: FittedModel,
    degenerate_fallback: bool,
}

impl PlugInClassifier {
    pub fn new(fitted: FittedModel) -> Self {
        let degenerate_fallback = fitted.degenerate;
        Self {
            fitted,
            degenerate_fallback,
        }
    }

    pub fn fitted(&self) -> &FittedModel {
        &self.fitted
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate_fallback
    }

    pub fn statistics(&self, path: &[f64]) -> Result<Vec<f64>> {
        let drifts: Vec<_> = self.fitted.drifts.iter().map(|d| move |x| d.eval(x)).collect();
        f_statistics(path, &drifts, |x| self.fitted.sigma_sq.eval(x))
    }

    pub fn posterior(&self, path: &[f64]) -> Result<Vec<f64>> {
        posterior_probs(&self.fitted.weights, &self.statistics(path)?)
    }
}

impl PathClassifier for PlugInClassifier {
    fn k_classes(&self) -> usize {
        self.fitted.k_classes()
    }

    fn classify(&self, path: &[f64]) -> Result<usize> {
        if self.degenerate_fallback {
            check_path(path)?;
            return Ok(1);
        }
        Ok(argmax_first(&self.posterior(path)?) + 1)
    }
}

/// The same rule evaluated with the true model parameters.
#[derive(Clone, Debug)]
pub struct BayesClassifier {
    model: DiffusionModel,
}

impl BayesClassifier {
    pub fn new(model: DiffusionModel) -> Result<Self> {
        if model.min_weight() <= 0.0 {
            return invalid("the Bayes classifier needs strictly positive class weights");
        }
        Ok(Self { model })
    }

    pub fn model(&self) -> &DiffusionModel {
        &self.model
    }

    pub fn statistics(&self, path: &[f64]) -> Result<Vec<f64>> {
        let k = self.model.k_classes();
        let drifts: Vec<_> = (1..=k)
            .map(|c| self.model.drift_fn(c).expect("class in range").as_ref())
            .collect();
        f_statistics(path, &drifts, |x| self.model.sigma(x).powi(2))
    }

    pub fn posterior(&self, path: &[f64]) -> Result<Vec<f64>> {
        posterior_probs(self.model.weights(), &self.statistics(path)?)
    }
}

impl PathClassifier for BayesClassifier {
    fn k_classes(&self) -> usize {
        self.model.k_classes()
    }

    fn classify(&self, path: &[f64]) -> Result<usize> {
        Ok(argmax_first(&self.posterior(path)?) + 1)
    }
}

pub fn classify<C: PathClassifier + ?Sized>(classifier: &C, path: &[f64]) -> Result<usize> {
    classifier.classify(path)
}

/// Predicted labels for every record, in order.
pub fn predict_all<C: PathClassifier + ?Sized>(classifier: &C, test: &PathDataset) -> Result<Vec<usize>> {
    test.records()
        .par_iter()
        .map(|r| classifier.classify(&r.values))
        .collect()
}

/// Fraction of misclassified records.
pub fn empirical_risk<C: PathClassifier + ?Sized>(classifier: &C, test: &PathDataset) -> Result<f64> {
    if test.is_empty() {
        return invalid("empirical risk needs a nonempty test set");
    }
    let predicted = predict_all(classifier, test)?;
    let errors = predicted
        .iter()
        .zip(test.records())
        .filter(|(p, r)| **p != r.label)
        .count();
    Ok(errors as f64 / test.len() as f64)
}

/// Plug-in risk minus Bayes risk on the same test set.
pub fn excess_risk<P, B>(plug_in: &P, bayes: &B, test: &PathDataset) -> Result<f64>
where
    P: PathClassifier + ?Sized,
    B: PathClassifier + ?Sized,
{
    Ok(empirical_risk(plug_in, test)? - empirical_risk(bayes, test)?)
}
