//! Drift, diffusion and weight estimators.
//!
//! Drifts are regressions of the scaled increments `Z = (X_{k+1} - X_k)/Δ`
//! on the B-spline basis at `X_k`, one class at a time; the squared
//! diffusion regresses `U = (X_{k+1} - X_k)²/Δ` on the pooled data. Both are
//! solved over a coefficient ball and then thresholded (drift) or clamped
//! (diffusion). The number of knot intervals is picked from a grid by a
//! penalized least-squares contrast.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::regress::{solve_ball_constrained, NormalEquations};
use crate::simulate::PathDataset;
use crate::spline::{SplineBasis, SplineFn, Transform};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Drifts and diffusion unknown.
    #[default]
    General,
    /// Diffusion known and constant (`sigma_sq` in the config).
    KnownSigma,
}

/// Half-width `A` of the estimation interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum HalfWidthRule {
    /// `log N`
    LogN,
    /// `sqrt(log N)`
    SqrtLogN,
    /// `sqrt(3β/(2β+1) log N_i)`, per class.
    Theory,
    Fixed(f64),
}

impl fmt::Display for HalfWidthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HalfWidthRule::LogN => f.write_str("log_n"),
            HalfWidthRule::SqrtLogN => f.write_str("sqrt_log_n"),
            HalfWidthRule::Theory => f.write_str("theory"),
            HalfWidthRule::Fixed(a) => write!(f, "fixed:{a}"),
        }
    }
}

impl FromStr for HalfWidthRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "log_n" => Ok(Self::LogN),
            "sqrt_log_n" => Ok(Self::SqrtLogN),
            "theory" => Ok(Self::Theory),
            other => match other.strip_prefix("fixed:").map(|v| v.trim().parse::<f64>()) {
                Some(Ok(a)) if a.is_finite() && a > 0.0 => Ok(Self::Fixed(a)),
                _ => invalid(format!(
                    "half-width rule `{other}` is not log_n, sqrt_log_n, theory or fixed:<A>"
                )),
            },
        }
    }
}

impl TryFrom<String> for HalfWidthRule {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<HalfWidthRule> for String {
    fn from(r: HalfWidthRule) -> String {
        r.to_string()
    }
}

/// How the number of drift knot intervals is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum IntervalRule {
    /// Penalized contrast over the grid.
    #[default]
    Penalized,
    /// `K = max(1, round(c log^{-5/2}(N_i) N_i^{1/(2β+1)}))`, known-sigma mode only.
    Theory(f64),
}

impl fmt::Display for IntervalRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntervalRule::Penalized => f.write_str("penalized"),
            IntervalRule::Theory(c) => write!(f, "theory:{c}"),
        }
    }
}

impl FromStr for IntervalRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "penalized" => Ok(Self::Penalized),
            "theory" => Ok(Self::Theory(1.0)),
            other => match other.strip_prefix("theory:").map(|v| v.trim().parse::<f64>()) {
                Some(Ok(c)) if c.is_finite() && c > 0.0 => Ok(Self::Theory(c)),
                _ => invalid(format!("interval rule `{other}` is not penalized or theory:<scale>")),
            },
        }
    }
}

impl TryFrom<String> for IntervalRule {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<IntervalRule> for String {
    fn from(r: IntervalRule) -> String {
        r.to_string()
    }
}

/// Meaning of the coefficient-ball radius `R`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusNorm {
    /// `sum a² <= R`
    #[default]
    SumSq,
    /// `sqrt(sum a²) <= R`
    Euclidean,
}

/// Which paths enter the drift selection contrast.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftContrast {
    /// Class-`i` paths, normalized by `N_i n`.
    #[default]
    Class,
    /// All `N` paths, normalized by `N n`.
    AllPaths,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub mode: Mode,
    /// Hölder smoothness used by the known-sigma rules.
    pub beta: f64,
    /// Known squared diffusion in known-sigma mode.
    pub sigma_sq: f64,
    pub degree: usize,
    pub k_grid: Vec<usize>,
    pub kappa_drift: f64,
    pub kappa_sigma: f64,
    /// `None` selects `log_n` in general mode and `theory` in known-sigma mode.
    pub a_rule: Option<HalfWidthRule>,
    pub k_rule: IntervalRule,
    pub radius_norm: RadiusNorm,
    pub drift_contrast: DriftContrast,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            mode: Mode::General,
            beta: 1.0,
            sigma_sq: 1.0,
            degree: 3,
            k_grid: (0..=5).map(|q| 1 << q).collect(),
            kappa_drift: 0.1,
            kappa_sigma: 5.0,
            a_rule: None,
            k_rule: IntervalRule::Penalized,
            radius_norm: RadiusNorm::SumSq,
            drift_contrast: DriftContrast::Class,
        }
    }
}

impl EstimatorConfig {
    pub fn known_sigma(sigma_sq: f64) -> Self {
        Self {
            mode: Mode::KnownSigma,
            sigma_sq,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_grid.is_empty() || self.k_grid.contains(&0) {
            return invalid("k_grid must be a nonempty set of positive integers");
        }
        if self.degree == 0 {
            return invalid("degree must be at least 1");
        }
        if !(self.kappa_drift > 0.0 && self.kappa_sigma > 0.0) {
            return invalid("kappa values must be positive");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return invalid("beta must be positive");
        }
        if self.mode == Mode::KnownSigma && !(self.sigma_sq > 0.0 && self.sigma_sq.is_finite()) {
            return invalid("known sigma_sq must be positive");
        }
        if matches!(self.k_rule, IntervalRule::Theory(_)) && self.mode != Mode::KnownSigma {
            return invalid("the theory interval rule applies to known-sigma mode only");
        }
        Ok(())
    }

    pub fn half_width_rule(&self) -> HalfWidthRule {
        self.a_rule.unwrap_or(match self.mode {
            Mode::General => HalfWidthRule::LogN,
            Mode::KnownSigma => HalfWidthRule::Theory,
        })
    }

    /// `A` for a class with `class_paths` of `total_paths` training paths.
    pub fn half_width(&self, total_paths: usize, class_paths: usize) -> Result<f64> {
        let a = match self.half_width_rule() {
            HalfWidthRule::LogN => (total_paths as f64).ln(),
            HalfWidthRule::SqrtLogN => (total_paths as f64).ln().sqrt(),
            HalfWidthRule::Theory => {
                (3.0 * self.beta / (2.0 * self.beta + 1.0) * (class_paths as f64).ln()).sqrt()
            }
            HalfWidthRule::Fixed(a) => a,
        };
        if !(a.is_finite() && a > 0.0) {
            return invalid(format!(
                "half-width rule {} gives A = {a} for N = {total_paths}, N_i = {class_paths}",
                self.half_width_rule()
            ));
        }
        Ok(a)
    }

    fn ball(&self, r: f64) -> f64 {
        match self.radius_norm {
            RadiusNorm::SumSq => r,
            RadiusNorm::Euclidean => r * r,
        }
    }

    fn min_k(&self) -> usize {
        *self.k_grid.iter().min().expect("validated nonempty grid")
    }

    fn sorted_grid(&self) -> Vec<usize> {
        let mut g = self.k_grid.clone();
        g.sort_unstable();
        g.dedup();
        g
    }
}

/// Ball radius and threshold for a drift fit.
#[derive(Clone, Copy, Debug)]
struct DriftBounds {
    radius: f64,
    threshold: f64,
}

fn drift_bounds(cfg: &EstimatorConfig, total: usize, class_paths: usize, a: f64, k: usize) -> DriftBounds {
    let dim = (k + cfg.degree) as f64;
    match cfg.mode {
        Mode::General => {
            let ln = (total as f64).ln();
            DriftBounds {
                radius: cfg.ball(dim * ln.powi(3)),
                threshold: ln.powf(1.5),
            }
        }
        Mode::KnownSigma => {
            let ln = (class_paths as f64).ln();
            DriftBounds {
                radius: cfg.ball(dim * ln * a * a),
                threshold: a * ln.sqrt(),
            }
        }
    }
}

/// `(X_k, Z_k)` pairs of the selected paths.
fn drift_samples(ds: &PathDataset, class: Option<usize>) -> Vec<(f64, f64)> {
    let inv_delta = ds.n() as f64;
    ds.records()
        .iter()
        .filter(|r| class.is_none_or(|c| r.label == c))
        .flat_map(|r| r.values.windows(2).map(move |w| (w[0], (w[1] - w[0]) * inv_delta)))
        .collect()
}

/// `(X_k, U_k)` pairs of all paths.
fn diffusion_samples(ds: &PathDataset) -> Vec<(f64, f64)> {
    let inv_delta = ds.n() as f64;
    ds.records()
        .iter()
        .flat_map(|r| r.values.windows(2).map(move |w| (w[0], (w[1] - w[0]).powi(2) * inv_delta)))
        .collect()
}

fn fit_on_samples(basis: SplineBasis, samples: &[(f64, f64)], radius: f64, transform: Transform) -> Result<SplineFn> {
    let ne = NormalEquations::assemble(&basis, samples.iter().copied());
    let sol = solve_ball_constrained(&ne, radius)?;
    SplineFn::new(basis, sol.coeffs.as_slice().to_vec(), transform)
}

fn mean_sq_residual(f: &SplineFn, samples: &[(f64, f64)]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|&(x, y)| (f.eval(x) - y).powi(2)).sum::<f64>() / samples.len() as f64
}

fn require_paths(ds: &PathDataset, cfg: &EstimatorConfig) -> Result<()> {
    if ds.is_empty() {
        return invalid("training dataset is empty");
    }
    if cfg.mode == Mode::General && ds.len() < 3 {
        return invalid(format!("general mode needs N >= 3 paths, got {}", ds.len()));
    }
    Ok(())
}

fn check_class(ds: &PathDataset, class: usize) -> Result<()> {
    if class == 0 || class > ds.k_classes() {
        return invalid(format!("class {class} outside 1..={}", ds.k_classes()));
    }
    Ok(())
}

/// Empirical class frequencies.
pub fn estimate_weights(ds: &PathDataset) -> Result<Vec<f64>> {
    if ds.is_empty() {
        return invalid("cannot estimate weights from an empty dataset");
    }
    let total = ds.len() as f64;
    Ok(ds.class_counts().into_iter().map(|c| c as f64 / total).collect())
}

/// Thresholded drift estimator of `class` on `[-A, A]` with `K` intervals.
/// An empty class yields the zero function.
pub fn fit_drift_class(
    ds: &PathDataset,
    class: usize,
    half_width: f64,
    intervals: usize,
    cfg: &EstimatorConfig,
) -> Result<SplineFn> {
    check_class(ds, class)?;
    require_paths(ds, cfg)?;
    let basis = SplineBasis::new(half_width, intervals, cfg.degree)?;
    let class_paths = ds.class_count(class);
    let bounds = drift_bounds(cfg, ds.len(), class_paths, half_width, intervals);
    let transform = Transform::Threshold {
        bound: bounds.threshold.max(0.0),
    };
    if class_paths == 0 || bounds.radius <= 0.0 {
        return Ok(SplineFn::zero(basis, transform));
    }
    fit_on_samples(basis, &drift_samples(ds, Some(class)), bounds.radius, transform)
}

fn sigma_clamp(total: usize) -> Transform {
    let ln = (total as f64).ln();
    Transform::Clamp {
        lo: 1.0 / ln,
        hi: ln.powf(1.5),
    }
}

/// Clamped estimator of `sigma²` from the pooled dataset.
pub fn fit_sigma_sq(ds: &PathDataset, half_width: f64, intervals: usize, cfg: &EstimatorConfig) -> Result<SplineFn> {
    if ds.len() < 3 {
        return invalid(format!("diffusion estimation needs N >= 3 paths, got {}", ds.len()));
    }
    let basis = SplineBasis::new(half_width, intervals, cfg.degree)?;
    let radius = cfg.ball((intervals + cfg.degree) as f64 * (ds.len() as f64).ln().powi(3));
    fit_on_samples(basis, &diffusion_samples(ds), radius, sigma_clamp(ds.len()))
}

/// Outcome of a penalized dimension search.
#[derive(Clone, Debug)]
pub struct DimensionSelection {
    pub k_hat: usize,
    /// `(K, contrast + penalty)` for every grid point, ascending in `K`.
    pub criteria: Vec<(usize, f64)>,
    pub fit: SplineFn,
}

fn select_by_contrast(
    grid: &[usize],
    fit_k: impl Fn(usize) -> Result<SplineFn> + Sync,
    contrast: impl Fn(&SplineFn) -> f64 + Sync,
    penalty: impl Fn(usize) -> f64 + Sync,
) -> Result<DimensionSelection> {
    let fits = grid
        .par_iter()
        .map(|&k| {
            let f = fit_k(k)?;
            let crit = contrast(&f) + penalty(k);
            Ok((k, crit, f))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, (_, crit, _)) in fits.iter().enumerate() {
        // Strict comparison keeps the smallest K on ties.
        if *crit < fits[best].1 {
            best = i;
        }
    }
    let criteria = fits.iter().map(|(k, c, _)| (*k, *c)).collect();
    let (k_hat, _, fit) = fits.into_iter().nth(best).expect("nonempty grid");
    Ok(DimensionSelection { k_hat, criteria, fit })
}

/// Chooses `K` for the drift of `class`, with `pen(K) = κ (K+M) log³N / N`.
pub fn select_dimension_drift(
    ds: &PathDataset,
    class: usize,
    half_width: f64,
    cfg: &EstimatorConfig,
) -> Result<DimensionSelection> {
    cfg.validate()?;
    check_class(ds, class)?;
    require_paths(ds, cfg)?;
    let total = ds.len();
    let class_paths = ds.class_count(class);
    if class_paths == 0 {
        return invalid(format!("class {class} has no paths"));
    }
    let samples = drift_samples(ds, Some(class));
    let contrast_samples = match cfg.drift_contrast {
        DriftContrast::Class => None,
        DriftContrast::AllPaths => Some(drift_samples(ds, None)),
    };
    let ln3 = (total as f64).ln().powi(3);
    select_by_contrast(
        &cfg.sorted_grid(),
        |k| {
            let basis = SplineBasis::new(half_width, k, cfg.degree)?;
            let b = drift_bounds(cfg, total, class_paths, half_width, k);
            fit_on_samples(basis, &samples, b.radius, Transform::Threshold { bound: b.threshold })
        },
        |f| mean_sq_residual(f, contrast_samples.as_deref().unwrap_or(&samples)),
        |k| cfg.kappa_drift * (k + cfg.degree) as f64 * ln3 / total as f64,
    )
}

/// Chooses `K` for `sigma²`, with `pen(K) = κ (K+M) log³N / (N n)`.
pub fn select_dimension_sigma(ds: &PathDataset, half_width: f64, cfg: &EstimatorConfig) -> Result<DimensionSelection> {
    cfg.validate()?;
    if ds.len() < 3 {
        return invalid(format!("diffusion estimation needs N >= 3 paths, got {}", ds.len()));
    }
    let total = ds.len();
    let samples = diffusion_samples(ds);
    let ln3 = (total as f64).ln().powi(3);
    let nn = (total * ds.n()) as f64;
    select_by_contrast(
        &cfg.sorted_grid(),
        |k| {
            let basis = SplineBasis::new(half_width, k, cfg.degree)?;
            let radius = cfg.ball((k + cfg.degree) as f64 * ln3);
            fit_on_samples(basis, &samples, radius, sigma_clamp(total))
        },
        |f| mean_sq_residual(f, &samples),
        |k| cfg.kappa_sigma * (k + cfg.degree) as f64 * ln3 / nn,
    )
}

/// Squared diffusion used by a fitted classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaSqEstimate {
    Spline { spline: SplineFn },
    Constant { value: f64 },
}

impl SigmaSqEstimate {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            SigmaSqEstimate::Spline { spline } => spline.eval(x),
            SigmaSqEstimate::Constant { value } => *value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub weights: Vec<f64>,
    pub drifts: Vec<SplineFn>,
    pub sigma_sq: SigmaSqEstimate,
    /// Selected interval count per class.
    pub drift_k: Vec<usize>,
    pub drift_half_width: Vec<f64>,
    pub sigma_k: Option<usize>,
    pub sigma_half_width: Option<f64>,
    /// Labels with no training path; their drift is zero.
    pub empty_classes: Vec<usize>,
    /// Known-sigma mode with some class of at most one path: classify as 1.
    pub degenerate: bool,
    pub n_paths: usize,
    pub n: usize,
}

impl FittedModel {
    pub fn k_classes(&self) -> usize {
        self.drifts.len()
    }
}

fn deterministic_k(cfg: &EstimatorConfig, class_paths: usize, scale: f64) -> usize {
    let ni = class_paths as f64;
    let k = scale * ni.ln().powf(-2.5) * ni.powf(1.0 / (2.0 * cfg.beta + 1.0));
    (k.round() as usize).max(1)
}

/// Fits every class drift, the diffusion (general mode), and the weights.
pub fn fit_all(ds: &PathDataset, cfg: &EstimatorConfig) -> Result<FittedModel> {
    cfg.validate()?;
    require_paths(ds, cfg)?;
    let total = ds.len();
    let counts = ds.class_counts();

    let per_class = (1..=ds.k_classes())
        .into_par_iter()
        .map(|class| -> Result<(SplineFn, usize, f64)> {
            let ni = counts[class - 1];
            let usable = match cfg.mode {
                Mode::General => ni > 0,
                Mode::KnownSigma => ni > 1,
            };
            if !usable {
                let a = cfg.half_width(total, ni).unwrap_or(1.0);
                let basis = SplineBasis::new(a, cfg.min_k(), cfg.degree)?;
                let bound = drift_bounds(cfg, total, ni.max(1), a, cfg.min_k()).threshold;
                return Ok((SplineFn::zero(basis, Transform::Threshold { bound }), cfg.min_k(), a));
            }
            let a = cfg.half_width(total, ni)?;
            match cfg.k_rule {
                IntervalRule::Penalized => {
                    let sel = select_dimension_drift(ds, class, a, cfg)?;
                    Ok((sel.fit, sel.k_hat, a))
                }
                IntervalRule::Theory(scale) => {
                    let k = deterministic_k(cfg, ni, scale);
                    Ok((fit_drift_class(ds, class, a, k, cfg)?, k, a))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let empty_classes: Vec<usize> = (1..=ds.k_classes()).filter(|&c| counts[c - 1] == 0).collect();
    let degenerate = cfg.mode == Mode::KnownSigma && counts.iter().any(|&c| c <= 1);

    let (sigma_sq, sigma_k, sigma_half_width) = match cfg.mode {
        Mode::General => {
            let a = match cfg.half_width_rule() {
                HalfWidthRule::Theory => (total as f64).ln(),
                _ => cfg.half_width(total, total)?,
            };
            let sel = select_dimension_sigma(ds, a, cfg)?;
            (SigmaSqEstimate::Spline { spline: sel.fit }, Some(sel.k_hat), Some(a))
        }
        Mode::KnownSigma => (SigmaSqEstimate::Constant { value: cfg.sigma_sq }, None, None),
    };

    let mut drifts = Vec::with_capacity(per_class.len());
    let mut drift_k = Vec::with_capacity(per_class.len());
    let mut drift_half_width = Vec::with_capacity(per_class.len());
    for (f, k, a) in per_class {
        drifts.push(f);
        drift_k.push(k);
        drift_half_width.push(a);
    }
    Ok(FittedModel {
        weights: estimate_weights(ds)?,
        drifts,
        sigma_sq,
        drift_k,
        drift_half_width,
        sigma_k,
        sigma_half_width,
        empty_classes,
        degenerate,
        n_paths: total,
        n: ds.n(),
    })
}
