//! Generative mixture models: `K` class drifts, one shared diffusion
//! coefficient, and class weights.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Registered model families, written `cosine:<theta>` and `ou:<sigma>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelId {
    Cosine { theta: f64 },
    OrnsteinUhlenbeck { sigma: f64 },
}

/// Separation parameters tabulated for the cosine family:
/// `{1/2, 3/4} ∪ {(4 + a)/4 : a = 1..12}`.
pub fn cosine_theta_grid() -> Vec<f64> {
    let mut grid = vec![0.5, 0.75];
    grid.extend((1..=12).map(|a| (4 + a) as f64 / 4.0));
    grid
}

impl ModelId {
    pub fn param(&self) -> f64 {
        match *self {
            ModelId::Cosine { theta } => theta,
            ModelId::OrnsteinUhlenbeck { sigma } => sigma,
        }
    }

    /// Whether the parameter lies on the tabulated grid of its family.
    pub fn is_tabulated(&self) -> bool {
        match *self {
            ModelId::Cosine { theta } => cosine_theta_grid().contains(&theta),
            ModelId::OrnsteinUhlenbeck { sigma } => [0.5, 1.0, 1.5].contains(&sigma),
        }
    }

    pub fn build(&self) -> Result<DiffusionModel> {
        match *self {
            ModelId::Cosine { theta } => make_cosine_model(theta),
            ModelId::OrnsteinUhlenbeck { sigma } => make_ou_model(sigma),
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelId::Cosine { theta } => write!(f, "cosine:{theta}"),
            ModelId::OrnsteinUhlenbeck { sigma } => write!(f, "ou:{sigma}"),
        }
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (family, param) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("model id `{s}` is not <family>:<param>")))?;
        let value: f64 = param
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("model parameter `{param}` is not a number")))?;
        if !(value.is_finite() && value > 0.0) {
            return invalid(format!("model parameter must be positive, got {value}"));
        }
        match family.trim() {
            "cosine" => Ok(ModelId::Cosine { theta: value }),
            "ou" => Ok(ModelId::OrnsteinUhlenbeck { sigma: value }),
            other => invalid(format!("unknown model family `{other}`")),
        }
    }
}

impl TryFrom<String> for ModelId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelId> for String {
    fn from(id: ModelId) -> String {
        id.to_string()
    }
}

#[derive(Clone)]
pub struct DiffusionModel {
    drifts: Vec<ScalarFn>,
    diffusion: ScalarFn,
    weights: Vec<f64>,
    sigma_floor: f64,
    id: Option<ModelId>,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("k_classes", &self.drifts.len())
            .field("weights", &self.weights)
            .field("sigma_floor", &self.sigma_floor)
            .field("id", &self.id)
            .finish()
    }
}

fn check_weights(weights: &[f64], k: usize) -> Result<()> {
    if weights.len() != k {
        return invalid(format!("{} weights for {k} classes", weights.len()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return invalid("weights must be finite and nonnegative");
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return invalid(format!("weights sum to {total}, not 1"));
    }
    Ok(())
}

impl DiffusionModel {
    /// `sigma_floor` is the declared lower bound of the diffusion
    /// coefficient; zero is accepted only for degenerate test dynamics.
    pub fn new(drifts: Vec<ScalarFn>, diffusion: ScalarFn, weights: Vec<f64>, sigma_floor: f64) -> Result<Self> {
        if drifts.len() < 2 {
            return invalid("a mixture model needs at least two classes");
        }
        check_weights(&weights, drifts.len())?;
        if !(sigma_floor >= 0.0) {
            return invalid("diffusion floor must be nonnegative");
        }
        Ok(Self {
            drifts,
            diffusion,
            weights,
            sigma_floor,
            id: None,
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights, self.drifts.len())?;
        self.weights = weights;
        Ok(self)
    }

    pub fn k_classes(&self) -> usize {
        self.drifts.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sigma_floor(&self) -> f64 {
        self.sigma_floor
    }

    pub fn id(&self) -> Option<ModelId> {
        self.id
    }

    /// Drift of `class` (1-based).
    pub fn drift_fn(&self, class: usize) -> Result<&ScalarFn> {
        if class == 0 || class > self.drifts.len() {
            return invalid(format!("class {class} outside 1..={}", self.drifts.len()));
        }
        Ok(&self.drifts[class - 1])
    }

    pub fn drift(&self, class: usize, x: f64) -> Result<f64> {
        Ok(self.drift_fn(class)?(x))
    }

    pub fn sigma(&self, x: f64) -> f64 {
        (self.diffusion)(x)
    }

    pub fn sigma_fn(&self) -> &ScalarFn {
        &self.diffusion
    }
}

pub fn eval_drift(model: &DiffusionModel, class: usize, x: f64) -> Result<f64> {
    model.drift(class, x)
}

pub fn eval_sigma(model: &DiffusionModel, x: f64) -> f64 {
    model.sigma(x)
}

fn cosine_base(x: f64) -> f64 {
    let c = x.cos();
    0.25 + 0.75 * c * c
}

/// Three classes with drifts `b`, `θb`, `-θb`, `b(x) = 1/4 + (3/4)cos²x`,
/// and diffusion `0.1 + 0.9/√(1+x²)`.
pub fn make_cosine_model(theta: f64) -> Result<DiffusionModel> {
    if !(theta.is_finite() && theta > 0.0) {
        return invalid(format!("theta must be positive, got {theta}"));
    }
    let drifts: Vec<ScalarFn> = vec![
        Arc::new(cosine_base),
        Arc::new(move |x| theta * cosine_base(x)),
        Arc::new(move |x| -theta * cosine_base(x)),
    ];
    let diffusion: ScalarFn = Arc::new(|x: f64| 0.1 + 0.9 / (1.0 + x * x).sqrt());
    let mut model = DiffusionModel::new(drifts, diffusion, vec![1.0 / 3.0; 3], 0.1)?;
    model.id = Some(ModelId::Cosine { theta });
    Ok(model)
}

/// Three mean-reverting classes `1 - x`, `-1 - x`, `-x` with constant diffusion.
pub fn make_ou_model(sigma: f64) -> Result<DiffusionModel> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return invalid(format!("sigma must be positive, got {sigma}"));
    }
    let drifts: Vec<ScalarFn> = vec![
        Arc::new(|x: f64| 1.0 - x),
        Arc::new(|x: f64| -1.0 - x),
        Arc::new(|x: f64| -x),
    ];
    let mut model = DiffusionModel::new(drifts, Arc::new(move |_| sigma), vec![1.0 / 3.0; 3], sigma)?;
    model.id = Some(ModelId::OrnsteinUhlenbeck { sigma });
    Ok(model)
}
