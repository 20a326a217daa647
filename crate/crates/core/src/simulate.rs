//! Labeled path generation and the dataset text format.
//!
//! Paths are simulated by Euler-Maruyama on a grid of step `1/(n r)` and
//! subsampled every `r` steps. Record `j` of a dataset draws its label and
//! its Gaussian increments from its own ChaCha8 stream: the generator is
//! seeded with the dataset seed and switched to stream `j`, so the output
//! does not depend on how records are scheduled across threads. Standard
//! normals come from `rand_distr::StandardNormal` (ziggurat method).

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::models::{DiffusionModel, ModelId};

pub const DATASET_MAGIC: &str = "sdeclass-v1";
pub const DEFAULT_REFINEMENT: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct PathSample {
    /// Class label in `1..=K`.
    pub label: usize,
    /// `X` at times `k/n`, `k = 0..=n`.
    pub values: Vec<f64>,
}

impl PathSample {
    pub fn n_steps(&self) -> usize {
        self.values.len().saturating_sub(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathDataset {
    n: usize,
    k_classes: usize,
    records: Vec<PathSample>,
    model_id: Option<ModelId>,
    seed: u64,
}

impl PathDataset {
    pub fn new(
        n: usize,
        k_classes: usize,
        records: Vec<PathSample>,
        model_id: Option<ModelId>,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 {
            return invalid("paths need at least one step (n >= 1)");
        }
        if k_classes == 0 {
            return invalid("class count must be positive");
        }
        for (j, r) in records.iter().enumerate() {
            check_record(r, n, k_classes).map_err(|msg| Error::InvalidArgument(format!("record {j}: {msg}")))?;
        }
        Ok(Self {
            n,
            k_classes,
            records,
            model_id,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn k_classes(&self) -> usize {
        self.k_classes
    }

    pub fn records(&self) -> &[PathSample] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn model_id(&self) -> Option<ModelId> {
        self.model_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Records labeled `class`.
    pub fn class_records(&self, class: usize) -> impl Iterator<Item = &PathSample> + '_ {
        self.records.iter().filter(move |r| r.label == class)
    }

    pub fn class_count(&self, class: usize) -> usize {
        self.class_records(class).count()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k_classes];
        for r in &self.records {
            counts[r.label - 1] += 1;
        }
        counts
    }
}

fn check_record(r: &PathSample, n: usize, k: usize) -> std::result::Result<(), String> {
    if r.label == 0 || r.label > k {
        return Err(format!("label {} outside 1..={k}", r.label));
    }
    if r.values.len() != n + 1 {
        return Err(format!("{} values, expected {}", r.values.len(), n + 1));
    }
    if r.values.iter().any(|v| !v.is_finite()) {
        return Err("non-finite value".into());
    }
    if r.values[0] != 0.0 {
        return Err(format!("path starts at {} instead of 0", r.values[0]));
    }
    Ok(())
}

/// Generator for record `index` of a dataset seeded with `seed`.
pub fn record_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One Euler-Maruyama path of class `label`, observed at `n + 1` grid points.
pub fn simulate_path<R: Rng + ?Sized>(
    model: &DiffusionModel,
    label: usize,
    n: usize,
    refinement: usize,
    rng: &mut R,
) -> Result<PathSample> {
    if n == 0 || refinement == 0 {
        return invalid("n and refinement must be at least 1");
    }
    let drift = model.drift_fn(label)?;
    let sigma = model.sigma_fn();
    let h = 1.0 / (n * refinement) as f64;
    let sqrt_h = h.sqrt();
    let mut values = Vec::with_capacity(n + 1);
    let mut x = 0.0_f64;
    values.push(x);
    for _ in 0..n {
        for _ in 0..refinement {
            let xi: f64 = rng.sample(StandardNormal);
            x += drift(x) * h + sigma(x) * sqrt_h * xi;
        }
        values.push(x);
    }
    if !x.is_finite() {
        return Err(Error::NumericFailure(format!("simulated path of class {label} diverged")));
    }
    Ok(PathSample { label, values })
}

fn draw_label<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        cumulative += w;
        if w > 0.0 && u < cumulative {
            return i + 1;
        }
    }
    // Rounding left u above the last cumulative sum.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0) + 1
}

/// `paths` labeled paths with labels drawn from the model weights.
pub fn sample_dataset(
    model: &DiffusionModel,
    paths: usize,
    n: usize,
    refinement: usize,
    seed: u64,
) -> Result<PathDataset> {
    if n == 0 || refinement == 0 {
        return invalid("n and refinement must be at least 1");
    }
    let records = (0..paths)
        .into_par_iter()
        .map(|j| {
            let mut rng = record_rng(seed, j as u64);
            let label = draw_label(model.weights(), &mut rng);
            simulate_path(model, label, n, refinement, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    PathDataset::new(n, model.k_classes(), records, model.id(), seed)
}

fn header_line(ds: &PathDataset) -> String {
    let model = ds.model_id.map_or_else(|| "none".to_string(), |m| m.to_string());
    format!(
        "{DATASET_MAGIC},n={},classes={},model={model},seed={}",
        ds.n, ds.k_classes, ds.seed
    )
}

pub fn write_dataset_to<W: Write>(ds: &PathDataset, mut out: W) -> Result<()> {
    writeln!(out, "{}", header_line(ds))?;
    let mut line = String::new();
    for r in &ds.records {
        line.clear();
        write!(line, "{}", r.label).unwrap();
        for v in &r.values {
            write!(line, ",{v:.16e}").unwrap();
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_dataset(ds: &PathDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    write_dataset_to(ds, std::io::BufWriter::new(file))
}

fn parse_err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, msg: msg.into() })
}

fn header_field<'a>(field: Option<&'a str>, key: &str) -> Result<&'a str> {
    let field = field.ok_or_else(|| Error::Parse {
        line: 1,
        msg: format!("header is missing `{key}`"),
    })?;
    field.strip_prefix(key).and_then(|f| f.strip_prefix('=')).ok_or_else(|| Error::Parse {
        line: 1,
        msg: format!("expected `{key}=...`, found `{field}`"),
    })
}

pub fn read_dataset_from<R: Read>(input: R) -> Result<PathDataset> {
    let mut lines = BufReader::new(input).lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return parse_err(1, "empty file"),
    };
    let mut fields = header.trim_end().split(',');
    if fields.next() != Some(DATASET_MAGIC) {
        return parse_err(1, format!("header must start with `{DATASET_MAGIC}`"));
    }
    let n: usize = header_field(fields.next(), "n")?
        .parse()
        .or_else(|_| parse_err(1, "n is not an integer"))?;
    let k: usize = header_field(fields.next(), "classes")?
        .parse()
        .or_else(|_| parse_err(1, "classes is not an integer"))?;
    let model = match header_field(fields.next(), "model")? {
        "none" => None,
        id => Some(id.parse::<ModelId>().or_else(|e| parse_err(1, e.to_string()))?),
    };
    let seed: u64 = header_field(fields.next(), "seed")?
        .parse()
        .or_else(|_| parse_err(1, "seed is not an unsigned integer"))?;
    if fields.next().is_some() {
        return parse_err(1, "unexpected trailing header fields");
    }
    if n == 0 || k == 0 {
        return parse_err(1, "n and classes must be positive");
    }

    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let label: usize = parts
            .next()
            .unwrap_or("")
            .trim()
            .parse()
            .or_else(|_| parse_err(lineno, "label is not a positive integer"))?;
        let values = parts
            .map(|p| p.trim().parse::<f64>().or_else(|_| parse_err(lineno, format!("bad value `{p}`"))))
            .collect::<Result<Vec<_>>>()?;
        let record = PathSample { label, values };
        if let Err(msg) = check_record(&record, n, k) {
            return parse_err(lineno, msg);
        }
        records.push(record);
    }
    PathDataset::new(n, k, records, model, seed)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<PathDataset> {
    read_dataset_from(fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_cosine_model, make_ou_model, ScalarFn};
    use std::sync::Arc;

    fn zero_model() -> DiffusionModel {
        let zero: ScalarFn = Arc::new(|_| 0.0);
        DiffusionModel::new(vec![zero.clone(), zero.clone()], zero, vec![0.5, 0.5], 0.0).unwrap()
    }

    #[test]
    fn degenerate_dynamics_stay_at_zero() {
        let mut rng = record_rng(3, 0);
        let p = simulate_path(&zero_model(), 2, 50, 4, &mut rng).unwrap();
        assert_eq!(p.values, vec![0.0; 51]);
    }

    #[test]
    fn paths_start_at_zero() {
        let m = make_cosine_model(2.5).unwrap();
        for seed in 0..5 {
            let p = simulate_path(&m, 1 + seed as usize % 3, 30, 3, &mut record_rng(seed, 0)).unwrap();
            assert_eq!(p.values[0], 0.0);
            assert_eq!(p.values.len(), 31);
        }
    }

    #[test]
    fn ou_endpoint_mean_matches_exact_moments() {
        // Class 3 of ou(1) is dX = -X dt + dW, X_1 ~ N(0, (1 - e^{-2})/2).
        let m = make_ou_model(1.0).unwrap();
        let reps = 10_000;
        let ends: Vec<f64> = (0..reps)
            .map(|j| {
                let mut rng = record_rng(11, j);
                *simulate_path(&m, 3, 100, 5, &mut rng).unwrap().values.last().unwrap()
            })
            .collect();
        let mean = ends.iter().sum::<f64>() / reps as f64;
        let var = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!(mean.abs() <= 3.0 * (var / reps as f64).sqrt(), "mean {mean}");
        let emp_var = ends.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        assert!((emp_var - var).abs() < 0.05 * var, "variance {emp_var} vs {var}");
    }

    #[test]
    fn point_mass_weights() {
        let m = make_ou_model(1.0).unwrap().with_weights(vec![1.0, 0.0, 0.0]).unwrap();
        let ds = sample_dataset(&m, 200, 5, 1, 9).unwrap();
        assert!(ds.records().iter().all(|r| r.label == 1));
    }

    #[test]
    fn uniform_class_frequencies() {
        let m = make_ou_model(1.0).unwrap();
        let ds = sample_dataset(&m, 3000, 2, 1, 21).unwrap();
        for c in ds.class_counts() {
            let freq = c as f64 / 3000.0;
            assert!((freq - 1.0 / 3.0).abs() < 0.03, "frequency {freq}");
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let m = make_cosine_model(1.5).unwrap();
        let a = sample_dataset(&m, 50, 20, 3, 77).unwrap();
        let b = sample_dataset(&m, 50, 20, 3, 77).unwrap();
        assert_eq!(a, b);
        let c = sample_dataset(&m, 50, 20, 3, 78).unwrap();
        assert_ne!(a, c);
        // A prefix of a larger dataset is the smaller dataset.
        let big = sample_dataset(&m, 80, 20, 3, 77).unwrap();
        assert_eq!(&big.records()[..50], a.records());
    }

    #[test]
    fn increment_variance_recovers_sigma() {
        let sigma = 0.7;
        let m = make_ou_model(sigma).unwrap().with_weights(vec![0.0, 0.0, 1.0]).unwrap();
        let n = 500;
        let ds = sample_dataset(&m, 2000, n, 2, 5).unwrap();
        let incs: Vec<f64> = ds
            .records()
            .iter()
            .flat_map(|r| r.values.windows(2).map(|w| w[1] - w[0]))
            .collect();
        let mean = incs.iter().sum::<f64>() / incs.len() as f64;
        let var = incs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (incs.len() - 1) as f64;
        let ratio = var * n as f64 / (sigma * sigma);
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn refinement_gap_shrinks_with_n() {
        // Same Brownian path at two resolutions is not available, so compare
        // endpoint means of r = 1 and r = 20 on class 2 of a cosine model.
        let m = make_cosine_model(4.0).unwrap().with_weights(vec![0.0, 1.0, 0.0]).unwrap();
        let gap = |n: usize| {
            let mean = |r: usize| {
                let ds = sample_dataset(&m, 4000, n, r, 101).unwrap();
                ds.records().iter().map(|p| *p.values.last().unwrap()).sum::<f64>() / 4000.0
            };
            (mean(1) - mean(20)).abs()
        };
        let coarse = gap(2);
        let fine = gap(50);
        assert!(fine < coarse, "gap at n=50 {fine} not below gap at n=2 {coarse}");
    }

    fn round_trip(ds: &PathDataset) -> (String, PathDataset) {
        let mut buf = Vec::new();
        write_dataset_to(ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back = read_dataset_from(text.as_bytes()).unwrap();
        (text, back)
    }

    #[test]
    fn empty_dataset_round_trips() {
        let ds = PathDataset::new(4, 3, vec![], Some(ModelId::Cosine { theta: 0.5 }), 12).unwrap();
        let (text, back) = round_trip(&ds);
        assert_eq!(text, "sdeclass-v1,n=4,classes=3,model=cosine:0.5,seed=12\n");
        assert_eq!(back, ds);
    }

    #[test]
    fn single_path_row_layout() {
        let rec = PathSample {
            label: 2,
            values: vec![0.0, 0.1, -1.0 / 3.0],
        };
        let ds = PathDataset::new(2, 3, vec![rec], None, u64::MAX).unwrap();
        let (text, back) = round_trip(&ds);
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows[0], format!("sdeclass-v1,n=2,classes=3,model=none,seed={}", u64::MAX));
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].split(',').count(), 4);
        assert_eq!(back, ds);
    }

    #[test]
    fn simulated_dataset_round_trips_exactly() {
        let m = make_cosine_model(4.0).unwrap();
        let ds = sample_dataset(&m, 25, 40, 2, 3).unwrap();
        let (_, back) = round_trip(&ds);
        assert_eq!(back, ds);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let bad_label = "sdeclass-v1,n=2,classes=3,model=none,seed=1\n1,0,1,2\n0,0,1,2\n";
        match read_dataset_from(bad_label.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let ragged = "sdeclass-v1,n=2,classes=3,model=none,seed=1\n1,0,1\n";
        assert!(matches!(read_dataset_from(ragged.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let header = "sdeclass-v2,n=2,classes=3,model=none,seed=1\n";
        assert!(matches!(read_dataset_from(header.as_bytes()), Err(Error::Parse { line: 1, .. })));
        let missing = "sdeclass-v1,n=2,classes=3,seed=1\n";
        assert!(matches!(read_dataset_from(missing.as_bytes()), Err(Error::Parse { line: 1, .. })));
        let garbage = "sdeclass-v1,n=2,classes=3,model=none,seed=1\n1,0,x,2\n";
        assert!(matches!(read_dataset_from(garbage.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }
}
