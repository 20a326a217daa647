//! Least squares over a coefficient ball, empirical norms, and Gram matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::simulate::PathDataset;
use crate::spline::SplineBasis;

const MAX_BISECTIONS: usize = 200;
const RADIUS_RTOL: f64 = 1e-10;

/// `min ||design a - targets||²` subject to `sum a² <= radius`.
#[derive(Clone, Debug)]
pub struct RegressionProblem {
    design: DMatrix<f64>,
    targets: DVector<f64>,
    radius: f64,
}

impl RegressionProblem {
    pub fn new(design: DMatrix<f64>, targets: DVector<f64>, radius: f64) -> Result<Self> {
        if design.nrows() != targets.len() {
            return invalid(format!(
                "design has {} rows but there are {} targets",
                design.nrows(),
                targets.len()
            ));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return invalid(format!("radius must be positive and finite, got {radius}"));
        }
        if design.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return invalid("design and targets must be finite");
        }
        Ok(Self {
            design,
            targets,
            radius,
        })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn normal_equations(&self) -> NormalEquations {
        NormalEquations {
            gram: self.design.tr_mul(&self.design),
            rhs: self.design.tr_mul(&self.targets),
        }
    }

    pub fn objective(&self, coeffs: &DVector<f64>) -> f64 {
        (&self.design * coeffs - &self.targets).norm_squared()
    }
}

/// `G = DᵀD` and `g = Dᵀy`, accumulated row by row.
#[derive(Clone, Debug)]
pub struct NormalEquations {
    pub gram: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl NormalEquations {
    pub fn zeros(dim: usize) -> Self {
        Self {
            gram: DMatrix::zeros(dim, dim),
            rhs: DVector::zeros(dim),
        }
    }

    /// Adds a row whose nonzero entries `values` start at column `first`.
    pub fn add_sparse_row(&mut self, first: usize, values: &[f64], target: f64) {
        for (p, &vp) in values.iter().enumerate() {
            self.rhs[first + p] += vp * target;
            for (q, &vq) in values.iter().enumerate().skip(p) {
                self.gram[(first + p, first + q)] += vp * vq;
            }
        }
    }

    /// Mirrors the upper triangle filled by [`add_sparse_row`](Self::add_sparse_row).
    pub fn symmetrize(&mut self) {
        let d = self.gram.nrows();
        for i in 0..d {
            for j in 0..i {
                self.gram[(i, j)] = self.gram[(j, i)];
            }
        }
    }

    /// Normal equations of the regression of `targets` on the basis evaluated at `points`.
    pub fn assemble(basis: &SplineBasis, samples: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut ne = Self::zeros(basis.dim());
        let mut local = vec![0.0; basis.degree() + 1];
        for (x, y) in samples {
            if let Some(first) = basis.eval_nonzero(x, &mut local) {
                ne.add_sparse_row(first, &local, y);
            }
        }
        ne.symmetrize();
        ne
    }
}

#[derive(Clone, Debug)]
pub struct BallSolution {
    pub coeffs: DVector<f64>,
    /// Ridge multiplier; zero when the constraint is inactive.
    pub lambda: f64,
    pub active: bool,
}

/// Solves the constrained problem from its normal equations.
///
/// The minimum-norm least-squares solution is returned when it lies inside
/// the ball. Otherwise the ridge solution `(G + λI)⁻¹ g` restricted to the
/// numerical range of `G` is used, with `λ` found by bisection so that
/// `sum a² = radius` to relative accuracy `1e-10`.
pub fn solve_ball_constrained(ne: &NormalEquations, radius: f64) -> Result<BallSolution> {
    let dim = ne.rhs.len();
    if ne.gram.nrows() != dim || ne.gram.ncols() != dim {
        return invalid("Gram matrix and right-hand side dimensions differ");
    }
    if !(radius.is_finite() && radius > 0.0) {
        return invalid(format!("radius must be positive and finite, got {radius}"));
    }
    if ne.gram.iter().chain(ne.rhs.iter()).any(|v| !v.is_finite()) {
        return invalid("normal equations must be finite");
    }
    if dim == 0 {
        return Ok(BallSolution {
            coeffs: DVector::zeros(0),
            lambda: 0.0,
            active: false,
        });
    }

    let eigen = SymmetricEigen::new(ne.gram.clone());
    let mu_max = eigen.eigenvalues.iter().copied().fold(0.0, f64::max);
    let tol = mu_max * dim as f64 * f64::EPSILON;
    let proj = eigen.eigenvectors.tr_mul(&ne.rhs);
    // (eigenvalue, projected rhs, column) over the numerical range.
    let range: Vec<(f64, f64, usize)> = eigen
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &mu)| mu > tol)
        .map(|(i, &mu)| (mu, proj[i], i))
        .collect();

    let norm_sq = |lambda: f64| -> f64 { range.iter().map(|&(mu, c, _)| (c / (mu + lambda)).powi(2)).sum() };
    let coeffs_at = |lambda: f64| -> DVector<f64> {
        let mut a = DVector::zeros(dim);
        for &(mu, c, i) in &range {
            a.axpy(c / (mu + lambda), &eigen.eigenvectors.column(i), 1.0);
        }
        a
    };

    let s0 = norm_sq(0.0);
    if s0 <= radius {
        return Ok(BallSolution {
            coeffs: coeffs_at(0.0),
            lambda: 0.0,
            active: false,
        });
    }

    // norm_sq(λ) is squeezed between s0 (μ/(μ+λ))² for μ = μ_min and μ_max.
    let mu_min = range.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let excess = (s0 / radius).sqrt() - 1.0;
    let mut lo = mu_min * excess;
    let mut hi = mu_max * excess;
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let s = norm_sq(mid);
        if (s - radius).abs() <= RADIUS_RTOL * radius {
            return Ok(BallSolution {
                coeffs: coeffs_at(mid),
                lambda: mid,
                active: true,
            });
        }
        if s > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NumericFailure(format!(
        "ridge bisection did not reach the radius {radius} in {MAX_BISECTIONS} steps"
    )))
}

pub fn constrained_lsq(problem: &RegressionProblem) -> Result<DVector<f64>> {
    Ok(solve_ball_constrained(&problem.normal_equations(), problem.radius)?.coeffs)
}

/// Paths entering an empirical average.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subset {
    Class(usize),
    All,
}

impl Subset {
    fn contains(&self, label: usize) -> bool {
        match *self {
            Subset::Class(c) => c == label,
            Subset::All => true,
        }
    }
}

/// `(1/(n |S|)) sum_{j in S} sum_{k<n} f(X^j_{k/n})²`.
pub fn empirical_norm_sq(ds: &PathDataset, subset: Subset, f: impl Fn(f64) -> f64) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for r in ds.records().iter().filter(|r| subset.contains(r.label)) {
        count += 1;
        total += r.values[..ds.n()].iter().map(|&x| f(x).powi(2)).sum::<f64>();
    }
    if count == 0 {
        return invalid(format!("no paths in {subset:?}"));
    }
    Ok(total / (count * ds.n()) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GramSource {
    Class(usize),
    Pooled,
}

/// Empirical Gram matrix `(1/(N_i n)) sum_j sum_k B(X) B(X)ᵀ`.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    pub source: GramSource,
}

impl GramMatrix {
    pub fn eigenvalues(&self) -> DVector<f64> {
        SymmetricEigen::new(self.entries.clone()).eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn quadratic_form(&self, a: &[f64]) -> f64 {
        let v = DVector::from_column_slice(a);
        v.dot(&(&self.entries * &v))
    }
}

pub fn gram_matrix(ds: &PathDataset, subset: Subset, basis: &SplineBasis) -> Result<GramMatrix> {
    let n = ds.n();
    let paths: Vec<_> = ds.records().iter().filter(|r| subset.contains(r.label)).collect();
    if paths.is_empty() {
        return invalid(format!("no paths in {subset:?}"));
    }
    let ne = NormalEquations::assemble(
        basis,
        paths.iter().flat_map(|r| r.values[..n].iter().map(|&x| (x, 0.0))),
    );
    let scale = 1.0 / (paths.len() * n) as f64;
    Ok(GramMatrix {
        entries: ne.gram * scale,
        source: match subset {
            Subset::Class(c) => GramSource::Class(c),
            Subset::All => GramSource::Pooled,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{PathSample, PathDataset};
    use crate::spline::SplineFn;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(design: f64, target: f64, radius: f64) -> RegressionProblem {
        RegressionProblem::new(
            DMatrix::from_element(1, 1, design),
            DVector::from_element(1, target),
            radius,
        )
        .unwrap()
    }

    #[test]
    fn slack_constraint_gives_ols() {
        let a = constrained_lsq(&scalar(1.0, 3.0, 25.0)).unwrap();
        assert_abs_diff_eq!(a[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn active_constraint_projects_onto_ball() {
        let a = constrained_lsq(&scalar(1.0, 3.0, 4.0)).unwrap();
        assert_abs_diff_eq!(a[0], 2.0, epsilon = 1e-9);
        let a = constrained_lsq(&scalar(2.0, -3.0, 0.25)).unwrap();
        assert_abs_diff_eq!(a[0], -0.5, epsilon = 1e-9);
    }

    #[test]
    fn rank_deficient_uses_minimum_norm() {
        // Two identical columns: any a1 + a2 = 2 fits; minimum norm is (1, 1).
        let design = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let p = RegressionProblem::new(design, DVector::from_element(3, 2.0), 100.0).unwrap();
        let a = constrained_lsq(&p).unwrap();
        assert_abs_diff_eq!(a[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(a[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn zero_design_gives_zero() {
        let p = RegressionProblem::new(DMatrix::zeros(4, 3), DVector::from_element(4, 1.0), 1.0).unwrap();
        assert_eq!(constrained_lsq(&p).unwrap(), DVector::zeros(3));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RegressionProblem::new(DMatrix::zeros(2, 2), DVector::zeros(3), 1.0).is_err());
        assert!(RegressionProblem::new(DMatrix::zeros(2, 2), DVector::zeros(2), 0.0).is_err());
        let mut d = DMatrix::zeros(2, 2);
        d[(0, 0)] = f64::NAN;
        assert!(RegressionProblem::new(d, DVector::zeros(2), 1.0).is_err());
        let ne = NormalEquations {
            gram: DMatrix::from_element(1, 1, f64::INFINITY),
            rhs: DVector::zeros(1),
        };
        assert!(matches!(solve_ball_constrained(&ne, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn beats_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let dim = rng.random_range(1..7);
            let design = DMatrix::from_fn(30, dim, |_, _| rng.random_range(-1.0..1.0));
            let targets = DVector::from_fn(30, |_, _| rng.random_range(-3.0..3.0));
            let radius = rng.random_range(0.05..2.0);
            let p = RegressionProblem::new(design, targets, radius).unwrap();
            let best = p.objective(&constrained_lsq(&p).unwrap());
            for _ in 0..1000 {
                let mut v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
                let scale = rng.random_range(0.0f64..1.0).sqrt() * radius.sqrt() / v.norm();
                v *= scale;
                assert!(best <= p.objective(&v) + 1e-12);
            }
        }
    }

    fn two_path_dataset() -> PathDataset {
        PathDataset::new(
            2,
            2,
            vec![
                PathSample {
                    label: 1,
                    values: vec![0.0, 1.0, 5.0],
                },
                PathSample {
                    label: 2,
                    values: vec![0.0, -2.0, 7.0],
                },
            ],
            None,
            0,
        )
        .unwrap()
    }

    #[test]
    fn empirical_norms_by_hand() {
        let ds = two_path_dataset();
        assert_abs_diff_eq!(empirical_norm_sq(&ds, Subset::All, |_| 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(empirical_norm_sq(&ds, Subset::All, |_| -3.0).unwrap(), 9.0);
        // Points before the last step: {0, 1} and {0, -2}.
        assert_abs_diff_eq!(empirical_norm_sq(&ds, Subset::All, |x| x).unwrap(), 5.0 / 4.0);
        assert_abs_diff_eq!(empirical_norm_sq(&ds, Subset::Class(2), |x| x).unwrap(), 2.0);
        assert!(empirical_norm_sq(&ds, Subset::Class(3), |x| x).is_err());
    }

    #[test]
    fn gram_total_mass_is_fraction_in_support() {
        // Basis functions sum to one on [-A, A], so the entries of the Gram
        // matrix sum to the fraction of sample points inside.
        let ds = two_path_dataset();
        let basis = SplineBasis::new(1.5, 1, 1).unwrap();
        let g = gram_matrix(&ds, Subset::All, &basis).unwrap();
        assert_abs_diff_eq!(g.entries.sum(), 3.0 / 4.0, epsilon = 1e-14);
        assert!(gram_matrix(&ds, Subset::Class(5), &basis).is_err());
    }

    #[test]
    fn quadratic_form_is_empirical_norm() {
        let m = crate::models::make_cosine_model(1.5).unwrap();
        let ds = crate::simulate::sample_dataset(&m, 40, 50, 2, 8).unwrap();
        let basis = SplineBasis::new(2.0, 6, 3).unwrap();
        let g = gram_matrix(&ds, Subset::Class(1), &basis).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let a: Vec<f64> = (0..basis.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let spline = SplineFn::new(basis.clone(), a.clone(), Default::default()).unwrap();
            let direct = empirical_norm_sq(&ds, Subset::Class(1), |x| spline.eval(x)).unwrap();
            assert_abs_diff_eq!(g.quadratic_form(&a), direct, epsilon = 1e-10);
        }
        let lmin = g.min_eigenvalue();
        assert!(lmin >= -1e-10 * g.entries.norm());
        assert!((&g.entries - g.entries.transpose()).amax() <= 1e-12);
    }

    #[test]
    fn dense_data_gives_invertible_gram() {
        let m = crate::models::make_ou_model(1.0).unwrap();
        let ds = crate::simulate::sample_dataset(&m, 300, 100, 2, 2).unwrap();
        let basis = SplineBasis::new(1.0, 4, 3).unwrap();
        let g = gram_matrix(&ds, Subset::Class(3), &basis).unwrap();
        assert!(g.min_eigenvalue() > 0.0);
    }
}
