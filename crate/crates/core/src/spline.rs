//! Clamped B-splines on a symmetric interval `[-A, A]`.
//!
//! The knot vector has `K + 2M + 1` entries: `-A` repeated `M + 1` times,
//! the equispaced interior knots, and `+A` repeated `M + 1` times. The basis
//! has `K + M` functions of polynomial degree `M`, indexed `0..K+M` here
//! (the usual `-M..K-1` shifted by `M`).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Degrees up to this bound evaluate into a stack buffer.
const STACK_DEGREE: usize = 15;

#[derive(Clone, Debug, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
    half_width: f64,
    intervals: usize,
    degree: usize,
}

impl KnotVector {
    pub fn new(half_width: f64, intervals: usize, degree: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return invalid(format!("half-width must be positive and finite, got {half_width}"));
        }
        if intervals == 0 {
            return invalid("interval count K must be at least 1");
        }
        if degree == 0 {
            return invalid("spline degree M must be at least 1");
        }
        let k = intervals as f64;
        let mut knots = Vec::with_capacity(intervals + 2 * degree + 1);
        knots.extend(std::iter::repeat_n(-half_width, degree));
        knots.push(-half_width);
        for l in 1..intervals {
            knots.push(-half_width + 2.0 * l as f64 * half_width / k);
        }
        knots.push(half_width);
        knots.extend(std::iter::repeat_n(half_width, degree));
        Ok(Self {
            knots,
            half_width,
            intervals,
            degree,
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.knots
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }
}

/// Knot sequence with boundary multiplicity `M + 1` and `K` equal interior intervals.
pub fn build_knots(half_width: f64, intervals: usize, degree: usize) -> Result<KnotVector> {
    KnotVector::new(half_width, intervals, degree)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct BasisParams {
    half_width: f64,
    intervals: usize,
    degree: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisParams", into = "BasisParams")]
pub struct SplineBasis {
    knots: KnotVector,
}

impl TryFrom<BasisParams> for SplineBasis {
    type Error = crate::Error;

    fn try_from(p: BasisParams) -> Result<Self> {
        SplineBasis::new(p.half_width, p.intervals, p.degree)
    }
}

impl From<SplineBasis> for BasisParams {
    fn from(b: SplineBasis) -> Self {
        BasisParams {
            half_width: b.half_width(),
            intervals: b.intervals(),
            degree: b.degree(),
        }
    }
}

impl SplineBasis {
    pub fn new(half_width: f64, intervals: usize, degree: usize) -> Result<Self> {
        Ok(Self {
            knots: KnotVector::new(half_width, intervals, degree)?,
        })
    }

    pub fn from_knots(knots: KnotVector) -> Self {
        Self { knots }
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    /// Number of basis functions, `K + M`.
    pub fn dim(&self) -> usize {
        self.knots.intervals + self.knots.degree
    }

    pub fn degree(&self) -> usize {
        self.knots.degree
    }

    pub fn intervals(&self) -> usize {
        self.knots.intervals
    }

    pub fn half_width(&self) -> f64 {
        self.knots.half_width
    }

    /// Knots `u_{-M}, ..., u_{K-1}`: one site per basis function, used to
    /// build the quasi-interpolant `sum h(u_l) B_l`.
    pub fn interpolation_sites(&self) -> &[f64] {
        &self.knots.knots[..self.dim()]
    }

    /// Knot index `i` with `t[i] <= x < t[i+1]`, `M <= i < M + K`. The right
    /// endpoint `x = A` maps to the last interval (left limit).
    fn span(&self, x: f64) -> Option<usize> {
        let a = self.knots.half_width;
        if !(-a..=a).contains(&x) {
            return None;
        }
        let m = self.knots.degree;
        let k = self.knots.intervals;
        let t = &self.knots.knots;
        let guess = ((x + a) / (2.0 * a) * k as f64).floor() as isize;
        let mut i = (guess.clamp(0, k as isize - 1) as usize) + m;
        // Correct for rounding at interior knots.
        while i > m && x < t[i] {
            i -= 1;
        }
        while i + 1 < m + k && x >= t[i + 1] {
            i += 1;
        }
        Some(i)
    }

    /// Writes the `M + 1` possibly-nonzero basis values at `x` into
    /// `out[..=M]` and returns the index of the first one. Returns `None`
    /// (and leaves `out` untouched) outside `[-A, A]`.
    pub fn eval_nonzero(&self, x: f64, out: &mut [f64]) -> Option<usize> {
        let p = self.knots.degree;
        assert!(out.len() > p, "output buffer shorter than degree + 1");
        let i = self.span(x)?;
        let t = &self.knots.knots;
        out[0] = 1.0;
        for j in 1..=p {
            let mut saved = 0.0;
            for r in 0..j {
                let right = t[i + r + 1] - x;
                let left = x - t[i + 1 + r - j];
                // Denominator is the width of a support containing the
                // nondegenerate interval [t_i, t_{i+1}], hence positive.
                let temp = out[r] / (right + left);
                out[r] = saved + right * temp;
                saved = left * temp;
            }
            out[j] = saved;
        }
        Some(i - p)
    }

    /// All `dim` basis values at `x`; zero outside `[-A, A]`.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut values = vec![0.0; self.dim()];
        let mut local = vec![0.0; self.degree() + 1];
        if let Some(first) = self.eval_nonzero(x, &mut local) {
            values[first..first + local.len()].copy_from_slice(&local);
        }
        values
    }

    /// `sum_l coeffs[l] B_l(x)`.
    pub fn combine(&self, coeffs: &[f64], x: f64) -> f64 {
        debug_assert_eq!(coeffs.len(), self.dim());
        let p = self.degree();
        if p <= STACK_DEGREE {
            let mut buf = [0.0; STACK_DEGREE + 1];
            self.combine_into(coeffs, x, &mut buf[..=p])
        } else {
            let mut buf = vec![0.0; p + 1];
            self.combine_into(coeffs, x, &mut buf)
        }
    }

    fn combine_into(&self, coeffs: &[f64], x: f64, buf: &mut [f64]) -> f64 {
        match self.eval_nonzero(x, buf) {
            Some(first) => buf
                .iter()
                .zip(&coeffs[first..first + buf.len()])
                .map(|(b, a)| b * a)
                .sum(),
            None => 0.0,
        }
    }
}

pub fn eval_basis(basis: &SplineBasis, x: f64) -> Vec<f64> {
    basis.eval(x)
}

/// Post-transform applied to the raw spline value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    #[default]
    None,
    /// Clip to `[-bound, bound]`.
    Threshold { bound: f64 },
    Clamp { lo: f64, hi: f64 },
}

impl Transform {
    pub fn apply(&self, v: f64) -> f64 {
        match *self {
            Transform::None => v,
            Transform::Threshold { bound } => {
                if v.abs() <= bound {
                    v
                } else {
                    v.signum() * bound
                }
            }
            Transform::Clamp { lo, hi } => v.max(lo).min(hi),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Transform::None => Ok(()),
            Transform::Threshold { bound } if bound >= 0.0 => Ok(()),
            Transform::Threshold { bound } => invalid(format!("negative threshold {bound}")),
            Transform::Clamp { lo, hi } if lo <= hi => Ok(()),
            Transform::Clamp { lo, hi } => invalid(format!("empty clamp range [{lo}, {hi}]")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineFn {
    basis: SplineBasis,
    coeffs: Vec<f64>,
    #[serde(default)]
    transform: Transform,
}

impl SplineFn {
    pub fn new(basis: SplineBasis, coeffs: Vec<f64>, transform: Transform) -> Result<Self> {
        if coeffs.len() != basis.dim() {
            return invalid(format!(
                "coefficient count {} does not match basis dimension {}",
                coeffs.len(),
                basis.dim()
            ));
        }
        transform.validate()?;
        Ok(Self {
            basis,
            coeffs,
            transform,
        })
    }

    pub fn zero(basis: SplineBasis, transform: Transform) -> Self {
        let coeffs = vec![0.0; basis.dim()];
        Self {
            basis,
            coeffs,
            transform,
        }
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn transform(&self) -> Transform {
        self.transform
    }

    pub fn with_transform(mut self, transform: Transform) -> Result<Self> {
        transform.validate()?;
        self.transform = transform;
        Ok(self)
    }

    /// Value before the transform.
    pub fn raw(&self, x: f64) -> f64 {
        self.basis.combine(&self.coeffs, x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.transform.apply(self.raw(x))
    }
}

pub fn eval_spline(f: &SplineFn, x: f64) -> f64 {
    f.eval(x)
}

/// Spline whose coefficients are the given samples, typically `h` evaluated
/// at [`SplineBasis::interpolation_sites`].
pub fn lipschitz_interpolant(samples: &[f64], basis: &SplineBasis) -> Result<SplineFn> {
    SplineFn::new(basis.clone(), samples.to_vec(), Transform::None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Textbook recursive Cox-de Boor with 0/0 := 0, half-open intervals,
    /// and the last nondegenerate interval closed on the right.
    fn cox_de_boor(t: &[f64], i: usize, p: usize, x: f64) -> f64 {
        if p == 0 {
            let last = t.iter().rposition(|&u| u < t[t.len() - 1]).unwrap();
            let inside = t[i] <= x && x < t[i + 1];
            let right_end = i == last && x == t[i + 1];
            return if inside || right_end { 1.0 } else { 0.0 };
        }
        let ratio = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };
        ratio(x - t[i], t[i + p] - t[i]) * cox_de_boor(t, i, p - 1, x)
            + ratio(t[i + p + 1] - x, t[i + p + 1] - t[i + 1]) * cox_de_boor(t, i + 1, p - 1, x)
    }

    #[test]
    fn knots_match_formula() {
        assert_eq!(build_knots(1.0, 2, 1).unwrap().as_slice(), &[-1.0, -1.0, 0.0, 1.0, 1.0]);
        assert_eq!(
            build_knots(1.0, 1, 2).unwrap().as_slice(),
            &[-1.0, -1.0, -1.0, 1.0, 1.0, 1.0]
        );
        assert_eq!(
            build_knots(2.0, 4, 3).unwrap().as_slice(),
            &[-2.0, -2.0, -2.0, -2.0, -1.0, 0.0, 1.0, 2.0, 2.0, 2.0, 2.0]
        );
    }

    #[test]
    fn knots_reject_bad_arguments() {
        assert!(build_knots(0.0, 2, 1).is_err());
        assert!(build_knots(-1.0, 2, 1).is_err());
        assert!(build_knots(f64::NAN, 2, 1).is_err());
        assert!(build_knots(1.0, 0, 1).is_err());
        assert!(build_knots(1.0, 2, 0).is_err());
    }

    #[test]
    fn dim_is_knots_minus_degree_minus_one() {
        for k in 1..10 {
            for m in 1..4 {
                let b = SplineBasis::new(1.5, k, m).unwrap();
                assert_eq!(b.dim(), b.knots().len() - m - 1);
                assert_eq!(b.dim(), k + m);
            }
        }
    }

    #[test]
    fn hat_functions_at_center() {
        let b = SplineBasis::new(1.0, 2, 1).unwrap();
        assert_eq!(b.eval(0.0), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_outside_support() {
        let b = SplineBasis::new(1.0, 4, 3).unwrap();
        assert!(b.eval(2.0).iter().all(|&v| v == 0.0));
        assert!(b.eval(-1.0 - 1e-12).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn endpoints_use_closed_interval() {
        let b = SplineBasis::new(3.0, 5, 3).unwrap();
        let right = b.eval(3.0);
        assert_abs_diff_eq!(right.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(right[b.dim() - 1], 1.0, epsilon = 1e-14);
        let left = b.eval(-3.0);
        assert_abs_diff_eq!(left[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn matches_recursive_cox_de_boor() {
        for &(a, k, m) in &[(1.0, 1, 1), (2.0, 4, 3), (6.9, 16, 3), (1.3, 7, 2), (0.5, 3, 5)] {
            let b = SplineBasis::new(a, k, m).unwrap();
            let t = b.knots().as_slice();
            for s in 0..=400 {
                let x = -a + 2.0 * a * s as f64 / 400.0;
                let fast = b.eval(x);
                for (l, &v) in fast.iter().enumerate() {
                    assert_abs_diff_eq!(v, cox_de_boor(t, l, m, x), epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn transforms() {
        let t = Transform::Threshold { bound: 2.0 };
        assert_eq!(t.apply(5.0), 2.0);
        assert_eq!(t.apply(-5.0), -2.0);
        assert_eq!(t.apply(1.5), 1.5);
        let n: f64 = 1000.0;
        let c = Transform::Clamp {
            lo: 1.0 / n.ln(),
            hi: n.ln().powf(1.5),
        };
        assert_eq!(c.apply(0.0), 1.0 / n.ln());
    }

    #[test]
    fn clamped_spline_outside_support_takes_lower_bound() {
        let b = SplineBasis::new(1.0, 4, 3).unwrap();
        let f = SplineFn::new(b, vec![0.7; 7], Transform::Clamp { lo: 0.25, hi: 3.0 }).unwrap();
        assert_eq!(f.eval(5.0), 0.25);
        assert_abs_diff_eq!(f.eval(0.3), 0.7, epsilon = 1e-14);
    }

    #[test]
    fn constant_coefficients_reproduce_constant() {
        let b = SplineBasis::new(2.0, 9, 3).unwrap();
        let f = SplineFn::new(b.clone(), vec![-1.25; b.dim()], Transform::None).unwrap();
        for s in 0..100 {
            let x = -1.99 + 3.98 * s as f64 / 99.0;
            assert_abs_diff_eq!(eval_spline(&f, x), -1.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn spline_rejects_wrong_length() {
        let b = SplineBasis::new(1.0, 2, 1).unwrap();
        assert!(SplineFn::new(b.clone(), vec![0.0; 2], Transform::None).is_err());
        assert!(lipschitz_interpolant(&[1.0; 4], &b).is_err());
        assert!(SplineFn::new(b, vec![0.0; 3], Transform::Clamp { lo: 1.0, hi: 0.0 }).is_err());
    }

    #[test]
    fn interpolant_of_constant() {
        let b = SplineBasis::new(1.5, 6, 3).unwrap();
        let f = lipschitz_interpolant(&vec![4.0; b.dim()], &b).unwrap();
        for s in 0..50 {
            let x = -1.49 + 2.98 * s as f64 / 49.0;
            assert_abs_diff_eq!(f.eval(x), 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_interpolant_lags_one_knot_with_left_sites() {
        // With samples at u_{-M..K-1}, the degree-1 interpolant of h(x) = x
        // equals x - 2A/K on the interior knots.
        let b = SplineBasis::new(1.0, 4, 1).unwrap();
        let samples: Vec<f64> = b.interpolation_sites().to_vec();
        let f = lipschitz_interpolant(&samples, &b).unwrap();
        for &u in &[-0.5, 0.0, 0.5] {
            assert_abs_diff_eq!(f.eval(u), u - 0.5, epsilon = 1e-14);
        }
        // Sampling at the hat peaks (Greville sites) interpolates exactly.
        let greville: Vec<f64> = b.knots().as_slice()[1..=b.dim()].to_vec();
        let g = lipschitz_interpolant(&greville, &b).unwrap();
        for &u in &[-1.0, -0.5, 0.0, 0.5, 1.0] {
            assert_abs_diff_eq!(g.eval(u), u, epsilon = 1e-14);
        }
    }

    #[test]
    fn serde_round_trip() {
        let b = SplineBasis::new(6.9, 8, 3).unwrap();
        let f = SplineFn::new(b, (0..11).map(|i| i as f64 * 0.1).collect(), Transform::Threshold { bound: 3.0 })
            .unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let back: SplineFn = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
    }

    proptest! {
        #[test]
        fn basis_nonnegative_local_and_unit_sum(
            a in 0.1f64..10.0, k in 1usize..40, m in 1usize..5, s in 0.0f64..=1.0
        ) {
            let b = SplineBasis::new(a, k, m).unwrap();
            let x = -a + 2.0 * a * s;
            let v = b.eval(x);
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let t = b.knots().as_slice();
            for (l, &bv) in v.iter().enumerate() {
                prop_assert!((0.0..=1.0 + 1e-15).contains(&bv));
                if x < t[l] || x > t[l + m + 1] {
                    prop_assert_eq!(bv, 0.0);
                }
            }
        }

        #[test]
        fn transforms_are_idempotent(v in -1e6f64..1e6, bound in 0.0f64..100.0, lo in -50.0f64..50.0, w in 0.0f64..50.0) {
            let t = Transform::Threshold { bound };
            prop_assert_eq!(t.apply(t.apply(v)), t.apply(v));
            prop_assert!(t.apply(v).abs() <= bound);
            let c = Transform::Clamp { lo, hi: lo + w };
            prop_assert_eq!(c.apply(c.apply(v)), c.apply(v));
            prop_assert!((lo..=lo + w).contains(&c.apply(v)));
        }

        #[test]
        fn sine_quasi_interpolant_error_bound(a in 0.5f64..8.0, k in 1usize..64, m in 1usize..4) {
            let b = SplineBasis::new(a, k, m).unwrap();
            let samples: Vec<f64> = b.interpolation_sites().iter().map(|u| u.sin()).collect();
            let f = lipschitz_interpolant(&samples, &b).unwrap();
            let bound = 2.0 * 2.0 * (m + 1) as f64 * a / k as f64;
            for s in 1..200 {
                let x = -a + 2.0 * a * s as f64 / 200.0;
                prop_assert!((f.eval(x) - x.sin()).abs() <= bound);
            }
        }
    }
}
