//! Positive definite kernels, Gram matrices and the feature-space radius `q`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::SampleMatrix;
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Linear,
    Rbf,
    #[serde(alias = "poly")]
    Polynomial,
}

/// Kernel family plus its parameters. Unused parameters are carried along so
/// the serialized form is uniform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct KernelSpec<T> {
    pub family: KernelFamily,
    /// RBF width in `exp(-gamma ‖x − y‖²)`.
    pub gamma: T,
    /// Polynomial degree in `(x·y + coef0)^degree`.
    pub degree: u32,
    pub coef0: T,
}

impl<T: Real> KernelSpec<T> {
    pub fn linear() -> Self {
        Self { family: KernelFamily::Linear, gamma: T::one(), degree: 1, coef0: T::zero() }
    }

    pub fn rbf(gamma: T) -> Self {
        Self { family: KernelFamily::Rbf, gamma, degree: 1, coef0: T::zero() }
    }

    pub fn polynomial(degree: u32, coef0: T) -> Self {
        Self { family: KernelFamily::Polynomial, gamma: T::one(), degree, coef0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > T::zero()) || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("kernel gamma must be > 0, got {}", self.gamma)));
        }
        if self.degree < 1 {
            return Err(Error::InvalidParameter("kernel degree must be >= 1".into()));
        }
        if !(self.coef0 >= T::zero()) || !self.coef0.is_finite() {
            return Err(Error::InvalidParameter(format!("kernel coef0 must be >= 0, got {}", self.coef0)));
        }
        Ok(())
    }

    fn eval_unchecked(&self, x: ArrayView1<'_, T>, y: ArrayView1<'_, T>) -> T {
        match self.family {
            KernelFamily::Linear => x.dot(&y),
            KernelFamily::Rbf => {
                let sq: T = x.iter().zip(y.iter()).map(|(&a, &b)| (a - b) * (a - b)).sum();
                (-self.gamma * sq).exp()
            }
            KernelFamily::Polynomial => (x.dot(&y) + self.coef0).powi(self.degree as i32),
        }
    }
}

pub fn kernel_eval<T: Real>(spec: &KernelSpec<T>, x: ArrayView1<'_, T>, y: ArrayView1<'_, T>) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    Ok(spec.eval_unchecked(x, y))
}

/// Kernel values of `x` against every anchor row.
pub fn kernel_column<T: Real>(
    spec: &KernelSpec<T>,
    anchors: &SampleMatrix<T>,
    x: ArrayView1<'_, T>,
) -> Result<Array1<T>> {
    if x.len() != anchors.dim() {
        return Err(Error::DimensionMismatch { expected: anchors.dim(), got: x.len() });
    }
    Ok(Array1::from_shape_fn(anchors.len(), |i| spec.eval_unchecked(anchors.row(i), x)))
}

/// `out[i, j] = K(anchor_i, point_j)`.
pub fn cross_kernel<T: Real>(
    spec: &KernelSpec<T>,
    anchors: &SampleMatrix<T>,
    points: ArrayView2<'_, T>,
) -> Result<Array2<T>> {
    if points.ncols() != anchors.dim() {
        return Err(Error::DimensionMismatch { expected: anchors.dim(), got: points.ncols() });
    }
    Ok(Array2::from_shape_fn((anchors.len(), points.nrows()), |(i, j)| {
        spec.eval_unchecked(anchors.row(i), points.row(j))
    }))
}

/// Symmetric matrix of kernel evaluations on a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix<T: Real> {
    values: Array2<T>,
}

impl<T: Real> GramMatrix<T> {
    /// Wrap an existing symmetric matrix (e.g. a hand-built test Gram).
    pub fn from_values(values: Array2<T>) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        for i in 0..rows {
            for j in (i + 1)..rows {
                if values[[i, j]] != values[[j, i]] {
                    return Err(Error::Asymmetric {
                        row: i,
                        col: j,
                        value: (values[[i, j]] - values[[j, i]]).abs().as_f64(),
                        tol: 0.0,
                    });
                }
            }
        }
        Ok(Self { values })
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, T> {
        self.values.view()
    }
}

/// Each unordered pair is evaluated once and mirrored, so the result is
/// exactly symmetric.
pub fn gram<T: Real>(spec: &KernelSpec<T>, s: &SampleMatrix<T>) -> GramMatrix<T> {
    let m = s.len();
    let mut values = Array2::zeros((m, m));
    for i in 0..m {
        for j in i..m {
            let v = spec.eval_unchecked(s.row(i), s.row(j));
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    GramMatrix { values }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsdCheck {
    pub passed: bool,
    pub min_eigenvalue: f64,
    pub max_abs_eigenvalue: f64,
}

/// Passes iff `λ_min ≥ −tol · max(max|λ|, 1)`.
pub fn psd_check<T: Real>(k: &GramMatrix<T>, tol: T) -> Result<PsdCheck> {
    let eig = linalg::symmetric_eigenvalues(k.view())?;
    let min_eigenvalue = eig.first().copied().unwrap_or(0.0);
    let max_abs_eigenvalue = eig.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let threshold = -tol.as_f64() * max_abs_eigenvalue.max(1.0);
    Ok(PsdCheck { passed: min_eigenvalue >= threshold, min_eigenvalue, max_abs_eigenvalue })
}

/// `q = max_i sqrt(K_ii)`.
pub fn feature_space_radius<T: Real>(k: &GramMatrix<T>) -> Result<T> {
    let mut q2 = T::zero();
    for (index, &v) in k.values.diag().iter().enumerate() {
        if v < T::zero() {
            return Err(Error::NegativeGramDiagonal { index, value: v.as_f64() });
        }
        q2 = q2.max(v);
    }
    Ok(q2.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn sample(v: Array2<f64>) -> SampleMatrix<f64> {
        SampleMatrix::new(v).unwrap()
    }

    #[test]
    fn eval_examples() {
        let x = array![1.0, 2.0];
        let y = array![3.0, 4.0];
        assert_eq!(kernel_eval(&KernelSpec::rbf(0.7), x.view(), x.view()).unwrap(), 1.0);
        assert_eq!(kernel_eval(&KernelSpec::linear(), x.view(), y.view()).unwrap(), 11.0);
        let a = array![1.0, 1.0];
        let b = array![1.0, 1.0];
        assert_eq!(kernel_eval(&KernelSpec::polynomial(2, 1.0), a.view(), b.view()).unwrap(), 9.0);
        assert!(matches!(
            kernel_eval(&KernelSpec::linear(), x.view(), array![1.0].view()),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(KernelSpec::rbf(0.0).validate().is_err());
        assert!(KernelSpec::polynomial(0, 1.0).validate().is_err());
        assert!(KernelSpec::polynomial(2, -1.0).validate().is_err());
        assert!(KernelSpec::<f64>::linear().validate().is_ok());
    }

    #[test]
    fn spec_json_shape() {
        let json = serde_json::to_value(KernelSpec::rbf(0.5)).unwrap();
        assert_eq!(json, serde_json::json!({"family": "rbf", "gamma": 0.5, "degree": 1, "coef0": 0.0}));
        let back: KernelSpec<f64> =
            serde_json::from_str(r#"{"family":"poly","gamma":1.0,"degree":3,"coef0":1.0}"#).unwrap();
        assert_eq!(back, KernelSpec::polynomial(3, 1.0));
    }

    #[test]
    fn gram_examples() {
        let s = sample(array![[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]]);
        let k = gram(&KernelSpec::rbf(1.3), &s);
        assert!(k.view().diag().iter().all(|&v| v == 1.0));
        let k = gram(&KernelSpec::linear(), &s);
        assert_eq!(k.view(), s.view().dot(&s.view().t()));
        let s = sample(array![[1.0, 2.0], [1.0, 2.0]]);
        assert_eq!(gram(&KernelSpec::rbf(1.0), &s).view(), array![[1.0, 1.0], [1.0, 1.0]]);
    }

    #[test]
    fn psd_examples() {
        let pass = psd_check(&GramMatrix::from_values(array![[1.0, 0.0], [0.0, 1.0]]).unwrap(), 1e-10).unwrap();
        assert!(pass.passed);
        assert!((pass.min_eigenvalue - 1.0).abs() < 1e-12);
        let fail = psd_check(&GramMatrix::from_values(array![[1.0, 2.0], [2.0, 1.0]]).unwrap(), 1e-10).unwrap();
        assert!(!fail.passed);
        assert!((fail.min_eigenvalue + 1.0).abs() < 1e-12);
        assert!(GramMatrix::from_values(array![[1.0, 2.0], [2.1, 1.0]]).is_err());
    }

    #[test]
    fn radius_examples() {
        let s = sample(array![[3.0, 4.0], [0.0, 1.0], [-1.0, 0.5]]);
        assert_eq!(feature_space_radius(&gram(&KernelSpec::rbf(2.0), &s)).unwrap(), 1.0);
        assert_eq!(feature_space_radius(&gram(&KernelSpec::linear(), &s)).unwrap(), 5.0);
        let zeros = sample(Array2::zeros((4, 3)));
        assert_eq!(feature_space_radius(&gram(&KernelSpec::linear(), &zeros)).unwrap(), 0.0);
        let bad = GramMatrix::from_values(array![[-1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(feature_space_radius(&bad), Err(Error::NegativeGramDiagonal { index: 0, .. })));
    }

    fn distinct_points() -> impl Strategy<Value = Array2<f64>> {
        (2usize..9, 1usize..4).prop_flat_map(|(m, n)| {
            proptest::collection::vec(-2.0..2.0f64, m * n)
                .prop_map(move |v| Array2::from_shape_vec((m, n), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn rbf_gram_is_psd_with_unit_radius(x in distinct_points(), gamma in 0.1..3.0f64) {
            let s = sample(x);
            let k = gram(&KernelSpec::rbf(gamma), &s);
            prop_assert!(psd_check(&k, 1e-10).unwrap().passed);
            prop_assert_eq!(feature_space_radius(&k).unwrap(), 1.0);
        }

        #[test]
        fn gram_side_squared_distances_nonnegative(x in distinct_points(), deg in 1u32..4) {
            let s = sample(x);
            for spec in [KernelSpec::linear(), KernelSpec::rbf(1.0), KernelSpec::polynomial(deg, 1.0)] {
                let k = gram(&spec, &s);
                prop_assert!(psd_check(&k, 1e-9).unwrap().passed);
                let kv = k.view();
                for i in 0..s.len() {
                    for j in 0..s.len() {
                        let sq = kv[[i, i]] + kv[[j, j]] - 2.0 * kv[[i, j]];
                        prop_assert!(sq >= -1e-9);
                    }
                }
            }
        }

        #[test]
        fn linear_radius_matches_max_norm(x in distinct_points()) {
            let s = sample(x);
            let r = s.view().rows().into_iter().map(|row| row.dot(&row).sqrt()).fold(0.0, f64::max);
            let q = feature_space_radius(&gram(&KernelSpec::linear(), &s)).unwrap();
            prop_assert!((q - r).abs() <= 1e-12 * (1.0 + r));
        }
    }
}
