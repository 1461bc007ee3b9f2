//! Sample and distance containers, the stress risk, and the data radii that
//! feed every certificate.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Real;

fn check_finite<T: Real>(a: ArrayView2<'_, T>) -> Result<()> {
    match a.indexed_iter().find(|(_, v)| !v.is_finite()) {
        Some(((row, col), _)) => Err(Error::NonFinite { row, col }),
        None => Ok(()),
    }
}

fn check_square<T>(a: ArrayView2<'_, T>) -> Result<usize> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    Ok(rows)
}

/// `m` feature vectors in `R^N`, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix<T: Real> {
    values: Array2<T>,
}

impl<T: Real> SampleMatrix<T> {
    pub fn new(values: Array2<T>) -> Result<Self> {
        let (m, n) = values.dim();
        if m < 2 {
            return Err(Error::TooFewPoints(m));
        }
        if n == 0 {
            return Err(Error::NoFeatures);
        }
        check_finite(values.view())?;
        Ok(Self { values })
    }

    /// Number of points `m`.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    /// Always false: a sample holds at least two points.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Feature dimension `N`.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, T> {
        self.values.row(i)
    }

    pub fn view(&self) -> ArrayView2<'_, T> {
        self.values.view()
    }

    pub fn into_inner(self) -> Array2<T> {
        self.values
    }
}

/// Symmetric, nonnegative, zero-diagonal target distances. The triangle
/// inequality is not required.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix<T: Real> {
    values: Array2<T>,
}

impl<T: Real> DistanceMatrix<T> {
    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, T> {
        self.values.view()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[[i, j]]
    }

    /// Largest entry, `beta`.
    pub fn max_entry(&self) -> T {
        self.values.iter().copied().fold(T::zero(), T::max)
    }

    pub fn into_inner(self) -> Array2<T> {
        self.values
    }
}

/// Validate a candidate distance matrix.
///
/// Entries within `tol` of an invariant are repaired: the matrix is
/// symmetrized as `(D + Dᵀ)/2`, the diagonal is zeroed and small negatives
/// are clamped to 0. Anything further out is rejected.
pub fn validate_distance_matrix<T: Real>(mat: Array2<T>, tol: T) -> Result<DistanceMatrix<T>> {
    if !(tol >= T::zero()) || !tol.is_finite() {
        return Err(Error::InvalidParameter(format!("tolerance must be finite and >= 0, got {tol}")));
    }
    let m = check_square(mat.view())?;
    check_finite(mat.view())?;
    let mut values = mat;
    let half = T::lit(0.5);
    for i in 0..m {
        let d = values[[i, i]];
        if d.abs() > tol {
            return Err(Error::NonZeroDiagonal { index: i, value: d.as_f64(), tol: tol.as_f64() });
        }
        values[[i, i]] = T::zero();
        for j in (i + 1)..m {
            let (a, b) = (values[[i, j]], values[[j, i]]);
            let asym = (a - b).abs();
            if asym > tol {
                return Err(Error::Asymmetric { row: i, col: j, value: asym.as_f64(), tol: tol.as_f64() });
            }
            let mut avg = if a == b { a } else { (a + b) * half };
            if avg < T::zero() {
                if -avg > tol {
                    return Err(Error::NegativeDistance { row: i, col: j, value: avg.as_f64(), tol: tol.as_f64() });
                }
                avg = T::zero();
            }
            values[[i, j]] = avg;
            values[[j, i]] = avg;
        }
    }
    Ok(DistanceMatrix { values })
}

/// Behavioural confusion rates in `[0, 1]` with a unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix<T: Real> {
    values: Array2<T>,
}

impl<T: Real> ConfusionMatrix<T> {
    pub fn new(values: Array2<T>) -> Result<Self> {
        let m = check_square(values.view())?;
        check_finite(values.view())?;
        for ((row, col), &v) in values.indexed_iter() {
            if v < T::zero() || v > T::one() {
                return Err(Error::ConfusionRange { row, col, value: v.as_f64() });
            }
        }
        for i in 0..m {
            if values[[i, i]] != T::one() {
                return Err(Error::ConfusionDiagonal { index: i, value: values[[i, i]].as_f64() });
            }
        }
        Ok(Self { values })
    }

    pub fn view(&self) -> ArrayView2<'_, T> {
        self.values.view()
    }
}

/// `D_ij = 1 - C_ij`, validated with zero tolerance.
pub fn confusion_to_distance<T: Real>(c: &ConfusionMatrix<T>) -> Result<DistanceMatrix<T>> {
    let d = c.values.mapv(|v| T::one() - v);
    validate_distance_matrix(d, T::zero())
}

/// Euclidean distances between the rows of `y`.
pub fn pairwise_distances<T: Real>(y: ArrayView2<'_, T>) -> Result<Array2<T>> {
    check_finite(y)?;
    let m = y.nrows();
    let mut out = Array2::zeros((m, m));
    for i in 0..m {
        let yi = y.row(i);
        for j in (i + 1)..m {
            let sq: T = yi.iter().zip(y.row(j).iter()).map(|(&a, &b)| (a - b) * (a - b)).sum();
            let d = sq.sqrt();
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    Ok(out)
}

/// Mean squared residual `(1/m²) Σ_ij (D̂_ij − D_ij)²`, diagonal included.
pub fn empirical_risk<T: Real>(d_hat: ArrayView2<'_, T>, d: &DistanceMatrix<T>) -> Result<T> {
    let m = check_square(d_hat)?;
    if m != d.size() {
        return Err(Error::DimensionMismatch { expected: d.size(), got: m });
    }
    let total: T = d_hat
        .iter()
        .zip(d.values.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let m2 = T::from_usize(m * m).expect("m² fits in scalar");
    Ok(total / m2)
}

/// Maximum feature norm `r` and maximum target distance `beta`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DataRadii<T> {
    pub r: T,
    pub beta: T,
}

pub fn data_radii<T: Real>(s: &SampleMatrix<T>, d: &DistanceMatrix<T>) -> DataRadii<T> {
    let r = s
        .values
        .rows()
        .into_iter()
        .map(|row| row.iter().map(|&v| v * v).sum::<T>().sqrt())
        .fold(T::zero(), T::max);
    DataRadii { r, beta: d.max_entry() }
}
