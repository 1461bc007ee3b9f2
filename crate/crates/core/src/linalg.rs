//! Dense decompositions backed by nalgebra, evaluated in `f64`.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub(crate) fn to_dmatrix<T: Real>(a: ArrayView2<'_, T>) -> DMatrix<f64> {
    let (rows, cols) = a.dim();
    DMatrix::from_fn(rows, cols, |i, j| a[[i, j]].as_f64())
}

pub(crate) fn from_dmatrix<T: Real>(m: &DMatrix<f64>) -> Array2<T> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| T::lit(m[(i, j)]))
}

fn ensure_finite<T: Real>(a: ArrayView2<'_, T>) -> Result<()> {
    match a.indexed_iter().find(|(_, v)| !v.is_finite()) {
        Some(((row, col), _)) => Err(Error::NonFinite { row, col }),
        None => Ok(()),
    }
}

/// Eigen-decomposition of the smaller Gram side of `a`: `aᵀa` when
/// `cols ≤ rows` (right singular vectors) and `a aᵀ` otherwise (left
/// singular vectors). Eigenvalues are the squared singular values.
///
/// nalgebra's bidiagonal SVD can return wrong singular values when two of
/// them coincide, which is exactly the state clipping produces, so the
/// symmetric eigensolver is used instead.
struct GramSide {
    right: bool,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

fn gram_side<T: Real>(a: ArrayView2<'_, T>) -> Result<(DMatrix<f64>, GramSide)> {
    ensure_finite(a)?;
    let m = to_dmatrix(a);
    let right = m.ncols() <= m.nrows();
    let g = if right { m.transpose() * &m } else { &m * m.transpose() };
    let eig = g.symmetric_eigen();
    let eigenvalues: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Decomposition("non-finite eigenvalue".into()));
    }
    Ok((m, GramSide { right, eigenvalues, eigenvectors: eig.eigenvectors }))
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(a: ArrayView2<'_, T>) -> Result<T> {
    if a.is_empty() {
        return Ok(T::zero());
    }
    let (_, g) = gram_side(a)?;
    Ok(T::lit(g.eigenvalues.iter().copied().fold(0.0, f64::max).sqrt()))
}

/// Leading singular triple `(sigma, u, v)` with `a v = sigma u`.
pub fn top_singular_pair<T: Real>(a: ArrayView2<'_, T>) -> Result<(T, Array1<T>, Array1<T>)> {
    let (m, g) = gram_side(a)?;
    let (idx, lambda) = g
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let sigma = lambda.sqrt();
    let vec = g.eigenvectors.column(idx).into_owned();
    let (u, v) = if g.right {
        let u = if sigma > 0.0 { &m * &vec / sigma } else { DVector::zeros(m.nrows()) };
        (u, vec)
    } else {
        let v = if sigma > 0.0 { m.transpose() * &vec / sigma } else { DVector::zeros(m.ncols()) };
        (vec, v)
    };
    Ok((
        T::lit(sigma),
        Array1::from_iter(u.iter().map(|&x| T::lit(x))),
        Array1::from_iter(v.iter().map(|&x| T::lit(x))),
    ))
}

/// Replace every singular value above `cap` by `cap`. Directions at or
/// below the cap are left untouched.
pub fn clip_singular_values<T: Real>(a: ArrayView2<'_, T>, cap: T) -> Result<Array2<T>> {
    let (m, g) = gram_side(a)?;
    let cap = cap.as_f64();
    let dim = g.eigenvectors.nrows();
    // P = Σ over clipped directions of (1 − cap/σ) w wᵀ
    let mut shrink = DMatrix::<f64>::zeros(dim, dim);
    for (i, &lambda) in g.eigenvalues.iter().enumerate() {
        let sigma = lambda.sqrt();
        if sigma > cap {
            let w = g.eigenvectors.column(i);
            shrink += (1.0 - cap / sigma) * (&w * w.transpose());
        }
    }
    let clipped = if g.right { &m - &m * shrink } else { &m - shrink * &m };
    Ok(from_dmatrix(&clipped))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues<T: Real>(a: ArrayView2<'_, T>) -> Result<Vec<f64>> {
    ensure_finite(a)?;
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    let m = to_dmatrix(a);
    let mut eig: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    Ok(eig)
}

/// Moore-Penrose pseudo-inverse via the Gram side; singular values below
/// `1e-12 · σ_max` are treated as zero.
pub fn pseudo_inverse<T: Real>(a: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let (m, g) = gram_side(a)?;
    let max = g.eigenvalues.iter().copied().fold(0.0, f64::max);
    let dim = g.eigenvectors.nrows();
    let mut inv = DMatrix::<f64>::zeros(dim, dim);
    for (i, &lambda) in g.eigenvalues.iter().enumerate() {
        if lambda > 0.0 && lambda.sqrt() > 1e-12 * max.sqrt() {
            let w = g.eigenvectors.column(i);
            inv += (&w * w.transpose()) / lambda;
        }
    }
    // right: A⁺ = (AᵀA)⁺ Aᵀ, left: A⁺ = Aᵀ (AAᵀ)⁺
    let pinv = if g.right { inv * m.transpose() } else { m.transpose() * inv };
    Ok(from_dmatrix(&pinv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn spectral_norm_of_diagonal() {
        let w = array![[2.0, 0.0], [0.0, 0.5]];
        assert!((spectral_norm(w.view()).unwrap() - 2.0_f64).abs() < 1e-14);
    }

    #[test]
    fn clipping_a_diagonal_matrix() {
        let w = array![[2.0f64, 0.0], [0.0, 0.5]];
        let c = clip_singular_values(w.view(), 1.0).unwrap();
        let want = array![[1.0, 0.0], [0.0, 0.5]];
        for (a, b) in c.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn eigenvalues_of_indefinite_matrix() {
        let k = array![[1.0, 2.0], [2.0, 1.0]];
        let e = symmetric_eigenvalues(k.view()).unwrap();
        assert!((e[0] + 1.0).abs() < 1e-12);
        assert!((e[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn top_pair_reconstructs_leading_action() {
        let w = array![[3.0f64, 1.0], [0.0, 2.0], [1.0, 1.0]];
        let (s, u, v) = top_singular_pair(w.view()).unwrap();
        let wv = w.dot(&v);
        for (a, b) in wv.iter().zip(u.iter()) {
            assert!((a - s * b).abs() < 1e-12);
        }
    }

    #[test]
    fn clipping_with_repeated_singular_values() {
        let w = array![
            [1.5309722936913701f64, 0.0, 1.420538990479016],
            [1.838161949690738, 0.5031837781855345, -0.4133359058922267],
            [-1.8176865964576, 1.875186491799321, 1.7247353864994557]
        ];
        let cap = 2.158815197302054;
        let once = clip_singular_values(w.view(), cap).unwrap();
        assert!(spectral_norm(once.view()).unwrap() <= cap + 1e-12);
        let twice = clip_singular_values(once.view(), cap).unwrap();
        assert!(once.iter().zip(twice.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn pseudo_inverse_of_tall_and_wide() {
        let s = array![[1.0f64, 2.0], [0.5, -1.0], [3.0, 0.0]];
        let p = pseudo_inverse(s.view()).unwrap();
        let id = p.dot(&s);
        assert!((id[[0, 0]] - 1.0).abs() < 1e-12 && id[[0, 1]].abs() < 1e-12 && (id[[1, 1]] - 1.0).abs() < 1e-12);
        let pt = pseudo_inverse(s.t()).unwrap();
        let id = s.t().dot(&pt);
        assert!((id[[0, 0]] - 1.0).abs() < 1e-12 && id[[1, 0]].abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let w = array![[f64::NAN, 0.0]];
        assert!(matches!(spectral_norm(w.view()), Err(Error::NonFinite { .. })));
    }
}
