//! Norm-constrained hypothesis classes: linear maps `x ↦ W x` and kernel maps
//! in representer form `x ↦ A k_S(x)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{pairwise_distances, SampleMatrix};
use crate::error::{Error, Result};
use crate::kernels::{cross_kernel, gram, kernel_column, GramMatrix, KernelSpec};
use crate::linalg;
use crate::scalar::Real;

/// Operations shared by both hypothesis classes.
pub trait Hypothesis<T: Real>: Sized {
    /// Embedding dimension `k`.
    fn output_dim(&self) -> usize;

    fn input_dim(&self) -> usize;

    fn lambda_cap(&self) -> T;

    fn forward(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>>;

    /// Embedded points, one row per input row.
    fn embed(&self, points: ArrayView2<'_, T>) -> Result<Array2<T>>;

    /// `D̂_ij = ‖h(x_i) − h(x_j)‖₂`.
    fn embedding_distance_matrix(&self, s: &SampleMatrix<T>) -> Result<Array2<T>>;

    /// Spectral norm for linear maps, RKHS norm for kernel maps.
    fn model_norm(&self) -> Result<T>;

    /// Nearest member of the `lambda_cap` ball. Maps already inside are
    /// returned unchanged.
    fn project_norm_ball(&self) -> Result<Self>;
}

fn check_cap<T: Real>(cap: T) -> Result<()> {
    if !(cap >= T::zero()) || !cap.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda_cap must be finite and >= 0, got {cap}")));
    }
    Ok(())
}

fn check_finite<T: Real>(a: ArrayView2<'_, T>) -> Result<()> {
    match a.indexed_iter().find(|(_, v)| !v.is_finite()) {
        Some(((row, col), _)) => Err(Error::NonFinite { row, col }),
        None => Ok(()),
    }
}

/// `x ↦ W x` with `‖W‖₂ ≤ lambda_cap` enforced by projection.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap<T: Real> {
    w: Array2<T>,
    lambda_cap: T,
}

impl<T: Real> LinearMap<T> {
    /// `w` is `k × N`.
    pub fn new(w: Array2<T>, lambda_cap: T) -> Result<Self> {
        check_cap(lambda_cap)?;
        check_finite(w.view())?;
        if w.is_empty() {
            return Err(Error::InvalidParameter("weight matrix must be non-empty".into()));
        }
        Ok(Self { w, lambda_cap })
    }

    pub fn weights(&self) -> ArrayView2<'_, T> {
        self.w.view()
    }

    pub(crate) fn with_weights(&self, w: Array2<T>) -> Self {
        Self { w, lambda_cap: self.lambda_cap }
    }
}

impl<T: Real> Hypothesis<T> for LinearMap<T> {
    fn output_dim(&self) -> usize {
        self.w.nrows()
    }

    fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    fn lambda_cap(&self) -> T {
        self.lambda_cap
    }

    fn forward(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
        if x.len() != self.w.ncols() {
            return Err(Error::DimensionMismatch { expected: self.w.ncols(), got: x.len() });
        }
        Ok(self.w.dot(&x))
    }

    fn embed(&self, points: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if points.ncols() != self.w.ncols() {
            return Err(Error::DimensionMismatch { expected: self.w.ncols(), got: points.ncols() });
        }
        Ok(points.dot(&self.w.t()))
    }

    fn embedding_distance_matrix(&self, s: &SampleMatrix<T>) -> Result<Array2<T>> {
        let y = self.embed(s.view())?;
        pairwise_distances(y.view()).map_err(|_| Error::NonFiniteIntermediate("linear embedding"))
    }

    fn model_norm(&self) -> Result<T> {
        linalg::spectral_norm(self.w.view())
    }

    fn project_norm_ball(&self) -> Result<Self> {
        if self.model_norm()? <= self.lambda_cap {
            return Ok(self.clone());
        }
        let w = linalg::clip_singular_values(self.w.view(), self.lambda_cap)?;
        Ok(self.with_weights(w))
    }
}

/// `x ↦ A [K(x_1, x), …, K(x_m, x)]ᵀ` over fixed anchors, with RKHS norm
/// `sqrt(tr(A K Aᵀ)) ≤ lambda_cap` enforced by projection.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMap<T: Real> {
    a: Array2<T>,
    anchors: SampleMatrix<T>,
    kernel: KernelSpec<T>,
    lambda_cap: T,
    gram: GramMatrix<T>,
}

impl<T: Real> KernelMap<T> {
    /// `a` is `k × m` where `m` is the number of anchors.
    pub fn new(a: Array2<T>, anchors: SampleMatrix<T>, kernel: KernelSpec<T>, lambda_cap: T) -> Result<Self> {
        check_cap(lambda_cap)?;
        kernel.validate()?;
        check_finite(a.view())?;
        if a.ncols() != anchors.len() {
            return Err(Error::DimensionMismatch { expected: anchors.len(), got: a.ncols() });
        }
        if a.nrows() == 0 {
            return Err(Error::InvalidParameter("coefficient matrix must have at least one row".into()));
        }
        let gram = gram(&kernel, &anchors);
        Ok(Self { a, anchors, kernel, lambda_cap, gram })
    }

    /// Linear-kernel map that agrees with `linear` on the span of the anchors:
    /// `A = W S⁺`, so `A S x = W x` whenever `S` has full column rank.
    pub fn from_linear(linear: &LinearMap<T>, anchors: SampleMatrix<T>, lambda_cap: T) -> Result<Self> {
        if anchors.dim() != linear.input_dim() {
            return Err(Error::DimensionMismatch { expected: linear.input_dim(), got: anchors.dim() });
        }
        let pinv = linalg::pseudo_inverse(anchors.view())?;
        let a = linear.weights().dot(&pinv);
        Self::new(a, anchors, KernelSpec::linear(), lambda_cap)
    }

    pub fn coefficients(&self) -> ArrayView2<'_, T> {
        self.a.view()
    }

    pub fn anchors(&self) -> &SampleMatrix<T> {
        &self.anchors
    }

    pub fn kernel(&self) -> &KernelSpec<T> {
        &self.kernel
    }

    pub fn gram(&self) -> &GramMatrix<T> {
        &self.gram
    }

    pub(crate) fn with_coefficients(&self, a: Array2<T>) -> Self {
        Self { a, ..self.clone() }
    }

    /// Kernel columns of `points` against the anchors, reusing the cached
    /// Gram matrix when `points` are the anchors themselves.
    pub(crate) fn kernel_columns(&self, points: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if points == self.anchors.view() {
            return Ok(self.gram.view().to_owned());
        }
        cross_kernel(&self.kernel, &self.anchors, points)
    }
}

impl<T: Real> Hypothesis<T> for KernelMap<T> {
    fn output_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.anchors.dim()
    }

    fn lambda_cap(&self) -> T {
        self.lambda_cap
    }

    fn forward(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
        let col = kernel_column(&self.kernel, &self.anchors, x)?;
        Ok(self.a.dot(&col))
    }

    fn embed(&self, points: ArrayView2<'_, T>) -> Result<Array2<T>> {
        let cols = self.kernel_columns(points)?;
        Ok(self.a.dot(&cols).reversed_axes())
    }

    /// Squared distances are the quadratic forms
    /// `(k_i − k_j)ᵀ Aᵀ A (k_i − k_j)` over Gram columns; round-off
    /// negatives are clamped before the root.
    fn embedding_distance_matrix(&self, s: &SampleMatrix<T>) -> Result<Array2<T>> {
        let cols = self.kernel_columns(s.view())?;
        let z = self.a.dot(&cols);
        let m = s.len();
        let mut out = Array2::zeros((m, m));
        for i in 0..m {
            for j in (i + 1)..m {
                let sq: T = z
                    .axis_iter(Axis(0))
                    .map(|row| {
                        let diff = row[i] - row[j];
                        diff * diff
                    })
                    .sum();
                let d = sq.max(T::zero()).sqrt();
                if !d.is_finite() {
                    return Err(Error::NonFiniteIntermediate("kernel embedding"));
                }
                out[[i, j]] = d;
                out[[j, i]] = d;
            }
        }
        Ok(out)
    }

    fn model_norm(&self) -> Result<T> {
        let ak = self.a.dot(&self.gram.view());
        let trace: T = ak.iter().zip(self.a.iter()).map(|(&p, &q)| p * q).sum();
        if !trace.is_finite() {
            return Err(Error::NonFiniteIntermediate("RKHS norm"));
        }
        Ok(trace.max(T::zero()).sqrt())
    }

    fn project_norm_ball(&self) -> Result<Self> {
        let norm = self.model_norm()?;
        if norm <= self.lambda_cap {
            return Ok(self.clone());
        }
        let scale = self.lambda_cap / norm;
        Ok(self.with_coefficients(self.a.mapv(|v| v * scale)))
    }
}

/// Either hypothesis class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelDoc<T>", try_from = "ModelDoc<T>", bound = "T: Real")]
pub enum Model<T: Real> {
    Linear(LinearMap<T>),
    Kernel(KernelMap<T>),
}

macro_rules! dispatch {
    ($self:expr, $h:ident => $body:expr) => {
        match $self {
            Model::Linear($h) => $body,
            Model::Kernel($h) => $body,
        }
    };
}

impl<T: Real> Hypothesis<T> for Model<T> {
    fn output_dim(&self) -> usize {
        dispatch!(self, h => h.output_dim())
    }

    fn input_dim(&self) -> usize {
        dispatch!(self, h => h.input_dim())
    }

    fn lambda_cap(&self) -> T {
        dispatch!(self, h => h.lambda_cap())
    }

    fn forward(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
        dispatch!(self, h => h.forward(x))
    }

    fn embed(&self, points: ArrayView2<'_, T>) -> Result<Array2<T>> {
        dispatch!(self, h => h.embed(points))
    }

    fn embedding_distance_matrix(&self, s: &SampleMatrix<T>) -> Result<Array2<T>> {
        dispatch!(self, h => h.embedding_distance_matrix(s))
    }

    fn model_norm(&self) -> Result<T> {
        dispatch!(self, h => h.model_norm())
    }

    fn project_norm_ball(&self) -> Result<Self> {
        Ok(match self {
            Model::Linear(h) => Model::Linear(h.project_norm_ball()?),
            Model::Kernel(h) => Model::Kernel(h.project_norm_ball()?),
        })
    }
}

impl<T: Real> Model<T> {
    /// Trainable parameters: `W` for linear maps, `A` for kernel maps.
    pub fn params(&self) -> ArrayView2<'_, T> {
        match self {
            Model::Linear(h) => h.weights(),
            Model::Kernel(h) => h.coefficients(),
        }
    }

    pub(crate) fn with_params(&self, p: Array2<T>) -> Self {
        match self {
            Model::Linear(h) => Model::Linear(h.with_weights(p)),
            Model::Kernel(h) => Model::Kernel(h.with_coefficients(p)),
        }
    }

    /// Matrix `F` with `embed(S) = F Pᵀ` for parameters `P`: the sample itself
    /// for linear maps, kernel columns against the anchors for kernel maps.
    pub(crate) fn design(&self, s: &SampleMatrix<T>) -> Result<Array2<T>> {
        match self {
            Model::Linear(_) => Ok(s.view().to_owned()),
            Model::Kernel(h) => h.kernel_columns(s.view()).map(|k| k.reversed_axes()),
        }
    }

    /// A subgradient of `model_norm` with respect to the parameters.
    pub(crate) fn norm_subgradient(&self) -> Result<Array2<T>> {
        match self {
            Model::Linear(h) => {
                let (sigma, u, v) = linalg::top_singular_pair(h.weights())?;
                if sigma <= T::zero() {
                    return Ok(Array2::zeros(h.weights().dim()));
                }
                let u = u.insert_axis(Axis(1));
                let v = v.insert_axis(Axis(0));
                Ok(u.dot(&v))
            }
            Model::Kernel(h) => {
                let norm = h.model_norm()?;
                if norm <= T::zero() {
                    return Ok(Array2::zeros(h.coefficients().dim()));
                }
                Ok(h.coefficients().dot(&h.gram().view()).mapv(|v| v / norm))
            }
        }
    }
}

impl<T: Real> From<LinearMap<T>> for Model<T> {
    fn from(h: LinearMap<T>) -> Self {
        Model::Linear(h)
    }
}

impl<T: Real> From<KernelMap<T>> for Model<T> {
    fn from(h: KernelMap<T>) -> Self {
        Model::Kernel(h)
    }
}

/// On-disk model layout; matrices are row-major arrays of arrays.
#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", bound = "T: Real")]
enum ModelDoc<T> {
    Linear {
        lambda_cap: T,
        #[serde(rename = "W")]
        w: Vec<Vec<T>>,
    },
    Kernel {
        lambda_cap: T,
        #[serde(rename = "A")]
        a: Vec<Vec<T>>,
        anchors: Vec<Vec<T>>,
        kernel: KernelSpec<T>,
    },
}

fn to_rows<T: Real>(m: ArrayView2<'_, T>) -> Vec<Vec<T>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows<T: Real>(rows: Vec<Vec<T>>) -> Result<Array2<T>> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != n_cols) {
        return Err(Error::Parse { line: bad + 1, msg: "ragged matrix row".into() });
    }
    let flat: Vec<T> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n_rows, n_cols), flat).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })
}

impl<T: Real> From<Model<T>> for ModelDoc<T> {
    fn from(m: Model<T>) -> Self {
        match m {
            Model::Linear(h) => ModelDoc::Linear { lambda_cap: h.lambda_cap, w: to_rows(h.w.view()) },
            Model::Kernel(h) => ModelDoc::Kernel {
                lambda_cap: h.lambda_cap,
                a: to_rows(h.a.view()),
                anchors: to_rows(h.anchors.view()),
                kernel: h.kernel,
            },
        }
    }
}

impl<T: Real> TryFrom<ModelDoc<T>> for Model<T> {
    type Error = Error;

    fn try_from(doc: ModelDoc<T>) -> Result<Self> {
        Ok(match doc {
            ModelDoc::Linear { lambda_cap, w } => Model::Linear(LinearMap::new(from_rows(w)?, lambda_cap)?),
            ModelDoc::Kernel { lambda_cap, a, anchors, kernel } => Model::Kernel(KernelMap::new(
                from_rows(a)?,
                SampleMatrix::new(from_rows(anchors)?)?,
                kernel,
                lambda_cap,
            )?),
        })
    }
}
