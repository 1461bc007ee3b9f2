//! Stress-loss gradients and projected gradient descent over both
//! hypothesis classes.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{empirical_risk, DistanceMatrix, SampleMatrix};
use crate::error::{Error, Result};
use crate::hypotheses::{Hypothesis, KernelMap, LinearMap, Model};
use crate::kernels::{psd_check, KernelSpec};
use crate::scalar::Real;

/// Risk above this is treated as divergence.
pub const DIVERGENCE_RISK: f64 = 1e12;

/// Half-width of the uniform initialization interval.
pub const INIT_SCALE: f64 = 0.01;

/// Tolerance used when checking that a kernel Gram matrix is PSD before
/// training.
pub const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Real")]
pub struct TrainConfig<T> {
    pub step_size: T,
    pub max_iters: usize,
    /// Stop once the projected-gradient step norm `‖P − P⁺‖_F / step`
    /// drops below this.
    pub grad_tol: T,
    /// Weight of the `λ ‖h‖` penalty; 0 trains in constrained-only mode.
    pub penalty_lambda: T,
    /// Distances are smoothed as `sqrt(‖·‖² + eps²)`.
    pub smoothing_eps: T,
    pub seed: u64,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            step_size: T::lit(0.5),
            max_iters: 5000,
            grad_tol: T::lit(1e-9),
            penalty_lambda: T::zero(),
            smoothing_eps: T::lit(1e-9),
            seed: 0,
        }
    }
}

impl<T: Real> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: T| v > T::zero() && v.is_finite();
        let nonneg = |v: T| v >= T::zero() && v.is_finite();
        if !positive(self.step_size) {
            return Err(Error::InvalidParameter(format!("step_size must be > 0, got {}", self.step_size)));
        }
        if !positive(self.grad_tol) {
            return Err(Error::InvalidParameter(format!("grad_tol must be > 0, got {}", self.grad_tol)));
        }
        if !nonneg(self.penalty_lambda) {
            return Err(Error::InvalidParameter(format!(
                "penalty_lambda must be >= 0, got {}",
                self.penalty_lambda
            )));
        }
        if !nonneg(self.smoothing_eps) {
            return Err(Error::InvalidParameter(format!(
                "smoothing_eps must be >= 0, got {}",
                self.smoothing_eps
            )));
        }
        Ok(())
    }
}

/// Hypothesis class to train over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "lowercase", bound = "T: Real")]
pub enum ModelClass<T> {
    Linear { k: usize, lambda_cap: T },
    Kernel { kernel: KernelSpec<T>, k: usize, lambda_cap: T },
}

impl<T: Real> ModelClass<T> {
    pub fn lambda_cap(&self) -> T {
        match *self {
            ModelClass::Linear { lambda_cap, .. } | ModelClass::Kernel { lambda_cap, .. } => lambda_cap,
        }
    }

    pub fn k(&self) -> usize {
        match *self {
            ModelClass::Linear { k, .. } | ModelClass::Kernel { k, .. } => k,
        }
    }

    /// Seeded uniform initialization in `[−0.01, 0.01]`, projected into the
    /// ball.
    pub fn initialize(&self, s: &SampleMatrix<T>, seed: u64) -> Result<Model<T>> {
        let k = self.k();
        if k == 0 {
            return Err(Error::InvalidParameter("embedding dimension k must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows: usize, cols: usize| {
            Array2::from_shape_simple_fn((rows, cols), || T::lit(rng.random_range(-INIT_SCALE..=INIT_SCALE)))
        };
        let model = match *self {
            ModelClass::Linear { lambda_cap, .. } => Model::Linear(LinearMap::new(draw(k, s.dim()), lambda_cap)?),
            ModelClass::Kernel { kernel, lambda_cap, .. } => {
                Model::Kernel(KernelMap::new(draw(k, s.len()), s.clone(), kernel, lambda_cap)?)
            }
        };
        model.project_norm_ball()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TrainReport<T> {
    pub final_risk: T,
    pub iterations_used: usize,
    pub final_model_norm: T,
    pub converged: bool,
    pub diverged: bool,
    /// Empirical risk of the iterate at the start of each iteration.
    pub risk_trace: Vec<T>,
}

/// Result of one pass over all pairs.
pub(crate) struct StressPass<T> {
    /// `(1/m²) Σ w_ij (d̃_ij − D_ij)²`.
    pub smoothed: T,
    /// `(1/m²) Σ (d_ij − D_ij)²` without smoothing or weights.
    pub risk: T,
    /// `(1/m²) Σ w_ij (d_ij − D_ij)²` without smoothing.
    pub weighted: T,
    /// Gradient with respect to the parameters `P`.
    pub gradient: Array2<T>,
}

/// One pass of the weighted stress loss for parameters `p` over the design
/// `f` (`Y = F Pᵀ`). Pair weights default to 1.
///
/// Per ordered pair the gradient is `c_ij P δ δᵀ` with
/// `c_ij = 2 w_ij (d̃_ij − D_ij) / (m² d̃_ij)`, and `c_ij = 0` when
/// `d̃_ij = 0`. Summed over pairs this is `2 Yᵀ L F` for the Laplacian
/// `L = diag(c 1) − c`.
pub(crate) fn stress_pass<T: Real>(
    p: ArrayView2<'_, T>,
    f: ArrayView2<'_, T>,
    d: &DistanceMatrix<T>,
    weights: Option<ArrayView2<'_, T>>,
    eps: T,
) -> Result<StressPass<T>> {
    let m = f.nrows();
    if d.size() != m {
        return Err(Error::DimensionMismatch { expected: m, got: d.size() });
    }
    let y = f.dot(&p.t());
    let m2 = T::from_usize(m * m).expect("m² fits in scalar");
    let two = T::lit(2.0);
    let eps2 = eps * eps;
    let mut c = Array2::<T>::zeros((m, m));
    let mut smoothed = T::zero();
    let mut risk = T::zero();
    let mut weighted = T::zero();
    for i in 0..m {
        let yi = y.row(i);
        for j in (i + 1)..m {
            let sq: T = yi.iter().zip(y.row(j).iter()).map(|(&a, &b)| (a - b) * (a - b)).sum();
            let target = d.get(i, j);
            let w = weights.map_or(T::one(), |w| w[[i, j]]);
            let dist = sq.sqrt();
            let smooth = (sq + eps2).sqrt();
            let resid2 = (dist - target) * (dist - target);
            risk += two * resid2;
            weighted += two * w * resid2;
            smoothed += two * w * (smooth - target) * (smooth - target);
            if smooth > T::zero() {
                let cij = two * w * (smooth - target) / (m2 * smooth);
                c[[i, j]] = cij;
                c[[j, i]] = cij;
            }
        }
    }
    if !(smoothed.is_finite() && risk.is_finite()) {
        return Err(Error::NonFiniteIntermediate("stress loss"));
    }
    let row_sums = c.sum_axis(Axis(1));
    let mut lf = c.dot(&f).mapv(|v| -v);
    for (mut row, (&s, frow)) in lf.axis_iter_mut(Axis(0)).zip(row_sums.iter().zip(f.axis_iter(Axis(0)))) {
        row.scaled_add(s, &frow);
    }
    let gradient = y.t().dot(&lf).mapv(|v| v * two);
    if gradient.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteIntermediate("stress gradient"));
    }
    Ok(StressPass { smoothed: smoothed / m2, risk: risk / m2, weighted: weighted / m2, gradient })
}

/// Empirical risk with distances smoothed by `eps`. Diagonal pairs are
/// exact zeros and contribute nothing.
pub fn smoothed_risk<T: Real>(h: &Model<T>, s: &SampleMatrix<T>, d: &DistanceMatrix<T>, eps: T) -> Result<T> {
    let f = h.design(s)?;
    Ok(stress_pass(h.params(), f.view(), d, None, eps)?.smoothed)
}

/// Gradient of [`smoothed_risk`] with respect to `W` (linear) or `A`
/// (kernel).
pub fn risk_gradient<T: Real>(
    h: &Model<T>,
    s: &SampleMatrix<T>,
    d: &DistanceMatrix<T>,
    eps: T,
) -> Result<Array2<T>> {
    let f = h.design(s)?;
    Ok(stress_pass(h.params(), f.view(), d, None, eps)?.gradient)
}

/// Smoothed risk plus `penalty_lambda · model_norm(h)` (the norm, not its
/// square).
pub fn objective<T: Real>(
    h: &Model<T>,
    s: &SampleMatrix<T>,
    d: &DistanceMatrix<T>,
    penalty_lambda: T,
    eps: T,
) -> Result<T> {
    if !(penalty_lambda >= T::zero()) {
        return Err(Error::InvalidParameter(format!("penalty_lambda must be >= 0, got {penalty_lambda}")));
    }
    let risk = smoothed_risk(h, s, d, eps)?;
    if penalty_lambda == T::zero() {
        return Ok(risk);
    }
    Ok(risk + penalty_lambda * h.model_norm()?)
}

/// Train from a seeded initialization of `class`.
pub fn train<T: Real>(
    s: &SampleMatrix<T>,
    d: &DistanceMatrix<T>,
    class: &ModelClass<T>,
    cfg: &TrainConfig<T>,
) -> Result<(Model<T>, TrainReport<T>)> {
    cfg.validate()?;
    if d.size() != s.len() {
        return Err(Error::DimensionMismatch { expected: s.len(), got: d.size() });
    }
    let init = class.initialize(s, cfg.seed)?;
    if let Model::Kernel(h) = &init {
        let check = psd_check(h.gram(), T::lit(PSD_TOL))?;
        if !check.passed {
            return Err(Error::NotPsd { min_eigenvalue: check.min_eigenvalue });
        }
    }
    train_from(init, s, d, cfg)
}

/// Projected gradient descent from an explicit starting model:
/// `P ← Π(P − step · (∇R̂ + λ ∂‖h‖))`.
pub fn train_from<T: Real>(
    init: Model<T>,
    s: &SampleMatrix<T>,
    d: &DistanceMatrix<T>,
    cfg: &TrainConfig<T>,
) -> Result<(Model<T>, TrainReport<T>)> {
    cfg.validate()?;
    let f = init.design(s)?;
    let mut model = init.project_norm_ball()?;
    let mut risk_trace = Vec::with_capacity(cfg.max_iters.min(1 << 16));
    let mut converged = false;
    let mut diverged = false;
    let mut iterations_used = 0;
    let blowup = T::lit(DIVERGENCE_RISK);

    for _ in 0..cfg.max_iters {
        let pass = match stress_pass(model.params(), f.view(), d, None, cfg.smoothing_eps) {
            Ok(p) => p,
            Err(Error::NonFiniteIntermediate(_)) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        risk_trace.push(pass.risk);
        if pass.risk > blowup {
            diverged = true;
            break;
        }
        let mut grad = pass.gradient;
        if cfg.penalty_lambda > T::zero() {
            grad.scaled_add(cfg.penalty_lambda, &model.norm_subgradient()?);
        }
        let mut next = model.params().to_owned();
        next.scaled_add(-cfg.step_size, &grad);
        if next.iter().any(|v| !v.is_finite()) {
            diverged = true;
            break;
        }
        let candidate = model.with_params(next).project_norm_ball()?;
        let moved: T = candidate
            .params()
            .iter()
            .zip(model.params().iter())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt()
            / cfg.step_size;
        model = candidate;
        iterations_used += 1;
        if moved < cfg.grad_tol {
            converged = true;
            break;
        }
    }

    let d_hat = model.embedding_distance_matrix(s)?;
    let final_risk = empirical_risk(d_hat.view(), d)?;
    if !final_risk.is_finite() || final_risk > blowup {
        diverged = true;
        converged = false;
    }
    let report = TrainReport {
        final_risk,
        iterations_used,
        final_model_norm: model.model_norm()?,
        converged,
        diverged,
        risk_trace,
    };
    Ok((model, report))
}
