//! Generalization certificates for the linear and kernel classes, and a
//! Monte-Carlo estimate of the loss-class Rademacher complexity.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{data_radii, empirical_risk, DistanceMatrix, SampleMatrix};
use crate::error::{Error, Result};
use crate::hypotheses::{Hypothesis, Model};
use crate::kernels::{feature_space_radius, gram};
use crate::optimizer::{stress_pass, ModelClass, TrainConfig};
use crate::scalar::Real;

/// Radii and norm budget feeding the per-pair loss bound `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundMode<T> {
    Linear { lambda: T, r: T, beta: T },
    Kernel { lambda: T, q: T, beta: T },
}

/// Per-pair loss bound: `Λ max(2r, β)` for linear maps and the
/// conservative `Λ max(2q, β)` for kernel maps, which does not assume
/// nonnegative kernel values.
pub fn loss_bound_m<T: Real>(mode: BoundMode<T>) -> T {
    let two = T::lit(2.0);
    match mode {
        BoundMode::Linear { lambda, r, beta } => lambda * (two * r).max(beta),
        BoundMode::Kernel { lambda, q, beta } => lambda * (two * q).max(beta),
    }
}

fn sample_count<T: Real>(m: usize) -> Result<T> {
    if m == 0 {
        return Err(Error::InvalidParameter("sample size m must be >= 1".into()));
    }
    Ok(T::from_usize(m).expect("sample size fits in scalar"))
}

/// `Λ² max(2r, β)² / m`.
pub fn rademacher_bound_linear<T: Real>(lambda: T, r: T, beta: T, m: usize) -> Result<T> {
    let spread = (T::lit(2.0) * r).max(beta);
    Ok(lambda * lambda * spread * spread / sample_count::<T>(m)?)
}

/// `Λ² max(√2 q, β)² / m`.
pub fn rademacher_bound_kernel<T: Real>(lambda: T, q: T, beta: T, m: usize) -> Result<T> {
    let spread = (T::lit(2.0).sqrt() * q).max(beta);
    Ok(lambda * lambda * spread * spread / sample_count::<T>(m)?)
}

/// Inputs echoed into a certificate produced by [`certify`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CertificateInputs<T> {
    pub mode: String,
    pub lambda: T,
    pub r: T,
    pub beta: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<T>,
}

/// `bound = empirical_risk + slack` with
/// `slack = rademacher_term + M sqrt(2 ln(1/δ) / m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BoundCertificate<T> {
    pub empirical_risk: T,
    /// Twice the Rademacher upper bound.
    pub rademacher_term: T,
    #[serde(rename = "M")]
    pub loss_bound: T,
    pub delta: T,
    pub m: usize,
    pub slack: T,
    pub bound: T,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<CertificateInputs<T>>,
}

fn confidence_term<T: Real>(loss_bound: T, delta: T, m: usize) -> T {
    let m = T::from_usize(m).expect("sample size fits in scalar");
    let log_term = (T::one() / delta).ln();
    loss_bound * (T::lit(2.0) * log_term / m).sqrt()
}

impl<T: Real> BoundCertificate<T> {
    /// `M sqrt(2 ln(1/δ) / m)`.
    pub fn confidence_term(&self) -> T {
        confidence_term(self.loss_bound, self.delta, self.m)
    }

    /// Slack recomputed from the stored fields.
    pub fn recompute_slack(&self) -> T {
        self.rademacher_term + self.confidence_term()
    }
}

/// Assemble the high-probability bound
/// `R(h) ≤ R̂(h) + 2 𝔯 + M sqrt(2 ln(1/δ) / m)`.
///
/// `delta = 1` is accepted and zeroes the confidence term.
pub fn generalization_bound<T: Real>(
    empirical_risk: T,
    rademacher_upper: T,
    loss_bound: T,
    m: usize,
    delta: T,
) -> Result<BoundCertificate<T>> {
    if !(delta > T::zero() && delta <= T::one()) {
        return Err(Error::InvalidDelta(delta.to_f64().unwrap_or(f64::NAN)));
    }
    sample_count::<T>(m)?;
    for (name, v) in [("empirical risk", empirical_risk), ("rademacher bound", rademacher_upper), ("M", loss_bound)] {
        if !(v >= T::zero()) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    let rademacher_term = T::lit(2.0) * rademacher_upper;
    let slack = rademacher_term + confidence_term(loss_bound, delta, m);
    Ok(BoundCertificate {
        empirical_risk,
        rademacher_term,
        loss_bound,
        delta,
        m,
        slack,
        bound: empirical_risk + slack,
        inputs: None,
    })
}

/// Certificate for a trained model on its training data. The certified
/// class has budget `max(lambda_cap, model_norm)` so that it contains the
/// model.
pub fn certify<T: Real>(
    model: &Model<T>,
    s: &SampleMatrix<T>,
    d: &DistanceMatrix<T>,
    delta: T,
) -> Result<BoundCertificate<T>> {
    let d_hat = model.embedding_distance_matrix(s)?;
    let r_hat = empirical_risk(d_hat.view(), d)?;
    let radii = data_radii(s, d);
    let lambda = model.lambda_cap().max(model.model_norm()?);
    let m = s.len();
    let (mode, rademacher, q) = match model {
        Model::Linear(_) => {
            let mode = BoundMode::Linear { lambda, r: radii.r, beta: radii.beta };
            (mode, rademacher_bound_linear(lambda, radii.r, radii.beta, m)?, None)
        }
        Model::Kernel(h) => {
            let q = feature_space_radius(&gram(h.kernel(), s))?;
            let mode = BoundMode::Kernel { lambda, q, beta: radii.beta };
            (mode, rademacher_bound_kernel(lambda, q, radii.beta, m)?, Some(q))
        }
    };
    let mut cert = generalization_bound(r_hat, rademacher, loss_bound_m(mode), m, delta)?;
    cert.inputs = Some(CertificateInputs {
        mode: match model {
            Model::Linear(_) => "linear".into(),
            Model::Kernel(_) => "kernel".into(),
        },
        lambda,
        r: radii.r,
        beta: radii.beta,
        q,
    });
    Ok(cert)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct McEstimate<T> {
    pub estimate: T,
    pub std_error: T,
    /// Best value found for each sign draw, in draw order.
    pub per_draw: Vec<T>,
}

/// Monte-Carlo estimate of
/// `E_σ sup_h (1/m²) Σ_ij σ_ij (‖h(x_i) − h(x_j)‖ − D_ij)²`.
///
/// Each draw takes symmetric signs `σ_ij = σ_ji` from its own stream
/// `(seed, draw)` and approximates the supremum by projected gradient ascent
/// under `inner_cfg`, keeping the best iterate (the zero map included).
/// Local ascent only reaches a lower bound of the supremum, so the estimate
/// is biased low.
pub fn empirical_rademacher_mc<T: Real>(
    s: &SampleMatrix<T>,
    d: &DistanceMatrix<T>,
    class: &ModelClass<T>,
    n_sigma: usize,
    inner_cfg: &TrainConfig<T>,
    seed: u64,
) -> Result<McEstimate<T>> {
    if n_sigma == 0 {
        return Err(Error::InvalidParameter("n_sigma must be >= 1".into()));
    }
    inner_cfg.validate()?;
    if d.size() != s.len() {
        return Err(Error::DimensionMismatch { expected: s.len(), got: d.size() });
    }
    let per_draw = (0..n_sigma)
        .into_par_iter()
        .map(|draw| sup_for_draw(s, d, class, inner_cfg, seed, draw as u64))
        .collect::<Result<Vec<T>>>()?;
    let n = T::from_usize(n_sigma).expect("draw count fits in scalar");
    let mean = per_draw.iter().copied().sum::<T>() / n;
    let std_error = if n_sigma > 1 {
        let var = per_draw.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (n - T::one());
        (var / n).sqrt()
    } else {
        T::zero()
    };
    Ok(McEstimate { estimate: mean, std_error, per_draw })
}

fn sup_for_draw<T: Real>(
    s: &SampleMatrix<T>,
    d: &DistanceMatrix<T>,
    class: &ModelClass<T>,
    cfg: &TrainConfig<T>,
    seed: u64,
    draw: u64,
) -> Result<T> {
    let m = s.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    let mut sigma = Array2::<T>::zeros((m, m));
    for i in 0..m {
        for j in i..m {
            let v = if rng.random::<bool>() { T::one() } else { -T::one() };
            sigma[[i, j]] = v;
            sigma[[j, i]] = v;
        }
    }
    let init_seed = rng.random::<u64>();
    let mut model = class.initialize(s, init_seed)?;
    let f = model.design(s)?;

    let zero = model.with_params(Array2::zeros(model.params().dim()));
    let mut best = stress_pass(zero.params(), f.view(), d, Some(sigma.view()), cfg.smoothing_eps)?.weighted;
    for _ in 0..cfg.max_iters {
        let pass = stress_pass(model.params(), f.view(), d, Some(sigma.view()), cfg.smoothing_eps)?;
        best = best.max(pass.weighted);
        let mut next = model.params().to_owned();
        next.scaled_add(cfg.step_size, &pass.gradient);
        if next.iter().any(|v| !v.is_finite()) {
            break;
        }
        model = model.with_params(next).project_norm_ball()?;
    }
    let last = stress_pass(model.params(), f.view(), d, Some(sigma.view()), cfg.smoothing_eps)?;
    Ok(best.max(last.weighted))
}
