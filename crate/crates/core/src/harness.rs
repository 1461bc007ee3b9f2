//! Seeded synthetic problems, held-out risk, and the bound-coverage
//! experiment.

use std::io::Write;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::certify;
use crate::data::{empirical_risk, pairwise_distances, validate_distance_matrix, DistanceMatrix, SampleMatrix};
use crate::error::{Error, Result};
use crate::hypotheses::{Hypothesis, Model};
use crate::linalg;
use crate::optimizer::{train, ModelClass, TrainConfig};
use crate::scalar::Real;

/// Added to a trial's seed to obtain its held-out sample seed.
pub const HOLDOUT_SEED_OFFSET: u64 = 1 << 32;

/// Noise draws are truncated at this many standard deviations.
const NOISE_TRUNCATION: f64 = 3.0;

/// Sampling law for a synthetic problem: features uniform in a ball, targets
/// the distances under a hidden linear map plus symmetric noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SyntheticSpec<T> {
    pub m: usize,
    pub n: usize,
    pub k_true: usize,
    pub radius_r: T,
    pub target_map_norm: T,
    pub noise_sigma: T,
    /// Seeds the sample (features and noise).
    pub seed: u64,
    /// Seeds the hidden map; falls back to `seed`. Two specs sharing a map
    /// seed share the same law.
    #[serde(default)]
    pub map_seed: Option<u64>,
}

impl<T: Real> Default for SyntheticSpec<T> {
    fn default() -> Self {
        Self {
            m: 50,
            n: 2,
            k_true: 2,
            radius_r: T::one(),
            target_map_norm: T::one(),
            noise_sigma: T::lit(0.05),
            seed: 0,
            map_seed: None,
        }
    }
}

impl<T: Real> SyntheticSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::TooFewPoints(self.m));
        }
        if self.n == 0 || self.k_true == 0 {
            return Err(Error::InvalidParameter("n and k_true must be >= 1".into()));
        }
        if !(self.radius_r > T::zero()) || !self.radius_r.is_finite() {
            return Err(Error::InvalidParameter(format!("radius_r must be > 0, got {}", self.radius_r)));
        }
        if !(self.target_map_norm > T::zero()) || !self.target_map_norm.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "target_map_norm must be > 0, got {}",
                self.target_map_norm
            )));
        }
        if !(self.noise_sigma >= T::zero()) || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }

    pub fn resolved_map_seed(&self) -> u64 {
        self.map_seed.unwrap_or(self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData<T: Real> {
    pub samples: SampleMatrix<T>,
    pub distances: DistanceMatrix<T>,
    /// Hidden `k_true × N` map with spectral norm `target_map_norm`.
    pub w_true: Array2<T>,
}

fn normal<T: Real>(rng: &mut ChaCha8Rng) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

pub fn generate_synthetic<T: Real>(spec: &SyntheticSpec<T>) -> Result<SyntheticData<T>> {
    spec.validate()?;
    let mut map_rng = ChaCha8Rng::seed_from_u64(spec.resolved_map_seed());
    map_rng.set_stream(0);
    let w_true = loop {
        let w = Array2::from_shape_simple_fn((spec.k_true, spec.n), || normal::<T>(&mut map_rng));
        let norm = linalg::spectral_norm(w.view())?;
        if norm > T::zero() {
            break w.mapv(|v| v * spec.target_map_norm / norm);
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let dim = T::from_usize(spec.n).expect("dimension fits in scalar");
    let mut x = Array2::<T>::zeros((spec.m, spec.n));
    for mut row in x.rows_mut() {
        let norm = loop {
            row.mapv_inplace(|_| normal::<T>(&mut rng));
            let norm = row.dot(&row).sqrt();
            if norm > T::zero() {
                break norm;
            }
        };
        let u: T = T::lit(rng.random::<f64>());
        let radius = spec.radius_r * u.powf(T::one() / dim);
        row.mapv_inplace(|v| v * radius / norm);
        let len = row.dot(&row).sqrt();
        if len > spec.radius_r {
            row.mapv_inplace(|v| v * spec.radius_r / len);
        }
    }

    let mut d = pairwise_distances(x.dot(&w_true.t()).view())?;
    if spec.noise_sigma > T::zero() {
        let cut = T::lit(NOISE_TRUNCATION);
        for i in 0..spec.m {
            for j in (i + 1)..spec.m {
                let z = loop {
                    let z = normal::<T>(&mut rng);
                    if z.abs() <= cut {
                        break z;
                    }
                };
                let v = (d[[i, j]] + spec.noise_sigma * z).max(T::zero());
                d[[i, j]] = v;
                d[[j, i]] = v;
            }
        }
    }

    Ok(SyntheticData {
        samples: SampleMatrix::new(x)?,
        distances: validate_distance_matrix(d, T::zero())?,
        w_true,
    })
}

/// Plug-in estimate of the generalization error: the empirical risk of
/// `model` on a fresh sample of `n_holdout` points drawn from `spec`'s law.
pub fn holdout_risk<T: Real>(model: &Model<T>, spec: &SyntheticSpec<T>, n_holdout: usize) -> Result<T> {
    if n_holdout < 2 {
        return Err(Error::TooFewPoints(n_holdout));
    }
    let fresh = SyntheticSpec { m: n_holdout, ..*spec };
    let data = generate_synthetic(&fresh)?;
    let d_hat = model.embedding_distance_matrix(&data.samples)?;
    empirical_risk(d_hat.view(), &data.distances)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TrialResult<T> {
    pub trial: usize,
    pub seed: u64,
    pub train_risk: T,
    pub holdout_risk: T,
    /// `holdout_risk − train_risk`.
    pub gap: T,
    pub certificate_slack: T,
    pub certificate_bound: T,
    /// `gap ≤ certificate_slack`.
    pub covered: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ExperimentReport<T> {
    pub n_trials: usize,
    pub coverage_rate: T,
    pub delta: T,
    /// `coverage_rate ≥ 1 − delta`.
    pub passed: bool,
    pub mean_gap: T,
    pub mean_slack: T,
    pub nonconverged_trials: usize,
    pub n_holdout: usize,
    pub spec: SyntheticSpec<T>,
    pub class: ModelClass<T>,
    pub train_config: TrainConfig<T>,
    pub trials: Vec<TrialResult<T>>,
}

impl<T: Real> ExperimentReport<T> {
    /// Per-trial CSV: `trial,train_risk,holdout_risk,gap,slack,covered`.
    pub fn write_trials_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "trial,train_risk,holdout_risk,gap,slack,covered")?;
        for t in &self.trials {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                t.trial, t.train_risk, t.holdout_risk, t.gap, t.certificate_slack, t.covered
            )?;
        }
        Ok(())
    }
}

fn run_trial<T: Real>(
    spec: &SyntheticSpec<T>,
    class: &ModelClass<T>,
    cfg: &TrainConfig<T>,
    delta: T,
    n_holdout: usize,
    trial: usize,
) -> Result<TrialResult<T>> {
    let offset = trial as u64;
    let seed = spec.seed.wrapping_add(offset);
    let map_seed = spec.resolved_map_seed().wrapping_add(offset);
    let train_spec = SyntheticSpec { seed, map_seed: Some(map_seed), ..*spec };
    let data = generate_synthetic(&train_spec)?;
    let trial_cfg = TrainConfig { seed: cfg.seed.wrapping_add(offset), ..*cfg };
    let (model, report) = train(&data.samples, &data.distances, class, &trial_cfg)?;
    let cert = certify(&model, &data.samples, &data.distances, delta)?;
    let holdout_spec = SyntheticSpec { seed: seed.wrapping_add(HOLDOUT_SEED_OFFSET), ..train_spec };
    let holdout = holdout_risk(&model, &holdout_spec, n_holdout)?;
    let gap = holdout - cert.empirical_risk;
    Ok(TrialResult {
        trial,
        seed,
        train_risk: cert.empirical_risk,
        holdout_risk: holdout,
        gap,
        certificate_slack: cert.slack,
        certificate_bound: cert.bound,
        covered: gap <= cert.slack,
        converged: report.converged,
    })
}

/// Repeat generate → train → certify → held-out evaluation for `n_trials`
/// trials with seeds `spec.seed + t` and count how often the observed gap
/// stays under the certified slack.
pub fn run_coverage_experiment<T: Real>(
    spec: &SyntheticSpec<T>,
    class: &ModelClass<T>,
    cfg: &TrainConfig<T>,
    delta: T,
    n_trials: usize,
    n_holdout: usize,
) -> Result<ExperimentReport<T>> {
    spec.validate()?;
    cfg.validate()?;
    if n_trials == 0 {
        return Err(Error::InvalidParameter("n_trials must be >= 1".into()));
    }
    if !(delta > T::zero() && delta <= T::one()) {
        return Err(Error::InvalidDelta(delta.to_f64().unwrap_or(f64::NAN)));
    }
    if n_holdout < 2 {
        return Err(Error::TooFewPoints(n_holdout));
    }
    let trials = (0..n_trials)
        .into_par_iter()
        .map(|t| run_trial(spec, class, cfg, delta, n_holdout, t))
        .collect::<Result<Vec<_>>>()?;

    let n = T::from_usize(n_trials).expect("trial count fits in scalar");
    let covered = trials.iter().filter(|t| t.covered).count();
    let coverage_rate = T::from_usize(covered).expect("count fits in scalar") / n;
    Ok(ExperimentReport {
        n_trials,
        coverage_rate,
        delta,
        passed: coverage_rate >= T::one() - delta,
        mean_gap: trials.iter().map(|t| t.gap).sum::<T>() / n,
        mean_slack: trials.iter().map(|t| t.certificate_slack).sum::<T>() / n,
        nonconverged_trials: trials.iter().filter(|t| !t.converged).count(),
        n_holdout,
        spec: *spec,
        class: *class,
        train_config: *cfg,
        trials,
    })
}
