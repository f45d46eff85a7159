//! DDPM noise schedules and the elementary forward/reverse steps.
//!
//! Timesteps run `T..=1` during sampling; `t = 0` is the clean sample.
//! Internally the per-step vectors are indexed by `t - 1`. The posterior
//! variance is `beta_t * (1 - abar_{t-1}) / (1 - abar_t)`, with the first
//! step's value defined as `beta_1` (the ratio degenerates there).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::util::all_finite;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// Posterior variance of the forward process given x0.
    Posterior,
    /// The raw beta_t ("fixed large") variance.
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Linear,
    SquaredCos,
}

/// A latent together with the timestep it lives at (`t = 0` is clean).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    pub x: Vec<f64>,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    num_steps: usize,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    posterior_var: Vec<f64>,
    variance_mode: VarianceMode,
}

/// Builds a schedule of `num_steps` betas. `SquaredCos` derives its betas
/// from the cosine alpha-bar curve and ignores the endpoint arguments.
pub fn build_schedule(
    num_steps: usize,
    beta_start: f64,
    beta_end: f64,
    kind: ScheduleKind,
) -> Result<NoiseSchedule> {
    if num_steps == 0 {
        return Err(Error::InvalidParameter("num_steps must be >= 1".into()));
    }
    match kind {
        ScheduleKind::Linear => {
            if !(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end) {
                return Err(Error::InvalidParameter(format!(
                    "need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
                )));
            }
            let betas = if num_steps == 1 {
                vec![beta_start]
            } else {
                let step = (beta_end - beta_start) / (num_steps - 1) as f64;
                (0..num_steps).map(|i| beta_start + step * i as f64).collect()
            };
            NoiseSchedule::from_betas(&betas, VarianceMode::Posterior)
        }
        ScheduleKind::SquaredCos => {
            let curve = |s: f64| {
                let a = (s + 0.008) / 1.008 * std::f64::consts::FRAC_PI_2;
                a.cos().powi(2)
            };
            let t = num_steps as f64;
            let betas: Vec<f64> = (1..=num_steps)
                .map(|i| {
                    let b = 1.0 - curve(i as f64 / t) / curve((i - 1) as f64 / t);
                    b.min(0.999)
                })
                .collect();
            NoiseSchedule::from_betas(&betas, VarianceMode::Posterior)
        }
    }
}

impl NoiseSchedule {
    /// Builds a schedule from explicit betas (each in (0, 1)).
    pub fn from_betas(betas: &[f64], variance_mode: VarianceMode) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidParameter("empty beta vector".into()));
        }
        if betas.iter().any(|b| !(b.is_finite() && *b > 0.0 && *b < 1.0)) {
            return Err(Error::InvalidParameter(
                "every beta must be finite and in (0, 1)".into(),
            ));
        }
        let alpha: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(betas.len());
        let mut prod = 1.0;
        for a in &alpha {
            prod *= a;
            alpha_bar.push(prod);
        }
        let mut posterior_var = Vec::with_capacity(betas.len());
        for i in 0..betas.len() {
            if i == 0 {
                posterior_var.push(betas[0]);
            } else {
                posterior_var.push(betas[i] * (1.0 - alpha_bar[i - 1]) / (1.0 - alpha_bar[i]));
            }
        }
        Ok(NoiseSchedule {
            num_steps: betas.len(),
            beta: betas.to_vec(),
            alpha,
            alpha_bar,
            posterior_var,
            variance_mode,
        })
    }

    pub fn with_variance_mode(mut self, mode: VarianceMode) -> Self {
        self.variance_mode = mode;
        self
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn variance_mode(&self) -> VarianceMode {
        self.variance_mode
    }

    fn check_t(&self, t: usize) {
        assert!(
            t >= 1 && t <= self.num_steps,
            "timestep {t} outside 1..={}",
            self.num_steps
        );
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.check_t(t);
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.check_t(t);
        self.alpha[t - 1]
    }

    /// Cumulative product of alphas; `alpha_bar(0) = 1` by convention.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            return 1.0;
        }
        self.check_t(t);
        self.alpha_bar[t - 1]
    }

    pub fn posterior_var(&self, t: usize) -> f64 {
        self.check_t(t);
        self.posterior_var[t - 1]
    }

    /// Reverse-step standard deviation at `t` under the configured mode.
    pub fn sigma(&self, t: usize) -> f64 {
        self.check_t(t);
        match self.variance_mode {
            VarianceMode::Posterior => self.posterior_var[t - 1].sqrt(),
            VarianceMode::Beta => self.beta[t - 1].sqrt(),
        }
    }

    /// Content digest used to pair checkpoints and datasets with the
    /// schedule they were produced under.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"specdiff-schedule-v1");
        h.update((self.num_steps as u64).to_le_bytes());
        for b in &self.beta {
            h.update(b.to_le_bytes());
        }
        h.update(match self.variance_mode {
            VarianceMode::Posterior => [0u8],
            VarianceMode::Beta => [1u8],
        });
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps` for `1 <= t <= T`.
pub fn forward_noise(
    x0: &[f64],
    t: usize,
    eps: &[f64],
    sched: &NoiseSchedule,
) -> Result<Vec<f64>> {
    if t == 0 || t > sched.num_steps() {
        return Err(Error::InvalidParameter(format!(
            "forward_noise needs 1 <= t <= {}, got {t}",
            sched.num_steps()
        )));
    }
    if x0.len() != eps.len() {
        return Err(Error::DimensionMismatch {
            expected: x0.len(),
            got: eps.len(),
        });
    }
    let ab = sched.alpha_bar(t);
    let (c0, c1) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| c0 * x + c1 * e).collect())
}

/// DDPM reverse mean and standard deviation at `t` from a noise prediction:
/// `mu = (x_t - beta_t / sqrt(1 - abar_t) * pred_eps) / sqrt(alpha_t)`.
pub fn posterior_step(
    pred_eps: &[f64],
    t: usize,
    x_t: &[f64],
    sched: &NoiseSchedule,
) -> Result<(Vec<f64>, f64)> {
    if t == 0 {
        return Err(Error::Contract(
            "posterior_step from t = 0: the clean sample has no reverse step".into(),
        ));
    }
    if t > sched.num_steps() {
        return Err(Error::InvalidParameter(format!(
            "t = {t} beyond schedule length {}",
            sched.num_steps()
        )));
    }
    if pred_eps.len() != x_t.len() {
        return Err(Error::DimensionMismatch {
            expected: x_t.len(),
            got: pred_eps.len(),
        });
    }
    let coef = sched.beta(t) / (1.0 - sched.alpha_bar(t)).sqrt();
    let inv_sqrt_alpha = 1.0 / sched.alpha(t).sqrt();
    let mu = x_t
        .iter()
        .zip(pred_eps)
        .map(|(x, e)| inv_sqrt_alpha * (x - coef * e))
        .collect();
    Ok((mu, sched.sigma(t)))
}

/// `mu + sigma * xi`. With `sigma = 0` this is the deterministic mean step.
pub fn sample_step(mu: &[f64], sigma: f64, xi: &[f64]) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if mu.len() != xi.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            got: xi.len(),
        });
    }
    if !all_finite(mu) || !all_finite(xi) {
        return Err(Error::InvalidParameter(
            "non-finite values in sample_step inputs".into(),
        ));
    }
    Ok(mu.iter().zip(xi).map(|(m, z)| m + sigma * z).collect())
}
