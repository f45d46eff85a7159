//! Closed-form noise prediction when the data law is a known Gaussian
//! mixture. Serves as the exact target model in the statistical suites.
//!
//! With `x_t = sqrt(abar) x0 + sqrt(1-abar) eps` and components
//! `N(m_k, v I)`, the marginal of `x_t` under component `k` is
//! `N(sqrt(abar) m_k, (abar v + 1 - abar) I)`. Posterior responsibilities
//! over components give `E[x0 | x_t]`, and the optimal noise prediction is
//! `(x_t - sqrt(abar) E[x0 | x_t]) / sqrt(1 - abar)`.

use crate::denoiser::{Denoiser, TARGET_COST_WEIGHT};
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::util::log_sum_exp;

#[derive(Debug, Clone)]
pub struct AnalyticGaussianMixtureDenoiser {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variance: f64,
    sched: NoiseSchedule,
    cost_weight: f64,
    dim: usize,
}

impl AnalyticGaussianMixtureDenoiser {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        variance: f64,
        sched: NoiseSchedule,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() {
            return Err(Error::InvalidParameter(
                "need one weight per component mean".into(),
            ));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::InvalidParameter(
                "component means must share a nonzero dimension".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidParameter(
                "mixture weights must be positive and finite".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights must sum to 1, got {total}"
            )));
        }
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(Error::InvalidParameter(
                "component variance must be finite and >= 0".into(),
            ));
        }
        Ok(AnalyticGaussianMixtureDenoiser {
            weights,
            means,
            variance,
            sched,
            cost_weight: TARGET_COST_WEIGHT,
            dim,
        })
    }

    /// Single-component standard normal data, the workhorse test target.
    pub fn standard_normal(dim: usize, sched: NoiseSchedule) -> Result<Self> {
        Self::new(vec![1.0], vec![vec![0.0; dim]], 1.0, sched)
    }

    pub fn with_cost_weight(mut self, w: f64) -> Self {
        self.cost_weight = w;
        self
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.sched
    }

    /// `E[x0 | x_t]` under the mixture model.
    pub fn posterior_x0_mean(&self, x: &[f64], t: usize) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "latent dimension mismatch");
        let ab = self.sched.alpha_bar(t);
        let root_ab = ab.sqrt();
        let s2 = ab * self.variance + (1.0 - ab);
        let log_resp: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.means)
            .map(|(w, m)| {
                let d2: f64 = x
                    .iter()
                    .zip(m)
                    .map(|(xi, mi)| {
                        let d = xi - root_ab * mi;
                        d * d
                    })
                    .sum();
                w.ln() - d2 / (2.0 * s2)
            })
            .collect();
        let lse = log_sum_exp(&log_resp);
        let gain = root_ab * self.variance / s2;
        let mut e = vec![0.0; self.dim];
        for (lr, m) in log_resp.iter().zip(&self.means) {
            let r = (lr - lse).exp();
            for i in 0..self.dim {
                e[i] += r * (m[i] + gain * (x[i] - root_ab * m[i]));
            }
        }
        e
    }
}

impl Denoiser for AnalyticGaussianMixtureDenoiser {
    fn evaluate(&self, x: &[f64], t: usize, _cond: &[f64]) -> Vec<f64> {
        let ab = self.sched.alpha_bar(t);
        let e0 = self.posterior_x0_mean(x, t);
        let root_ab = ab.sqrt();
        let inv = 1.0 / (1.0 - ab).sqrt();
        x.iter()
            .zip(&e0)
            .map(|(xi, ei)| (xi - root_ab * ei) * inv)
            .collect()
    }

    fn latent_dim(&self) -> usize {
        self.dim
    }

    fn cond_dim(&self) -> usize {
        0
    }

    fn cost_weight(&self) -> f64 {
        self.cost_weight
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_vec, stream_rng};
    use crate::schedule::{build_schedule, forward_noise, ScheduleKind};
    use rand::Rng;

    fn sched() -> NoiseSchedule {
        build_schedule(40, 1e-3, 0.04, ScheduleKind::Linear).unwrap()
    }

    #[test]
    fn standard_normal_prediction_is_linear_in_x() {
        // For N(0,1) data: abar*1 + (1-abar) = 1, E[x0|x] = sqrt(abar) x,
        // so eps = (x - abar x) / sqrt(1-abar) = sqrt(1-abar) x exactly.
        let s = sched();
        let d = AnalyticGaussianMixtureDenoiser::standard_normal(1, s.clone()).unwrap();
        for t in [1, 13, 40] {
            let c = (1.0 - s.alpha_bar(t)).sqrt();
            for x in [-2.0, -0.4, 0.0, 1.7] {
                let e = d.evaluate(&[x], t, &[]);
                assert!((e[0] - c * x).abs() < 1e-12, "t={t} x={x}");
            }
        }
    }

    #[test]
    fn point_mass_recovers_exact_noise() {
        // variance = 0 pins x0, so eps = (x_t - sqrt(abar) m) / sqrt(1-abar).
        let s = sched();
        let m = vec![0.7, -0.2];
        let d =
            AnalyticGaussianMixtureDenoiser::new(vec![1.0], vec![m.clone()], 0.0, s.clone())
                .unwrap();
        let t = 21;
        let ab = s.alpha_bar(t);
        let x = [1.3, 0.5];
        let e = d.evaluate(&x, t, &[]);
        for i in 0..2 {
            let expect = (x[i] - ab.sqrt() * m[i]) / (1.0 - ab).sqrt();
            assert!((e[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_mixture_is_balanced_at_origin() {
        let s = sched();
        let d = AnalyticGaussianMixtureDenoiser::new(
            vec![0.5, 0.5],
            vec![vec![1.2], vec![-1.2]],
            0.2,
            s,
        )
        .unwrap();
        let e = d.evaluate(&[0.0], 17, &[]);
        assert!(e[0].abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_mixture_parameters() {
        let s = sched();
        assert!(
            AnalyticGaussianMixtureDenoiser::new(vec![0.5, 0.4], vec![vec![0.0], vec![1.0]], 1.0, s.clone())
                .is_err()
        );
        assert!(
            AnalyticGaussianMixtureDenoiser::new(vec![1.0], vec![vec![0.0]], -0.1, s.clone()).is_err()
        );
        assert!(AnalyticGaussianMixtureDenoiser::new(vec![], vec![], 1.0, s).is_err());
    }

    #[test]
    fn matches_monte_carlo_conditional_mean_per_bin() {
        // Regression oracle: over forward draws, bin x_t and compare the
        // empirical conditional mean of eps against the model's prediction.
        let s = sched();
        let d = AnalyticGaussianMixtureDenoiser::new(
            vec![0.4, 0.6],
            vec![vec![-1.0], vec![1.5]],
            0.3,
            s.clone(),
        )
        .unwrap();
        let t = 20;
        let mut rng = stream_rng(91, 0);
        let n = 100_000;
        let mut samples: Vec<(f64, f64)> = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.random();
            let comp = if u < 0.4 { 0 } else { 1 };
            let x0 =
                d.means[comp][0] + d.variance.sqrt() * normal_vec(&mut rng, 1)[0];
            let eps = normal_vec(&mut rng, 1)[0];
            let xt = forward_noise(&[x0], t, &[eps], &s).unwrap()[0];
            samples.push((xt, eps));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let bins = 15;
        let per = n / bins;
        for b in 0..bins {
            let chunk = &samples[b * per..(b + 1) * per];
            let emp: f64 = chunk.iter().map(|(_, e)| e).sum::<f64>() / per as f64;
            let model: f64 = chunk
                .iter()
                .map(|(x, _)| d.evaluate(&[*x], t, &[])[0])
                .sum::<f64>()
                / per as f64;
            let sd: f64 = {
                let var = chunk
                    .iter()
                    .map(|(_, e)| (e - emp) * (e - emp))
                    .sum::<f64>()
                    / per as f64;
                (var / per as f64).sqrt()
            };
            assert!(
                (emp - model).abs() < 4.0 * sd + 1e-3,
                "bin {b}: empirical {emp} vs model {model} (se {sd})"
            );
        }
    }
}
