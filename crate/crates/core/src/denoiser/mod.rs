//! Noise-prediction models.
//!
//! Everything downstream talks to a [`Denoiser`]: given a latent at timestep
//! `t` and a conditioning vector it returns predicted noise. The target and
//! the drafter implement the same interface; they differ only in weights and
//! in the cost one evaluation contributes to the NFE tally.

mod analytic;
mod mlp;
mod train;

pub use analytic::AnalyticGaussianMixtureDenoiser;
pub use mlp::{MlpArch, MlpDenoiser, TIME_FEATURES};
pub use train::{
    ddpm_train_target, distill_drafter, distill_loss, gradient_check_ddpm,
    gradient_check_distill, DistillConfig, DistillLogRow, DistillStats, TrainConfig, TrainStats,
};

use crate::schedule::NoiseSchedule;

/// Cost of one target evaluation, in NFE units.
pub const TARGET_COST_WEIGHT: f64 = 1.0;
/// Default cost of one drafter evaluation, in NFE units.
pub const DRAFTER_COST_WEIGHT: f64 = 0.125;

pub trait Denoiser: Send + Sync {
    /// Predicted noise for latent `x` at timestep `t` (`1..=T`) under `cond`.
    /// Implementations are pure: same inputs, same output.
    fn evaluate(&self, x: &[f64], t: usize, cond: &[f64]) -> Vec<f64>;

    fn latent_dim(&self) -> usize;

    fn cond_dim(&self) -> usize;

    /// Relative cost of one evaluation in target-model units.
    fn cost_weight(&self) -> f64;

    /// Number of trainable parameters; 0 for closed-form models.
    fn param_count(&self) -> usize {
        0
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn evaluate(&self, x: &[f64], t: usize, cond: &[f64]) -> Vec<f64> {
        (**self).evaluate(x, t, cond)
    }
    fn latent_dim(&self) -> usize {
        (**self).latent_dim()
    }
    fn cond_dim(&self) -> usize {
        (**self).cond_dim()
    }
    fn cost_weight(&self) -> f64 {
        (**self).cost_weight()
    }
    fn param_count(&self) -> usize {
        (**self).param_count()
    }
}

#[derive(Debug, Clone, Copy)]
enum MeanShiftKind {
    /// Shift the reverse mean by `frac * sigma_t` per coordinate.
    SigmaFraction(f64),
    /// Shift the reverse mean by a fixed amount per coordinate.
    Absolute(f64),
}

/// Wraps a denoiser so that the reverse-step mean it induces is shifted by a
/// known amount. Used to build drafters with controlled disagreement (bias
/// studies, acceptance-rate sweeps) and, with shift zero, a synthetic
/// drafter that the target always accepts.
pub struct MeanShiftedDenoiser<D: Denoiser> {
    inner: D,
    kind: MeanShiftKind,
    sched: NoiseSchedule,
    cost_weight: f64,
}

impl<D: Denoiser> MeanShiftedDenoiser<D> {
    pub fn sigma_fraction(inner: D, frac: f64, sched: NoiseSchedule, cost_weight: f64) -> Self {
        MeanShiftedDenoiser {
            inner,
            kind: MeanShiftKind::SigmaFraction(frac),
            sched,
            cost_weight,
        }
    }

    pub fn absolute(inner: D, shift: f64, sched: NoiseSchedule, cost_weight: f64) -> Self {
        MeanShiftedDenoiser {
            inner,
            kind: MeanShiftKind::Absolute(shift),
            sched,
            cost_weight,
        }
    }

    /// The mean shift this wrapper induces at timestep `t`.
    pub fn mean_shift(&self, t: usize) -> f64 {
        match self.kind {
            MeanShiftKind::SigmaFraction(f) => f * self.sched.sigma(t),
            MeanShiftKind::Absolute(a) => a,
        }
    }
}

impl<D: Denoiser> Denoiser for MeanShiftedDenoiser<D> {
    fn evaluate(&self, x: &[f64], t: usize, cond: &[f64]) -> Vec<f64> {
        let mut eps = self.inner.evaluate(x, t, cond);
        // mu = (x - beta/sqrt(1-abar) * eps) / sqrt(alpha), so shifting eps by
        // -s * sqrt(alpha) * sqrt(1-abar) / beta shifts mu by +s.
        let s = self.mean_shift(t);
        if s != 0.0 {
            let d = -s * self.sched.alpha(t).sqrt() * (1.0 - self.sched.alpha_bar(t)).sqrt()
                / self.sched.beta(t);
            for e in &mut eps {
                *e += d;
            }
        }
        eps
    }

    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    fn cond_dim(&self) -> usize {
        self.inner.cond_dim()
    }

    fn cost_weight(&self) -> f64 {
        self.cost_weight
    }

    fn param_count(&self) -> usize {
        self.inner.param_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{build_schedule, posterior_step, ScheduleKind};

    #[test]
    fn mean_shift_moves_posterior_mean_by_requested_amount() {
        let sched = build_schedule(20, 1e-3, 0.05, ScheduleKind::Linear).unwrap();
        let base = AnalyticGaussianMixtureDenoiser::standard_normal(1, sched.clone()).unwrap();
        let shifted = MeanShiftedDenoiser::sigma_fraction(&base, 0.2, sched.clone(), 0.125);
        for t in [1, 7, 20] {
            let x = [0.8];
            let e0 = base.evaluate(&x, t, &[]);
            let e1 = shifted.evaluate(&x, t, &[]);
            let (m0, sigma) = posterior_step(&e0, t, &x, &sched).unwrap();
            let (m1, _) = posterior_step(&e1, t, &x, &sched).unwrap();
            assert!(
                ((m1[0] - m0[0]) - 0.2 * sigma).abs() < 1e-12,
                "t={t}: got shift {}",
                m1[0] - m0[0]
            );
        }
    }

    #[test]
    fn zero_shift_is_identity_with_new_cost() {
        let sched = build_schedule(10, 1e-3, 0.05, ScheduleKind::Linear).unwrap();
        let base = AnalyticGaussianMixtureDenoiser::standard_normal(2, sched.clone()).unwrap();
        let wrapped = MeanShiftedDenoiser::absolute(&base, 0.0, sched, 0.125);
        let x = [0.3, -1.1];
        assert_eq!(wrapped.evaluate(&x, 5, &[]), base.evaluate(&x, 5, &[]));
        assert_eq!(wrapped.cost_weight(), 0.125);
        assert_eq!(base.cost_weight(), TARGET_COST_WEIGHT);
    }
}
