//! DDPM training for the target model and drafter distillation.
//!
//! Both trainers run plain SGD with momentum over minibatches re-noised on
//! the fly. The distillation loss combines a prediction term on raw noise
//! outputs with a sigma-normalized term on the induced reverse means:
//! `l1 * |m_hat - m|^2 + l2 * |(mu_hat - mu) / sigma|^2`.

use rand::Rng;

use crate::dataset::Dataset;
use crate::denoiser::mlp::{MlpDenoiser, MlpGrads};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::rng::{normal_vec, stream_rng};
use crate::schedule::{forward_noise, posterior_step, NoiseSchedule};
use crate::util::norm_sq;

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub iters: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iters: 20_000,
            batch_size: 32,
            lr: 1e-3,
            momentum: 0.9,
            seed: 0,
            log_every: 200,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainStats {
    /// (iteration, mean per-sample squared error) at each log point.
    pub loss_log: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub struct DistillConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub iters: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            lambda1: 1.0,
            lambda2: 1.0,
            iters: 10_000,
            batch_size: 32,
            lr: 1e-3,
            momentum: 0.9,
            seed: 0,
            log_every: 200,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DistillLogRow {
    pub iter: usize,
    pub total: f64,
    pub pred_term: f64,
    pub norm_term: f64,
}

#[derive(Debug, Clone, Default)]
pub struct DistillStats {
    pub log: Vec<DistillLogRow>,
}

fn validate_common(
    net: &MlpDenoiser,
    data: &Dataset,
    sched: &NoiseSchedule,
    batch_size: usize,
    iters: usize,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidParameter("empty dataset".into()));
    }
    if data.x0_dim() != net.latent_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.latent_dim(),
            got: data.x0_dim(),
        });
    }
    if data.cond_dim() != net.cond_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.cond_dim(),
            got: data.cond_dim(),
        });
    }
    if net.schedule_hash() != sched.content_hash() {
        return Err(Error::Contract(
            "network was built for a different noise schedule".into(),
        ));
    }
    if batch_size == 0 || iters == 0 {
        return Err(Error::InvalidParameter(
            "batch_size and iters must be >= 1".into(),
        ));
    }
    if !(lr.is_finite() && lr > 0.0) || !(momentum.is_finite() && (0.0..1.0).contains(&momentum)) {
        return Err(Error::InvalidParameter(
            "need lr > 0 and momentum in [0, 1)".into(),
        ));
    }
    Ok(())
}

/// Trains `net` to predict the noise used in fresh forward corruptions of
/// dataset samples.
pub fn ddpm_train_target(
    net: &mut MlpDenoiser,
    data: &Dataset,
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
) -> Result<TrainStats> {
    validate_common(net, data, sched, cfg.batch_size, cfg.iters, cfg.lr, cfg.momentum)?;
    let t_max = sched.num_steps();
    let dim = net.latent_dim();
    let mut rng = stream_rng(cfg.seed, 0xDD9A);
    let mut grads = MlpGrads::zeros_like(net);
    let mut vel = MlpGrads::zeros_like(net);
    let mut stats = TrainStats::default();
    let inv_batch = 1.0 / cfg.batch_size as f64;

    for iter in 0..cfg.iters {
        grads.reset();
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch_size {
            let i = rng.random_range(0..data.len());
            let t = rng.random_range(1..=t_max);
            let eps = normal_vec(&mut rng, dim);
            let x_t = forward_noise(&data.x0[i], t, &eps, sched)?;
            let (out, cache) = net.forward_cached(&x_t, t, &data.cond[i]);
            let mut dout = vec![0.0; dim];
            for d in 0..dim {
                let r = out[d] - eps[d];
                batch_loss += r * r;
                dout[d] = 2.0 * r * inv_batch;
            }
            net.backward(&cache, &dout, &mut grads);
        }
        batch_loss *= inv_batch;
        if !batch_loss.is_finite() {
            return Err(Error::TrainingDiverged {
                iteration: iter,
                reason: format!("non-finite batch loss {batch_loss}"),
            });
        }
        net.apply_sgd(&grads, &mut vel, cfg.lr, cfg.momentum);
        if iter % cfg.log_every == 0 || iter + 1 == cfg.iters {
            stats.loss_log.push((iter, batch_loss));
        }
    }
    Ok(stats)
}

/// The distillation objective on one (prediction, reverse-mean) pair.
pub fn distill_loss(
    m_hat: &[f64],
    m: &[f64],
    mu_hat: &[f64],
    mu: &[f64],
    sigma: f64,
    lambda1: f64,
    lambda2: f64,
) -> Result<f64> {
    let dim = m_hat.len();
    for got in [m.len(), mu_hat.len(), mu.len()] {
        if got != dim {
            return Err(Error::DimensionMismatch { expected: dim, got });
        }
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be finite and > 0, got {sigma}"
        )));
    }
    if !(lambda1.is_finite() && lambda1 >= 0.0 && lambda2.is_finite() && lambda2 >= 0.0) {
        return Err(Error::InvalidParameter(
            "lambda weights must be finite and >= 0".into(),
        ));
    }
    let mut pred = 0.0;
    let mut norm = 0.0;
    for i in 0..dim {
        let dp = m_hat[i] - m[i];
        pred += dp * dp;
        let dn = (mu_hat[i] - mu[i]) / sigma;
        norm += dn * dn;
    }
    Ok(lambda1 * pred + lambda2 * norm)
}

/// Trains `drafter` to imitate the frozen `target`'s denoising behavior.
/// The target is never mutated; the drafter must be strictly smaller than a
/// parameterized target.
pub fn distill_drafter(
    target: &dyn Denoiser,
    drafter: &mut MlpDenoiser,
    data: &Dataset,
    sched: &NoiseSchedule,
    cfg: &DistillConfig,
) -> Result<DistillStats> {
    validate_common(drafter, data, sched, cfg.batch_size, cfg.iters, cfg.lr, cfg.momentum)?;
    if target.latent_dim() != drafter.latent_dim() {
        return Err(Error::DimensionMismatch {
            expected: target.latent_dim(),
            got: drafter.latent_dim(),
        });
    }
    if target.cond_dim() != drafter.cond_dim() {
        return Err(Error::DimensionMismatch {
            expected: target.cond_dim(),
            got: drafter.cond_dim(),
        });
    }
    if target.param_count() > 0 && drafter.param_count() >= target.param_count() {
        return Err(Error::InvalidParameter(format!(
            "drafter must be strictly smaller than the target ({} vs {} parameters)",
            drafter.param_count(),
            target.param_count()
        )));
    }
    if !(cfg.lambda1.is_finite() && cfg.lambda1 >= 0.0 && cfg.lambda2.is_finite() && cfg.lambda2 >= 0.0)
    {
        return Err(Error::InvalidParameter(
            "lambda weights must be finite and >= 0".into(),
        ));
    }

    let t_max = sched.num_steps();
    let dim = drafter.latent_dim();
    let mut rng = stream_rng(cfg.seed, 0xD157);
    let mut grads = MlpGrads::zeros_like(drafter);
    let mut vel = MlpGrads::zeros_like(drafter);
    let mut stats = DistillStats::default();
    let inv_batch = 1.0 / cfg.batch_size as f64;

    for iter in 0..cfg.iters {
        grads.reset();
        let (mut pred_acc, mut norm_acc) = (0.0, 0.0);
        for _ in 0..cfg.batch_size {
            let i = rng.random_range(0..data.len());
            let t = rng.random_range(1..=t_max);
            let eps = normal_vec(&mut rng, dim);
            let x_t = forward_noise(&data.x0[i], t, &eps, sched)?;
            let m = target.evaluate(&x_t, t, &data.cond[i]);
            let (mu, sigma) = posterior_step(&m, t, &x_t, sched)?;
            let (m_hat, cache) = drafter.forward_cached(&x_t, t, &data.cond[i]);
            let (mu_hat, _) = posterior_step(&m_hat, t, &x_t, sched)?;

            // mu_hat - mu = -c (m_hat - m) with c = beta/(sqrt(alpha) sqrt(1-abar)),
            // so dL/dm_hat = 2 (l1 + l2 c^2/sigma^2) (m_hat - m).
            let c = sched.beta(t) / (sched.alpha(t).sqrt() * (1.0 - sched.alpha_bar(t)).sqrt());
            let gain = 2.0 * (cfg.lambda1 + cfg.lambda2 * c * c / (sigma * sigma)) * inv_batch;
            let mut dout = vec![0.0; dim];
            for d in 0..dim {
                let dp = m_hat[d] - m[d];
                pred_acc += dp * dp;
                let dn = (mu_hat[d] - mu[d]) / sigma;
                norm_acc += dn * dn;
                dout[d] = gain * dp;
            }
            drafter.backward(&cache, &dout, &mut grads);
        }
        pred_acc *= inv_batch;
        norm_acc *= inv_batch;
        let total = cfg.lambda1 * pred_acc + cfg.lambda2 * norm_acc;
        if !total.is_finite() {
            return Err(Error::TrainingDiverged {
                iteration: iter,
                reason: format!("non-finite distillation loss {total}"),
            });
        }
        drafter.apply_sgd(&grads, &mut vel, cfg.lr, cfg.momentum);
        if iter % cfg.log_every == 0 || iter + 1 == cfg.iters {
            stats.log.push(DistillLogRow {
                iter,
                total,
                pred_term: pred_acc,
                norm_term: norm_acc,
            });
        }
    }
    Ok(stats)
}

/// A fixed probe batch for gradient checking.
struct ProbeBatch {
    idx: Vec<usize>,
    ts: Vec<usize>,
    eps: Vec<Vec<f64>>,
}

fn probe_batch(data: &Dataset, sched: &NoiseSchedule, dim: usize, n: usize, seed: u64) -> ProbeBatch {
    let mut rng = stream_rng(seed, 0x96AD);
    ProbeBatch {
        idx: (0..n).map(|_| rng.random_range(0..data.len())).collect(),
        ts: (0..n).map(|_| rng.random_range(1..=sched.num_steps())).collect(),
        eps: (0..n).map(|_| normal_vec(&mut rng, dim)).collect(),
    }
}

/// Compares analytic distillation gradients against central finite
/// differences on `n_coords` random parameter coordinates and returns the
/// worst relative error.
pub fn gradient_check_distill(
    target: &dyn Denoiser,
    drafter: &mut MlpDenoiser,
    data: &Dataset,
    sched: &NoiseSchedule,
    lambda1: f64,
    lambda2: f64,
    n_coords: usize,
    seed: u64,
) -> Result<f64> {
    let dim = drafter.latent_dim();
    let batch = probe_batch(data, sched, dim, 8, seed);

    let eval_loss = |net: &MlpDenoiser| -> Result<f64> {
        let mut total = 0.0;
        for k in 0..batch.idx.len() {
            let (i, t) = (batch.idx[k], batch.ts[k]);
            let x_t = forward_noise(&data.x0[i], t, &batch.eps[k], sched)?;
            let m = target.evaluate(&x_t, t, &data.cond[i]);
            let (mu, sigma) = posterior_step(&m, t, &x_t, sched)?;
            let m_hat = net.evaluate(&x_t, t, &data.cond[i]);
            let (mu_hat, _) = posterior_step(&m_hat, t, &x_t, sched)?;
            total += distill_loss(&m_hat, &m, &mu_hat, &mu, sigma, lambda1, lambda2)?;
        }
        Ok(total / batch.idx.len() as f64)
    };

    let mut grads = MlpGrads::zeros_like(drafter);
    let inv = 1.0 / batch.idx.len() as f64;
    for k in 0..batch.idx.len() {
        let (i, t) = (batch.idx[k], batch.ts[k]);
        let x_t = forward_noise(&data.x0[i], t, &batch.eps[k], sched)?;
        let m = target.evaluate(&x_t, t, &data.cond[i]);
        let (_, sigma) = posterior_step(&m, t, &x_t, sched)?;
        let (m_hat, cache) = drafter.forward_cached(&x_t, t, &data.cond[i]);
        let c = sched.beta(t) / (sched.alpha(t).sqrt() * (1.0 - sched.alpha_bar(t)).sqrt());
        let gain = 2.0 * (lambda1 + lambda2 * c * c / (sigma * sigma)) * inv;
        let dout: Vec<f64> = m_hat.iter().zip(&m).map(|(a, b)| gain * (a - b)).collect();
        drafter.backward(&cache, &dout, &mut grads);
    }
    let analytic = grads.flat();

    let mut rng = stream_rng(seed, 0xC03D);
    let mut worst = 0.0f64;
    for _ in 0..n_coords {
        let idx = rng.random_range(0..drafter.param_count());
        let orig = drafter.get_param(idx);
        let h = 1e-5 * orig.abs().max(1.0);
        drafter.set_param(idx, orig + h);
        let up = eval_loss(drafter)?;
        drafter.set_param(idx, orig - h);
        let down = eval_loss(drafter)?;
        drafter.set_param(idx, orig);
        let fd = (up - down) / (2.0 * h);
        let denom = fd.abs().max(analytic[idx].abs()).max(1e-6);
        worst = worst.max((fd - analytic[idx]).abs() / denom);
    }
    Ok(worst)
}

/// Same check for the plain DDPM noise-prediction loss.
pub fn gradient_check_ddpm(
    net: &mut MlpDenoiser,
    data: &Dataset,
    sched: &NoiseSchedule,
    n_coords: usize,
    seed: u64,
) -> Result<f64> {
    let dim = net.latent_dim();
    let batch = probe_batch(data, sched, dim, 8, seed);

    let eval_loss = |net: &MlpDenoiser| -> Result<f64> {
        let mut total = 0.0;
        for k in 0..batch.idx.len() {
            let (i, t) = (batch.idx[k], batch.ts[k]);
            let x_t = forward_noise(&data.x0[i], t, &batch.eps[k], sched)?;
            let out = net.evaluate(&x_t, t, &data.cond[i]);
            total += norm_sq(&crate::util::sub(&out, &batch.eps[k]));
        }
        Ok(total / batch.idx.len() as f64)
    };

    let mut grads = MlpGrads::zeros_like(net);
    let inv = 1.0 / batch.idx.len() as f64;
    for k in 0..batch.idx.len() {
        let (i, t) = (batch.idx[k], batch.ts[k]);
        let x_t = forward_noise(&data.x0[i], t, &batch.eps[k], sched)?;
        let (out, cache) = net.forward_cached(&x_t, t, &data.cond[i]);
        let dout: Vec<f64> = out
            .iter()
            .zip(&batch.eps[k])
            .map(|(o, e)| 2.0 * (o - e) * inv)
            .collect();
        net.backward(&cache, &dout, &mut grads);
    }
    let analytic = grads.flat();

    let mut rng = stream_rng(seed, 0xC04D);
    let mut worst = 0.0f64;
    for _ in 0..n_coords {
        let idx = rng.random_range(0..net.param_count());
        let orig = net.get_param(idx);
        let h = 1e-5 * orig.abs().max(1.0);
        net.set_param(idx, orig + h);
        let up = eval_loss(net)?;
        net.set_param(idx, orig - h);
        let down = eval_loss(net)?;
        net.set_param(idx, orig);
        let fd = (up - down) / (2.0 * h);
        let denom = fd.abs().max(analytic[idx].abs()).max(1e-6);
        worst = worst.max((fd - analytic[idx]).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::mlp::MlpArch;
    use crate::schedule::{build_schedule, ScheduleKind};

    fn sched() -> NoiseSchedule {
        build_schedule(20, 1e-3, 0.05, ScheduleKind::Linear).unwrap()
    }

    fn normal_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = stream_rng(seed, 7);
        let x0: Vec<Vec<f64>> = (0..n).map(|_| normal_vec(&mut rng, 1)).collect();
        let cond: Vec<Vec<f64>> = (0..n).map(|_| vec![]).collect();
        Dataset::from_raw(cond, x0, seed).unwrap()
    }

    fn net(hidden: [usize; 2], seed: u64) -> MlpDenoiser {
        MlpDenoiser::new(
            MlpArch {
                latent_dim: 1,
                cond_dim: 0,
                hidden,
            },
            sched(),
            1.0,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn distill_loss_matches_hand_value() {
        // |(1,-1)|^2 = 2 and |(0.2,0)/0.5|^2 = 0.16, total 2.16
        let loss = distill_loss(
            &[1.0, 0.0],
            &[0.0, 1.0],
            &[0.7, 0.3],
            &[0.5, 0.3],
            0.5,
            1.0,
            1.0,
        )
        .unwrap();
        assert!((loss - 2.16).abs() < 1e-12);
        // copy-initialized drafter: identical outputs give exactly zero
        let z = distill_loss(&[0.4], &[0.4], &[1.1], &[1.1], 0.3, 1.0, 1.0).unwrap();
        assert_eq!(z, 0.0);
        assert!(distill_loss(&[0.0], &[0.0], &[0.0], &[0.0], 0.0, 1.0, 1.0).is_err());
        assert!(distill_loss(&[0.0], &[0.0, 1.0], &[0.0], &[0.0], 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn point_mass_training_beats_noise_variance() {
        // x0 is constant, so the true noise is a deterministic function of
        // x_t and a trained net should land far below Var(eps) = 1.
        let s = sched();
        let x0: Vec<Vec<f64>> = (0..64).map(|_| vec![3.0]).collect();
        let cond: Vec<Vec<f64>> = (0..64).map(|_| vec![]).collect();
        let data = Dataset::from_raw(cond, x0, 1).unwrap();
        let mut m = net([16, 16], 2);
        let cfg = TrainConfig {
            iters: 1500,
            batch_size: 32,
            lr: 5e-3,
            seed: 3,
            ..TrainConfig::default()
        };
        ddpm_train_target(&mut m, &data, &s, &cfg).unwrap();

        let mut rng = stream_rng(11, 0);
        let mut mse = 0.0;
        let trials = 2000;
        for _ in 0..trials {
            let t = rng.random_range(1..=s.num_steps());
            let eps = normal_vec(&mut rng, 1);
            let x_t = forward_noise(&data.x0[0], t, &eps, &s).unwrap();
            let out = m.evaluate(&x_t, t, &[]);
            mse += (out[0] - eps[0]) * (out[0] - eps[0]);
        }
        mse /= trials as f64;
        assert!(mse < 0.9, "eval mse {mse} should be well below Var(eps)=1");
    }

    #[test]
    fn standard_normal_training_recovers_linear_slope() {
        // For N(0,1) data the optimal prediction is sqrt(1-abar_t) * x.
        let s = sched();
        let data = normal_dataset(512, 5);
        let mut m = net([16, 16], 6);
        let cfg = TrainConfig {
            iters: 4000,
            batch_size: 64,
            lr: 4e-3,
            seed: 7,
            ..TrainConfig::default()
        };
        let stats = ddpm_train_target(&mut m, &data, &s, &cfg).unwrap();
        let t = s.num_steps() / 2;
        let c = (1.0 - s.alpha_bar(t)).sqrt();
        for x in [-1.5, -1.0, 1.0, 1.5] {
            let pred = m.evaluate(&[x], t, &[])[0];
            let rel = (pred / x - c).abs() / c;
            assert!(rel <= 0.10, "x={x}: slope {} vs {c}", pred / x);
        }
        // loss trend: last quarter mean below first quarter mean
        let q = stats.loss_log.len() / 4;
        let head: f64 =
            stats.loss_log[..q].iter().map(|(_, l)| l).sum::<f64>() / q as f64;
        let tail: f64 = stats.loss_log[stats.loss_log.len() - q..]
            .iter()
            .map(|(_, l)| l)
            .sum::<f64>()
            / q as f64;
        assert!(tail < head, "loss did not decrease: {head} -> {tail}");
    }

    #[test]
    fn distillation_shrinks_teacher_student_gap() {
        let s = sched();
        let data = normal_dataset(512, 9);
        let teacher = net([24, 24], 10);
        let mut student = net([8, 8], 11);
        let before = gap(&teacher, &student, &s);
        let cfg = DistillConfig {
            iters: 2500,
            batch_size: 32,
            lr: 4e-3,
            seed: 12,
            ..DistillConfig::default()
        };
        let stats = distill_drafter(&teacher, &mut student, &data, &s, &cfg).unwrap();
        let after = gap(&teacher, &student, &s);
        assert!(after < before * 0.5, "gap {before} -> {after}");
        assert!(stats.log.last().unwrap().total < stats.log[0].total);
    }

    fn gap(a: &MlpDenoiser, b: &MlpDenoiser, s: &NoiseSchedule) -> f64 {
        let mut rng = stream_rng(77, 1);
        let mut acc = 0.0;
        for _ in 0..200 {
            let t = rng.random_range(1..=s.num_steps());
            let x = normal_vec(&mut rng, 1);
            let d = a.evaluate(&x, t, &[])[0] - b.evaluate(&x, t, &[])[0];
            acc += d * d;
        }
        acc / 200.0
    }

    #[test]
    fn teacher_parameters_are_bitwise_frozen() {
        let s = sched();
        let data = normal_dataset(128, 20);
        let teacher = net([24, 24], 21);
        let snapshot = teacher.params_flat();
        let mut student = net([8, 8], 22);
        let cfg = DistillConfig {
            iters: 200,
            seed: 23,
            ..DistillConfig::default()
        };
        distill_drafter(&teacher, &mut student, &data, &s, &cfg).unwrap();
        let after = teacher.params_flat();
        assert_eq!(snapshot.len(), after.len());
        assert!(snapshot
            .iter()
            .zip(&after)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn oversized_drafter_is_rejected() {
        let s = sched();
        let data = normal_dataset(64, 30);
        let teacher = net([8, 8], 31);
        let mut student = net([24, 24], 32);
        let err = distill_drafter(&teacher, &mut student, &data, &s, &DistillConfig::default());
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn lambda_split_changes_decomposition_not_direction() {
        let s = sched();
        let data = normal_dataset(256, 40);
        let teacher = net([24, 24], 41);
        let base = DistillConfig {
            iters: 600,
            batch_size: 32,
            lr: 3e-3,
            seed: 42,
            log_every: 100,
            ..DistillConfig::default()
        };

        let mut s1 = net([8, 8], 43);
        let pred_only = distill_drafter(
            &teacher,
            &mut s1,
            &data,
            &s,
            &DistillConfig { lambda2: 0.0, ..base },
        )
        .unwrap();
        let mut s2 = net([8, 8], 43);
        let both = distill_drafter(&teacher, &mut s2, &data, &s, &base).unwrap();

        // identical sampling stream, different objectives: the logged norm
        // terms must differ, and both total losses must trend down
        let n1: f64 = pred_only.log.iter().map(|r| r.norm_term).sum();
        let n2: f64 = both.log.iter().map(|r| r.norm_term).sum();
        assert_ne!(n1, n2);
        assert!(pred_only.log.last().unwrap().total < pred_only.log[0].total);
        assert!(both.log.last().unwrap().total < both.log[0].total);
    }

    #[test]
    fn nan_parameters_surface_as_divergence() {
        let s = sched();
        let data = normal_dataset(64, 50);
        let mut m = net([8, 8], 51);
        m.set_param(0, f64::NAN);
        let err = ddpm_train_target(&mut m, &data, &s, &TrainConfig::default());
        match err {
            Err(Error::TrainingDiverged { iteration, .. }) => assert_eq!(iteration, 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn gradient_checks_pass_for_both_objectives() {
        let s = sched();
        let data = normal_dataset(128, 60);
        let teacher = net([24, 24], 61);
        let mut student = net([8, 8], 62);
        let worst =
            gradient_check_distill(&teacher, &mut student, &data, &s, 1.0, 1.0, 40, 63).unwrap();
        assert!(worst <= 1e-4, "distill gradient relative error {worst}");
        let mut m = net([8, 8], 64);
        let worst = gradient_check_ddpm(&mut m, &data, &s, 40, 65).unwrap();
        assert!(worst <= 1e-4, "ddpm gradient relative error {worst}");
    }
}
