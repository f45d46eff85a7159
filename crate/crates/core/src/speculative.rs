//! The speculative denoising engine.
//!
//! Each round drafts up to K cheap denoising steps ahead of the committed
//! state, then checks the whole proposal against the frozen target in one
//! batched pass. The accepted prefix is committed unchanged; the first
//! rejected candidate is replaced by reflecting its draw across the
//! hyperplane between the drafter's and the target's reverse-step means,
//! which keeps the committed chain on the target sampler's law in
//! stochastic mode. Accounting follows the one-pass convention: a batched
//! verification costs one target pass regardless of how many candidates it
//! covers, and each drafter call costs `cost_weight` (1/8 by default).

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::rng::{normal_vec, RngStreams};
use crate::schedule::{posterior_step, sample_step, LatentState, NoiseSchedule};
use crate::util::{all_finite, dot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptMode {
    /// Accept candidate i iff U_i <= p_i. Distribution-preserving.
    Stochastic,
    /// Accept candidate i iff p_i >= accept_threshold. Tunable, not exact.
    Threshold,
}

/// Speculative knobs for one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecParams {
    pub draft_horizon: usize,
    /// Minimum acceptance probability in threshold mode, in (0, 1].
    pub accept_threshold: f64,
    /// Multiplies the test sigma inside the acceptance ratio only; sampling
    /// noise keeps the schedule sigma.
    pub sigma_scale: f64,
    pub accept_mode: AcceptMode,
}

impl SpecParams {
    pub fn stochastic(draft_horizon: usize) -> Self {
        SpecParams {
            draft_horizon,
            accept_threshold: 1.0,
            sigma_scale: 1.0,
            accept_mode: AcceptMode::Stochastic,
        }
    }

    pub fn threshold(draft_horizon: usize, accept_threshold: f64) -> Self {
        SpecParams {
            draft_horizon,
            accept_threshold,
            sigma_scale: 1.0,
            accept_mode: AcceptMode::Threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.accept_threshold.is_finite()
            && self.accept_threshold > 0.0
            && self.accept_threshold <= 1.0)
        {
            return Err(Error::InvalidParameter(format!(
                "accept_threshold must lie in (0, 1], got {}",
                self.accept_threshold
            )));
        }
        if !(self.sigma_scale.is_finite() && self.sigma_scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma_scale must be finite and > 0, got {}",
                self.sigma_scale
            )));
        }
        Ok(())
    }
}

impl Default for SpecParams {
    fn default() -> Self {
        SpecParams::threshold(8, 0.7)
    }
}

/// Candidates from one speculative round. Index 0 is the target's own
/// one-step sample from the round's starting state; indices 1.. are drafter
/// proposals. Every candidate satisfies
/// `candidates[i].x == means[i] + sigmas[i] * noises[i]`.
#[derive(Debug, Clone)]
pub struct DraftBatch {
    pub candidates: Vec<LatentState>,
    pub means: Vec<Vec<f64>>,
    pub sigmas: Vec<f64>,
    pub noises: Vec<Vec<f64>>,
    /// Target eps at the starting state (reused or freshly evaluated).
    pub seed_eps: Vec<f64>,
    /// True when `seed_eps` was evaluated by this call rather than reused
    /// from the previous round's verification.
    pub seed_pass: bool,
}

impl DraftBatch {
    /// Number of drafter-produced candidates (the effective horizon).
    pub fn k_eff(&self) -> usize {
        self.candidates.len() - 1
    }
}

/// Rolls the drafter forward up to `k` steps past the target's one-step
/// candidate, truncating at t=0. `cached_eps` is the target output at
/// `state` left over from the previous verification; when absent the target
/// is evaluated here and the caller must charge one pass.
#[allow(clippy::too_many_arguments)]
pub fn draft_rollout(
    target: &dyn Denoiser,
    drafter: &dyn Denoiser,
    state: &LatentState,
    cond: &[f64],
    k: usize,
    cached_eps: Option<&[f64]>,
    sched: &NoiseSchedule,
    latent_rng: &mut ChaCha12Rng,
) -> Result<DraftBatch> {
    if state.t == 0 {
        return Err(Error::Contract("cannot draft from t=0".into()));
    }
    if state.t > sched.num_steps() {
        return Err(Error::InvalidParameter(format!(
            "state timestep {} exceeds schedule length {}",
            state.t,
            sched.num_steps()
        )));
    }
    let dim = state.x.len();
    if !all_finite(&state.x) {
        return Err(Error::InvalidParameter("non-finite latent".into()));
    }
    if let Some(eps) = cached_eps {
        if eps.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: eps.len(),
            });
        }
    }

    let k_eff = k.min(state.t - 1);
    let seed_pass = cached_eps.is_none();
    let seed_eps = match cached_eps {
        Some(eps) => eps.to_vec(),
        None => target.evaluate(&state.x, state.t, cond),
    };

    let mut candidates = Vec::with_capacity(k_eff + 1);
    let mut means = Vec::with_capacity(k_eff + 1);
    let mut sigmas = Vec::with_capacity(k_eff + 1);
    let mut noises = Vec::with_capacity(k_eff + 1);

    let (mu0, s0) = posterior_step(&seed_eps, state.t, &state.x, sched)?;
    let xi0 = normal_vec(latent_rng, dim);
    candidates.push(LatentState {
        x: sample_step(&mu0, s0, &xi0)?,
        t: state.t - 1,
    });
    means.push(mu0);
    sigmas.push(s0);
    noises.push(xi0);

    for _ in 0..k_eff {
        let prev = candidates.last().unwrap();
        let eps = drafter.evaluate(&prev.x, prev.t, cond);
        let (mu, sigma) = posterior_step(&eps, prev.t, &prev.x, sched)?;
        let xi = normal_vec(latent_rng, dim);
        let next = LatentState {
            x: sample_step(&mu, sigma, &xi)?,
            t: prev.t - 1,
        };
        candidates.push(next);
        means.push(mu);
        sigmas.push(sigma);
        noises.push(xi);
    }

    Ok(DraftBatch {
        candidates,
        means,
        sigmas,
        noises,
        seed_eps,
        seed_pass,
    })
}

/// Log acceptance ratio for one drafted transition: with d = (mu_hat-mu)/sigma,
/// returns -|d|^2/2 - <d, xi>. For x = mu_hat + sigma*xi this equals
/// log N(x; mu, sigma^2 I) - log N(x; mu_hat, sigma^2 I).
pub fn log_accept_ratio(mu_hat: &[f64], mu: &[f64], sigma: f64, xi: &[f64]) -> Result<f64> {
    if mu.len() != mu_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: mu_hat.len(),
            got: mu.len(),
        });
    }
    if xi.len() != mu_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: mu_hat.len(),
            got: xi.len(),
        });
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "acceptance test sigma must be > 0, got {sigma}"
        )));
    }
    let mut quad = 0.0;
    let mut cross = 0.0;
    for i in 0..mu_hat.len() {
        let d = (mu_hat[i] - mu[i]) / sigma;
        quad += d * d;
        cross += d * xi[i];
    }
    Ok(-0.5 * quad - cross)
}

/// One candidate's verdict from the acceptance scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateDecision {
    pub log_alpha: f64,
    pub p: f64,
    pub accepted: bool,
    /// The uniform consumed in stochastic mode.
    pub uniform: Option<f64>,
}

/// Scan results for drafter candidates 1..=k_eff, stopping right after the
/// first rejection. Candidate 0 is target-produced and always committed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AcceptanceRecord {
    pub decisions: Vec<CandidateDecision>,
    pub first_reject: Option<usize>,
}

impl AcceptanceRecord {
    pub fn accepted_drafts(&self) -> usize {
        self.decisions.iter().filter(|d| d.accepted).count()
    }

    /// Accepted flags must be a run of trues followed by at most one false.
    pub fn is_valid_prefix(&self) -> bool {
        let rejected: Vec<usize> = self
            .decisions
            .iter()
            .enumerate()
            .filter(|(_, d)| !d.accepted)
            .map(|(i, _)| i)
            .collect();
        match (rejected.as_slice(), self.first_reject) {
            ([], None) => true,
            (&[i], Some(j)) => i + 1 == j && j == self.decisions.len(),
            _ => false,
        }
    }
}

/// Output of the batched verification pass.
#[derive(Debug, Clone)]
pub struct Verification {
    pub record: AcceptanceRecord,
    /// Target eps at each candidate's own state; `None` only for a final
    /// candidate that already sits at t=0.
    pub target_eps: Vec<Option<Vec<f64>>>,
    /// Reverse-step means the target implies for transitions 1..=k_eff
    /// (index i-1 belongs to candidate i).
    pub verifier_means: Vec<Vec<f64>>,
    /// Whether this call consumed a batched target pass.
    pub charged: bool,
}

/// Evaluates the target on every candidate in one logical batched pass and
/// scans the drafted transitions in order, stopping at the first rejection.
pub fn verify(
    target: &dyn Denoiser,
    batch: &DraftBatch,
    params: &SpecParams,
    cond: &[f64],
    sched: &NoiseSchedule,
    accept_rng: &mut ChaCha12Rng,
) -> Result<Verification> {
    params.validate()?;
    let k_eff = batch.k_eff();

    // The batched pass: evaluate wherever a transition can still leave from.
    // Only the last candidate can sit at t=0.
    let eval_until = batch
        .candidates
        .iter()
        .take_while(|c| c.t >= 1)
        .count();
    let cond_owned = cond.to_vec();
    let evals: Vec<Vec<f64>> = map_indexed(eval_until, move |i| {
        let c = &batch.candidates[i];
        target.evaluate(&c.x, c.t, &cond_owned)
    });
    let charged = eval_until > 0;
    let mut target_eps: Vec<Option<Vec<f64>>> = evals.into_iter().map(Some).collect();
    target_eps.resize(k_eff + 1, None);

    let mut verifier_means = Vec::with_capacity(k_eff);
    for i in 1..=k_eff {
        let prev = &batch.candidates[i - 1];
        let eps = target_eps[i - 1]
            .as_ref()
            .expect("candidate before a drafted one is above t=0");
        let (mu, _) = posterior_step(eps, prev.t, &prev.x, sched)?;
        verifier_means.push(mu);
    }

    let mut record = AcceptanceRecord::default();
    for i in 1..=k_eff {
        let sigma_test = batch.sigmas[i] * params.sigma_scale;
        let log_alpha =
            log_accept_ratio(&batch.means[i], &verifier_means[i - 1], sigma_test, &batch.noises[i])?;
        let p = log_alpha.exp().min(1.0);
        let (accepted, uniform) = match params.accept_mode {
            AcceptMode::Stochastic => {
                let u: f64 = accept_rng.random();
                (u <= p, Some(u))
            }
            AcceptMode::Threshold => (p >= params.accept_threshold, None),
        };
        record.decisions.push(CandidateDecision {
            log_alpha,
            p,
            accepted,
            uniform,
        });
        if !accepted {
            record.first_reject = Some(i);
            break;
        }
    }

    Ok(Verification {
        record,
        target_eps,
        verifier_means,
        charged,
    })
}

/// Reflects a rejected draw `x_tilde ~ N(m_r, sigma^2 I)` across the
/// hyperplane orthogonal to `m_r - m_s`, yielding the coupled sample from
/// `N(m_s, sigma^2 I)`.
pub fn reflect_couple(x_tilde: &[f64], m_r: &[f64], m_s: &[f64], sigma: f64) -> Result<Vec<f64>> {
    let dim = x_tilde.len();
    if m_r.len() != dim || m_s.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: if m_r.len() != dim { m_r.len() } else { m_s.len() },
        });
    }
    if !(all_finite(x_tilde) && all_finite(m_r) && all_finite(m_s)) {
        return Err(Error::InvalidParameter(
            "reflect_couple requires finite inputs".into(),
        ));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "coupling sigma must be > 0, got {sigma}"
        )));
    }
    let delta: Vec<f64> = m_r.iter().zip(m_s).map(|(r, s)| r - s).collect();
    let norm = dot(&delta, &delta).sqrt();
    let centered: Vec<f64> = x_tilde.iter().zip(m_r).map(|(x, r)| x - r).collect();
    if norm < 1e-12 {
        // Equal means never reach this branch through rejection (p=1); guard
        // floating-point ties by translating without a reflection.
        return Ok(m_s.iter().zip(&centered).map(|(s, c)| s + c).collect());
    }
    let proj = dot(&delta, &centered) / norm;
    Ok(m_s
        .iter()
        .zip(&centered)
        .zip(&delta)
        .map(|((s, c), d)| s + c - 2.0 * proj * d / norm)
        .collect())
}

/// Chooses the speculative parameters for each round.
pub trait ParamSource {
    fn params_for(&mut self, state: &LatentState, sched: &NoiseSchedule) -> SpecParams;
}

/// The same parameters every round.
#[derive(Debug, Clone, Copy)]
pub struct FixedParams(pub SpecParams);

impl ParamSource for FixedParams {
    fn params_for(&mut self, _state: &LatentState, _sched: &NoiseSchedule) -> SpecParams {
        self.0
    }
}

/// Function-evaluation accounting. A batched verification and the seeding
/// evaluation each cost one target pass; drafter calls are weighted by the
/// drafter's cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NfeTally {
    pub target_passes: usize,
    pub draft_calls: usize,
    pub draft_cost_weight: f64,
    /// Target passes a plain ancestral run of the same work would use.
    pub baseline_nfe: f64,
}

impl NfeTally {
    pub fn new(draft_cost_weight: f64, baseline_nfe: f64) -> Self {
        NfeTally {
            target_passes: 0,
            draft_calls: 0,
            draft_cost_weight,
            baseline_nfe,
        }
    }

    pub fn nfe(&self) -> f64 {
        self.target_passes as f64 + self.draft_cost_weight * self.draft_calls as f64
    }

    pub fn speedup_by_nfe(&self) -> f64 {
        self.baseline_nfe / self.nfe()
    }

    /// Folds another tally in (multi-chunk episodes accumulate baselines).
    pub fn absorb(&mut self, other: &NfeTally) {
        debug_assert_eq!(self.draft_cost_weight, other.draft_cost_weight);
        self.target_passes += other.target_passes;
        self.draft_calls += other.draft_calls;
        self.baseline_nfe += other.baseline_nfe;
    }
}

/// Everything that happened in one speculative round, sufficient to replay
/// the accounting without trusting the recorded deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundEvent {
    pub round: usize,
    pub t_start: usize,
    pub t_end: usize,
    pub k_requested: usize,
    pub k_eff: usize,
    pub params: SpecParams,
    pub seed_pass: bool,
    pub verify_charged: bool,
    pub coupled: bool,
    pub record: AcceptanceRecord,
    pub target_pass_delta: usize,
    pub draft_call_delta: usize,
}

#[derive(Debug, Clone)]
pub struct SpeculativeOutcome {
    pub x0: Vec<f64>,
    pub events: Vec<RoundEvent>,
    pub tally: NfeTally,
}

impl SpeculativeOutcome {
    /// Drafted vs accepted counts over the whole run.
    pub fn draft_counts(&self) -> (usize, usize) {
        let drafted = self.events.iter().map(|e| e.k_eff).sum();
        let accepted = self
            .events
            .iter()
            .map(|e| e.record.accepted_drafts())
            .sum();
        (drafted, accepted)
    }
}

/// Runs the full speculative sampling loop from t=T down to t=0.
pub fn speculative_denoise(
    target: &dyn Denoiser,
    drafter: &dyn Denoiser,
    params: &mut dyn ParamSource,
    x_init: Option<Vec<f64>>,
    cond: &[f64],
    sched: &NoiseSchedule,
    streams: &mut RngStreams,
) -> Result<SpeculativeOutcome> {
    let dim = target.latent_dim();
    if drafter.latent_dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: drafter.latent_dim(),
        });
    }
    if drafter.cond_dim() != target.cond_dim() {
        return Err(Error::DimensionMismatch {
            expected: target.cond_dim(),
            got: drafter.cond_dim(),
        });
    }
    if cond.len() != target.cond_dim() {
        return Err(Error::DimensionMismatch {
            expected: target.cond_dim(),
            got: cond.len(),
        });
    }
    let t_max = sched.num_steps();
    let x = match x_init {
        Some(x) => {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: x.len(),
                });
            }
            x
        }
        None => normal_vec(&mut streams.latent, dim),
    };

    let mut state = LatentState { x, t: t_max };
    let mut cache: Option<Vec<f64>> = None;
    let mut tally = NfeTally::new(drafter.cost_weight(), t_max as f64);
    let mut events = Vec::new();

    while state.t > 0 {
        let sp = params.params_for(&state, sched);
        sp.validate()?;

        let batch = draft_rollout(
            target,
            drafter,
            &state,
            cond,
            sp.draft_horizon,
            cache.as_deref(),
            sched,
            &mut streams.latent,
        )?;
        if batch.seed_pass {
            tally.target_passes += 1;
        }
        tally.draft_calls += batch.k_eff();

        let verification = verify(target, &batch, &sp, cond, sched, &mut streams.accept)?;
        if verification.charged {
            tally.target_passes += 1;
        }

        let (next_state, coupled) = match verification.record.first_reject {
            None => {
                let j = batch.k_eff();
                cache = verification.target_eps[j].clone();
                (batch.candidates[j].clone(), false)
            }
            Some(j) => {
                let corrected = reflect_couple(
                    &batch.candidates[j].x,
                    &batch.means[j],
                    &verification.verifier_means[j - 1],
                    batch.sigmas[j],
                )?;
                cache = None;
                (
                    LatentState {
                        x: corrected,
                        t: batch.candidates[j].t,
                    },
                    true,
                )
            }
        };

        events.push(RoundEvent {
            round: events.len(),
            t_start: state.t,
            t_end: next_state.t,
            k_requested: sp.draft_horizon,
            k_eff: batch.k_eff(),
            params: sp,
            seed_pass: batch.seed_pass,
            verify_charged: verification.charged,
            coupled,
            record: verification.record,
            target_pass_delta: batch.seed_pass as usize + verification.charged as usize,
            draft_call_delta: batch.k_eff(),
        });
        state = next_state;
    }

    Ok(SpeculativeOutcome {
        x0: state.x,
        events,
        tally,
    })
}

/// Plain ancestral DDPM sampling with the same RNG contract; the K=0
/// speculative loop reproduces this bit-exactly.
pub fn ancestral_denoise(
    net: &dyn Denoiser,
    x_init: Option<Vec<f64>>,
    cond: &[f64],
    sched: &NoiseSchedule,
    streams: &mut RngStreams,
) -> Result<(Vec<f64>, NfeTally)> {
    let dim = net.latent_dim();
    if cond.len() != net.cond_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.cond_dim(),
            got: cond.len(),
        });
    }
    let t_max = sched.num_steps();
    let mut x = match x_init {
        Some(x) => {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: x.len(),
                });
            }
            x
        }
        None => normal_vec(&mut streams.latent, dim),
    };
    let mut tally = NfeTally::new(crate::denoiser::DRAFTER_COST_WEIGHT, t_max as f64);
    for t in (1..=t_max).rev() {
        let eps = net.evaluate(&x, t, cond);
        tally.target_passes += 1;
        let (mu, sigma) = posterior_step(&eps, t, &x, sched)?;
        let xi = normal_vec(&mut streams.latent, dim);
        x = sample_step(&mu, sigma, &xi)?;
    }
    Ok((x, tally))
}
