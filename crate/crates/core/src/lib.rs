//! Speculative decoding for DDPM samplers and diffusion control policies.
//!
//! A cheap distilled drafter proposes several denoising steps ahead of the
//! expensive target model. The target then checks the whole proposal in one
//! batched pass: each drafted transition gets a Gaussian Metropolis-Hastings
//! acceptance test, the accepted prefix is committed as-is, and the first
//! rejected candidate is replaced by a reflection-coupled sample so the
//! committed chain keeps the target sampler's distribution. On top of the
//! engine sits a small PPO-trained controller that picks the speculative
//! knobs (draft depth per schedule stage, acceptance threshold, verification
//! sigma scale) once per denoising run.
//!
//! Module map:
//! - [`schedule`]: DDPM beta schedules, forward noising, posterior steps.
//! - [`denoiser`]: the model interface, a closed-form Gaussian-mixture
//!   denoiser used as a test oracle, a small MLP denoiser with manual
//!   backprop, DDPM training and drafter distillation.
//! - [`speculative`]: draft rollout, batched verification, reflection
//!   coupling, the speculative denoising loop and its NFE accounting.
//! - [`scheduler`]: reward shaping, the stage map, the policy network and
//!   PPO update, and the closed-loop episode runner.
//! - [`env`]: a deterministic 2D pushing task with a scripted expert.
//! - [`metrics`]: run reports, aggregation, a two-sample KS test, exports.
//! - [`io`]: checkpoint and dataset files (JSON header + f64 blob).
//! - [`parallel`]: episode-level data parallelism with a sequential fallback.

pub mod dataset;
pub mod denoiser;
pub mod env;
pub mod error;
pub mod io;
pub mod metrics;
pub mod parallel;
pub mod rng;
pub mod schedule;
pub mod scheduler;
pub mod speculative;
mod util;

pub use error::{Error, Result};
