//! A deterministic 2D pushing task.
//!
//! The arena is the unit square. A disk agent pushes a disk object toward a
//! goal region under quasi-static contact: whenever the agent overlaps the
//! object, the object is displaced along the contact normal just far enough
//! to resolve the overlap. A scripted expert first walks behind the object
//! (skirting around it), then pushes it straight at the goal; its rollouts
//! are the demonstration source for behavior cloning.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushEnvConfig {
    pub agent_radius: f64,
    pub object_radius: f64,
    pub goal_radius: f64,
    /// Per-step speed cap, in arena widths.
    pub max_speed: f64,
    /// Action-chunk length produced per denoising run.
    pub chunk_horizon: usize,
    /// Steps of each chunk executed before re-planning.
    pub execute_steps: usize,
    /// Episode step budget.
    pub max_steps: usize,
}

impl Default for PushEnvConfig {
    fn default() -> Self {
        PushEnvConfig {
            agent_radius: 0.04,
            object_radius: 0.05,
            goal_radius: 0.07,
            max_speed: 0.04,
            chunk_horizon: 8,
            execute_steps: 4,
            max_steps: 96,
        }
    }
}

impl PushEnvConfig {
    pub fn validate(&self) -> Result<()> {
        let radii = [self.agent_radius, self.object_radius, self.goal_radius];
        if radii.iter().any(|r| !(r.is_finite() && *r > 0.0 && *r < 0.5)) {
            return Err(Error::InvalidParameter(
                "radii must lie in (0, 0.5)".into(),
            ));
        }
        if !(self.max_speed.is_finite() && self.max_speed > 0.0) {
            return Err(Error::InvalidParameter("max_speed must be > 0".into()));
        }
        if self.chunk_horizon == 0 || self.execute_steps == 0 || self.max_steps == 0 {
            return Err(Error::InvalidParameter(
                "chunk_horizon, execute_steps and max_steps must be >= 1".into(),
            ));
        }
        if self.execute_steps > self.chunk_horizon {
            return Err(Error::InvalidParameter(
                "execute_steps cannot exceed chunk_horizon".into(),
            ));
        }
        Ok(())
    }

    /// Flattened action-chunk dimension (the denoiser latent).
    pub fn chunk_dim(&self) -> usize {
        self.chunk_horizon * 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushEnvState {
    pub agent_pos: [f64; 2],
    pub object_pos: [f64; 2],
    pub goal_pos: [f64; 2],
    pub step_count: usize,
}

/// Velocity commands for `horizon` consecutive steps, each row clipped to
/// the speed cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionChunk {
    rows: Vec<[f64; 2]>,
}

impl ActionChunk {
    pub fn new(mut rows: Vec<[f64; 2]>, max_speed: f64) -> Self {
        for row in &mut rows {
            *row = clip_speed(*row, max_speed);
        }
        ActionChunk { rows }
    }

    /// Rebuilds a chunk from a flattened latent `[vx0, vy0, vx1, vy1, ...]`,
    /// clamping non-finite entries to zero before the speed clip.
    pub fn from_flat(flat: &[f64], max_speed: f64) -> Self {
        let rows = flat
            .chunks(2)
            .map(|c| {
                let vx = if c[0].is_finite() { c[0] } else { 0.0 };
                let vy = if c.len() > 1 && c[1].is_finite() { c[1] } else { 0.0 };
                [vx, vy]
            })
            .collect();
        ActionChunk::new(rows, max_speed)
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.rows.iter().flat_map(|r| [r[0], r[1]]).collect()
    }

    pub fn rows(&self) -> &[[f64; 2]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn clip_speed(v: [f64; 2], max_speed: f64) -> [f64; 2] {
    let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if speed > max_speed && speed > 0.0 {
        let s = max_speed / speed;
        [v[0] * s, v[1] * s]
    } else {
        v
    }
}

fn clamp_box(p: [f64; 2]) -> [f64; 2] {
    [p[0].clamp(0.0, 1.0), p[1].clamp(0.0, 1.0)]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub executed_steps: usize,
    pub done: bool,
    pub success: bool,
    /// Running-best progress, 1 exactly on success.
    pub progress: f64,
}

#[derive(Debug, Clone)]
pub struct PushEnv {
    cfg: PushEnvConfig,
    state: PushEnvState,
    initial_goal_dist: f64,
    best_progress: f64,
    succeeded: bool,
}

impl PushEnv {
    pub fn new(cfg: PushEnvConfig) -> Result<Self> {
        cfg.validate()?;
        let state = PushEnvState {
            agent_pos: [0.2, 0.2],
            object_pos: [0.5, 0.5],
            goal_pos: [0.8, 0.8],
            step_count: 0,
        };
        let mut env = PushEnv {
            cfg,
            state,
            initial_goal_dist: 1.0,
            best_progress: 0.0,
            succeeded: false,
        };
        env.rebind_state(state);
        Ok(env)
    }

    /// Samples a start configuration: the object and goal keep a workable
    /// separation so progress has room to move.
    pub fn reset(&mut self, rng: &mut ChaCha12Rng) -> PushEnvState {
        let uniform = |rng: &mut ChaCha12Rng, lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
        let object = [uniform(rng, 0.3, 0.7), uniform(rng, 0.3, 0.7)];
        let goal = loop {
            let g = [uniform(rng, 0.2, 0.8), uniform(rng, 0.2, 0.8)];
            if dist(g, object) >= 0.25 {
                break g;
            }
        };
        let agent = loop {
            let a = [uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9)];
            if dist(a, object) >= self.cfg.agent_radius + self.cfg.object_radius + 0.02 {
                break a;
            }
        };
        let state = PushEnvState {
            agent_pos: agent,
            object_pos: object,
            goal_pos: goal,
            step_count: 0,
        };
        self.rebind_state(state);
        state
    }

    /// Installs an explicit start state (tests and replays).
    pub fn rebind_state(&mut self, state: PushEnvState) {
        self.state = state;
        self.initial_goal_dist = dist(state.object_pos, state.goal_pos);
        self.succeeded = self.initial_goal_dist < self.cfg.goal_radius;
        self.best_progress = if self.succeeded { 1.0 } else { 0.0 };
    }

    pub fn state(&self) -> &PushEnvState {
        &self.state
    }

    pub fn config(&self) -> &PushEnvConfig {
        &self.cfg
    }

    pub fn succeeded(&self) -> bool {
        self.succeeded
    }

    pub fn progress(&self) -> f64 {
        self.best_progress
    }

    pub fn is_done(&self) -> bool {
        self.succeeded || self.state.step_count >= self.cfg.max_steps
    }

    /// Observation fed to the policies: agent, object and goal positions.
    pub fn observation(&self) -> Vec<f64> {
        let s = &self.state;
        vec![
            s.agent_pos[0],
            s.agent_pos[1],
            s.object_pos[0],
            s.object_pos[1],
            s.goal_pos[0],
            s.goal_pos[1],
        ]
    }

    pub fn obs_dim() -> usize {
        6
    }

    fn integrate_one(&mut self, v: [f64; 2]) {
        let v = clip_speed(v, self.cfg.max_speed);
        let agent = clamp_box([self.state.agent_pos[0] + v[0], self.state.agent_pos[1] + v[1]]);
        self.state.agent_pos = agent;
        let r_sum = self.cfg.agent_radius + self.cfg.object_radius;
        let d = dist(agent, self.state.object_pos);
        if d < r_sum {
            let overlap = r_sum - d;
            let normal = if d > 1e-9 {
                [
                    (self.state.object_pos[0] - agent[0]) / d,
                    (self.state.object_pos[1] - agent[1]) / d,
                ]
            } else {
                // dead-center overlap: push along the commanded direction
                let sp = (v[0] * v[0] + v[1] * v[1]).sqrt().max(1e-9);
                [v[0] / sp, v[1] / sp]
            };
            self.state.object_pos = clamp_box([
                self.state.object_pos[0] + normal[0] * overlap,
                self.state.object_pos[1] + normal[1] * overlap,
            ]);
        }
        self.state.step_count += 1;
        let goal_dist = dist(self.state.object_pos, self.state.goal_pos);
        if goal_dist < self.cfg.goal_radius {
            self.succeeded = true;
        }
        let progress = if self.succeeded {
            1.0
        } else if self.initial_goal_dist > 0.0 {
            (1.0 - goal_dist / self.initial_goal_dist).clamp(0.0, 1.0)
        } else {
            1.0
        };
        self.best_progress = self.best_progress.max(progress);
    }

    /// Executes up to `execute_steps` rows of the chunk (receding horizon),
    /// stopping early on success or step budget.
    pub fn step(&mut self, chunk: &ActionChunk) -> StepOutcome {
        let mut executed = 0;
        let budget = self.cfg.execute_steps.min(chunk.rows.len());
        for row in chunk.rows.iter().take(budget) {
            if self.is_done() {
                break;
            }
            self.integrate_one(*row);
            executed += 1;
        }
        StepOutcome {
            executed_steps: executed,
            done: self.is_done(),
            success: self.succeeded,
            progress: self.best_progress,
        }
    }
}

/// One expert velocity command for the current state: walk to the spot
/// behind the object (seen from the goal), skirting the object on the way,
/// then drive straight through it toward the goal.
fn expert_velocity(state: &PushEnvState, cfg: &PushEnvConfig) -> [f64; 2] {
    let to_goal = [
        state.goal_pos[0] - state.object_pos[0],
        state.goal_pos[1] - state.object_pos[1],
    ];
    let d_og = (to_goal[0] * to_goal[0] + to_goal[1] * to_goal[1]).sqrt();
    if d_og < cfg.goal_radius * 0.75 {
        return [0.0, 0.0];
    }
    let dir_goal = [to_goal[0] / d_og, to_goal[1] / d_og];
    let r_sum = cfg.agent_radius + cfg.object_radius;
    let behind = [
        state.object_pos[0] - dir_goal[0] * (r_sum + 0.01),
        state.object_pos[1] - dir_goal[1] * (r_sum + 0.01),
    ];
    let to_behind = [behind[0] - state.agent_pos[0], behind[1] - state.agent_pos[1]];
    let d_b = (to_behind[0] * to_behind[0] + to_behind[1] * to_behind[1]).sqrt();
    if d_b > 0.015 {
        let mut dir = [to_behind[0] / d_b, to_behind[1] / d_b];
        // keep clear of the object while repositioning
        let to_obj = [
            state.object_pos[0] - state.agent_pos[0],
            state.object_pos[1] - state.agent_pos[1],
        ];
        let d_obj = (to_obj[0] * to_obj[0] + to_obj[1] * to_obj[1]).sqrt();
        if d_obj < r_sum + 0.04 && dir[0] * to_obj[0] + dir[1] * to_obj[1] > 0.0 {
            let mut tangent = [-to_obj[1] / d_obj, to_obj[0] / d_obj];
            if tangent[0] * to_behind[0] + tangent[1] * to_behind[1] < 0.0 {
                tangent = [-tangent[0], -tangent[1]];
            }
            dir = tangent;
        }
        clip_speed([dir[0] * cfg.max_speed, dir[1] * cfg.max_speed], cfg.max_speed)
    } else {
        clip_speed(
            [dir_goal[0] * cfg.max_speed, dir_goal[1] * cfg.max_speed],
            cfg.max_speed,
        )
    }
}

/// Plans a full chunk by simulating the expert forward from `state`.
pub fn scripted_expert(state: &PushEnvState, cfg: &PushEnvConfig) -> ActionChunk {
    let mut sim = PushEnv {
        cfg: *cfg,
        state: *state,
        initial_goal_dist: dist(state.object_pos, state.goal_pos).max(1e-9),
        best_progress: 0.0,
        succeeded: false,
    };
    let mut rows = Vec::with_capacity(cfg.chunk_horizon);
    for _ in 0..cfg.chunk_horizon {
        let v = expert_velocity(&sim.state, cfg);
        sim.integrate_one(v);
        rows.push(v);
    }
    ActionChunk::new(rows, cfg.max_speed)
}

/// One planning point: the observation at plan time and the chunk the
/// expert produced there. The observation doubles as the conditioning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub observation: Vec<f64>,
    pub chunk: Vec<f64>,
}

/// Rolls the scripted expert in closed loop and keeps the planning points
/// of every successful episode.
pub fn generate_dataset(
    cfg: &PushEnvConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<Demonstration>> {
    if n_episodes == 0 {
        return Err(Error::InvalidParameter(
            "need at least one demonstration episode".into(),
        ));
    }
    cfg.validate()?;
    let mut demos = Vec::new();
    for episode in 0..n_episodes {
        let mut env = PushEnv::new(*cfg)?;
        let mut rng = stream_rng(seed, episode as u64);
        env.reset(&mut rng);
        let mut episode_demos = Vec::new();
        while !env.is_done() {
            let obs = env.observation();
            let chunk = scripted_expert(env.state(), cfg);
            episode_demos.push(Demonstration {
                observation: obs,
                chunk: chunk.flatten(),
            });
            env.step(&chunk);
        }
        if env.succeeded() {
            demos.append(&mut episode_demos);
        }
    }
    if demos.is_empty() {
        return Err(Error::Contract(
            "expert produced no successful episodes".into(),
        ));
    }
    Ok(demos)
}

/// Normalizes demonstrations into a training dataset (conditioning =
/// observation, x0 = flattened chunk).
pub fn build_dataset(demos: &[Demonstration], seed: u64) -> Result<Dataset> {
    let cond: Vec<Vec<f64>> = demos.iter().map(|d| d.observation.clone()).collect();
    let x0: Vec<Vec<f64>> = demos.iter().map(|d| d.chunk.clone()).collect();
    Dataset::from_raw(cond, x0, seed)
}

/// Per-step Euclidean speeds along a position trace.
pub fn ee_velocity(trajectory: &[[f64; 2]]) -> Vec<f64> {
    trajectory
        .windows(2)
        .map(|w| dist(w[0], w[1]))
        .collect()
}
