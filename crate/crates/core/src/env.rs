//! Go-to-pose and track-velocity episodes.
//!
//! Per step the pipeline is fixed:
//! failure mask and action noise -> pressure sharing over the nozzles that
//! actually fire -> body wrench + floor/torque disturbance -> integration ->
//! reward on the true state -> observation from the velocity-noised state.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disturbance::{DisturbanceError, DisturbanceProfile, EpisodeDisturbance};
use crate::dynamics::{self, DynamicsError, PlatformParams, PlatformState};
use crate::seed::{self, SimRng};
use crate::{active_count, ThrusterBits, NUM_THRUSTERS};

pub const OBS_DIM: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Disturbance(#[from] DisturbanceError),
    #[error("step called on a finished episode")]
    EpisodeDone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    #[default]
    GoToPose,
    TrackVelocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseTarget {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityTarget {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

/// Goal of the current episode. Only the active variant's fields exist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TaskSpec {
    GoToPose(PoseTarget),
    TrackVelocity(VelocityTarget),
}

impl TaskSpec {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskSpec::GoToPose(_) => TaskKind::GoToPose,
            TaskSpec::TrackVelocity(_) => TaskKind::TrackVelocity,
        }
    }

    /// Task flag carried in the observation.
    pub fn flag(&self) -> f64 {
        match self {
            TaskSpec::GoToPose(_) => 1.0,
            TaskSpec::TrackVelocity(_) => 2.0,
        }
    }

    pub fn pose(&self) -> Option<&PoseTarget> {
        match self {
            TaskSpec::GoToPose(p) => Some(p),
            TaskSpec::TrackVelocity(_) => None,
        }
    }

    pub fn velocity(&self) -> Option<&VelocityTarget> {
        match self {
            TaskSpec::TrackVelocity(v) => Some(v),
            TaskSpec::GoToPose(_) => None,
        }
    }
}

/// Euclidean distance to the target position.
pub fn position_error(state: &PlatformState, target: &PoseTarget) -> f64 {
    (target.x - state.x).hypot(target.y - state.y)
}

/// Shortest signed rotation from the current heading to the target heading.
pub fn heading_error(state: &PlatformState, target: &PoseTarget) -> f64 {
    let d = target.theta - state.theta;
    let e = d.sin().atan2(d.cos());
    // atan2 may return -pi; keep the (-pi, pi] convention
    if e <= -PI {
        PI
    } else {
        e
    }
}

/// Linear and angular velocity errors, target minus current.
pub fn velocity_errors(state: &PlatformState, target: &VelocityTarget) -> ([f64; 2], f64) {
    (
        [target.vx - state.vx, target.vy - state.vy],
        target.omega - state.omega,
    )
}

/// Policy input: heading, twist, task flag and four task slots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn cos_theta(&self) -> f64 {
        self.0[0]
    }
    pub fn sin_theta(&self) -> f64 {
        self.0[1]
    }
    pub fn vx(&self) -> f64 {
        self.0[2]
    }
    pub fn vy(&self) -> f64 {
        self.0[3]
    }
    pub fn omega(&self) -> f64 {
        self.0[4]
    }
    pub fn flag(&self) -> f64 {
        self.0[5]
    }
    pub fn task_data(&self) -> [f64; 4] {
        [self.0[6], self.0[7], self.0[8], self.0[9]]
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Packs an (already noise-corrupted) state into an observation.
pub fn pack_observation(state: &PlatformState, spec: &TaskSpec) -> Observation {
    let (s, c) = state.theta.sin_cos();
    let d = match spec {
        TaskSpec::GoToPose(t) => {
            let (ds, dc) = heading_error(state, t).sin_cos();
            [t.x - state.x, t.y - state.y, dc, ds]
        }
        TaskSpec::TrackVelocity(t) => {
            let (ev, _) = velocity_errors(state, t);
            [ev[0], ev[1], 0.0, 0.0]
        }
    };
    Observation([
        c,
        s,
        state.vx,
        state.vy,
        state.omega,
        spec.flag(),
        d[0],
        d[1],
        d[2],
        d[3],
    ])
}

/// Applies velocity noise, then packs. Returns the observation and the noisy
/// state it was built from.
pub fn observe(
    state: &PlatformState,
    spec: &TaskSpec,
    dist: &mut EpisodeDisturbance,
) -> (Observation, PlatformState) {
    let seen = dist.corrupt_observation(state);
    (pack_observation(&seen, spec), seen)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionPenaltyMode {
    /// `c_act * (active nozzles) / 8`
    #[default]
    FractionOfEight,
    /// `c_act * (active nozzles)`
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub s_p: f64,
    pub s_theta: f64,
    pub exp_scale: f64,
    pub c_act: f64,
    pub act_mode: ActionPenaltyMode,
    pub c_omega: f64,
    pub omega_thresh: f64,
    /// Linear-speed penalty `c_vel * max(0, |v| - v_thresh)`; off by default.
    pub vel_penalty: bool,
    pub c_vel: f64,
    pub v_thresh: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            s_p: 0.5,
            s_theta: 0.5,
            exp_scale: 0.25,
            c_act: 0.3,
            act_mode: ActionPenaltyMode::FractionOfEight,
            c_omega: 0.15,
            omega_thresh: 1.0,
            vel_penalty: false,
            c_vel: 0.0,
            v_thresh: 1.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("s_p", self.s_p),
            ("s_theta", self.s_theta),
            ("c_act", self.c_act),
            ("c_omega", self.c_omega),
            ("omega_thresh", self.omega_thresh),
            ("c_vel", self.c_vel),
            ("v_thresh", self.v_thresh),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("reward.{name} must be non-negative, got {v}"));
            }
        }
        if !(self.exp_scale > 0.0) {
            return Err(format!("reward.exp_scale must be positive, got {}", self.exp_scale));
        }
        Ok(())
    }

    pub fn penalty(&self, state: &PlatformState, bits: &ThrusterBits) -> f64 {
        let n = active_count(bits) as f64;
        let p_act = match self.act_mode {
            ActionPenaltyMode::FractionOfEight => self.c_act * n / NUM_THRUSTERS as f64,
            ActionPenaltyMode::Literal => self.c_act * n,
        };
        let p_omega = self.c_omega * (state.omega.abs() - self.omega_thresh).max(0.0);
        let p_vel = if self.vel_penalty {
            self.c_vel * (state.speed() - self.v_thresh).max(0.0)
        } else {
            0.0
        };
        p_act + p_omega + p_vel
    }
}

/// Exponential shaping on the task errors minus the actuation/rate penalties.
pub fn reward(state: &PlatformState, bits: &ThrusterBits, spec: &TaskSpec, cfg: &RewardConfig) -> f64 {
    let (e_lin, e_ang) = match spec {
        TaskSpec::GoToPose(t) => (position_error(state, t), heading_error(state, t).abs()),
        TaskSpec::TrackVelocity(t) => {
            let (ev, ew) = velocity_errors(state, t);
            (ev[0].hypot(ev[1]), ew.abs())
        }
    };
    (-e_lin / cfg.exp_scale).exp() * cfg.s_p + (-e_ang / cfg.exp_scale).exp() * cfg.s_theta
        - cfg.penalty(state, bits)
}

/// Initial-condition ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResetConfig {
    /// Go-to-pose: start uniformly in a disc of this radius around the goal, m.
    pub spawn_radius: f64,
    /// Go-to-pose goal heading, rad.
    pub target_heading: f64,
    /// Track-velocity: commanded speed, m/s. Direction is uniform.
    pub target_speed: f64,
    /// Track-velocity: commanded yaw rate, rad/s.
    pub target_omega: f64,
}

impl Default for ResetConfig {
    fn default() -> Self {
        Self {
            spawn_radius: 2.0,
            target_heading: 0.0,
            target_speed: 0.2,
            target_omega: 0.0,
        }
    }
}

/// Draws a fresh initial state and goal. The goal sits at the origin.
pub fn reset_task(kind: TaskKind, rng: &mut SimRng, ranges: &ResetConfig) -> (PlatformState, TaskSpec) {
    match kind {
        TaskKind::GoToPose => {
            // area-uniform in the disc
            let r = ranges.spawn_radius * rng.gen::<f64>().sqrt();
            let a = rng.gen_range(-PI..PI);
            let heading = rng.gen_range(-PI..PI);
            (
                PlatformState::at_rest(r * a.cos(), r * a.sin(), heading),
                TaskSpec::GoToPose(PoseTarget {
                    x: 0.0,
                    y: 0.0,
                    theta: ranges.target_heading,
                }),
            )
        }
        TaskKind::TrackVelocity => {
            let dir = rng.gen_range(-PI..PI);
            let heading = rng.gen_range(-PI..PI);
            (
                PlatformState::at_rest(0.0, 0.0, heading),
                TaskSpec::TrackVelocity(VelocityTarget {
                    vx: ranges.target_speed * dir.cos(),
                    vy: ranges.target_speed * dir.sin(),
                    omega: ranges.target_omega,
                }),
            )
        }
    }
}

/// Initial state, goal and frozen disturbances for one episode.
pub fn reset(
    kind: TaskKind,
    rng: &mut SimRng,
    ranges: &ResetConfig,
    profile: &DisturbanceProfile,
) -> Result<(PlatformState, TaskSpec, EpisodeDisturbance), EnvError> {
    let (state, spec) = reset_task(kind, rng, ranges);
    let dist = profile.sample_episode(rng)?;
    Ok((state, spec, dist))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub task: TaskKind,
    pub episode_len: u64,
    pub reset: ResetConfig,
    pub reward: RewardConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::GoToPose,
            episode_len: 250,
            reset: ResetConfig::default(),
            reward: RewardConfig::default(),
        }
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub obs: Observation,
    /// The noisy state the observation was built from.
    pub observed: PlatformState,
    pub reward: f64,
    pub done: bool,
    /// Nozzles that actually fired after the failure mask.
    pub fired: ThrusterBits,
}

/// A single platform episode.
#[derive(Debug, Clone)]
pub struct Env {
    params: PlatformParams,
    cfg: EnvConfig,
    profile: DisturbanceProfile,
    rng: SimRng,
    state: PlatformState,
    spec: TaskSpec,
    dist: EpisodeDisturbance,
    done: bool,
}

impl Env {
    /// Builds an environment and starts its first episode.
    pub fn new(
        params: PlatformParams,
        cfg: EnvConfig,
        profile: DisturbanceProfile,
        seed: u64,
    ) -> Result<(Self, Observation), EnvError> {
        params.validate()?;
        profile.validate()?;
        let mut env = Self {
            params,
            cfg,
            profile,
            rng: seed::rng_from(seed, &[seed::STREAM_ENV]),
            state: PlatformState::default(),
            spec: TaskSpec::GoToPose(PoseTarget::default()),
            dist: EpisodeDisturbance::none(),
            done: true,
        };
        let obs = env.reset()?;
        Ok((env, obs))
    }

    pub fn reset(&mut self) -> Result<Observation, EnvError> {
        let (state, spec, dist) = reset(self.cfg.task, &mut self.rng, &self.cfg.reset, &self.profile)?;
        Ok(self.start(state, spec, dist))
    }

    /// Starts an episode from an explicit initial condition.
    pub fn start(&mut self, state: PlatformState, spec: TaskSpec, dist: EpisodeDisturbance) -> Observation {
        self.state = state;
        self.spec = spec;
        self.dist = dist;
        self.done = false;
        observe(&self.state, &self.spec, &mut self.dist).0
    }

    /// Replaces the disturbance profile for subsequent resets.
    pub fn set_profile(&mut self, profile: DisturbanceProfile) -> Result<(), EnvError> {
        profile.validate()?;
        self.profile = profile;
        Ok(())
    }

    /// Replaces the initial-condition ranges for subsequent resets.
    pub fn set_reset(&mut self, reset: ResetConfig) {
        self.cfg.reset = reset;
    }

    /// Changes the goal mid-episode (used by the path tracker).
    pub fn set_task(&mut self, spec: TaskSpec) {
        self.spec = spec;
    }

    pub fn state(&self) -> &PlatformState {
        &self.state
    }

    pub fn task(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn params(&self) -> &PlatformParams {
        &self.params
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn disturbance(&self) -> &EpisodeDisturbance {
        &self.dist
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Fresh observation of the current state (draws velocity noise).
    pub fn observe(&mut self) -> (Observation, PlatformState) {
        observe(&self.state, &self.spec, &mut self.dist)
    }

    pub fn step(&mut self, bits: &ThrusterBits) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let (fired, noise) = self.dist.corrupt_action(bits);
        let cmd = dynamics::resolve_thrust(&fired, &self.params);
        let body = dynamics::body_wrench_with_noise(&cmd, &noise, &self.params);
        let external = self.dist.external_wrench(self.state.t);
        self.state = dynamics::integrate(&self.state, &body, &external, &self.params)?;
        let r = reward(&self.state, bits, &self.spec, &self.cfg.reward);
        let (obs, observed) = observe(&self.state, &self.spec, &mut self.dist);
        self.done = self.state.t >= self.cfg.episode_len;
        Ok(StepOutcome {
            obs,
            observed,
            reward: r,
            done: self.done,
            fired,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pose(x: f64, y: f64, theta: f64) -> PoseTarget {
        PoseTarget { x, y, theta }
    }

    #[test]
    fn position_error_examples() {
        let s = PlatformState::default();
        assert_eq!(position_error(&s, &pose(3.0, 4.0, 0.0)), 5.0);
        assert_eq!(position_error(&s, &pose(0.0, 0.0, 0.0)), 0.0);
        let s = PlatformState::at_rest(1.0, 1.0, 0.0);
        assert_abs_diff_eq!(position_error(&s, &pose(2.0, 2.0, 0.0)), 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn heading_error_examples() {
        let s = PlatformState::at_rest(0.0, 0.0, 0.3);
        assert_eq!(heading_error(&s, &pose(0.0, 0.0, 0.3)), 0.0);
        let s = PlatformState::at_rest(0.0, 0.0, -PI + 0.1);
        assert_abs_diff_eq!(heading_error(&s, &pose(0.0, 0.0, PI - 0.1)), -0.2, epsilon = 1e-12);
        let s = PlatformState::default();
        assert_abs_diff_eq!(heading_error(&s, &pose(0.0, 0.0, 0.5)), 0.5, epsilon = 1e-15);
        let s = PlatformState::at_rest(0.0, 0.0, 0.0);
        assert_eq!(heading_error(&s, &pose(0.0, 0.0, PI)), PI);
    }

    #[test]
    fn velocity_error_examples() {
        let t = VelocityTarget { vx: 0.2, vy: 0.0, omega: 0.0 };
        assert_eq!(velocity_errors(&PlatformState::default(), &t), ([0.2, 0.0], 0.0));
        let s = PlatformState { vx: 0.2, omega: 0.3, ..Default::default() };
        assert_eq!(velocity_errors(&s, &t), ([0.0, 0.0], -0.3));
    }

    #[test]
    fn reward_examples() {
        let cfg = RewardConfig::default();
        let spec = TaskSpec::GoToPose(pose(0.0, 0.0, 0.0));
        let s = PlatformState::default();
        assert_eq!(reward(&s, &[false; 8], &spec, &cfg), 1.0);

        let far = PlatformState::at_rest(1e6, 0.0, PI);
        let r = reward(&far, &[false; 8], &spec, &cfg);
        assert!(r >= 0.0);
        assert_abs_diff_eq!(r, (-PI / 0.25).exp() * 0.5, epsilon = 1e-12);

        let spinning = PlatformState { omega: 1.5, ..Default::default() };
        assert_abs_diff_eq!(reward(&spinning, &[false; 8], &spec, &cfg), 0.925, epsilon = 1e-15);

        // fraction-of-eight vs literal action penalty
        let r = reward(&s, &[true, true, false, false, false, false, false, false], &spec, &cfg);
        assert_abs_diff_eq!(r, 1.0 - 0.3 * 2.0 / 8.0, epsilon = 1e-15);
        let lit = RewardConfig { act_mode: ActionPenaltyMode::Literal, ..cfg.clone() };
        let r = reward(&s, &[true, true, false, false, false, false, false, false], &spec, &lit);
        assert_abs_diff_eq!(r, 1.0 - 0.6, epsilon = 1e-15);
    }

    #[test]
    fn velocity_penalty_is_off_by_default() {
        let cfg = RewardConfig::default();
        let fast = PlatformState { vx: 5.0, ..Default::default() };
        assert_eq!(cfg.penalty(&fast, &[false; 8]), 0.0);
        let on = RewardConfig { vel_penalty: true, c_vel: 0.1, v_thresh: 1.0, ..cfg };
        assert_abs_diff_eq!(on.penalty(&fast, &[false; 8]), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn track_velocity_reward_uses_norm() {
        let cfg = RewardConfig::default();
        let spec = TaskSpec::TrackVelocity(VelocityTarget { vx: 0.3, vy: 0.4, omega: 0.0 });
        let r = reward(&PlatformState::default(), &[false; 8], &spec, &cfg);
        assert_abs_diff_eq!(r, (-0.5f64 / 0.25).exp() * 0.5 + 0.5, epsilon = 1e-15);
    }

    #[test]
    fn observation_layout() {
        let spec = TaskSpec::GoToPose(pose(0.0, 0.0, 0.0));
        let o = pack_observation(&PlatformState::default(), &spec);
        assert_eq!(o.flag(), 1.0);
        assert_eq!(o.task_data(), [0.0, 0.0, 1.0, 0.0]);

        let spec = TaskSpec::TrackVelocity(VelocityTarget { vx: 0.2, vy: 0.0, omega: 0.0 });
        let o = pack_observation(&PlatformState::default(), &spec);
        assert_eq!(o.flag(), 2.0);
        assert_eq!(o.task_data(), [0.2, 0.0, 0.0, 0.0]);

        let o = pack_observation(&PlatformState::at_rest(0.0, 0.0, PI / 2.0), &spec);
        assert_abs_diff_eq!(o.cos_theta(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(o.sin_theta(), 1.0, epsilon = 1e-12);
        assert_eq!(o.as_slice().len(), OBS_DIM);
    }

    #[test]
    fn seeded_resets_repeat() {
        let r = ResetConfig::default();
        let p = DisturbanceProfile::default();
        let (a, sa, _) = reset(TaskKind::GoToPose, &mut seed::rng_from(4, &[]), &r, &p).unwrap();
        let (b, sb, _) = reset(TaskKind::GoToPose, &mut seed::rng_from(4, &[]), &r, &p).unwrap();
        assert_eq!((a, sa), (b, sb));
    }

    #[test]
    fn reset_distance_is_disc_uniform() {
        let r = ResetConfig::default();
        let mut rng = seed::rng_from(99, &[]);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let (s, spec) = reset_task(TaskKind::GoToPose, &mut rng, &r);
            assert_eq!((s.vx, s.vy, s.omega), (0.0, 0.0, 0.0));
            let d = position_error(&s, spec.pose().unwrap());
            assert!(d <= 2.0);
            sum += d;
        }
        // E|r| for a uniform disc of radius R is 2R/3
        let mean = sum / n as f64;
        assert!((mean - 4.0 / 3.0).abs() / (4.0 / 3.0) < 0.02, "mean {mean}");
    }

    #[test]
    fn episode_terminates_at_length() {
        let (mut env, _) = Env::new(
            PlatformParams::default(),
            EnvConfig::default(),
            DisturbanceProfile::default(),
            1,
        )
        .unwrap();
        for t in 1..=250 {
            let out = env.step(&[false; 8]).unwrap();
            assert_eq!(out.done, t == 250);
        }
        assert_eq!(env.step(&[false; 8]).unwrap_err(), EnvError::EpisodeDone);
    }

    #[test]
    fn idle_episode_is_static() {
        let (mut env, _) = Env::new(
            PlatformParams::default(),
            EnvConfig::default(),
            DisturbanceProfile::default(),
            2,
        )
        .unwrap();
        let s0 = *env.state();
        let r0 = env.step(&[false; 8]).unwrap().reward;
        for _ in 0..20 {
            let out = env.step(&[false; 8]).unwrap();
            assert_eq!(out.reward, r0);
            assert_eq!((env.state().x, env.state().y, env.state().theta), (s0.x, s0.y, s0.theta));
        }
    }

    #[test]
    fn total_failure_matches_idle() {
        let cfg = EnvConfig::default();
        let dead = DisturbanceProfile { rtf_count: 8, ..Default::default() };
        let (mut a, _) = Env::new(PlatformParams::default(), cfg.clone(), dead, 3).unwrap();
        let (mut b, _) = Env::new(PlatformParams::default(), cfg, DisturbanceProfile::default(), 3).unwrap();
        // same initial condition regardless of the mask draw
        let (s, spec) = (*a.state(), *a.task());
        b.start(s, spec, EpisodeDisturbance::none());
        for _ in 0..30 {
            a.step(&[true, false, true, false, true, true, false, true]).unwrap();
            b.step(&[false; 8]).unwrap();
            assert_eq!(a.state(), b.state());
        }
    }

    #[test]
    fn survivors_share_full_pressure() {
        // 2 failed nozzles; command 3 with one of them dead -> 2 survivors at 0.5 N
        let p = DisturbanceProfile { rtf_count: 2, ..Default::default() };
        let ep = p.sample_episode(&mut seed::rng_from(8, &[])).unwrap();
        let dead: Vec<usize> = (0..8).filter(|&i| ep.failed_mask()[i]).collect();
        let alive: Vec<usize> = (0..8).filter(|&i| !ep.failed_mask()[i]).collect();
        let mut bits = [false; 8];
        bits[dead[0]] = true;
        bits[alive[0]] = true;
        bits[alive[1]] = true;
        let fired = ep.apply_failure_mask(&bits);
        let cmd = dynamics::resolve_thrust(&fired, &PlatformParams::default());
        assert_eq!(cmd.realized_force_per_thruster, 0.5);
    }

    proptest! {
        #[test]
        fn observation_invariants(x in -3.0f64..3.0, y in -3.0f64..3.0, th in -3.14f64..3.14,
                                  tx in -3.0f64..3.0, ty in -3.0f64..3.0, tth in -3.14f64..3.14,
                                  sx in -10.0f64..10.0, sy in -10.0f64..10.0) {
            let s = PlatformState::at_rest(x, y, th);
            let spec = TaskSpec::GoToPose(pose(tx, ty, tth));
            let o = pack_observation(&s, &spec);
            prop_assert!((o.cos_theta().powi(2) + o.sin_theta().powi(2) - 1.0).abs() < 1e-9);
            let d = o.task_data();
            prop_assert!((d[2] * d[2] + d[3] * d[3] - 1.0).abs() < 1e-9);
            // joint translation leaves the observation unchanged
            let s2 = PlatformState::at_rest(x + sx, y + sy, th);
            let spec2 = TaskSpec::GoToPose(pose(tx + sx, ty + sy, tth));
            let o2 = pack_observation(&s2, &spec2);
            for i in 0..OBS_DIM {
                prop_assert!((o.0[i] - o2.0[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn reward_decreases_with_distance(d1 in 0.0f64..5.0, dd in 1e-3f64..1.0, th in -3.0f64..3.0) {
            let cfg = RewardConfig::default();
            let spec = TaskSpec::GoToPose(pose(0.0, 0.0, 0.0));
            let a = reward(&PlatformState::at_rest(d1, 0.0, th), &[false; 8], &spec, &cfg);
            let b = reward(&PlatformState::at_rest(d1 + dd, 0.0, th), &[false; 8], &spec, &cfg);
            prop_assert!(b < a);
            prop_assert!(a > 0.0 && a <= 1.0);
        }
    }
}
