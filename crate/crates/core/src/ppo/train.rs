//! Vectorized rollout collection and the training loop.

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::gae::gae;
use super::policy::{sample_bits, PolicyParams};
use super::update::{batch_from_parts, ppo_update, Adam, PpoConfig, UpdateStats};
use super::PpoError;
use crate::disturbance::DisturbanceProfile;
use crate::dynamics::PlatformParams;
use crate::env::{position_error, Env, EnvConfig, Observation, ResetConfig, OBS_DIM};
use crate::seed::{self, SimRng};
use crate::NUM_THRUSTERS;

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Environment steps collected so far.
    pub steps: u64,
    /// Mean per-step reward of this epoch's rollout, scaled by the episode length.
    pub mean_return: f64,
    pub mean_step_reward: f64,
    /// Mean undiscounted return of episodes that finished during this epoch.
    pub episode_return: Option<f64>,
    pub episodes: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub lr: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

struct Slot {
    env: Env,
    obs: Observation,
    episode_rng: SimRng,
    action_rng: SimRng,
    running_return: f64,
}

struct StepResult {
    bits: [bool; NUM_THRUSTERS],
    reward: f64,
    done: bool,
    finished_return: Option<f64>,
    /// Final observation of an episode cut by the time limit.
    truncated: Option<Observation>,
}

fn episode_profile(base: &DisturbanceProfile, uf_max: f64, rng: &mut SimRng) -> DisturbanceProfile {
    let mut p = base.clone();
    if uf_max > 0.0 {
        p.uf = rng.gen_range(0.0..=uf_max);
    }
    p
}

/// Reset ranges for `epoch`: the go-to-pose spawn radius ramps linearly from
/// `spawn_radius_start` to the configured radius.
pub fn curriculum(cfg: &PpoConfig, target: &ResetConfig, epoch: usize) -> ResetConfig {
    let mut r = target.clone();
    if cfg.curriculum_epochs > 0 {
        let f = (epoch as f64 / cfg.curriculum_epochs as f64).min(1.0);
        r.spawn_radius = cfg.spawn_radius_start + (target.spawn_radius - cfg.spawn_radius_start) * f;
    }
    r
}

pub struct Trainer {
    cfg: PpoConfig,
    params: PolicyParams,
    adam: Adam,
    lr: f64,
    base: DisturbanceProfile,
    slots: Vec<Slot>,
    shuffle_rng: SimRng,
    epoch: usize,
    steps: u64,
    episode_len: u64,
    reset: ResetConfig,
}

impl Trainer {
    pub fn new(
        platform: PlatformParams,
        env_cfg: EnvConfig,
        base: DisturbanceProfile,
        cfg: PpoConfig,
        seed: u64,
    ) -> Result<Self, PpoError> {
        cfg.validate()?;
        let params = PolicyParams::init(&cfg.hidden, cfg.init, &mut seed::rng_from(seed, &[seed::STREAM_INIT]));
        Self::resume(platform, env_cfg, base, cfg, seed, params)
    }

    /// Continues training from existing parameters (fresh optimizer state).
    pub fn resume(
        platform: PlatformParams,
        env_cfg: EnvConfig,
        base: DisturbanceProfile,
        cfg: PpoConfig,
        seed: u64,
        params: PolicyParams,
    ) -> Result<Self, PpoError> {
        cfg.validate()?;
        let episode_len = env_cfg.episode_len;
        let reset = env_cfg.reset.clone();
        let mut env_cfg = env_cfg;
        env_cfg.reset = curriculum(&cfg, &reset, 0);
        let slots = (0..cfg.num_envs as u64)
            .map(|i| {
                let mut episode_rng = seed::rng_from(seed, &[seed::STREAM_EPISODE, i]);
                let profile = episode_profile(&base, cfg.uf_max, &mut episode_rng);
                let env_seed = seed::derive(seed, &[seed::STREAM_ENV, i]);
                let (env, obs) = Env::new(platform.clone(), env_cfg.clone(), profile, env_seed)?;
                Ok(Slot {
                    env,
                    obs,
                    episode_rng,
                    action_rng: seed::rng_from(seed, &[seed::STREAM_ACTION, i]),
                    running_return: 0.0,
                })
            })
            .collect::<Result<Vec<_>, PpoError>>()?;
        Ok(Self {
            adam: Adam::new(&params),
            lr: cfg.lr,
            params,
            base,
            slots,
            shuffle_rng: seed::rng_from(seed, &[seed::STREAM_SHUFFLE]),
            epoch: 0,
            steps: 0,
            episode_len,
            reset,
            cfg,
        })
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn into_params(self) -> PolicyParams {
        self.params
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn raw_obs(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.slots.len(), OBS_DIM));
        for (mut row, s) in m.outer_iter_mut().zip(&self.slots) {
            row.assign(&ndarray::ArrayView1::from(s.obs.as_slice()));
        }
        m
    }

    /// Collects one rollout and runs one PPO update.
    pub fn run_epoch(&mut self) -> Result<EpochLog, PpoError> {
        let (n_env, h) = (self.cfg.num_envs, self.cfg.horizon);
        let rows = n_env * h;
        if self.cfg.curriculum_epochs > 0 {
            let reset = curriculum(&self.cfg, &self.reset, self.epoch);
            for s in &mut self.slots {
                s.env.set_reset(reset.clone());
            }
        }
        let mut obs = Array2::zeros((rows, OBS_DIM));
        let mut actions = Array2::zeros((rows, NUM_THRUSTERS));
        let mut probs_buf = Array2::zeros((rows, NUM_THRUSTERS));
        let mut values = vec![0.0; rows];
        let mut rewards = vec![0.0; rows];
        let mut dones = vec![false; rows];
        let mut finished = Vec::new();
        let mut bonus = vec![0.0; rows];

        for t in 0..h {
            let raw = self.raw_obs();
            self.params.obs_norm.update(raw.view());
            let x = self.params.obs_norm.normalize(raw.view());
            let (_, probs) = self.params.forward_actor(x.view());
            let v = self.params.value(x.view());
            let base = &self.base;
            let uf_max = self.cfg.uf_max;
            let kill = self.cfg.kill_distance;
            let bootstrap = self.cfg.bootstrap_timeouts;
            let results = self
                .slots
                .par_iter_mut()
                .enumerate()
                .map(|(e, slot)| -> Result<StepResult, PpoError> {
                    let p = probs.row(e);
                    let bits = sample_bits(p.as_slice().expect("row-major"), &mut slot.action_rng);
                    let out = slot.env.step(&bits)?;
                    if !out.reward.is_finite() {
                        return Err(PpoError::NonFinite(format!(
                            "reward {} at state {:?}",
                            out.reward,
                            slot.env.state()
                        )));
                    }
                    slot.running_return += out.reward;
                    let mut finished_return = None;
                    slot.obs = out.obs;
                    let escaped = kill > 0.0
                        && slot.env.task().pose().is_some_and(|g| position_error(slot.env.state(), g) > kill);
                    let done = out.done || escaped;
                    let truncated = (out.done && !escaped && bootstrap).then(|| slot.obs);
                    if done {
                        finished_return = Some(slot.running_return);
                        slot.running_return = 0.0;
                        slot.env.set_profile(episode_profile(base, uf_max, &mut slot.episode_rng))?;
                        slot.obs = slot.env.reset()?;
                    }
                    Ok(StepResult {
                        bits,
                        reward: out.reward,
                        done,
                        finished_return,
                        truncated,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let cut: Vec<usize> = (0..n_env).filter(|&e| results[e].truncated.is_some()).collect();
            if !cut.is_empty() {
                let mut last = Array2::zeros((cut.len(), OBS_DIM));
                for (mut row, &e) in last.outer_iter_mut().zip(&cut) {
                    let o = results[e].truncated.as_ref().expect("filtered");
                    row.assign(&ndarray::ArrayView1::from(o.as_slice()));
                }
                let tail = self.params.value(self.params.obs_norm.normalize(last.view()).view());
                for (&e, v) in cut.iter().zip(tail.iter()) {
                    bonus[t * n_env + e] = self.cfg.gamma * v;
                }
            }
            for (e, r) in results.into_iter().enumerate() {
                let i = t * n_env + e;
                obs.row_mut(i).assign(&x.row(e));
                probs_buf.row_mut(i).assign(&probs.row(e));
                for (k, &b) in r.bits.iter().enumerate() {
                    actions[[i, k]] = if b { 1.0 } else { 0.0 };
                }
                values[i] = v[e];
                rewards[i] = r.reward;
                dones[i] = r.done;
                finished.extend(r.finished_return);
            }
        }
        let last_x = self.params.obs_norm.normalize(self.raw_obs().view());
        let last_v = self.params.value(last_x.view());

        let targets: Vec<f64> = rewards.iter().zip(&bonus).map(|(r, b)| r + b).collect();
        let mut advantages = vec![0.0; rows];
        let mut returns = vec![0.0; rows];
        for e in 0..n_env {
            let col = |buf: &[f64]| (0..h).map(|t| buf[t * n_env + e]).collect::<Vec<_>>();
            let d: Vec<bool> = (0..h).map(|t| dones[t * n_env + e]).collect();
            let (a, r) = gae(&col(&targets), &col(&values), &d, last_v[e], self.cfg.gamma, self.cfg.gae_lambda);
            for t in 0..h {
                advantages[t * n_env + e] = a[t];
                returns[t * n_env + e] = r[t];
            }
        }
        let mean_step_reward = rewards.iter().sum::<f64>() / rows as f64;
        let mut batch = batch_from_parts(
            obs,
            actions,
            probs_buf,
            Array1::from(values),
            Array1::from(advantages),
            Array1::from(returns),
        );
        batch.normalize_advantages();
        let stats: UpdateStats = ppo_update(
            &mut self.params,
            &mut self.adam,
            &batch,
            &self.cfg,
            &mut self.lr,
            &mut self.shuffle_rng,
        )?;
        self.epoch += 1;
        self.steps += rows as u64;
        Ok(EpochLog {
            epoch: self.epoch,
            steps: self.steps,
            mean_return: mean_step_reward * self.episode_len as f64,
            mean_step_reward,
            episode_return: (!finished.is_empty()).then(|| finished.iter().sum::<f64>() / finished.len() as f64),
            episodes: finished.len(),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            approx_kl: stats.approx_kl,
            lr: stats.lr,
            clip_fraction: stats.clip_fraction,
            grad_norm: stats.grad_norm,
        })
    }
}

/// Trains for `cfg.epochs` epochs, calling `on_epoch` after each one.
pub fn train<F>(
    platform: PlatformParams,
    env_cfg: EnvConfig,
    profile: DisturbanceProfile,
    cfg: PpoConfig,
    seed: u64,
    mut on_epoch: F,
) -> Result<(PolicyParams, Vec<EpochLog>), PpoError>
where
    F: FnMut(&EpochLog, &PolicyParams) -> Result<(), PpoError>,
{
    let epochs = cfg.epochs;
    let mut trainer = Trainer::new(platform, env_cfg, profile, cfg, seed)?;
    let mut logs = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let log = trainer.run_epoch()?;
        on_epoch(&log, trainer.params())?;
        logs.push(log);
    }
    Ok((trainer.into_params(), logs))
}

/// Writes the training log as CSV.
pub fn write_log<W: std::io::Write>(logs: &[EpochLog], w: W) -> Result<(), PpoError> {
    let mut out = csv::Writer::from_writer(w);
    for l in logs {
        out.serialize(l).map_err(|e| PpoError::Io(std::io::Error::other(e)))?;
    }
    out.flush()?;
    Ok(())
}
