//! Clipped-surrogate PPO update.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::{Init, Mlp};
use super::policy::{kl_divergence, sigmoid, PolicyParams, PROB_EPS};
use super::PpoError;
use crate::seed::SimRng;
use crate::NUM_THRUSTERS;

/// Rows per parallel gradient shard. Shards are summed in index order, so the
/// result does not depend on the worker count.
pub const SHARD_ROWS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub critic_coef: f64,
    pub grad_clip_norm: f64,
    pub kl_threshold: f64,
    /// Multiplicative learning-rate adaptation driven by the measured KL.
    pub adaptive_lr: bool,
    pub lr_min: f64,
    pub lr_max: f64,
    pub mini_epochs: usize,
    pub minibatch: usize,
    pub clip_eps: f64,
    pub num_envs: usize,
    pub horizon: usize,
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub init: Init,
    /// Training episodes draw the floor-force magnitude uniformly from `[0, uf_max]` N.
    pub uf_max: f64,
    /// Go-to-pose training episodes end early once the platform is farther
    /// than this from its goal, m. Zero disables the cut.
    pub kill_distance: f64,
    /// Go-to-pose spawn radius at epoch 0, m. It grows linearly to the
    /// environment's configured radius over `curriculum_epochs`.
    pub spawn_radius_start: f64,
    /// Zero disables the curriculum.
    pub curriculum_epochs: usize,
    /// Add `gamma * V(s_T)` to the last reward of an episode cut by the time limit.
    pub bootstrap_timeouts: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            entropy_coef: 0.0,
            critic_coef: 0.5,
            grad_clip_norm: 1.0,
            kl_threshold: 0.016,
            adaptive_lr: true,
            lr_min: 1e-6,
            lr_max: 1e-2,
            mini_epochs: 8,
            minibatch: 8192,
            clip_eps: 0.2,
            num_envs: 512,
            horizon: 16,
            epochs: 500,
            hidden: vec![128, 128],
            init: Init::Orthogonal,
            uf_max: 0.25,
            kill_distance: 6.0,
            spawn_radius_start: 0.5,
            curriculum_epochs: 250,
            bootstrap_timeouts: true,
        }
    }
}

impl PpoConfig {
    pub fn batch_size(&self) -> usize {
        self.num_envs * self.horizon
    }

    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |m: String| Err(PpoError::Config(m));
        if self.num_envs == 0 || self.horizon == 0 || self.minibatch == 0 || self.mini_epochs == 0 {
            return bad("num_envs, horizon, minibatch and mini_epochs must be positive".into());
        }
        if self.batch_size() % self.minibatch != 0 {
            return bad(format!(
                "num_envs * horizon = {} is not divisible by minibatch = {}",
                self.batch_size(),
                self.minibatch
            ));
        }
        if !(self.lr > 0.0 && self.lr_min > 0.0 && self.lr_min <= self.lr_max) {
            return bad("learning rates must satisfy 0 < lr_min <= lr_max and lr > 0".into());
        }
        for (name, v) in [("gamma", self.gamma), ("gae_lambda", self.gae_lambda)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        let non_neg = [
            ("entropy_coef", self.entropy_coef),
            ("critic_coef", self.critic_coef),
            ("kl_threshold", self.kl_threshold),
            ("uf_max", self.uf_max),
            ("kill_distance", self.kill_distance),
            ("spawn_radius_start", self.spawn_radius_start),
        ];
        for (name, v) in non_neg {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.clip_eps > 0.0 && self.grad_clip_norm > 0.0) {
            return bad("clip_eps and grad_clip_norm must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer widths must be non-empty and positive".into());
        }
        Ok(())
    }
}

/// One collected batch, flattened over environments and steps.
#[derive(Debug, Clone)]
pub struct Batch {
    /// Normalized observations.
    pub obs: Array2<f64>,
    /// Action bits as 0/1.
    pub actions: Array2<f64>,
    /// Behaviour-policy probabilities.
    pub probs: Array2<f64>,
    pub log_probs: Array1<f64>,
    pub values: Array1<f64>,
    pub advantages: Array1<f64>,
    pub returns: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shifts and scales advantages to zero mean and unit deviation.
    pub fn normalize_advantages(&mut self) {
        let mean = self.advantages.mean().unwrap_or(0.0);
        let std = self.advantages.std(0.0);
        self.advantages.mapv_inplace(|a| (a - mean) / (std + 1e-8));
    }

    fn select(&self, idx: &[usize]) -> Batch {
        Batch {
            obs: self.obs.select(Axis(0), idx),
            actions: self.actions.select(Axis(0), idx),
            probs: self.probs.select(Axis(0), idx),
            log_probs: self.log_probs.select(Axis(0), idx),
            values: self.values.select(Axis(0), idx),
            advantages: self.advantages.select(Axis(0), idx),
            returns: self.returns.select(Axis(0), idx),
        }
    }
}

/// Loss terms averaged over a minibatch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    /// `KL(behaviour || current)` before the step.
    pub kl: f64,
    pub clip_fraction: f64,
}

impl LossParts {
    pub fn total(&self, cfg: &PpoConfig) -> f64 {
        self.policy + self.value - cfg.entropy_coef * self.entropy
    }

    fn add(&mut self, o: &LossParts) {
        self.policy += o.policy;
        self.value += o.value;
        self.entropy += o.entropy;
        self.kl += o.kl;
        self.clip_fraction += o.clip_fraction;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub actor: Mlp,
    pub critic: Mlp,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        (self.actor.sq_norm() + self.critic.sq_norm()).sqrt()
    }

    fn add(&mut self, o: &Gradients) {
        self.actor.add_scaled(&o.actor, 1.0);
        self.critic.add_scaled(&o.critic, 1.0);
    }

    fn scale(&mut self, s: f64) {
        self.actor.scale(s);
        self.critic.scale(s);
    }
}

/// Sums (not means) of the loss terms and gradients over `b`; each sample's
/// loss is already divided by `denom`.
fn shard(params: &PolicyParams, b: &Batch, cfg: &PpoConfig, denom: f64) -> (LossParts, Gradients) {
    let n = b.len();
    let trace = params.actor.trace(b.obs.view());
    let logits = trace.output();
    let mut dlogits = Array2::<f64>::zeros((n, NUM_THRUSTERS));
    let mut parts = LossParts::default();
    for i in 0..n {
        let z = logits.row(i);
        let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
        let bits = b.actions.row(i);
        let mut logp = 0.0;
        let mut ent = 0.0;
        for k in 0..NUM_THRUSTERS {
            let pk = p[k].clamp(PROB_EPS, 1.0 - PROB_EPS);
            logp += if bits[k] > 0.5 { pk.ln() } else { (1.0 - pk).ln() };
            ent -= pk * pk.ln() + (1.0 - pk) * (1.0 - pk).ln();
        }
        let adv = b.advantages[i];
        let ratio = (logp - b.log_probs[i]).exp();
        let clipped = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
        let surrogate = (ratio * adv).min(clipped * adv);
        // the unclipped branch carries the gradient whenever it is the minimum
        let coef = if ratio * adv <= clipped * adv { -ratio * adv / denom } else { 0.0 };
        parts.policy -= surrogate / denom;
        parts.entropy += ent / denom;
        parts.kl += kl_divergence(b.probs.row(i).as_slice().expect("row-major"), &p) / denom;
        if (ratio - 1.0).abs() > cfg.clip_eps {
            parts.clip_fraction += 1.0 / denom;
        }
        for k in 0..NUM_THRUSTERS {
            let score = bits[k] - p[k];
            // d(entropy)/dz = -z p (1 - p)
            let dent = -z[k] * p[k] * (1.0 - p[k]);
            dlogits[[i, k]] = coef * score - cfg.entropy_coef * dent / denom;
        }
    }
    let actor = params.actor.backward(&trace, dlogits.view());

    let ctrace = params.critic.trace(b.obs.view());
    let v = ctrace.output().column(0).to_owned();
    let err = &v - &b.returns;
    parts.value = cfg.critic_coef * err.mapv(|e| e * e).sum() / denom;
    let dv = (err * (2.0 * cfg.critic_coef / denom)).insert_axis(Axis(1));
    let critic = params.critic.backward(&ctrace, dv.view());
    (parts, Gradients { actor, critic })
}

/// Minibatch-mean loss terms and their gradients with respect to every parameter.
pub fn loss_and_grads(params: &PolicyParams, b: &Batch, cfg: &PpoConfig) -> (LossParts, Gradients) {
    let n = b.len();
    let denom = n as f64;
    let starts: Vec<usize> = (0..n).step_by(SHARD_ROWS).collect();
    let results: Vec<(LossParts, Gradients)> = starts
        .par_iter()
        .map(|&s0| {
            let idx: Vec<usize> = (s0..(s0 + SHARD_ROWS).min(n)).collect();
            shard(params, &b.select(&idx), cfg, denom)
        })
        .collect();
    let mut it = results.into_iter();
    let (mut parts, mut grads) = it.next().expect("non-empty batch");
    for (p, g) in it {
        parts.add(&p);
        grads.add(&g);
    }
    (parts, grads)
}

/// Adam over the concatenated actor and critic parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(params: &PolicyParams) -> Self {
        let n = params.actor.num_params() + params.critic.num_params();
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut PolicyParams, grads: &Gradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let ps = params.actor.params_mut().chain(params.critic.params_mut());
        let gs = grads.actor.params().chain(grads.critic.params());
        for (((p, &g), m), v) in ps.zip(gs).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Averages over every minibatch step of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// Learning rate after the last adaptation.
    pub lr: f64,
}

/// Bounded multiplicative learning-rate rule.
pub fn adapt_lr(lr: f64, kl: f64, cfg: &PpoConfig) -> f64 {
    let next = if kl > 1.5 * cfg.kl_threshold {
        lr / 2.0
    } else if kl < cfg.kl_threshold / 1.5 {
        lr * 1.5
    } else {
        lr
    };
    next.clamp(cfg.lr_min, cfg.lr_max)
}

/// Runs `mini_epochs` passes of shuffled minibatch steps. On a non-finite loss
/// or gradient the parameters and optimizer are restored and an error returned.
pub fn ppo_update(
    params: &mut PolicyParams,
    adam: &mut Adam,
    batch: &Batch,
    cfg: &PpoConfig,
    lr: &mut f64,
    rng: &mut SimRng,
) -> Result<UpdateStats, PpoError> {
    let saved = (params.clone(), adam.clone(), *lr);
    let mut stats = UpdateStats::default();
    let mut steps = 0usize;
    let mut order: Vec<usize> = (0..batch.len()).collect();
    for _ in 0..cfg.mini_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let mb = if chunk.len() == batch.len() && chunk.windows(2).all(|w| w[0] < w[1]) {
                batch.clone()
            } else {
                batch.select(chunk)
            };
            let (parts, mut grads) = loss_and_grads(params, &mb, cfg);
            let norm = grads.norm();
            if !parts.total(cfg).is_finite() || !norm.is_finite() {
                (*params, *adam, *lr) = saved;
                return Err(PpoError::NonFinite(format!(
                    "loss {:?} grad norm {norm} at minibatch step {steps}",
                    parts
                )));
            }
            if norm > cfg.grad_clip_norm {
                grads.scale(cfg.grad_clip_norm / norm);
            }
            if cfg.adaptive_lr {
                *lr = adapt_lr(*lr, parts.kl, cfg);
            }
            adam.step(params, &grads, *lr);
            stats.policy_loss += parts.policy;
            stats.value_loss += parts.value;
            stats.entropy += parts.entropy;
            stats.approx_kl += parts.kl;
            stats.clip_fraction += parts.clip_fraction;
            stats.grad_norm += norm;
            steps += 1;
        }
    }
    let k = steps as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.approx_kl /= k;
    stats.clip_fraction /= k;
    stats.grad_norm /= k;
    stats.lr = *lr;
    if !params.is_finite() {
        (*params, *adam, *lr) = saved;
        return Err(PpoError::NonFinite("parameters became non-finite".into()));
    }
    Ok(stats)
}

/// Builds a batch from raw pieces, computing behaviour log-probabilities.
pub fn batch_from_parts(
    obs: Array2<f64>,
    actions: Array2<f64>,
    probs: Array2<f64>,
    values: Array1<f64>,
    advantages: Array1<f64>,
    returns: Array1<f64>,
) -> Batch {
    let log_probs = Array1::from_iter(probs.outer_iter().zip(actions.outer_iter()).map(|(p, a)| row_log_prob(p, a)));
    Batch {
        obs,
        actions,
        probs,
        log_probs,
        values,
        advantages,
        returns,
    }
}

fn row_log_prob(p: ArrayView1<f64>, a: ArrayView1<f64>) -> f64 {
    p.iter()
        .zip(a)
        .map(|(&p, &a)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if a > 0.5 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum()
}

fn param_at(p: &mut PolicyParams, k: usize) -> &mut f64 {
    let n_actor = p.actor.num_params();
    if k < n_actor {
        p.actor.param_mut(k)
    } else {
        p.critic.param_mut(k - n_actor)
    }
}

/// Finite-difference check of [`loss_and_grads`]: the largest relative error
/// over every parameter, with relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check(params: &PolicyParams, b: &Batch, cfg: &PpoConfig, step: f64, floor: f64) -> f64 {
    let (_, g) = loss_and_grads(params, b, cfg);
    let analytic: Vec<f64> = g.actor.params().chain(g.critic.params()).copied().collect();
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (k, &a) in analytic.iter().enumerate() {
        let orig = *param_at(&mut probe, k);
        *param_at(&mut probe, k) = orig + step;
        let hi = loss_and_grads(&probe, b, cfg).0.total(cfg);
        *param_at(&mut probe, k) = orig - step;
        let lo = loss_and_grads(&probe, b, cfg).0.total(cfg);
        *param_at(&mut probe, k) = orig;
        let fd = (hi - lo) / (2.0 * step);
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(floor));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::OBS_DIM;
    use crate::seed::rng_from;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_batch(params: &PolicyParams, n: usize, seed: u64) -> Batch {
        let mut rng = rng_from(seed, &[]);
        let obs = Array2::from_shape_fn((n, OBS_DIM), |_| rng.gen_range(-2.0..2.0));
        let probs = params.forward_actor(obs.view()).1;
        let actions = probs.mapv(|p| if rng.gen::<f64>() < p { 1.0 } else { 0.0 });
        let values = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        let advantages = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        let returns = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        batch_from_parts(obs, actions, probs, values, advantages, returns)
    }

    #[test]
    fn identical_policy_has_unit_ratio_and_zero_kl() {
        let mut rng = rng_from(5, &[]);
        let p = PolicyParams::init(&[32, 32], Init::Orthogonal, &mut rng);
        let b = random_batch(&p, 64, 6);
        let cfg = PpoConfig::default();
        let (parts, _) = loss_and_grads(&p, &b, &cfg);
        assert_abs_diff_eq!(parts.policy, -b.advantages.mean().unwrap(), epsilon = 1e-12);
        assert_abs_diff_eq!(parts.kl, 0.0, epsilon = 1e-15);
        assert_eq!(parts.clip_fraction, 0.0);
    }

    #[test]
    fn zero_advantage_leaves_actor_gradient_zero() {
        let mut rng = rng_from(7, &[]);
        let p = PolicyParams::init(&[16, 16], Init::FanInUniform, &mut rng);
        let mut b = random_batch(&p, 32, 8);
        b.advantages.fill(0.0);
        let (_, g) = loss_and_grads(&p, &b, &PpoConfig::default());
        assert!(g.actor.params().all(|&v| v == 0.0));
        assert!(g.critic.sq_norm() > 0.0);
    }

    #[test]
    fn sharding_matches_single_pass() {
        let mut rng = rng_from(9, &[]);
        let p = PolicyParams::init(&[16, 16], Init::Orthogonal, &mut rng);
        let b = random_batch(&p, 2 * SHARD_ROWS + 17, 10);
        let cfg = PpoConfig::default();
        let (parts, g) = loss_and_grads(&p, &b, &cfg);
        let (ref_parts, ref_g) = shard(&p, &b, &cfg, b.len() as f64);
        assert_abs_diff_eq!(parts.policy, ref_parts.policy, epsilon = 1e-12);
        assert_abs_diff_eq!(parts.value, ref_parts.value, epsilon = 1e-12);
        for (a, r) in g.actor.params().zip(ref_g.actor.params()) {
            assert_abs_diff_eq!(a, r, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_with_entropy() {
        let mut rng = rng_from(11, &[]);
        let p = PolicyParams::init(&[12, 12], Init::FanInUniform, &mut rng);
        let mut b = random_batch(&p, 16, 12);
        b.log_probs.mapv_inplace(|l| l + rng.gen_range(-0.1..0.1));
        let cfg = PpoConfig {
            entropy_coef: 0.01,
            ..Default::default()
        };
        assert!(gradient_check(&p, &b, &cfg, 1e-5, 1e-6) < 1e-4);
    }

    #[test]
    fn adaptive_rule_is_bounded() {
        let cfg = PpoConfig::default();
        assert_eq!(adapt_lr(1e-4, 1.0, &cfg), 5e-5);
        assert_eq!(adapt_lr(1e-4, 0.0, &cfg), 1e-4 * 1.5);
        assert_eq!(adapt_lr(1e-4, 0.016, &cfg), 1e-4);
        assert_eq!(adapt_lr(1e-2, 0.0, &cfg), 1e-2);
        assert_eq!(adapt_lr(1e-6, 1.0, &cfg), 1e-6);
    }

    #[test]
    fn update_is_reproducible_and_finite() {
        let run = || {
            let mut rng = rng_from(13, &[]);
            let mut p = PolicyParams::init(&[16, 16], Init::Orthogonal, &mut rng);
            let mut b = random_batch(&p, 64, 14);
            b.normalize_advantages();
            let cfg = PpoConfig {
                minibatch: 16,
                ..Default::default()
            };
            let mut adam = Adam::new(&p);
            let mut lr = cfg.lr;
            let s = ppo_update(&mut p, &mut adam, &b, &cfg, &mut lr, &mut rng_from(15, &[])).unwrap();
            (p, s)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert!(a.is_finite());
    }

    #[test]
    fn normalized_advantages_have_unit_scale() {
        let mut rng = rng_from(17, &[]);
        let p = PolicyParams::zeros(&[4]);
        let mut b = random_batch(&p, 500, 18);
        b.advantages.mapv_inplace(|a| 3.0 * a + rng.gen_range(5.0..6.0));
        b.normalize_advantages();
        assert_abs_diff_eq!(b.advantages.mean().unwrap(), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(b.advantages.std(0.0), 1.0, epsilon = 1e-6);
    }
}
