//! Actor-critic parameters, Bernoulli thruster heads and the checkpoint format.
//!
//! # Checkpoint layout
//!
//! All integers are little-endian `u32`, all floats little-endian `f64`.
//!
//! | field | contents |
//! |---|---|
//! | magic | the 8 bytes `FCPOLICY` |
//! | version | [`CHECKPOINT_VERSION`] |
//! | actor | layer count `L`, then `L + 1` widths (input first) |
//! | critic | same as actor |
//! | obs norm | `count`, then `dim` means, then `dim` variances (`dim` = actor input width) |
//! | actor params | per layer: weights `out x in` row-major, then `out` biases |
//! | critic params | same as actor params |

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use super::mlp::{Dense, Init, Mlp};
use super::norm::RunningNorm;
use super::PpoError;
use crate::controller::Controller;
use crate::dynamics::PlatformState;
use crate::env::{Observation, TaskSpec, OBS_DIM};
use crate::{ThrusterBits, NUM_THRUSTERS};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FCPOLICY";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` inside logarithms.
pub const PROB_EPS: f64 = 1e-8;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Joint log-probability of `bits` under independent Bernoullis.
pub fn log_prob(probs: &[f64], bits: &[bool]) -> f64 {
    probs
        .iter()
        .zip(bits)
        .map(|(&p, &b)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if b {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum()
}

/// Summed entropy of independent Bernoullis.
pub fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .map(|&p| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
        })
        .sum()
}

/// `KL(old || new)` between two products of Bernoullis.
pub fn kl_divergence(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(&p, &q)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            let q = q.clamp(PROB_EPS, 1.0 - PROB_EPS);
            p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
        })
        .sum()
}

pub fn sample_bits<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> ThrusterBits {
    std::array::from_fn(|i| rng.gen::<f64>() < probs[i])
}

/// Deterministic evaluation rule.
pub fn threshold_bits(probs: &[f64]) -> ThrusterBits {
    std::array::from_fn(|i| probs[i] >= 0.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub actor: Mlp,
    pub critic: Mlp,
    pub obs_norm: RunningNorm,
}

impl PolicyParams {
    pub fn init<R: Rng + ?Sized>(hidden: &[usize], init: Init, rng: &mut R) -> Self {
        let dims = |out: usize| {
            std::iter::once(OBS_DIM)
                .chain(hidden.iter().copied())
                .chain(std::iter::once(out))
                .collect::<Vec<_>>()
        };
        Self {
            actor: Mlp::init(&dims(NUM_THRUSTERS), init, 0.01, rng),
            critic: Mlp::init(&dims(1), init, 1.0, rng),
            obs_norm: RunningNorm::new(OBS_DIM),
        }
    }

    pub fn zeros(hidden: &[usize]) -> Self {
        let mut dims: Vec<usize> = std::iter::once(OBS_DIM).chain(hidden.iter().copied()).collect();
        dims.push(NUM_THRUSTERS);
        let actor = Mlp::zeros(&dims);
        *dims.last_mut().unwrap() = 1;
        Self {
            actor,
            critic: Mlp::zeros(&dims),
            obs_norm: RunningNorm::new(OBS_DIM),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critic.is_finite()
    }

    /// Logits and probabilities for already-normalized observations.
    pub fn forward_actor(&self, obs: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let logits = self.actor.forward(obs);
        let probs = logits.mapv(sigmoid);
        (logits, probs)
    }

    pub fn value(&self, obs: ArrayView2<f64>) -> Array1<f64> {
        self.critic.forward(obs).column(0).to_owned()
    }

    /// Thruster probabilities for one raw observation, using frozen statistics.
    pub fn probs(&self, obs: &Observation) -> [f64; NUM_THRUSTERS] {
        let x = self.obs_norm.normalize_row(obs.as_slice());
        let x = ArrayView2::from_shape((1, OBS_DIM), &x).expect("observation width");
        let (_, p) = self.forward_actor(x);
        std::array::from_fn(|i| p[[0, i]])
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<(), PpoError> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        for net in [&self.actor, &self.critic] {
            let dims = net.dims();
            w.write_all(&((dims.len() - 1) as u32).to_le_bytes())?;
            for d in dims {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
        }
        let n = &self.obs_norm;
        let (mean, var) = (n.mean(), n.var());
        let floats = std::iter::once(n.count())
            .chain(mean.iter().copied())
            .chain(var.iter().copied())
            .chain(self.actor.params().copied())
            .chain(self.critic.params().copied());
        for v in floats {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self, PpoError> {
        let bad = |m: &str| PpoError::Checkpoint(m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("not a policy checkpoint (bad magic)"));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(PpoError::Checkpoint(format!(
                "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let read_dims = |r: &mut R| -> Result<Vec<usize>, PpoError> {
            let layers = read_u32(r)? as usize;
            if layers == 0 || layers > 16 {
                return Err(bad("implausible layer count"));
            }
            let dims = (0..=layers).map(|_| read_u32(r).map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            if dims.iter().any(|&d| d == 0 || d > 1 << 16) {
                return Err(bad("implausible layer width"));
            }
            Ok(dims)
        };
        let actor_dims = read_dims(&mut r)?;
        let critic_dims = read_dims(&mut r)?;
        if actor_dims[0] != OBS_DIM || critic_dims[0] != OBS_DIM {
            return Err(bad("input width does not match the observation"));
        }
        if *actor_dims.last().unwrap() != NUM_THRUSTERS || *critic_dims.last().unwrap() != 1 {
            return Err(bad("output widths must be 8 (actor) and 1 (critic)"));
        }
        let count = read_f64(&mut r)?;
        let mean = Array1::from((0..OBS_DIM).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>, _>>()?);
        let var = Array1::from((0..OBS_DIM).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>, _>>()?);
        let actor = read_mlp(&mut r, &actor_dims)?;
        let critic = read_mlp(&mut r, &critic_dims)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(bad("trailing bytes after parameters"));
        }
        let params = Self {
            actor,
            critic,
            obs_norm: RunningNorm::from_parts(mean, var, count),
        };
        if !params.is_finite() || !count.is_finite() || params.obs_norm.mean().iter().any(|m| !m.is_finite()) {
            return Err(bad("non-finite values in checkpoint"));
        }
        Ok(params)
    }

    pub fn save_file(&self, path: &std::path::Path) -> Result<(), PpoError> {
        let f = std::fs::File::create(path)?;
        self.save(std::io::BufWriter::new(f))
    }

    pub fn load_file(path: &std::path::Path) -> Result<Self, PpoError> {
        let f = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(f))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, PpoError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, PpoError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_mlp<R: Read>(r: &mut R, dims: &[usize]) -> Result<Mlp, PpoError> {
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for d in dims.windows(2) {
        let w = (0..d[0] * d[1]).map(|_| read_f64(r)).collect::<Result<Vec<_>, _>>()?;
        let b = (0..d[1]).map(|_| read_f64(r)).collect::<Result<Vec<_>, _>>()?;
        layers.push(Dense {
            w: Array2::from_shape_vec((d[1], d[0]), w).expect("length matches shape"),
            b: Array1::from(b),
        });
    }
    Ok(Mlp::from_layers(layers))
}

/// A trained policy acting deterministically (`p >= 0.5` fires).
#[derive(Debug, Clone)]
pub struct Policy {
    params: PolicyParams,
    label: String,
}

impl Policy {
    pub fn new(params: PolicyParams) -> Self {
        Self {
            params,
            label: "RL".into(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }
}

impl Controller for Policy {
    fn reset(&mut self) {}

    fn act(&mut self, obs: &Observation, _observed: &PlatformState, _task: &TaskSpec) -> ThrusterBits {
        threshold_bits(&self.params.probs(obs))
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}
