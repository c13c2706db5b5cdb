//! Floating-platform control suite.
//!
//! A planar air-bearing platform actuated by eight on/off thrusters sharing one
//! pressure line, plus everything needed to control and benchmark it:
//!
//! * [`dynamics`]: fixed-step rigid-body simulation with the shared-pressure thrust rule.
//! * [`disturbance`]: action/velocity noise, floor force, torque and thruster failures.
//! * [`env`]: go-to-pose and track-velocity episodes with a gym-style step/reset contract.
//! * [`lqr`]: central-difference linearization, discrete Riccati solve, binary allocation.
//! * [`ppo`]: from-scratch PPO with a fixed tanh actor-critic and Bernoulli thruster heads.
//! * [`tracker`]: look-ahead path tracker emitting velocity targets.
//! * [`bench`]: evaluation protocol, metric tables and degradation buckets.
//! * [`config`]: the suite-wide TOML configuration with strict key checking.

pub mod bench;
pub mod config;
pub mod controller;
pub mod disturbance;
pub mod dynamics;
pub mod env;
pub mod lqr;
pub mod ppo;
pub mod seed;
pub mod tracker;

pub use controller::Controller;
pub use dynamics::{PlatformParams, PlatformState, ThrusterCommand, Wrench};
pub use env::{Observation, TaskKind, TaskSpec};

/// Number of thrusters on the platform.
pub const NUM_THRUSTERS: usize = 8;

/// On/off state of every thruster.
pub type ThrusterBits = [bool; NUM_THRUSTERS];

/// Packs thruster bits into a byte, thruster `i` at bit `i`.
pub fn bits_to_mask(bits: &ThrusterBits) -> u8 {
    bits.iter()
        .enumerate()
        .fold(0u8, |m, (i, &b)| if b { m | (1 << i) } else { m })
}

/// Inverse of [`bits_to_mask`].
pub fn mask_to_bits(mask: u8) -> ThrusterBits {
    std::array::from_fn(|i| mask & (1 << i) != 0)
}

pub fn active_count(bits: &ThrusterBits) -> usize {
    bits.iter().filter(|&&b| b).count()
}
