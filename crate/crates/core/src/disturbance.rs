//! Disturbance injection: action noise (AN), velocity noise (VN), uneven-floor
//! force (UF), torque disturbance (TD) and random thruster failure (RTF).
//!
//! A [`DisturbanceProfile`] describes magnitudes. At episode start it is turned
//! into an [`EpisodeDisturbance`] which freezes everything that must stay
//! constant for the episode (failed nozzles, floor-force heading, torque sign)
//! and owns the per-step noise stream.

use std::f64::consts::{PI, TAU};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{PlatformState, Wrench};
use crate::seed::{self, SimRng};
use crate::{ThrusterBits, NUM_THRUSTERS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DisturbanceError {
    #[error("rtf_count must be at most {NUM_THRUSTERS}, got {0}")]
    TooManyFailures(usize),
    #[error("disturbance field `{field}` must be finite and non-negative, got {value}")]
    BadMagnitude { field: &'static str, value: f64 },
    #[error("sinusoidal floor-force period must be positive, got {0}")]
    BadPeriod(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FloorForceMode {
    #[default]
    Constant,
    Sinusoidal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceProfile {
    /// Per-nozzle additive force noise bound, N.
    pub an: f64,
    /// Velocity observation noise bound, m/s.
    pub vn: f64,
    /// Multiplier turning `vn` into the angular-rate bound (rad/s).
    pub vn_angular_scale: f64,
    /// Floor force magnitude, N.
    pub uf: f64,
    pub uf_mode: FloorForceMode,
    /// Fixed floor-force heading (rad); drawn uniformly per episode when absent.
    pub uf_direction: Option<f64>,
    /// Sinusoidal mode: swing amplitude of the heading, rad.
    pub uf_amplitude: f64,
    /// Sinusoidal mode: period in control steps.
    pub uf_period: f64,
    /// Sinusoidal mode: phase, rad.
    pub uf_phase: f64,
    /// Torque magnitude, N m. The sign is drawn per episode.
    pub td: f64,
    /// Number of failed nozzles.
    pub rtf_count: usize,
    pub seed: u64,
}

impl Default for DisturbanceProfile {
    fn default() -> Self {
        Self {
            an: 0.0,
            vn: 0.0,
            vn_angular_scale: 1.0,
            uf: 0.0,
            uf_mode: FloorForceMode::Constant,
            uf_direction: None,
            uf_amplitude: PI,
            uf_period: 100.0,
            uf_phase: 0.0,
            td: 0.0,
            rtf_count: 0,
            seed: 0,
        }
    }
}

impl DisturbanceProfile {
    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), DisturbanceError> {
        for (field, value) in [
            ("an", self.an),
            ("vn", self.vn),
            ("vn_angular_scale", self.vn_angular_scale),
            ("uf", self.uf),
            ("uf_amplitude", self.uf_amplitude),
            ("td", self.td),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(DisturbanceError::BadMagnitude { field, value });
            }
        }
        if self.rtf_count > NUM_THRUSTERS {
            return Err(DisturbanceError::TooManyFailures(self.rtf_count));
        }
        if self.uf_mode == FloorForceMode::Sinusoidal
            && !(self.uf_period > 0.0 && self.uf_period.is_finite())
        {
            return Err(DisturbanceError::BadPeriod(self.uf_period));
        }
        Ok(())
    }

    /// Freezes the per-episode quantities and seeds the episode's noise stream.
    pub fn sample_episode(&self, rng: &mut SimRng) -> Result<EpisodeDisturbance, DisturbanceError> {
        self.validate()?;
        let mut failed = [false; NUM_THRUSTERS];
        for i in index::sample(rng, NUM_THRUSTERS, self.rtf_count) {
            failed[i] = true;
        }
        let uf_heading = match self.uf_direction {
            Some(d) => d,
            None => rng.gen_range(0.0..TAU),
        };
        let td_sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let stream = rng.gen::<u64>();
        Ok(EpisodeDisturbance {
            profile: self.clone(),
            failed,
            uf_heading,
            td_sign,
            rng: seed::rng_from(self.seed, &[seed::STREAM_EPISODE, stream]),
        })
    }
}

/// Disturbance state for one episode.
#[derive(Debug, Clone)]
pub struct EpisodeDisturbance {
    profile: DisturbanceProfile,
    failed: ThrusterBits,
    uf_heading: f64,
    td_sign: f64,
    rng: SimRng,
}

impl EpisodeDisturbance {
    /// A disturbance-free episode.
    pub fn none() -> Self {
        Self {
            profile: DisturbanceProfile::ideal(),
            failed: [false; NUM_THRUSTERS],
            uf_heading: 0.0,
            td_sign: 1.0,
            rng: seed::rng_from(0, &[]),
        }
    }

    pub fn profile(&self) -> &DisturbanceProfile {
        &self.profile
    }

    pub fn failed_mask(&self) -> &ThrusterBits {
        &self.failed
    }

    pub fn floor_heading(&self) -> f64 {
        self.uf_heading
    }

    pub fn torque_sign(&self) -> f64 {
        self.td_sign
    }

    /// Zeroes failed nozzles. Idempotent.
    pub fn apply_failure_mask(&self, bits: &ThrusterBits) -> ThrusterBits {
        std::array::from_fn(|i| bits[i] && !self.failed[i])
    }

    /// Masks failed nozzles and draws the per-nozzle force noise.
    pub fn corrupt_action(&mut self, bits: &ThrusterBits) -> (ThrusterBits, [f64; NUM_THRUSTERS]) {
        let masked = self.apply_failure_mask(bits);
        let an = self.profile.an;
        let noise = if an > 0.0 {
            std::array::from_fn(|_| self.rng.gen_range(-an..=an))
        } else {
            [0.0; NUM_THRUSTERS]
        };
        (masked, noise)
    }

    /// Adds bounded uniform noise to the velocities; pose is untouched.
    pub fn corrupt_observation(&mut self, state: &PlatformState) -> PlatformState {
        let vn = self.profile.vn;
        if vn <= 0.0 {
            return *state;
        }
        let wn = vn * self.profile.vn_angular_scale;
        let mut s = *state;
        s.vx += self.rng.gen_range(-vn..=vn);
        s.vy += self.rng.gen_range(-vn..=vn);
        if wn > 0.0 {
            s.omega += self.rng.gen_range(-wn..=wn);
        }
        s
    }

    /// Floor force and disturbance torque at step `t`, world frame.
    pub fn external_wrench(&self, t: u64) -> Wrench {
        let p = &self.profile;
        let heading = match p.uf_mode {
            FloorForceMode::Constant => self.uf_heading,
            FloorForceMode::Sinusoidal => {
                self.uf_heading + p.uf_amplitude * (TAU * t as f64 / p.uf_period + p.uf_phase).sin()
            }
        };
        let (s, c) = heading.sin_cos();
        Wrench {
            fx: p.uf * c,
            fy: p.uf * s,
            tz: self.td_sign * p.td,
        }
    }
}
