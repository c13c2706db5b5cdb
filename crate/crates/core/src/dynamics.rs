//! Planar rigid-body dynamics of the floating platform.
//!
//! The platform is a frictionless disc with eight body-fixed on/off thrusters
//! fed by one pressure line: whatever number `n` of valves is open, the total
//! emitted thrust is `max_total_thrust` and each open nozzle delivers `1/n` of it.
//!
//! Integration is semi-implicit Euler at the control period (one physics step
//! per control step). Forces are piecewise constant over a step, so velocities
//! are exact and positions use the end-of-step velocity.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{active_count, ThrusterBits, NUM_THRUSTERS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid platform parameters: {0}")]
    InvalidParams(String),
}

/// Pose, twist and step index of the platform in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlatformState {
    pub x: f64,
    pub y: f64,
    /// Heading, kept in (-pi, pi].
    pub theta: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
    pub t: u64,
}

impl PlatformState {
    pub fn at_rest(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
            ..Self::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.theta, self.vx, self.vy, self.omega]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

/// One nozzle: mounting point and unit firing direction, both in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thruster {
    pub position: [f64; 2],
    pub direction: [f64; 2],
}

impl Thruster {
    /// z-component of `position x direction`, i.e. torque per newton.
    pub fn lever(&self) -> f64 {
        self.position[0] * self.direction[1] - self.position[1] * self.direction[0]
    }
}

/// Default layout: four nozzle pairs at body angles 45, 135, 225 and 315 deg
/// on a 0.3 m circle. In each pair nozzle `2k` fires along the counter-clockwise
/// tangent and nozzle `2k + 1` along the clockwise one.
pub fn default_thruster_table() -> [Thruster; NUM_THRUSTERS] {
    const MOUNT_RADIUS: f64 = 0.3;
    std::array::from_fn(|i| {
        let phi = FRAC_PI_4 + (i / 2) as f64 * (PI / 2.0);
        let (s, c) = phi.sin_cos();
        let sense = if i % 2 == 0 { 1.0 } else { -1.0 };
        Thruster {
            position: [MOUNT_RADIUS * c, MOUNT_RADIUS * s],
            direction: [-s * sense, c * sense],
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlatformParams {
    /// kg
    pub mass: f64,
    /// m
    pub radius: f64,
    /// kg m^2
    pub inertia: f64,
    /// Total thrust shared by all open nozzles, N.
    pub max_total_thrust: f64,
    pub thrusters: [Thruster; NUM_THRUSTERS],
    /// Control (and integration) period, s.
    pub control_dt: f64,
}

impl Default for PlatformParams {
    fn default() -> Self {
        let mass = 5.32;
        let radius = 0.31;
        Self {
            mass,
            radius,
            // uniform disc
            inertia: 0.5 * mass * radius * radius,
            max_total_thrust: 1.0,
            thrusters: default_thruster_table(),
            control_dt: 0.2,
        }
    }
}

impl PlatformParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |msg: String| Err(DynamicsError::InvalidParams(msg));
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return bad(format!("mass must be positive, got {}", self.mass));
        }
        if !(self.inertia > 0.0 && self.inertia.is_finite()) {
            return bad(format!("inertia must be positive, got {}", self.inertia));
        }
        if !(self.control_dt > 0.0 && self.control_dt.is_finite()) {
            return bad(format!("control_dt must be positive, got {}", self.control_dt));
        }
        if !(self.max_total_thrust >= 0.0 && self.max_total_thrust.is_finite()) {
            return bad(format!(
                "max_total_thrust must be non-negative, got {}",
                self.max_total_thrust
            ));
        }
        for (i, th) in self.thrusters.iter().enumerate() {
            let norm = th.direction[0].hypot(th.direction[1]);
            if (norm - 1.0).abs() > 1e-9 || !th.position.iter().all(|p| p.is_finite()) {
                return bad(format!("thruster {i} direction is not unit length (|d| = {norm})"));
            }
        }
        Ok(())
    }
}

/// Valve states plus the force each open valve actually delivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrusterCommand {
    pub active: ThrusterBits,
    pub realized_force_per_thruster: f64,
}

impl ThrusterCommand {
    pub fn off() -> Self {
        Self {
            active: [false; NUM_THRUSTERS],
            realized_force_per_thruster: 0.0,
        }
    }

    pub fn active_count(&self) -> usize {
        active_count(&self.active)
    }
}

/// Applies the shared-pressure rule: `n` open valves each emit `max_total_thrust / n`.
pub fn resolve_thrust(bits: &ThrusterBits, params: &PlatformParams) -> ThrusterCommand {
    let n = active_count(bits);
    let per = if n == 0 {
        0.0
    } else {
        params.max_total_thrust / n as f64
    };
    ThrusterCommand {
        active: *bits,
        realized_force_per_thruster: per,
    }
}

/// Planar force and torque. Frame depends on context.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub fx: f64,
    pub fy: f64,
    pub tz: f64,
}

impl Wrench {
    pub const ZERO: Wrench = Wrench {
        fx: 0.0,
        fy: 0.0,
        tz: 0.0,
    };

    pub fn new(fx: f64, fy: f64, tz: f64) -> Self {
        Self { fx, fy, tz }
    }
}

/// Body-frame wrench produced by a resolved command.
pub fn body_wrench(cmd: &ThrusterCommand, params: &PlatformParams) -> Wrench {
    body_wrench_with_noise(cmd, &[0.0; NUM_THRUSTERS], params)
}

/// Body-frame wrench with an additive per-nozzle force perturbation on the open nozzles.
pub fn body_wrench_with_noise(
    cmd: &ThrusterCommand,
    noise: &[f64; NUM_THRUSTERS],
    params: &PlatformParams,
) -> Wrench {
    let mut w = Wrench::ZERO;
    for ((th, &on), dn) in params.thrusters.iter().zip(&cmd.active).zip(noise) {
        if on {
            let f = cmd.realized_force_per_thruster + dn;
            w.fx += f * th.direction[0];
            w.fy += f * th.direction[1];
            w.tz += f * th.lever();
        }
    }
    w
}

/// Body-frame wrench of a continuous per-nozzle force vector (no pressure sharing).
pub fn wrench_from_forces(forces: &[f64; NUM_THRUSTERS], params: &PlatformParams) -> Wrench {
    let mut w = Wrench::ZERO;
    for (th, &f) in params.thrusters.iter().zip(forces) {
        w.fx += f * th.direction[0];
        w.fy += f * th.direction[1];
        w.tz += f * th.lever();
    }
    w
}

/// Advances one control period under a thruster command and a world-frame external wrench.
pub fn step(
    state: &PlatformState,
    cmd: &ThrusterCommand,
    external: &Wrench,
    params: &PlatformParams,
) -> Result<PlatformState, DynamicsError> {
    integrate(state, &body_wrench(cmd, params), external, params)
}

/// Semi-implicit Euler step for a body-frame actuator wrench plus a world-frame
/// external wrench.
pub fn integrate(
    state: &PlatformState,
    body: &Wrench,
    external: &Wrench,
    params: &PlatformParams,
) -> Result<PlatformState, DynamicsError> {
    if !state.is_finite() {
        return Err(DynamicsError::NonFinite("state"));
    }
    if ![body.fx, body.fy, body.tz].iter().all(|v| v.is_finite()) {
        return Err(DynamicsError::NonFinite("actuator wrench"));
    }
    if ![external.fx, external.fy, external.tz]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(DynamicsError::NonFinite("external wrench"));
    }

    let dt = params.control_dt;
    let (s, c) = state.theta.sin_cos();
    let fx = c * body.fx - s * body.fy + external.fx;
    let fy = s * body.fx + c * body.fy + external.fy;
    let tz = body.tz + external.tz;

    let vx = state.vx + fx / params.mass * dt;
    let vy = state.vy + fy / params.mass * dt;
    let omega = state.omega + tz / params.inertia * dt;

    Ok(PlatformState {
        x: state.x + vx * dt,
        y: state.y + vy * dt,
        theta: wrap_angle(state.theta + omega * dt),
        vx,
        vy,
        omega,
        t: state.t + 1,
    })
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}
