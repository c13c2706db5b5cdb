//! Discrete-time infinite-horizon LQR with binary thruster allocation.
//!
//! The controller state is the 7-vector `(x, y, vx, vy, qw, qz, omega)`
//! expressed relative to the goal, with `(qw, qz)` the planar error quaternion
//! (sign chosen so `qw >= 0`). `A` and `B` come from central differences of the
//! simulator itself over one control period, the gain from the Riccati
//! solution, and the continuous control `U = -K X` is mapped to on/off valves
//! by the exact least-squares rounding of its normalized form.

use log::warn;
use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, wrap_angle, PlatformParams, PlatformState, Wrench};
use crate::env::{PoseTarget, TaskSpec, VelocityTarget};
use crate::{ThrusterBits, NUM_THRUSTERS};

pub const STATE_DIM: usize = 7;

pub type StateVec = SVector<f64, STATE_DIM>;
pub type ControlVec = SVector<f64, NUM_THRUSTERS>;
pub type StateMat = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type InputMat = SMatrix<f64, STATE_DIM, NUM_THRUSTERS>;
pub type GainMat = SMatrix<f64, NUM_THRUSTERS, STATE_DIM>;
pub type ControlMat = SMatrix<f64, NUM_THRUSTERS, NUM_THRUSTERS>;

const QW: usize = 4;
const QZ: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LqrError {
    #[error("linearization produced a non-finite value")]
    Linearization,
    #[error("Riccati iteration did not converge in {iterations} iterations (residual {residual:.3e}, closed-loop spectral radius {spectral_radius:.6})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        spectral_radius: f64,
    },
    #[error("R + B'PB is not positive definite")]
    Singular,
    #[error("invalid LQR configuration: {0}")]
    Config(String),
}

/// Named state component, used to place Q entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateComponent {
    X,
    Y,
    Vx,
    Vy,
    Qw,
    Qz,
    Omega,
}

impl StateComponent {
    pub const CANONICAL: [StateComponent; STATE_DIM] = [
        StateComponent::X,
        StateComponent::Y,
        StateComponent::Vx,
        StateComponent::Vy,
        StateComponent::Qw,
        StateComponent::Qz,
        StateComponent::Omega,
    ];

    /// Default pairing for the tabulated weight vector: the two large
    /// entries weight position, the tiny ones weight linear velocity.
    pub const POSITION_FIRST: [StateComponent; STATE_DIM] = [
        StateComponent::Vx,
        StateComponent::Vy,
        StateComponent::X,
        StateComponent::Y,
        StateComponent::Qw,
        StateComponent::Qz,
        StateComponent::Omega,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqrWeights {
    /// State cost diagonal, laid out according to `q_layout`.
    pub q: [f64; STATE_DIM],
    /// Which state component each `q` entry weights.
    pub q_layout: [StateComponent; STATE_DIM],
    /// Control cost diagonal.
    pub r: [f64; NUM_THRUSTERS],
    /// Disturbance weights. Stored and reported; the control law does not use them.
    pub w: [f64; STATE_DIM],
}

impl Default for LqrWeights {
    fn default() -> Self {
        Self {
            q: [1e-4, 1e-5, 100.0, 100.0, 1e-6, 1e-6, 1.0],
            q_layout: StateComponent::POSITION_FIRST,
            r: [0.01; NUM_THRUSTERS],
            w: [0.1; STATE_DIM],
        }
    }
}

impl LqrWeights {
    pub fn validate(&self) -> Result<(), LqrError> {
        if self.q.iter().chain(&self.w).any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(LqrError::Config("Q and W entries must be non-negative".into()));
        }
        if self.r.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(LqrError::Config("R entries must be positive".into()));
        }
        let mut seen = [false; STATE_DIM];
        for c in self.q_layout {
            if std::mem::replace(&mut seen[c.index()], true) {
                return Err(LqrError::Config(format!("q_layout lists {c:?} twice")));
            }
        }
        Ok(())
    }

    /// Q as a matrix in canonical state order.
    pub fn q_matrix(&self) -> StateMat {
        let mut q = StateMat::zeros();
        for (&w, c) in self.q.iter().zip(self.q_layout) {
            q[(c.index(), c.index())] = w;
        }
        q
    }

    pub fn r_matrix(&self) -> ControlMat {
        ControlMat::from_diagonal(&ControlVec::from_column_slice(&self.r))
    }
}

/// How the continuous control is squashed into [0, 1] before rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `(U - min U) / (max U - min U)`; a constant vector maps to 0.5.
    MinMax,
    /// `clamp(U, 0, 1)`.
    #[default]
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DareMethod {
    /// Plain Riccati recursion from `P = Q`.
    FixedPoint,
    /// Doubling acceleration of the same recursion, polished by plain iteration.
    #[default]
    Doubling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqrConfig {
    pub weights: LqrWeights,
    /// Restrict the model to the plane. Always on; kept for parity with other controller configs.
    pub planar: bool,
    /// Control steps between relinearizations.
    pub relinearize_every: u32,
    pub eps_x: f64,
    pub eps_u: f64,
    pub dare_tol: f64,
    pub dare_max_iter: usize,
    pub dare_method: DareMethod,
    pub normalization: Normalization,
}

impl Default for LqrConfig {
    fn default() -> Self {
        Self {
            weights: LqrWeights::default(),
            planar: true,
            relinearize_every: 1,
            eps_x: 1e-4,
            eps_u: 1e-2,
            dare_tol: 1e-9,
            dare_max_iter: 100_000,
            dare_method: DareMethod::Doubling,
            normalization: Normalization::Clamp,
        }
    }
}

impl LqrConfig {
    pub fn validate(&self) -> Result<(), LqrError> {
        self.weights.validate()?;
        if !self.planar {
            return Err(LqrError::Config("only the planar model is supported".into()));
        }
        if self.relinearize_every == 0 {
            return Err(LqrError::Config("relinearize_every must be at least 1".into()));
        }
        if !(self.eps_x > 0.0 && self.eps_u > 0.0) {
            return Err(LqrError::Config("finite-difference offsets must be positive".into()));
        }
        if !(self.dare_tol > 0.0) || self.dare_max_iter == 0 {
            return Err(LqrError::Config("DARE tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

/// Reference the controller regulates to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrGoal {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl LqrGoal {
    pub fn pose(t: &PoseTarget) -> Self {
        Self {
            x: t.x,
            y: t.y,
            theta: t.theta,
            vx: 0.0,
            vy: 0.0,
            omega: 0.0,
        }
    }

    /// Velocity reference; position and heading follow the platform so only
    /// the twist error is regulated.
    pub fn velocity(t: &VelocityTarget, state: &PlatformState) -> Self {
        Self {
            x: state.x,
            y: state.y,
            theta: state.theta,
            vx: t.vx,
            vy: t.vy,
            omega: t.omega,
        }
    }

    pub fn from_task(task: &TaskSpec, state: &PlatformState) -> Self {
        match task {
            TaskSpec::GoToPose(p) => Self::pose(p),
            TaskSpec::TrackVelocity(v) => Self::velocity(v, state),
        }
    }
}

/// Equilibrium of the error coordinates: zero error, identity quaternion.
pub fn equilibrium() -> StateVec {
    let mut e = StateVec::zeros();
    e[QW] = 1.0;
    e
}

/// Error-coordinate state of `state` relative to `goal`.
pub fn error_state(state: &PlatformState, goal: &LqrGoal) -> StateVec {
    let half = 0.5 * wrap_angle(state.theta - goal.theta);
    StateVec::from([
        state.x - goal.x,
        state.y - goal.y,
        state.vx - goal.vx,
        state.vy - goal.vy,
        half.cos(),
        half.sin(),
        state.omega - goal.omega,
    ])
}

/// Inverse of [`error_state`]. The quaternion part is renormalized first.
pub fn decode_error_state(e: &StateVec, goal: &LqrGoal, t: u64) -> PlatformState {
    let (qw, qz) = normalized_quat(e[QW], e[QZ]);
    PlatformState {
        x: goal.x + e[0],
        y: goal.y + e[1],
        theta: wrap_angle(goal.theta + 2.0 * qz.atan2(qw)),
        vx: goal.vx + e[2],
        vy: goal.vy + e[3],
        omega: goal.omega + e[6],
        t,
    }
}

fn normalized_quat(qw: f64, qz: f64) -> (f64, f64) {
    let n = qw.hypot(qz);
    if n > 0.0 {
        (qw / n, qz / n)
    } else {
        (1.0, 0.0)
    }
}

/// One control period of the simulator in error coordinates, with `u` the
/// per-nozzle force (no pressure sharing). The quaternion is propagated by
/// composition so the map stays smooth across the heading wrap.
pub fn error_dynamics(e: &StateVec, u: &ControlVec, goal: &LqrGoal, params: &PlatformParams) -> Option<StateVec> {
    let s = decode_error_state(e, goal, 0);
    let forces: [f64; NUM_THRUSTERS] = std::array::from_fn(|i| u[i]);
    let body = dynamics::wrench_from_forces(&forces, params);
    let n = dynamics::integrate(&s, &body, &Wrench::ZERO, params).ok()?;
    let (qw, qz) = normalized_quat(e[QW], e[QZ]);
    let half = 0.5 * n.omega * params.control_dt;
    let (sh, ch) = half.sin_cos();
    let next = StateVec::from([
        n.x - goal.x,
        n.y - goal.y,
        n.vx - goal.vx,
        n.vy - goal.vy,
        qw * ch - qz * sh,
        qz * ch + qw * sh,
        n.omega - goal.omega,
    ]);
    next.iter().all(|v| v.is_finite()).then_some(next)
}

/// Central-difference Jacobians of `f` at `(x0, u0)`. Perturbed quaternion
/// entries are renormalized inside `f`.
pub fn linearize<F>(f: F, x0: &StateVec, u0: &ControlVec, eps_x: f64, eps_u: f64) -> Result<(StateMat, InputMat), LqrError>
where
    F: Fn(&StateVec, &ControlVec) -> Option<StateVec>,
{
    let mut a = StateMat::zeros();
    for j in 0..STATE_DIM {
        let mut xp = *x0;
        let mut xm = *x0;
        xp[j] += eps_x;
        xm[j] -= eps_x;
        let fp = f(&xp, u0).ok_or(LqrError::Linearization)?;
        let fm = f(&xm, u0).ok_or(LqrError::Linearization)?;
        a.set_column(j, &((fp - fm) / (2.0 * eps_x)));
    }
    let mut b = InputMat::zeros();
    for i in 0..NUM_THRUSTERS {
        let mut up = *u0;
        let mut um = *u0;
        up[i] += eps_u;
        um[i] -= eps_u;
        let fp = f(x0, &up).ok_or(LqrError::Linearization)?;
        let fm = f(x0, &um).ok_or(LqrError::Linearization)?;
        b.set_column(i, &((fp - fm) / (2.0 * eps_u)));
    }
    Ok((a, b))
}

fn riccati_map<const N: usize, const M: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SMatrix<f64, N, M>,
    q: &SMatrix<f64, N, N>,
    r: &SMatrix<f64, M, M>,
    p: &SMatrix<f64, N, N>,
) -> Option<SMatrix<f64, N, N>> {
    let btp = b.transpose() * p;
    let s = r + btp * b;
    let chol = s.cholesky()?;
    let k = chol.solve(&(btp * a));
    let next = q + a.transpose() * p * a - a.transpose() * p * b * k;
    Some((next + next.transpose()) * 0.5)
}

/// `max |P - (Q + A'PA - A'PB (R + B'PB)^-1 B'PA)|`.
pub fn dare_residual<const N: usize, const M: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SMatrix<f64, N, M>,
    q: &SMatrix<f64, N, N>,
    r: &SMatrix<f64, M, M>,
    p: &SMatrix<f64, N, N>,
) -> f64 {
    match riccati_map(a, b, q, r, p) {
        Some(next) => (p - next).amax(),
        None => f64::INFINITY,
    }
}

/// Solves the discrete algebraic Riccati equation.
pub fn solve_dare<const N: usize, const M: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SMatrix<f64, N, M>,
    q: &SMatrix<f64, N, N>,
    r: &SMatrix<f64, M, M>,
    tol: f64,
    max_iter: usize,
    method: DareMethod,
) -> Result<SMatrix<f64, N, N>, LqrError> {
    let (start, mut budget) = match method {
        DareMethod::FixedPoint => (*q, max_iter),
        DareMethod::Doubling => match doubling(a, b, q, r, tol) {
            Some((p, used)) => (p, max_iter.saturating_sub(used)),
            None => (*q, max_iter),
        },
    };
    let mut p = start;
    let mut iterations = max_iter - budget;
    let mut residual = f64::INFINITY;
    loop {
        let next = riccati_map(a, b, q, r, &p).ok_or(LqrError::Singular)?;
        let delta = (next - p).amax();
        p = next;
        if delta < tol {
            residual = dare_residual(a, b, q, r, &p);
            if residual < tol {
                return Ok(p);
            }
        }
        if budget == 0 {
            break;
        }
        budget -= 1;
        iterations += 1;
    }
    let spectral_radius = gain(a, b, &p, r)
        .map(|k| spectral_radius(&(a - b * k)))
        .unwrap_or(f64::NAN);
    Err(LqrError::NoConvergence {
        iterations,
        residual: residual.min(dare_residual(a, b, q, r, &p)),
        spectral_radius,
    })
}

/// Structure-preserving doubling: iterate `k` equals the Riccati recursion at
/// horizon `2^k`. Returns the estimate and the number of doubling steps.
fn doubling<const N: usize, const M: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SMatrix<f64, N, M>,
    q: &SMatrix<f64, N, N>,
    r: &SMatrix<f64, M, M>,
    tol: f64,
) -> Option<(SMatrix<f64, N, N>, usize)> {
    let r_inv = r.cholesky()?.inverse();
    let mut ak = *a;
    let mut gk = b * r_inv * b.transpose();
    let mut hk = *q;
    let id = SMatrix::<f64, N, N>::identity();
    for k in 1..=64 {
        let w = (id + gk * hk).try_inverse()?;
        let a_next = ak * w * ak;
        let g_next = gk + ak * w * gk * ak.transpose();
        let h_next = hk + ak.transpose() * hk * w * ak;
        let delta = (h_next - hk).amax();
        ak = a_next;
        gk = (g_next + g_next.transpose()) * 0.5;
        hk = (h_next + h_next.transpose()) * 0.5;
        if !hk.iter().all(|v| v.is_finite()) {
            return None;
        }
        if delta <= tol * 1e-3 * hk.amax().max(1.0) {
            return Some((hk, k));
        }
    }
    Some((hk, 64))
}

/// `K = (R + B'PB)^-1 B'PA`.
pub fn gain<const N: usize, const M: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SMatrix<f64, N, M>,
    p: &SMatrix<f64, N, N>,
    r: &SMatrix<f64, M, M>,
) -> Result<SMatrix<f64, M, N>, LqrError> {
    let btp = b.transpose() * p;
    let chol = (r + btp * b).cholesky().ok_or(LqrError::Singular)?;
    Ok(chol.solve(&(btp * a)))
}

pub fn spectral_radius<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    nalgebra::DMatrix::from_column_slice(N, N, m.as_slice())
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// Maps the continuous control into [0, 1].
pub fn normalize(u: &ControlVec, mode: Normalization) -> [f64; NUM_THRUSTERS] {
    match mode {
        Normalization::MinMax => {
            let lo = u.min();
            let hi = u.max();
            if hi > lo {
                std::array::from_fn(|i| (u[i] - lo) / (hi - lo))
            } else {
                [0.5; NUM_THRUSTERS]
            }
        }
        Normalization::Clamp => std::array::from_fn(|i| u[i].clamp(0.0, 1.0)),
    }
}

/// Least-squares projection of a [0, 1] vector onto {0, 1}^8. The objective
/// separates per component, so rounding (ties up) is the exact minimizer.
pub fn round_to_binary(u: &[f64; NUM_THRUSTERS]) -> ThrusterBits {
    std::array::from_fn(|i| u[i] >= 0.5)
}

pub fn binarize(u: &ControlVec, mode: Normalization) -> ThrusterBits {
    round_to_binary(&normalize(u, mode))
}

/// Linear model, Riccati solution and gain at one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedModel {
    pub a: StateMat,
    pub b: InputMat,
    pub p: StateMat,
    pub k: GainMat,
}

impl LinearizedModel {
    pub fn build(
        state: &PlatformState,
        goal: &LqrGoal,
        params: &PlatformParams,
        cfg: &LqrConfig,
    ) -> Result<Self, LqrError> {
        let x0 = error_state(state, goal);
        let (a, b) = linearize(
            |e, u| error_dynamics(e, u, goal, params),
            &x0,
            &ControlVec::zeros(),
            cfg.eps_x,
            cfg.eps_u,
        )?;
        let q = cfg.weights.q_matrix();
        let r = cfg.weights.r_matrix();
        let p = solve_dare(&a, &b, &q, &r, cfg.dare_tol, cfg.dare_max_iter, cfg.dare_method)?;
        let k = gain(&a, &b, &p, &r)?;
        Ok(Self { a, b, p, k })
    }

    pub fn closed_loop_radius(&self) -> f64 {
        spectral_radius(&(self.a - self.b * self.k))
    }
}

/// Stateful LQR controller with periodic relinearization.
#[derive(Debug, Clone)]
pub struct LqrController {
    params: PlatformParams,
    cfg: LqrConfig,
    model: Option<LinearizedModel>,
    since_relinearize: u32,
    failures: usize,
}

impl LqrController {
    pub fn new(params: PlatformParams, cfg: LqrConfig) -> Result<Self, LqrError> {
        cfg.validate()?;
        params.validate().map_err(|e| LqrError::Config(e.to_string()))?;
        Ok(Self {
            params,
            cfg,
            model: None,
            since_relinearize: 0,
            failures: 0,
        })
    }

    pub fn config(&self) -> &LqrConfig {
        &self.cfg
    }

    pub fn model(&self) -> Option<&LinearizedModel> {
        self.model.as_ref()
    }

    /// Number of steps where the solver failed and the valves were closed.
    pub fn failures(&self) -> usize {
        self.failures
    }

    pub fn reset(&mut self) {
        self.model = None;
        self.since_relinearize = 0;
        self.failures = 0;
    }

    /// Continuous control `U = -K (X - X*)`, relinearizing when due.
    pub fn continuous_control(&mut self, state: &PlatformState, goal: &LqrGoal) -> Result<ControlVec, LqrError> {
        if self.model.is_none() || self.since_relinearize >= self.cfg.relinearize_every {
            self.model = None;
            self.model = Some(LinearizedModel::build(state, goal, &self.params, &self.cfg)?);
            self.since_relinearize = 0;
        }
        self.since_relinearize += 1;
        let model = self.model.as_ref().expect("model built above");
        Ok(-(model.k * (error_state(state, goal) - equilibrium())))
    }

    pub fn control(&mut self, state: &PlatformState, goal: &LqrGoal) -> Result<ThrusterBits, LqrError> {
        let u = self.continuous_control(state, goal)?;
        if u.iter().all(|&v| v == 0.0) {
            return Ok([false; NUM_THRUSTERS]);
        }
        Ok(binarize(&u, self.cfg.normalization))
    }

    /// Like [`control`](Self::control) but closes all valves on solver failure.
    pub fn act_or_idle(&mut self, state: &PlatformState, goal: &LqrGoal) -> ThrusterBits {
        match self.control(state, goal) {
            Ok(bits) => bits,
            Err(e) => {
                self.failures += 1;
                warn!("LQR failure at step {}: {e}; closing all valves", state.t);
                [false; NUM_THRUSTERS]
            }
        }
    }
}
