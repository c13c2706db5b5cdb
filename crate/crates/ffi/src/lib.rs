//! C ABI for the floatctl simulator and controllers.
//!
//! Handles are opaque and owned by the caller: every `*_new`/`*_load` has a
//! matching `*_free`. Functions return an [`FcStatus`]; on failure the message
//! is available from [`fc_last_error_message`] on the same thread.
//!
//! Thruster commands cross the boundary as a `uint8_t` mask, bit `i` set when
//! thruster `i` fires.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use floatctl::config::SuiteConfig;
use floatctl::controller::Controller;
use floatctl::env::{Env, Observation, OBS_DIM};
use floatctl::lqr::LqrController;
use floatctl::ppo::{Policy, PolicyParams, PpoError};
use floatctl::{bits_to_mask, mask_to_bits, PlatformState, NUM_THRUSTERS};

/// Length of the observation vector.
pub const FC_OBS_DIM: usize = 10;
/// Number of thrusters (bits used in a mask).
pub const FC_NUM_THRUSTERS: usize = 8;

const _: () = assert!(FC_OBS_DIM == OBS_DIM && FC_NUM_THRUSTERS == NUM_THRUSTERS);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Solver = 5,
    EpisodeDone = 6,
    Internal = 7,
}

/// Planar state of the platform.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FcState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
    /// Steps taken in the current episode.
    pub step: u64,
}

impl From<&PlatformState> for FcState {
    fn from(s: &PlatformState) -> Self {
        Self {
            x: s.x,
            y: s.y,
            theta: s.theta,
            vx: s.vx,
            vy: s.vy,
            omega: s.omega,
            step: s.t,
        }
    }
}

/// An environment plus the most recent observation it produced.
pub struct FcEnv {
    env: Env,
    obs: Observation,
    observed: PlatformState,
}

pub struct FcLqr {
    inner: LqrController,
}

pub struct FcPolicy {
    inner: Policy,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(FcStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(FcStatus::NullPointer, format!("{what} is null"))
    }
}

/// Runs `f`, records any error message and converts panics to `Internal`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FcStatus::Ok
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            FcStatus::Internal
        }
    }
}

unsafe fn opt_str<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| Failure(FcStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

fn config(toml: Option<&str>) -> Result<SuiteConfig, Failure> {
    SuiteConfig::from_toml(toml.unwrap_or(""), &[]).map_err(|e| Failure(FcStatus::Config, e.to_string()))
}

unsafe fn write_obs(obs: &Observation, out: *mut f64) {
    if !out.is_null() {
        ptr::copy_nonoverlapping(obs.as_slice().as_ptr(), out, OBS_DIM);
    }
}

/// Message for the last failed call on this thread, or NULL. The pointer stays
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn fc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a go-to-pose or track-velocity environment.
///
/// `config_toml` may be NULL for defaults; only the `platform`, `disturbance`
/// and `env` sections are used. `obs_out`, if not NULL, receives the first
/// observation (`FC_OBS_DIM` doubles).
///
/// # Safety
/// `config_toml` must be NULL or a NUL-terminated string. `out` must be a valid
/// pointer. `obs_out` must be NULL or point to `FC_OBS_DIM` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fc_env_new(
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut FcEnv,
    obs_out: *mut f64,
) -> FcStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        *out = ptr::null_mut();
        let cfg = config(opt_str(config_toml, "config_toml")?)?;
        let (env, obs) = Env::new(cfg.platform, cfg.env, cfg.disturbance, seed)
            .map_err(|e| Failure(FcStatus::InvalidArgument, e.to_string()))?;
        let observed = *env.state();
        write_obs(&obs, obs_out);
        *out = Box::into_raw(Box::new(FcEnv { env, obs, observed }));
        Ok(())
    })
}

/// # Safety
/// `env` must be NULL or a handle from [`fc_env_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_env_free(env: *mut FcEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Starts a new episode.
///
/// # Safety
/// `env` must be a live handle; `obs_out` NULL or `FC_OBS_DIM` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fc_env_reset(env: *mut FcEnv, obs_out: *mut f64) -> FcStatus {
    guard(|| {
        let h = env.as_mut().ok_or_else(|| Failure::null("env"))?;
        h.obs = h.env.reset().map_err(|e| Failure(FcStatus::InvalidArgument, e.to_string()))?;
        h.observed = *h.env.state();
        write_obs(&h.obs, obs_out);
        Ok(())
    })
}

/// Advances one control step with the thrusters in `mask`.
///
/// # Safety
/// `env` must be a live handle. Each output pointer must be NULL or valid
/// (`obs_out` for `FC_OBS_DIM` doubles).
#[no_mangle]
pub unsafe extern "C" fn fc_env_step(
    env: *mut FcEnv,
    mask: u8,
    obs_out: *mut f64,
    reward_out: *mut f64,
    done_out: *mut bool,
) -> FcStatus {
    guard(|| {
        let h = env.as_mut().ok_or_else(|| Failure::null("env"))?;
        let out = h.env.step(&mask_to_bits(mask)).map_err(|e| match e {
            floatctl::env::EnvError::EpisodeDone => Failure(FcStatus::EpisodeDone, e.to_string()),
            other => Failure(FcStatus::Internal, other.to_string()),
        })?;
        h.obs = out.obs;
        h.observed = out.observed;
        write_obs(&h.obs, obs_out);
        if !reward_out.is_null() {
            *reward_out = out.reward;
        }
        if !done_out.is_null() {
            *done_out = out.done;
        }
        Ok(())
    })
}

/// True state of the platform (no observation noise).
///
/// # Safety
/// `env` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_env_state(env: *const FcEnv, out: *mut FcState) -> FcStatus {
    guard(|| {
        let h = env.as_ref().ok_or_else(|| Failure::null("env"))?;
        let out = out.as_mut().ok_or_else(|| Failure::null("out"))?;
        *out = FcState::from(h.env.state());
        Ok(())
    })
}

/// Creates an LQR controller from the `platform` and `lqr` config sections.
///
/// # Safety
/// `config_toml` must be NULL or NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_lqr_new(config_toml: *const c_char, out: *mut *mut FcLqr) -> FcStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        *out = ptr::null_mut();
        let cfg = config(opt_str(config_toml, "config_toml")?)?;
        let inner = LqrController::new(cfg.platform, cfg.lqr).map_err(|e| Failure(FcStatus::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(FcLqr { inner }));
        Ok(())
    })
}

/// # Safety
/// `lqr` must be NULL or a handle from [`fc_lqr_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_lqr_free(lqr: *mut FcLqr) {
    if !lqr.is_null() {
        drop(Box::from_raw(lqr));
    }
}

/// Computes the thruster mask for the environment's latest observation.
/// Returns `Solver` if the Riccati solve failed on this step (the mask is
/// then all-off).
///
/// # Safety
/// `lqr` and `env` must be live handles; `mask_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_lqr_act(lqr: *mut FcLqr, env: *const FcEnv, mask_out: *mut u8) -> FcStatus {
    guard(|| {
        let c = lqr.as_mut().ok_or_else(|| Failure::null("lqr"))?;
        let h = env.as_ref().ok_or_else(|| Failure::null("env"))?;
        let out = mask_out.as_mut().ok_or_else(|| Failure::null("mask_out"))?;
        let before = c.inner.failures();
        let bits = c.inner.act(&h.obs, &h.observed, h.env.task());
        *out = bits_to_mask(&bits);
        if c.inner.failures() > before {
            return Err(Failure(FcStatus::Solver, "Riccati solve failed; thrusters idled".into()));
        }
        Ok(())
    })
}

/// Loads a policy checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_policy_load(path: *const c_char, out: *mut *mut FcPolicy) -> FcStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        *out = ptr::null_mut();
        let path = opt_str(path, "path")?.ok_or_else(|| Failure::null("path"))?;
        let params = PolicyParams::load_file(Path::new(path)).map_err(|e| match e {
            PpoError::Io(_) => Failure(FcStatus::Io, e.to_string()),
            other => Failure(FcStatus::InvalidArgument, other.to_string()),
        })?;
        *out = Box::into_raw(Box::new(FcPolicy {
            inner: Policy::new(params),
        }));
        Ok(())
    })
}

/// # Safety
/// `policy` must be NULL or a handle from [`fc_policy_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_policy_free(policy: *mut FcPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Firing probabilities for a raw (unnormalized) observation.
///
/// # Safety
/// `policy` must be live, `obs` must point to `FC_OBS_DIM` doubles and
/// `probs_out` to `FC_NUM_THRUSTERS` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fc_policy_probs(policy: *const FcPolicy, obs: *const f64, probs_out: *mut f64) -> FcStatus {
    guard(|| {
        let p = policy.as_ref().ok_or_else(|| Failure::null("policy"))?;
        if obs.is_null() {
            return Err(Failure::null("obs"));
        }
        if probs_out.is_null() {
            return Err(Failure::null("probs_out"));
        }
        let mut o = [0.0; OBS_DIM];
        ptr::copy_nonoverlapping(obs, o.as_mut_ptr(), OBS_DIM);
        let probs = p.inner.params().probs(&Observation(o));
        ptr::copy_nonoverlapping(probs.as_ptr(), probs_out, NUM_THRUSTERS);
        Ok(())
    })
}

/// Deterministic thruster mask (probability at least one half) for the
/// environment's latest observation.
///
/// # Safety
/// `policy` and `env` must be live handles; `mask_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_policy_act(policy: *mut FcPolicy, env: *const FcEnv, mask_out: *mut u8) -> FcStatus {
    guard(|| {
        let p = policy.as_mut().ok_or_else(|| Failure::null("policy"))?;
        let h = env.as_ref().ok_or_else(|| Failure::null("env"))?;
        let out = mask_out.as_mut().ok_or_else(|| Failure::null("mask_out"))?;
        *out = bits_to_mask(&p.inner.act(&h.obs, &h.observed, h.env.task()));
        Ok(())
    })
}
