//! Seeded evaluation batches, metric tables and degradation buckets.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::Controller;
use crate::disturbance::DisturbanceProfile;
use crate::dynamics::{PlatformParams, PlatformState};
use crate::env::{heading_error, position_error, Env, EnvConfig, EnvError, TaskKind, TaskSpec};
use crate::seed;
use crate::tracker::{PathSpec, Point, ShapeKind, Tracker};
use crate::{active_count, ThrusterBits, NUM_THRUSTERS};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot compile metrics from an empty batch")]
    EmptyBatch,
    #[error("trajectories have different lengths ({0} vs {1})")]
    RaggedBatch(u64, u64),
    #[error("unknown condition preset {0:?} (expected ideal or table2)")]
    UnknownPreset(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Position thresholds, m.
pub const POSITION_THRESHOLDS: [f64; 3] = [0.05, 0.02, 0.01];
/// Heading thresholds, degrees.
pub const HEADING_THRESHOLDS_DEG: [f64; 3] = [5.0, 2.0, 1.0];

/// Per-trajectory accumulators. Thresholds are strict (`error < threshold`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EvalRecord {
    /// Steps with position error under 5, 2, 1 cm.
    pub position_under: [u64; 3],
    /// Steps with heading error under 5, 2, 1 degrees.
    pub heading_under: [u64; 3],
    pub sum_speed: f64,
    pub sum_omega: f64,
    pub activations: u64,
    pub steps: u64,
    pub final_position_error: f64,
    pub final_heading_error: f64,
    pub failures: u64,
}

impl EvalRecord {
    /// Accounts one step: the state reached and the bits commanded to reach it.
    pub fn push(&mut self, state: &PlatformState, task: &TaskSpec, bits: &ThrusterBits) {
        if let Some(goal) = task.pose() {
            let ep = position_error(state, goal);
            let eh = heading_error(state, goal).abs();
            for (i, &th) in POSITION_THRESHOLDS.iter().enumerate() {
                self.position_under[i] += (ep < th) as u64;
            }
            for (i, &th) in HEADING_THRESHOLDS_DEG.iter().enumerate() {
                self.heading_under[i] += (eh < th.to_radians()) as u64;
            }
            self.final_position_error = ep;
            self.final_heading_error = eh;
        }
        self.sum_speed += state.speed();
        self.sum_omega += state.omega.abs();
        self.activations += active_count(bits) as u64;
        self.steps += 1;
    }
}

/// How AAS is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionCountMode {
    /// Active thrusters per step divided by eight.
    #[default]
    FractionOfEight,
    /// Active thrusters per step.
    Count,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub pt5: f64,
    pub pt2: f64,
    pub pt1: f64,
    pub ot5: f64,
    pub ot2: f64,
    pub ot1: f64,
    pub alv: f64,
    pub aav: f64,
    pub aas: f64,
    pub trajectories: usize,
}

/// Averages per-trajectory rates over a batch of equal-length trajectories.
pub fn compile_metrics(records: &[EvalRecord], mode: ActionCountMode) -> Result<MetricRow, BenchError> {
    let first = records.first().ok_or(BenchError::EmptyBatch)?;
    if let Some(r) = records.iter().find(|r| r.steps != first.steps) {
        return Err(BenchError::RaggedBatch(first.steps, r.steps));
    }
    if first.steps == 0 {
        return Err(BenchError::EmptyBatch);
    }
    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&EvalRecord) -> f64| records.iter().map(|r| f(r) / r.steps as f64).sum::<f64>() / n;
    let pct = |f: &dyn Fn(&EvalRecord) -> u64| 100.0 * mean(&|r| f(r) as f64);
    let per_step = match mode {
        ActionCountMode::FractionOfEight => NUM_THRUSTERS as f64,
        ActionCountMode::Count => 1.0,
    };
    Ok(MetricRow {
        pt5: pct(&|r| r.position_under[0]),
        pt2: pct(&|r| r.position_under[1]),
        pt1: pct(&|r| r.position_under[2]),
        ot5: pct(&|r| r.heading_under[0]),
        ot2: pct(&|r| r.heading_under[1]),
        ot1: pct(&|r| r.heading_under[2]),
        alv: mean(&|r| r.sum_speed),
        aav: mean(&|r| r.sum_omega),
        aas: mean(&|r| r.activations as f64) / per_step,
        trajectories: records.len(),
    })
}

/// Relative-drop bucket against a controller's own ideal-condition value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bucket {
    #[serde(rename = "0-20")]
    Drop0To20,
    #[serde(rename = "20-40")]
    Drop20To40,
    #[serde(rename = "40-60")]
    Drop40To60,
    #[serde(rename = "60-80")]
    Drop60To80,
    #[serde(rename = "80-100")]
    Drop80To100,
}

impl Bucket {
    pub fn label(self) -> &'static str {
        match self {
            Bucket::Drop0To20 => "0-20",
            Bucket::Drop20To40 => "20-40",
            Bucket::Drop40To60 => "40-60",
            Bucket::Drop60To80 => "60-80",
            Bucket::Drop80To100 => "80-100",
        }
    }

    /// Colour used for the bucket in rendered tables.
    pub fn colour(self) -> &'static str {
        match self {
            Bucket::Drop0To20 => "blue",
            Bucket::Drop20To40 => "green",
            Bucket::Drop40To60 => "yellow",
            Bucket::Drop60To80 => "red",
            Bucket::Drop80To100 => "purple",
        }
    }
}

/// `None` when the ideal value is not positive (bucket undefined).
pub fn degradation_bucket(value: f64, ideal: f64) -> Option<Bucket> {
    if !(ideal > 0.0) || !value.is_finite() {
        return None;
    }
    let drop = (1.0 - value / ideal).clamp(0.0, 1.0);
    Some(if drop <= 0.2 {
        Bucket::Drop0To20
    } else if drop <= 0.4 {
        Bucket::Drop20To40
    } else if drop <= 0.6 {
        Bucket::Drop40To60
    } else if drop <= 0.8 {
        Bucket::Drop60To80
    } else {
        Bucket::Drop80To100
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub label: String,
    pub profile: DisturbanceProfile,
}

impl Condition {
    pub fn new(label: &str, f: impl FnOnce(&mut DisturbanceProfile)) -> Self {
        let mut profile = DisturbanceProfile::ideal();
        f(&mut profile);
        Self {
            label: label.into(),
            profile,
        }
    }
}

/// Named condition sets: `ideal` (one row) or `table2` (the nine-row sweep).
pub fn preset(name: &str) -> Result<Vec<Condition>, BenchError> {
    match name {
        "ideal" => Ok(vec![Condition::new("ideal", |_| {})]),
        "table2" => Ok(vec![
            Condition::new("ideal", |_| {}),
            Condition::new("velocity-noise", |p| p.vn = 0.02),
            Condition::new("velocity-noise", |p| p.vn = 0.04),
            Condition::new("torque", |p| p.td = 0.05),
            Condition::new("floor-force", |p| p.uf = 0.2),
            Condition::new("floor-force", |p| p.uf = 0.4),
            Condition::new("floor-force+torque", |p| {
                p.uf = 0.2;
                p.td = 0.05
            }),
            Condition::new("thruster-failure", |p| p.rtf_count = 1),
            Condition::new("thruster-failure", |p| p.rtf_count = 2),
        ]),
        other => Err(BenchError::UnknownPreset(other.into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub condition: String,
    pub controller: String,
    pub vn: f64,
    pub uf: f64,
    pub td: f64,
    pub rtf: usize,
    #[serde(flatten)]
    pub metrics: MetricRow,
    /// Buckets for PT5, PT2, PT1, OT5, OT2, OT1.
    pub buckets: [Option<Bucket>; 6],
    pub solver_failures: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub trajectories: usize,
    pub episode_len: u64,
    pub aas_mode: ActionCountMode,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            trajectories: 256,
            episode_len: 250,
            aas_mode: ActionCountMode::FractionOfEight,
        }
    }
}

/// Runs one go-to-pose episode and returns its record.
pub fn run_episode(
    controller: &mut dyn Controller,
    platform: &PlatformParams,
    env_cfg: &EnvConfig,
    profile: &DisturbanceProfile,
    env_seed: u64,
) -> Result<EvalRecord, BenchError> {
    let (mut env, mut obs) = Env::new(platform.clone(), env_cfg.clone(), profile.clone(), env_seed)?;
    controller.reset();
    let mut observed = *env.state();
    let mut rec = EvalRecord::default();
    let failures_before = controller.failures();
    loop {
        let task = *env.task();
        let bits = controller.act(&obs, &observed, &task);
        let out = env.step(&bits)?;
        rec.push(env.state(), &task, &bits);
        obs = out.obs;
        observed = out.observed;
        if out.done {
            break;
        }
    }
    rec.failures = controller.failures() - failures_before;
    Ok(rec)
}

/// Episode seed `i` of a benchmark with master seed `master`. The same seeds
/// are used for every condition, so initial states match across rows.
pub fn episode_seed(master: u64, i: u64) -> u64 {
    seed::derive(master, &[seed::STREAM_BENCH, i])
}

/// Runs `cfg.trajectories` seeded episodes of one condition in parallel.
/// Records come back in seed order.
pub fn run_condition(
    make: &(dyn Fn() -> Box<dyn Controller> + Sync),
    platform: &PlatformParams,
    cfg: &BenchConfig,
    profile: &DisturbanceProfile,
    master: u64,
) -> Result<Vec<EvalRecord>, BenchError> {
    let env_cfg = EnvConfig {
        task: TaskKind::GoToPose,
        episode_len: cfg.episode_len,
        ..EnvConfig::default()
    };
    (0..cfg.trajectories as u64)
        .into_par_iter()
        .map(|i| {
            let mut c = make();
            run_episode(c.as_mut(), platform, &env_cfg, profile, episode_seed(master, i))
        })
        .collect()
}

pub fn run_benchmark(
    make: &(dyn Fn() -> Box<dyn Controller> + Sync),
    conditions: &[Condition],
    platform: &PlatformParams,
    cfg: &BenchConfig,
    master: u64,
) -> Result<BenchmarkTable, BenchError> {
    let label = make().label();
    let mut rows = Vec::with_capacity(conditions.len());
    for cond in conditions {
        let records = run_condition(make, platform, cfg, &cond.profile, master)?;
        let metrics = compile_metrics(&records, cfg.aas_mode)?;
        rows.push(BenchRow {
            condition: cond.label.clone(),
            controller: label.clone(),
            vn: cond.profile.vn,
            uf: cond.profile.uf,
            td: cond.profile.td,
            rtf: cond.profile.rtf_count,
            metrics,
            buckets: [None; 6],
            solver_failures: records.iter().map(|r| r.failures).sum(),
        });
    }
    let mut table = BenchmarkTable { rows };
    table.assign_buckets();
    Ok(table)
}

impl BenchmarkTable {
    /// Buckets every PT/OT entry against the first ideal row of the same controller.
    pub fn assign_buckets(&mut self) {
        let ideal: Vec<(String, MetricRow)> = self
            .rows
            .iter()
            .filter(|r| r.vn == 0.0 && r.uf == 0.0 && r.td == 0.0 && r.rtf == 0)
            .map(|r| (r.controller.clone(), r.metrics))
            .collect();
        for row in &mut self.rows {
            let Some((_, base)) = ideal.iter().find(|(c, _)| *c == row.controller) else {
                continue;
            };
            let m = row.metrics;
            let pairs = [
                (m.pt5, base.pt5),
                (m.pt2, base.pt2),
                (m.pt1, base.pt1),
                (m.ot5, base.ot5),
                (m.ot2, base.ot2),
                (m.ot1, base.ot1),
            ];
            row.buckets = pairs.map(|(v, b)| degradation_bucket(v, b));
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "condition", "controller", "vn", "uf", "td", "rtf", "pt5", "pt2", "pt1", "ot5", "ot2", "ot1", "alv",
            "aav", "aas", "trajectories", "pt5_bucket", "pt2_bucket", "pt1_bucket", "ot5_bucket", "ot2_bucket",
            "ot1_bucket", "solver_failures",
        ])?;
        for r in &self.rows {
            let m = &r.metrics;
            let mut rec = vec![r.condition.clone(), r.controller.clone()];
            rec.extend([r.vn, r.uf, r.td].map(|v| v.to_string()));
            rec.push(r.rtf.to_string());
            rec.extend([m.pt5, m.pt2, m.pt1, m.ot5, m.ot2, m.ot1, m.alv, m.aav, m.aas].map(|v| v.to_string()));
            rec.push(m.trajectories.to_string());
            rec.extend(r.buckets.map(|b| b.map_or("n/a", Bucket::label).to_string()));
            rec.push(r.solver_failures.to_string());
            out.write_record(&rec)?;
        }
        out.flush()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    /// Aligned text table; each PT/OT cell carries its bucket.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<20} {:<6} {:>5} {:>5} {:>5} {:>3}  {:>14} {:>14} {:>14} {:>14} {:>14} {:>14} {:>6} {:>6} {:>5}",
            "condition", "ctrl", "VN", "UF", "TD", "RTF", "PT5", "PT2", "PT1", "OT5", "OT2", "OT1", "ALV", "AAV", "AAS"
        );
        for r in &self.rows {
            let m = &r.metrics;
            let cell = |v: f64, b: Option<Bucket>| format!("{v:6.2} [{:>6}]", b.map_or("n/a", Bucket::label));
            let _ = writeln!(
                s,
                "{:<20} {:<6} {:>5.2} {:>5.2} {:>5.2} {:>3}  {} {} {} {} {} {} {:>6.3} {:>6.3} {:>5.3}{}",
                r.condition,
                r.controller,
                r.vn,
                r.uf,
                r.td,
                r.rtf,
                cell(m.pt5, r.buckets[0]),
                cell(m.pt2, r.buckets[1]),
                cell(m.pt1, r.buckets[2]),
                cell(m.ot5, r.buckets[3]),
                cell(m.ot2, r.buckets[4]),
                cell(m.ot1, r.buckets[5]),
                m.alv,
                m.aav,
                m.aas,
                if r.solver_failures > 0 {
                    format!("  ({} solver failures)", r.solver_failures)
                } else {
                    String::new()
                },
            );
        }
        s
    }
}

/// One logged step of a tracking run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackStep {
    pub step: u64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
    pub cmd_vx: f64,
    pub cmd_vy: f64,
    pub target_x: f64,
    pub target_y: f64,
    /// Distance from the platform to the path after the step.
    pub path_error: f64,
    pub thrusters: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRun {
    pub shape: String,
    pub steps: Vec<TrackStep>,
}

impl TrackRun {
    /// Per-step `|v_cmd - v|`.
    pub fn velocity_errors(&self) -> Vec<f64> {
        self.steps.iter().map(|s| (s.cmd_vx - s.vx).hypot(s.cmd_vy - s.vy)).collect()
    }

    pub fn mean_path_error(&self) -> f64 {
        self.steps.iter().map(|s| s.path_error).sum::<f64>() / self.steps.len().max(1) as f64
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for s in &self.steps {
            out.serialize(s).map_err(std::io::Error::other)?;
        }
        out.flush()
    }
}

/// Drives `controller` around `path` on the full dynamics for `steps` steps,
/// starting at rest on the first waypoint with zero heading.
pub fn run_tracking(
    controller: &mut dyn Controller,
    shape: ShapeKind,
    path: &PathSpec,
    platform: &PlatformParams,
    env_cfg: &EnvConfig,
    profile: &DisturbanceProfile,
    steps: u64,
    master: u64,
) -> Result<TrackRun, BenchError> {
    let env_cfg = EnvConfig {
        task: TaskKind::TrackVelocity,
        episode_len: steps,
        ..env_cfg.clone()
    };
    let (mut env, _) = Env::new(platform.clone(), env_cfg, profile.clone(), master)?;
    let start = path.waypoints()[0];
    let mut tracker = Tracker::new(path.clone());
    let dist = {
        let mut rng = seed::rng_from(master, &[seed::STREAM_EPISODE]);
        profile.sample_episode(&mut rng).map_err(EnvError::from)?
    };
    let initial = PlatformState::at_rest(start[0], start[1], 0.0);
    controller.reset();
    let (first, spec) = tracker.command(start);
    env.start(initial, spec, dist);
    let mut target: Point = first;
    let mut log = Vec::with_capacity(steps as usize);
    for step in 0..steps {
        let pos = [env.state().x, env.state().y];
        if step > 0 {
            let (point, spec) = tracker.command(pos);
            target = point;
            env.set_task(spec);
        }
        let task = *env.task();
        let (obs, observed) = env.observe();
        let bits = controller.act(&obs, &observed, &task);
        env.step(&bits)?;
        let s = *env.state();
        let v = task.velocity().expect("tracking uses velocity targets");
        log.push(TrackStep {
            step,
            x: s.x,
            y: s.y,
            theta: s.theta,
            vx: s.vx,
            vy: s.vy,
            omega: s.omega,
            cmd_vx: v.vx,
            cmd_vy: v.vy,
            target_x: target[0],
            target_y: target[1],
            path_error: path.distance_to([s.x, s.y]),
            thrusters: crate::bits_to_mask(&bits),
        });
    }
    Ok(TrackRun {
        shape: shape.name().into(),
        steps: log,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VelocityRow {
    pub shape: String,
    pub mean: f64,
    pub std: f64,
    pub steps: usize,
    pub mean_path_error: f64,
}

impl VelocityRow {
    /// `mean ± std` in m/s with two decimals.
    pub fn summary(&self) -> String {
        format!("{:.2} ± {:.2}", self.mean, self.std)
    }
}

/// Velocity-error mean and population deviation per shape, over all runs of
/// that shape, in first-appearance order.
pub fn velocity_report(runs: &[TrackRun]) -> Vec<VelocityRow> {
    let mut shapes: Vec<&str> = Vec::new();
    for r in runs {
        if !shapes.contains(&r.shape.as_str()) {
            shapes.push(&r.shape);
        }
    }
    shapes
        .into_iter()
        .map(|shape| {
            let mine: Vec<&TrackRun> = runs.iter().filter(|r| r.shape == shape).collect();
            let errs: Vec<f64> = mine.iter().flat_map(|r| r.velocity_errors()).collect();
            let n = errs.len().max(1) as f64;
            let mean = errs.iter().sum::<f64>() / n;
            let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
            let steps: usize = mine.iter().map(|r| r.steps.len()).sum();
            let path = mine.iter().map(|r| r.mean_path_error() * r.steps.len() as f64).sum::<f64>() / steps.max(1) as f64;
            VelocityRow {
                shape: shape.into(),
                mean,
                std: var.sqrt(),
                steps,
                mean_path_error: path,
            }
        })
        .collect()
}

/// Kinematic follower: each step the velocity is set exactly to the command
/// and the position advances by `v dt`. Returns the visited positions.
pub fn kinematic_follow(path: &PathSpec, steps: u64, dt: f64) -> Vec<Point> {
    let mut tracker = Tracker::new(path.clone());
    let mut p = path.waypoints()[0];
    let mut out = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        let (_, spec) = tracker.command(p);
        let v = spec.velocity().expect("velocity target");
        p = [p[0] + v.vx * dt, p[1] + v.vy * dt];
        out.push(p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::PoseTarget;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pinned(offset: f64, steps: u64) -> EvalRecord {
        let task = TaskSpec::GoToPose(PoseTarget::default());
        let mut r = EvalRecord::default();
        for _ in 0..steps {
            r.push(&PlatformState::at_rest(offset, 0.0, 0.0), &task, &[false; 8]);
        }
        r
    }

    #[test]
    fn pinned_trajectory_scores_full_marks() {
        let m = compile_metrics(&[pinned(0.0, 10)], ActionCountMode::FractionOfEight).unwrap();
        for v in [m.pt1, m.pt2, m.pt5, m.ot1, m.ot2, m.ot5] {
            assert_eq!(v, 100.0);
        }
        assert_eq!((m.alv, m.aav, m.aas), (0.0, 0.0, 0.0));
    }

    #[test]
    fn threshold_semantics_and_batch_average() {
        let m = compile_metrics(&[pinned(0.03, 10)], ActionCountMode::FractionOfEight).unwrap();
        assert_eq!((m.pt5, m.pt2, m.pt1), (100.0, 0.0, 0.0));
        let m = compile_metrics(&[pinned(0.0, 10), pinned(0.03, 10)], ActionCountMode::FractionOfEight).unwrap();
        assert_eq!(m.pt2, 50.0);
        // strict inequality at the boundary
        let m = compile_metrics(&[pinned(0.05, 4)], ActionCountMode::FractionOfEight).unwrap();
        assert_eq!(m.pt5, 0.0);
    }

    #[test]
    fn empty_and_ragged_batches_are_rejected() {
        assert!(matches!(compile_metrics(&[], ActionCountMode::Count), Err(BenchError::EmptyBatch)));
        assert!(matches!(
            compile_metrics(&[pinned(0.0, 3), pinned(0.0, 4)], ActionCountMode::Count),
            Err(BenchError::RaggedBatch(3, 4))
        ));
    }

    #[test]
    fn bucket_examples() {
        assert_eq!(degradation_bucket(64.0, 64.0), Some(Bucket::Drop0To20));
        assert_eq!(degradation_bucket(32.0, 64.0), Some(Bucket::Drop40To60));
        assert_eq!(degradation_bucket(14.0, 73.0), Some(Bucket::Drop80To100));
        assert_eq!(degradation_bucket(80.0, 100.0), Some(Bucket::Drop0To20));
        assert_eq!(degradation_bucket(5.0, 0.0), None);
    }

    #[test]
    fn table2_has_nine_rows() {
        let rows = preset("table2").unwrap();
        assert_eq!(rows.len(), 9);
        assert_eq!(rows.iter().filter(|c| c.profile.rtf_count > 0).count(), 2);
        assert!(preset("nope").is_err());
    }

    #[test]
    fn velocity_report_formats() {
        let step = |e: f64| TrackStep {
            step: 0,
            x: 0.0,
            y: 0.0,
            theta: 0.0,
            vx: 0.2 - e,
            vy: 0.0,
            omega: 0.0,
            cmd_vx: 0.2,
            cmd_vy: 0.0,
            target_x: 0.0,
            target_y: 0.0,
            path_error: 0.0,
            thrusters: 0,
        };
        let perfect = TrackRun {
            shape: "circle".into(),
            steps: vec![step(0.0); 5],
        };
        let lag = TrackRun {
            shape: "square".into(),
            steps: vec![step(0.05); 5],
        };
        let rep = velocity_report(&[perfect, lag]);
        assert_eq!(rep[0].summary(), "0.00 ± 0.00");
        assert_eq!(rep[1].summary(), "0.05 ± 0.00");
    }

    proptest! {
        #[test]
        fn nesting_and_linearity(offs_a in proptest::collection::vec(0.0f64..0.08, 1..6), offs_b in proptest::collection::vec(0.0f64..0.08, 1..6)) {
            let recs = |offs: &[f64]| offs.iter().map(|&o| pinned(o, 7)).collect::<Vec<_>>();
            let (a, b) = (recs(&offs_a), recs(&offs_b));
            let all: Vec<EvalRecord> = a.iter().chain(&b).copied().collect();
            let (ma, mb, mall) = (
                compile_metrics(&a, ActionCountMode::Count).unwrap(),
                compile_metrics(&b, ActionCountMode::Count).unwrap(),
                compile_metrics(&all, ActionCountMode::Count).unwrap(),
            );
            prop_assert!(mall.pt1 <= mall.pt2 && mall.pt2 <= mall.pt5);
            prop_assert!(mall.ot1 <= mall.ot2 && mall.ot2 <= mall.ot5);
            let (na, nb) = (a.len() as f64, b.len() as f64);
            let w = |x: f64, y: f64| (x * na + y * nb) / (na + nb);
            prop_assert!((mall.pt5 - w(ma.pt5, mb.pt5)).abs() < 1e-12);
            prop_assert!((mall.pt2 - w(ma.pt2, mb.pt2)).abs() < 1e-12);
        }

        #[test]
        fn buckets_are_total(v in 0.0f64..200.0, ideal in 1e-6f64..200.0) {
            prop_assert!(degradation_bucket(v, ideal).is_some());
        }
    }

    #[test]
    fn aas_modes_differ_by_eight() {
        let task = TaskSpec::GoToPose(PoseTarget::default());
        let mut r = EvalRecord::default();
        r.push(&PlatformState::default(), &task, &[true, true, false, false, false, false, false, false]);
        let f = compile_metrics(&[r], ActionCountMode::FractionOfEight).unwrap();
        let c = compile_metrics(&[r], ActionCountMode::Count).unwrap();
        assert_abs_diff_eq!(f.aas, 0.25);
        assert_abs_diff_eq!(c.aas, 2.0);
    }
}
