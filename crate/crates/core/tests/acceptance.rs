//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Positional arguments filter criteria by id substring, e.g.
//! `cargo test --release --test acceptance -- c04 c05`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::SMatrix;
use ndarray::{Array1, Array2};
use rand::Rng;

use floatctl::bench::{self, ActionCountMode, BenchConfig, EvalRecord};
use floatctl::controller::Controller;
use floatctl::disturbance::DisturbanceProfile;
use floatctl::dynamics::{resolve_thrust, PlatformParams, PlatformState};
use floatctl::env::{EnvConfig, PoseTarget, TaskSpec, OBS_DIM};
use floatctl::lqr::{
    self, binarize, normalize, solve_dare, DareMethod, LinearizedModel, LqrConfig, LqrController, LqrGoal,
    Normalization, StateComponent,
};
use floatctl::ppo::update::{batch_from_parts, gradient_check};
use floatctl::ppo::{gae, Policy, PolicyParams, PpoConfig, Trainer};
use floatctl::seed::rng_from;
use floatctl::tracker::{PathSpec, ShapeKind, TrackerConfig};
use floatctl::{mask_to_bits, NUM_THRUSTERS};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn lqr_factory(cfg: LqrConfig) -> impl Fn() -> Box<dyn Controller> + Sync {
    let proto = LqrController::new(PlatformParams::default(), cfg).expect("default LQR config is valid");
    move || Box::new(proto.clone())
}

fn pt5(make: &(dyn Fn() -> Box<dyn Controller> + Sync), profile: &DisturbanceProfile) -> f64 {
    let recs = bench::run_condition(make, &PlatformParams::default(), &BenchConfig::default(), profile, 0).unwrap();
    bench::compile_metrics(&recs, ActionCountMode::FractionOfEight).unwrap().pt5
}

fn c01_thruster_sharing() -> Outcome {
    let params = PlatformParams::default();
    ensure!(params.max_total_thrust == 1.0, "total thrust {} N", params.max_total_thrust);
    let mut seen = [false; NUM_THRUSTERS + 1];
    for mask in 0..=255u8 {
        let bits = mask_to_bits(mask);
        let n = mask.count_ones() as usize;
        let cmd = resolve_thrust(&bits, &params);
        let expect = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        ensure!(cmd.active == bits, "mask {mask:#04x} changed the valve set");
        ensure!(
            cmd.realized_force_per_thruster == expect,
            "n={n}: per-thruster {} N, expected {expect}",
            cmd.realized_force_per_thruster
        );
        let total = cmd.realized_force_per_thruster * n as f64;
        ensure!(total <= 1.0 + 1e-12, "n={n}: total {total} N");
        seen[n] = true;
    }
    ensure!(seen.iter().all(|&s| s), "not every count covered");
    Ok("256 masks, n = 0..8, force = 1/n N".into())
}

fn c02_binarization() -> Outcome {
    let mut rng = rng_from(2, &[]);
    let candidates: Vec<[f64; NUM_THRUSTERS]> =
        (0..=255u8).map(|m| mask_to_bits(m).map(|b| if b { 1.0 } else { 0.0 })).collect();
    for trial in 0..10_000 {
        let u = lqr::ControlVec::from_fn(|_, _| rng.gen_range(-0.5..1.5));
        let target = normalize(&u, Normalization::Clamp);
        let rounded = binarize(&u, Normalization::Clamp).map(|b| if b { 1.0 } else { 0.0 });
        let cost = |c: &[f64; NUM_THRUSTERS]| c.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let best = candidates
            .iter()
            .min_by(|a, b| cost(a).total_cmp(&cost(b)))
            .expect("256 candidates");
        ensure!(
            &rounded == best,
            "trial {trial}: rounding {rounded:?} vs exhaustive {best:?} for {target:?}"
        );
    }
    Ok("10000 controls, rounding == exhaustive argmin".into())
}

fn c03_dare() -> Outcome {
    let one = SMatrix::<f64, 1, 1>::new(1.0);
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    let mut worst_scalar = 0.0f64;
    for method in [DareMethod::Doubling, DareMethod::FixedPoint] {
        let p = solve_dare(&one, &one, &one, &one, 1e-12, 10_000, method).map_err(|e| e.to_string())?;
        worst_scalar = worst_scalar.max((p[(0, 0)] - golden).abs());
    }
    ensure!(worst_scalar < 1e-9, "scalar P off by {worst_scalar:e}");

    let params = PlatformParams::default();
    let cfg = LqrConfig::default();
    let mut rng = rng_from(3, &[]);
    let (mut worst_res, mut worst_rho) = (0.0f64, 0.0f64);
    for _ in 0..64 {
        let state = PlatformState {
            x: rng.gen_range(-2.0..2.0),
            y: rng.gen_range(-2.0..2.0),
            theta: rng.gen_range(-3.1..3.1),
            vx: rng.gen_range(-0.3..0.3),
            vy: rng.gen_range(-0.3..0.3),
            omega: rng.gen_range(-0.5..0.5),
            t: 0,
        };
        let goal = LqrGoal::pose(&PoseTarget::default());
        let m = LinearizedModel::build(&state, &goal, &params, &cfg).map_err(|e| e.to_string())?;
        let q = cfg.weights.q_matrix();
        let r = cfg.weights.r_matrix();
        worst_res = worst_res.max(lqr::dare_residual(&m.a, &m.b, &q, &r, &m.p));
        worst_rho = worst_rho.max(m.closed_loop_radius());
    }
    ensure!(worst_res < 1e-9, "Riccati residual {worst_res:e}");
    ensure!(worst_rho < 1.0, "closed-loop spectral radius {worst_rho}");
    Ok(format!(
        "scalar |P - phi| = {worst_scalar:.1e}; 64 platform solves: residual <= {worst_res:.1e}, rho <= {worst_rho:.6}"
    ))
}

fn c04_lqr_ideal() -> Outcome {
    let make = lqr_factory(LqrConfig::default());
    let recs = bench::run_condition(
        &make,
        &PlatformParams::default(),
        &BenchConfig::default(),
        &DisturbanceProfile::ideal(),
        0,
    )
    .unwrap();
    let ok = recs.iter().filter(|r| r.final_position_error < 0.05).count();
    let frac = ok as f64 / recs.len() as f64;
    let m = bench::compile_metrics(&recs, ActionCountMode::FractionOfEight).unwrap();
    ensure!(recs.len() == 256, "{} episodes", recs.len());
    ensure!(frac >= 0.9, "final error < 5 cm in {ok}/256 ({:.1}%)", 100.0 * frac);
    Ok(format!("final < 5 cm in {ok}/256 ({:.1}%), PT5 {:.1}", 100.0 * frac, m.pt5))
}

fn c05_disturbance_ordering() -> Outcome {
    let make = lqr_factory(LqrConfig::default());
    let with = |f: fn(&mut DisturbanceProfile)| {
        let mut p = DisturbanceProfile::ideal();
        f(&mut p);
        pt5(&make, &p)
    };
    let ideal = with(|_| {});
    let uf2 = with(|p| p.uf = 0.2);
    let uf4 = with(|p| p.uf = 0.4);
    let rtf1 = with(|p| p.rtf_count = 1);
    let rtf2 = with(|p| p.rtf_count = 2);
    let line = format!("PT5 ideal {ideal:.1} > UF0.2 {uf2:.1} > UF0.4 {uf4:.1}; RTF1 {rtf1:.1} > RTF2 {rtf2:.1}");
    ensure!(ideal > uf2 && uf2 > uf4 && rtf1 > rtf2, "{line}");
    Ok(line)
}

fn c06_gradient_check() -> Outcome {
    let cfg = PpoConfig::default();
    let mut worst = 0.0f64;
    let mut count = 0;
    for seed in 0..2u64 {
        let mut rng = rng_from(60 + seed, &[]);
        let params = PolicyParams::init(&cfg.hidden, cfg.init, &mut rng);
        let n = 16;
        let obs = Array2::from_shape_fn((n, OBS_DIM), |_| rng.gen_range(-2.0..2.0));
        let probs = params.forward_actor(obs.view()).1;
        // Behaviour probabilities away from the current ones so the ratio is not 1.
        let behaviour = probs.mapv(|p| (p + rng.gen_range(-0.05..0.05)).clamp(0.05, 0.95));
        let actions = behaviour.mapv(|p| if rng.gen::<f64>() < p { 1.0 } else { 0.0 });
        let values = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        let adv = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        let ret = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        let batch = batch_from_parts(obs, actions, behaviour, values, adv, ret);
        worst = worst.max(gradient_check(&params, &batch, &cfg, 1e-5, 1e-6));
        count += params.actor.num_params() + params.critic.num_params();
    }
    ensure!(worst < 1e-4, "max relative error {worst:e}");
    Ok(format!("{count} parameters over 2 batches of 16, max relative error {worst:.2e}"))
}

fn c07_gae_identities() -> Outcome {
    let mut rng = rng_from(7, &[]);
    let gamma = 0.99;
    let mut worst_mc = 0.0f64;
    for _ in 0..200 {
        let h = rng.gen_range(1..40);
        let r: Vec<f64> = (0..h).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..h).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let d: Vec<bool> = (0..h).map(|_| rng.gen_bool(0.1)).collect();
        let last = rng.gen_range(-5.0..5.0);
        let (a0, _) = gae(&r, &v, &d, last, gamma, 0.0);
        for t in 0..h {
            let next = if t + 1 < h { v[t + 1] } else { last };
            let live = if d[t] { 0.0 } else { 1.0 };
            let delta = r[t] + gamma * next * live - v[t];
            ensure!(a0[t] == delta, "lambda=0 at t={t}: {} vs {delta}", a0[t]);
        }
        let no_done = vec![false; h];
        let (a1, ret) = gae(&r, &v, &no_done, last, gamma, 1.0);
        for t in 0..h {
            let mc: f64 = (t..h).map(|k| gamma.powi((k - t) as i32) * r[k]).sum::<f64>()
                + gamma.powi((h - t) as i32) * last
                - v[t];
            worst_mc = worst_mc.max((a1[t] - mc).abs());
            ensure!((ret[t] - (a1[t] + v[t])).abs() < 1e-12, "returns != A + v");
        }
    }
    ensure!(worst_mc < 1e-10, "lambda=1 deviation {worst_mc:e}");
    Ok(format!("200 random segments: lambda=0 exact, lambda=1 max deviation {worst_mc:.1e}"))
}

fn c08_ppo_learning() -> Outcome {
    let cfg = PpoConfig::default();
    let seeds = [0u64, 1, 2];
    let mut early = Vec::new();
    let mut late = Vec::new();
    let mut success = Vec::new();
    for &seed in &seeds {
        let t0 = Instant::now();
        let mut trainer = Trainer::new(
            PlatformParams::default(),
            EnvConfig::default(),
            DisturbanceProfile::default(),
            cfg.clone(),
            seed,
        )
        .map_err(|e| e.to_string())?;
        let mut returns = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            returns.push(trainer.run_epoch().map_err(|e| e.to_string())?.mean_return);
        }
        let params = trainer.into_params();
        let make = move || Box::new(Policy::new(params.clone())) as Box<dyn Controller>;
        let recs = bench::run_condition(
            &make,
            &PlatformParams::default(),
            &BenchConfig::default(),
            &DisturbanceProfile::ideal(),
            1000 + seed,
        )
        .unwrap();
        let ok = recs.iter().filter(|r| r.final_position_error < 0.10).count() as f64 / recs.len() as f64;
        let first = returns[..50].iter().sum::<f64>() / 50.0;
        let last = returns[returns.len() - 50..].iter().sum::<f64>() / 50.0;
        eprintln!(
            "    seed {seed}: first-50 return {first:.2}, last-50 {last:.2}, final < 10 cm {:.1}% ({:.0} s)",
            100.0 * ok,
            t0.elapsed().as_secs_f64()
        );
        early.push(first);
        late.push(last);
        success.push(ok);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (e, l, s) = (mean(&early), mean(&late), mean(&success));
    let line = format!(
        "3 seeds x {} epochs: return first-50 {e:.2} -> last-50 {l:.2}; final < 10 cm in {:.1}% (need >= 60%)",
        cfg.epochs,
        100.0 * s
    );
    ensure!(l > e && s >= 0.6, "{line}");
    Ok(line)
}

fn record(steps: &[(f64, f64, f64, f64, u8)]) -> EvalRecord {
    // (position error along x, heading error deg, speed, |omega|, thrusters)
    let task = TaskSpec::GoToPose(PoseTarget::default());
    let mut r = EvalRecord::default();
    for &(ep, eh, v, w, n) in steps {
        let s = PlatformState {
            x: ep,
            y: 0.0,
            theta: eh.to_radians(),
            vx: v,
            vy: 0.0,
            omega: w,
            t: 0,
        };
        r.push(&s, &task, &mask_to_bits(((1u16 << n) - 1) as u8));
    }
    r
}

fn c09_metric_oracle() -> Outcome {
    let a = record(&[
        (0.005, 0.5, 0.125, 0.25, 0),
        (0.015, 1.5, 0.25, 0.5, 2),
        (0.03, 3.0, 0.5, 0.0, 4),
        (0.06, 6.0, 0.375, 0.25, 8),
    ]);
    let m = bench::compile_metrics(&[a], ActionCountMode::FractionOfEight).map_err(|e| e.to_string())?;
    let got = [m.pt1, m.pt2, m.pt5, m.ot1, m.ot2, m.ot5, m.alv, m.aav, m.aas];
    let want = [25.0, 50.0, 75.0, 25.0, 50.0, 75.0, 0.3125, 0.25, 0.4375];
    ensure!(got == want, "single trajectory: {got:?} != {want:?}");

    let b = record(&[(0.0, 0.0, 0.0, 0.0, 1); 4]);
    let m = bench::compile_metrics(&[a, b], ActionCountMode::FractionOfEight).map_err(|e| e.to_string())?;
    let got = [m.pt1, m.pt2, m.pt5, m.ot1, m.ot2, m.ot5, m.alv, m.aav, m.aas];
    let want = [62.5, 75.0, 87.5, 62.5, 75.0, 87.5, 0.15625, 0.125, 0.28125];
    ensure!(got == want, "two trajectories: {got:?} != {want:?}");

    let mut rng = rng_from(9, &[]);
    for _ in 0..200 {
        let steps: Vec<_> = (0..10)
            .map(|_| (rng.gen_range(0.0..0.08), rng.gen_range(0.0..8.0), 0.0, 0.0, rng.gen_range(0..=8u8)))
            .collect();
        let m = bench::compile_metrics(&[record(&steps)], ActionCountMode::Count).map_err(|e| e.to_string())?;
        ensure!(m.pt1 <= m.pt2 && m.pt2 <= m.pt5, "PT nesting broken: {m:?}");
        ensure!(m.ot1 <= m.ot2 && m.ot2 <= m.ot5, "OT nesting broken: {m:?}");
    }
    Ok("hand-built batches match exactly; nesting holds on 200 random rows".into())
}

fn tracking_lqr() -> LqrConfig {
    let mut cfg = LqrConfig::default();
    cfg.weights.q_layout = StateComponent::CANONICAL;
    cfg.normalization = Normalization::MinMax;
    cfg
}

fn c10_tracker() -> Outcome {
    let tcfg = TrackerConfig::default();
    let dt = PlatformParams::default().control_dt;
    let circle = PathSpec::shape(ShapeKind::Circle, &tcfg).map_err(|e| e.to_string())?;
    let lap_steps = (2.0 * std::f64::consts::PI * tcfg.size / (tcfg.target_speed * dt)).ceil() as u64 + 10;
    let visited = bench::kinematic_follow(&circle, lap_steps, dt);
    let bound = tcfg.lookahead_r + tcfg.target_speed * dt;
    let worst = visited.iter().map(|&p| circle.distance_to(p)).fold(0.0, f64::max);
    let mut swept = 0.0;
    let mut prev = circle.waypoints()[0];
    for &p in &visited {
        swept += (prev[0] * p[1] - prev[1] * p[0]).atan2(prev[0] * p[0] + prev[1] * p[1]);
        prev = p;
    }
    ensure!(swept >= 2.0 * std::f64::consts::PI, "follower swept only {swept:.3} rad in {lap_steps} steps");
    ensure!(worst <= bound, "follower left the band: {worst:.4} m > {bound:.4} m");

    let mut line = format!("circle lap: max path distance {worst:.4} m <= {bound:.2} m");
    let controllers: [(&str, LqrConfig); 2] = [("LQR velocity weights", tracking_lqr()), ("LQR default", LqrConfig::default())];
    for (name, cfg) in controllers {
        let mut errs = Vec::new();
        for shape in [ShapeKind::Circle, ShapeKind::Square] {
            let path = PathSpec::shape(shape, &tcfg).map_err(|e| e.to_string())?;
            let mut c = LqrController::new(PlatformParams::default(), cfg.clone()).map_err(|e| e.to_string())?;
            let run = bench::run_tracking(
                &mut c,
                shape,
                &path,
                &PlatformParams::default(),
                &EnvConfig::default(),
                &DisturbanceProfile::ideal(),
                tcfg.steps,
                0,
            )
            .map_err(|e| e.to_string())?;
            errs.push(bench::velocity_report(&[run]).remove(0));
        }
        let (c, s) = (&errs[0], &errs[1]);
        line.push_str(&format!(
            "; {name}: velocity error square {} > circle {} (path {:.3} / {:.3} m)",
            s.summary(),
            c.summary(),
            s.mean_path_error,
            c.mean_path_error
        ));
        ensure!(s.mean > c.mean, "{line} (means {:.4} vs {:.4})", s.mean, c.mean);
    }
    Ok(line)
}

fn c11_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_floatctl");
    let small = [
        "--set",
        "ppo.num_envs=64",
        "--set",
        "ppo.minibatch=256",
        "--set",
        "bench.trajectories=8",
        "--set",
        "bench.episode_len=60",
        "--set",
        "tracker.steps=80",
    ];
    let run_all = |dir: &Path| -> Result<Vec<(String, Vec<u8>)>, String> {
        let ckpt = dir.join("train/policy.fcp");
        let rl = format!("rl:{}", ckpt.display());
        let jobs: Vec<(Vec<&str>, &str)> = vec![
            (vec!["train", "--epochs", "2"], "train"),
            (vec!["eval", "--controller", "lqr"], "eval-lqr"),
            (vec!["eval", "--controller", &rl], "eval-rl"),
            (vec!["bench", "--controller", "lqr", "--conditions", "table2"], "bench"),
            (vec!["track", "--controller", "lqr", "--shape", "square"], "track"),
        ];
        let mut files = Vec::new();
        for (args, sub) in jobs {
            let out_dir = dir.join(sub);
            let out = Command::new(bin)
                .args(&args)
                .args(small)
                .args(["--seed", "5", "--threads", "2", "--out"])
                .arg(&out_dir)
                .env("RUST_LOG", "warn")
                .output()
                .map_err(|e| e.to_string())?;
            if !out.status.success() {
                return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
            }
            let mut names: Vec<_> = std::fs::read_dir(&out_dir)
                .map_err(|e| e.to_string())?
                .map(|e| e.unwrap().path())
                .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "fcp")))
                .collect();
            names.sort();
            for p in names {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, std::fs::read(&p).map_err(|e| e.to_string())?));
            }
        }
        Ok(files)
    };
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fa = run_all(a.path())?;
    let fb = run_all(b.path())?;
    ensure!(fa.len() == fb.len() && fa.len() >= 6, "file sets differ: {} vs {}", fa.len(), fb.len());
    for ((na, da), (nb, db)) in fa.iter().zip(&fb) {
        ensure!(na == nb, "file sets differ: {na} vs {nb}");
        ensure!(da == db, "{na} differs between reruns");
    }
    Ok(format!("train/eval/bench/track reruns: {} files byte-identical", fa.len()))
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, &str, fn() -> Outcome); 11] = [
        ("c01", "thruster sharing", c01_thruster_sharing),
        ("c02", "binarization optimality", c02_binarization),
        ("c03", "Riccati solution", c03_dare),
        ("c04", "LQR regulation, ideal", c04_lqr_ideal),
        ("c05", "LQR disturbance ordering", c05_disturbance_ordering),
        ("c06", "gradient check", c06_gradient_check),
        ("c07", "GAE identities", c07_gae_identities),
        ("c08", "PPO desk-scale learning", c08_ppo_learning),
        ("c09", "metric oracle", c09_metric_oracle),
        ("c10", "tracker sanity", c10_tracker),
        ("c11", "CLI determinism", c11_determinism),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|x| id.contains(x.as_str())) {
            continue;
        }
        ran += 1;
        let t0 = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[PASS] {id} {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {id} {name} ({secs:.1} s): {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
