use floatctl::disturbance::DisturbanceProfile;
use floatctl::dynamics::PlatformParams;
use floatctl::env::{EnvConfig, ResetConfig};
use floatctl::ppo::train::curriculum;
use floatctl::ppo::{EpochLog, PpoConfig, Trainer};

fn small() -> PpoConfig {
    PpoConfig {
        num_envs: 8,
        horizon: 8,
        minibatch: 32,
        mini_epochs: 2,
        hidden: vec![16, 16],
        ..PpoConfig::default()
    }
}

fn run(cfg: PpoConfig, env: EnvConfig, seed: u64, epochs: usize) -> (Vec<u8>, Vec<EpochLog>) {
    let mut t = Trainer::new(PlatformParams::default(), env, DisturbanceProfile::default(), cfg, seed).unwrap();
    let logs = (0..epochs).map(|_| t.run_epoch().unwrap()).collect();
    let mut bytes = Vec::new();
    t.params().save(&mut bytes).unwrap();
    (bytes, logs)
}

#[test]
fn same_seed_same_weights() {
    let (a, la) = run(small(), EnvConfig::default(), 4, 3);
    let (b, lb) = run(small(), EnvConfig::default(), 4, 3);
    assert_eq!(a, b);
    let returns = |l: &[EpochLog]| l.iter().map(|e| e.mean_return.to_bits()).collect::<Vec<_>>();
    assert_eq!(returns(&la), returns(&lb));
    let (c, _) = run(small(), EnvConfig::default(), 5, 3);
    assert_ne!(a, c);
}

#[test]
fn curriculum_ramps_linearly_then_holds() {
    let cfg = PpoConfig {
        spawn_radius_start: 0.5,
        curriculum_epochs: 100,
        ..PpoConfig::default()
    };
    let target = ResetConfig::default();
    assert_eq!(curriculum(&cfg, &target, 0).spawn_radius, 0.5);
    assert!((curriculum(&cfg, &target, 50).spawn_radius - 1.25).abs() < 1e-12);
    assert_eq!(curriculum(&cfg, &target, 100).spawn_radius, target.spawn_radius);
    assert_eq!(curriculum(&cfg, &target, 1000).spawn_radius, target.spawn_radius);

    let off = PpoConfig { curriculum_epochs: 0, ..cfg };
    assert_eq!(curriculum(&off, &target, 0), target);
}

#[test]
fn timeout_bootstrap_changes_targets_not_logged_returns() {
    let env = EnvConfig { episode_len: 4, ..EnvConfig::default() };
    let on = small();
    let off = PpoConfig { bootstrap_timeouts: false, ..small() };
    let (a, la) = run(on, env.clone(), 9, 1);
    let (b, lb) = run(off, env, 9, 1);
    assert_eq!(la[0].mean_return, lb[0].mean_return);
    assert_eq!(la[0].episode_return, lb[0].episode_return);
    assert_ne!(a, b);
}

#[test]
fn out_of_bounds_cut_ends_episodes_early() {
    let cfg = |kill| PpoConfig {
        kill_distance: kill,
        curriculum_epochs: 0,
        ..small()
    };
    let (_, cut) = run(cfg(0.1), EnvConfig::default(), 2, 1);
    let (_, free) = run(cfg(0.0), EnvConfig::default(), 2, 1);
    assert_eq!(free[0].episodes, 0);
    assert!(cut[0].episodes > 0);
}
