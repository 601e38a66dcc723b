use std::fs;

use proptest::prelude::*;

use micromacro::cli::run_cli;
use micromacro::config::ExperimentConfig;

const LINEAR: &str = r#"
[model]
kind = "linear"

[numerics]
dt = 1e-3
j = 200
t_end = 0.05
seed = 4

[macro]
moments = "centralized"
l = 2
method = "projective"

[policy]
dt0 = 5e-3
dt_max = 5e-3

[replicate]
r = 3
"#;

fn write_config(dir: &std::path::Path, text: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn run_writes_trajectory_and_config_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), LINEAR);
    let out = dir.path().join("out");
    let code = run_cli(["micromacro", "run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(traj.lines().any(|l| l.starts_with("time,")), "{traj}");
    assert!(traj.contains("# seed = 4"));
    let rows = traj.lines().filter(|l| !l.starts_with('#') && !l.starts_with("time")).count();
    assert_eq!(rows, 11);
    let snapshot = fs::read_to_string(out.join("config.toml")).unwrap();
    let back = ExperimentConfig::from_toml(&snapshot).unwrap();
    assert_eq!(back, ExperimentConfig::from_toml(&fs::read_to_string(&cfg).unwrap()).unwrap().with_dir(&out));
}

trait WithDir {
    fn with_dir(self, dir: &std::path::Path) -> Self;
}

impl WithDir for ExperimentConfig {
    fn with_dir(mut self, dir: &std::path::Path) -> Self {
        self.output.dir = dir.to_path_buf();
        self
    }
}

#[test]
fn seed_flag_changes_the_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), LINEAR);
    let read = |seed: &str| {
        let out = dir.path().join(format!("s{seed}"));
        assert_eq!(run_cli(["micromacro", "run", "--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap()]), 0);
        fs::read_to_string(out.join("trajectory.csv")).unwrap()
    };
    let body = |s: String| s.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    assert_eq!(body(read("7")), body(read("7")));
    assert_ne!(body(read("7")), body(read("8")));
}

#[test]
fn replicate_writes_mean_and_std() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), LINEAR);
    let out = dir.path().join("rep");
    assert_eq!(run_cli(["micromacro", "replicate", "--config", &cfg, "--out", out.to_str().unwrap(), "--workers", "1"]), 0);
    let text = fs::read_to_string(out.join("replicate.csv")).unwrap();
    assert!(text.contains("time,mean,std"));
    assert!(text.contains("# replicates = 3"));
}

#[test]
fn stability_and_ks_commands() {
    assert_eq!(run_cli(["micromacro", "stability", "--pe", "2", "--beta", "0.5"]), 0);
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    fs::write(&a, "1\n2\n3\n4\n").unwrap();
    fs::write(&b, "# header\n2.5\n3.5\n4.5\n").unwrap();
    assert_eq!(run_cli(["micromacro", "ks", a.to_str().unwrap(), b.to_str().unwrap()]), 0);
}

#[test]
fn bad_input_gives_nonzero_status() {
    assert_eq!(run_cli(["micromacro", "run", "--bogus"]), 2);
    assert_eq!(run_cli(["micromacro", "run", "--seed", "18446744073709551615"]), 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[numerics]\nbogus = 1\n");
    assert_eq!(run_cli(["micromacro", "run", "--config", &cfg]), 1);
    let missing = dir.path().join("missing.toml");
    assert_eq!(run_cli(["micromacro", "run", "--config", missing.to_str().unwrap()]), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn config_round_trips(
        seed in 0..=i64::MAX as u64,
        j in 1usize..100_000,
        l in 1usize..10,
        dt in 1e-6f64..1e-2,
        adaptive in any::<bool>(),
        linear in any::<bool>(),
        kappa in prop_oneof![Just("2.5".to_string()), Just("\"paper-periodic\"".to_string()), Just("\"constant(3)\"".to_string())],
    ) {
        let kind = if linear { "linear" } else { "fene" };
        let text = format!(
            "[model]\nkind = \"{kind}\"\nkappa = {kappa}\n[numerics]\nseed = {seed}\nj = {j}\ndt = {dt:e}\n[macro]\nl = {l}\n[policy]\nadaptive = {adaptive}\n"
        );
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        prop_assert_eq!(cfg.numerics.seed, seed);
        prop_assert_eq!(cfg.numerics.dt, dt);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}
