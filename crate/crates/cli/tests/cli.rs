//! End-to-end checks of the harness and the binary: file layout, schema
//! stability, byte-level reproducibility and exit codes.

use std::path::Path;
use std::process::Command;

use opshape_cli::config::load_config;
use opshape_cli::harness::{self, CURVE_HEADER};

fn base_config(output: &Path, extra: &str) -> String {
    format!(
        r#"
output = "{}"
seeds = [3, 1]

[env]
builtin = "two_path_chest"

[im]
kind = "count"
beta = 0.6
states = [2]
noisy_states = [2]

[shaper]
kind = "adops"
gamma_i = 0.9
epsilon = 0.01

[train]
episodes = 40
{extra}
"#,
        output.display()
    )
}

#[test]
fn run_emits_one_csv_per_seed_plus_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp");
    let config = load_config(&base_config(&out, ""), &[]).unwrap();
    let outcome = harness::run(&config, dir.path()).unwrap();

    assert_eq!(outcome.seed_files.len(), 2);
    assert!(out.join("seed_1.csv").is_file());
    assert!(out.join("seed_3.csv").is_file());
    assert!(out.join("aggregate.csv").is_file());
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 3);

    // Seeds merge in ascending order regardless of config order.
    assert_eq!(outcome.curves[0].0, 1);
    assert_eq!(outcome.curves[1].0, 3);

    let seed_csv = std::fs::read_to_string(out.join("seed_1.csv")).unwrap();
    assert!(seed_csv.starts_with(CURVE_HEADER));
    assert!(!seed_csv.contains('\r'), "line endings must be LF");
    assert_eq!(seed_csv.lines().count(), 41);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let cfg_a = load_config(&base_config(&out_a, ""), &[]).unwrap();
    let cfg_b = load_config(&base_config(&out_b, ""), &[]).unwrap();
    harness::run(&cfg_a, dir.path()).unwrap();
    harness::run(&cfg_b, dir.path()).unwrap();
    for name in ["seed_1.csv", "seed_3.csv", "aggregate.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn aggregate_mean_matches_raw_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp");
    let config = load_config(&base_config(&out, ""), &[]).unwrap();
    let outcome = harness::run(&config, dir.path()).unwrap();

    let aggregate = std::fs::read_to_string(&outcome.aggregate_file).unwrap();
    for (i, line) in aggregate.lines().skip(1).enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let mean: f64 = cells[3].parse().unwrap();
        let expected = outcome
            .curves
            .iter()
            .map(|(_, c)| c.records[i].ext_return)
            .sum::<f64>()
            / outcome.curves.len() as f64;
        assert!((mean - expected).abs() < 1e-12);
    }
}

#[test]
fn grm_zero_delay_reproduces_unshaped_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let out_grm = dir.path().join("grm0");
    let out_none = dir.path().join("none");

    let grm = load_config(
        &base_config(&out_grm, ""),
        &["shaper.kind=grm".into(), "shaper.d=0".into()],
    )
    .unwrap();
    let none = load_config(&base_config(&out_none, ""), &["shaper.kind=none".into()]).unwrap();
    harness::run(&grm, dir.path()).unwrap();
    harness::run(&none, dir.path()).unwrap();

    // A zero delay cancels every reward on the spot, so the dynamics and the
    // emitted files coincide exactly with no shaping at all.
    for name in ["seed_1.csv", "seed_3.csv"] {
        let a = std::fs::read(out_grm.join(name)).unwrap();
        let b = std::fs::read(out_none.join(name)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn sweep_rejects_duplicates_and_wrong_shaper() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let grm = load_config(&base_config(&out, ""), &["shaper.kind=grm".into()]).unwrap();
    let err = harness::sweep_d(&grm, dir.path(), &[1, 1]).unwrap_err();
    assert!(matches!(err, harness::HarnessError::SweepValues));

    let adops = load_config(&base_config(&out, ""), &[]).unwrap();
    let err = harness::sweep_d(&adops, dir.path(), &[1, 2]).unwrap_err();
    assert!(matches!(err, harness::HarnessError::SweepShaper(_)));
}

#[test]
fn sweep_writes_per_delay_outputs_and_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let grm = load_config(&base_config(&out, ""), &["shaper.kind=grm".into()]).unwrap();
    let entries = harness::sweep_d(&grm, dir.path(), &[0, 1]).unwrap();
    assert_eq!(entries.len(), 2);
    assert!(out.join("d_0").join("aggregate.csv").is_file());
    assert!(out.join("d_1").join("aggregate.csv").is_file());
    let ranking = std::fs::read_to_string(out.join("ranking.csv")).unwrap();
    assert!(ranking.starts_with("rank,d,final_mean_ext_return"));
    assert_eq!(ranking.lines().count(), 3);
}

fn opshape() -> Command {
    Command::new(env!("CARGO_BIN_EXE_opshape"))
}

#[test]
fn verify_exit_codes_separate_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.toml");
    std::fs::write(&cfg_path, base_config(&dir.path().join("out"), "")).unwrap();

    // Raw shaping on the decoy fixture: violated, exit 2.
    let out = opshape()
        .args(["verify", "--config"])
        .arg(&cfg_path)
        .args(["--set", "shaper.kind=raw"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("verdict: violated"), "{text}");
    assert!(text.contains("violation: state=s0 t=0"), "{text}");

    // The matching transform with a one-step delay: preserved, exit 0.
    let out = opshape()
        .args(["verify", "--config"])
        .arg(&cfg_path)
        .args(["--set", "shaper.kind=grm", "--set", "shaper.d=1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("verdict: preserved"), "{text}");
}

#[test]
fn config_errors_exit_one_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.toml");
    std::fs::write(&cfg_path, base_config(&dir.path().join("out"), "")).unwrap();
    let out = opshape()
        .args(["run", "--config"])
        .arg(&cfg_path)
        .args(["--set", "shaper.kind=\"warp\""])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("kind"), "stderr should name the offending key: {err}");
}

#[test]
fn blowup_demo_reports_magnitudes() {
    let out = opshape().args(["blowup-demo", "--gamma", "0.99", "--n", "4500"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let inv: f64 = text
        .lines()
        .find(|l| l.starts_with("1/gamma^(n-1)"))
        .and_then(|l| l.split("= ").nth(1))
        .unwrap()
        .parse()
        .unwrap();
    assert!(inv > 1e19 && inv < 1e20, "1/gamma^(n-1) = {inv}");
}

#[test]
fn solve_dumps_values_for_a_document() {
    let dir = tempfile::tempdir().unwrap();
    let mdp_path = dir.path().join("chain.toml");
    std::fs::write(
        &mdp_path,
        r#"
states = 3
actions = 1
horizon = 2
gamma_e = 0.5
start = [1.0, 0.0, 0.0]
transitions = [
    [0, 0, 1, 1.0],
    [1, 0, 2, 1.0],
]
rewards = [[1, 0, 2, "any", 1.0]]
"#,
    )
    .unwrap();
    let out = opshape().args(["solve", "--q", "--mdp"]).arg(&mdp_path).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l == "V,0,,0,0.5"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("Q,0,0,0,")), "{text}");
}

#[test]
fn thread_cap_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.toml");
    let out_dir = dir.path().join("out");
    std::fs::write(&cfg_path, base_config(&out_dir, "")).unwrap();
    let run = |threads: &str| {
        let status = opshape()
            .args(["run", "--config"])
            .arg(&cfg_path)
            .env("OPSHAPE_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success());
        let bytes = std::fs::read(out_dir.join("seed_1.csv")).unwrap();
        std::fs::remove_dir_all(&out_dir).unwrap();
        bytes
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn sweep_ranks_short_delays_above_full_deferral() {
    // Long-horizon episodes: the fully deferred correction explodes at the
    // end of every unsolved episode and saturates the policy before the
    // goal is ever found, while a one-step delay leaves learning intact.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let config_text = format!(
        r#"
output = "{}"
seeds = [0, 1, 2, 3]

[env]
builtin = "long_corridor"
length = 10
horizon = 64
gamma_e = 0.95

[im]
kind = "count"
beta = 0.5

[shaper]
kind = "grm"
gamma_i = 0.9

[train]
episodes = 500
"#,
        out.display()
    );
    let config = load_config(&config_text, &[]).unwrap();
    let entries = harness::sweep_d(&config, dir.path(), &[63, 1]).unwrap();
    assert_eq!(entries[0].d, 1, "one-step delay should rank first");
    assert!(
        entries[0].final_mean_ext_return > entries[1].final_mean_ext_return + 0.5,
        "expected a decisive gap: {} vs {}",
        entries[0].final_mean_ext_return,
        entries[1].final_mean_ext_return
    );
}

#[test]
fn runtime_abort_exits_three() {
    // Undiscounted enormous rewards overflow the value tables mid-run; the
    // binary must abort with the runtime exit code rather than emit garbage.
    let dir = tempfile::tempdir().unwrap();
    let mdp_path = dir.path().join("huge.toml");
    std::fs::write(
        &mdp_path,
        r#"
states = 1
actions = 1
horizon = 8
gamma_e = 1.0
start = [1.0]
transitions = [[0, 0, 0, 1.0]]
rewards = [[0, 0, 0, "any", 1.0e308]]
"#,
    )
    .unwrap();
    let config = format!(
        r#"
output = "{}"
seeds = [0]

[env]
file = "huge.toml"

[im]
kind = "constant"
beta = 0.0

[shaper]
kind = "none"

[train]
episodes = 500
"#,
        dir.path().join("out").display()
    );
    let cfg_path = dir.path().join("cfg.toml");
    std::fs::write(&cfg_path, config).unwrap();
    let out = opshape().args(["run", "--config"]).arg(&cfg_path).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}
