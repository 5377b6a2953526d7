use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use popsan::actor::AnyActor;
use popsan::checkpoint::Checkpoint;
use popsan::envs::make_env;
use popsan::rollout::evaluate_episodes;
use popsan_cli::config::RunConfig;
use popsan_cli::train::MetricLine;
use serde_json::Value;
use tempfile::TempDir;

fn popsan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_popsan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A run small enough to finish in well under a second.
const TINY: &str = "\
env = point_reach
hidden_sizes = 8
pop_size = 3
timesteps = 2
critic_hidden = 8
batch_size = 8
buffer_capacity = 200
start_steps = 20
eval_interval = 50
eval_episodes = 1
log_interval = 10
checkpoint_interval = 60
max_env_steps = 150
seed = 4
";

/// [`TINY`] with the keys set in `extra` replaced.
fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let key = |l: &str| l.split('=').next().unwrap().trim().to_string();
    let replaced: Vec<String> = extra.lines().map(key).collect();
    let mut text: String = TINY
        .lines()
        .filter(|l| !replaced.contains(&key(l)))
        .map(|l| format!("{l}\n"))
        .collect();
    text.push_str(extra);
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn train(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    popsan(&args)
}

fn metrics(out: &Path) -> Vec<u8> {
    fs::read(out.join("metrics.jsonl")).unwrap()
}

#[test]
fn zero_step_budget_writes_the_initial_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("run");
    let o = train(&cfg, &out, &["--max-env-steps", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(metrics(&out).is_empty());
    let ck = Checkpoint::load(out.join("final.psan")).unwrap();
    assert_eq!(ck.require("train.counters").unwrap().data[0], 0.0);
    assert_eq!(ck.require("replay.meta").unwrap().data[2], 0.0);
    // nothing but the config we wrote and the run directory
    let mut entries: Vec<String> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    entries.sort();
    assert_eq!(entries, ["run", "run.cfg"]);
}

#[test]
fn run_directory_holds_the_resolved_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("run");
    let o = train(&cfg, &out, &["--set", "actor_lr=0.0003", "--seed", "11"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let saved = fs::read_to_string(out.join("config.txt")).unwrap();
    let resolved = RunConfig::from_text(&saved).unwrap();
    assert_eq!(resolved.td3.actor_lr, 0.0003);
    assert_eq!(resolved.seed, 11);
    assert_eq!(resolved.out_dir, out);
    // every key is materialised
    for key in popsan_cli::config::KEYS {
        assert!(saved.contains(&format!("\n{key} = ")), "{key} missing");
    }
    // and rerunning from the saved file reproduces the run
    let again = tmp.path().join("again");
    let o = train(&out.join("config.txt"), &again, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(metrics(&out), metrics(&again));
}

#[test]
fn identical_runs_write_identical_streams() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(train(&cfg, &a, &[]).status.success());
    assert!(train(&cfg, &b, &[]).status.success());
    let bytes = metrics(&a);
    assert_eq!(bytes, metrics(&b));
    assert_eq!(
        fs::read(a.join("final.psan")).unwrap(),
        fs::read(b.join("final.psan")).unwrap()
    );
    let lines: Vec<MetricLine> = String::from_utf8(bytes)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 15);
    assert!(lines.iter().all(|l| l.wall_ms == 0));
    assert!(lines
        .iter()
        .enumerate()
        .all(|(k, l)| l.step == 10 * (k as u64 + 1)));
    assert!(a.join("checkpoints/step_00000060.psan").exists());
    assert!(a.join("checkpoints/step_00000120.psan").exists());
}

#[test]
fn wall_time_is_opt_in() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "log_wall_time = true\n");
    let out = tmp.path().join("run");
    assert!(train(&cfg, &out, &[]).status.success());
    let text = String::from_utf8(metrics(&out)).unwrap();
    let line = text.lines().next().unwrap();
    let first: Value = serde_json::from_str(line).unwrap();
    assert!(first["wall_ms"].is_u64());
    let positions: Vec<usize> = [
        "step",
        "episode",
        "mean_reward",
        "mean_episode_length",
        "success_rate",
        "critic_loss",
        "actor_loss",
        "wall_ms",
    ]
    .iter()
    .map(|k| line.find(&format!("\"{k}\":")).expect(k))
    .collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]), "{line}");
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "");
    let full = tmp.path().join("full");
    assert!(train(&cfg, &full, &[]).status.success());

    // stop at 60, then resume to 150 in the same directory
    let part = tmp.path().join("part");
    assert!(train(&cfg, &part, &["--max-env-steps", "60"])
        .status
        .success());
    let ck = part.join("checkpoints/step_00000060.psan");
    let o = train(&cfg, &part, &["--resume", ck.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(metrics(&part), metrics(&full));
    assert_eq!(
        fs::read(part.join("final.psan")).unwrap(),
        fs::read(full.join("final.psan")).unwrap()
    );

    // resuming from an earlier checkpoint drops the records written after it
    let o = train(
        &cfg,
        &part,
        &[
            "--resume",
            full.join("checkpoints/step_00000060.psan")
                .to_str()
                .unwrap(),
        ],
    );
    assert!(o.status.success());
    assert_eq!(metrics(&part), metrics(&full));
}

#[test]
fn resume_rejects_the_other_actor_kind() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("run");
    assert!(train(&cfg, &out, &["--max-env-steps", "30"])
        .status
        .success());
    let ck = out.join("final.psan");
    let o = train(
        &cfg,
        &out,
        &["--actor", "baseline", "--resume", ck.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("spiking"));
}

#[test]
fn diverging_losses_abort_with_a_diagnostic() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "critic_lr = 1e300\n");
    let out = tmp.path().join("run");
    let o = train(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("training aborted"), "{err}");
    assert!(!out.join("final.psan").exists());
}

#[test]
fn unwritable_output_directory_fails_before_training() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "");
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let o = train(&cfg, &blocker.join("run"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not writable"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("run");
    for extra in [
        &["--set", "no_such_key=1"][..],
        &["--set", "seed=minus one"],
        &["--env", "cartpole"],
        &["--actor", "lstm"],
        &["--set", "discount=2"],
    ] {
        let o = train(&cfg, &out, extra);
        assert_eq!(o.status.code(), Some(1), "{extra:?}: {}", stderr(&o));
    }
    assert_eq!(popsan(&["fly"]).status.code(), Some(1));
    assert_eq!(popsan(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(popsan(&["--help"]).status.code(), Some(0));
    let missing = tmp.path().join("missing.cfg");
    assert_eq!(
        popsan(&["train", "--config", missing.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    assert!(!out.exists());
}

fn trained(tmp: &TempDir, extra: &str) -> PathBuf {
    let cfg = write_config(tmp.path(), extra);
    let out = tmp.path().join("run");
    let o = train(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    out.join("final.psan")
}

#[test]
fn single_episode_eval_reports_that_episode() {
    let tmp = TempDir::new().unwrap();
    let ck = trained(&tmp, "");
    let dir = tmp.path().join("eval");
    let o = popsan(&[
        "eval",
        ck.to_str().unwrap(),
        "--episodes",
        "1",
        "--seed",
        "5",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stats: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("eval.json")).unwrap()).unwrap();
    let actor = AnyActor::read_checkpoint(&Checkpoint::load(&ck).unwrap()).unwrap();
    let mut env = make_env("point_reach").unwrap();
    let ep = evaluate_episodes(env.as_mut(), &actor, 1, 5).unwrap()[0];
    assert_eq!(stats["mean_reward"].as_f64().unwrap(), ep.total_reward);
    assert_eq!(
        stats["mean_episode_length"].as_f64().unwrap(),
        ep.length as f64
    );
    assert_eq!(
        stats["success_rate"].as_f64().unwrap(),
        ep.success as u8 as f64
    );
    assert_eq!(stats["env"], "point_reach");
    let printed: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(printed, stats);
}

#[test]
fn damaged_checkpoints_are_runtime_errors() {
    let tmp = TempDir::new().unwrap();
    let ck = trained(&tmp, "max_env_steps = 0\n");
    let bytes = fs::read(&ck).unwrap();

    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    let path = tmp.path().join("magic.psan");
    fs::write(&path, bad_magic).unwrap();
    for cmd in ["eval", "energy", "inspect"] {
        let o = popsan(&[cmd, path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{cmd}");
        assert!(stderr(&o).contains("magic"), "{cmd}: {}", stderr(&o));
    }

    let mut future = bytes.clone();
    future[4..8].copy_from_slice(&7u32.to_le_bytes());
    let path = tmp.path().join("future.psan");
    fs::write(&path, future).unwrap();
    let o = popsan(&["eval", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.contains("version 7") && err.contains("version 1"),
        "{err}"
    );

    let path = tmp.path().join("short.psan");
    fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert_eq!(
        popsan(&["inspect", path.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn inspect_lists_tensors_with_shapes() {
    let tmp = TempDir::new().unwrap();
    let ck = trained(&tmp, "max_env_steps = 0\n");
    let o = popsan(&["inspect", ck.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("version 1"));
    let line = text
        .lines()
        .find(|l| l.starts_with("actor.encoder.means "))
        .expect("encoder means listed");
    assert!(line.contains("[6, 3]"), "{line}");
    assert!(text.lines().any(|l| l.starts_with("replay.obs ")));
}

fn energy_report(ck: &Path, out: &Path, extra: &[&str]) -> Value {
    let mut args = vec![
        "energy",
        ck.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = popsan(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().contains("savings"));
    assert!(out.join("energy.txt").exists());
    serde_json::from_str(&fs::read_to_string(out.join("energy.json")).unwrap()).unwrap()
}

#[test]
fn baseline_actor_energy_is_mac_only() {
    let tmp = TempDir::new().unwrap();
    let ck = trained(&tmp, "actor = baseline\nmax_env_steps = 0\n");
    let r = energy_report(&ck, &tmp.path().join("e"), &["--samples", "50"]);
    assert_eq!(r["actor"], "baseline");
    for layer in r["layers"].as_array().unwrap() {
        assert_eq!(layer["ac_count"].as_f64().unwrap(), 0.0);
    }
    assert_eq!(r["layers"][0]["mac_count"].as_f64().unwrap(), 48.0);
    assert_eq!(r["savings_fraction"].as_f64().unwrap(), 0.0);
    assert!(r["weighted_firing_rate"].is_null());
}

#[test]
fn spiking_energy_grows_with_timesteps_and_reports_exact_savings() {
    let tmp = TempDir::new().unwrap();
    let ck = trained(&tmp, "");
    let first = energy_report(
        &ck,
        &tmp.path().join("t1"),
        &["--timesteps", "1", "--samples", "64"],
    );
    let obs = tmp.path().join("obs.json");
    fs::write(&obs, first["observations"].to_string()).unwrap();
    let one = energy_report(
        &ck,
        &tmp.path().join("o1"),
        &["--timesteps", "1", "--observations", obs.to_str().unwrap()],
    );
    let three = energy_report(
        &ck,
        &tmp.path().join("o3"),
        &["--timesteps", "3", "--observations", obs.to_str().unwrap()],
    );
    assert_eq!(one["total_energy_pj"], first["total_energy_pj"]);
    let e1 = one["total_energy_pj"].as_f64().unwrap();
    let e3 = three["total_energy_pj"].as_f64().unwrap();
    assert!(e3 >= e1, "T=3 {e3} < T=1 {e1}");
    for r in [&one, &three] {
        let total = r["total_energy_pj"].as_f64().unwrap();
        let base = r["baseline"]["total_energy_pj"].as_f64().unwrap();
        assert_eq!(r["savings_fraction"].as_f64().unwrap(), 1.0 - total / base);
        assert_eq!(r["samples"].as_u64().unwrap(), 64);
    }
    // dense baseline 6-8-2 by default, or as requested
    assert_eq!(
        one["baseline"]["total_energy_pj"].as_f64().unwrap(),
        (48.0 + 16.0) * 4.6
    );
    let wide = energy_report(
        &ck,
        &tmp.path().join("w"),
        &[
            "--observations",
            obs.to_str().unwrap(),
            "--baseline-hidden",
            "16,16",
        ],
    );
    assert_eq!(
        wide["baseline"]["layer_sizes"],
        serde_json::json!([6, 16, 16, 2])
    );
}

#[test]
fn energy_rejects_bad_requests() {
    let tmp = TempDir::new().unwrap();
    let ck = trained(&tmp, "actor = baseline\nmax_env_steps = 0\n");
    let ck = ck.to_str().unwrap();
    assert_eq!(
        popsan(&["energy", ck, "--timesteps", "2"]).status.code(),
        Some(1)
    );
    assert_eq!(
        popsan(&["energy", ck, "--samples", "0"]).status.code(),
        Some(1)
    );
    assert_eq!(
        popsan(&["energy", ck, "--env", "planar_pick"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        popsan(&["energy", ck, "--e-mac", "0"]).status.code(),
        Some(1)
    );
}
