//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test -p popsan-cli --test acceptance -- 5`.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use ndarray::Array2;
use popsan::actor::{ActorKind, ActorModel, AnyActor, BaselineActor};
use popsan::checkpoint::Checkpoint;
use popsan::energy::{
    break_even_rate, count_ann_flops, count_snn_ops, savings, total_energy, weighted_firing_rate,
    OpCosts,
};
use popsan::envs::make_env;
use popsan::popsan::{forward, init_popsan, PopSanParams};
use popsan::rollout::derive_seed;
use popsan::train::Trainer;
use popsan_cli::config::RunConfig;
use popsan_cli::energy::{energy, EnergyArgs, Observations};
use popsan_cli::train::{train, FINAL_CHECKPOINT, METRICS_FILE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;
use testkit::{fd, hand_trace, oracle, properties};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, started: Instant) -> Result<Duration, String> {
    let took = started.elapsed();
    ensure(took < limit, || {
        format!(
            "took {:.1}s, limit {:.0}s",
            took.as_secs_f64(),
            limit.as_secs_f64()
        )
    })?;
    Ok(took)
}

/// Runs `f`, turning a panic into a failure message.
fn guarded<T>(f: impl FnOnce() -> T) -> Result<T, String> {
    panic::catch_unwind(AssertUnwindSafe(f)).map_err(|e| {
        e.downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())
    })
}

// 1 ------------------------------------------------------------------------

fn energy_table() -> Result<String, String> {
    let ann = 85.96;
    let mut shown = Vec::new();
    for (snn, expected) in [(3.35, 96.10), (15.36, 82.13), (35.22, 59.03)] {
        let pct = 100.0 * savings(snn, ann).map_err(|e| e.to_string())?;
        ensure((pct - expected).abs() <= 0.01, || {
            format!("{snn} vs {ann}: {pct:.4}% instead of {expected}%")
        })?;
        shown.push(format!("{pct:.2}%"));
    }
    Ok(shown.join(", "))
}

// 2 ------------------------------------------------------------------------

fn bptt_oracle() -> Result<String, String> {
    let started = Instant::now();
    let (lif, any, fixed) = guarded(|| {
        (
            oracle::lif_stack_matches_unrolled_oracle(0..200),
            oracle::popsan_backward_matches_unrolled_oracle(0..200, None),
            oracle::popsan_backward_matches_unrolled_oracle(0..100, Some((3, 3))),
        )
    })?;
    let took = within(Duration::from_secs(10), started)?;
    Ok(format!(
        "max rel err {:.1e} (LIF, 200 seeds), {:.1e} (popsan, 200 seeds), {:.1e} (3 hidden, T=3, 100 seeds) in {:.2}s",
        lif,
        any,
        fixed,
        took.as_secs_f64()
    ))
}

// 3 ------------------------------------------------------------------------

fn finite_differences() -> Result<String, String> {
    let started = Instant::now();
    let (dec, enc, critic) = guarded(|| {
        (
            fd::decoder_gradients_match_central_differences(),
            fd::encoder_gradients_match_central_differences(),
            fd::critic_gradients_match_finite_differences(),
        )
    })?;
    ensure(dec <= 1e-5 && enc <= 1e-5 && critic <= 1e-6, || {
        format!("decoder {dec:e}, encoder {enc:e}, critic {critic:e}")
    })?;
    let took = within(Duration::from_secs(10), started)?;
    Ok(format!(
        "decoder {dec:.1e}, encoder {enc:.1e}, critic {critic:.1e} in {:.2}s",
        took.as_secs_f64()
    ))
}

// 4 ------------------------------------------------------------------------

fn scalar_trace() -> Result<String, String> {
    guarded(hand_trace::scalar_network_two_steps)?;
    Ok("K=1, T=2 sequence reproduced exactly".into())
}

// 5 ------------------------------------------------------------------------

fn desk_config() -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/point_reach_desk.cfg");
    let text = fs::read_to_string(&path).expect("desk config present");
    RunConfig::from_text(&text).expect("desk config parses")
}

/// Best evaluation success rate within the budget, and the step at which
/// it was reached. Training stops at the first evaluation of at least 0.9.
fn best_success<A: ActorModel>(mut trainer: Trainer<A>) -> Result<(f64, u64), String> {
    let mut best = (0.0, 0);
    while !trainer.is_finished() {
        let outcome = trainer.step().map_err(|e| e.to_string())?;
        if let Some(e) = outcome.eval {
            if e.success_rate > best.0 {
                best = (e.success_rate, trainer.steps());
            }
            if e.success_rate >= 0.9 {
                break;
            }
        }
    }
    Ok(best)
}

fn desk_run(kind: ActorKind, seed: u64, budget: u64) -> Result<(f64, u64), String> {
    let mut config = desk_config();
    config.actor = kind;
    config
        .set("seed", &seed.to_string())
        .map_err(|e| e.to_string())?;
    config.td3.max_env_steps = budget;
    let spec = config.env_spec().map_err(|e| e.to_string())?;
    let actor =
        AnyActor::init(kind, &config.arch(&spec), &spec, config.seed).map_err(|e| e.to_string())?;
    let (env, td3, log) = (&config.env, config.td3.clone(), config.log_interval);
    let err = |e: popsan::Error| e.to_string();
    match actor {
        AnyActor::Spiking(a) => best_success(Trainer::new(env, a, td3, log).map_err(err)?),
        AnyActor::Baseline(a) => best_success(Trainer::new(env, a, td3, log).map_err(err)?),
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn desk_learning() -> Result<String, String> {
    let started = Instant::now();
    let mut summary = Vec::new();
    let mut failures = Vec::new();
    // the dense actor gets half the spiking actor's budget
    for (kind, budget) in [(ActorKind::Spiking, 30_000), (ActorKind::Baseline, 15_000)] {
        let mut rates = Vec::new();
        let mut reached = Vec::new();
        for seed in 0..5 {
            let (rate, step) = desk_run(kind, seed, budget)?;
            rates.push(rate);
            reached.push(format!("{rate:.1}@{}k", step / 1000));
        }
        let m = median(rates);
        if m < 0.9 {
            failures.push(format!("{} median {m:.2}", kind.name()));
        }
        summary.push(format!(
            "{} median {m:.2} within {}k [{}]",
            kind.name(),
            budget / 1000,
            reached.join(" ")
        ));
    }
    let took = started.elapsed();
    let text = format!("{} in {:.0}s", summary.join("; "), took.as_secs_f64());
    ensure(failures.is_empty(), || text.clone())?;
    within(Duration::from_secs(15 * 60), started).map_err(|e| format!("{text}: {e}"))?;
    Ok(text)
}

// 6 ------------------------------------------------------------------------

fn short_run(env: &str, actor: ActorKind, out: &Path) -> RunConfig {
    let mut c = RunConfig {
        env: env.into(),
        actor,
        out_dir: out.to_path_buf(),
        hidden_sizes: vec![16, 16],
        pop_size: 4,
        timesteps: 3,
        log_interval: 50,
        checkpoint_interval: 600,
        ..RunConfig::default()
    };
    c.td3.critic_hidden = vec![16, 16];
    c.td3.batch_size = 32;
    c.td3.start_steps = 200;
    c.td3.max_env_steps = 1200;
    c.td3.eval_interval = 400;
    c.td3.eval_episodes = 2;
    c.set("seed", "9").unwrap();
    c
}

fn restored_snapshot<A: ActorModel>(
    config: &RunConfig,
    ck: &Checkpoint,
) -> Result<Checkpoint, String> {
    Trainer::<A>::restore(&config.env, ck, config.td3.clone(), config.log_interval)
        .map(|t| t.snapshot())
        .map_err(|e| e.to_string())
}

fn determinism() -> Result<String, String> {
    let tmp = TempDir::new().map_err(|e| e.to_string())?;
    let mut lines = 0;
    for env in ["point_reach", "planar_pick"] {
        for kind in [ActorKind::Spiking, ActorKind::Baseline] {
            let tag = format!("{env}/{}", kind.name());
            let runs: Vec<PathBuf> = ["a", "b"]
                .iter()
                .map(|r| tmp.path().join(format!("{env}-{}-{r}", kind.name())))
                .collect();
            for out in &runs {
                train(&short_run(env, kind, out), None).map_err(|e| format!("{tag}: {e}"))?;
            }
            let read = |p: PathBuf| fs::read(&p).map_err(|e| format!("{}: {e}", p.display()));
            let (ma, mb) = (
                read(runs[0].join(METRICS_FILE))?,
                read(runs[1].join(METRICS_FILE))?,
            );
            ensure(!ma.is_empty() && ma == mb, || {
                format!("{tag}: metric streams differ")
            })?;
            lines += ma.iter().filter(|&&b| b == b'\n').count();
            let (ca, cb) = (
                read(runs[0].join(FINAL_CHECKPOINT))?,
                read(runs[1].join(FINAL_CHECKPOINT))?,
            );
            ensure(ca == cb, || format!("{tag}: final checkpoints differ"))?;

            // bytes -> tensors -> bytes, and through a restored trainer
            let ck = Checkpoint::read_from(ca.as_slice()).map_err(|e| e.to_string())?;
            let mut bytes = Vec::new();
            ck.write_to(&mut bytes).map_err(|e| e.to_string())?;
            ensure(bytes == ca, || {
                format!("{tag}: re-encoding changed the bytes")
            })?;
            let config = short_run(env, kind, &runs[0]);
            let again = match kind {
                ActorKind::Spiking => restored_snapshot::<PopSanParams>(&config, &ck)?,
                ActorKind::Baseline => restored_snapshot::<BaselineActor>(&config, &ck)?,
            };
            let bits = |c: &Checkpoint| -> Vec<(String, Vec<usize>, Vec<u64>)> {
                c.tensors
                    .iter()
                    .map(|t| {
                        (
                            t.name.clone(),
                            t.dims.clone(),
                            t.data.iter().map(|x| x.to_bits()).collect(),
                        )
                    })
                    .collect()
            };
            ensure(bits(&again) == bits(&ck), || {
                format!("{tag}: restore/snapshot is not bit-exact")
            })?;
        }
    }
    Ok(format!(
        "2 envs x 2 actors: identical metric streams ({lines} lines) and checkpoints, bit-exact round trips"
    ))
}

// 7 ------------------------------------------------------------------------

fn planar_pick_observations(n: usize, seed: u64) -> Array2<f64> {
    let mut env = make_env("planar_pick").unwrap();
    let act_dim = env.spec().act_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut episode = 0;
    while rows.len() < n {
        let mut obs = env.reset(derive_seed(seed, episode));
        episode += 1;
        while rows.len() < n {
            rows.push(obs.clone());
            let action: Vec<f64> = (0..act_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let step = env.step(&action).unwrap();
            if step.done {
                break;
            }
            obs = step.obs;
        }
    }
    let dim = rows[0].len();
    Array2::from_shape_fn((n, dim), |(r, c)| rows[r][c])
}

/// Tally of one side of the break-even line.
#[derive(Default)]
struct Side {
    below: usize,
    above: usize,
}

/// Spiking actors whose hidden biases are shifted to sweep firing rates
/// from silent to saturated, at several T. Each must be cheaper than the
/// dense network exactly when it fires below the break-even rate. Returns
/// the tallies at T=1 and at larger T.
fn energy_sweep(costs: &OpCosts) -> Result<(Side, Side), String> {
    let spec = make_env("planar_pick").unwrap().spec().clone();
    let obs = planar_pick_observations(200, 3);
    let (mut single, mut longer) = (Side::default(), Side::default());
    for timesteps in [1, 3, 5] {
        for seed in 0..4u64 {
            for shift in [-2.0, -0.5, 0.0, 0.25, 0.5, 1.0, 3.0] {
                let mut arch = popsan::popsan::PopSanArch::new(spec.obs_dim, spec.act_dim);
                arch.timesteps = timesteps;
                arch.hidden_sizes = vec![64, 64];
                let mut p =
                    init_popsan(&arch, &spec.obs_ranges, seed).map_err(|e| e.to_string())?;
                for layer in &mut p.layers {
                    layer.biases.mapv_inplace(|b| b + shift);
                }
                let widths: Vec<usize> = std::iter::once(spec.obs_dim)
                    .chain(p.hidden_sizes())
                    .chain(std::iter::once(spec.act_dim))
                    .collect();
                let baseline = total_energy(&count_ann_flops(&widths).unwrap(), costs);
                let trace = forward(&p, obs.view()).map_err(|e| e.to_string())?;
                let profiles = count_snn_ops(&p, &trace).map_err(|e| e.to_string())?;
                let snn = total_energy(&profiles, costs);
                let rate = weighted_firing_rate(&p, &profiles);
                let even = break_even_rate(&p, baseline, costs);
                let tag = format!(
                    "T={timesteps}, seed {seed}, bias shift {shift}: rate {rate:.4}, break-even {even:.4}"
                );
                let side = if timesteps == 1 {
                    &mut single
                } else {
                    &mut longer
                };
                if rate < even {
                    ensure(snn < baseline, || {
                        format!("{tag}: {snn} pJ not below {baseline} pJ")
                    })?;
                    side.below += 1;
                } else {
                    ensure(snn >= baseline, || {
                        format!("{tag}: {snn} pJ below {baseline} pJ")
                    })?;
                    side.above += 1;
                }
            }
        }
    }
    Ok((single, longer))
}

fn event_driven_energy() -> Result<String, String> {
    let costs = OpCosts::default();
    let (single, longer) = energy_sweep(&costs)?;
    ensure(single.below > 0, || {
        "no T=1 actor fired below break-even".into()
    })?;
    // the rule is only tested if some actors land on the expensive side
    ensure(longer.below > 0 && longer.above > 0, || {
        format!(
            "sweep did not cross break-even ({} below, {} above)",
            longer.below, longer.above
        )
    })?;

    // the report itself, for an actor trained briefly on planar_pick
    let tmp = TempDir::new().map_err(|e| e.to_string())?;
    let mut config = short_run("planar_pick", ActorKind::Spiking, &tmp.path().join("run"));
    config.hidden_sizes = vec![64, 64];
    config.pop_size = 10;
    let summary = train(&config, None).map_err(|e| e.to_string())?;
    let started = Instant::now();
    let (report, _) = energy(&EnergyArgs {
        checkpoint: summary.final_checkpoint,
        env: None,
        observations: Observations::Rollouts {
            samples: 1000,
            seed: 0,
        },
        baseline_hidden: None,
        timesteps: Some(1),
        costs,
        out: None,
    })
    .map_err(|e| e.to_string())?;
    let took = within(Duration::from_secs(5), started)?;
    let rate = report
        .weighted_firing_rate
        .ok_or("no firing rate in the report")?;
    let even = report
        .break_even_rate
        .ok_or("no break-even rate in the report")?;
    let (snn, ann) = (report.total_energy_pj, report.baseline.total_energy_pj);
    ensure((rate < even) == (snn < ann), || {
        format!("rate {rate:.4}, break-even {even:.4}, but {snn:.1} pJ vs {ann:.1} pJ")
    })?;
    ensure(rate < even, || {
        format!("trained actor fires at {rate:.4}, above break-even {even:.4}")
    })?;
    Ok(format!(
        "swept actors cheaper exactly below break-even (T=1: {} below, {} above; \
         T=3,5: {} below, {} above); trained actor at T=1: rate {rate:.3} < {even:.3}, {:.2} vs {:.2} (1e-6 mJ), report in {:.2}s",
        single.below,
        single.above,
        longer.below,
        longer.above,
        snn * 1e-3,
        ann * 1e-3,
        took.as_secs_f64()
    ))
}

// 8 ------------------------------------------------------------------------

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files_under(&path));
        } else {
            out.push(path);
        }
    }
    out
}

fn popsan_in(cwd: &Path, args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_popsan"))
        .current_dir(cwd)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.success(), || {
        format!(
            "popsan {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&o.stderr)
        )
    })
}

/// The run-directory invariants, exercised through the binary with
/// relative paths from a scratch working directory.
fn cli_invariants() -> Result<(), String> {
    let tmp = TempDir::new().map_err(|e| e.to_string())?;
    let cwd = tmp.path();
    let text =
        "env = planar_pick\nhidden_sizes = 8\npop_size = 3\ntimesteps = 2\ncritic_hidden = 8\n\
                batch_size = 8\nstart_steps = 20\nmax_env_steps = 120\neval_interval = 60\n\
                eval_episodes = 1\nlog_interval = 10\ncheckpoint_interval = 50\n";
    fs::write(cwd.join("run.cfg"), text).map_err(|e| e.to_string())?;
    popsan_in(
        cwd,
        &[
            "train",
            "--config",
            "run.cfg",
            "--out-dir",
            "run",
            "--set",
            "seed=5",
        ],
    )?;
    popsan_in(cwd, &["eval", "run/final.psan", "--episodes", "2"])?;
    popsan_in(
        cwd,
        &[
            "energy",
            "run/final.psan",
            "--samples",
            "50",
            "--timesteps",
            "1",
        ],
    )?;
    popsan_in(cwd, &["inspect", "run/final.psan"])?;
    for file in files_under(cwd) {
        let rel = file.strip_prefix(cwd).unwrap();
        ensure(
            rel == Path::new("run.cfg") || rel.starts_with("run"),
            || format!("wrote {} outside the output directory", rel.display()),
        )?;
    }
    // the saved config alone reproduces the run
    popsan_in(
        cwd,
        &["train", "--config", "run/config.txt", "--out-dir", "again"],
    )?;
    let a = fs::read(cwd.join("run").join(METRICS_FILE)).map_err(|e| e.to_string())?;
    let b = fs::read(cwd.join("again").join(METRICS_FILE)).map_err(|e| e.to_string())?;
    ensure(!a.is_empty() && a == b, || {
        "rerun from config.txt diverged".into()
    })
}

fn property_suites() -> Result<String, String> {
    let mut checks = properties::all();
    checks.push(("cli: run directory invariants", || {
        cli_invariants().unwrap()
    }));
    let total = checks.len();
    let mut failed = Vec::new();
    for (name, check) in checks {
        let started = Instant::now();
        let result = guarded(check);
        let mark = if result.is_ok() { "ok" } else { "FAILED" };
        println!(
            "    {mark:<6} {name} ({:.2}s)",
            started.elapsed().as_secs_f64()
        );
        if let Err(msg) = result {
            failed.push(format!("{name}: {msg}"));
        }
    }
    ensure(failed.is_empty(), || failed.join("; "))?;
    Ok(format!("{total} invariants hold"))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, Check); 8] = [
        (1, "energy table savings", energy_table),
        (2, "BPTT oracle equivalence", bptt_oracle),
        (3, "finite differences", finite_differences),
        (4, "scalar hand trace", scalar_trace),
        (5, "desk-scale learning", desk_learning),
        (6, "determinism", determinism),
        (7, "event-driven energy", event_driven_energy),
        (8, "property suites", property_suites),
    ];
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    // keep panic messages out of the report; they are folded into FAIL lines
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (n, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let result = guarded(check).and_then(|r| r);
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {n} {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failures += 1;
                println!("FAIL {n} {name} ({secs:.1}s): {why}");
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
