//! Analytic BPTT against reverse-mode differentiation of the explicitly
//! unrolled computation graph. The graph treats the threshold as a primitive
//! whose derivative is the rectangular surrogate and the encoder spike
//! generator as the identity (straight-through).

use crate::tape::{max_rel_err, rel_err, Tape, Var};
use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView2};
use popsan::popsan::{backward, forward, init_popsan, PopSanArch, PopSanGrads, PopSanParams};
use popsan::snn::{lif_backward, lif_step, rect_surrogate, LayerParams, LayerState, LifConfig};
use popsan::Parameters;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-10;
/// Denominator floor of the relative error; gradients are O(1).
const FLOOR: f64 = 1e-9;

fn random_lif(rng: &mut ChaCha8Rng) -> LifConfig {
    LifConfig::new(
        rng.random_range(0.0..=1.0),
        rng.random_range(0.0..=1.0),
        rng.random_range(0.2..1.0),
        rng.random_range(0.2..1.2),
    )
    .unwrap()
}

fn random_layer(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> LayerParams {
    let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-1.5..1.5));
    let b = Array1::from_shape_fn(fan_out, |_| rng.random_range(-0.3..0.8));
    LayerParams::new(w, b).unwrap()
}

/// Leaves for one layer's parameters on the tape.
struct LayerVars {
    w: Vec<Vec<Var>>,
    b: Vec<Var>,
}

fn layer_vars(tape: &mut Tape, p: &LayerParams) -> LayerVars {
    LayerVars {
        w: (0..p.fan_out())
            .map(|n| {
                (0..p.fan_in())
                    .map(|m| tape.leaf(p.weights[[n, m]]))
                    .collect()
            })
            .collect(),
        b: (0..p.fan_out()).map(|n| tape.leaf(p.biases[n])).collect(),
    }
}

/// Unrolled LIF layer for one sample; returns spikes of every timestep.
fn oracle_layer(
    tape: &mut Tape,
    cfg: &LifConfig,
    p: &LayerVars,
    inputs: &[Vec<Var>],
) -> Vec<Vec<Var>> {
    let width = p.b.len();
    let zero = tape.leaf(0.0);
    let one = tape.leaf(1.0);
    let (mut c, mut v, mut o) = (vec![zero; width], vec![zero; width], vec![zero; width]);
    let mut out = Vec::new();
    for x in inputs {
        for n in 0..width {
            let mut terms: Vec<Var> = x
                .iter()
                .zip(&p.w[n])
                .map(|(&xi, &wi)| tape.mul(wi, xi))
                .collect();
            terms.push(p.b[n]);
            let drive = tape.sum(&terms);
            let leak = tape.scale(c[n], cfg.current_decay);
            c[n] = tape.add(leak, drive);
            let gate = tape.sub(one, o[n]);
            let kept = tape.mul(v[n], gate);
            let kept = tape.scale(kept, cfg.voltage_decay);
            v[n] = tape.add(kept, c[n]);
            let fired = if v[n].val >= cfg.threshold { 1.0 } else { 0.0 };
            o[n] = tape.custom(fired, v[n], rect_surrogate(v[n].val, cfg));
        }
        out.push(o.clone());
    }
    out
}

/// Random stacks of up to four layers of width up to four over up to four
/// timesteps. Panics on the first mismatch; returns the largest relative
/// error seen.
pub fn lif_stack_matches_unrolled_oracle(seeds: Range<u64>) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = random_lif(&mut rng);
        let depth = rng.random_range(1..=4usize);
        let steps = rng.random_range(1..=4usize);
        let batch = rng.random_range(1..=2usize);
        let widths: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=4usize)).collect();
        let layers: Vec<LayerParams> = (0..depth)
            .map(|k| random_layer(&mut rng, widths[k], widths[k + 1]))
            .collect();
        let inputs: Vec<Array2<f64>> = (0..steps)
            .map(|_| {
                Array2::from_shape_fn((batch, widths[0]), |_| {
                    if rng.random_bool(0.5) {
                        1.0
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        let upstream: Vec<Array2<f64>> = (0..steps)
            .map(|_| Array2::from_shape_fn((batch, widths[depth]), |_| rng.random_range(-1.0..1.0)))
            .collect();

        // library forward
        let mut history: Vec<Vec<LayerState>> = Vec::new();
        for (k, p) in layers.iter().enumerate() {
            let mut state = LayerState::zeros(batch, p.fan_out());
            let mut hist = Vec::new();
            for t in 0..steps {
                let input = if k == 0 {
                    inputs[t].view()
                } else {
                    history[k - 1][t].spikes.view()
                };
                state = lif_step(&cfg, p, &state, input).unwrap();
                hist.push(state.clone());
            }
            history.push(hist);
        }
        // library backward, top-down
        let mut grads = vec![None; depth];
        let mut g_spk = upstream.clone();
        for k in (0..depth).rev() {
            let ins: Vec<ArrayView2<f64>> = (0..steps)
                .map(|t| {
                    if k == 0 {
                        inputs[t].view()
                    } else {
                        history[k - 1][t].spikes.view()
                    }
                })
                .collect();
            let gs: Vec<ArrayView2<f64>> = g_spk.iter().map(|g| g.view()).collect();
            let back = lif_backward(&cfg, &layers[k], &history[k], &ins, &gs).unwrap();
            g_spk = back.input_grads.clone();
            grads[k] = Some(back.grads);
        }

        // oracle
        let mut tape = Tape::new();
        let vars: Vec<LayerVars> = layers.iter().map(|p| layer_vars(&mut tape, p)).collect();
        let mut input_vars = Vec::new();
        let mut loss_terms = Vec::new();
        for b in 0..batch {
            let xs: Vec<Vec<Var>> = (0..steps)
                .map(|t| {
                    (0..widths[0])
                        .map(|m| tape.leaf(inputs[t][[b, m]]))
                        .collect()
                })
                .collect();
            input_vars.push(xs.clone());
            let mut spikes = xs;
            for (k, lv) in vars.iter().enumerate() {
                spikes = oracle_layer(&mut tape, &cfg, lv, &spikes);
                for (t, row) in spikes.iter().enumerate() {
                    for (n, s) in row.iter().enumerate() {
                        assert_eq!(
                            s.val,
                            history[k][t].spikes[[b, n]],
                            "seed {seed}: forward spikes differ"
                        );
                    }
                }
            }
            for t in 0..steps {
                for n in 0..widths[depth] {
                    let g = tape.leaf(upstream[t][[b, n]]);
                    loss_terms.push(tape.mul(g, spikes[t][n]));
                }
            }
        }
        let loss = tape.sum(&loss_terms);
        let g = tape.gradient(loss);

        for k in 0..depth {
            let lg = grads[k].as_ref().unwrap();
            let ow: Vec<f64> = vars[k].w.iter().flatten().map(|v| g[v.id]).collect();
            let ob: Vec<f64> = vars[k].b.iter().map(|v| g[v.id]).collect();
            worst = worst.max(max_rel_err(lg.weights.as_slice().unwrap(), &ow, FLOOR));
            worst = worst.max(max_rel_err(lg.biases.as_slice().unwrap(), &ob, FLOOR));
        }
        for t in 0..steps {
            for b in 0..batch {
                for m in 0..widths[0] {
                    worst = worst.max(rel_err(g_spk[t][[b, m]], g[input_vars[b][t][m].id], FLOOR));
                }
            }
        }
        assert!(worst <= TOL, "seed {seed}: relative error {worst:e}");
    }
    worst
}

/// Randomises every trainable value of a small network.
fn random_popsan(rng: &mut ChaCha8Rng, hidden: usize, steps: usize) -> PopSanParams {
    let arch = PopSanArch {
        obs_dim: 1,
        act_dim: 1,
        pop_size: 2,
        hidden_sizes: vec![hidden],
        timesteps: steps,
        lif: random_lif(rng),
    };
    let mut p = init_popsan(&arch, &[(-1.0, 1.0)], rng.random()).unwrap();
    p.encoder
        .means
        .mapv_inplace(|_| rng.random_range(-1.0..1.0));
    p.encoder
        .deviations
        .mapv_inplace(|_| rng.random_range(0.3..1.5));
    for k in 0..p.layers.len() {
        let (i, o) = (p.layers[k].fan_in(), p.layers[k].fan_out());
        p.layers[k] = random_layer(rng, i, o);
    }
    p.decoder
        .weights
        .mapv_inplace(|_| rng.random_range(-1.0..1.0));
    p.decoder
        .biases
        .mapv_inplace(|_| rng.random_range(-0.5..0.5));
    p
}

/// Full-network oracle; returns the loss gradient in library field order.
fn oracle_popsan(
    p: &PopSanParams,
    obs: &Array2<f64>,
    g_act: &Array2<f64>,
    actions: &Array2<f64>,
) -> Vec<f64> {
    let steps = p.timesteps;
    let pop = p.pop_size();
    let mut tape = Tape::new();
    let mu: Vec<Vec<Var>> = (0..p.obs_dim())
        .map(|i| {
            (0..pop)
                .map(|j| tape.leaf(p.encoder.means[[i, j]]))
                .collect()
        })
        .collect();
    let sd: Vec<Vec<Var>> = (0..p.obs_dim())
        .map(|i| {
            (0..pop)
                .map(|j| tape.leaf(p.encoder.deviations[[i, j]]))
                .collect()
        })
        .collect();
    let layers: Vec<LayerVars> = p.layers.iter().map(|l| layer_vars(&mut tape, l)).collect();
    let wd: Vec<Vec<Var>> = (0..p.act_dim())
        .map(|i| {
            (0..pop)
                .map(|j| tape.leaf(p.decoder.weights[[i, j]]))
                .collect()
        })
        .collect();
    let bd: Vec<Var> = (0..p.act_dim())
        .map(|i| tape.leaf(p.decoder.biases[i]))
        .collect();

    let mut loss_terms = Vec::new();
    for b in 0..obs.nrows() {
        // encoder: Gaussian field, accumulate-and-fire with soft reset
        let mut columns = Vec::new();
        for i in 0..p.obs_dim() {
            let s = obs[[b, i]].clamp(p.encoder.obs_low[i], p.encoder.obs_high[i]);
            for j in 0..pop {
                let sv = tape.leaf(s);
                let d = tape.sub(sv, mu[i][j]);
                let d2 = tape.mul(d, d);
                let s2 = tape.mul(sd[i][j], sd[i][j]);
                let s2 = tape.scale(s2, 2.0);
                let q = tape.div(d2, s2);
                let q = tape.scale(q, -1.0);
                columns.push(tape.exp(q));
            }
        }
        let mut potentials = vec![0.0; columns.len()];
        let mut spikes: Vec<Vec<Var>> = Vec::new();
        for _ in 0..steps {
            let row = columns
                .iter()
                .zip(potentials.iter_mut())
                .map(|(&a, e)| {
                    *e += a.val;
                    let fired = if *e >= 1.0 {
                        *e -= 1.0;
                        1.0
                    } else {
                        0.0
                    };
                    tape.custom(fired, a, 1.0)
                })
                .collect();
            spikes.push(row);
        }
        for lv in &layers {
            spikes = oracle_layer(&mut tape, &p.lif, lv, &spikes);
        }
        for i in 0..p.act_dim() {
            let mut terms = vec![bd[i]];
            for j in 0..pop {
                let col: Vec<Var> = (0..steps).map(|t| spikes[t][i * pop + j]).collect();
                let count = tape.sum(&col);
                let rate = tape.scale(count, 1.0 / steps as f64);
                terms.push(tape.mul(wd[i][j], rate));
            }
            let a = tape.sum(&terms);
            assert!(
                (a.val - actions[[b, i]]).abs() <= 1e-12 * a.val.abs().max(1.0),
                "forward actions differ"
            );
            let g = tape.leaf(g_act[[b, i]]);
            loss_terms.push(tape.mul(g, a));
        }
    }
    let loss = tape.sum(&loss_terms);
    let g = tape.gradient(loss);
    let mut out: Vec<f64> = mu.iter().flatten().map(|v| g[v.id]).collect();
    out.extend(sd.iter().flatten().map(|v| g[v.id]));
    for lv in &layers {
        out.extend(lv.w.iter().flatten().map(|v| g[v.id]));
        out.extend(lv.b.iter().map(|v| g[v.id]));
    }
    out.extend(wd.iter().flatten().map(|v| g[v.id]));
    out.extend(bd.iter().map(|v| g[v.id]));
    out
}

/// Networks with one observation, a population of two, one hidden layer and
/// one action. `shape` fixes (hidden width, timesteps); otherwise both are
/// drawn from 1..=3 and 1..=4. Panics on the first mismatch or if the encoder
/// path stays silent in too many seeds; returns the largest relative error.
pub fn popsan_backward_matches_unrolled_oracle(
    seeds: Range<u64>,
    shape: Option<(usize, usize)>,
) -> f64 {
    let mut worst: f64 = 0.0;
    let mut active = 0;
    let total = seeds.end - seeds.start;
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (hidden, steps) =
            shape.unwrap_or_else(|| (rng.random_range(1..=3usize), rng.random_range(1..=4usize)));
        let batch = rng.random_range(1..=2usize);
        let p = random_popsan(&mut rng, hidden, steps);
        let obs = Array2::from_shape_fn((batch, 1), |_| rng.random_range(-1.2..1.2));
        let g_act = Array2::from_shape_fn((batch, 1), |_| rng.random_range(-2.0..2.0));
        let trace = forward(&p, obs.view()).unwrap();
        let grads: PopSanGrads = backward(&p, &trace, g_act.view()).unwrap();
        let oracle = oracle_popsan(&p, &obs, &g_act, &trace.actions);
        let lib = grads.flatten();
        if lib[..4].iter().any(|&x| x != 0.0) {
            active += 1;
        }
        let err = max_rel_err(&lib, &oracle, FLOOR);
        assert!(
            err <= TOL,
            "seed {seed}: relative error {err:e}\nlibrary {lib:?}\noracle  {oracle:?}"
        );
        worst = worst.max(err);
    }
    // the encoder path must actually carry gradient in a good share of cases
    assert!(
        4 * active >= total,
        "only {active} of {total} seeds reached the encoder"
    );
    worst
}
