//! Gradients along the continuous paths of each model against central
//! differences of the corresponding loss.

use crate::tape::max_rel_err;
use ndarray::{Array1, Array2, ArrayView2};
use popsan::popsan::{backward, forward, init_popsan, receptive_field, PopSanArch, PopSanParams};
use popsan::snn::lif_backward;
use popsan::td3::{critic_backward, critic_forward, init_critic};
use popsan::Parameters;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn network(seed: u64) -> PopSanParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut arch = PopSanArch::new(3, 2);
    arch.pop_size = 4;
    arch.hidden_sizes = vec![6];
    arch.timesteps = 4;
    let mut p = init_popsan(&arch, &[(-1.0, 1.0); 3], seed).unwrap();
    // stronger drive than the default initialisation so that neurons fire
    for l in &mut p.layers {
        l.weights.mapv_inplace(|w| 3.0 * w);
        l.biases.mapv_inplace(|_| rng.random_range(0.0..0.6));
    }
    p.decoder
        .biases
        .mapv_inplace(|_| rng.random_range(-0.5..0.5));
    p
}

fn inputs(seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    (
        Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0)),
        Array2::from_shape_fn((5, 2), |_| rng.random_range(-1.0..1.0)),
    )
}

fn action_loss(p: &PopSanParams, obs: &Array2<f64>, g: &Array2<f64>) -> f64 {
    (&forward(p, obs.view()).unwrap().actions * g).sum()
}

/// Returns the largest relative error over five seeds.
pub fn decoder_gradients_match_central_differences() -> f64 {
    let mut worst: f64 = 0.0;
    const H: f64 = 1e-5;
    for seed in 0..5 {
        let p = network(seed);
        let (obs, g) = inputs(seed);
        let trace = forward(&p, obs.view()).unwrap();
        let grads = backward(&p, &trace, g.view()).unwrap();
        let mut numeric = Vec::new();
        for idx in 0..p.decoder.weights.len() + p.decoder.biases.len() {
            let mut plus = p.clone();
            let mut minus = p.clone();
            let nw = p.decoder.weights.len();
            if idx < nw {
                plus.decoder.weights.as_slice_mut().unwrap()[idx] += H;
                minus.decoder.weights.as_slice_mut().unwrap()[idx] -= H;
            } else {
                plus.decoder.biases[idx - nw] += H;
                minus.decoder.biases[idx - nw] -= H;
            }
            // the spike trains do not depend on the decoder
            assert_eq!(
                forward(&plus, obs.view()).unwrap().spike_counts,
                trace.spike_counts
            );
            numeric
                .push((action_loss(&plus, &obs, &g) - action_loss(&minus, &obs, &g)) / (2.0 * H));
        }
        let mut analytic = grads.decoder_weights.as_slice().unwrap().to_vec();
        analytic.extend(grads.decoder_biases.iter());
        let err = max_rel_err(&analytic, &numeric, 1e-8);
        assert!(err < 1e-5, "seed {seed}: decoder relative error {err:e}");
        worst = worst.max(err);
    }
    worst
}

/// `sum_t dL/dX^(t)` for every encoder neuron, obtained by running the
/// spiking layers' BPTT from the decoder downwards.
fn encoder_spike_grads(p: &PopSanParams, obs: &Array2<f64>, g: &Array2<f64>) -> Array2<f64> {
    let trace = forward(p, obs.view()).unwrap();
    let steps = p.timesteps;
    let pop = p.pop_size();
    let mut top = Array2::zeros((obs.nrows(), p.act_dim() * pop));
    for b in 0..obs.nrows() {
        for i in 0..p.act_dim() {
            for j in 0..pop {
                top[[b, i * pop + j]] = g[[b, i]] * p.decoder.weights[[i, j]] / steps as f64;
            }
        }
    }
    let mut upstream = vec![top; steps];
    for k in (0..p.layers.len()).rev() {
        let ins: Vec<ArrayView2<f64>> = (0..steps).map(|t| trace.layer_input(k, t)).collect();
        let gs: Vec<ArrayView2<f64>> = upstream.iter().map(|x| x.view()).collect();
        upstream = lif_backward(&p.lif, &p.layers[k], &trace.layers[k], &ins, &gs)
            .unwrap()
            .input_grads;
    }
    upstream
        .iter()
        .fold(Array2::zeros(upstream[0].dim()), |acc, x| acc + x)
}

/// Loss with spike decisions frozen: each encoder neuron contributes its
/// accumulated spike gradient times its recomputed receptive-field value.
fn frozen_encoder_loss(p: &PopSanParams, obs: &Array2<f64>, gx: &Array2<f64>) -> f64 {
    let pop = p.pop_size();
    let mut total = 0.0;
    for b in 0..obs.nrows() {
        for i in 0..p.obs_dim() {
            let s = obs[[b, i]].clamp(p.encoder.obs_low[i], p.encoder.obs_high[i]);
            for j in 0..pop {
                let a = receptive_field(s, p.encoder.means[[i, j]], p.encoder.deviations[[i, j]]);
                total += gx[[b, i * pop + j]] * a;
            }
        }
    }
    total
}

pub fn encoder_gradients_match_central_differences() -> f64 {
    const H: f64 = 1e-6;
    let mut worst: f64 = 0.0;
    let mut nonzero = 0;
    for seed in 0..5 {
        let p = network(seed);
        let (obs, g) = inputs(seed);
        let trace = forward(&p, obs.view()).unwrap();
        let grads = backward(&p, &trace, g.view()).unwrap();
        let gx = encoder_spike_grads(&p, &obs, &g);
        let n = p.encoder.means.len();
        let mut numeric = Vec::new();
        for idx in 0..2 * n {
            let mut plus = p.clone();
            let mut minus = p.clone();
            let (pm, mm) = if idx < n {
                (&mut plus.encoder.means, &mut minus.encoder.means)
            } else {
                (&mut plus.encoder.deviations, &mut minus.encoder.deviations)
            };
            pm.as_slice_mut().unwrap()[idx % n] += H;
            mm.as_slice_mut().unwrap()[idx % n] -= H;
            numeric.push(
                (frozen_encoder_loss(&plus, &obs, &gx) - frozen_encoder_loss(&minus, &obs, &gx))
                    / (2.0 * H),
            );
        }
        let mut analytic = grads.means.as_slice().unwrap().to_vec();
        analytic.extend(grads.deviations.iter());
        nonzero += analytic.iter().filter(|x| x.abs() > 1e-6).count();
        let err = max_rel_err(&analytic, &numeric, 1e-6);
        assert!(
            err < 1e-5,
            "seed {seed}: encoder relative error {err:e}\n{analytic:?}\n{numeric:?}"
        );
        worst = worst.max(err);
    }
    assert!(
        nonzero > 20,
        "encoder gradients are almost all zero ({nonzero})"
    );
    worst
}

pub fn critic_gradients_match_finite_differences() -> f64 {
    let mut worst: f64 = 0.0;
    let x_in = |obs: &Array2<f64>, act: &Array2<f64>| {
        ndarray::concatenate![ndarray::Axis(1), obs.view(), act.view()]
    };
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let critic = init_critic(4, 2, &[16, 16], &mut rng).unwrap();
        let obs = Array2::from_shape_fn((8, 4), |_| rng.random_range(-1.0..1.0));
        let act = Array2::from_shape_fn((8, 2), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(8, |_| rng.random_range(-2.0..2.0));
        let (grads, _) = critic_backward(&critic, obs.view(), act.view(), y.view()).unwrap();
        let loss = |c: &popsan::mlp::Mlp| {
            let q = critic_forward(c, obs.view(), act.view()).unwrap();
            (&q - &y).mapv(|r| r * r).mean().unwrap()
        };
        let pattern = |c: &popsan::mlp::Mlp| -> Vec<bool> {
            let trace = c.forward(x_in(&obs, &act).view()).unwrap();
            trace.inputs[1..]
                .iter()
                .flat_map(|x| x.iter().map(|&v| v > 0.0).collect::<Vec<_>>())
                .collect()
        };
        let base = pattern(&critic);
        // While the rectifier pattern is fixed, the network output is affine
        // in any single parameter and the loss is quadratic, so these
        // three-point stencils have no truncation error. Take the widest step
        // whose stencil stays on the current linear piece.
        let numeric: Vec<f64> = (0..critic.num_scalars())
            .map(|i| {
                let shifted = |delta: f64| {
                    let mut c = critic.clone();
                    c.nudge(i, delta);
                    c
                };
                let f0 = loss(&critic);
                let mut h = 1e-2;
                loop {
                    assert!(h > 1e-9, "parameter {i} sits on a kink");
                    let ok = |ks: &[f64]| ks.iter().all(|&k| pattern(&shifted(k * h)) == base);
                    if ok(&[-1.0, 1.0]) {
                        return (loss(&shifted(h)) - loss(&shifted(-h))) / (2.0 * h);
                    }
                    if ok(&[1.0, 2.0]) {
                        return (-3.0 * f0 + 4.0 * loss(&shifted(h)) - loss(&shifted(2.0 * h)))
                            / (2.0 * h);
                    }
                    if ok(&[-1.0, -2.0]) {
                        return (3.0 * f0 - 4.0 * loss(&shifted(-h)) + loss(&shifted(-2.0 * h)))
                            / (2.0 * h);
                    }
                    h /= 10.0;
                }
            })
            .collect();
        let err = max_rel_err(&grads.flatten(), &numeric, 1e-6);
        assert!(err < 1e-6, "seed {seed}: critic relative error {err:e}");
        worst = worst.max(err);
    }
    worst
}
