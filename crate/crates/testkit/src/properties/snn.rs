use ndarray::{Array1, Array2, ArrayView2};
use popsan::snn::{lif_backward, lif_step, LayerParams, LayerState, LifConfig};
use proptest::prelude::*;

fn lif_config() -> impl Strategy<Value = LifConfig> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.05..2.0f64, 0.05..2.0f64)
        .prop_map(|(dc, dv, th, w)| LifConfig::new(dc, dv, th, w).unwrap())
}

/// Weights, biases and an input spike history for a layer of random shape.
fn layer_case() -> impl Strategy<Value = (LayerParams, Vec<Array2<f64>>)> {
    (1..5usize, 1..5usize, 1..3usize, 1..6usize).prop_flat_map(|(fan_in, fan_out, batch, steps)| {
        (
            prop::collection::vec(-2.0..2.0f64, fan_in * fan_out),
            prop::collection::vec(-1.0..1.0f64, fan_out),
            prop::collection::vec(
                prop::collection::vec(prop::bool::ANY, batch * fan_in),
                steps,
            ),
        )
            .prop_map(move |(w, b, spikes)| {
                let params = LayerParams::new(
                    Array2::from_shape_vec((fan_out, fan_in), w).unwrap(),
                    Array1::from(b),
                )
                .unwrap();
                let inputs = spikes
                    .into_iter()
                    .map(|s| {
                        Array2::from_shape_vec(
                            (batch, fan_in),
                            s.into_iter().map(f64::from).collect(),
                        )
                        .unwrap()
                    })
                    .collect();
                (params, inputs)
            })
    })
}

fn run(cfg: &LifConfig, params: &LayerParams, inputs: &[Array2<f64>]) -> Vec<LayerState> {
    let mut state = LayerState::zeros(inputs[0].nrows(), params.fan_out());
    inputs
        .iter()
        .map(|x| {
            state = lif_step(cfg, params, &state, x.view()).unwrap();
            state.clone()
        })
        .collect()
}

pub fn spikes_are_binary_and_mark_threshold_crossings() {
    proptest!(|(cfg in lif_config(), (params, inputs) in layer_case())| {
        for s in run(&cfg, &params, &inputs) {
            for (&o, &v) in s.spikes.iter().zip(&s.voltage) {
                prop_assert!(o == 0.0 || o == 1.0);
                prop_assert_eq!(o == 1.0, v >= cfg.threshold);
            }
        }
    });
}

pub fn simulation_is_deterministic() {
    proptest!(|(cfg in lif_config(), (params, inputs) in layer_case())| {
        prop_assert_eq!(run(&cfg, &params, &inputs), run(&cfg, &params, &inputs));
    });
}

pub fn current_decays_without_drive() {
    proptest!(|(cfg in lif_config(), (params, inputs) in layer_case())| {
        // warm up with input, then remove all drive
        let mut state = run(&cfg, &params, &inputs).pop().unwrap();
        let silent = LayerParams::new(params.weights.clone(), Array1::zeros(params.fan_out())).unwrap();
        let zeros = Array2::zeros(inputs[0].dim());
        for _ in 0..4 {
            let next = lif_step(&cfg, &silent, &state, zeros.view()).unwrap();
            for (&c1, &c0) in next.current.iter().zip(&state.current) {
                prop_assert!(c1.abs() <= cfg.current_decay * c0.abs());
            }
            state = next;
        }
    });
}

pub fn weight_gradient_is_sum_of_per_step_outer_products() {
    proptest!(|(cfg in lif_config(), (params, inputs) in layer_case(), seed in 0..1000u64)| {
        let states = run(&cfg, &params, &inputs);
        let upstream: Vec<Array2<f64>> = (0..inputs.len())
            .map(|t| Array2::from_shape_fn(states[0].spikes.dim(), |(b, n)| {
                ((seed + 31 * t as u64 + 7 * b as u64 + 3 * n as u64) % 17) as f64 / 8.0 - 1.0
            }))
            .collect();
        let ins: Vec<ArrayView2<f64>> = inputs.iter().map(|x| x.view()).collect();
        let gs: Vec<ArrayView2<f64>> = upstream.iter().map(|x| x.view()).collect();
        let back = lif_backward(&cfg, &params, &states, &ins, &gs).unwrap();
        let mut gw = Array2::<f64>::zeros(params.weights.dim());
        let mut gb = Array1::<f64>::zeros(params.fan_out());
        for (t, gc) in back.current_grads.iter().enumerate() {
            for b in 0..gc.nrows() {
                for n in 0..gc.ncols() {
                    gb[n] += gc[[b, n]];
                    for m in 0..params.fan_in() {
                        gw[[n, m]] += gc[[b, n]] * inputs[t][[b, m]];
                    }
                }
            }
        }
        for (a, e) in back.grads.weights.iter().zip(&gw) {
            prop_assert!((a - e).abs() <= 1e-12 * e.abs().max(1.0));
        }
        for (a, e) in back.grads.biases.iter().zip(&gb) {
            prop_assert!((a - e).abs() <= 1e-12 * e.abs().max(1.0));
        }
    });
}
