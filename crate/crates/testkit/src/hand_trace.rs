//! A two-step, single-neuron forward pass worked out by hand. All constants
//! are dyadic, so every intermediate value is exact in binary floating point.
//!
//! obs = mu = 0, sigma = 1: A = 1, encoder spikes X = [1, 1].
//! W = 0.25, b = 0.125, default LIF (d_c = 0.5, d_v = 0.75, v_th = 0.5):
//!   t = 1: c = 0.375,                  v = 0.375,              o = 0
//!   t = 2: c = 0.1875 + 0.375 = 0.5625, v = 0.28125 + 0.5625 = 0.84375, o = 1
//! sc = 1, fr = 0.5, a = 2 * 0.5 + 0.25 = 1.25.

use ndarray::array;
use popsan::popsan::{forward, DecoderParams, EncoderParams, PopSanParams};
use popsan::snn::{LayerParams, LifConfig};

pub fn scalar_network_two_steps() {
    let params = PopSanParams {
        encoder: EncoderParams {
            means: array![[0.0]],
            deviations: array![[1.0]],
            obs_low: array![-1.0],
            obs_high: array![1.0],
        },
        layers: vec![LayerParams::new(array![[0.25]], array![0.125]).unwrap()],
        decoder: DecoderParams {
            weights: array![[2.0]],
            biases: array![0.25],
        },
        lif: LifConfig::default(),
        timesteps: 2,
    };
    let trace = forward(&params, array![[0.0]].view()).unwrap();
    assert_eq!(trace.encoder.activation, array![[1.0]]);
    assert_eq!(trace.encoder.spikes, vec![array![[1.0]], array![[1.0]]]);
    let layer = &trace.layers[0];
    let seen: Vec<(f64, f64, f64)> = layer
        .iter()
        .map(|s| (s.current[[0, 0]], s.voltage[[0, 0]], s.spikes[[0, 0]]))
        .collect();
    assert_eq!(seen, vec![(0.375, 0.375, 0.0), (0.5625, 0.84375, 1.0)]);
    assert_eq!(trace.spike_counts, array![[1.0]]);
    assert_eq!(trace.firing_rates, array![[0.5]]);
    assert_eq!(trace.actions, array![[1.25]]);
}
