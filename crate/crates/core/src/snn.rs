//! Current-based leaky integrate-and-fire layers.
//!
//! One step of a layer with `fan_in` presynaptic and `fan_out` postsynaptic
//! neurons:
//!
//! ```text
//! c' = d_c * c + W * o_in + b
//! v' = d_v * v * (1 - o) + c'
//! o' = [v' >= v_th]
//! ```
//!
//! The `(1 - o)` gate implements the hard reset: a neuron that fired on the
//! previous step starts integrating from rest. All state is batch-major, one
//! row per sample, so a single observation is a batch of one.
//!
//! The backward pass ([`lif_backward`]) runs BPTT over the recorded states and
//! substitutes the rectangular window [`rect_surrogate`] for the derivative of
//! the threshold.

use ndarray::{Array1, Array2, ArrayView2, Zip};
use rand::Rng;

use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifConfig {
    pub current_decay: f64,
    pub voltage_decay: f64,
    pub threshold: f64,
    /// Width of the rectangular surrogate window centred on the threshold.
    pub surrogate_width: f64,
}

impl Default for LifConfig {
    fn default() -> Self {
        Self {
            current_decay: 0.5,
            voltage_decay: 0.75,
            threshold: 0.5,
            surrogate_width: 0.5,
        }
    }
}

impl LifConfig {
    pub fn new(
        current_decay: f64,
        voltage_decay: f64,
        threshold: f64,
        surrogate_width: f64,
    ) -> Result<Self> {
        let config = Self {
            current_decay,
            voltage_decay,
            threshold,
            surrogate_width,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            (0.0..=1.0).contains(&self.current_decay),
            "current decay must lie in [0, 1], got {}",
            self.current_decay
        );
        ensure!(
            (0.0..=1.0).contains(&self.voltage_decay),
            "voltage decay must lie in [0, 1], got {}",
            self.voltage_decay
        );
        ensure!(
            self.threshold > 0.0 && self.threshold.is_finite(),
            "threshold must be positive"
        );
        ensure!(
            self.surrogate_width > 0.0 && self.surrogate_width.is_finite(),
            "surrogate width must be positive"
        );
        Ok(())
    }
}

/// Weights `[fan_out x fan_in]` and biases `[fan_out]` of a fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl LayerParams {
    pub fn new(weights: Array2<f64>, biases: Array1<f64>) -> Result<Self> {
        let p = Self { weights, biases };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_out, fan_in)),
            biases: Array1::zeros(fan_out),
        }
    }

    /// Zero biases, weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weights =
            Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..=bound));
        Self {
            weights,
            biases: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.biases.len() == self.fan_out(),
            "bias length {} does not match fan_out {}",
            self.biases.len(),
            self.fan_out()
        );
        ensure!(
            self.weights
                .iter()
                .chain(self.biases.iter())
                .all(|x| x.is_finite()),
            "layer parameters contain non-finite entries"
        );
        Ok(())
    }

    /// `x * W^T + b` for a batch of row inputs.
    pub(crate) fn affine(&self, input: ArrayView2<f64>) -> Array2<f64> {
        let mut out = input.dot(&self.weights.t());
        out += &self.biases;
        out
    }
}

/// Per-layer state at one timestep, one row per batch sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub current: Array2<f64>,
    pub voltage: Array2<f64>,
    pub spikes: Array2<f64>,
}

impl LayerState {
    pub fn zeros(batch: usize, fan_out: usize) -> Self {
        Self {
            current: Array2::zeros((batch, fan_out)),
            voltage: Array2::zeros((batch, fan_out)),
            spikes: Array2::zeros((batch, fan_out)),
        }
    }

    pub fn batch(&self) -> usize {
        self.current.nrows()
    }

    pub fn width(&self) -> usize {
        self.current.ncols()
    }
}

fn is_binary(x: ArrayView2<f64>) -> bool {
    x.iter().all(|&s| s == 0.0 || s == 1.0)
}

/// Advances one layer by one timestep. `prev` is left untouched.
pub fn lif_step(
    config: &LifConfig,
    params: &LayerParams,
    prev: &LayerState,
    input_spikes: ArrayView2<f64>,
) -> Result<LayerState> {
    ensure!(
        prev.width() == params.fan_out()
            && prev.voltage.dim() == prev.current.dim()
            && prev.spikes.dim() == prev.current.dim(),
        "layer state width {} does not match fan_out {}",
        prev.width(),
        params.fan_out()
    );
    ensure!(
        input_spikes.ncols() == params.fan_in() && input_spikes.nrows() == prev.batch(),
        "input spikes have shape {:?}, expected ({}, {})",
        input_spikes.dim(),
        prev.batch(),
        params.fan_in()
    );
    ensure!(is_binary(input_spikes), "input spikes must be 0 or 1");
    Ok(step_unchecked(config, params, prev, input_spikes))
}

pub(crate) fn step_unchecked(
    config: &LifConfig,
    params: &LayerParams,
    prev: &LayerState,
    input_spikes: ArrayView2<f64>,
) -> LayerState {
    let mut current = params.affine(input_spikes);
    current.scaled_add(config.current_decay, &prev.current);

    let mut voltage = current.clone();
    let dv = config.voltage_decay;
    Zip::from(&mut voltage)
        .and(&prev.voltage)
        .and(&prev.spikes)
        .for_each(|v, &pv, &po| {
            *v += dv * pv * (1.0 - po);
        });

    let th = config.threshold;
    let spikes = voltage.mapv(|v| if v >= th { 1.0 } else { 0.0 });
    LayerState {
        current,
        voltage,
        spikes,
    }
}

/// Pseudo-derivative of the threshold: `1/w` inside the closed window
/// `|v - v_th| <= w/2`, zero elsewhere.
pub fn rect_surrogate(voltage: f64, config: &LifConfig) -> f64 {
    let w = config.surrogate_width;
    if (voltage - config.threshold).abs() <= 0.5 * w {
        1.0 / w
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl LayerGrads {
    pub fn zeros_like(params: &LayerParams) -> Self {
        Self {
            weights: Array2::zeros(params.weights.dim()),
            biases: Array1::zeros(params.biases.len()),
        }
    }
}

/// Result of [`lif_backward`].
#[derive(Debug, Clone)]
pub struct LayerBackward {
    pub grads: LayerGrads,
    /// `dL/dc^(t)` for every timestep, `[batch x fan_out]` each.
    pub current_grads: Vec<Array2<f64>>,
    /// `dL/do_in^(t)`, the gradient handed to the presynaptic layer.
    pub input_grads: Vec<Array2<f64>>,
}

/// BPTT through one LIF layer.
///
/// `states[t]` and `inputs[t]` are the post-step state and presynaptic spikes
/// at timestep `t`; `spike_grads[t]` is `dL/do^(t)` arriving from the layer
/// above (or the decoder). Gradients are summed over the batch.
pub fn lif_backward(
    config: &LifConfig,
    params: &LayerParams,
    states: &[LayerState],
    inputs: &[ArrayView2<f64>],
    spike_grads: &[ArrayView2<f64>],
) -> Result<LayerBackward> {
    let steps = states.len();
    ensure!(steps > 0, "empty state history");
    ensure!(
        inputs.len() == steps && spike_grads.len() == steps,
        "history lengths differ: {} states, {} inputs, {} spike gradients",
        steps,
        inputs.len(),
        spike_grads.len()
    );
    let batch = states[0].batch();
    for t in 0..steps {
        ensure!(
            states[t].current.dim() == (batch, params.fan_out())
                && states[t].voltage.dim() == (batch, params.fan_out())
                && states[t].spikes.dim() == (batch, params.fan_out()),
            "state at t={t} has the wrong shape"
        );
        ensure!(
            inputs[t].dim() == (batch, params.fan_in()),
            "input at t={t} has the wrong shape"
        );
        ensure!(
            spike_grads[t].dim() == (batch, params.fan_out()),
            "spike gradient at t={t} has the wrong shape"
        );
    }

    let dc = config.current_decay;
    let dv = config.voltage_decay;
    let mut grads = LayerGrads::zeros_like(params);
    let mut current_grads = vec![Array2::zeros((0, 0)); steps];
    let mut input_grads = vec![Array2::zeros((0, 0)); steps];

    // g_v^(T+1) = g_c^(T+1) = 0
    let mut gv_next: Array2<f64> = Array2::zeros((batch, params.fan_out()));
    let mut gc_next: Array2<f64> = Array2::zeros((batch, params.fan_out()));

    for t in (0..steps).rev() {
        let st = &states[t];
        let mut gv = Array2::zeros((batch, params.fan_out()));
        Zip::from(&mut gv)
            .and(&spike_grads[t])
            .and(&st.voltage)
            .and(&st.spikes)
            .and(&gv_next)
            .for_each(|gv, &gs, &v, &o, &gvn| {
                // v^(t+1) depends on o^(t) through the reset gate.
                let go = gs - dv * v * gvn;
                *gv = go * rect_surrogate(v, config) + dv * (1.0 - o) * gvn;
            });
        let mut gc = gv.clone();
        gc.scaled_add(dc, &gc_next);

        ndarray::linalg::general_mat_mul(1.0, &gc.t(), &inputs[t], 1.0, &mut grads.weights);
        grads.biases += &gc.sum_axis(ndarray::Axis(0));
        input_grads[t] = gc.dot(&params.weights);

        gv_next = gv;
        current_grads[t] = gc.clone();
        gc_next = gc;
    }

    Ok(LayerBackward {
        grads,
        current_grads,
        input_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar_layer(w: f64, b: f64) -> LayerParams {
        LayerParams::new(array![[w]], array![b]).unwrap()
    }

    #[test]
    fn step_from_rest_fires() {
        let cfg = LifConfig::default();
        let p = scalar_layer(0.0, 1.0);
        let s = lif_step(&cfg, &p, &LayerState::zeros(1, 1), array![[1.0]].view()).unwrap();
        assert_eq!(s.current[[0, 0]], 1.0);
        assert_eq!(s.voltage[[0, 0]], 1.0);
        assert_eq!(s.spikes[[0, 0]], 1.0);
    }

    #[test]
    fn step_after_spike_resets_voltage() {
        let cfg = LifConfig::default();
        let p = scalar_layer(0.0, 0.0);
        let prev = LayerState {
            current: array![[1.0]],
            voltage: array![[1.0]],
            spikes: array![[1.0]],
        };
        let s = lif_step(&cfg, &p, &prev, array![[0.0]].view()).unwrap();
        assert_eq!(s.current[[0, 0]], 0.5);
        assert_eq!(s.voltage[[0, 0]], 0.5);
        assert_eq!(s.spikes[[0, 0]], 1.0);
        // prev untouched
        assert_eq!(prev.current[[0, 0]], 1.0);
    }

    #[test]
    fn zero_parameters_stay_at_rest() {
        let cfg = LifConfig::new(0.3, 0.9, 0.2, 0.1).unwrap();
        let p = LayerParams::zeros(3, 2);
        let s = lif_step(
            &cfg,
            &p,
            &LayerState::zeros(1, 2),
            array![[1.0, 0.0, 1.0]].view(),
        )
        .unwrap();
        assert!(s
            .current
            .iter()
            .chain(s.voltage.iter())
            .chain(s.spikes.iter())
            .all(|&x| x == 0.0));
    }

    #[test]
    fn step_rejects_bad_inputs() {
        let cfg = LifConfig::default();
        let p = LayerParams::zeros(2, 1);
        let prev = LayerState::zeros(1, 1);
        assert!(lif_step(&cfg, &p, &prev, array![[0.5, 1.0]].view()).is_err());
        assert!(lif_step(&cfg, &p, &prev, array![[1.0]].view()).is_err());
        assert!(lif_step(
            &cfg,
            &p,
            &LayerState::zeros(1, 3),
            array![[1.0, 0.0]].view()
        )
        .is_err());
    }

    #[test]
    fn config_validation() {
        assert!(LifConfig::new(1.1, 0.5, 0.5, 0.5).is_err());
        assert!(LifConfig::new(0.5, -0.1, 0.5, 0.5).is_err());
        assert!(LifConfig::new(0.5, 0.5, 0.0, 0.5).is_err());
        assert!(LifConfig::new(0.5, 0.5, 0.5, 0.0).is_err());
        assert!(LifConfig::new(0.0, 1.0, 0.1, 0.1).is_ok());
    }

    #[test]
    fn surrogate_window() {
        let cfg = LifConfig::default();
        assert_eq!(rect_surrogate(cfg.threshold, &cfg), 2.0);
        assert_eq!(
            rect_surrogate(cfg.threshold + 10.0 * cfg.surrogate_width, &cfg),
            0.0
        );
        assert_eq!(
            rect_surrogate(cfg.threshold - cfg.surrogate_width / 2.0, &cfg),
            2.0
        );
        assert_eq!(
            rect_surrogate(cfg.threshold + cfg.surrogate_width / 2.0, &cfg),
            2.0
        );
        assert_eq!(rect_surrogate(cfg.threshold + 0.2500001, &cfg), 0.0);
    }

    #[test]
    fn backward_single_step_at_threshold() {
        let cfg = LifConfig::default();
        // W*1 + b = 0.5 = v_th, so v = v_th and the neuron fires.
        let p = scalar_layer(0.25, 0.25);
        let input = array![[1.0]];
        let s = lif_step(&cfg, &p, &LayerState::zeros(1, 1), input.view()).unwrap();
        assert_eq!(s.voltage[[0, 0]], 0.5);
        assert_eq!(s.spikes[[0, 0]], 1.0);
        let g = array![[1.0]];
        let out = lif_backward(&cfg, &p, &[s], &[input.view()], &[g.view()]).unwrap();
        assert_eq!(out.grads.weights[[0, 0]], 2.0);
        assert_eq!(out.grads.biases[0], 2.0);
        assert_eq!(out.input_grads[0][[0, 0]], 0.5);
    }

    #[test]
    fn backward_zero_upstream_is_zero() {
        let cfg = LifConfig::default();
        let p = LayerParams::new(array![[0.4, 0.7], [0.9, -0.2]], array![0.1, 0.3]).unwrap();
        let inputs = [array![[1.0, 0.0]], array![[1.0, 1.0]], array![[0.0, 1.0]]];
        let mut states = Vec::new();
        let mut st = LayerState::zeros(1, 2);
        for x in &inputs {
            st = lif_step(&cfg, &p, &st, x.view()).unwrap();
            states.push(st.clone());
        }
        let zeros = Array2::zeros((1, 2));
        let views: Vec<_> = inputs.iter().map(|x| x.view()).collect();
        let out = lif_backward(
            &cfg,
            &p,
            &states,
            &views,
            &[zeros.view(), zeros.view(), zeros.view()],
        )
        .unwrap();
        assert!(out.grads.weights.iter().all(|&x| x == 0.0));
        assert!(out.grads.biases.iter().all(|&x| x == 0.0));
        assert!(out.input_grads.iter().all(|g| g.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn backward_rejects_inconsistent_history() {
        let cfg = LifConfig::default();
        let p = LayerParams::zeros(1, 1);
        let s = LayerState::zeros(1, 1);
        let x = array![[1.0]];
        let g = array![[1.0]];
        assert!(lif_backward(&cfg, &p, &[s.clone(), s.clone()], &[x.view()], &[g.view()]).is_err());
        assert!(lif_backward(&cfg, &p, &[], &[], &[]).is_err());
        let wide = array![[1.0, 2.0]];
        assert!(lif_backward(&cfg, &p, &[s], &[x.view()], &[wide.view()]).is_err());
    }
}
