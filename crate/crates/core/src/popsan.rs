//! The population-coded spiking actor network.
//!
//! An observation is encoded by `pop_size` Gaussian receptive fields per
//! dimension. Each encoder neuron turns its activation into a deterministic
//! spike train, which drives a stack of LIF layers for `timesteps` steps. The
//! output layer holds one population per action dimension; its firing rates
//! are decoded linearly into the action.
//!
//! Flattened layouts: encoder neuron `(i, j)` (observation dimension `i`,
//! population member `j`) sits at column `i * pop_size + j`; likewise output
//! neuron `j` of action population `i`.

use ndarray::{s, Array1, Array2, ArrayView2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Error, Result};
use crate::optim::Adam;
use crate::params::{Parameters, TensorVisitor};
use crate::snn::{self, LayerGrads, LayerParams, LayerState, LifConfig};

/// Smallest deviation kept after an optimizer step.
pub const MIN_DEVIATION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `[obs_dim x pop_size]`
    pub means: Array2<f64>,
    /// `[obs_dim x pop_size]`, strictly positive.
    pub deviations: Array2<f64>,
    /// Observations are clipped to `[obs_low, obs_high]` before encoding.
    pub obs_low: Array1<f64>,
    pub obs_high: Array1<f64>,
}

impl EncoderParams {
    pub fn obs_dim(&self) -> usize {
        self.means.nrows()
    }

    pub fn pop_size(&self) -> usize {
        self.means.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.means.dim() == self.deviations.dim(),
            "means and deviations differ in shape"
        );
        ensure!(
            self.obs_low.len() == self.obs_dim() && self.obs_high.len() == self.obs_dim(),
            "observation range length does not match obs_dim"
        );
        ensure!(
            self.obs_low
                .iter()
                .zip(&self.obs_high)
                .all(|(lo, hi)| lo.is_finite() && hi.is_finite() && lo < hi),
            "observation ranges must be finite with lo < hi"
        );
        ensure!(
            self.means.iter().all(|x| x.is_finite()),
            "encoder means must be finite"
        );
        ensure!(
            self.deviations.iter().all(|&x| x > 0.0 && x.is_finite()),
            "encoder deviations must be positive"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    /// `[act_dim x pop_size]`
    pub weights: Array2<f64>,
    /// `[act_dim]`
    pub biases: Array1<f64>,
}

impl DecoderParams {
    pub fn act_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn pop_size(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopSanParams {
    pub encoder: EncoderParams,
    pub layers: Vec<LayerParams>,
    pub decoder: DecoderParams,
    pub lif: LifConfig,
    pub timesteps: usize,
}

impl PopSanParams {
    pub fn obs_dim(&self) -> usize {
        self.encoder.obs_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.decoder.act_dim()
    }

    pub fn pop_size(&self) -> usize {
        self.encoder.pop_size()
    }

    /// Widths of the hidden spiking layers (every layer but the last).
    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len().saturating_sub(1)]
            .iter()
            .map(|l| l.fan_out())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.lif.validate()?;
        self.encoder.validate()?;
        ensure!(self.timesteps >= 1, "timesteps must be at least 1");
        ensure!(
            !self.layers.is_empty(),
            "at least one spiking layer is required"
        );
        ensure!(
            self.decoder.pop_size() == self.pop_size(),
            "decoder population size {} differs from encoder population size {}",
            self.decoder.pop_size(),
            self.pop_size()
        );
        ensure!(
            self.decoder.biases.len() == self.act_dim(),
            "decoder bias length mismatch"
        );
        ensure!(
            self.decoder
                .weights
                .iter()
                .chain(self.decoder.biases.iter())
                .all(|x| x.is_finite()),
            "decoder parameters must be finite"
        );
        let mut width = self.obs_dim() * self.pop_size();
        for (k, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            ensure!(
                layer.fan_in() == width,
                "layer {k} expects fan_in {} but receives {width}",
                layer.fan_in()
            );
            width = layer.fan_out();
        }
        ensure!(
            width == self.act_dim() * self.pop_size(),
            "output layer width {width} must equal act_dim x pop_size = {}",
            self.act_dim() * self.pop_size()
        );
        Ok(())
    }
}

/// Layer sizes and simulation constants for [`init_popsan`].
#[derive(Debug, Clone, PartialEq)]
pub struct PopSanArch {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub pop_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub timesteps: usize,
    pub lif: LifConfig,
}

impl PopSanArch {
    pub fn new(obs_dim: usize, act_dim: usize) -> Self {
        Self {
            obs_dim,
            act_dim,
            pop_size: 10,
            hidden_sizes: vec![256, 256],
            timesteps: 5,
            lif: LifConfig::default(),
        }
    }
}

/// Builds a fresh actor. Receptive field `j` of dimension `i` is centred in
/// the `j`-th of `pop_size` equal subintervals of `obs_ranges[i]` and its
/// deviation equals the subinterval width.
pub fn init_popsan(
    arch: &PopSanArch,
    obs_ranges: &[(f64, f64)],
    seed: u64,
) -> Result<PopSanParams> {
    ensure!(
        arch.pop_size >= 2,
        "pop_size must be at least 2, got {}",
        arch.pop_size
    );
    ensure!(
        arch.obs_dim >= 1 && arch.act_dim >= 1,
        "obs_dim and act_dim must be positive"
    );
    ensure!(
        obs_ranges.len() == arch.obs_dim,
        "expected {} observation ranges, got {}",
        arch.obs_dim,
        obs_ranges.len()
    );
    ensure!(
        arch.hidden_sizes.iter().all(|&h| h > 0),
        "hidden layers must be non-empty"
    );
    for &(lo, hi) in obs_ranges {
        ensure!(
            lo.is_finite() && hi.is_finite() && lo < hi,
            "invalid observation range [{lo}, {hi}]"
        );
    }

    let pop = arch.pop_size;
    let mut means = Array2::zeros((arch.obs_dim, pop));
    let mut deviations = Array2::zeros((arch.obs_dim, pop));
    for (i, &(lo, hi)) in obs_ranges.iter().enumerate() {
        let width = (hi - lo) / pop as f64;
        for j in 0..pop {
            means[[i, j]] = lo + (j as f64 + 0.5) * width;
            deviations[[i, j]] = width;
        }
    }
    let encoder = EncoderParams {
        means,
        deviations,
        obs_low: obs_ranges.iter().map(|r| r.0).collect(),
        obs_high: obs_ranges.iter().map(|r| r.1).collect(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = vec![arch.obs_dim * pop];
    sizes.extend(&arch.hidden_sizes);
    sizes.push(arch.act_dim * pop);
    let layers = sizes
        .windows(2)
        .map(|w| LayerParams::init_uniform(w[0], w[1], &mut rng))
        .collect();

    let bound = 1.0 / (pop as f64).sqrt();
    let decoder = DecoderParams {
        weights: Array2::from_shape_fn((arch.act_dim, pop), |_| {
            rand::Rng::random_range(&mut rng, -bound..=bound)
        }),
        biases: Array1::zeros(arch.act_dim),
    };

    let params = PopSanParams {
        encoder,
        layers,
        decoder,
        lif: arch.lif,
        timesteps: arch.timesteps,
    };
    params.validate()?;
    Ok(params)
}

/// Encoder output for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    /// Gaussian activations `[batch x obs_dim*pop_size]`, each in `[0, 1]`.
    pub activation: Array2<f64>,
    /// Post-reset potential of every encoder neuron after each timestep.
    pub potentials: Vec<Array2<f64>>,
    /// Binary spikes per timestep.
    pub spikes: Vec<Array2<f64>>,
}

/// Gaussian receptive-field activation.
pub fn receptive_field(obs: f64, mean: f64, deviation: f64) -> f64 {
    let d = obs - mean;
    (-(d * d) / (2.0 * deviation * deviation)).exp()
}

fn check_obs(params: &EncoderParams, obs: ArrayView2<f64>) -> Result<()> {
    ensure!(
        obs.ncols() == params.obs_dim(),
        "observation has {} dimensions, encoder expects {}",
        obs.ncols(),
        params.obs_dim()
    );
    ensure!(
        obs.iter().all(|x| x.is_finite()),
        "observation contains non-finite values"
    );
    Ok(())
}

fn clip_obs(params: &EncoderParams, obs: ArrayView2<f64>) -> Array2<f64> {
    let mut out = obs.to_owned();
    for mut row in out.rows_mut() {
        Zip::from(&mut row)
            .and(&params.obs_low)
            .and(&params.obs_high)
            .for_each(|x, &lo, &hi| *x = x.clamp(lo, hi));
    }
    out
}

/// Encodes a batch of observations into `timesteps` spike frames.
///
/// Each encoder neuron accumulates its activation every step and fires when
/// the accumulated potential reaches 1, subtracting 1 (soft reset). The rule
/// is evaluated in closed form, `floor(t * a)` spikes by step `t`, so a neuron
/// fires exactly `floor(T * a)` times over `T` steps.
pub fn encode(
    params: &EncoderParams,
    obs: ArrayView2<f64>,
    timesteps: usize,
) -> Result<EncoderOutput> {
    check_obs(params, obs)?;
    ensure!(timesteps >= 1, "timesteps must be at least 1");
    let obs = clip_obs(params, obs);
    Ok(encode_clipped(params, obs.view(), timesteps))
}

fn encode_clipped(params: &EncoderParams, obs: ArrayView2<f64>, timesteps: usize) -> EncoderOutput {
    let pop = params.pop_size();
    let batch = obs.nrows();
    let width = params.obs_dim() * pop;
    let mut activation = Array2::zeros((batch, width));
    for (b, row) in obs.rows().into_iter().enumerate() {
        for i in 0..params.obs_dim() {
            for j in 0..pop {
                activation[[b, i * pop + j]] =
                    receptive_field(row[i], params.means[[i, j]], params.deviations[[i, j]])
                        .clamp(0.0, 1.0);
            }
        }
    }

    let mut potentials = Vec::with_capacity(timesteps);
    let mut spikes = Vec::with_capacity(timesteps);
    let mut fired_before = Array2::<f64>::zeros((batch, width));
    for t in 1..=timesteps {
        let drive = activation.mapv(|a| t as f64 * a);
        let fired = drive.mapv(f64::floor);
        spikes.push(&fired - &fired_before);
        potentials.push(&drive - &fired);
        fired_before = fired;
    }
    EncoderOutput {
        activation,
        potentials,
        spikes,
    }
}

/// Decodes output-population spike counts `[batch x act_dim*pop_size]` into
/// `(firing_rates, actions)`.
pub fn decode(
    params: &DecoderParams,
    spike_counts: ArrayView2<f64>,
    timesteps: usize,
) -> Result<(Array2<f64>, Array2<f64>)> {
    ensure!(timesteps >= 1, "timesteps must be at least 1");
    ensure!(
        spike_counts.ncols() == params.act_dim() * params.pop_size(),
        "spike counts have {} columns, expected {}",
        spike_counts.ncols(),
        params.act_dim() * params.pop_size()
    );
    let t = timesteps as f64;
    ensure!(
        spike_counts.iter().all(|&c| (0.0..=t).contains(&c)),
        "spike counts must lie in [0, {timesteps}]"
    );
    let rates = spike_counts.mapv(|c| c / t);
    let actions = decode_rates(params, rates.view());
    Ok((rates, actions))
}

fn decode_rates(params: &DecoderParams, rates: ArrayView2<f64>) -> Array2<f64> {
    let pop = params.pop_size();
    let mut actions = Array2::zeros((rates.nrows(), params.act_dim()));
    for (b, row) in rates.rows().into_iter().enumerate() {
        for i in 0..params.act_dim() {
            let fr = row.slice(s![i * pop..(i + 1) * pop]);
            actions[[b, i]] = params.weights.row(i).dot(&fr) + params.biases[i];
        }
    }
    actions
}

/// Everything recorded by [`forward`] that [`backward`] needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Observations after clipping to the encoder range.
    pub obs: Array2<f64>,
    pub encoder: EncoderOutput,
    /// `layers[k][t]` is the state of spiking layer `k` after timestep `t`.
    pub layers: Vec<Vec<LayerState>>,
    pub spike_counts: Array2<f64>,
    pub firing_rates: Array2<f64>,
    pub actions: Array2<f64>,
}

impl ForwardTrace {
    pub fn batch(&self) -> usize {
        self.obs.nrows()
    }

    pub fn timesteps(&self) -> usize {
        self.encoder.spikes.len()
    }

    /// Spikes entering layer `k` at timestep `t` (encoder spikes for `k = 0`).
    pub fn layer_input(&self, k: usize, t: usize) -> ArrayView2<'_, f64> {
        if k == 0 {
            self.encoder.spikes[t].view()
        } else {
            self.layers[k - 1][t].spikes.view()
        }
    }
}

/// Runs a batch of observations `[batch x obs_dim]` through the network.
pub fn forward(params: &PopSanParams, obs: ArrayView2<f64>) -> Result<ForwardTrace> {
    params.validate()?;
    check_obs(&params.encoder, obs)?;
    let obs = clip_obs(&params.encoder, obs);
    let steps = params.timesteps;
    let encoder = encode_clipped(&params.encoder, obs.view(), steps);
    let batch = obs.nrows();

    let mut layers: Vec<Vec<LayerState>> = params
        .layers
        .iter()
        .map(|_| Vec::with_capacity(steps))
        .collect();
    let rest: Vec<LayerState> = params
        .layers
        .iter()
        .map(|l| LayerState::zeros(batch, l.fan_out()))
        .collect();
    for t in 0..steps {
        for k in 0..params.layers.len() {
            let input = if k == 0 {
                encoder.spikes[t].view()
            } else {
                layers[k - 1][t].spikes.view()
            };
            let prev = if t == 0 { &rest[k] } else { &layers[k][t - 1] };
            let next = snn::step_unchecked(&params.lif, &params.layers[k], prev, input);
            layers[k].push(next);
        }
    }

    let out = layers.last().expect("at least one layer");
    let mut spike_counts = Array2::zeros(out[0].spikes.dim());
    for st in out {
        spike_counts += &st.spikes;
    }
    let (firing_rates, actions) = decode(&params.decoder, spike_counts.view(), steps)?;
    Ok(ForwardTrace {
        obs,
        encoder,
        layers,
        spike_counts,
        firing_rates,
        actions,
    })
}

/// Single-observation convenience wrapper around [`forward`].
pub fn forward_one(params: &PopSanParams, obs: &[f64]) -> Result<(Vec<f64>, ForwardTrace)> {
    let view =
        ArrayView2::from_shape((1, obs.len()), obs).map_err(|e| Error::Contract(e.to_string()))?;
    let trace = forward(params, view)?;
    Ok((trace.actions.row(0).to_vec(), trace))
}

/// Gradient of the loss for every trainable tensor of [`PopSanParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct PopSanGrads {
    pub means: Array2<f64>,
    pub deviations: Array2<f64>,
    pub layers: Vec<LayerGrads>,
    pub decoder_weights: Array2<f64>,
    pub decoder_biases: Array1<f64>,
}

impl PopSanGrads {
    pub fn zeros_like(params: &PopSanParams) -> Self {
        Self {
            means: Array2::zeros(params.encoder.means.dim()),
            deviations: Array2::zeros(params.encoder.deviations.dim()),
            layers: params.layers.iter().map(LayerGrads::zeros_like).collect(),
            decoder_weights: Array2::zeros(params.decoder.weights.dim()),
            decoder_biases: Array1::zeros(params.decoder.biases.len()),
        }
    }
}

/// Backpropagates `dL/da` (`[batch x act_dim]`) to every parameter.
///
/// Decoder: `dW_d[i] = sum_b g_a[b,i] * fr[b,i]`, `db_d[i] = sum_b g_a[b,i]`.
/// The output-population rates are means over timesteps, so each timestep
/// receives `(W_d^T g_a) / T`. Spiking layers use [`snn::lif_backward`]. The
/// encoder treats spike generation as identity (straight-through) and applies
/// the derivative of the Gaussian activation.
pub fn backward(
    params: &PopSanParams,
    trace: &ForwardTrace,
    grad_actions: ArrayView2<f64>,
) -> Result<PopSanGrads> {
    let batch = trace.batch();
    let steps = params.timesteps;
    let pop = params.pop_size();
    let act_dim = params.act_dim();
    ensure!(
        trace.timesteps() == steps && trace.layers.len() == params.layers.len(),
        "trace was not produced by these parameters"
    );
    ensure!(
        trace
            .layers
            .iter()
            .zip(&params.layers)
            .all(|(h, l)| h.len() == steps && h[0].width() == l.fan_out()),
        "trace layer shapes do not match the parameters"
    );
    ensure!(
        trace.obs.ncols() == params.obs_dim(),
        "trace observation width mismatch"
    );
    ensure!(
        grad_actions.dim() == (batch, act_dim),
        "grad_actions has shape {:?}, expected ({batch}, {act_dim})",
        grad_actions.dim()
    );

    let mut grads = PopSanGrads::zeros_like(params);

    // decoder
    let mut grad_rates = Array2::zeros((batch, act_dim * pop));
    for b in 0..batch {
        for i in 0..act_dim {
            let ga = grad_actions[[b, i]];
            grads.decoder_biases[i] += ga;
            for j in 0..pop {
                let col = i * pop + j;
                grads.decoder_weights[[i, j]] += ga * trace.firing_rates[[b, col]];
                grad_rates[[b, col]] = ga * params.decoder.weights[[i, j]];
            }
        }
    }
    let out_spike_grad = grad_rates / steps as f64;

    // spiking layers, top down
    let mut upstream: Vec<Array2<f64>> = vec![out_spike_grad; steps];
    for k in (0..params.layers.len()).rev() {
        let inputs: Vec<ArrayView2<f64>> = (0..steps).map(|t| trace.layer_input(k, t)).collect();
        let spike_grads: Vec<ArrayView2<f64>> = upstream.iter().map(|g| g.view()).collect();
        let out = snn::lif_backward(
            &params.lif,
            &params.layers[k],
            &trace.layers[k],
            &inputs,
            &spike_grads,
        )?;
        grads.layers[k] = out.grads;
        upstream = out.input_grads;
    }

    // encoder: sum_t dL/dX^(t), then through the Gaussian
    let mut grad_x = Array2::zeros((batch, params.obs_dim() * pop));
    for g in &upstream {
        grad_x += g;
    }
    let enc = &params.encoder;
    for b in 0..batch {
        for i in 0..params.obs_dim() {
            let s = trace.obs[[b, i]];
            for j in 0..pop {
                let col = i * pop + j;
                let mu = enc.means[[i, j]];
                let sigma = enc.deviations[[i, j]];
                let ga = grad_x[[b, col]] * trace.encoder.activation[[b, col]];
                let d = s - mu;
                grads.means[[i, j]] += ga * d / (sigma * sigma);
                grads.deviations[[i, j]] += ga * d * d / (sigma * sigma * sigma);
            }
        }
    }
    Ok(grads)
}

/// One Adam step on every trainable tensor, then deviations are floored at
/// [`MIN_DEVIATION`].
pub fn apply_gradients(
    params: &mut PopSanParams,
    grads: &PopSanGrads,
    optimizer: &mut Adam,
    lr: f64,
) -> Result<()> {
    optimizer.step(params, grads, lr)?;
    params
        .encoder
        .deviations
        .mapv_inplace(|s| s.max(MIN_DEVIATION));
    Ok(())
}

/// `sum_j |W_d[i, j]|`: since rates lie in `[0, 1]`, action `i` always lies
/// within this distance of its bias.
pub fn decoder_reach(params: &DecoderParams, action: usize) -> f64 {
    params.weights.row(action).iter().map(|w| w.abs()).sum()
}

fn layer_names(k: usize) -> (String, String) {
    (format!("layers.{k}.weights"), format!("layers.{k}.biases"))
}

fn visit_array2(f: &mut TensorVisitor, name: &str, a: &Array2<f64>) {
    f(
        name,
        &[a.nrows(), a.ncols()],
        a.as_slice().expect("standard layout"),
    );
}

fn visit_array1(f: &mut TensorVisitor, name: &str, a: &Array1<f64>) {
    f(name, &[a.len()], a.as_slice().expect("standard layout"));
}

impl Parameters for PopSanParams {
    fn visit(&self, f: &mut TensorVisitor) {
        visit_array2(f, "encoder.means", &self.encoder.means);
        visit_array2(f, "encoder.deviations", &self.encoder.deviations);
        for (k, l) in self.layers.iter().enumerate() {
            let (w, b) = layer_names(k);
            visit_array2(f, &w, &l.weights);
            visit_array1(f, &b, &l.biases);
        }
        visit_array2(f, "decoder.weights", &self.decoder.weights);
        visit_array1(f, "decoder.biases", &self.decoder.biases);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(
            "encoder.means",
            self.encoder.means.as_slice_mut().expect("standard layout"),
        );
        f(
            "encoder.deviations",
            self.encoder
                .deviations
                .as_slice_mut()
                .expect("standard layout"),
        );
        for (k, l) in self.layers.iter_mut().enumerate() {
            let (w, b) = layer_names(k);
            f(&w, l.weights.as_slice_mut().expect("standard layout"));
            f(&b, l.biases.as_slice_mut().expect("standard layout"));
        }
        f(
            "decoder.weights",
            self.decoder
                .weights
                .as_slice_mut()
                .expect("standard layout"),
        );
        f(
            "decoder.biases",
            self.decoder.biases.as_slice_mut().expect("standard layout"),
        );
    }
}

impl Parameters for PopSanGrads {
    fn visit(&self, f: &mut TensorVisitor) {
        visit_array2(f, "encoder.means", &self.means);
        visit_array2(f, "encoder.deviations", &self.deviations);
        for (k, l) in self.layers.iter().enumerate() {
            let (w, b) = layer_names(k);
            visit_array2(f, &w, &l.weights);
            visit_array1(f, &b, &l.biases);
        }
        visit_array2(f, "decoder.weights", &self.decoder_weights);
        visit_array1(f, "decoder.biases", &self.decoder_biases);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(
            "encoder.means",
            self.means.as_slice_mut().expect("standard layout"),
        );
        f(
            "encoder.deviations",
            self.deviations.as_slice_mut().expect("standard layout"),
        );
        for (k, l) in self.layers.iter_mut().enumerate() {
            let (w, b) = layer_names(k);
            f(&w, l.weights.as_slice_mut().expect("standard layout"));
            f(&b, l.biases.as_slice_mut().expect("standard layout"));
        }
        f(
            "decoder.weights",
            self.decoder_weights
                .as_slice_mut()
                .expect("standard layout"),
        );
        f(
            "decoder.biases",
            self.decoder_biases.as_slice_mut().expect("standard layout"),
        );
    }
}

/// Mean spike count per neuron of each layer, for diagnostics.
pub fn mean_firing_rates(trace: &ForwardTrace) -> Vec<f64> {
    let t = trace.timesteps() as f64;
    trace
        .layers
        .iter()
        .map(|hist| {
            let total: f64 = hist.iter().map(|s| s.spikes.sum()).sum();
            total / (t * hist[0].spikes.len() as f64)
        })
        .collect()
}
