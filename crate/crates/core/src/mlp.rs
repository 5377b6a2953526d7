//! Fully connected networks with rectifier hidden layers, used for the
//! critics and the feedforward baseline actor.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{ensure, Result};
use crate::params::{Parameters, TensorVisitor};
use crate::snn::{LayerGrads, LayerParams};

#[derive(Debug, Clone, PartialEq)]
pub enum OutputActivation {
    Linear,
    /// `mid + half * tanh(z)`, mapping each output into `[low, high]`.
    Squash {
        low: Vec<f64>,
        high: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<LayerParams>,
    pub output: OutputActivation,
}

#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// Input to each layer; `inputs[0]` is the network input.
    pub inputs: Vec<Array2<f64>>,
    /// Pre-activation of the output layer.
    pub logits: Array2<f64>,
    pub output: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

impl Mlp {
    /// Rectifier layers of `sizes[1..len-1]`, uniform `1/sqrt(fan_in)` weights
    /// and zero biases.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        output: OutputActivation,
        rng: &mut R,
    ) -> Result<Self> {
        ensure!(
            sizes.len() >= 2,
            "an MLP needs at least input and output sizes"
        );
        ensure!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        let layers = sizes
            .windows(2)
            .map(|w| LayerParams::init_uniform(w[0], w[1], rng))
            .collect();
        let mlp = Self { layers, output };
        mlp.validate()?;
        Ok(mlp)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.fan_out()).unwrap_or(0)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.fan_out()));
        s
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.layers.is_empty(), "an MLP needs at least one layer");
        for (k, pair) in self.layers.windows(2).enumerate() {
            ensure!(
                pair[0].fan_out() == pair[1].fan_in(),
                "layers {k} and {} do not compose",
                k + 1
            );
        }
        for l in &self.layers {
            l.validate()?;
        }
        if let OutputActivation::Squash { low, high } = &self.output {
            ensure!(
                low.len() == self.output_dim() && high.len() == self.output_dim(),
                "squash bounds must match the output width"
            );
            ensure!(
                low.iter().zip(high).all(|(l, h)| l < h),
                "squash bounds need low < high"
            );
        }
        Ok(())
    }

    pub fn forward(&self, input: ArrayView2<f64>) -> Result<MlpTrace> {
        ensure!(
            input.ncols() == self.input_dim(),
            "input has {} columns, network expects {}",
            input.ncols(),
            self.input_dim()
        );
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(x.view());
            inputs.push(x);
            if k == last {
                let output = match &self.output {
                    OutputActivation::Linear => z.clone(),
                    OutputActivation::Squash { low, high } => {
                        let mut out = z.mapv(f64::tanh);
                        for mut row in out.rows_mut() {
                            for (j, y) in row.iter_mut().enumerate() {
                                let mid = 0.5 * (high[j] + low[j]);
                                let half = 0.5 * (high[j] - low[j]);
                                *y = mid + half * *y;
                            }
                        }
                        out
                    }
                };
                return Ok(MlpTrace {
                    inputs,
                    logits: z,
                    output,
                });
            }
            x = z.mapv(|v| v.max(0.0));
        }
        unreachable!("loop returns at the last layer")
    }

    /// Returns parameter gradients and `dL/dinput` for `dL/doutput`.
    pub fn backward(
        &self,
        trace: &MlpTrace,
        grad_output: ArrayView2<f64>,
    ) -> Result<(MlpGrads, Array2<f64>)> {
        ensure!(
            grad_output.dim() == trace.output.dim(),
            "output gradient has shape {:?}, expected {:?}",
            grad_output.dim(),
            trace.output.dim()
        );
        ensure!(
            trace.inputs.len() == self.layers.len(),
            "trace does not belong to this network"
        );
        let mut g = grad_output.to_owned();
        if let OutputActivation::Squash { low, high } = &self.output {
            Zip::indexed(&mut g)
                .and(&trace.logits)
                .for_each(|(_, j), g, &z| {
                    let half = 0.5 * (high[j] - low[j]);
                    let t = z.tanh();
                    *g *= half * (1.0 - t * t);
                });
        }
        let mut layers = vec![None; self.layers.len()];
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let x = &trace.inputs[k];
            let weights = g.t().dot(x).as_standard_layout().into_owned();
            let biases: Array1<f64> = g.sum_axis(Axis(0));
            layers[k] = Some(LayerGrads { weights, biases });
            let mut gx = g.dot(&layer.weights);
            if k > 0 {
                // x = relu(z_{k-1}), so x > 0 exactly where the unit was active
                Zip::from(&mut gx).and(x).for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            g = gx;
        }
        let layers = layers.into_iter().map(|l| l.expect("filled")).collect();
        Ok((MlpGrads { layers }, g))
    }
}

fn layer_names(k: usize) -> (String, String) {
    (format!("layers.{k}.weights"), format!("layers.{k}.biases"))
}

fn visit_layers(layers: &[impl AsLayer], f: &mut TensorVisitor) {
    for (k, l) in layers.iter().enumerate() {
        let (wn, bn) = layer_names(k);
        let (w, b) = l.parts();
        f(
            &wn,
            &[w.nrows(), w.ncols()],
            w.as_slice().expect("standard layout"),
        );
        f(&bn, &[b.len()], b.as_slice().expect("standard layout"));
    }
}

fn visit_layers_mut(layers: &mut [impl AsLayer], f: &mut dyn FnMut(&str, &mut [f64])) {
    for (k, l) in layers.iter_mut().enumerate() {
        let (wn, bn) = layer_names(k);
        let (w, b) = l.parts_mut();
        f(&wn, w.as_slice_mut().expect("standard layout"));
        f(&bn, b.as_slice_mut().expect("standard layout"));
    }
}

trait AsLayer {
    fn parts(&self) -> (&Array2<f64>, &Array1<f64>);
    fn parts_mut(&mut self) -> (&mut Array2<f64>, &mut Array1<f64>);
}

impl AsLayer for LayerParams {
    fn parts(&self) -> (&Array2<f64>, &Array1<f64>) {
        (&self.weights, &self.biases)
    }
    fn parts_mut(&mut self) -> (&mut Array2<f64>, &mut Array1<f64>) {
        (&mut self.weights, &mut self.biases)
    }
}

impl AsLayer for LayerGrads {
    fn parts(&self) -> (&Array2<f64>, &Array1<f64>) {
        (&self.weights, &self.biases)
    }
    fn parts_mut(&mut self) -> (&mut Array2<f64>, &mut Array1<f64>) {
        (&mut self.weights, &mut self.biases)
    }
}

impl Parameters for Mlp {
    fn visit(&self, f: &mut TensorVisitor) {
        visit_layers(&self.layers, f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        visit_layers_mut(&mut self.layers, f);
    }
}

impl Parameters for MlpGrads {
    fn visit(&self, f: &mut TensorVisitor) {
        visit_layers(&self.layers, f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        visit_layers_mut(&mut self.layers, f);
    }
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp.layers.iter().map(LayerGrads::zeros_like).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.biases += &b.biases;
        }
    }
}
