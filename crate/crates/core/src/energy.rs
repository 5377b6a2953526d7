//! Operation counting and energy estimates for spiking and conventional
//! actors.
//!
//! Dense layers cost one multiply-accumulate (MAC) per weight. In the spiking
//! actor only the encoder and decoder do MACs; a spiking layer costs one
//! accumulate (AC) per presynaptic spike per outgoing synapse, so its cost
//! follows the measured firing activity. Bias additions are not counted on
//! either side.

use crate::error::{ensure, Result};
use crate::popsan::{ForwardTrace, PopSanParams};

/// Picojoules per operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpCosts {
    pub e_mac: f64,
    pub e_ac: f64,
}

impl Default for OpCosts {
    /// 32-bit floating point at 45 nm.
    fn default() -> Self {
        Self {
            e_mac: 4.6,
            e_ac: 0.9,
        }
    }
}

impl OpCosts {
    pub fn new(e_mac: f64, e_ac: f64) -> Result<Self> {
        ensure!(
            e_mac > 0.0 && e_ac > 0.0,
            "operation energies must be positive"
        );
        Ok(Self { e_mac, e_ac })
    }
}

/// Operation counts of one layer for a single forward pass. Spiking counts
/// are averaged over the measured batch and may be fractional.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerFlopProfile {
    pub name: String,
    pub mac_count: f64,
    pub ac_count: f64,
}

impl LayerFlopProfile {
    pub fn energy(&self, costs: &OpCosts) -> f64 {
        self.mac_count * costs.e_mac + self.ac_count * costs.e_ac
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub profiles: Vec<LayerFlopProfile>,
    /// Picojoules per forward pass.
    pub total_energy: f64,
    pub baseline_energy: f64,
    /// `1 - total / baseline`.
    pub savings_fraction: f64,
}

/// MACs of a dense network with the given layer widths, input first.
pub fn count_ann_flops(layer_sizes: &[usize]) -> Result<Vec<LayerFlopProfile>> {
    ensure!(
        layer_sizes.len() >= 2,
        "a dense network needs an input and an output width"
    );
    ensure!(
        layer_sizes.iter().all(|&n| n > 0),
        "layer widths must be positive, got {layer_sizes:?}"
    );
    Ok(layer_sizes
        .windows(2)
        .enumerate()
        .map(|(k, w)| LayerFlopProfile {
            name: format!("fc{k}"),
            mac_count: (w[0] * w[1]) as f64,
            ac_count: 0.0,
        })
        .collect())
}

/// Encoder and decoder MACs plus per-layer ACs measured from `trace`,
/// averaged over the trace's batch.
pub fn count_snn_ops(params: &PopSanParams, trace: &ForwardTrace) -> Result<Vec<LayerFlopProfile>> {
    ensure!(
        trace.layers.len() == params.layers.len(),
        "trace does not belong to these parameters"
    );
    ensure!(trace.batch() > 0, "trace holds no observations");
    let batch = trace.batch() as f64;
    let pop = params.pop_size();
    let mut out = vec![LayerFlopProfile {
        name: "encoder".into(),
        mac_count: (params.obs_dim() * pop) as f64,
        ac_count: 0.0,
    }];
    for (k, layer) in params.layers.iter().enumerate() {
        let spikes: f64 = (0..trace.timesteps())
            .map(|t| trace.layer_input(k, t).sum())
            .sum();
        out.push(LayerFlopProfile {
            name: format!("spiking{k}"),
            mac_count: 0.0,
            ac_count: spikes * layer.fan_out() as f64 / batch,
        });
    }
    out.push(LayerFlopProfile {
        name: "decoder".into(),
        mac_count: (params.act_dim() * pop) as f64,
        ac_count: 0.0,
    });
    Ok(out)
}

pub fn total_energy(profiles: &[LayerFlopProfile], costs: &OpCosts) -> f64 {
    profiles.iter().map(|p| p.energy(costs)).sum()
}

pub fn savings(total: f64, baseline: f64) -> Result<f64> {
    ensure!(
        baseline > 0.0,
        "baseline energy must be positive, got {baseline}"
    );
    Ok(1.0 - total / baseline)
}

pub fn estimate_energy(
    profiles: Vec<LayerFlopProfile>,
    costs: &OpCosts,
    baseline_energy: f64,
) -> Result<EnergyReport> {
    let total_energy = total_energy(&profiles, costs);
    let savings_fraction = savings(total_energy, baseline_energy)?;
    Ok(EnergyReport {
        profiles,
        total_energy,
        baseline_energy,
        savings_fraction,
    })
}

/// ACs the spiking layers would perform if every neuron fired at every
/// timestep.
pub fn ac_capacity(params: &PopSanParams) -> f64 {
    let mut width = params.obs_dim() * params.pop_size();
    let mut total = 0.0;
    for layer in &params.layers {
        total += (width * layer.fan_out()) as f64;
        width = layer.fan_out();
    }
    total * params.timesteps as f64
}

/// Synapse-weighted mean firing rate of the spiking layers' inputs,
/// `measured ACs / ac_capacity`.
pub fn weighted_firing_rate(params: &PopSanParams, profiles: &[LayerFlopProfile]) -> f64 {
    let acs: f64 = profiles.iter().map(|p| p.ac_count).sum();
    acs / ac_capacity(params)
}

/// Weighted firing rate at which the spiking actor costs as much as a dense
/// network spending `baseline_energy`. Below it the spiking actor is strictly
/// cheaper. Negative when its MACs alone already exceed the baseline.
pub fn break_even_rate(params: &PopSanParams, baseline_energy: f64, costs: &OpCosts) -> f64 {
    let fixed_macs = ((params.obs_dim() + params.act_dim()) * params.pop_size()) as f64;
    (baseline_energy - fixed_macs * costs.e_mac) / (costs.e_ac * ac_capacity(params))
}
