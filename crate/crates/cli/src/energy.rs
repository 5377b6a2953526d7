//! `popsan energy`: operation counts and energy of a trained actor on a
//! batch of observations, next to a dense network of matching widths.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use popsan::actor::{AnyActor, Policy};
use popsan::energy::{
    break_even_rate, count_ann_flops, count_snn_ops, estimate_energy, total_energy,
    weighted_firing_rate, LayerFlopProfile, OpCosts,
};
use popsan::envs::Environment;
use popsan::popsan::forward;
use popsan::rollout::derive_seed;
use serde::Serialize;

use crate::error::CliError;
use crate::eval::{load_actor, output_dir, write_json};

pub const ENERGY_JSON: &str = "energy.json";
pub const ENERGY_TABLE: &str = "energy.txt";

/// Where the measured observations come from.
#[derive(Debug, Clone)]
pub enum Observations {
    /// Noise-free rollouts of the loaded actor from seeded resets, every
    /// visited observation counted, until `samples` are collected.
    Rollouts { samples: usize, seed: u64 },
    /// A JSON array of observation rows.
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct EnergyArgs {
    pub checkpoint: PathBuf,
    pub env: Option<String>,
    pub observations: Observations,
    /// Hidden widths of the dense comparison network; defaults to the
    /// actor's own.
    pub baseline_hidden: Option<Vec<usize>>,
    /// Runs a spiking actor with this many timesteps instead of its own.
    pub timesteps: Option<usize>,
    pub costs: OpCosts,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerEnergy {
    pub name: String,
    pub mac_count: f64,
    pub ac_count: f64,
    pub energy_pj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineEnergy {
    /// Input, hidden and output widths.
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<LayerEnergy>,
    pub total_energy_pj: f64,
}

/// Per forward pass, averaged over the observation batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReportFile {
    pub checkpoint: String,
    pub env: String,
    pub actor: String,
    /// Spiking actors only.
    pub timesteps: Option<usize>,
    pub e_mac_pj: f64,
    pub e_ac_pj: f64,
    pub layers: Vec<LayerEnergy>,
    pub total_energy_pj: f64,
    pub baseline: BaselineEnergy,
    /// `1 - total_energy_pj / baseline.total_energy_pj`.
    pub savings_fraction: f64,
    /// Measured ACs over the ACs of an actor firing at every step.
    pub weighted_firing_rate: Option<f64>,
    /// Weighted firing rate at which both networks cost the same.
    pub break_even_rate: Option<f64>,
    pub samples: usize,
    pub observations: Vec<Vec<f64>>,
}

fn layers(profiles: &[LayerFlopProfile], costs: &OpCosts) -> Vec<LayerEnergy> {
    profiles
        .iter()
        .map(|p| LayerEnergy {
            name: p.name.clone(),
            mac_count: p.mac_count,
            ac_count: p.ac_count,
            energy_pj: p.energy(costs),
        })
        .collect()
}

fn rollout_observations(
    env: &mut dyn Environment,
    actor: &AnyActor,
    samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, CliError> {
    let fail = |e| CliError::runtime("collecting observations", e);
    let spec = env.spec().clone();
    let mut out = Vec::with_capacity(samples);
    let mut episode = 0;
    while out.len() < samples {
        let mut obs = env.reset(derive_seed(seed, episode));
        episode += 1;
        loop {
            out.push(obs.clone());
            if out.len() == samples {
                break;
            }
            let action = spec.clamp_action(&actor.act(&obs).map_err(fail)?);
            let step = env.step(&action).map_err(fail)?;
            if step.done {
                break;
            }
            obs = step.obs;
        }
    }
    Ok(out)
}

fn read_observations(path: &Path, obs_dim: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("reading {}", path.display()), e))?;
    let rows: Vec<Vec<f64>> = serde_json::from_str(&text).map_err(|e| {
        CliError::Usage(format!(
            "{}: expected an array of rows: {e}",
            path.display()
        ))
    })?;
    if rows.is_empty() || rows.iter().any(|r| r.len() != obs_dim) {
        return Err(CliError::Usage(format!(
            "{}: need at least one row, each of width {obs_dim}",
            path.display()
        )));
    }
    Ok(rows)
}

pub fn energy(args: &EnergyArgs) -> Result<(EnergyReportFile, PathBuf), CliError> {
    let (_, mut actor, mut env) = load_actor(&args.checkpoint, args.env.as_deref())?;
    if let Some(t) = args.timesteps {
        match &mut actor {
            AnyActor::Spiking(p) if t > 0 => p.timesteps = t,
            AnyActor::Spiking(_) => {
                return Err(CliError::Usage("--timesteps must be positive".into()))
            }
            AnyActor::Baseline(_) => {
                return Err(CliError::Usage(
                    "--timesteps only applies to spiking actors".into(),
                ))
            }
        }
    }
    let observations = match &args.observations {
        Observations::Rollouts { samples: 0, .. } => {
            return Err(CliError::Usage("--samples must be at least 1".into()))
        }
        Observations::Rollouts { samples, seed } => {
            rollout_observations(env.as_mut(), &actor, *samples, *seed)?
        }
        Observations::File(path) => read_observations(path, actor.obs_dim())?,
    };
    let (obs_dim, act_dim) = (actor.obs_dim(), actor.act_dim());
    let hidden = args
        .baseline_hidden
        .clone()
        .unwrap_or_else(|| match &actor {
            AnyActor::Spiking(p) => p.hidden_sizes(),
            AnyActor::Baseline(a) => a.hidden_sizes(),
        });
    let layer_sizes: Vec<usize> = std::iter::once(obs_dim)
        .chain(hidden)
        .chain(std::iter::once(act_dim))
        .collect();
    let usage = |e: popsan::Error| CliError::Usage(e.to_string());
    let runtime = |e| CliError::runtime("counting operations", e);
    let baseline = count_ann_flops(&layer_sizes).map_err(usage)?;
    let baseline_total = total_energy(&baseline, &args.costs);

    let (profiles, timesteps, rates) = match &actor {
        AnyActor::Spiking(p) => {
            let batch =
                Array2::from_shape_fn((observations.len(), obs_dim), |(r, c)| observations[r][c]);
            let trace = forward(p, batch.view()).map_err(runtime)?;
            let profiles = count_snn_ops(p, &trace).map_err(runtime)?;
            let rates = (
                weighted_firing_rate(p, &profiles),
                break_even_rate(p, baseline_total, &args.costs),
            );
            (profiles, Some(p.timesteps), Some(rates))
        }
        AnyActor::Baseline(a) => {
            let widths: Vec<usize> = std::iter::once(obs_dim)
                .chain(a.hidden_sizes())
                .chain(std::iter::once(act_dim))
                .collect();
            (count_ann_flops(&widths).map_err(runtime)?, None, None)
        }
    };
    let report = estimate_energy(profiles, &args.costs, baseline_total).map_err(runtime)?;
    let file = EnergyReportFile {
        checkpoint: args.checkpoint.display().to_string(),
        env: env.spec().name.to_string(),
        actor: actor.kind().name().to_string(),
        timesteps,
        e_mac_pj: args.costs.e_mac,
        e_ac_pj: args.costs.e_ac,
        layers: layers(&report.profiles, &args.costs),
        total_energy_pj: report.total_energy,
        baseline: BaselineEnergy {
            layer_sizes,
            layers: layers(&baseline, &args.costs),
            total_energy_pj: baseline_total,
        },
        savings_fraction: report.savings_fraction,
        weighted_firing_rate: rates.map(|r| r.0),
        break_even_rate: rates.map(|r| r.1),
        samples: observations.len(),
        observations,
    };
    let dir = output_dir(args.out.as_deref(), &args.checkpoint);
    let path = write_json(&dir, ENERGY_JSON, &file)?;
    let table = dir.join(ENERGY_TABLE);
    fs::write(&table, render_table(&file))
        .map_err(|e| CliError::runtime(format!("writing {}", table.display()), e))?;
    Ok((file, path))
}

/// Picojoules to the table's unit of 1e-6 mJ.
fn display_units(pj: f64) -> f64 {
    pj * 1e-3
}

pub fn render_table(r: &EnergyReportFile) -> String {
    let mut out = format!(
        "{} actor on {} ({} observations{})\n",
        r.actor,
        r.env,
        r.samples,
        r.timesteps
            .map(|t| format!(", T = {t}"))
            .unwrap_or_default()
    );
    out.push_str(&format!(
        "{:<12} {:>14} {:>14} {:>18}\n",
        "layer", "MACs", "ACs", "energy (1e-6 mJ)"
    ));
    for l in &r.layers {
        out.push_str(&format!(
            "{:<12} {:>14.1} {:>14.1} {:>18.4}\n",
            l.name,
            l.mac_count,
            l.ac_count,
            display_units(l.energy_pj)
        ));
    }
    out.push_str(&format!(
        "{:<12} {:>48.4}\n",
        "total",
        display_units(r.total_energy_pj)
    ));
    let sizes: Vec<String> = r
        .baseline
        .layer_sizes
        .iter()
        .map(|s| s.to_string())
        .collect();
    out.push_str(&format!(
        "{:<12} {:>48.4}   dense {}\n",
        "baseline",
        display_units(r.baseline.total_energy_pj),
        sizes.join("-")
    ));
    out.push_str(&format!(
        "savings      {:.2}%\n",
        100.0 * r.savings_fraction
    ));
    if let (Some(rate), Some(even)) = (r.weighted_firing_rate, r.break_even_rate) {
        out.push_str(&format!("firing rate  {rate:.4} (break-even {even:.4})\n"));
    }
    out
}
