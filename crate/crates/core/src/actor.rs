//! The actor seam of the training harness.
//!
//! [`ActorModel`] is everything TD3 needs from a policy network. The spiking
//! actor and the feedforward baseline both implement it, so the two train
//! through identical code and differ only in their forward/backward passes.

use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{Checkpoint, Tensor};
use crate::envs::EnvSpec;
use crate::error::{ensure, Error, Result};
use crate::mlp::{Mlp, MlpGrads, MlpTrace, OutputActivation};
use crate::optim::Adam;
use crate::params::{Parameters, TensorVisitor};
use crate::popsan::{self, ForwardTrace, PopSanArch, PopSanGrads, PopSanParams};
use crate::snn::LifConfig;

/// Maps a single observation to an action.
pub trait Policy {
    fn act(&self, obs: &[f64]) -> Result<Vec<f64>>;
}

/// Wraps a closure as a [`Policy`], e.g. for scripted controllers.
pub struct FnPolicy<F>(pub F);

impl<F: Fn(&[f64]) -> Vec<f64>> Policy for FnPolicy<F> {
    fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok((self.0)(obs))
    }
}

pub trait ActorModel: Parameters + Clone + Policy {
    type Trace;
    type Grads: Parameters;

    const KIND: ActorKind;

    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;

    /// Batch forward pass returning actions `[batch x act_dim]` and whatever
    /// the backward pass needs.
    fn forward_batch(&self, obs: ArrayView2<f64>) -> Result<(Array2<f64>, Self::Trace)>;

    fn backward(&self, trace: &Self::Trace, grad_actions: ArrayView2<f64>) -> Result<Self::Grads>;

    fn apply_gradients(&mut self, grads: &Self::Grads, optimizer: &mut Adam, lr: f64)
        -> Result<()>;

    /// Stores the actor, including its non-trainable configuration, under `prefix.`.
    fn write_checkpoint(&self, prefix: &str, ck: &mut Checkpoint);

    fn read_checkpoint(prefix: &str, ck: &Checkpoint) -> Result<Self>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActorKind {
    Spiking,
    Baseline,
}

impl ActorKind {
    pub fn code(self) -> f64 {
        match self {
            ActorKind::Spiking => 0.0,
            ActorKind::Baseline => 1.0,
        }
    }

    pub fn from_code(code: f64) -> Result<Self> {
        match code {
            0.0 => Ok(ActorKind::Spiking),
            1.0 => Ok(ActorKind::Baseline),
            other => Err(Error::Format(format!("unknown actor kind code {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActorKind::Spiking => "spiking",
            ActorKind::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for ActorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spiking" => Ok(ActorKind::Spiking),
            "baseline" => Ok(ActorKind::Baseline),
            other => Err(Error::Contract(format!(
                "unknown actor kind `{other}` (expected spiking or baseline)"
            ))),
        }
    }
}

fn single_row(obs: &[f64]) -> Result<ArrayView2<'_, f64>> {
    ArrayView2::from_shape((1, obs.len()), obs).map_err(|e| Error::Contract(e.to_string()))
}

impl Policy for PopSanParams {
    fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(popsan::forward(self, single_row(obs)?)?
            .actions
            .row(0)
            .to_vec())
    }
}

impl ActorModel for PopSanParams {
    type Trace = ForwardTrace;
    type Grads = PopSanGrads;

    const KIND: ActorKind = ActorKind::Spiking;

    fn obs_dim(&self) -> usize {
        PopSanParams::obs_dim(self)
    }

    fn act_dim(&self) -> usize {
        PopSanParams::act_dim(self)
    }

    fn forward_batch(&self, obs: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardTrace)> {
        let trace = popsan::forward(self, obs)?;
        Ok((trace.actions.clone(), trace))
    }

    fn backward(&self, trace: &ForwardTrace, grad_actions: ArrayView2<f64>) -> Result<PopSanGrads> {
        popsan::backward(self, trace, grad_actions)
    }

    fn apply_gradients(
        &mut self,
        grads: &PopSanGrads,
        optimizer: &mut Adam,
        lr: f64,
    ) -> Result<()> {
        popsan::apply_gradients(self, grads, optimizer, lr)
    }

    fn write_checkpoint(&self, prefix: &str, ck: &mut Checkpoint) {
        let lif = &self.lif;
        ck.push(Tensor::vector(
            format!("{prefix}.lif"),
            vec![
                lif.current_decay,
                lif.voltage_decay,
                lif.threshold,
                lif.surrogate_width,
            ],
        ));
        ck.push(Tensor::scalar(
            format!("{prefix}.timesteps"),
            self.timesteps as f64,
        ));
        ck.push(Tensor::vector(
            format!("{prefix}.obs_low"),
            self.encoder.obs_low.to_vec(),
        ));
        ck.push(Tensor::vector(
            format!("{prefix}.obs_high"),
            self.encoder.obs_high.to_vec(),
        ));
        ck.push_params(prefix, self);
    }

    fn read_checkpoint(prefix: &str, ck: &Checkpoint) -> Result<Self> {
        let lif = &ck.require(&format!("{prefix}.lif"))?.data;
        if lif.len() != 4 {
            return Err(Error::Format("LIF configuration must hold 4 values".into()));
        }
        let lif = LifConfig::new(lif[0], lif[1], lif[2], lif[3])?;
        let timesteps = ck.scalar(&format!("{prefix}.timesteps"))? as usize;
        let means = ck.require(&format!("{prefix}.encoder.means"))?;
        let [obs_dim, pop_size] = dims2(means)?;
        let dec = ck.require(&format!("{prefix}.decoder.weights"))?;
        let [act_dim, _] = dims2(dec)?;
        let mut hidden = Vec::new();
        let mut k = 0;
        while let Some(t) = ck.get(&format!("{prefix}.layers.{k}.weights")) {
            hidden.push(dims2(t)?[0]);
            k += 1;
        }
        if hidden.is_empty() {
            return Err(Error::Format("spiking actor has no layers".into()));
        }
        hidden.pop();
        let low = &ck.require(&format!("{prefix}.obs_low"))?.data;
        let high = &ck.require(&format!("{prefix}.obs_high"))?.data;
        if low.len() != obs_dim || high.len() != obs_dim {
            return Err(Error::Format(
                "observation range does not match encoder width".into(),
            ));
        }
        let ranges: Vec<(f64, f64)> = low.iter().copied().zip(high.iter().copied()).collect();
        let arch = PopSanArch {
            obs_dim,
            act_dim,
            pop_size,
            hidden_sizes: hidden,
            timesteps,
            lif,
        };
        if pop_size < 2 {
            return Err(Error::Format("population size below 2".into()));
        }
        // shape template; every trainable value is overwritten below
        let mut params = popsan::init_popsan(&arch, &ranges, 0)?;
        ck.load_params(prefix, &mut params)?;
        params.validate()?;
        Ok(params)
    }
}

fn dims2(t: &Tensor) -> Result<[usize; 2]> {
    match t.dims.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => Err(Error::Format(format!("tensor `{}` must be rank 2", t.name))),
    }
}

/// Feedforward actor: rectifier hidden layers and a `tanh` output scaled to
/// the action bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineActor {
    pub net: Mlp,
}

impl BaselineActor {
    pub fn new(
        obs_dim: usize,
        hidden: &[usize],
        action_ranges: &[(f64, f64)],
        seed: u64,
    ) -> Result<Self> {
        ensure!(
            !action_ranges.is_empty(),
            "baseline actor needs at least one action dimension"
        );
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_ranges.len());
        let output = OutputActivation::Squash {
            low: action_ranges.iter().map(|r| r.0).collect(),
            high: action_ranges.iter().map(|r| r.1).collect(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            net: Mlp::new(&sizes, output, &mut rng)?,
        })
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        let s = self.net.sizes();
        s[1..s.len() - 1].to_vec()
    }
}

impl Parameters for BaselineActor {
    fn visit(&self, f: &mut TensorVisitor) {
        self.net.visit(f)
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.net.visit_mut(f)
    }
}

impl Policy for BaselineActor {
    fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.net.forward(single_row(obs)?)?.output.row(0).to_vec())
    }
}

impl ActorModel for BaselineActor {
    type Trace = MlpTrace;
    type Grads = MlpGrads;

    const KIND: ActorKind = ActorKind::Baseline;

    fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn act_dim(&self) -> usize {
        self.net.output_dim()
    }

    fn forward_batch(&self, obs: ArrayView2<f64>) -> Result<(Array2<f64>, MlpTrace)> {
        let trace = self.net.forward(obs)?;
        Ok((trace.output.clone(), trace))
    }

    fn backward(&self, trace: &MlpTrace, grad_actions: ArrayView2<f64>) -> Result<MlpGrads> {
        Ok(self.net.backward(trace, grad_actions)?.0)
    }

    fn apply_gradients(&mut self, grads: &MlpGrads, optimizer: &mut Adam, lr: f64) -> Result<()> {
        optimizer.step(&mut self.net, grads, lr)
    }

    fn write_checkpoint(&self, prefix: &str, ck: &mut Checkpoint) {
        if let OutputActivation::Squash { low, high } = &self.net.output {
            ck.push(Tensor::vector(format!("{prefix}.act_low"), low.clone()));
            ck.push(Tensor::vector(format!("{prefix}.act_high"), high.clone()));
        }
        ck.push_params(prefix, &self.net);
    }

    fn read_checkpoint(prefix: &str, ck: &Checkpoint) -> Result<Self> {
        let net = read_mlp(prefix, ck, true)?;
        Ok(Self { net })
    }
}

/// Rebuilds an [`Mlp`] stored with [`Checkpoint::push_params`].
pub fn read_mlp(prefix: &str, ck: &Checkpoint, squashed: bool) -> Result<Mlp> {
    let mut layers = Vec::new();
    let mut k = 0;
    while let Some(w) = ck.get(&format!("{prefix}.layers.{k}.weights")) {
        let [rows, cols] = dims2(w)?;
        let b = ck.require(&format!("{prefix}.layers.{k}.biases"))?;
        let weights = Array2::from_shape_vec((rows, cols), w.data.clone())
            .map_err(|e| Error::Format(e.to_string()))?;
        layers.push(crate::snn::LayerParams::new(
            weights,
            Array1::from(b.data.clone()),
        )?);
        k += 1;
    }
    if layers.is_empty() {
        return Err(Error::Format(format!("no layers stored under `{prefix}`")));
    }
    let output = if squashed {
        OutputActivation::Squash {
            low: ck.require(&format!("{prefix}.act_low"))?.data.clone(),
            high: ck.require(&format!("{prefix}.act_high"))?.data.clone(),
        }
    } else {
        OutputActivation::Linear
    };
    let net = Mlp { layers, output };
    net.validate()?;
    Ok(net)
}

/// An actor of either kind, as loaded from a checkpoint.
// one per process, so the size gap between variants does not matter
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum AnyActor {
    Spiking(PopSanParams),
    Baseline(BaselineActor),
}

pub const ACTOR_KIND_TENSOR: &str = "meta.actor_kind";

impl AnyActor {
    pub fn kind(&self) -> ActorKind {
        match self {
            AnyActor::Spiking(_) => ActorKind::Spiking,
            AnyActor::Baseline(_) => ActorKind::Baseline,
        }
    }

    /// Builds an untrained actor for `env`.
    pub fn init(kind: ActorKind, arch: &PopSanArch, env: &EnvSpec, seed: u64) -> Result<Self> {
        ensure!(
            arch.obs_dim == env.obs_dim && arch.act_dim == env.act_dim,
            "architecture does not match environment"
        );
        Ok(match kind {
            ActorKind::Spiking => {
                AnyActor::Spiking(popsan::init_popsan(arch, &env.obs_ranges, seed)?)
            }
            ActorKind::Baseline => AnyActor::Baseline(BaselineActor::new(
                env.obs_dim,
                &arch.hidden_sizes,
                &env.action_ranges,
                seed,
            )?),
        })
    }

    pub fn write_checkpoint(&self, ck: &mut Checkpoint) {
        ck.push(Tensor::scalar(ACTOR_KIND_TENSOR, self.kind().code()));
        match self {
            AnyActor::Spiking(a) => a.write_checkpoint("actor", ck),
            AnyActor::Baseline(a) => a.write_checkpoint("actor", ck),
        }
    }

    pub fn read_checkpoint(ck: &Checkpoint) -> Result<Self> {
        match ActorKind::from_code(ck.scalar(ACTOR_KIND_TENSOR)?)? {
            ActorKind::Spiking => Ok(AnyActor::Spiking(PopSanParams::read_checkpoint(
                "actor", ck,
            )?)),
            ActorKind::Baseline => Ok(AnyActor::Baseline(BaselineActor::read_checkpoint(
                "actor", ck,
            )?)),
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            AnyActor::Spiking(a) => ActorModel::obs_dim(a),
            AnyActor::Baseline(a) => a.obs_dim(),
        }
    }

    pub fn act_dim(&self) -> usize {
        match self {
            AnyActor::Spiking(a) => ActorModel::act_dim(a),
            AnyActor::Baseline(a) => a.act_dim(),
        }
    }
}

impl Policy for AnyActor {
    fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        match self {
            AnyActor::Spiking(a) => a.act(obs),
            AnyActor::Baseline(a) => a.act(obs),
        }
    }
}
