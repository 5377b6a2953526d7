//! Fixed-capacity ring buffer of transitions with uniform sampling.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{ensure, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// A sampled minibatch, one row per transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_obs: Array2<f64>,
    /// 1.0 for terminal transitions.
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    cursor: usize,
    len: usize,
    obs: Array2<f64>,
    actions: Array2<f64>,
    rewards: Array1<f64>,
    next_obs: Array2<f64>,
    dones: Array1<f64>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Result<Self> {
        ensure!(capacity > 0, "replay capacity must be positive");
        Ok(Self {
            capacity,
            cursor: 0,
            len: 0,
            obs: Array2::zeros((capacity, obs_dim)),
            actions: Array2::zeros((capacity, act_dim)),
            rewards: Array1::zeros(capacity),
            next_obs: Array2::zeros((capacity, obs_dim)),
            dones: Array1::zeros(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn obs_dim(&self) -> usize {
        self.obs.ncols()
    }

    pub fn act_dim(&self) -> usize {
        self.actions.ncols()
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        ensure!(
            t.obs.len() == self.obs_dim()
                && t.next_obs.len() == self.obs_dim()
                && t.action.len() == self.act_dim(),
            "transition dimensions do not match the buffer"
        );
        let i = self.cursor;
        self.obs.row_mut(i).assign(&Array1::from(t.obs.clone()));
        self.actions
            .row_mut(i)
            .assign(&Array1::from(t.action.clone()));
        self.rewards[i] = t.reward;
        self.next_obs
            .row_mut(i)
            .assign(&Array1::from(t.next_obs.clone()));
        self.dones[i] = if t.done { 1.0 } else { 0.0 };
        self.cursor = (self.cursor + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        Ok(())
    }

    pub fn get(&self, index: usize) -> Option<Transition> {
        (index < self.len).then(|| Transition {
            obs: self.obs.row(index).to_vec(),
            action: self.actions.row(index).to_vec(),
            reward: self.rewards[index],
            next_obs: self.next_obs.row(index).to_vec(),
            done: self.dones[index] != 0.0,
        })
    }

    /// Draws `batch_size` indices uniformly, with replacement, from the
    /// filled region.
    pub fn sample_indices<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        ensure!(batch_size > 0, "batch size must be positive");
        ensure!(self.len > 0, "cannot sample from an empty buffer");
        Ok((0..batch_size)
            .map(|_| rng.random_range(0..self.len))
            .collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(batch_size, rng)?;
        Ok(self.gather(&idx))
    }

    pub fn gather(&self, idx: &[usize]) -> Batch {
        Batch {
            obs: self.obs.select(ndarray::Axis(0), idx),
            actions: self.actions.select(ndarray::Axis(0), idx),
            rewards: self.rewards.select(ndarray::Axis(0), idx),
            next_obs: self.next_obs.select(ndarray::Axis(0), idx),
            dones: self.dones.select(ndarray::Axis(0), idx),
        }
    }

    /// Raw storage as `(name, rows, data)` for checkpointing.
    pub fn columns(&self) -> [(&'static str, &[f64], usize); 5] {
        [
            (
                "obs",
                self.obs.as_slice().expect("standard layout"),
                self.obs_dim(),
            ),
            (
                "actions",
                self.actions.as_slice().expect("standard layout"),
                self.act_dim(),
            ),
            (
                "rewards",
                self.rewards.as_slice().expect("standard layout"),
                1,
            ),
            (
                "next_obs",
                self.next_obs.as_slice().expect("standard layout"),
                self.obs_dim(),
            ),
            ("dones", self.dones.as_slice().expect("standard layout"), 1),
        ]
    }

    /// Rebuilds a buffer from [`ReplayBuffer::columns`] output.
    pub fn from_columns(
        capacity: usize,
        obs_dim: usize,
        act_dim: usize,
        cursor: usize,
        len: usize,
        columns: [&[f64]; 5],
    ) -> Result<Self> {
        let mut buf = Self::new(capacity, obs_dim, act_dim)?;
        ensure!(
            cursor < capacity && len <= capacity,
            "replay cursor/len out of range"
        );
        let [obs, actions, rewards, next_obs, dones] = columns;
        ensure!(
            obs.len() == capacity * obs_dim
                && next_obs.len() == capacity * obs_dim
                && actions.len() == capacity * act_dim
                && rewards.len() == capacity
                && dones.len() == capacity,
            "replay column sizes do not match capacity"
        );
        buf.obs
            .as_slice_mut()
            .expect("standard layout")
            .copy_from_slice(obs);
        buf.actions
            .as_slice_mut()
            .expect("standard layout")
            .copy_from_slice(actions);
        buf.rewards
            .as_slice_mut()
            .expect("standard layout")
            .copy_from_slice(rewards);
        buf.next_obs
            .as_slice_mut()
            .expect("standard layout")
            .copy_from_slice(next_obs);
        buf.dones
            .as_slice_mut()
            .expect("standard layout")
            .copy_from_slice(dones);
        buf.cursor = cursor;
        buf.len = len;
        Ok(buf)
    }
}
