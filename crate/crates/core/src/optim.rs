//! Adaptive moment estimation (Adam) over any [`Parameters`] set.

use crate::checkpoint::{Checkpoint, Tensor};
use crate::error::{Error, Result};
use crate::params::{snapshot, Parameters};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state. Moments are allocated lazily on the first step so one
/// `Adam` can be created before the model it will drive.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(AdamConfig::default())
    }
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    /// One bias-corrected update of `params` along `grads`.
    ///
    /// Fails without touching `params` if any gradient is non-finite or the
    /// two sets do not line up tensor for tensor.
    pub fn step<P: Parameters, G: Parameters>(
        &mut self,
        params: &mut P,
        grads: &G,
        lr: f64,
    ) -> Result<()> {
        let grads = snapshot(grads);
        if let Some((name, _)) = grads.iter().find(|(_, g)| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::Training(format!("non-finite gradient in `{name}`")));
        }
        let mut layout = Vec::new();
        params.visit(&mut |name, _, data| layout.push((name.to_string(), data.len())));
        let aligned = layout.len() == grads.len()
            && layout
                .iter()
                .zip(&grads)
                .all(|((n, len), (gn, g))| n == gn && *len == g.len());
        if !aligned {
            return Err(Error::Contract(
                "gradient tensors do not match parameter tensors".into(),
            ));
        }
        if self.first_moment.is_empty() {
            self.first_moment = layout.iter().map(|(_, n)| vec![0.0; *n]).collect();
            self.second_moment = layout.iter().map(|(_, n)| vec![0.0; *n]).collect();
        } else if self.first_moment.len() != layout.len()
            || self
                .first_moment
                .iter()
                .zip(&layout)
                .any(|(m, (_, n))| m.len() != *n)
        {
            return Err(Error::Contract(
                "optimizer state does not match parameter tensors".into(),
            ));
        }

        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let mut i = 0;
        let (ms, vs) = (&mut self.first_moment, &mut self.second_moment);
        params.visit_mut(&mut |_, data| {
            let g = &grads[i].1;
            let m = &mut ms[i];
            let v = &mut vs[i];
            for k in 0..data.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                data[k] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
            i += 1;
        });
        Ok(())
    }

    /// Stores the step counter and both moment sets under `prefix.`.
    pub fn write_checkpoint(&self, prefix: &str, ck: &mut Checkpoint) {
        ck.push(Tensor::scalar(format!("{prefix}.step"), self.step as f64));
        ck.push(Tensor::scalar(
            format!("{prefix}.tensors"),
            self.first_moment.len() as f64,
        ));
        for (i, (m, v)) in self
            .first_moment
            .iter()
            .zip(&self.second_moment)
            .enumerate()
        {
            ck.push(Tensor::vector(format!("{prefix}.m.{i}"), m.clone()));
            ck.push(Tensor::vector(format!("{prefix}.v.{i}"), v.clone()));
        }
    }

    pub fn read_checkpoint(prefix: &str, ck: &Checkpoint, config: AdamConfig) -> Result<Self> {
        let step = ck.scalar(&format!("{prefix}.step"))? as u64;
        let n = ck.scalar(&format!("{prefix}.tensors"))? as usize;
        let mut adam = Self::new(config);
        adam.step = step;
        for i in 0..n {
            adam.first_moment
                .push(ck.require(&format!("{prefix}.m.{i}"))?.data.clone());
            adam.second_moment
                .push(ck.require(&format!("{prefix}.v.{i}"))?.data.clone());
        }
        Ok(adam)
    }
}
