//! Uniform access to the named tensors of a model.
//!
//! Optimizers, soft target updates, checkpoints and gradient checks all walk
//! parameters through this trait, so a model and its gradient struct must
//! visit the same names in the same order with the same lengths.

use crate::error::{ensure, Result};

/// Callback receiving `(name, dims, row-major data)` for each tensor.
pub type TensorVisitor<'a> = dyn FnMut(&str, &[usize], &[f64]) + 'a;

pub trait Parameters {
    /// Visits every tensor as `(name, dims, row-major data)`.
    fn visit(&self, f: &mut TensorVisitor);

    /// Visits every tensor mutably, in the same order as [`Parameters::visit`].
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64]));

    fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit(&mut |name, _, _| names.push(name.to_string()));
        names
    }

    fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _, data| n += data.len());
        n
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, _, data| ok &= data.iter().all(|x| x.is_finite()));
        ok
    }

    /// Adds `delta` to the scalar at position `index` of [`Parameters::flatten`].
    fn nudge(&mut self, index: usize, delta: f64) {
        let mut offset = 0;
        self.visit_mut(&mut |_, data| {
            if (offset..offset + data.len()).contains(&index) {
                data[index - offset] += delta;
            }
            offset += data.len();
        });
    }

    /// Copies every tensor into one flat vector.
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        self.visit(&mut |_, _, data| out.extend_from_slice(data));
        out
    }
}

/// Collects owned copies of every tensor, used when two parameter sets have
/// to be zipped together.
pub(crate) fn snapshot(p: &impl Parameters) -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    p.visit(&mut |name, _, data| out.push((name.to_string(), data.to_vec())));
    out
}

/// `target <- tau * online + (1 - tau) * target`.
pub fn polyak_update<P: Parameters>(target: &mut P, online: &P, tau: f64) -> Result<()> {
    ensure!(
        tau > 0.0 && tau <= 1.0,
        "polyak tau must lie in (0, 1], got {tau}"
    );
    let src = snapshot(online);
    let mut i = 0;
    let mut mismatch = None;
    target.visit_mut(&mut |name, data| {
        match src.get(i) {
            Some((n, s)) if n == name && s.len() == data.len() => {
                if tau == 1.0 {
                    data.copy_from_slice(s);
                } else {
                    for (d, &o) in data.iter_mut().zip(s) {
                        // the clamp absorbs rounding so the result never
                        // leaves the segment between the two values
                        *d = (*d + tau * (o - *d)).clamp(d.min(o), d.max(o));
                    }
                }
            }
            _ => mismatch = Some(name.to_string()),
        }
        i += 1;
    });
    ensure!(
        mismatch.is_none() && i == src.len(),
        "polyak update on mismatched parameter sets ({mismatch:?})"
    );
    Ok(())
}
