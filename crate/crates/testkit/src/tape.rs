/// Index of a scalar on a [`Tape`] together with its forward value.
#[derive(Debug, Clone, Copy)]
pub struct Var {
    pub id: usize,
    pub val: f64,
}

/// Every node stores its parents with the local partial derivative.
#[derive(Default)]
pub struct Tape {
    parents: Vec<Vec<(usize, f64)>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, val: f64, parents: Vec<(usize, f64)>) -> Var {
        self.parents.push(parents);
        Var {
            id: self.parents.len() - 1,
            val,
        }
    }

    pub fn leaf(&mut self, val: f64) -> Var {
        self.push(val, Vec::new())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.push(a.val + b.val, vec![(a.id, 1.0), (b.id, 1.0)])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.push(a.val - b.val, vec![(a.id, 1.0), (b.id, -1.0)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.push(a.val * b.val, vec![(a.id, b.val), (b.id, a.val)])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.push(
            a.val / b.val,
            vec![(a.id, 1.0 / b.val), (b.id, -a.val / (b.val * b.val))],
        )
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.push(k * a.val, vec![(a.id, k)])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let e = a.val.exp();
        self.push(e, vec![(a.id, e)])
    }

    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let val = xs.iter().fold(0.0, |acc, x| acc + x.val);
        self.push(val, xs.iter().map(|x| (x.id, 1.0)).collect())
    }

    /// `value` on the forward pass; `d/da = slope` on the backward pass.
    pub fn custom(&mut self, value: f64, a: Var, slope: f64) -> Var {
        self.push(value, vec![(a.id, slope)])
    }

    /// Reverse sweep from `out`; returns `d out / d node` for every node.
    pub fn gradient(&self, out: Var) -> Vec<f64> {
        let mut g = vec![0.0; self.parents.len()];
        g[out.id] = 1.0;
        for id in (0..=out.id).rev() {
            let gi = g[id];
            if gi == 0.0 {
                continue;
            }
            for &(p, local) in &self.parents[id] {
                g[p] += gi * local;
            }
        }
        g
    }
}

/// Relative error with a floor on the denominator, so that two values that
/// are both essentially zero compare as equal.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest [`rel_err`] over two equally long slices.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter()
        .zip(b)
        .map(|(&x, &y)| rel_err(x, y, floor))
        .fold(0.0, f64::max)
}
