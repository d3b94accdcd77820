//! Small dense layers, an MLP, and the Adam optimizer.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Mat, Tape, Var};
use crate::rng::Rng;

/// Glorot-uniform matrix.
pub fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> Mat {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).unwrap();
    Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    pub fn on_tape(self, t: &Tape, v: Var) -> Var {
        match self {
            Activation::Relu => t.relu(v),
            Activation::Tanh => t.tanh(v),
            Activation::Identity => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Mat,
    pub bias: Mat,
}

impl Linear {
    pub fn new(input: usize, output: usize, rng: &mut Rng) -> Self {
        Self {
            weight: glorot(input, output, rng),
            bias: Mat::zeros((1, output)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }
}

/// Feed-forward network with a shared hidden activation and a linear head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden_activation: Activation,
}

/// An [`Mlp`]'s parameters bound to a tape.
#[derive(Clone, Debug)]
pub struct MlpVars {
    layers: Vec<(Var, Var)>,
    activation: Activation,
}

impl Mlp {
    pub fn new(dims: &[usize], hidden_activation: Activation, rng: &mut Rng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output dims");
        let layers = dims.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect();
        Self {
            layers,
            hidden_activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    /// Forward pass without recording anything.
    pub fn forward(&self, x: &Mat) -> Mat {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.weight) + &layer.bias.row(0);
            if i < last {
                h.mapv_inplace(|v| self.hidden_activation.apply(v));
            }
        }
        h
    }

    /// Binds the parameters as differentiable leaves.
    pub fn bind(&self, t: &Tape) -> MlpVars {
        self.bind_with(t, true)
    }

    /// Binds the parameters as constants (e.g. a frozen critic).
    pub fn bind_frozen(&self, t: &Tape) -> MlpVars {
        self.bind_with(t, false)
    }

    fn bind_with(&self, t: &Tape, trainable: bool) -> MlpVars {
        let leaf = |m: &Mat| if trainable { t.var(m.clone()) } else { t.constant(m.clone()) };
        MlpVars {
            layers: self.layers.iter().map(|l| (leaf(&l.weight), leaf(&l.bias))).collect(),
            activation: self.hidden_activation,
        }
    }

    pub fn params(&self) -> Vec<&Mat> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// `self <- (1 - tau) * self + tau * source`.
    pub fn polyak_from(&mut self, source: &Mlp, tau: f64) {
        for (dst, src) in self.params_mut().into_iter().zip(source.params()) {
            dst.zip_mut_with(src, |d, &s| *d = (1.0 - tau) * *d + tau * s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|m| m.iter().all(|v| v.is_finite()))
    }
}

impl MlpVars {
    pub fn forward(&self, t: &Tape, x: Var) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = t.matmul(h, w);
            h = t.add_row(z, b);
            if i < last {
                h = self.activation.on_tape(t, h);
            }
        }
        h
    }

    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new<'a>(lr: f64, params: impl IntoIterator<Item = &'a Mat>) -> Self {
        let m: Vec<Mat> = params.into_iter().map(|p| Mat::zeros(p.dim())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn step(&mut self, params: Vec<&mut Mat>, grads: &[Mat]) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        self.step += 1;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let lr = self.lr;
        let eps = self.eps;
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

/// Uniform random unit vector of dimension `dim`.
pub fn random_unit(dim: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| rand_distr::StandardNormal.sample(rng))
            .collect();
        let n = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
        let _: u32 = rng.random();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn tape_and_plain_forward_agree() {
        let mut rng = stream(1, "mlp", 0);
        let mlp = Mlp::new(&[3, 5, 2], Activation::Tanh, &mut rng);
        let x = glorot(4, 3, &mut rng);
        let t = Tape::new();
        let vars = mlp.bind(&t);
        let xi = t.constant(x.clone());
        let y = vars.forward(&t, xi);
        let diff = &*t.value(y) - &mlp.forward(&x);
        assert!(diff.iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn polyak_contracts_distance() {
        let mut rng = stream(2, "mlp", 0);
        let src = Mlp::new(&[2, 4, 1], Activation::Relu, &mut rng);
        let mut dst = Mlp::new(&[2, 4, 1], Activation::Relu, &mut rng);
        let dist = |a: &Mlp, b: &Mlp| -> f64 {
            a.params()
                .iter()
                .zip(b.params())
                .map(|(x, y)| (*x - y).mapv(|d| d * d).sum())
                .sum::<f64>()
                .sqrt()
        };
        let before = dist(&dst, &src);
        dst.polyak_from(&src, 0.1);
        let after = dist(&dst, &src);
        assert!((after - 0.9 * before).abs() < 1e-12);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut x = Mat::from_elem((1, 2), 3.0);
        let mut opt = Adam::new(0.1, [&x]);
        for _ in 0..500 {
            let g = x.mapv(|v| 2.0 * v);
            opt.step(vec![&mut x], &[g]);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2));
    }
}
