//! Tanh-squashed diagonal Gaussian policy.

use ndarray::{s, Array2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{softplus, Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, MlpVars};
use crate::rng::Rng;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LOG_TAU: f64 = 0.918_938_533_204_672_7;
const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Stochastic,
    Deterministic,
}

/// State -> (mean, log-std) network. Actions are `scale * tanh(u)` with
/// `u ~ N(mean, std^2)`. Log-densities are those of the normalized action
/// `tanh(u)` in `(-1, 1)^D`, i.e. they exclude the constant `-D ln(scale)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub net: Mlp,
    pub scale: f64,
}

#[derive(Clone, Debug)]
pub struct ActorVars {
    net: MlpVars,
    dim: usize,
    scale: f64,
}

/// `log(1 - tanh(u)^2)` without cancellation.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

impl Actor {
    pub fn new(dim: usize, hidden: &[usize], scale: f64, rng: &mut Rng) -> Self {
        let mut dims = vec![dim];
        dims.extend_from_slice(hidden);
        dims.push(2 * dim);
        Self {
            net: Mlp::new(&dims, Activation::Relu, rng),
            scale,
        }
    }

    pub fn dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Means and clamped log-stds for a batch of states.
    pub fn head(&self, states: &Mat) -> (Mat, Mat) {
        let out = self.net.forward(states);
        let d = self.dim();
        let mean = out.slice(s![.., ..d]).to_owned();
        let log_std = out.slice(s![.., d..]).mapv(|x| x.clamp(LOG_STD_MIN, LOG_STD_MAX));
        (mean, log_std)
    }

    /// Reparameterized batch sample from standard-normal `eps`.
    pub fn sample_with_noise(&self, states: &Mat, eps: &Mat) -> (Mat, Vec<f64>) {
        let (mean, log_std) = self.head(states);
        let (n, d) = mean.dim();
        let mut actions = Mat::zeros((n, d));
        let mut log_probs = vec![0.0; n];
        for i in 0..n {
            let mut lp = 0.0;
            for j in 0..d {
                let e = eps[[i, j]];
                let ls = log_std[[i, j]];
                let u = mean[[i, j]] + ls.exp() * e;
                actions[[i, j]] = self.scale * u.tanh();
                lp += -0.5 * e * e - ls - HALF_LOG_TAU - log_one_minus_tanh_sq(u);
            }
            log_probs[i] = lp;
        }
        (actions, log_probs)
    }

    pub fn noise(&self, n: usize, rng: &mut Rng) -> Mat {
        Array2::from_shape_fn((n, self.dim()), |_| StandardNormal.sample(rng))
    }

    /// One action for state `s`; the log-probability is `None` in
    /// deterministic mode (squashed mean).
    pub fn sample_action(&self, s: &[f64], mode: Mode, rng: &mut Rng) -> Result<(Vec<f64>, Option<f64>)> {
        let states = Array2::from_shape_vec((1, s.len()), s.to_vec()).map_err(|_| Error::DimensionMismatch {
            expected: self.dim(),
            got: s.len(),
        })?;
        if s.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: s.len(),
            });
        }
        let (a, lp) = match mode {
            Mode::Deterministic => {
                let (mean, _) = self.head(&states);
                (mean.row(0).iter().map(|m| self.scale * m.tanh()).collect::<Vec<_>>(), None)
            }
            Mode::Stochastic => {
                let eps = self.noise(1, rng);
                let (a, lp) = self.sample_with_noise(&states, &eps);
                (a.row(0).to_vec(), Some(lp[0]))
            }
        };
        if a.iter().any(|x| !x.is_finite()) || lp.is_some_and(|l| !l.is_finite()) {
            return Err(Error::non_finite("actor output"));
        }
        Ok((a, lp))
    }

    pub fn bind(&self, t: &Tape) -> ActorVars {
        ActorVars {
            net: self.net.bind(t),
            dim: self.dim(),
            scale: self.scale,
        }
    }
}

impl ActorVars {
    /// Reparameterized sample on the tape: `(actions n x D, log_probs n x 1)`.
    pub fn sample(&self, t: &Tape, states: Var, eps: Mat) -> (Var, Var) {
        let d = self.dim;
        let out = self.net.forward(t, states);
        let mean = t.slice_cols(out, 0, d);
        let log_std = t.slice_cols(out, d, 2 * d);
        let log_std = t.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX);
        let std = t.exp(log_std);
        let e = t.constant(eps.clone());
        let spread = t.mul(std, e);
        let u = t.add(mean, spread);
        let y = t.tanh(u);
        let actions = t.scale(y, self.scale);

        // log(1 - tanh^2 u) = 2 (ln 2 - u - softplus(-2u))
        let neg2u = t.scale(u, -2.0);
        let sp = t.softplus(neg2u);
        let jac = t.add(u, sp);
        let jac = t.offset(jac, -LN_2);
        let jac = t.scale(jac, -2.0);

        let gauss = eps.mapv(|x| -0.5 * x * x - HALF_LOG_TAU);
        let gauss = t.constant(gauss);
        let lp = t.sub(gauss, log_std);
        let lp = t.sub(lp, jac);
        (actions, t.sum_rows(lp))
    }

    pub fn vars(&self) -> Vec<Var> {
        self.net.vars()
    }
}
