//! Twin state-action value networks with polyak-averaged targets.

use ndarray::concatenate;
use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Mat, Tape, Var};
use crate::nn::{Activation, Mlp, MlpVars};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwinCritics {
    pub q1: Mlp,
    pub q2: Mlp,
    pub target1: Mlp,
    pub target2: Mlp,
    /// Number of polyak updates applied to the targets.
    pub target_version: u64,
}

pub fn state_action(states: &Mat, actions: &Mat) -> Mat {
    concatenate(Axis(1), &[states.view(), actions.view()]).expect("state/action row mismatch")
}

fn column(m: &Mat) -> Vec<f64> {
    m.column(0).to_vec()
}

impl TwinCritics {
    pub fn new(dim: usize, hidden: &[usize], rng: &mut Rng) -> Self {
        let mut dims = vec![2 * dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let q1 = Mlp::new(&dims, Activation::Relu, rng);
        let q2 = Mlp::new(&dims, Activation::Relu, rng);
        Self {
            target1: q1.clone(),
            target2: q2.clone(),
            q1,
            q2,
            target_version: 0,
        }
    }

    pub fn values(&self, states: &Mat, actions: &Mat) -> (Vec<f64>, Vec<f64>) {
        let x = state_action(states, actions);
        (column(&self.q1.forward(&x)), column(&self.q2.forward(&x)))
    }

    /// Element-wise minimum of the two live critics.
    pub fn q_min(&self, states: &Mat, actions: &Mat) -> Vec<f64> {
        let (a, b) = self.values(states, actions);
        a.into_iter().zip(b).map(|(x, y)| x.min(y)).collect()
    }

    /// Element-wise minimum of the two target critics.
    pub fn target_min(&self, states: &Mat, actions: &Mat) -> Vec<f64> {
        let x = state_action(states, actions);
        let a = column(&self.target1.forward(&x));
        let b = column(&self.target2.forward(&x));
        a.into_iter().zip(b).map(|(x, y)| x.min(y)).collect()
    }

    pub fn polyak(&mut self, tau: f64) {
        self.target1.polyak_from(&self.q1, tau);
        self.target2.polyak_from(&self.q2, tau);
        self.target_version += 1;
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat> {
        let mut p = self.q1.params_mut();
        p.extend(self.q2.params_mut());
        p
    }

    pub fn params(&self) -> Vec<&Mat> {
        let mut p = self.q1.params();
        p.extend(self.q2.params());
        p
    }

    pub fn is_finite(&self) -> bool {
        self.q1.is_finite() && self.q2.is_finite() && self.target1.is_finite() && self.target2.is_finite()
    }

    /// Live critics bound to `t`, trainable or frozen.
    pub fn bind(&self, t: &Tape, trainable: bool) -> (MlpVars, MlpVars) {
        if trainable {
            (self.q1.bind(t), self.q2.bind(t))
        } else {
            (self.q1.bind_frozen(t), self.q2.bind_frozen(t))
        }
    }
}

/// `min(Q1, Q2)` on the tape, n x 1.
pub fn q_min_on_tape(t: &Tape, critics: &(MlpVars, MlpVars), states: Var, actions: Var) -> Var {
    let x = t.concat_cols(&[states, actions]);
    let a = critics.0.forward(t, x);
    let b = critics.1.forward(t, x);
    let both = t.concat_cols(&[a, b]);
    t.min_rows(both)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;
    use crate::rng::stream;
    use ndarray::array;

    #[test]
    fn q_min_is_below_both() {
        let c = TwinCritics::new(2, &[8], &mut stream(1, "c", 0));
        let s = array![[0.1, 0.2], [-0.5, 0.3], [1.0, -1.0]];
        let a = array![[0.0, 0.1], [0.2, -0.2], [0.05, 0.0]];
        let (q1, q2) = c.values(&s, &a);
        for ((m, x), y) in c.q_min(&s, &a).iter().zip(&q1).zip(&q2) {
            assert!(m <= x && m <= y);
            assert!(m == x || m == y);
        }
    }

    #[test]
    fn equal_critics_give_either_value() {
        let mut c = TwinCritics::new(1, &[4], &mut stream(2, "c", 0));
        c.q2 = c.q1.clone();
        let s = array![[0.4]];
        let a = array![[-0.1]];
        let (q1, _) = c.values(&s, &a);
        assert_eq!(c.q_min(&s, &a), q1);
    }

    #[test]
    fn hand_set_one_dimensional_critics() {
        // Q1(s, a) = relu(s + 2a) * 3 - 1, Q2(s, a) = relu(-s + a) + 0.5
        let lin = |w: Mat, b: Mat| Linear { weight: w, bias: b };
        let mut c = TwinCritics::new(1, &[1], &mut stream(0, "c", 0));
        c.q1.layers = vec![lin(array![[1.0], [2.0]], array![[0.0]]), lin(array![[3.0]], array![[-1.0]])];
        c.q2.layers = vec![lin(array![[-1.0], [1.0]], array![[0.0]]), lin(array![[1.0]], array![[0.5]])];
        let s = array![[0.5], [-1.0]];
        let a = array![[0.25], [0.2]];
        // row 0: Q1 = 1*3-1 = 2, Q2 = 0 + 0.5 -> 0.5
        // row 1: Q1 = relu(-0.6)*3-1 = -1, Q2 = 1.2 + 0.5 = 1.7 -> -1
        assert_eq!(c.q_min(&s, &a), vec![0.5, -1.0]);
    }

    #[test]
    fn polyak_contracts_by_one_minus_tau() {
        let mut c = TwinCritics::new(2, &[6], &mut stream(3, "c", 0));
        let mut rng = stream(3, "c", 1);
        c.target1 = TwinCritics::new(2, &[6], &mut rng).q1;
        let dist = |c: &TwinCritics| -> f64 {
            c.target1
                .params()
                .iter()
                .zip(c.q1.params())
                .map(|(a, b)| (*a - b).mapv(|x| x * x).sum())
                .sum::<f64>()
                .sqrt()
        };
        let tau = 0.05;
        let mut prev = dist(&c);
        for _ in 0..20 {
            c.polyak(tau);
            let d = dist(&c);
            assert!((d / prev - (1.0 - tau)).abs() < 1e-9);
            prev = d;
        }
        assert_eq!(c.target_version, 20);
    }
}
