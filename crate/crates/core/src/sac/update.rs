//! Critic, actor and temperature updates.

use serde::{Deserialize, Serialize};

use super::actor::Actor;
use super::buffer::Batch;
use super::critic::{q_min_on_tape, TwinCritics};
use crate::autodiff::{Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::Adam;

/// `alpha = exp(log_alpha)`, updated by plain gradient steps on `log_alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureState {
    pub log_alpha: f64,
    pub lr: f64,
}

impl TemperatureState {
    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }
}

/// Soft Bellman targets `r + discount (1 - done) (min target-Q(s', a') - alpha log pi(a'|s'))`
/// with `a'` drawn from the actor using `eps`.
pub fn soft_targets(batch: &Batch, critics: &TwinCritics, actor: &Actor, alpha: f64, discount: f64, eps: &Mat) -> Vec<f64> {
    let (a2, lp2) = actor.sample_with_noise(&batch.s2, eps);
    let q2 = critics.target_min(&batch.s2, &a2);
    (0..batch.len())
        .map(|i| {
            if batch.done[i] {
                batch.r[i]
            } else {
                batch.r[i] + discount * (q2[i] - alpha * lp2[i])
            }
        })
        .collect()
}

/// Regresses both live critics onto `targets`; returns the two mean squared errors.
pub fn critic_update(batch: &Batch, critics: &mut TwinCritics, opt: &mut Adam, targets: &[f64]) -> Result<(f64, f64)> {
    if batch.is_empty() {
        return Err(Error::Empty("critic batch"));
    }
    let t = Tape::new();
    let (v1, v2) = critics.bind(&t, true);
    let x = t.constant(super::critic::state_action(&batch.s, &batch.a));
    let y = t.constant(Mat::from_shape_vec((targets.len(), 1), targets.to_vec()).unwrap());
    let loss = |q: Var| {
        let d = t.sub(q, y);
        let sq = t.square(d);
        t.mean(sq)
    };
    let q1 = v1.forward(&t, x);
    let q2 = v2.forward(&t, x);
    let l1 = loss(q1);
    let l2 = loss(q2);
    let total = t.add(l1, l2);
    let (l1v, l2v) = (t.scalar_value(l1), t.scalar_value(l2));
    if !l1v.is_finite() || !l2v.is_finite() {
        return Err(Error::non_finite("critic loss"));
    }
    let mut vars = v1.vars();
    vars.extend(v2.vars());
    let grads = t.backward(total).collect(&vars);
    opt.step(critics.params_mut(), &grads);
    Ok((l1v, l2v))
}

/// Minimizes `mean(alpha log pi(a|s) - min Q(s, a))` with `a` reparameterized
/// from `eps`; critics are frozen. Returns the loss and the per-sample log-probs.
pub fn actor_update(states: &Mat, actor: &mut Actor, opt: &mut Adam, critics: &TwinCritics, alpha: f64, eps: Mat) -> Result<(f64, Vec<f64>)> {
    if states.nrows() == 0 {
        return Err(Error::Empty("actor batch"));
    }
    let t = Tape::new();
    let av = actor.bind(&t);
    let cv = critics.bind(&t, false);
    let s = t.constant(states.clone());
    let (a, lp) = av.sample(&t, s, eps);
    let q = q_min_on_tape(&t, &cv, s, a);
    let weighted = t.scale(lp, alpha);
    let diff = t.sub(weighted, q);
    let loss = t.mean(diff);
    let lv = t.scalar_value(loss);
    if !lv.is_finite() {
        return Err(Error::non_finite("actor loss"));
    }
    let log_probs = t.value(lp).column(0).to_vec();
    let grads = t.backward(loss).collect(&av.vars());
    opt.step(actor.net.params_mut(), &grads);
    Ok((lv, log_probs))
}

/// `log_alpha <- log_alpha - lr * mean(-log pi - h_target)`: the temperature
/// rises while the policy's entropy is below its target and falls above it.
/// Returns the gradient used.
pub fn alpha_update(temp: &mut TemperatureState, log_probs: &[f64], h_targets: &[f64]) -> Result<f64> {
    if log_probs.is_empty() {
        return Err(Error::Empty("temperature batch"));
    }
    let g = log_probs.iter().zip(h_targets).map(|(lp, h)| -lp - h).sum::<f64>() / log_probs.len() as f64;
    if !g.is_finite() {
        return Err(Error::non_finite("temperature update"));
    }
    temp.log_alpha -= temp.lr * g;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;
    use crate::rng::stream;
    use crate::sac::buffer::Transition;
    use ndarray::array;

    fn batch_of(ts: Vec<Transition>) -> Batch {
        let refs: Vec<&Transition> = ts.iter().collect();
        Batch::from_transitions(&refs)
    }

    fn tr(s: f64, a: f64, r: f64, s2: f64, done: bool) -> Transition {
        Transition { s: vec![s], a: vec![a], r, s2: vec![s2], done, h_target: 0.0 }
    }

    #[test]
    fn terminal_and_zero_discount_targets_are_rewards() {
        let mut rng = stream(0, "u", 0);
        let actor = Actor::new(1, &[4], 0.5, &mut rng);
        let critics = TwinCritics::new(1, &[4], &mut rng);
        let b = batch_of(vec![tr(0.1, 0.2, -0.7, 0.3, true), tr(0.0, 0.1, -0.2, 0.5, false)]);
        let eps = actor.noise(2, &mut rng);
        let y = soft_targets(&b, &critics, &actor, 0.3, 0.99, &eps);
        assert_eq!(y[0], -0.7);
        let y0 = soft_targets(&b, &critics, &actor, 0.3, 0.0, &eps);
        assert_eq!(y0, vec![-0.7, -0.2]);
    }

    #[test]
    fn single_transition_target_by_hand() {
        // Actor: mean = 0, log_std = 0 for all states; critic targets constant 2 and 5.
        let zero = |i: usize, o: usize| Linear { weight: Mat::zeros((i, o)), bias: Mat::zeros((1, o)) };
        let mut rng = stream(1, "u", 0);
        let mut actor = Actor::new(1, &[2], 1.0, &mut rng);
        actor.net.layers = vec![zero(1, 2), zero(2, 2)];
        let mut critics = TwinCritics::new(1, &[2], &mut rng);
        critics.target1.layers = vec![zero(2, 2), Linear { weight: Mat::zeros((2, 1)), bias: array![[2.0]] }];
        critics.target2.layers = vec![zero(2, 2), Linear { weight: Mat::zeros((2, 1)), bias: array![[5.0]] }];
        let b = batch_of(vec![tr(0.0, 0.0, -1.0, 0.4, false)]);
        let eps = array![[0.5]];
        // u = 0.5, log pi = -0.125 - 0 - 0.5 ln(2 pi) - ln(1 - tanh(0.5)^2)
        let lp = -0.125 - 0.5 * (2.0 * std::f64::consts::PI).ln() - (1.0 - 0.5f64.tanh().powi(2)).ln();
        let expect = -1.0 + 0.9 * (2.0 - 0.2 * lp);
        let y = soft_targets(&b, &critics, &actor, 0.2, 0.9, &eps);
        assert!((y[0] - expect).abs() < 1e-12);
        // live critics play no part in the target
        critics.q1.layers[1].bias[[0, 0]] = -100.0;
        assert_eq!(soft_targets(&b, &critics, &actor, 0.2, 0.9, &eps), y);
    }

    #[test]
    fn alpha_moves_towards_target() {
        let mut t = TemperatureState { log_alpha: 0.0, lr: 0.1 };
        // entropy estimate -log pi = 1 equals target 1
        alpha_update(&mut t, &[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(t.log_alpha, 0.0);
        // entropy 0.5 below target 2 -> alpha increases
        alpha_update(&mut t, &[-0.5], &[2.0]).unwrap();
        assert!(t.alpha() > 1.0);
        assert!((t.log_alpha - 0.15).abs() < 1e-15);
        // entropy 3 above target 1 -> alpha decreases
        let before = t.alpha();
        alpha_update(&mut t, &[-3.0], &[1.0]).unwrap();
        assert!(t.alpha() < before && t.alpha() > 0.0);
    }

    #[test]
    fn alpha_zero_actor_loss_is_negative_q() {
        let mut rng = stream(2, "u", 0);
        let mut actor = Actor::new(2, &[4], 0.5, &mut rng);
        let critics = TwinCritics::new(2, &[4], &mut rng);
        let states = array![[0.1, 0.2], [0.3, -0.4]];
        let eps = actor.noise(2, &mut rng);
        let (a, _) = actor.sample_with_noise(&states, &eps);
        let q = critics.q_min(&states, &a);
        let mut opt = Adam::new(1e-3, actor.net.params());
        let (loss, _) = actor_update(&states, &mut actor, &mut opt, &critics, 0.0, eps).unwrap();
        assert!((loss + (q[0] + q[1]) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn critic_update_reduces_error() {
        let mut rng = stream(3, "u", 0);
        let mut critics = TwinCritics::new(1, &[8], &mut rng);
        let mut opt = Adam::new(1e-2, critics.params());
        let b = batch_of(vec![tr(0.1, 0.2, 1.0, 0.0, true), tr(-0.3, 0.1, -1.0, 0.0, true)]);
        let first = critic_update(&b, &mut critics, &mut opt, &b.r).unwrap();
        let mut last = first;
        for _ in 0..200 {
            last = critic_update(&b, &mut critics, &mut opt, &b.r).unwrap();
        }
        assert!(last.0 < first.0 && last.1 < first.1);
    }
}
