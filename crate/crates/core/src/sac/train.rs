//! Policy training loop and outlier-latent collection.

use std::fmt::Write as _;
use std::path::Path;

use log::{info, warn};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::actor::{Actor, Mode};
use super::buffer::{ReplayBuffer, Transition};
use super::critic::TwinCritics;
use super::update::{actor_update, alpha_update, critic_update, soft_targets, TemperatureState};
use super::SacConfig;
use crate::env::LatentEnv;
use crate::error::{Error, Result};
use crate::nn::Adam;
use crate::rng::stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub actor: Actor,
    pub critics: TwinCritics,
    pub temperature: TemperatureState,
}

/// Means over one logging window. Fields without data in the window
/// (no finished episode, no gradient update yet) are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyLogRow {
    pub step: usize,
    pub episode_reward_mean: Option<f64>,
    pub entropy_mean: Option<f64>,
    pub alpha: f64,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
}

#[derive(Default)]
struct Window {
    episode_rewards: Vec<f64>,
    entropies: Vec<f64>,
    critic_losses: Vec<f64>,
    actor_losses: Vec<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Interleaves rollouts with one gradient update per environment step after
/// `warmup` uniformly random steps.
pub fn train_policy(env: &LatentEnv, cfg: &SacConfig, seed: u64) -> Result<(Policy, Vec<PolicyLogRow>)> {
    cfg.validate()?;
    let dim = env.dim();
    let mut init = stream(seed, "sac-init", 0);
    let mut actor = Actor::new(dim, &cfg.hidden, env.action_scale, &mut init);
    let mut critics = TwinCritics::new(dim, &cfg.hidden, &mut init);
    let mut temp = TemperatureState {
        log_alpha: cfg.init_log_alpha,
        lr: cfg.alpha_lr,
    };
    let mut actor_opt = Adam::new(cfg.actor_lr, actor.net.params());
    let mut critic_opt = Adam::new(cfg.critic_lr, critics.params());
    let mut buffer = ReplayBuffer::new(cfg.buffer_size);

    let mut rollout_rng = stream(seed, "sac-rollout", 0);
    let mut update_rng = stream(seed, "sac-update", 0);
    let mut state = env.reset(&mut rollout_rng);
    let mut episode_reward = 0.0;
    let mut window = Window::default();
    let mut log = Vec::new();

    for step in 0..cfg.budget {
        let action: Vec<f64> = if step < cfg.warmup {
            (0..dim)
                .map(|_| env.action_scale * (2.0 * rollout_rng.random::<f64>() - 1.0))
                .collect()
        } else {
            actor
                .sample_action(&state.position, Mode::Stochastic, &mut rollout_rng)
                .map_err(|e| e.in_stage("policy rollout"))?
                .0
        };
        let h_target = env.target_entropy(&state.position);
        let out = env.step(&state, &action)?;
        episode_reward += out.reward;
        buffer.push(Transition {
            s: state.position.clone(),
            a: action,
            r: out.reward,
            s2: out.state.position.clone(),
            done: out.done,
            h_target,
        });
        state = if out.done {
            window.episode_rewards.push(episode_reward);
            episode_reward = 0.0;
            env.reset(&mut rollout_rng)
        } else {
            out.state
        };

        if step >= cfg.warmup && buffer.len() >= cfg.batch_size {
            let batch = buffer.sample(cfg.batch_size, &mut update_rng);
            let alpha = temp.alpha();
            let eps = actor.noise(batch.len(), &mut update_rng);
            let targets = soft_targets(&batch, &critics, &actor, alpha, cfg.discount, &eps);
            let (l1, l2) = critic_update(&batch, &mut critics, &mut critic_opt, &targets)?;
            let eps = actor.noise(batch.len(), &mut update_rng);
            let (actor_loss, log_probs) = actor_update(&batch.s, &mut actor, &mut actor_opt, &critics, alpha, eps)?;
            alpha_update(&mut temp, &log_probs, &batch.h_target)?;
            critics.polyak(cfg.polyak);
            if !actor.net.is_finite() {
                return Err(Error::non_finite("actor parameters"));
            }
            if !critics.is_finite() {
                return Err(Error::non_finite("critic parameters"));
            }
            window.critic_losses.push(0.5 * (l1 + l2));
            window.actor_losses.push(actor_loss);
            window.entropies.push(-log_probs.iter().sum::<f64>() / log_probs.len() as f64);
        }

        if (step + 1) % cfg.log_every == 0 || step + 1 == cfg.budget {
            let w = std::mem::take(&mut window);
            log.push(PolicyLogRow {
                step: step + 1,
                episode_reward_mean: mean(&w.episode_rewards),
                entropy_mean: mean(&w.entropies),
                alpha: temp.alpha(),
                critic_loss: mean(&w.critic_losses),
                actor_loss: mean(&w.actor_losses),
            });
        }
    }
    if let Some(r) = log.last() {
        info!(
            "policy trained: {} steps, last window reward {:?}, alpha {:.4}",
            r.step, r.episode_reward_mean, r.alpha
        );
    }
    Ok((Policy { actor, critics, temperature: temp }, log))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn policy_csv(log: &[PolicyLogRow]) -> String {
    let mut s = String::from("step,episode_reward_mean,entropy_mean,alpha,critic_loss,actor_loss\n");
    for r in log {
        writeln!(
            s,
            "{},{},{},{:?},{},{}",
            r.step,
            opt(r.episode_reward_mean),
            opt(r.entropy_mean),
            r.alpha,
            opt(r.critic_loss),
            opt(r.actor_loss)
        )
        .unwrap();
    }
    s
}

pub fn write_policy_csv(log: &[PolicyLogRow], path: &Path) -> Result<()> {
    std::fs::write(path, policy_csv(log)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollectConfig {
    /// Fraction of each episode skipped before states are recorded.
    pub burn_in: f64,
    /// States with reward below `-eps_keep` are discarded.
    pub eps_keep: f64,
    /// Episode cap as a multiple of `count / max_steps`.
    pub episode_cap_factor: usize,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            burn_in: 0.25,
            eps_keep: 0.05,
            episode_cap_factor: 50,
        }
    }
}

impl CollectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::InvalidConfig(format!("burn_in must lie in [0,1), got {}", self.burn_in)));
        }
        if !(self.eps_keep >= 0.0) {
            return Err(Error::InvalidConfig(format!("eps_keep must be non-negative, got {}", self.eps_keep)));
        }
        if self.episode_cap_factor == 0 {
            return Err(Error::InvalidConfig("episode_cap_factor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Collected {
    pub latents: Vec<Vec<f64>>,
    pub episodes: usize,
    /// True when the episode cap stopped collection early.
    pub partial: bool,
}

/// Rolls out the stochastic policy from midpoint starts and keeps visited
/// states past the burn-in whose reward is at least `-eps_keep`.
pub fn collect_outlier_latents(actor: &Actor, env: &LatentEnv, count: usize, cfg: &CollectConfig, seed: u64) -> Result<Collected> {
    cfg.validate()?;
    let burn = (cfg.burn_in * env.max_steps as f64).ceil() as usize;
    let cap = cfg.episode_cap_factor * count.div_ceil(env.max_steps).max(1);
    let mut rng = stream(seed, "collect", 0);
    let mut latents = Vec::with_capacity(count);
    let mut episodes = 0;
    while latents.len() < count && episodes < cap {
        let mut state = env.reset(&mut rng);
        loop {
            let (a, _) = actor.sample_action(&state.position, Mode::Stochastic, &mut rng)?;
            let out = env.step(&state, &a)?;
            if out.state.step > burn && out.reward >= -cfg.eps_keep && env.inside(&out.state.position) {
                latents.push(out.state.position.clone());
                if latents.len() == count {
                    break;
                }
            }
            if out.done {
                break;
            }
            state = out.state;
        }
        episodes += 1;
    }
    let partial = latents.len() < count;
    if partial {
        warn!("episode cap {cap} reached with {} of {count} latents", latents.len());
    }
    Ok(Collected {
        latents,
        episodes,
        partial,
    })
}
