//! Soft actor-critic over the latent environment, with the temperature
//! tuned against a state-dependent target entropy.

pub mod actor;
pub mod buffer;
pub mod critic;
pub mod update;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use actor::{Actor, ActorVars, Mode};
pub use buffer::{Batch, ReplayBuffer, Transition};
pub use critic::{q_min_on_tape, TwinCritics};
pub use train::{collect_outlier_latents, policy_csv, train_policy, write_policy_csv, CollectConfig, Collected, Policy, PolicyLogRow};
pub use update::{actor_update, alpha_update, critic_update, soft_targets, TemperatureState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SacConfig {
    pub discount: f64,
    pub polyak: f64,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub warmup: usize,
    /// Total environment steps.
    pub budget: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub hidden: Vec<usize>,
    pub init_log_alpha: f64,
    /// Environment steps per log row.
    pub log_every: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            discount: 0.99,
            polyak: 0.005,
            buffer_size: 50_000,
            batch_size: 128,
            warmup: 1_000,
            budget: 30_000,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            hidden: vec![64, 64],
            init_log_alpha: 0.0,
            log_every: 1_000,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.discount) {
            return bad(format!("sac.discount must lie in [0,1], got {}", self.discount));
        }
        if !(self.polyak > 0.0 && self.polyak <= 1.0) {
            return bad(format!("sac.polyak must lie in (0,1], got {}", self.polyak));
        }
        if self.buffer_size == 0 || self.batch_size == 0 || self.budget == 0 || self.log_every == 0 {
            return bad("sac.buffer_size, batch_size, budget and log_every must be positive".into());
        }
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr), ("alpha_lr", self.alpha_lr)] {
            if !(lr > 0.0) {
                return bad(format!("sac.{name} must be positive, got {lr}"));
            }
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h == 0) {
            return bad("sac.hidden must list positive widths".into());
        }
        if !self.init_log_alpha.is_finite() {
            return bad("sac.init_log_alpha must be finite".into());
        }
        Ok(())
    }
}
