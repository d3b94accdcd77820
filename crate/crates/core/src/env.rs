//! Latent-space MDP: cluster statistics, repulsion reward, boundary
//! projection, distance-conditioned target entropy and episode mechanics.

use std::path::Path;

use log::warn;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::Mat;
use crate::embedder::{nearest_prototype, PrototypeSet};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Slack for floating-point drift of repeated projections.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Points this close outside the sphere count as inside, which makes
/// projection idempotent despite rounding in the rescale.
const PROJECTION_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Prototype index this cluster belongs to.
    pub index: usize,
    pub centroid: Vec<f64>,
    pub radius: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub clusters: Vec<Cluster>,
}

impl ClusterStats {
    /// Mean radius over non-empty clusters.
    pub fn r_bar(&self) -> f64 {
        if self.clusters.is_empty() {
            return 0.0;
        }
        self.clusters.iter().map(|c| c.radius).sum::<f64>() / self.clusters.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalBoundary {
    pub mu_g: Vec<f64>,
    pub r_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// Margin width as a multiple of each cluster's radius.
    pub delta_multiplier: f64,
    pub max_steps: usize,
    /// Maximum displacement norm per step, as a fraction of `R_max`.
    pub action_scale: f64,
    /// Peak target entropy; `None` means half the latent dimension.
    pub h_max: Option<f64>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            delta_multiplier: 0.5,
            max_steps: 32,
            action_scale: 0.1,
            h_max: None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("env.{name} must be positive, got {v}")))
            }
        };
        positive("delta_multiplier", self.delta_multiplier)?;
        positive("action_scale", self.action_scale)?;
        if let Some(h) = self.h_max {
            positive("h_max", h)?;
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("env.max_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn h_max_for(&self, dim: usize) -> f64 {
        self.h_max.unwrap_or(0.5 * dim as f64)
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Statistics of the given partition of `embeddings` into `k` groups.
/// Empty groups are dropped with a warning.
pub fn cluster_stats_from_assignment(
    embeddings: &Mat,
    assignment: &[usize],
    k: usize,
) -> Result<(ClusterStats, GlobalBoundary)> {
    let n = embeddings.nrows();
    if n == 0 {
        return Err(Error::Empty("cluster statistics need at least one embedding"));
    }
    let dim = embeddings.ncols();
    let rows: Vec<Vec<f64>> = embeddings.rows().into_iter().map(|r| r.to_vec()).collect();

    let mut clusters = Vec::new();
    for c in 0..k {
        let members: Vec<&Vec<f64>> = rows.iter().zip(assignment).filter(|(_, &a)| a == c).map(|(r, _)| r).collect();
        if members.is_empty() {
            warn!("prototype {c} has no members; dropped from cluster statistics");
            continue;
        }
        let mut centroid = vec![0.0; dim];
        for m in &members {
            for (acc, x) in centroid.iter_mut().zip(m.iter()) {
                *acc += x;
            }
        }
        centroid.iter_mut().for_each(|x| *x /= members.len() as f64);
        let radius = members.iter().map(|m| distance(m, &centroid)).fold(0.0, f64::max);
        clusters.push(Cluster {
            index: c,
            centroid,
            radius,
            count: members.len(),
        });
    }

    let mut mu_g = vec![0.0; dim];
    for r in &rows {
        for (acc, x) in mu_g.iter_mut().zip(r) {
            *acc += x;
        }
    }
    mu_g.iter_mut().for_each(|x| *x /= n as f64);
    let r_max = rows.iter().map(|r| distance(r, &mu_g)).fold(0.0, f64::max);
    if !(r_max > 0.0) {
        return Err(Error::DegenerateBoundary);
    }
    Ok((ClusterStats { clusters }, GlobalBoundary { mu_g, r_max }))
}

/// Clusters are the nearest-prototype sets of the embeddings.
pub fn compute_cluster_stats(embeddings: &Mat, protos: &PrototypeSet) -> Result<(ClusterStats, GlobalBoundary)> {
    let assignment: Vec<usize> = embeddings
        .rows()
        .into_iter()
        .map(|r| nearest_prototype(r.as_slice().expect("row-major embeddings"), protos))
        .collect();
    cluster_stats_from_assignment(embeddings, &assignment, protos.k())
}

/// Pulls `s` back onto the sphere `(mu_g, R_max)` if it lies outside.
pub fn project(s: &[f64], boundary: &GlobalBoundary) -> Vec<f64> {
    let d = distance(s, &boundary.mu_g);
    if d <= boundary.r_max + PROJECTION_SLACK {
        return s.to_vec();
    }
    let k = boundary.r_max / d;
    s.iter().zip(&boundary.mu_g).map(|(x, m)| m + k * (x - m)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub position: Vec<f64>,
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
}

/// The MDP with all derived constants resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentEnv {
    pub stats: ClusterStats,
    pub boundary: GlobalBoundary,
    /// Prototype rows used for episode starts.
    pub starts: Mat,
    pub max_steps: usize,
    /// Absolute displacement bound.
    pub action_scale: f64,
    pub h_max: f64,
    deltas: Vec<f64>,
    r_bar: f64,
}

impl LatentEnv {
    pub fn new(stats: ClusterStats, boundary: GlobalBoundary, starts: Mat, cfg: &EnvConfig) -> Result<Self> {
        cfg.validate()?;
        if stats.clusters.is_empty() {
            return Err(Error::Empty("cluster statistics"));
        }
        if !(boundary.r_max > 0.0) {
            return Err(Error::DegenerateBoundary);
        }
        if starts.nrows() < 2 {
            return Err(Error::TooFewPrototypes(starts.nrows()));
        }
        let dim = boundary.mu_g.len();
        if starts.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: starts.ncols(),
            });
        }
        let mut r_bar = stats.r_bar();
        if r_bar <= 0.0 {
            r_bar = boundary.r_max / 10.0;
            warn!("all cluster radii are zero; using R_max/10 = {r_bar} as mean radius");
        }
        let deltas = stats
            .clusters
            .iter()
            .map(|c| {
                if c.radius > 0.0 {
                    cfg.delta_multiplier * c.radius
                } else {
                    cfg.delta_multiplier * r_bar
                }
            })
            .collect();
        Ok(Self {
            action_scale: cfg.action_scale * boundary.r_max,
            h_max: cfg.h_max_for(dim),
            max_steps: cfg.max_steps,
            stats,
            boundary,
            starts,
            deltas,
            r_bar,
        })
    }

    pub fn dim(&self) -> usize {
        self.boundary.mu_g.len()
    }

    /// Mean cluster radius after the zero-radius fallback.
    pub fn r_bar(&self) -> f64 {
        self.r_bar
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    /// Repulsion penalty: `sum_i -(1 - (d_i - r_i)/delta_i)^2` over clusters
    /// whose margin contains `s`.
    pub fn reward(&self, s: &[f64]) -> f64 {
        let mut total = 0.0;
        for (c, &delta) in self.stats.clusters.iter().zip(&self.deltas) {
            let d = distance(s, &c.centroid);
            if d < c.radius + delta {
                let x = 1.0 - (d - c.radius) / delta;
                total -= x * x;
            }
        }
        total
    }

    pub fn min_centroid_distance(&self, s: &[f64]) -> f64 {
        self.stats
            .clusters
            .iter()
            .map(|c| distance(s, &c.centroid))
            .fold(f64::INFINITY, f64::min)
    }

    /// `H_max * exp(-(d_min - r_bar)^2 / (2 r_bar^2))`.
    pub fn target_entropy(&self, s: &[f64]) -> f64 {
        let d = self.min_centroid_distance(s) - self.r_bar;
        self.h_max * (-(d * d) / (2.0 * self.r_bar * self.r_bar)).exp()
    }

    pub fn project(&self, s: &[f64]) -> Vec<f64> {
        project(s, &self.boundary)
    }

    pub fn inside(&self, s: &[f64]) -> bool {
        distance(s, &self.boundary.mu_g) <= self.boundary.r_max + BOUNDARY_TOL
    }

    /// Two distinct prototype indices, uniform over unordered pairs.
    pub fn draw_pair(&self, rng: &mut Rng) -> (usize, usize) {
        let k = self.starts.nrows();
        let a = rng.random_range(0..k);
        let mut b = rng.random_range(0..k - 1);
        if b >= a {
            b += 1;
        }
        (a.min(b), a.max(b))
    }

    /// Starts at the midpoint of two distinct prototypes drawn uniformly.
    pub fn reset(&self, rng: &mut Rng) -> EnvState {
        let (a, b) = self.draw_pair(rng);
        let mid: Vec<f64> = self
            .starts
            .row(a)
            .iter()
            .zip(self.starts.row(b).iter())
            .map(|(x, y)| 0.5 * (x + y))
            .collect();
        EnvState {
            position: self.project(&mid),
            step: 0,
        }
    }

    /// `s' = project(s + a)` with `a` clipped to norm `action_scale`;
    /// the reward is evaluated at `s'`.
    pub fn step(&self, state: &EnvState, action: &[f64]) -> Result<StepOutcome> {
        if action.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: action.len(),
            });
        }
        if action.iter().any(|x| !x.is_finite()) {
            return Err(Error::non_finite("action"));
        }
        let norm = action.iter().map(|x| x * x).sum::<f64>().sqrt();
        let k = if norm > self.action_scale { self.action_scale / norm } else { 1.0 };
        let moved: Vec<f64> = state.position.iter().zip(action).map(|(s, a)| s + k * a).collect();
        let position = self.project(&moved);
        let reward = self.reward(&position);
        let step = state.step + 1;
        Ok(StepOutcome {
            state: EnvState { position, step },
            reward,
            done: step >= self.max_steps,
        })
    }
}

#[derive(Serialize)]
struct StatsDump<'a> {
    format_version: u32,
    config_hash: &'a str,
    seed: u64,
    clusters: &'a [Cluster],
    mu_g: &'a [f64],
    r_max: f64,
    r_bar: f64,
}

/// Writes cluster statistics and the boundary as JSON.
pub fn write_stats_json(env: &LatentEnv, path: &Path, config_hash: &str, seed: u64) -> Result<()> {
    let dump = StatsDump {
        format_version: 1,
        config_hash,
        seed,
        clusters: &env.stats.clusters,
        mu_g: &env.boundary.mu_g,
        r_max: env.boundary.r_max,
        r_bar: env.r_bar,
    };
    std::fs::write(path, serde_json::to_string_pretty(&dump)?).map_err(|e| Error::io(path, e))
}
