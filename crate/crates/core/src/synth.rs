//! Decoding latent points into pseudo-outlier graphs, plus the two
//! non-adaptive latent samplers used as baselines.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Mat;
use crate::embedder::Decoder;
use crate::env::{project, GlobalBoundary};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphDataset, Label, NodeHistogram};
use crate::rng::{derive_seed, stream};
use crate::sac::CollectConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub edge_threshold: f64,
    /// Gaussian baseline spread, as a fraction of `R_max`.
    pub sigma_gaussian: f64,
    pub eps_keep: f64,
    pub burn_in: f64,
    pub episode_cap_factor: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let c = CollectConfig::default();
        Self {
            edge_threshold: 0.5,
            sigma_gaussian: 0.1,
            eps_keep: c.eps_keep,
            burn_in: c.burn_in,
            episode_cap_factor: c.episode_cap_factor,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.edge_threshold > 0.0 && self.edge_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "synth.edge_threshold must lie in (0,1), got {}",
                self.edge_threshold
            )));
        }
        if !(self.sigma_gaussian >= 0.0) {
            return Err(Error::InvalidConfig("synth.sigma_gaussian must be non-negative".into()));
        }
        self.collect().validate()
    }

    pub fn collect(&self) -> CollectConfig {
        CollectConfig {
            burn_in: self.burn_in,
            eps_keep: self.eps_keep,
            episode_cap_factor: self.episode_cap_factor,
        }
    }
}

/// Which latent source feeds the synthesizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Pgos,
    Gaussian,
    Uniform,
    None,
}

impl Sampler {
    pub const ALL: [Sampler; 4] = [Sampler::Pgos, Sampler::Gaussian, Sampler::Uniform, Sampler::None];

    pub fn name(self) -> &'static str {
        match self {
            Sampler::Pgos => "pgos",
            Sampler::Gaussian => "gaussian",
            Sampler::Uniform => "uniform",
            Sampler::None => "none",
        }
    }
}

impl std::str::FromStr for Sampler {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Sampler::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown sampler `{s}`")))
    }
}

/// Decodes each latent with a node count drawn from `hist` and keeps edges
/// whose probability exceeds `edge_threshold`. Pure in its arguments.
pub fn synthesize_graphs(
    latents: &[Vec<f64>],
    decoder: &Decoder,
    hist: &NodeHistogram,
    edge_threshold: f64,
    seed: u64,
    origin: &str,
) -> Result<GraphDataset> {
    if latents.is_empty() {
        return Err(Error::Empty("latents to synthesize"));
    }
    if hist.total() == 0 {
        return Err(Error::Empty("node-count histogram"));
    }
    let mut graphs = Vec::with_capacity(latents.len());
    for (i, z) in latents.iter().enumerate() {
        let n = hist.sample(&mut stream(seed, "synth-nodes", i as u64));
        let decoded = decoder.decode(z, n, derive_seed(seed, "synth-decode", i as u64))?;
        if decoded.features.iter().any(|x| !x.is_finite()) {
            return Err(Error::non_finite("decoded features"));
        }
        let adjacency = decoded.edge_probs.mapv(|p| if p > edge_threshold { 1.0 } else { 0.0 });
        graphs.push(Graph::new(adjacency, decoded.features)?);
    }
    let mut ds = GraphDataset::new(format!("synthetic-{origin}"), graphs).with_label(Label::Ood);
    ds.origin = Some(origin.to_string());
    Ok(ds)
}

/// Midpoints of two distinct uniformly drawn prototypes plus isotropic
/// Gaussian noise of standard deviation `sigma`, projected into the boundary.
pub fn gaussian_midpoint_sampler(
    prototypes: &Mat,
    boundary: &GlobalBoundary,
    count: usize,
    sigma: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let k = prototypes.nrows();
    if k < 2 {
        return Err(Error::TooFewPrototypes(k));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidConfig(format!("sigma must be non-negative, got {sigma}")));
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = stream(seed, "gaussian-sampler", 0);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let a = rng.random_range(0..k);
        let mut b = rng.random_range(0..k - 1);
        if b >= a {
            b += 1;
        }
        let p: Vec<f64> = prototypes
            .row(a)
            .iter()
            .zip(prototypes.row(b).iter())
            .map(|(x, y)| 0.5 * (x + y) + noise.sample(&mut rng))
            .collect();
        out.push(project(&p, boundary));
    }
    Ok(out)
}

/// Uniform draws from the ball `(mu_g, R_max)`.
pub fn uniform_boundary_sampler(boundary: &GlobalBoundary, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = boundary.mu_g.len();
    let mut rng = stream(seed, "uniform-sampler", 0);
    (0..count)
        .map(|_| {
            let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let u: f64 = rng.random();
            let r = boundary.r_max * u.powf(1.0 / d as f64);
            boundary.mu_g.iter().zip(&dir).map(|(m, x)| m + r * x / norm).collect()
        })
        .collect()
}
