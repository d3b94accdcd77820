//! Prototypical graph embedder: GCN encoder, noise-expansion decoder,
//! learnable prototypes and the combined training objective.

pub mod decoder;
pub mod encoder;
pub mod losses;
pub mod prototypes;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AugmentationConfig;

pub use decoder::{Decoded, DecodedVars, Decoder, DecoderVars};
pub use encoder::{Encoded, Encoder, EncoderVars};
pub use losses::{loss_dc, loss_ips, loss_pc, loss_recon_graph, BCE_EPS};
pub use prototypes::{assignment_probs, nearest_prototype, PrototypeSet};
pub use train::{batch_objective, loss_csv, train_embedder, write_loss_csv, BatchInput, BatchLosses, Embedder, EmbedderVars, EpochLoss};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedderConfig {
    /// Embedding dimension D.
    pub dim: usize,
    /// Number of prototypes K.
    pub k: usize,
    pub tau: f64,
    /// Weight of the adjacency cross-entropy inside the reconstruction loss.
    pub lambda: f64,
    /// Weight of the reconstruction loss in the total objective.
    pub gamma: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub decoder_hidden: usize,
    pub noise_dim: usize,
    pub augmentation: AugmentationConfig,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            k: 4,
            tau: 0.2,
            lambda: 1.0,
            gamma: 1e-3,
            epochs: 40,
            lr: 1e-3,
            batch_size: 32,
            hidden: vec![32],
            decoder_hidden: 32,
            noise_dim: 8,
            augmentation: AugmentationConfig::default(),
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.dim == 0 || self.decoder_hidden == 0 || self.noise_dim == 0 {
            return bad("embedder dims must be positive".into());
        }
        if self.k < 2 {
            return Err(Error::TooFewPrototypes(self.k));
        }
        if !(self.tau > 0.0) {
            return bad(format!("embedder.tau must be positive, got {}", self.tau));
        }
        if !(self.lambda >= 0.0) || !(self.gamma >= 0.0) {
            return bad("embedder.lambda and embedder.gamma must be non-negative".into());
        }
        if !(self.lr > 0.0) {
            return bad(format!("embedder.lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("embedder.batch_size must be positive".into());
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("embedder.hidden entries must be positive".into());
        }
        self.augmentation.validate()
    }
}
