//! Graph decoder: one graph-level latent plus `n` seeded noise vectors are
//! expanded into node embeddings; edges come from an inner-product head and
//! node features from a small feed-forward head.

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{glorot, Activation, Linear, Mlp, MlpVars};
use crate::rng::{stream, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    /// latent (1 x D) -> shared node component (1 x h)
    pub expand_latent: Linear,
    /// noise (n x q) -> per-node component (n x h), no bias
    pub expand_noise: Mat,
    /// latent -> scalar logit offset controlling edge density
    pub density: Linear,
    pub feature_head: Mlp,
}

/// Decoder output: edge probabilities with zero diagonal, reconstructed features.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub edge_probs: Mat,
    pub features: Mat,
}

#[derive(Clone, Debug)]
pub struct DecoderVars {
    expand_latent: (Var, Var),
    expand_noise: Var,
    density: (Var, Var),
    feature_head: MlpVars,
}

/// Raw decoder outputs on a tape: edge logits (n x n, diagonal meaningless)
/// and reconstructed features (n x d).
#[derive(Clone, Copy, Debug)]
pub struct DecodedVars {
    pub logits: Var,
    pub features: Var,
}

impl Decoder {
    pub fn new(latent_dim: usize, hidden: usize, noise_dim: usize, feature_dim: usize, rng: &mut Rng) -> Self {
        Self {
            expand_latent: Linear::new(latent_dim, hidden, rng),
            expand_noise: glorot(noise_dim, hidden, rng),
            density: Linear::new(latent_dim, 1, rng),
            feature_head: Mlp::new(&[hidden, hidden, feature_dim], Activation::Relu, rng),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.expand_latent.input_dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.expand_noise.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_head.output_dim()
    }

    /// `n x q` standard-normal noise for decoding with `seed`.
    pub fn noise(&self, n: usize, seed: u64) -> Mat {
        let mut rng = stream(seed, "decoder-noise", n as u64);
        Array2::from_shape_fn((n, self.noise_dim()), |_| StandardNormal.sample(&mut rng))
    }

    pub fn bind(&self, t: &Tape) -> DecoderVars {
        DecoderVars {
            expand_latent: (t.var(self.expand_latent.weight.clone()), t.var(self.expand_latent.bias.clone())),
            expand_noise: t.var(self.expand_noise.clone()),
            density: (t.var(self.density.weight.clone()), t.var(self.density.bias.clone())),
            feature_head: self.feature_head.bind(t),
        }
    }

    /// Deterministic in `(latent, n, seed)`.
    pub fn decode(&self, latent: &[f64], n: usize, seed: u64) -> Result<Decoded> {
        if n == 0 {
            return Err(Error::Empty("decode with zero nodes"));
        }
        if latent.len() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                got: latent.len(),
            });
        }
        let t = Tape::new();
        let vars = self.bind(&t);
        let z = t.constant(Array2::from_shape_vec((1, latent.len()), latent.to_vec()).unwrap());
        let out = vars.decode(&t, z, self.noise(n, seed));
        let logits = t.value(out.logits);
        let edge_probs = Array2::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                0.0
            } else {
                let l = 0.5 * (logits[[i, j]] + logits[[j, i]]);
                1.0 / (1.0 + (-l).exp())
            }
        });
        drop(logits);
        let features = t.value(out.features).clone();
        Ok(Decoded { edge_probs, features })
    }

    pub fn params(&self) -> Vec<&Mat> {
        let mut p = vec![
            &self.expand_latent.weight,
            &self.expand_latent.bias,
            &self.expand_noise,
            &self.density.weight,
            &self.density.bias,
        ];
        p.extend(self.feature_head.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat> {
        let mut p = vec![
            &mut self.expand_latent.weight,
            &mut self.expand_latent.bias,
            &mut self.expand_noise,
            &mut self.density.weight,
            &mut self.density.bias,
        ];
        p.extend(self.feature_head.params_mut());
        p
    }
}

impl DecoderVars {
    pub fn decode(&self, t: &Tape, latent: Var, noise: Mat) -> DecodedVars {
        let n = noise.nrows();
        let shared = t.matmul(latent, self.expand_latent.0);
        let shared = t.add_row(shared, self.expand_latent.1);
        let xi = t.constant(noise);
        let per_node = t.matmul(xi, self.expand_noise);
        let pre = t.add_row(per_node, shared);
        let nodes = t.tanh(pre);

        let inner = t.matmul_t(nodes, nodes);
        let offset = t.matmul(latent, self.density.0);
        let offset = t.add(offset, self.density.1);
        let col = t.constant(Mat::ones((n, 1)));
        let row = t.constant(Mat::ones((1, n)));
        let offset = t.matmul(col, offset);
        let offset = t.matmul(offset, row);
        let logits = t.add(inner, offset);

        let features = self.feature_head.forward(t, nodes);
        DecodedVars { logits, features }
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut v = vec![
            self.expand_latent.0,
            self.expand_latent.1,
            self.expand_noise,
            self.density.0,
            self.density.1,
        ];
        v.extend(self.feature_head.vars());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decoder() -> Decoder {
        Decoder::new(4, 6, 3, 2, &mut stream(5, "dec", 0))
    }

    #[test]
    fn output_symmetric_zero_diagonal() {
        let d = decoder();
        let out = d.decode(&[0.5, -0.5, 0.5, 0.5], 7, 11).unwrap();
        assert_eq!(out.features.dim(), (7, 2));
        for i in 0..7 {
            assert_eq!(out.edge_probs[[i, i]], 0.0);
            for j in 0..7 {
                assert_eq!(out.edge_probs[[i, j]], out.edge_probs[[j, i]]);
                assert!((0.0..=1.0).contains(&out.edge_probs[[i, j]]));
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let d = decoder();
        let z = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(d.decode(&z, 5, 1).unwrap(), d.decode(&z, 5, 1).unwrap());
        assert_ne!(d.decode(&z, 5, 1).unwrap(), d.decode(&z, 5, 2).unwrap());
    }

    #[test]
    fn single_node_and_empty() {
        let d = decoder();
        assert_eq!(d.decode(&[0.0; 4], 1, 0).unwrap().edge_probs, Mat::zeros((1, 1)));
        assert!(d.decode(&[0.0; 4], 0, 0).is_err());
        assert!(d.decode(&[0.0; 3], 2, 0).is_err());
    }
}
