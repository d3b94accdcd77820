use serde::{Deserialize, Serialize};

use crate::autodiff::{Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphDataset};
use crate::nn::Linear;
use crate::rng::Rng;

/// Stack of symmetric-normalized graph convolutions followed by mean pooling
/// and L2 normalization. ReLU between layers, linear output layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub layers: Vec<Linear>,
}

#[derive(Clone, Debug)]
pub struct Encoded {
    pub node_embeddings: Mat,
    /// Unit-norm graph embedding.
    pub graph_embedding: Vec<f64>,
}

/// Encoder parameters bound to a tape.
#[derive(Clone, Debug)]
pub struct EncoderVars {
    layers: Vec<(Var, Var)>,
    input_dim: usize,
}

impl Encoder {
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize, rng: &mut Rng) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        Self {
            layers: dims.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn bind(&self, t: &Tape) -> EncoderVars {
        EncoderVars {
            layers: self
                .layers
                .iter()
                .map(|l| (t.var(l.weight.clone()), t.var(l.bias.clone())))
                .collect(),
            input_dim: self.input_dim(),
        }
    }

    pub fn encode(&self, g: &Graph) -> Result<Encoded> {
        let t = Tape::new();
        let vars = self.bind(&t);
        let (nodes, graph) = vars.encode(&t, g)?;
        let node_embeddings = t.value(nodes).clone();
        let graph_embedding = t.value(graph).row(0).to_vec();
        Ok(Encoded {
            node_embeddings,
            graph_embedding,
        })
    }

    /// Unit-norm embedding of every graph, one row each.
    pub fn embed_dataset(&self, ds: &GraphDataset) -> Result<Mat> {
        let d = self.output_dim();
        let mut out = Mat::zeros((ds.len(), d));
        for (i, g) in ds.graphs.iter().enumerate() {
            let e = self.encode(g)?;
            for k in 0..d {
                out[[i, k]] = e.graph_embedding[k];
            }
        }
        Ok(out)
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
}

impl EncoderVars {
    /// Returns `(node embeddings n x D, graph embedding 1 x D)`.
    pub fn encode(&self, t: &Tape, g: &Graph) -> Result<(Var, Var)> {
        if g.feature_dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: g.feature_dim(),
            });
        }
        let a_hat = t.constant(g.normalized_adjacency());
        let mut h = t.constant(g.features().clone());
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let prop = t.matmul(a_hat, h);
            let lin = t.matmul(prop, w);
            h = t.add_row(lin, b);
            if i < last {
                h = t.relu(h);
            }
        }
        let pooled = t.mean_over_rows(h);
        Ok((h, t.normalize_rows(pooled)))
    }

    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}
