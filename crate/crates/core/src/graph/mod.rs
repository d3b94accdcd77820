//! Graph data model and datasets.

mod augment;
mod dump;
mod generate;
mod tu;

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::Mat;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub use augment::{augment, AugmentationConfig};
pub use dump::{load_dataset_json, save_dataset_json, DatasetDump, DUMP_FORMAT_VERSION};
pub use generate::{
    generate_synthetic_dataset, standardize_features, structural_features, FamilySpec,
    GeneratorKind, SyntheticSpec,
};
pub use tu::{load_tudataset, save_tudataset};

/// Undirected graph with a dense binary adjacency and node features.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    adjacency: Mat,
    features: Mat,
}

impl Graph {
    /// Validates symmetry, zero diagonal, binary entries, and shapes.
    pub fn new(adjacency: Mat, features: Mat) -> Result<Self> {
        let n = adjacency.nrows();
        if n == 0 {
            return Err(Error::Empty("graph with zero nodes"));
        }
        if adjacency.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: adjacency.ncols(),
            });
        }
        if features.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: features.nrows(),
            });
        }
        for i in 0..n {
            if adjacency[[i, i]] != 0.0 {
                return Err(Error::DegenerateSpec(format!("self-loop on node {i}")));
            }
            for j in 0..n {
                let a = adjacency[[i, j]];
                if a != 0.0 && a != 1.0 {
                    return Err(Error::DegenerateSpec(format!("non-binary adjacency entry ({i},{j})")));
                }
                if a != adjacency[[j, i]] {
                    return Err(Error::DegenerateSpec(format!("asymmetric adjacency at ({i},{j})")));
                }
            }
        }
        Ok(Self {
            adjacency,
            features,
        })
    }

    /// Builds from 0-indexed undirected edges. Duplicate edges collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], features: Mat) -> Result<Self> {
        let mut adjacency = Mat::zeros((n, n));
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::DegenerateSpec(format!("edge ({u},{v}) out of range for n={n}")));
            }
            if u == v {
                return Err(Error::DegenerateSpec(format!("self-loop on node {u}")));
            }
            adjacency[[u, v]] = 1.0;
            adjacency[[v, u]] = 1.0;
        }
        Self::new(adjacency, features)
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn adjacency(&self) -> &Mat {
        &self.adjacency
    }

    pub fn features(&self) -> &Mat {
        &self.features
    }

    /// Edges as `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.adjacency[[i, j]] != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        (self.adjacency.sum() / 2.0).round() as usize
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.adjacency.rows().into_iter().map(|r| r.sum()).collect()
    }

    /// Local clustering coefficient per node (0 for degree < 2).
    pub fn clustering(&self) -> Vec<f64> {
        let n = self.n();
        let nbrs: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| self.adjacency[[i, j]] != 0.0).collect())
            .collect();
        nbrs.iter()
            .map(|nb| {
                let k = nb.len();
                if k < 2 {
                    return 0.0;
                }
                let mut tri = 0usize;
                for a in 0..k {
                    for b in a + 1..k {
                        if self.adjacency[[nb[a], nb[b]]] != 0.0 {
                            tri += 1;
                        }
                    }
                }
                tri as f64 / (k * (k - 1) / 2) as f64
            })
            .collect()
    }

    pub fn with_features(&self, features: Mat) -> Result<Self> {
        Self::new(self.adjacency.clone(), features)
    }

    /// Relabels nodes: node `i` of the result is node `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        assert_eq!(perm.len(), n);
        let adjacency = Array2::from_shape_fn((n, n), |(i, j)| self.adjacency[[perm[i], perm[j]]]);
        let features = Array2::from_shape_fn((n, self.feature_dim()), |(i, k)| self.features[[perm[i], k]]);
        Self {
            adjacency,
            features,
        }
    }

    /// `D^{-1/2} (A + I) D^{-1/2}`.
    pub fn normalized_adjacency(&self) -> Mat {
        let n = self.n();
        let mut a = self.adjacency.clone();
        for i in 0..n {
            a[[i, i]] = 1.0;
        }
        let inv_sqrt: Vec<f64> = a.rows().into_iter().map(|r| 1.0 / r.sum().sqrt()).collect();
        Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] * inv_sqrt[i] * inv_sqrt[j])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "ID")]
    Id,
    #[serde(rename = "OOD")]
    Ood,
}

/// Ordered collection of graphs with optional evaluation tags.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphDataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub labels: Option<Vec<Label>>,
    /// Generator family index per graph, when known.
    pub families: Option<Vec<usize>>,
    /// Where the graphs came from, e.g. `"pgos"`, `"gaussian"`, `"uniform"`.
    pub origin: Option<String>,
}

impl GraphDataset {
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>) -> Self {
        Self {
            name: name.into(),
            graphs,
            labels: None,
            families: None,
            origin: None,
        }
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.graphs.first().map(Graph::feature_dim)
    }

    /// Checks label alignment and a shared feature dimension.
    pub fn validate(&self) -> Result<()> {
        if let Some(labels) = &self.labels {
            if labels.len() != self.graphs.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.graphs.len(),
                    got: labels.len(),
                });
            }
        }
        if let Some(fam) = &self.families {
            if fam.len() != self.graphs.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.graphs.len(),
                    got: fam.len(),
                });
            }
        }
        if let Some(d) = self.feature_dim() {
            if let Some(g) = self.graphs.iter().find(|g| g.feature_dim() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: g.feature_dim(),
                });
            }
        }
        Ok(())
    }

    /// Rejects any OOD-labelled graph (training splits must be ID-only).
    pub fn ensure_id_only(&self) -> Result<()> {
        if let Some(labels) = &self.labels {
            if labels.iter().any(|&l| l == Label::Ood) {
                return Err(Error::InvalidConfig(format!(
                    "dataset `{}` contains OOD graphs but is used for training",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Self {
        Self {
            name: name.into(),
            graphs: indices.iter().map(|&i| self.graphs[i].clone()).collect(),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            families: self.families.as_ref().map(|f| indices.iter().map(|&i| f[i]).collect()),
            origin: self.origin.clone(),
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.labels = Some(vec![label; self.graphs.len()]);
        self
    }

    pub fn node_histogram(&self) -> NodeHistogram {
        NodeHistogram::from_counts(self.graphs.iter().map(Graph::n))
    }
}

/// Empirical distribution of node counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeHistogram {
    pub counts: BTreeMap<usize, usize>,
}

impl NodeHistogram {
    pub fn from_counts(ns: impl IntoIterator<Item = usize>) -> Self {
        let mut counts = BTreeMap::new();
        for n in ns {
            *counts.entry(n).or_insert(0) += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn sample(&self, rng: &mut Rng) -> usize {
        let total = self.total();
        assert!(total > 0, "empty node histogram");
        let mut pick = rng.random_range(0..total);
        for (&n, &c) in &self.counts {
            if pick < c {
                return n;
            }
            pick -= c;
        }
        unreachable!()
    }
}
