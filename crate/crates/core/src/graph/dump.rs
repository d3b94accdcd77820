//! Versioned JSON dump of a dataset: adjacency lists plus feature rows.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Graph, GraphDataset, Label};
use crate::autodiff::Mat;
use crate::error::{Error, Result};

pub const DUMP_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphRecord {
    pub n: usize,
    /// Neighbours of each node, ascending.
    pub adjacency: Vec<Vec<usize>>,
    pub features: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetDump {
    pub format_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub graphs: Vec<GraphRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<Label>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub families: Option<Vec<usize>>,
}

impl DatasetDump {
    pub fn from_dataset(ds: &GraphDataset) -> Self {
        let graphs = ds
            .graphs
            .iter()
            .map(|g| GraphRecord {
                n: g.n(),
                adjacency: (0..g.n())
                    .map(|i| (0..g.n()).filter(|&j| g.adjacency()[[i, j]] != 0.0).collect())
                    .collect(),
                features: g.features().rows().into_iter().map(|r| r.to_vec()).collect(),
            })
            .collect();
        Self {
            format_version: DUMP_FORMAT_VERSION,
            name: ds.name.clone(),
            origin: ds.origin.clone(),
            config_hash: None,
            seed: None,
            graphs,
            labels: ds.labels.clone(),
            families: ds.families.clone(),
        }
    }

    pub fn into_dataset(self) -> Result<GraphDataset> {
        if self.format_version != DUMP_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported dataset format_version {}",
                self.format_version
            )));
        }
        let mut graphs = Vec::with_capacity(self.graphs.len());
        for rec in self.graphs {
            let n = rec.n;
            if rec.adjacency.len() != n || rec.features.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: rec.adjacency.len() });
            }
            let mut adj = Mat::zeros((n, n));
            for (i, nbrs) in rec.adjacency.iter().enumerate() {
                for &j in nbrs {
                    if j >= n {
                        return Err(Error::DimensionMismatch { expected: n, got: j });
                    }
                    adj[[i, j]] = 1.0;
                }
            }
            let d = rec.features.first().map_or(0, Vec::len);
            if rec.features.iter().any(|r| r.len() != d) {
                return Err(Error::InvalidConfig("ragged feature rows".into()));
            }
            let features = Array2::from_shape_fn((n, d), |(i, k)| rec.features[i][k]);
            graphs.push(Graph::new(adj, features)?);
        }
        let ds = GraphDataset {
            name: self.name,
            graphs,
            labels: self.labels,
            families: self.families,
            origin: self.origin,
        };
        ds.validate()?;
        Ok(ds)
    }
}

pub fn save_dataset_json(ds: &GraphDataset, path: &Path, config_hash: Option<&str>, seed: Option<u64>) -> Result<()> {
    let mut dump = DatasetDump::from_dataset(ds);
    dump.config_hash = config_hash.map(str::to_string);
    dump.seed = seed;
    let text = serde_json::to_string(&dump)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_dataset_json(path: &Path) -> Result<(GraphDataset, DatasetDump)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dump: DatasetDump = serde_json::from_str(&text)?;
    let mut header = dump.clone();
    header.graphs.clear();
    Ok((dump.into_dataset()?, header))
}
