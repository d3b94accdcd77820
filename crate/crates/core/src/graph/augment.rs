use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Edge dropping plus feature masking for contrastive views.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationConfig {
    pub edge_drop_p: f64,
    pub feat_mask_p: f64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            edge_drop_p: 0.2,
            feat_mask_p: 0.2,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("edge_drop_p", self.edge_drop_p), ("feat_mask_p", self.feat_mask_p)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name}={p} outside [0,1]")));
            }
        }
        Ok(())
    }
}

/// Drops each edge with probability `edge_drop_p` and zeroes each feature
/// entry with probability `feat_mask_p`. Never adds edges; `n` is unchanged.
pub fn augment(g: &Graph, cfg: &AugmentationConfig, rng: &mut Rng) -> Graph {
    let mut adjacency = g.adjacency().clone();
    if cfg.edge_drop_p > 0.0 {
        for (i, j) in g.edges() {
            if rng.random::<f64>() < cfg.edge_drop_p {
                adjacency[[i, j]] = 0.0;
                adjacency[[j, i]] = 0.0;
            }
        }
    }
    let mut features = g.features().clone();
    if cfg.feat_mask_p > 0.0 {
        features.mapv_inplace(|x| if rng.random::<f64>() < cfg.feat_mask_p { 0.0 } else { x });
    }
    Graph::new(adjacency, features).expect("augmentation preserves graph invariants")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Mat;
    use crate::rng::stream;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn dense_graph(edges: usize) -> Graph {
        // first `edges` pairs of a 12-node complete graph
        let mut e = Vec::new();
        'outer: for i in 0..12 {
            for j in i + 1..12 {
                if e.len() == edges {
                    break 'outer;
                }
                e.push((i, j));
            }
        }
        let f = Array2::from_shape_fn((12, 2), |(i, k)| (i * 2 + k) as f64 + 1.0);
        Graph::from_edges(12, &e, f).unwrap()
    }

    #[test]
    fn zero_probabilities_are_identity() {
        let g = dense_graph(20);
        let cfg = AugmentationConfig { edge_drop_p: 0.0, feat_mask_p: 0.0 };
        assert_eq!(augment(&g, &cfg, &mut stream(0, "a", 0)), g);
    }

    #[test]
    fn full_drop_removes_all_edges() {
        let g = dense_graph(20);
        let cfg = AugmentationConfig { edge_drop_p: 1.0, feat_mask_p: 0.0 };
        assert_eq!(augment(&g, &cfg, &mut stream(0, "a", 0)).edge_count(), 0);
        let cfg = AugmentationConfig { edge_drop_p: 0.0, feat_mask_p: 1.0 };
        assert_eq!(augment(&g, &cfg, &mut stream(0, "a", 0)).features(), &Mat::zeros((12, 2)));
    }

    #[test]
    fn mean_retained_edges_matches_binomial() {
        // 50 edges kept w.p. 0.8: mean 40, per-draw sd sqrt(50*0.8*0.2)=2.83,
        // so over 10,000 draws the mean has sd 0.028 and 40 +- 1 is far outside 3 sigma.
        let g = dense_graph(50);
        assert_eq!(g.edge_count(), 50);
        let cfg = AugmentationConfig { edge_drop_p: 0.2, feat_mask_p: 0.0 };
        let mut rng = stream(11, "binomial", 0);
        let total: usize = (0..10_000).map(|_| augment(&g, &cfg, &mut rng).edge_count()).sum();
        let mean = total as f64 / 10_000.0;
        assert!((mean - 40.0).abs() <= 1.0, "mean retained {mean}");
        assert!((mean - 40.0).abs() <= 3.0 * (8.0f64 / 10_000.0).sqrt(), "mean retained {mean}");
    }

    proptest! {
        #[test]
        fn never_adds_edges(seed in 0u64..1000, p in 0.0f64..=1.0, q in 0.0f64..=1.0, k in 0usize..60) {
            let g = dense_graph(k);
            let cfg = AugmentationConfig { edge_drop_p: p, feat_mask_p: q };
            let out = augment(&g, &cfg, &mut stream(seed, "prop", 0));
            prop_assert_eq!(out.n(), g.n());
            for (i, j) in out.edges() {
                prop_assert_eq!(g.adjacency()[[i, j]], 1.0);
            }
        }
    }
}
