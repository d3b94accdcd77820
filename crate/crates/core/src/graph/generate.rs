//! Seeded synthetic graph families.

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Graph, GraphDataset, Label};
use crate::autodiff::Mat;
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorKind {
    ErdosRenyi { p: f64 },
    BarabasiAlbert { m: usize },
    TwoCommunity { p_in: f64, p_out: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    #[serde(rename = "generator")]
    pub kind: GeneratorKind,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub id_families: Vec<FamilySpec>,
    pub ood_family: FamilySpec,
    pub min_nodes: usize,
    pub max_nodes: usize,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.min_nodes < 2 || self.min_nodes > self.max_nodes {
            return Err(Error::DegenerateSpec(format!(
                "node range [{}, {}] is empty or below 2",
                self.min_nodes, self.max_nodes
            )));
        }
        if self.id_families.is_empty() {
            return Err(Error::DegenerateSpec("no ID families".into()));
        }
        let open_unit = |p: f64, what: &str| {
            if p > 0.0 && p < 1.0 {
                Ok(())
            } else {
                Err(Error::DegenerateSpec(format!("{what}={p} outside (0,1)")))
            }
        };
        for fam in self.id_families.iter().chain(std::iter::once(&self.ood_family)) {
            match fam.kind {
                GeneratorKind::ErdosRenyi { p } => open_unit(p, "p")?,
                GeneratorKind::TwoCommunity { p_in, p_out } => {
                    open_unit(p_in, "p_in")?;
                    open_unit(p_out, "p_out")?;
                }
                GeneratorKind::BarabasiAlbert { m } => {
                    if m == 0 || m >= self.min_nodes {
                        return Err(Error::DegenerateSpec(format!(
                            "barabasi_albert m={m} must be in [1, min_nodes)"
                        )));
                    }
                }
            }
        }
        for (i, a) in self.id_families.iter().enumerate() {
            for b in &self.id_families[i + 1..] {
                if a.kind == b.kind {
                    return Err(Error::DegenerateSpec("ID families must use distinct parameters".into()));
                }
            }
            if a.kind == self.ood_family.kind {
                return Err(Error::DegenerateSpec("OOD family duplicates an ID family".into()));
            }
        }
        Ok(())
    }
}

fn erdos_renyi(n: usize, p: f64, rng: &mut Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Seed clique on `m + 1` nodes, then preferential attachment of `m` distinct
/// edges per new node.
fn barabasi_albert(n: usize, m: usize, rng: &mut Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    let mut targets: Vec<usize> = Vec::new();
    let seed = (m + 1).min(n);
    for i in 0..seed {
        for j in i + 1..seed {
            edges.push((i, j));
            targets.push(i);
            targets.push(j);
        }
    }
    for v in seed..n {
        let mut chosen: Vec<usize> = Vec::with_capacity(m);
        while chosen.len() < m {
            let u = targets[rng.random_range(0..targets.len())];
            if !chosen.contains(&u) {
                chosen.push(u);
            }
        }
        for u in chosen {
            edges.push((u, v));
            targets.push(u);
            targets.push(v);
        }
    }
    edges
}

fn two_community(n: usize, p_in: f64, p_out: f64, rng: &mut Rng) -> Vec<(usize, usize)> {
    let half = n / 2;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let same = (i < half) == (j < half);
            let p = if same { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Raw `[degree, clustering]` features, one row per node.
pub fn structural_features(g: &Graph) -> Mat {
    let deg = g.degrees();
    let cc = g.clustering();
    Array2::from_shape_fn((g.n(), 2), |(i, k)| if k == 0 { deg[i] } else { cc[i] })
}

/// Standardizes every feature column using statistics over the nodes of
/// `reference` graphs, then applies the same affine map to all `graphs`.
pub fn standardize_features(graphs: &mut [Graph], reference: std::ops::Range<usize>) {
    let Some(d) = graphs.first().map(Graph::feature_dim) else { return };
    let mut sum = vec![0.0; d];
    let mut sq = vec![0.0; d];
    let mut count = 0.0;
    for g in &graphs[reference] {
        for row in g.features().rows() {
            for k in 0..d {
                sum[k] += row[k];
                sq[k] += row[k] * row[k];
            }
            count += 1.0;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
    let std: Vec<f64> = sq
        .iter()
        .zip(&mean)
        .map(|(s, m)| {
            let var = (s / count - m * m).max(0.0);
            if var > 1e-24 { var.sqrt() } else { 1.0 }
        })
        .collect();
    for g in graphs.iter_mut() {
        let mut f = g.features().clone();
        for mut row in f.rows_mut() {
            for k in 0..d {
                row[k] = (row[k] - mean[k]) / std[k];
            }
        }
        *g = g.with_features(f).expect("standardization keeps shapes");
    }
}

/// ID graphs (families in order) followed by the OOD family; features are
/// standardized `[degree, clustering]` with statistics from ID nodes only.
/// Each graph draws from its own index-derived stream.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec, seed: u64) -> Result<GraphDataset> {
    spec.validate()?;
    let mut jobs: Vec<(&GeneratorKind, usize, Label)> = Vec::new();
    for (fi, fam) in spec.id_families.iter().enumerate() {
        jobs.extend(std::iter::repeat_n((&fam.kind, fi, Label::Id), fam.count));
    }
    let ood_index = spec.id_families.len();
    jobs.extend(std::iter::repeat_n((&spec.ood_family.kind, ood_index, Label::Ood), spec.ood_family.count));

    let mut graphs = Vec::with_capacity(jobs.len());
    for (idx, (kind, _, _)) in jobs.iter().enumerate() {
        let mut rng = stream(seed, "synthetic-graph", idx as u64);
        let n = rng.random_range(spec.min_nodes..=spec.max_nodes);
        let edges = match **kind {
            GeneratorKind::ErdosRenyi { p } => erdos_renyi(n, p, &mut rng),
            GeneratorKind::BarabasiAlbert { m } => barabasi_albert(n, m, &mut rng),
            GeneratorKind::TwoCommunity { p_in, p_out } => two_community(n, p_in, p_out, &mut rng),
        };
        let g = Graph::from_edges(n, &edges, Mat::zeros((n, 0)))?;
        let f = structural_features(&g);
        graphs.push(g.with_features(f)?);
    }
    let n_id = spec.id_families.iter().map(|f| f.count).sum::<usize>();
    standardize_features(&mut graphs, 0..n_id);

    Ok(GraphDataset {
        name: "synthetic".into(),
        graphs,
        labels: Some(jobs.iter().map(|j| j.2).collect()),
        families: Some(jobs.iter().map(|j| j.1).collect()),
        origin: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_er() -> SyntheticSpec {
        SyntheticSpec {
            id_families: vec![
                FamilySpec { kind: GeneratorKind::ErdosRenyi { p: 0.1 }, count: 100 },
                FamilySpec { kind: GeneratorKind::ErdosRenyi { p: 0.3 }, count: 100 },
            ],
            ood_family: FamilySpec {
                kind: GeneratorKind::TwoCommunity { p_in: 0.3, p_out: 0.02 },
                count: 0,
            },
            min_nodes: 20,
            max_nodes: 40,
        }
    }

    #[test]
    fn two_families_give_200_reproducible_graphs() {
        let a = generate_synthetic_dataset(&two_er(), 7).unwrap();
        let b = generate_synthetic_dataset(&two_er(), 7).unwrap();
        assert_eq!(a.len(), 200);
        assert!(a.labels.as_ref().unwrap().iter().all(|&l| l == Label::Id));
        assert_eq!(a, b);
        assert!(a.graphs.iter().all(|g| (20..=40).contains(&g.n())));
        let c = generate_synthetic_dataset(&two_er(), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn er_with_p_one_is_degenerate() {
        let mut spec = two_er();
        spec.id_families[0].kind = GeneratorKind::ErdosRenyi { p: 1.0 };
        assert!(matches!(generate_synthetic_dataset(&spec, 0), Err(Error::DegenerateSpec(_))));
        let mut spec = two_er();
        spec.min_nodes = 50;
        assert!(generate_synthetic_dataset(&spec, 0).is_err());
    }

    #[test]
    fn families_differ_in_density() {
        let ds = generate_synthetic_dataset(&two_er(), 3).unwrap();
        let dens = |range: std::ops::Range<usize>| {
            let gs = &ds.graphs[range];
            gs.iter()
                .map(|g| 2.0 * g.edge_count() as f64 / (g.n() * (g.n() - 1)) as f64)
                .sum::<f64>()
                / gs.len() as f64
        };
        assert!((dens(0..100) - 0.1).abs() < 0.02);
        assert!((dens(100..200) - 0.3).abs() < 0.03);
    }

    #[test]
    fn barabasi_albert_edge_count() {
        let mut rng = stream(0, "ba", 0);
        let e = barabasi_albert(30, 2, &mut rng);
        // clique on 3 nodes plus 2 edges for each of the remaining 27
        assert_eq!(e.len(), 3 + 27 * 2);
        assert!(Graph::from_edges(30, &e, Mat::zeros((30, 0))).is_ok());
    }

    #[test]
    fn features_are_standardized_over_id_nodes() {
        let ds = generate_synthetic_dataset(&two_er(), 1).unwrap();
        let mut sum = [0.0; 2];
        let mut count = 0.0;
        for g in &ds.graphs {
            for row in g.features().rows() {
                sum[0] += row[0];
                sum[1] += row[1];
                count += 1.0;
            }
        }
        assert!((sum[0] / count).abs() < 1e-9);
        assert!((sum[1] / count).abs() < 1e-9);
    }
}
