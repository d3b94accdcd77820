//! TU-benchmark text format.
//!
//! `<name>_A.txt` holds 1-indexed `u, v` edge pairs, `<name>_graph_indicator.txt`
//! holds the 1-indexed graph id of each node, and the optional
//! `<name>_node_labels.txt` / `<name>_node_attributes.txt` hold one line per node.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::generate::{standardize_features, structural_features};
use super::{Graph, GraphDataset};
use crate::autodiff::Mat;
use crate::error::{Error, Result};

fn parse_err(file: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-empty lines with their 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .collect())
}

fn parse_fields<T: std::str::FromStr>(file: &Path, line: usize, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|f| {
            f.trim()
                .parse::<T>()
                .map_err(|_| parse_err(file, line, format!("cannot parse `{}`", f.trim())))
        })
        .collect()
}

fn dataset_name(dir: &Path) -> Result<String> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter_map(|f| f.strip_suffix("_A.txt").map(str::to_string))
        .collect();
    names.sort();
    names
        .into_iter()
        .next()
        .ok_or_else(|| Error::MissingFile(dir.join("<name>_A.txt")))
}

/// Loads a TU-format directory. Adjacency is symmetrized; node labels are
/// one-hot encoded and concatenated after any continuous attributes. With
/// neither file present, standardized `[degree, clustering]` features are used.
pub fn load_tudataset(dir: &Path) -> Result<GraphDataset> {
    let name = dataset_name(dir)?;
    let path = |suffix: &str| -> PathBuf { dir.join(format!("{name}_{suffix}.txt")) };

    let ind_path = path("graph_indicator");
    let indicator_lines = read_lines(&ind_path)?;
    let mut node_graph = Vec::with_capacity(indicator_lines.len());
    let mut expected = 1usize;
    for (line, text) in &indicator_lines {
        let gid: usize = text
            .parse()
            .map_err(|_| parse_err(&ind_path, *line, format!("cannot parse graph id `{text}`")))?;
        let contiguous = if node_graph.is_empty() {
            gid == 1
        } else {
            gid == expected || gid == expected + 1
        };
        if !contiguous {
            return Err(parse_err(
                &ind_path,
                *line,
                format!("non-contiguous graph id {gid} (expected {expected} or {})", expected + 1),
            ));
        }
        expected = gid;
        node_graph.push(gid - 1);
    }
    if node_graph.is_empty() {
        return Err(parse_err(&ind_path, 1, "no nodes"));
    }
    let n_graphs = expected;
    let mut offsets = vec![usize::MAX; n_graphs];
    let mut sizes = vec![0usize; n_graphs];
    for (node, &g) in node_graph.iter().enumerate() {
        if offsets[g] == usize::MAX {
            offsets[g] = node;
        }
        sizes[g] += 1;
    }

    let a_path = path("A");
    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_graphs];
    for (line, text) in read_lines(&a_path)? {
        let pair: Vec<usize> = parse_fields(&a_path, line, &text)?;
        if pair.len() != 2 {
            return Err(parse_err(&a_path, line, "expected two node ids"));
        }
        let (u, v) = (pair[0], pair[1]);
        for x in [u, v] {
            if x == 0 || x > node_graph.len() {
                return Err(parse_err(&a_path, line, format!("edge references unknown node {x}")));
            }
        }
        if u == v {
            return Err(parse_err(&a_path, line, format!("self-loop on node {u} rejected")));
        }
        let (gu, gv) = (node_graph[u - 1], node_graph[v - 1]);
        if gu != gv {
            return Err(parse_err(&a_path, line, format!("edge ({u},{v}) crosses graphs")));
        }
        edges[gu].push((u - 1 - offsets[gu], v - 1 - offsets[gu]));
    }

    let attr_path = path("node_attributes");
    let attributes: Option<Vec<Vec<f64>>> = if attr_path.exists() {
        let lines = read_lines(&attr_path)?;
        check_count(&attr_path, lines.len(), node_graph.len())?;
        let rows: Vec<Vec<f64>> = lines
            .iter()
            .map(|(l, t)| parse_fields(&attr_path, *l, t))
            .collect::<Result<_>>()?;
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != rows[0].len()) {
            return Err(parse_err(&attr_path, lines[i].0, "inconsistent attribute width"));
        }
        Some(rows)
    } else {
        None
    };

    let label_path = path("node_labels");
    let one_hot: Option<Vec<Vec<f64>>> = if label_path.exists() {
        let lines = read_lines(&label_path)?;
        check_count(&label_path, lines.len(), node_graph.len())?;
        let labels: Vec<i64> = lines
            .iter()
            .map(|(l, t)| {
                t.parse::<i64>()
                    .map_err(|_| parse_err(&label_path, *l, format!("cannot parse label `{t}`")))
            })
            .collect::<Result<_>>()?;
        let vocab: Vec<i64> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        Some(
            labels
                .iter()
                .map(|l| {
                    let k = vocab.binary_search(l).unwrap();
                    (0..vocab.len()).map(|j| if j == k { 1.0 } else { 0.0 }).collect()
                })
                .collect(),
        )
    } else {
        None
    };

    let node_rows: Option<Vec<Vec<f64>>> = match (attributes, one_hot) {
        (Some(a), Some(l)) => Some(a.into_iter().zip(l).map(|(mut a, l)| { a.extend(l); a }).collect()),
        (Some(a), None) => Some(a),
        (None, Some(l)) => Some(l),
        (None, None) => None,
    };

    let mut graphs = Vec::with_capacity(n_graphs);
    for g in 0..n_graphs {
        let n = sizes[g];
        let features = match &node_rows {
            Some(rows) => {
                let d = rows[0].len();
                Array2::from_shape_fn((n, d), |(i, k)| rows[offsets[g] + i][k])
            }
            None => Mat::zeros((n, 0)),
        };
        let graph = Graph::from_edges(n, &edges[g], features)?;
        let graph = if node_rows.is_none() {
            let f = structural_features(&graph);
            graph.with_features(f)?
        } else {
            graph
        };
        graphs.push(graph);
    }
    if node_rows.is_none() {
        let all = 0..graphs.len();
        standardize_features(&mut graphs, all);
    }

    Ok(GraphDataset::new(name, graphs))
}

fn check_count(file: &Path, got: usize, nodes: usize) -> Result<()> {
    if got != nodes {
        return Err(parse_err(
            file,
            got.min(nodes) + 1,
            format!("{got} rows for {nodes} nodes"),
        ));
    }
    Ok(())
}

/// Writes the dataset in TU format with features as node attributes.
/// Floats use shortest round-trip formatting, so reloading is bit-exact.
pub fn save_tudataset(ds: &GraphDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut a = String::new();
    let mut ind = String::new();
    let mut attr = String::new();
    let mut offset = 0usize;
    for (gi, g) in ds.graphs.iter().enumerate() {
        for (i, j) in g.edges() {
            writeln!(a, "{}, {}", offset + i + 1, offset + j + 1).unwrap();
            writeln!(a, "{}, {}", offset + j + 1, offset + i + 1).unwrap();
        }
        for row in g.features().rows() {
            writeln!(ind, "{}", gi + 1).unwrap();
            let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            writeln!(attr, "{}", cells.join(", ")).unwrap();
        }
        offset += g.n();
    }
    let write = |suffix: &str, body: &str| -> Result<()> {
        let p = dir.join(format!("{}_{suffix}.txt", ds.name));
        fs::write(&p, body).map_err(|e| Error::io(p, e))
    };
    write("A", &a)?;
    write("graph_indicator", &ind)?;
    if ds.feature_dim().unwrap_or(0) > 0 {
        write("node_attributes", &attr)?;
    }
    Ok(())
}
