//! Deterministic 2-D export of embeddings and latents by principal components.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::autodiff::Mat;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// Up to two principal directions, one per row, each with its
    /// largest-magnitude entry positive.
    pub components: Mat,
    pub eigenvalues: Vec<f64>,
    pub mean: Vec<f64>,
    pub points: Mat,
}

/// Projects the rows of `x` onto its top two principal components.
/// Fewer than two input columns pad the output with zeros.
pub fn pca_2d(x: &Mat) -> Result<Projection> {
    let (n, d) = x.dim();
    if n == 0 || d == 0 {
        return Err(Error::Empty("projection input"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("projection input"));
    }
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).sum() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| x[[i, j]] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let keep = d.min(2);
    let mut components = Mat::zeros((keep, d));
    let mut eigenvalues = Vec::with_capacity(keep);
    for (r, &c) in order.iter().take(keep).enumerate() {
        let v = eig.eigenvectors.column(c);
        let pivot = (0..d).fold(0, |best, j| if v[j].abs() > v[best].abs() { j } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[[r, j]] = sign * v[j];
        }
        eigenvalues.push(eig.eigenvalues[c]);
    }
    let mut points = Mat::zeros((n, 2));
    for i in 0..n {
        for r in 0..keep {
            points[[i, r]] = (0..d).map(|j| (x[[i, j]] - mean[j]) * components[[r, j]]).sum();
        }
    }
    Ok(Projection { components, eigenvalues, mean, points })
}

pub fn projection_csv(points: &Mat, labels: &[String]) -> Result<String> {
    if points.nrows() != labels.len() {
        return Err(Error::DimensionMismatch { expected: points.nrows(), got: labels.len() });
    }
    let mut s = String::from("x,y,label\n");
    for (row, label) in points.rows().into_iter().zip(labels) {
        writeln!(s, "{:?},{:?},{}", row[0], row[1], label).unwrap();
    }
    Ok(s)
}

/// Stacks `groups` of points, projects them jointly and writes `x,y,label`.
pub fn export_projection(groups: &[(&Mat, Vec<String>)], path: &Path) -> Result<Projection> {
    let d = groups.first().map(|g| g.0.ncols()).unwrap_or(0);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (m, l) in groups {
        if m.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: m.ncols() });
        }
        if m.nrows() != l.len() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: l.len() });
        }
        rows.extend(m.iter().copied());
        labels.extend(l.iter().cloned());
    }
    let x = Mat::from_shape_vec((labels.len(), d), rows).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let p = pca_2d(&x)?;
    std::fs::write(path, projection_csv(&p.points, &labels)?).map_err(|e| Error::io(path, e))?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn random(n: usize, d: usize, seed: u64) -> Mat {
        let mut rng = stream(seed, "pca", 0);
        // anisotropic so the eigenvalues are well separated
        Mat::from_shape_fn((n, d), |(_, j)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * (d - j) as f64 + rng.random::<f64>()
        })
    }

    fn dist(a: &Mat, i: usize, j: usize) -> f64 {
        let d = &a.row(i) - &a.row(j);
        d.dot(&d).sqrt()
    }

    #[test]
    fn two_dimensional_input_is_rotated() {
        let x = random(40, 2, 3);
        let p = pca_2d(&x).unwrap();
        assert_eq!(p.points.nrows(), 40);
        for i in 0..40 {
            for j in 0..40 {
                assert!((dist(&x, i, j) - dist(&p.points, i, j)).abs() < 1e-9);
            }
        }
    }

    /// Dominant eigenpairs by power iteration with deflation.
    fn power_eigs(cov: &Mat, k: usize) -> Vec<f64> {
        let d = cov.nrows();
        let mut a = cov.clone();
        let mut out = Vec::new();
        for _ in 0..k {
            let mut v = ndarray::Array1::from_elem(d, 1.0 / (d as f64).sqrt());
            v[0] += 0.1;
            let mut lambda = 0.0;
            for _ in 0..5000 {
                let w = a.dot(&v);
                let norm = w.dot(&w).sqrt();
                v = w / norm;
                lambda = v.dot(&a.dot(&v));
            }
            let outer = Mat::from_shape_fn((d, d), |(i, j)| lambda * v[i] * v[j]);
            a = a - outer;
            out.push(lambda);
        }
        out
    }

    #[test]
    fn reconstruction_error_matches_power_iteration() {
        for seed in 0..5 {
            let x = random(100, 6, seed);
            let n = x.nrows() as f64;
            let p = pca_2d(&x).unwrap();
            let mean = ndarray::Array1::from(p.mean.clone());
            let c = &x - &mean;
            let cov = c.t().dot(&c) / n;
            let total: f64 = (0..6).map(|j| cov[[j, j]]).sum();
            let top = power_eigs(&cov, 2);
            let expected = total - top[0] - top[1];

            let recon = p.points.dot(&p.components);
            let err = (&c - &recon).mapv(|v| v * v).sum() / n;
            assert!((err - expected).abs() < 1e-8 * total, "{err} vs {expected}");
            assert!((p.eigenvalues[0] - top[0]).abs() < 1e-8 * total);
        }
    }

    #[test]
    fn deterministic_signs_and_rows() {
        let x = random(30, 5, 7);
        let a = pca_2d(&x).unwrap();
        assert_eq!(a, pca_2d(&x).unwrap());
        for r in a.components.rows() {
            let piv = r.iter().fold(0.0f64, |m, v| if v.abs() > m.abs() { *v } else { m });
            assert!(piv > 0.0);
        }
    }

    #[test]
    fn one_dimensional_and_empty() {
        let x = Mat::from_shape_vec((3, 1), vec![1.0, 2.0, 4.0]).unwrap();
        let p = pca_2d(&x).unwrap();
        assert!(p.points.column(1).iter().all(|&v| v == 0.0));
        assert!(pca_2d(&Mat::zeros((0, 3))).is_err());
    }

    #[test]
    fn export_writes_one_row_per_point() {
        let a = random(5, 3, 1);
        let b = random(4, 3, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        export_projection(&[(&a, vec!["0".into(); 5]), (&b, vec!["pgos".into(); 4])], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert!(text.starts_with("x,y,label\n"));
        assert!(text.trim_end().ends_with(",pgos"));
    }
}
