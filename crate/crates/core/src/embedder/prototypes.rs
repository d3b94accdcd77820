use ndarray::ArrayView1;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::Mat;
use crate::error::{Error, Result};
use crate::nn::random_unit;
use crate::rng::Rng;

/// `K` learnable unit-norm anchors and the softmax temperature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    pub centers: Mat,
    pub tau: f64,
}

impl PrototypeSet {
    pub fn new(centers: Mat, tau: f64) -> Result<Self> {
        if centers.nrows() < 2 {
            return Err(Error::TooFewPrototypes(centers.nrows()));
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidConfig(format!("temperature must be positive, got {tau}")));
        }
        let mut set = Self { centers, tau };
        set.renormalize();
        Ok(set)
    }

    pub fn k(&self) -> usize {
        self.centers.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }

    pub fn center(&self, k: usize) -> ArrayView1<'_, f64> {
        self.centers.row(k)
    }

    pub fn renormalize(&mut self) {
        for mut row in self.centers.rows_mut() {
            let n = row.dot(&row).sqrt();
            if n > 0.0 {
                row.mapv_inplace(|x| x / n);
            }
        }
    }

    /// Seeded farthest-point selection over an initial embedding pass; falls
    /// back to random unit vectors when there are fewer distinct embeddings than `k`.
    pub fn init_farthest_point(embeddings: &Mat, k: usize, tau: f64, rng: &mut Rng) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewPrototypes(k));
        }
        let n = embeddings.nrows();
        let dim = embeddings.ncols();
        let mut centers = Mat::zeros((k, dim));
        let mut chosen: Vec<usize> = Vec::new();
        if n > 0 {
            chosen.push(rng.random_range(0..n));
            let mut dist: Vec<f64> = vec![f64::INFINITY; n];
            while chosen.len() < k {
                let last = embeddings.row(*chosen.last().unwrap());
                for (i, d) in dist.iter_mut().enumerate() {
                    let diff = &embeddings.row(i) - &last;
                    *d = d.min(diff.dot(&diff));
                }
                let (best, &bd) = dist
                    .iter()
                    .enumerate()
                    .fold((0, &f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
                if bd <= 1e-18 {
                    break;
                }
                chosen.push(best);
            }
        }
        for (row, &i) in chosen.iter().enumerate() {
            centers.row_mut(row).assign(&embeddings.row(i));
        }
        for row in chosen.len()..k {
            let v = random_unit(dim, rng);
            for (c, x) in centers.row_mut(row).iter_mut().zip(v) {
                *c = x;
            }
        }
        Self::new(centers, tau)
    }
}

/// Softmax over `z . c_k / tau`.
pub fn assignment_probs(z: &[f64], protos: &PrototypeSet) -> Vec<f64> {
    let logits: Vec<f64> = protos
        .centers
        .rows()
        .into_iter()
        .map(|c| c.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() / protos.tau)
        .collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

/// Index of the largest `z . c_k`; ties go to the lowest index.
pub fn nearest_prototype(z: &[f64], protos: &PrototypeSet) -> usize {
    let mut best = 0;
    let mut best_dot = f64::NEG_INFINITY;
    for (k, c) in protos.centers.rows().into_iter().enumerate() {
        let d: f64 = c.iter().zip(z).map(|(a, b)| a * b).sum();
        if d > best_dot {
            best = k;
            best_dot = d;
        }
    }
    best
}
