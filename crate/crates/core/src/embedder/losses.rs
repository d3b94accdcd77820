//! Training objectives of the prototypical embedder, all built on a [`Tape`].

use ndarray::Array2;

use crate::autodiff::{Mat, Tape, Var};
use crate::graph::Graph;

use super::decoder::DecodedVars;

/// Probability clamp for the adjacency cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

/// Nearest-prototype index of every row of `z` (an N x D value) under `centers`.
pub fn assignments(z: &Mat, centers: &Mat) -> Vec<usize> {
    let dots = z.dot(&centers.t());
    dots.rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for k in 1..r.len() {
                if r[k] > r[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Per-anchor debiased contrastive terms, N x 1.
///
/// Anchor `i` is `z1[i]`, its positive is `z2[i]`, and its negatives are the
/// second-view embeddings `z2[j]`, `j != i`, whose nearest prototype differs
/// from the anchor's. An anchor without negatives contributes exactly 0.
pub fn debiased_contrastive_terms(
    t: &Tape,
    z1: Var,
    z2: Var,
    anchor_clusters: &[usize],
    other_clusters: &[usize],
    tau: f64,
) -> Var {
    let n = anchor_clusters.len();
    let sims = t.matmul_t(z1, z2);
    let sims = t.scale(sims, 1.0 / tau);
    let mask = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j || other_clusters[j] != anchor_clusters[i] {
            1.0
        } else {
            0.0
        }
    });
    let lse = t.masked_logsumexp_rows(sims, mask);
    let diag = t.mul_const(sims, Mat::eye(n));
    let pos = t.sum_rows(diag);
    t.sub(lse, pos)
}

/// Mean over anchors of [`debiased_contrastive_terms`].
pub fn loss_dc(t: &Tape, z1: Var, z2: Var, anchor_clusters: &[usize], other_clusters: &[usize], tau: f64) -> Var {
    let terms = debiased_contrastive_terms(t, z1, z2, anchor_clusters, other_clusters, tau);
    t.mean(terms)
}

/// Symmetric cross-entropy between the prototype assignment distributions of
/// the two views, `1/(2N) sum_i [l(z1_i, z2_i) + l(z2_i, z1_i)]`.
pub fn loss_pc(t: &Tape, z1: Var, z2: Var, centers: Var, tau: f64) -> Var {
    let n = t.shape(z1).0 as f64;
    let logp = |z: Var| {
        let logits = t.matmul_t(z, centers);
        let logits = t.scale(logits, 1.0 / tau);
        t.log_softmax_rows(logits)
    };
    let lp1 = logp(z1);
    let lp2 = logp(z2);
    let p1 = t.exp(lp1);
    let p2 = t.exp(lp2);
    let a = t.mul(p2, lp1);
    let b = t.mul(p1, lp2);
    let both = t.add(a, b);
    let s = t.sum(both);
    t.scale(s, -1.0 / (2.0 * n))
}

/// Negative mean squared distance over ordered prototype pairs, via
/// `sum_{i,j} |c_i - c_j|^2 = 2K sum_i |c_i|^2 - 2 |sum_i c_i|^2`.
pub fn loss_ips(t: &Tape, centers: Var) -> Var {
    let k = t.shape(centers).0 as f64;
    let sq = t.square(centers);
    let norms = t.sum(sq);
    let col = t.sum_cols(centers);
    let col_sq = t.square(col);
    let mean_sq = t.sum(col_sq);
    let a = t.scale(norms, 2.0 * k);
    let b = t.scale(mean_sq, 2.0);
    let total = t.sub(a, b);
    t.scale(total, -1.0 / (k * (k - 1.0)))
}

/// Squared feature error plus `lambda` times the off-diagonal adjacency
/// cross-entropy, with probabilities clamped to `[eps, 1 - eps]`.
pub fn loss_recon_graph(t: &Tape, g: &Graph, decoded: DecodedVars, lambda: f64) -> (Var, Var) {
    let n = g.n();
    let x = t.constant(g.features().clone());
    let diff = t.sub(x, decoded.features);
    let sq = t.square(diff);
    let feat = t.sum(sq);

    let probs = t.sigmoid(decoded.logits);
    let probs = t.clamp(probs, BCE_EPS, 1.0 - BCE_EPS);
    let log_p = t.log(probs);
    let one_minus = t.scale(probs, -1.0);
    let one_minus = t.offset(one_minus, 1.0);
    let log_q = t.log(one_minus);
    let offdiag = Mat::ones((n, n)) - Mat::eye(n);
    let a = g.adjacency();
    let pos = t.mul_const(log_p, a * &offdiag);
    let neg = t.mul_const(log_q, (Mat::ones((n, n)) - a) * &offdiag);
    let ll = t.add(pos, neg);
    let ll = t.sum(ll);
    let bce = t.scale(ll, -1.0);

    let weighted = t.scale(bce, lambda);
    (t.add(feat, weighted), bce)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    fn rows(t: &Tape, r: &[Vec<f64>]) -> Var {
        let d = r[0].len();
        t.constant(Array2::from_shape_fn((r.len(), d), |(i, k)| r[i][k]))
    }

    #[test]
    fn dc_empty_negatives_is_zero() {
        let t = Tape::new();
        let z1 = rows(&t, &[unit(&[1.0, 0.2]), unit(&[0.3, 1.0]), unit(&[1.0, 1.0])]);
        let z2 = rows(&t, &[unit(&[1.0, 0.1]), unit(&[0.2, 1.0]), unit(&[1.0, 0.9])]);
        let l = loss_dc(&t, z1, z2, &[0, 0, 0], &[0, 0, 0], 0.5);
        assert_eq!(t.scalar_value(l), 0.0);
    }

    #[test]
    fn dc_two_anchor_hand_computation() {
        let tau = 0.5;
        let a1 = unit(&[1.0, 0.0]);
        let a2 = unit(&[0.8, 0.6]);
        let b1 = unit(&[0.0, 1.0]);
        let b2 = unit(&[-0.6, 0.8]);
        let t = Tape::new();
        let z1 = rows(&t, &[a1.clone(), b1.clone()]);
        let z2 = rows(&t, &[a2.clone(), b2.clone()]);
        let l = loss_dc(&t, z1, z2, &[0, 1], &[0, 1], tau);
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
        let sim = |u: &[f64], v: &[f64]| (dot(u, v) / tau).exp();
        let t0 = -(sim(&a1, &a2) / (sim(&a1, &a2) + sim(&a1, &b2))).ln();
        let t1 = -(sim(&b1, &b2) / (sim(&b1, &b2) + sim(&b1, &a2))).ln();
        assert!((t.scalar_value(l) - 0.5 * (t0 + t1)).abs() < 1e-14);
    }

    #[test]
    fn dc_same_cluster_duplicates_are_not_negatives() {
        let tau = 0.3;
        let v = [unit(&[1.0, 0.1]), unit(&[0.1, 1.0]), unit(&[-1.0, 0.4])];
        let w = [unit(&[0.9, 0.2]), unit(&[0.2, 0.9]), unit(&[-0.9, 0.5])];
        let cl = [0usize, 1, 2];
        let t = Tape::new();
        let base = debiased_contrastive_terms(&t, rows(&t, &v), rows(&t, &w), &cl, &cl, tau);
        // append a copy of graph 0: it shares anchor 0's cluster
        let v2: Vec<_> = v.iter().chain(v.iter().take(1)).cloned().collect();
        let w2: Vec<_> = w.iter().chain(w.iter().take(1)).cloned().collect();
        let cl2 = [0usize, 1, 2, 0];
        let dup = debiased_contrastive_terms(&t, rows(&t, &v2), rows(&t, &w2), &cl2, &cl2, tau);
        assert_eq!(t.value(base)[[0, 0]], t.value(dup)[[0, 0]]);

        // a batch entirely in one cluster stays at zero when duplicated
        let one = [0usize; 3];
        let one2 = [0usize; 4];
        let l1 = loss_dc(&t, rows(&t, &v), rows(&t, &w), &one, &one, tau);
        let l2 = loss_dc(&t, rows(&t, &v2), rows(&t, &w2), &one2, &one2, tau);
        assert_eq!(t.scalar_value(l1), 0.0);
        assert_eq!(t.scalar_value(l2), 0.0);
    }

    #[test]
    fn pc_identical_one_hot_views_is_zero() {
        // tiny temperature makes assignments numerically one-hot
        let t = Tape::new();
        let z = rows(&t, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let c = t.constant(array![[1.0, 0.0], [0.0, 1.0]]);
        let l = loss_pc(&t, z, z, c, 1e-3);
        assert!(t.scalar_value(l).abs() < 1e-12);
    }

    #[test]
    fn pc_identical_views_equal_entropy() {
        let t = Tape::new();
        let z = rows(&t, &[unit(&[1.0, 0.5])]);
        let c = t.constant(array![[1.0, 0.0], [0.0, 1.0]]);
        let tau = 0.7;
        let l = loss_pc(&t, z, z, c, tau);
        let zz = unit(&[1.0, 0.5]);
        let e0 = (zz[0] / tau).exp();
        let e1 = (zz[1] / tau).exp();
        let p = [e0 / (e0 + e1), e1 / (e0 + e1)];
        let h = -(p[0] * p[0].ln() + p[1] * p[1].ln());
        assert!((t.scalar_value(l) - h).abs() < 1e-14);
    }

    #[test]
    fn pc_hand_set_distributions() {
        // p' = (0.9, 0.1), p'' = (0.5, 0.5): choose logits directly via z and C.
        // With C = I and tau = 1, p(z) = softmax(z), so z' = (ln 9, 0), z'' = (0, 0).
        let t = Tape::new();
        let z1 = t.constant(array![[9f64.ln(), 0.0]]);
        let z2 = t.constant(array![[0.0, 0.0]]);
        let c = t.constant(array![[1.0, 0.0], [0.0, 1.0]]);
        let l = loss_pc(&t, z1, z2, c, 1.0);
        let expected = 0.5
            * (-(0.5 * 0.9f64.ln() + 0.5 * 0.1f64.ln()) - (0.9 * 0.5f64.ln() + 0.1 * 0.5f64.ln()));
        assert!((t.scalar_value(l) - expected).abs() < 1e-14);
    }

    #[test]
    fn ips_cases() {
        let t = Tape::new();
        let c = t.constant(array![[0.0, 0.0], [3.0, 4.0]]);
        assert!((t.scalar_value(loss_ips(&t, c)) + 25.0).abs() < 1e-12);
        let same = t.constant(array![[0.6, 0.8], [0.6, 0.8], [0.6, 0.8]]);
        assert!(t.scalar_value(loss_ips(&t, same)).abs() < 1e-12);

        let c4 = array![[0.3, -1.2, 0.5], [1.1, 0.4, 0.0], [-0.7, 0.2, 0.9], [0.05, 0.6, -0.4]];
        let mut brute = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    let d = &c4.row(i) - &c4.row(j);
                    brute += d.dot(&d);
                }
            }
        }
        brute /= -12.0;
        let v = t.constant(c4);
        assert!((t.scalar_value(loss_ips(&t, v)) - brute).abs() < 1e-12);
    }

    fn decoded_from_probs(t: &Tape, probs: &Mat, feats: &Mat) -> DecodedVars {
        let logits = probs.mapv(|p: f64| (p / (1.0 - p)).ln());
        DecodedVars {
            logits: t.constant(logits),
            features: t.constant(feats.clone()),
        }
    }

    #[test]
    fn recon_near_perfect_is_bounded() {
        let eps = 1e-3;
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)], array![[1.0], [0.0], [2.0]]).unwrap();
        let probs = g.adjacency().mapv(|a| if a == 1.0 { 1.0 - eps } else { eps });
        let t = Tape::new();
        let (l, _) = loss_recon_graph(&t, &g, decoded_from_probs(&t, &probs, g.features()), 1.0);
        assert!(t.scalar_value(l) <= 9.0 * -(1.0f64 - eps).ln() + 1e-12);
    }

    #[test]
    fn recon_lambda_zero_and_hand_values() {
        let g1 = Graph::from_edges(2, &[(0, 1)], array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let g2 = Graph::from_edges(3, &[(0, 2)], array![[0.5, 0.5], [1.0, 1.0], [0.0, 0.0]]).unwrap();
        let p1 = array![[0.5, 0.8], [0.8, 0.5]];
        let f1 = array![[0.5, 0.0], [0.0, 2.0]];
        let p2 = array![[0.5, 0.3, 0.6], [0.3, 0.5, 0.1], [0.6, 0.1, 0.5]];
        let f2 = array![[0.5, 0.0], [1.0, 1.0], [0.0, -1.0]];
        let lambda = 0.7;

        let t = Tape::new();
        let (l1, _) = loss_recon_graph(&t, &g1, decoded_from_probs(&t, &p1, &f1), lambda);
        let (l2, _) = loss_recon_graph(&t, &g2, decoded_from_probs(&t, &p2, &f2), lambda);
        let total = t.scalar_value(l1) + t.scalar_value(l2);

        let feat = (0.25 + 1.0) + (0.25 + 1.0);
        let bce1 = -2.0 * 0.8f64.ln();
        let bce2 = -2.0 * (0.7f64.ln() + 0.6f64.ln() + 0.9f64.ln());
        assert!((total - (feat + lambda * (bce1 + bce2))).abs() < 1e-9);

        let t = Tape::new();
        let (l0, _) = loss_recon_graph(&t, &g1, decoded_from_probs(&t, &p1, &f1), 0.0);
        assert!((t.scalar_value(l0) - 1.25).abs() < 1e-12);
    }
}
