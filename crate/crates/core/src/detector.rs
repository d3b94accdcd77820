//! Outlier-regularized OOD detector: distance-to-nearest-prototype scores,
//! trained on ID graphs with a sigmoid-score penalty on pseudo-outliers.

use std::fmt::Write as _;
use std::path::Path;

use log::debug;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softplus, Mat, Tape, Var};
use crate::embedder::{loss_dc, loss_ips, loss_pc, Embedder, Encoder, EncoderVars, PrototypeSet};
use crate::embedder::losses::assignments;
use crate::error::{Error, Result};
use crate::graph::{augment, AugmentationConfig, Graph, GraphDataset};
use crate::nn::Adam;
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub beta: f64,
    pub epochs: usize,
    pub lr: f64,
    pub contrastive_weight: f64,
    pub batch_size: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            epochs: 50,
            lr: 1e-4,
            contrastive_weight: 0.1,
            batch_size: 32,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !(self.contrastive_weight >= 0.0) {
            return Err(Error::InvalidConfig("detector.beta and contrastive_weight must be non-negative".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidConfig(format!("detector.lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("detector.batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detector {
    pub encoder: Encoder,
    pub prototypes: PrototypeSet,
    /// Score calibration: the penalty is centred at `margin` with width `scale`.
    pub margin: f64,
    pub scale: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorEpoch {
    pub epoch: usize,
    pub l_id: f64,
    pub l_reg: f64,
    pub margin: f64,
    pub scale: f64,
}

/// Distance from `z` to its nearest prototype.
pub fn nearest_distance(z: &[f64], protos: &PrototypeSet) -> f64 {
    protos
        .centers
        .rows()
        .into_iter()
        .map(|c| c.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(f64::INFINITY, f64::min)
}

impl Detector {
    /// `h(G) = min_k |z_G - c_k|`; higher means more OOD.
    pub fn score(&self, g: &Graph) -> Result<f64> {
        let z = self.encoder.encode(g)?.graph_embedding;
        Ok(nearest_distance(&z, &self.prototypes))
    }

    pub fn scores(&self, ds: &GraphDataset) -> Result<Vec<f64>> {
        ds.graphs.iter().map(|g| self.score(g)).collect()
    }
}

/// `-log sigmoid((h - margin) / scale)`.
pub fn reg_loss(h: f64, margin: f64, scale: f64) -> f64 {
    softplus(-(h - margin) / scale)
}

/// `(mean + std, std)` of the scores, with the width floored at 1e-6.
pub fn calibrate(scores: &[f64]) -> (f64, f64) {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-6);
    (mean + std, std)
}

fn encode_batch(t: &Tape, enc: &EncoderVars, graphs: &[&Graph]) -> Result<Var> {
    let rows = graphs
        .iter()
        .map(|g| enc.encode(t, g).map(|(_, z)| z))
        .collect::<Result<Vec<_>>>()?;
    Ok(t.concat_rows(&rows))
}

/// Nearest-prototype distance of each row of `z`, n x 1.
pub fn nearest_distance_on_tape(t: &Tape, z: Var, centers: Var) -> Var {
    let (n, _) = t.shape(z);
    let (k, _) = t.shape(centers);
    let zz = t.square(z);
    let zz = t.sum_rows(zz);
    let zz = t.matmul_t(zz, t.constant(Mat::ones((k, 1))));
    let cc = t.square(centers);
    let cc = t.sum_rows(cc);
    let cc = t.matmul_t(t.constant(Mat::ones((n, 1))), cc);
    let cross = t.matmul_t(z, centers);
    let cross = t.scale(cross, -2.0);
    let d2 = t.add(zz, cc);
    let d2 = t.add(d2, cross);
    let d2 = t.clamp(d2, 1e-12, f64::INFINITY);
    let m = t.min_rows(d2);
    t.sqrt(m)
}

/// Fine-tunes the warm-started encoder and prototypes on
/// `mean_ID h + w * (L_DC + L_PC + L_IPS) + beta * mean_OOD -log sigmoid((h - m)/s)`.
/// With `beta = 0` the pseudo-outliers are never touched.
pub fn train_detector(
    id: &GraphDataset,
    pseudo_ood: Option<&GraphDataset>,
    warm: &Embedder,
    augmentation: &AugmentationConfig,
    cfg: &DetectorConfig,
    seed: u64,
) -> Result<(Detector, Vec<DetectorEpoch>)> {
    cfg.validate()?;
    if id.is_empty() {
        return Err(Error::Empty("detector ID training set"));
    }
    id.ensure_id_only()?;
    let ood: Option<&GraphDataset> = pseudo_ood.filter(|d| cfg.beta > 0.0 && !d.is_empty());

    let mut det = Detector {
        encoder: warm.encoder.clone(),
        prototypes: warm.prototypes.clone(),
        margin: 0.0,
        scale: 1.0,
        beta: cfg.beta,
    };
    let tau = det.prototypes.tau;
    let mut adam = Adam::new(cfg.lr, det.encoder.params().into_iter().chain([&det.prototypes.centers]));
    let n = id.len();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let (margin, scale) = calibrate(&det.scores(id)?);
        det.margin = margin;
        det.scale = scale;

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(seed, "detector-shuffle", epoch as u64));
        let mut aug_rng = stream(seed, "detector-augment", epoch as u64);
        let mut ood_order: Vec<usize> = Vec::new();
        if let Some(o) = ood {
            ood_order = (0..o.len()).collect();
            ood_order.shuffle(&mut stream(seed, "detector-ood", epoch as u64));
        }
        let mut ood_cursor = 0usize;
        let (mut sum_id, mut sum_reg, mut batches) = (0.0, 0.0, 0usize);

        for chunk in order.chunks(cfg.batch_size) {
            let graphs: Vec<&Graph> = chunk.iter().map(|&i| &id.graphs[i]).collect();
            let t = Tape::new();
            let enc = det.encoder.bind(&t);
            let centers = t.var(det.prototypes.centers.clone());

            let z = encode_batch(&t, &enc, &graphs)?;
            let h = nearest_distance_on_tape(&t, z, centers);
            let mut loss = t.mean(h);
            let l_id_h = t.scalar_value(loss);

            if cfg.contrastive_weight > 0.0 {
                let v1: Vec<Graph> = graphs.iter().map(|g| augment(g, augmentation, &mut aug_rng)).collect();
                let v2: Vec<Graph> = graphs.iter().map(|g| augment(g, augmentation, &mut aug_rng)).collect();
                let z1 = encode_batch(&t, &enc, &v1.iter().collect::<Vec<_>>())?;
                let z2 = encode_batch(&t, &enc, &v2.iter().collect::<Vec<_>>())?;
                let (c1, c2) = {
                    let c = t.value(centers);
                    (assignments(&t.value(z1), &c), assignments(&t.value(z2), &c))
                };
                let dc = loss_dc(&t, z1, z2, &c1, &c2, tau);
                let pc = loss_pc(&t, z1, z2, centers, tau);
                let ips = loss_ips(&t, centers);
                let pco = t.add(dc, pc);
                let pco = t.add(pco, ips);
                let pco = t.scale(pco, cfg.contrastive_weight);
                loss = t.add(loss, pco);
            }
            let l_id = t.scalar_value(loss);
            if !l_id.is_finite() {
                return Err(Error::non_finite(format!("detector L_ID (epoch {epoch}, h {l_id_h})")));
            }

            let mut l_reg = 0.0;
            if let Some(o) = ood {
                let take = chunk.len().min(o.len());
                let picked: Vec<&Graph> = (0..take)
                    .map(|j| &o.graphs[ood_order[(ood_cursor + j) % o.len()]])
                    .collect();
                ood_cursor = (ood_cursor + take) % o.len();
                let zo = encode_batch(&t, &enc, &picked)?;
                let ho = nearest_distance_on_tape(&t, zo, centers);
                let x = t.offset(ho, -margin);
                let x = t.scale(x, -1.0 / scale);
                let pen = t.softplus(x);
                let reg = t.mean(pen);
                l_reg = t.scalar_value(reg);
                if !l_reg.is_finite() {
                    return Err(Error::non_finite(format!("detector L_reg (epoch {epoch})")));
                }
                let weighted = t.scale(reg, cfg.beta);
                loss = t.add(loss, weighted);
            }

            let mut vars = enc.vars();
            vars.push(centers);
            let grads = t.backward(loss).collect(&vars);
            let mut params = det.encoder.params_mut();
            params.push(&mut det.prototypes.centers);
            adam.step(params, &grads);
            det.prototypes.renormalize();
            sum_id += l_id;
            sum_reg += l_reg;
            batches += 1;
        }
        let entry = DetectorEpoch {
            epoch,
            l_id: sum_id / batches as f64,
            l_reg: sum_reg / batches as f64,
            margin,
            scale,
        };
        debug!("detector epoch {epoch}: {entry:?}");
        log.push(entry);
    }
    let (margin, scale) = calibrate(&det.scores(id)?);
    det.margin = margin;
    det.scale = scale;
    Ok((det, log))
}

/// Probability that a random OOD score exceeds a random ID score, ties
/// counting one half, via the rank-sum statistic.
pub fn evaluate_auc(scores_id: &[f64], scores_ood: &[f64]) -> Result<f64> {
    if scores_id.is_empty() || scores_ood.is_empty() {
        return Err(Error::Empty("AUC needs both ID and OOD scores"));
    }
    if scores_id.iter().chain(scores_ood).any(|s| s.is_nan()) {
        return Err(Error::non_finite("scores"));
    }
    let mut all: Vec<(f64, bool)> = scores_id
        .iter()
        .map(|&s| (s, false))
        .chain(scores_ood.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // twice the rank sum keeps mid-ranks integral
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let mid2 = (i + 1 + j + 1) as u128;
        rank_sum2 += mid2 * all[i..=j].iter().filter(|x| x.1).count() as u128;
        i = j + 1;
    }
    let n_ood = scores_ood.len() as u128;
    let n_id = scores_id.len() as u128;
    let u2 = rank_sum2 - n_ood * (n_ood + 1);
    Ok(u2 as f64 / (2 * n_id * n_ood) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    pub graph_id: usize,
    pub split: String,
    pub label: String,
    pub score: f64,
}

pub fn scores_csv(rows: &[ScoreRow]) -> String {
    let mut s = String::from("graph_id,split,label,score\n");
    for r in rows {
        writeln!(s, "{},{},{},{:?}", r.graph_id, r.split, r.label, r.score).unwrap();
    }
    s
}

pub fn write_scores_csv(rows: &[ScoreRow], path: &Path) -> Result<()> {
    std::fs::write(path, scores_csv(rows)).map_err(|e| Error::io(path, e))
}
