//! Stage orchestration. Every stage reads its inputs from the run directory,
//! checks that they were produced under the same config hash, and writes
//! its outputs next to them:
//!
//! `runs/<hash>-<seed>/{config.json, data/, embedder.ckpt, stats.json,
//! policy.ckpt, latents.json, outliers.json, detector.ckpt, scores.csv,
//! metrics.json, projection.csv, logs/*.csv}`

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::Mat;
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{DatasetConfig, ExperimentConfig};
use crate::detector::{evaluate_auc, train_detector, write_scores_csv, Detector, DetectorEpoch, ScoreRow};
use crate::embedder::{nearest_prototype, train_embedder, write_loss_csv, Embedder};
use crate::env::{compute_cluster_stats, write_stats_json, LatentEnv};
use crate::error::{Error, Result};
use crate::graph::{
    generate_synthetic_dataset, load_dataset_json, load_tudataset, save_dataset_json, GraphDataset, Label,
};
use crate::projection::export_projection;
use crate::rng::{derive_seed, stream};
use crate::sac::{collect_outlier_latents, train_policy, write_policy_csv, Policy};
use crate::synth::{gaussian_midpoint_sampler, synthesize_graphs, uniform_boundary_sampler, Sampler};

pub const METRICS_FORMAT_VERSION: u32 = 1;

/// Paths inside one run directory.
#[derive(Clone, Debug)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(out: &Path, cfg: &ExperimentConfig) -> Self {
        Self {
            root: out.join(format!("{}-{}", cfg.short_hash(), cfg.seed)),
        }
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn split(&self, name: &str) -> PathBuf {
        self.root.join("data").join(format!("{name}.json"))
    }

    fn log(&self, name: &str) -> PathBuf {
        self.root.join("logs").join(name)
    }

    fn prepare(&self) -> Result<()> {
        for dir in [self.root.clone(), self.root.join("data"), self.root.join("logs")] {
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub id_train: GraphDataset,
    pub id_test: GraphDataset,
    pub ood_test: GraphDataset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metrics {
    pub format_version: u32,
    pub auc: f64,
    pub n_id: usize,
    pub n_ood: usize,
    pub n_pseudo: usize,
    pub sampler: Sampler,
    pub mean_score_id: f64,
    pub mean_score_ood: f64,
    pub mean_score_pseudo: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentsFile {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub sampler: Sampler,
    pub latents: Vec<Vec<f64>>,
    /// Episodes rolled out by the collector (zero for the fixed samplers).
    pub episodes: usize,
    /// True when the collector hit its episode cap before filling the quota.
    pub partial: bool,
}

fn stage_seed(cfg: &ExperimentConfig, stage: &str) -> u64 {
    derive_seed(cfg.seed, stage, 0)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })
}

fn check_hash(found: Option<&str>, expected: &str) -> Result<()> {
    match found {
        Some(h) if h == expected => Ok(()),
        other => Err(Error::HashMismatch {
            expected: expected.to_string(),
            found: other.unwrap_or("<none>").to_string(),
        }),
    }
}

/// Loads or generates the raw data and splits it into train and test parts.
pub fn build_splits(cfg: &ExperimentConfig) -> Result<Splits> {
    cfg.dataset.validate()?;
    match &cfg.dataset {
        DatasetConfig::Synthetic { id_families, id_test_per_family, .. } => {
            let spec = cfg.dataset.synthetic_spec().unwrap();
            let all = generate_synthetic_dataset(&spec, stage_seed(cfg, "data"))?;
            let (mut train, mut test) = (Vec::new(), Vec::new());
            let mut offset = 0;
            for fam in id_families {
                let cut = offset + fam.count - id_test_per_family;
                train.extend(offset..cut);
                test.extend(cut..offset + fam.count);
                offset += fam.count;
            }
            let ood: Vec<usize> = (offset..all.len()).collect();
            Ok(Splits {
                id_train: all.subset("id_train", &train),
                id_test: all.subset("id_test", &test),
                ood_test: all.subset("ood_test", &ood),
            })
        }
        DatasetConfig::Tu { id_dir, ood_dir, id_train_fraction } => {
            let id = load_tudataset(id_dir)?.with_label(Label::Id);
            let ood = load_tudataset(ood_dir)?.with_label(Label::Ood);
            if id.feature_dim() != ood.feature_dim() {
                return Err(Error::DimensionMismatch {
                    expected: id.feature_dim().unwrap_or(0),
                    got: ood.feature_dim().unwrap_or(0),
                });
            }
            let mut order: Vec<usize> = (0..id.len()).collect();
            order.shuffle(&mut stream(cfg.seed, "tu-split", 0));
            let cut = ((id.len() as f64) * id_train_fraction).round() as usize;
            let cut = cut.clamp(1, id.len().saturating_sub(1));
            let all: Vec<usize> = (0..ood.len()).collect();
            Ok(Splits {
                id_train: id.subset("id_train", &order[..cut]),
                id_test: id.subset("id_test", &order[cut..]),
                ood_test: ood.subset("ood_test", &all),
            })
        }
    }
}

fn load_split(paths: &RunPaths, name: &str, hash: &str) -> Result<GraphDataset> {
    let (ds, dump) = load_dataset_json(&paths.split(name))?;
    check_hash(dump.config_hash.as_deref(), hash)?;
    Ok(ds)
}

fn load_splits(paths: &RunPaths, hash: &str) -> Result<Splits> {
    Ok(Splits {
        id_train: load_split(paths, "id_train", hash)?,
        id_test: load_split(paths, "id_test", hash)?,
        ood_test: load_split(paths, "ood_test", hash)?,
    })
}

/// Writes `config.json` and the three data splits.
pub fn stage_data(cfg: &ExperimentConfig, paths: &RunPaths) -> Result<Splits> {
    let run = || -> Result<Splits> {
        cfg.validate()?;
        paths.prepare()?;
        std::fs::write(paths.file("config.json"), cfg.to_json() + "\n")
            .map_err(|e| Error::io(paths.file("config.json"), e))?;
        let splits = build_splits(cfg)?;
        let hash = cfg.hash();
        for (name, ds) in [("id_train", &splits.id_train), ("id_test", &splits.id_test), ("ood_test", &splits.ood_test)] {
            save_dataset_json(ds, &paths.split(name), Some(&hash), Some(cfg.seed))?;
        }
        info!(
            "data: {} ID train, {} ID test, {} OOD test",
            splits.id_train.len(),
            splits.id_test.len(),
            splits.ood_test.len()
        );
        Ok(splits)
    };
    run().map_err(|e| e.in_stage("gen-data"))
}

fn environment(cfg: &ExperimentConfig, emb: &Embedder, id_train: &GraphDataset) -> Result<LatentEnv> {
    let z = emb.encoder.embed_dataset(id_train)?;
    let (stats, boundary) = compute_cluster_stats(&z, &emb.prototypes)?;
    LatentEnv::new(stats, boundary, emb.prototypes.centers.clone(), &cfg.env)
}

fn load_embedder(paths: &RunPaths, hash: &str) -> Result<Embedder> {
    Ok(load_checkpoint::<Embedder>(&paths.file("embedder.ckpt"), "embedder", Some(hash))?.payload)
}

/// Trains the embedder and writes its checkpoint, loss log and the latent
/// cluster statistics.
pub fn stage_embed(cfg: &ExperimentConfig, paths: &RunPaths) -> Result<Embedder> {
    let run = || -> Result<Embedder> {
        let hash = cfg.hash();
        let splits = load_splits(paths, &hash)?;
        let (emb, log) = train_embedder(&splits.id_train, &cfg.embedder, stage_seed(cfg, "embedder"))?;
        save_checkpoint(&paths.file("embedder.ckpt"), "embedder", &hash, cfg.seed, &emb)?;
        write_loss_csv(&log, &paths.log("embedder.csv"))?;
        let env = environment(cfg, &emb, &splits.id_train)?;
        write_stats_json(&env, &paths.file("stats.json"), &hash, cfg.seed)?;
        if let Some(last) = log.last() {
            info!("embedder: final loss {:.4}", last.total);
        }
        Ok(emb)
    };
    run().map_err(|e| e.in_stage("train-embed"))
}

/// Trains the exploration policy. Only the `pgos` sampler needs one; for
/// the other samplers this stage does nothing and returns `None`.
pub fn stage_policy(cfg: &ExperimentConfig, paths: &RunPaths) -> Result<Option<Policy>> {
    let run = || -> Result<Option<Policy>> {
        if cfg.sampler != Sampler::Pgos {
            info!("policy: sampler `{}` needs no policy", cfg.sampler.name());
            return Ok(None);
        }
        let hash = cfg.hash();
        let emb = load_embedder(paths, &hash)?;
        let id_train = load_split(paths, "id_train", &hash)?;
        let env = environment(cfg, &emb, &id_train)?;
        let (policy, log) = train_policy(&env, &cfg.sac, stage_seed(cfg, "policy"))?;
        save_checkpoint(&paths.file("policy.ckpt"), "policy", &hash, cfg.seed, &policy)?;
        write_policy_csv(&log, &paths.log("policy.csv"))?;
        info!("policy: trained for {} steps, alpha {:.4}", cfg.sac.budget, policy.temperature.alpha());
        Ok(Some(policy))
    };
    run().map_err(|e| e.in_stage("train-policy"))
}

/// Draws latent points with the configured sampler and decodes them into
/// pseudo-outlier graphs, as many as there are ID training graphs.
pub fn stage_synthesize(cfg: &ExperimentConfig, paths: &RunPaths) -> Result<GraphDataset> {
    let run = || -> Result<GraphDataset> {
        let hash = cfg.hash();
        let emb = load_embedder(paths, &hash)?;
        let id_train = load_split(paths, "id_train", &hash)?;
        let env = environment(cfg, &emb, &id_train)?;
        let count = id_train.len();
        let seed = stage_seed(cfg, "sampler");
        let (latents, episodes, partial) = match cfg.sampler {
            Sampler::Pgos => {
                let policy =
                    load_checkpoint::<Policy>(&paths.file("policy.ckpt"), "policy", Some(&hash))?.payload;
                let c = collect_outlier_latents(&policy.actor, &env, count, &cfg.synth.collect(), seed)?;
                (c.latents, c.episodes, c.partial)
            }
            Sampler::Gaussian => {
                let sigma = cfg.synth.sigma_gaussian * env.boundary.r_max;
                (gaussian_midpoint_sampler(&emb.prototypes.centers, &env.boundary, count, sigma, seed)?, 0, false)
            }
            Sampler::Uniform => (uniform_boundary_sampler(&env.boundary, count, seed), 0, false),
            Sampler::None => (Vec::new(), 0, false),
        };
        write_json(
            &paths.file("latents.json"),
            &LatentsFile {
                format_version: 1,
                config_hash: hash.clone(),
                seed: cfg.seed,
                sampler: cfg.sampler,
                latents: latents.clone(),
                episodes,
                partial,
            },
        )?;
        let outliers = if latents.is_empty() {
            let mut ds = GraphDataset::new("synthetic-none", Vec::new()).with_label(Label::Ood);
            ds.origin = Some(cfg.sampler.name().to_string());
            ds
        } else {
            synthesize_graphs(
                &latents,
                &emb.decoder,
                &id_train.node_histogram(),
                cfg.synth.edge_threshold,
                stage_seed(cfg, "synthesize"),
                cfg.sampler.name(),
            )?
        };
        save_dataset_json(&outliers, &paths.file("outliers.json"), Some(&hash), Some(cfg.seed))?;
        info!("synthesize: {} pseudo-outliers from `{}`", outliers.len(), cfg.sampler.name());
        Ok(outliers)
    };
    run().map_err(|e| e.in_stage("synthesize"))
}

pub fn detector_log_csv(log: &[DetectorEpoch]) -> String {
    let mut s = String::from("epoch,L_ID,L_reg,margin,scale\n");
    for e in log {
        writeln!(s, "{},{:?},{:?},{:?},{:?}", e.epoch, e.l_id, e.l_reg, e.margin, e.scale).unwrap();
    }
    s
}

fn load_outliers(paths: &RunPaths, hash: &str) -> Result<GraphDataset> {
    let (ds, dump) = load_dataset_json(&paths.file("outliers.json"))?;
    check_hash(dump.config_hash.as_deref(), hash)?;
    Ok(ds)
}

pub fn stage_detector(cfg: &ExperimentConfig, paths: &RunPaths) -> Result<Detector> {
    let run = || -> Result<Detector> {
        let hash = cfg.hash();
        let emb = load_embedder(paths, &hash)?;
        let id_train = load_split(paths, "id_train", &hash)?;
        let outliers = load_outliers(paths, &hash)?;
        let pseudo = (!outliers.is_empty()).then_some(&outliers);
        let (det, log) = train_detector(
            &id_train,
            pseudo,
            &emb,
            &cfg.embedder.augmentation,
            &cfg.detector,
            stage_seed(cfg, "detector"),
        )?;
        save_checkpoint(&paths.file("detector.ckpt"), "detector", &hash, cfg.seed, &det)?;
        let p = paths.log("detector.csv");
        std::fs::write(&p, detector_log_csv(&log)).map_err(|e| Error::io(&p, e))?;
        Ok(det)
    };
    run().map_err(|e| e.in_stage("train-detector"))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Scores every split, writes `scores.csv` and `metrics.json`.
pub fn stage_evaluate(cfg: &ExperimentConfig, paths: &RunPaths) -> Result<Metrics> {
    let run = || -> Result<Metrics> {
        let hash = cfg.hash();
        let det = load_checkpoint::<Detector>(&paths.file("detector.ckpt"), "detector", Some(&hash))?.payload;
        let splits = load_splits(paths, &hash)?;
        let outliers = load_outliers(paths, &hash)?;
        let id = det.scores(&splits.id_test)?;
        let ood = det.scores(&splits.ood_test)?;
        let train = det.scores(&splits.id_train)?;
        let pseudo = det.scores(&outliers)?;
        let auc = evaluate_auc(&id, &ood)?;

        let mut rows = Vec::new();
        let mut push = |split: &str, label: Label, scores: &[f64]| {
            for (i, &score) in scores.iter().enumerate() {
                rows.push(ScoreRow {
                    graph_id: i,
                    split: split.to_string(),
                    label: if label == Label::Id { "ID" } else { "OOD" }.to_string(),
                    score,
                });
            }
        };
        push("train", Label::Id, &train);
        push("pseudo", Label::Ood, &pseudo);
        push("test", Label::Id, &id);
        push("test", Label::Ood, &ood);
        write_scores_csv(&rows, &paths.file("scores.csv"))?;

        let metrics = Metrics {
            format_version: METRICS_FORMAT_VERSION,
            auc,
            n_id: id.len(),
            n_ood: ood.len(),
            n_pseudo: pseudo.len(),
            sampler: cfg.sampler,
            mean_score_id: mean(&id),
            mean_score_ood: mean(&ood),
            mean_score_pseudo: (!pseudo.is_empty()).then(|| mean(&pseudo)),
            seed: cfg.seed,
            config_hash: hash,
        };
        write_json(&paths.file("metrics.json"), &metrics)?;
        info!("evaluate: AUC {:.4} ({} ID, {} OOD)", auc, id.len(), ood.len());
        Ok(metrics)
    };
    run().map_err(|e| e.in_stage("evaluate"))
}

/// Embeddings of the ID training graphs (labelled by nearest prototype) and
/// the run's latent points, jointly projected to 2-D. For `pgos` runs the
/// Gaussian-midpoint baseline is drawn alongside for comparison.
pub fn stage_project(cfg: &ExperimentConfig, paths: &RunPaths) -> Result<PathBuf> {
    let run = || -> Result<PathBuf> {
        let hash = cfg.hash();
        let emb = load_embedder(paths, &hash)?;
        let id_train = load_split(paths, "id_train", &hash)?;
        let z = emb.encoder.embed_dataset(&id_train)?;
        let cluster: Vec<String> = z
            .rows()
            .into_iter()
            .map(|r| nearest_prototype(r.as_slice().unwrap(), &emb.prototypes).to_string())
            .collect();
        let mut groups = vec![(z.clone(), cluster)];
        let latents_path = paths.file("latents.json");
        if latents_path.exists() {
            let file: LatentsFile = serde_json::from_str(&read_text(&latents_path)?)?;
            check_hash(Some(&file.config_hash), &hash)?;
            if !file.latents.is_empty() {
                groups.push((to_mat(&file.latents, z.ncols())?, vec![file.sampler.name().to_string(); file.latents.len()]));
            }
            if file.sampler == Sampler::Pgos {
                let env = environment(cfg, &emb, &id_train)?;
                let sigma = cfg.synth.sigma_gaussian * env.boundary.r_max;
                let g = gaussian_midpoint_sampler(
                    &emb.prototypes.centers,
                    &env.boundary,
                    file.latents.len().max(1),
                    sigma,
                    stage_seed(cfg, "sampler"),
                )?;
                groups.push((to_mat(&g, z.ncols())?, vec!["gaussian".to_string(); g.len()]));
            }
        }
        let out = paths.file("projection.csv");
        let refs: Vec<(&Mat, Vec<String>)> = groups.iter().map(|(m, l)| (m, l.clone())).collect();
        export_projection(&refs, &out)?;
        Ok(out)
    };
    run().map_err(|e| e.in_stage("project"))
}

fn to_mat(rows: &[Vec<f64>], d: usize) -> Result<Mat> {
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Mat::from_shape_vec((rows.len(), d), flat)
        .map_err(|_| Error::DimensionMismatch { expected: d, got: rows.first().map_or(0, Vec::len) })
}

/// All stages in order; returns the metrics and the run directory.
pub fn run_pipeline(cfg: &ExperimentConfig, out: &Path) -> Result<(Metrics, RunPaths)> {
    let paths = RunPaths::new(out, cfg);
    info!("run directory {}", paths.root.display());
    stage_data(cfg, &paths)?;
    stage_embed(cfg, &paths)?;
    stage_policy(cfg, &paths)?;
    stage_synthesize(cfg, &paths)?;
    stage_detector(cfg, &paths)?;
    let metrics = stage_evaluate(cfg, &paths)?;
    Ok((metrics, paths))
}
