//! Experiment configuration: one JSON document with a block per stage,
//! validated on load and fingerprinted by a content hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::detector::DetectorConfig;
use crate::embedder::EmbedderConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::graph::{FamilySpec, GeneratorKind, SyntheticSpec};
use crate::sac::SacConfig;
use crate::synth::{Sampler, SynthConfig};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Generated families; the last `id_test_per_family` graphs of each ID
    /// family are held out for evaluation.
    Synthetic {
        id_families: Vec<FamilySpec>,
        ood_family: FamilySpec,
        min_nodes: usize,
        max_nodes: usize,
        id_test_per_family: usize,
    },
    /// A pair of TU-format directories; the ID set is split by
    /// `id_train_fraction` after a seeded shuffle.
    Tu {
        id_dir: PathBuf,
        ood_dir: PathBuf,
        id_train_fraction: f64,
    },
}

impl Default for DatasetConfig {
    /// ER(0.1) and ER(0.3) as ID, two-community graphs as OOD:
    /// 200 ID train, 100 ID test, 100 OOD test, 20 to 40 nodes.
    fn default() -> Self {
        DatasetConfig::Synthetic {
            id_families: vec![
                FamilySpec { kind: GeneratorKind::ErdosRenyi { p: 0.1 }, count: 150 },
                FamilySpec { kind: GeneratorKind::ErdosRenyi { p: 0.3 }, count: 150 },
            ],
            ood_family: FamilySpec { kind: GeneratorKind::TwoCommunity { p_in: 0.3, p_out: 0.02 }, count: 100 },
            min_nodes: 20,
            max_nodes: 40,
            id_test_per_family: 50,
        }
    }
}

impl DatasetConfig {
    /// Four ID families for the prototype-count sweep.
    pub fn four_family() -> Self {
        DatasetConfig::Synthetic {
            id_families: vec![
                FamilySpec { kind: GeneratorKind::ErdosRenyi { p: 0.1 }, count: 75 },
                FamilySpec { kind: GeneratorKind::ErdosRenyi { p: 0.3 }, count: 75 },
                FamilySpec { kind: GeneratorKind::BarabasiAlbert { m: 1 }, count: 75 },
                FamilySpec { kind: GeneratorKind::BarabasiAlbert { m: 4 }, count: 75 },
            ],
            ood_family: FamilySpec { kind: GeneratorKind::TwoCommunity { p_in: 0.3, p_out: 0.02 }, count: 100 },
            min_nodes: 20,
            max_nodes: 40,
            id_test_per_family: 25,
        }
    }

    pub fn synthetic_spec(&self) -> Option<SyntheticSpec> {
        match self {
            DatasetConfig::Synthetic { id_families, ood_family, min_nodes, max_nodes, .. } => Some(SyntheticSpec {
                id_families: id_families.clone(),
                ood_family: ood_family.clone(),
                min_nodes: *min_nodes,
                max_nodes: *max_nodes,
            }),
            DatasetConfig::Tu { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DatasetConfig::Synthetic { id_families, id_test_per_family, .. } => {
                self.synthetic_spec().unwrap().validate()?;
                if let Some(f) = id_families.iter().find(|f| f.count <= *id_test_per_family) {
                    return Err(Error::InvalidConfig(format!(
                        "dataset: family with {} graphs leaves no training graphs after holding out {}",
                        f.count, id_test_per_family
                    )));
                }
                if *id_test_per_family == 0 {
                    return Err(Error::InvalidConfig("dataset.id_test_per_family must be positive".into()));
                }
                Ok(())
            }
            DatasetConfig::Tu { id_train_fraction, .. } => {
                if !(*id_train_fraction > 0.0 && *id_train_fraction < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "dataset.id_train_fraction must lie in (0,1), got {id_train_fraction}"
                    )));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub embedder: EmbedderConfig,
    pub env: EnvConfig,
    pub sac: SacConfig,
    pub synth: SynthConfig,
    pub detector: DetectorConfig,
    pub sampler: Sampler,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            seed: 0,
            dataset: DatasetConfig::default(),
            embedder: EmbedderConfig::default(),
            env: EnvConfig::default(),
            sac: SacConfig::default(),
            synth: SynthConfig::default(),
            detector: DetectorConfig::default(),
            sampler: Sampler::Pgos,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "config format_version {} is not supported (expected {CONFIG_FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.dataset.validate()?;
        self.embedder.validate()?;
        self.env.validate()?;
        self.sac.validate()?;
        self.synth.validate()?;
        self.detector.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `key.path=value` patches. Values parse as JSON when they can
    /// and fall back to bare strings, so `sampler=gaussian` works unquoted.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc = serde_json::to_value(self)?;
        for o in overrides {
            let o = o.as_ref();
            let (path, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override `{o}` is not key=value")))?;
            let value = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut doc, path, value)?;
        }
        let cfg: Self = serde_json::from_value(doc).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 over the canonical JSON of everything except the seed, so
    /// runs of one configuration under different seeds share a hash.
    pub fn hash(&self) -> String {
        let mut doc = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut doc {
            map.remove("seed");
        }
        hex::encode(Sha256::digest(doc.to_string().as_bytes()))
    }

    /// Short form used in directory names.
    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }
}

fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        cur = match cur {
            Value::Object(map) => {
                if !map.contains_key(*key) {
                    return Err(Error::InvalidConfig(format!("unknown config key `{path}`")));
                }
                let slot = map.get_mut(*key).unwrap();
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("`{key}` in `{path}` is not an index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::InvalidConfig(format!("index {idx} out of range ({len}) in `{path}`")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::InvalidConfig(format!("`{path}` descends into a scalar"))),
        };
    }
    Err(Error::InvalidConfig("empty override key".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), c);
        let four = ExperimentConfig { dataset: DatasetConfig::four_family(), ..c };
        four.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"sedd": 3}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"embedder": {"dimension": 3}}"#).is_err());
        let c = ExperimentConfig::default();
        assert!(c.with_overrides(&["embedder.kk=3"]).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let c = ExperimentConfig::default();
        assert!(c.with_overrides(&["synth.edge_threshold=1.5"]).is_err());
        assert!(c.with_overrides(&["embedder.k=1"]).is_err());
        assert!(c.with_overrides(&["sampler=magic"]).is_err());
        assert!(c.with_overrides(&["dataset.id_test_per_family=150"]).is_err());
        assert!(c.with_overrides(&["detector.beta=-1"]).is_err());
    }

    #[test]
    fn overrides_patch_nested_fields() {
        let c = ExperimentConfig::default()
            .with_overrides(&["embedder.k=8", "sampler=gaussian", "dataset.id_families.0.generator.p=0.2", "seed=9"])
            .unwrap();
        assert_eq!(c.embedder.k, 8);
        assert_eq!(c.sampler, Sampler::Gaussian);
        assert_eq!(c.seed, 9);
        match &c.dataset {
            DatasetConfig::Synthetic { id_families, .. } => {
                assert_eq!(id_families[0].kind, GeneratorKind::ErdosRenyi { p: 0.2 })
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn hash_ignores_seed_only() {
        let a = ExperimentConfig::default();
        let b = a.with_overrides(&["seed=5"]).unwrap();
        let c = a.with_overrides(&["detector.beta=0.25"]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
        assert_eq!(a.short_hash().len(), 12);
    }
}
