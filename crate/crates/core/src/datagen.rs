//! Synthetic restless-bandit datasets with feature-dependent intervention
//! effects.
//!
//! Each arm gets uniform passive "move to good state" probabilities, a raw
//! feature vector `f ~ U([0,1]^3)`, and an intervention effect
//! `delta ~ N(W . f, sigma)` that is added to the passive probabilities to
//! obtain the active ones.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::par::{derive_seed, Execution};
use crate::rmab::{ArmModel, FeatureCategory, FeatureSchema, RmabError, RmabInstance};

pub const CLAMP_LO: f64 = 0.001;
pub const CLAMP_HI: f64 = 0.999;

/// Weight vectors of the three synthetic datasets, all with sigma = 0.1.
pub const DATASET_WEIGHTS: [[f64; 3]; 3] = [[0.8, -1.5, 1.0], [10.0, -1.5, 1.0], [1.0, -1.5, 10.0]];
pub const DATASET_SIGMA: f64 = 0.1;

#[derive(Debug, Error)]
pub enum DataGenError {
    #[error("invalid dataset config: {0}")]
    Config(String),
    #[error(transparent)]
    Rmab(#[from] RmabError),
    #[error("io: {0}")]
    Io(String),
}

/// Where passive probabilities and the feature schema come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// Three features `A`, `B`, `C`, `buckets_per_feature` buckets each,
    /// passive probabilities uniform on (0, 1).
    Synthetic,
    /// Age (5) / education (7) / income (7) schema with passive
    /// probabilities drawn from `Beta(alpha, beta)`.
    RealWorldAnalogue { passive_alpha: f64, passive_beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_arms: usize,
    pub weights: [f64; 3],
    pub sigma: f64,
    pub buckets_per_feature: usize,
    pub budget: usize,
    pub horizon: usize,
    pub discount: f64,
    pub master_seed: u64,
    pub n_instances: usize,
    /// Sample one effect per arm for both states (default) or one per state.
    #[serde(default = "default_true")]
    pub shared_delta: bool,
    #[serde(default = "default_profile")]
    pub profile: Profile,
}

fn default_true() -> bool {
    true
}

fn default_profile() -> Profile {
    Profile::Synthetic
}

impl DatasetConfig {
    /// Desk-scale configuration for synthetic dataset `dataset` (1, 2 or 3):
    /// N = 100, K = 10 (the K/N = 0.1 ratio of 210/2100), T = 12, 5 instances.
    pub fn desk(dataset: usize, master_seed: u64) -> Result<Self, DataGenError> {
        let weights = *DATASET_WEIGHTS
            .get(dataset.wrapping_sub(1))
            .ok_or_else(|| DataGenError::Config(format!("dataset must be 1, 2 or 3, got {dataset}")))?;
        Ok(Self {
            n_arms: 100,
            weights,
            sigma: DATASET_SIGMA,
            buckets_per_feature: 5,
            budget: 10,
            horizon: 12,
            discount: 0.9,
            master_seed,
            n_instances: 5,
            shared_delta: true,
            profile: Profile::Synthetic,
        })
    }

    /// Full-size configuration: N = 2100, K = 210.
    pub fn full_scale(dataset: usize, master_seed: u64) -> Result<Self, DataGenError> {
        Ok(Self { n_arms: 2100, budget: 210, ..Self::desk(dataset, master_seed)? })
    }

    pub fn validate(&self) -> Result<(), DataGenError> {
        if self.buckets_per_feature < 2 {
            return Err(DataGenError::Config("buckets_per_feature must be at least 2".into()));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(DataGenError::Config(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(DataGenError::Config("weights must be finite".into()));
        }
        if self.n_arms == 0 || self.budget == 0 || self.budget > self.n_arms {
            return Err(DataGenError::Config(format!("need 0 < budget ({}) <= n_arms ({})", self.budget, self.n_arms)));
        }
        if self.horizon == 0 {
            return Err(DataGenError::Config("horizon must be at least 1".into()));
        }
        if let Profile::RealWorldAnalogue { passive_alpha, passive_beta } = self.profile {
            if !(passive_alpha > 0.0 && passive_beta > 0.0) {
                return Err(DataGenError::Config("Beta prior parameters must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> FeatureSchema {
        match self.profile {
            Profile::Synthetic => FeatureSchema::synthetic(3, self.buckets_per_feature),
            Profile::RealWorldAnalogue { .. } => real_world_schema(),
        }
    }

    /// Seed of instance `index` within this dataset.
    pub fn instance_seed(&self, index: usize) -> u64 {
        derive_seed(self.master_seed, index as u64)
    }
}

/// 19-bucket schema: 5 age bands, 7 education levels, 7 income brackets.
pub fn real_world_schema() -> FeatureSchema {
    let labels = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    FeatureSchema::new(vec![
        FeatureCategory {
            name: "Age".into(),
            buckets: labels(&["Ages 10-20", "Ages 21-30", "Ages 31-40", "Ages 41-50", "Ages 51-60"]),
        },
        FeatureCategory {
            name: "Education".into(),
            buckets: labels(&[
                "Education level 1/7 -- illiterate",
                "Education level 2/7 -- 1-5th Grade Completed",
                "Education level 3/7 -- 6-9th Grade Completed",
                "Education level 4/7 -- 10th Grade Passed",
                "Education level 5/7 -- 12th Grade Passed",
                "Education level 6/7 -- Graduate",
                "Education level 7/7 -- Post graduate",
            ]),
        },
        FeatureCategory {
            name: "Income".into(),
            buckets: labels(&[
                "Income bracket 1 (e.g., 0-5000)",
                "Income bracket 2 (e.g., 5001-10000)",
                "Income bracket 3 (e.g., 10001-15000)",
                "Income bracket 4 (e.g., 15001-20000)",
                "Income bracket 5 (e.g., 20001-25000)",
                "Income bracket 6 (e.g., 25001-30000)",
                "Income bracket 7 (e.g., 30000-999999)",
            ]),
        },
    ])
}

/// Equal-width bucket of a raw feature in `[0, 1]`: bin `k` covers
/// `[k/B, (k+1)/B)`, the last bin is closed.
pub fn bucket_of(raw: f64, buckets: usize) -> usize {
    ((raw * buckets as f64).floor().max(0.0) as usize).min(buckets - 1)
}

/// Adds an intervention effect to a passive probability and clamps into
/// `[0.001, 0.999]`. The clamp never moves the result past the passive value,
/// so a zero effect leaves the probability untouched.
pub fn apply_effect(passive: f64, delta: f64) -> (f64, bool) {
    let lo = CLAMP_LO.min(passive);
    let hi = CLAMP_HI.max(passive);
    let raw = passive + delta;
    let clamped = raw.clamp(lo, hi);
    (clamped, clamped != raw)
}

/// An instance plus generation audit data.
#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub instance: RmabInstance,
    /// Pre-clamp effects, `deltas[arm][state]` (equal across states when shared).
    pub deltas: Vec<[f64; 2]>,
    /// Mean effect `W . f` per arm.
    pub means: Vec<f64>,
    /// Fraction of active probabilities the clamp altered.
    pub clamp_rate: f64,
}

pub fn generate_instance(cfg: &DatasetConfig, instance_seed: u64) -> Result<GeneratedInstance, DataGenError> {
    cfg.validate()?;
    let schema = cfg.schema();
    let bucket_counts: Vec<usize> = schema.categories.iter().map(|c| c.buckets.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed);
    let prior = match cfg.profile {
        Profile::RealWorldAnalogue { passive_alpha, passive_beta } => {
            Some(Beta::new(passive_alpha, passive_beta).map_err(|e| DataGenError::Config(e.to_string()))?)
        }
        Profile::Synthetic => None,
    };

    let mut arms = Vec::with_capacity(cfg.n_arms);
    let mut deltas = Vec::with_capacity(cfg.n_arms);
    let mut means = Vec::with_capacity(cfg.n_arms);
    let mut clamped = 0usize;
    for _ in 0..cfg.n_arms {
        let passive: [f64; 2] = match &prior {
            Some(beta) => [beta.sample(&mut rng), beta.sample(&mut rng)],
            None => [rng.random(), rng.random()],
        };
        let raw: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let mean: f64 = cfg.weights.iter().zip(&raw).map(|(w, f)| w * f).sum();
        let effect = Normal::new(mean, cfg.sigma).map_err(|e| DataGenError::Config(e.to_string()))?;
        let d0 = effect.sample(&mut rng);
        let d = if cfg.shared_delta { [d0, d0] } else { [d0, effect.sample(&mut rng)] };

        let mut p_good = [[0.0; 2]; 2];
        for s in 0..2 {
            let (active, hit) = apply_effect(passive[s], d[s]);
            clamped += usize::from(hit);
            p_good[s] = [passive[s], active];
        }
        let mut features = Vec::with_capacity(schema.len());
        for (c, &n_buckets) in bucket_counts.iter().enumerate() {
            let hot = bucket_of(raw[c], n_buckets);
            features.extend((0..n_buckets).map(|b| u8::from(b == hot)));
        }
        let mut arm = ArmModel::from_good_probs(p_good, features);
        arm.raw_features = Some(raw.to_vec());
        arms.push(arm);
        deltas.push(d);
        means.push(mean);
    }
    let instance = RmabInstance::new(arms, cfg.budget, cfg.horizon, cfg.discount, schema)?;
    Ok(GeneratedInstance { instance, deltas, means, clamp_rate: clamped as f64 / (2 * cfg.n_arms) as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub dataset: usize,
    pub index: usize,
    pub seed: u64,
    pub path: String,
    pub sha256: String,
    pub clamp_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub configs: Vec<DatasetConfig>,
    pub instances: Vec<ManifestEntry>,
}

/// A generated dataset: its config and instances in index order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub id: usize,
    pub config: DatasetConfig,
    pub instances: Vec<GeneratedInstance>,
}

/// Expands one dataset config into its instances.
pub fn generate_dataset(id: usize, cfg: &DatasetConfig, exec: Execution) -> Result<Dataset, DataGenError> {
    let instances = exec
        .map_range(cfg.n_instances, |i| generate_instance(cfg, cfg.instance_seed(i)))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset { id, config: cfg.clone(), instances })
}

/// The three synthetic datasets. `shape` supplies N, K, T, discount and the
/// instance count; weights and sigma come from the dataset table, and each
/// dataset's master seed is derived from `seed`.
pub fn dataset_suite(seed: u64, shape: &DatasetConfig, exec: Execution) -> Result<Vec<Dataset>, DataGenError> {
    (1..=3)
        .map(|d| {
            let cfg = DatasetConfig {
                weights: DATASET_WEIGHTS[d - 1],
                sigma: DATASET_SIGMA,
                master_seed: derive_seed(seed, d as u64),
                ..shape.clone()
            };
            generate_dataset(d, &cfg, exec)
        })
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `dataset{d}/instance{i}.json` files plus `manifest.json` under `dir`.
pub fn write_datasets(datasets: &[Dataset], dir: &Path) -> Result<DatasetManifest, DataGenError> {
    let io = |e: std::io::Error| DataGenError::Io(e.to_string());
    let mut entries = Vec::new();
    for ds in datasets {
        let sub = dir.join(format!("dataset{}", ds.id));
        std::fs::create_dir_all(&sub).map_err(io)?;
        for (i, gen) in ds.instances.iter().enumerate() {
            let json = gen.instance.to_json();
            let rel = format!("dataset{}/instance{i}.json", ds.id);
            std::fs::write(dir.join(&rel), &json).map_err(io)?;
            entries.push(ManifestEntry {
                dataset: ds.id,
                index: i,
                seed: ds.config.instance_seed(i),
                path: rel,
                sha256: sha256_hex(json.as_bytes()),
                clamp_rate: gen.clamp_rate,
            });
        }
    }
    let manifest = DatasetManifest { configs: datasets.iter().map(|d| d.config.clone()).collect(), instances: entries };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(dir.join("manifest.json"), text).map_err(io)?;
    Ok(manifest)
}
