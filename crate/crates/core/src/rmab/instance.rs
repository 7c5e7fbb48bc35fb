use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RmabError;

/// Instance file format version written by [`RmabInstance::to_json`].
pub const SCHEMA_VERSION: u32 = 1;

const PROB_TOL: f64 = 1e-9;

/// Transition tensor indexed `[state][action][next_state]`.
pub type Transitions = [[[f64; 2]; 2]; 2];

/// One categorical feature and its ordered bucket labels (lowest first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureCategory {
    pub name: String,
    pub buckets: Vec<String>,
}

/// Ordered list of categories. Each arm's one-hot feature vector is the
/// concatenation of one block per category, in schema order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSchema {
    pub categories: Vec<FeatureCategory>,
}

impl FeatureSchema {
    pub fn new(categories: Vec<FeatureCategory>) -> Self {
        Self { categories }
    }

    /// Synthetic schema: categories named `A`, `B`, ... each with `buckets`
    /// buckets labelled `Feature A bucket 1`, ...
    pub fn synthetic(n_categories: usize, buckets: usize) -> Self {
        let categories = (0..n_categories)
            .map(|c| {
                let name = ((b'A' + c as u8) as char).to_string();
                let buckets = (1..=buckets).map(|k| format!("Feature {name} bucket {k}")).collect();
                FeatureCategory { name, buckets }
            })
            .collect();
        Self { categories }
    }

    /// Total one-hot length.
    pub fn len(&self) -> usize {
        self.categories.iter().map(|c| c.buckets.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offset of the first bucket of category `index` in the feature vector.
    pub fn offset(&self, index: usize) -> usize {
        self.categories[..index].iter().map(|c| c.buckets.len()).sum()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c.name == name)
    }

    pub fn category(&self, name: &str) -> Result<(usize, &FeatureCategory), RmabError> {
        self.position(name)
            .map(|i| (i, &self.categories[i]))
            .ok_or_else(|| RmabError::UnknownCategory(name.to_string()))
    }

    /// Bucket index (within its category) that is hot in `features`.
    pub fn hot_bucket(&self, features: &[u8], category: usize) -> Option<usize> {
        let off = self.offset(category);
        let n = self.categories[category].buckets.len();
        features[off..off + n].iter().position(|&b| b == 1)
    }
}

/// One arm: a two-state, two-action MDP plus its feature encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub transitions: Transitions,
    pub features: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_features: Option<Vec<f64>>,
}

impl ArmModel {
    /// Builds an arm from the four "move to good state" probabilities
    /// `p_good[s][a] = P(s, a, 1)`.
    pub fn from_good_probs(p_good: [[f64; 2]; 2], features: Vec<u8>) -> Self {
        let mut transitions = [[[0.0; 2]; 2]; 2];
        for s in 0..2 {
            for a in 0..2 {
                transitions[s][a] = [1.0 - p_good[s][a], p_good[s][a]];
            }
        }
        Self { transitions, features, raw_features: None }
    }

    pub fn p(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions[s][a][next]
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Result<(), RmabError> {
        for s in 0..2 {
            for a in 0..2 {
                let row = self.transitions[s][a];
                if row.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
                    return Err(RmabError::InvalidArm(format!(
                        "P({s},{a},.) = {row:?} has an entry outside [0,1]"
                    )));
                }
                if (row[0] + row[1] - 1.0).abs() > PROB_TOL {
                    return Err(RmabError::InvalidArm(format!("P({s},{a},.) = {row:?} does not sum to 1")));
                }
            }
        }
        if self.features.len() != schema.len() {
            return Err(RmabError::InvalidArm(format!(
                "feature vector has length {}, schema needs {}",
                self.features.len(),
                schema.len()
            )));
        }
        if self.features.iter().any(|&b| b > 1) {
            return Err(RmabError::InvalidArm("feature vector is not binary".into()));
        }
        for (c, cat) in schema.categories.iter().enumerate() {
            let off = schema.offset(c);
            let hot: u32 = self.features[off..off + cat.buckets.len()].iter().map(|&b| u32::from(b)).sum();
            if hot != 1 {
                return Err(RmabError::InvalidArm(format!(
                    "category {} has {hot} hot buckets, expected exactly one",
                    cat.name
                )));
            }
        }
        Ok(())
    }
}

/// A full restless-bandit problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RmabInstance {
    pub arms: Vec<ArmModel>,
    pub budget: usize,
    pub horizon: usize,
    pub discount: f64,
    pub schema: FeatureSchema,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    schema_version: u32,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "T")]
    t: usize,
    gamma: f64,
    feature_schema: FeatureSchema,
    arms: Vec<ArmModel>,
}

impl RmabInstance {
    pub fn new(
        arms: Vec<ArmModel>,
        budget: usize,
        horizon: usize,
        discount: f64,
        schema: FeatureSchema,
    ) -> Result<Self, RmabError> {
        let inst = Self { arms, budget, horizon, discount, schema };
        inst.validate()?;
        Ok(inst)
    }

    pub fn n_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn validate(&self) -> Result<(), RmabError> {
        let n = self.arms.len();
        if self.budget == 0 || self.budget > n {
            return Err(RmabError::InvalidInstance(format!("budget K={} must satisfy 0 < K <= N={n}", self.budget)));
        }
        if self.horizon == 0 {
            return Err(RmabError::InvalidInstance("horizon T must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(RmabError::InvalidInstance(format!("discount {} outside [0,1]", self.discount)));
        }
        for (i, arm) in self.arms.iter().enumerate() {
            arm.validate(&self.schema).map_err(|e| RmabError::InvalidInstance(format!("arm {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = InstanceFile {
            schema_version: SCHEMA_VERSION,
            n: self.arms.len(),
            k: self.budget,
            t: self.horizon,
            gamma: self.discount,
            feature_schema: self.schema.clone(),
            arms: self.arms.clone(),
        };
        serde_json::to_string_pretty(&file).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RmabError> {
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| RmabError::Format(e.to_string()))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(RmabError::Format(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        if file.n != file.arms.len() {
            return Err(RmabError::Format(format!("N={} but {} arms listed", file.n, file.arms.len())));
        }
        Self::new(file.arms, file.k, file.t, file.gamma, file.feature_schema)
    }

    pub fn load(path: &Path) -> Result<Self, RmabError> {
        let text = std::fs::read_to_string(path).map_err(|e| RmabError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), RmabError> {
        std::fs::write(path, self.to_json()).map_err(|e| RmabError::Io(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arm(features: Vec<u8>) -> ArmModel {
        ArmModel::from_good_probs([[0.2, 0.5], [0.7, 0.9]], features)
    }

    #[test]
    fn schema_offsets() {
        let schema = FeatureSchema::synthetic(3, 5);
        assert_eq!(schema.len(), 15);
        assert_eq!(schema.offset(2), 10);
        assert_eq!(schema.categories[1].buckets[4], "Feature B bucket 5");
        assert_eq!(schema.position("C"), Some(2));
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let schema = FeatureSchema::synthetic(1, 2);
        let mut a = arm(vec![1, 0]);
        a.transitions[1][0] = [0.3, 0.3];
        assert!(matches!(a.validate(&schema), Err(RmabError::InvalidArm(_))));
    }

    #[test]
    fn rejects_two_hot_buckets() {
        let schema = FeatureSchema::synthetic(1, 3);
        assert!(arm(vec![1, 1, 0]).validate(&schema).is_err());
        assert!(arm(vec![0, 0, 0]).validate(&schema).is_err());
        assert!(arm(vec![0, 0, 1]).validate(&schema).is_ok());
    }

    #[test]
    fn budget_bounds() {
        let schema = FeatureSchema::synthetic(1, 2);
        let arms = vec![arm(vec![1, 0]), arm(vec![0, 1])];
        assert!(RmabInstance::new(arms.clone(), 0, 3, 0.9, schema.clone()).is_err());
        assert!(RmabInstance::new(arms.clone(), 3, 3, 0.9, schema.clone()).is_err());
        assert!(RmabInstance::new(arms.clone(), 2, 0, 0.9, schema.clone()).is_err());
        assert!(RmabInstance::new(arms, 2, 3, 0.9, schema).is_ok());
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let schema = FeatureSchema::synthetic(1, 2);
        let inst = RmabInstance::new(vec![arm(vec![1, 0]), arm(vec![0, 1])], 1, 4, 0.9, schema).unwrap();
        let text = inst.to_json();
        assert!(text.contains("\"N\": 2"));
        assert_eq!(RmabInstance::from_json(&text).unwrap(), inst);
        let bumped = text.replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(RmabInstance::from_json(&bumped), Err(RmabError::Format(_))));
    }
}
