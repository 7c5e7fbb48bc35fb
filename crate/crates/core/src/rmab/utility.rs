use serde::{Deserialize, Serialize};

use super::{FeatureSchema, RmabError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryUtility {
    pub name: String,
    pub buckets: Vec<String>,
    pub values: Vec<f64>,
}

impl CategoryUtility {
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Utility of the `k` lowest (`high = false`) or highest buckets.
    pub fn extreme(&self, k: usize, high: bool) -> f64 {
        let k = k.min(self.values.len());
        if high {
            self.values[self.values.len() - k..].iter().sum()
        } else {
            self.values[..k].iter().sum()
        }
    }
}

/// Discounted utility generated by the arms of each feature bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityFeatureDistribution {
    pub categories: Vec<CategoryUtility>,
    pub total: f64,
}

impl UtilityFeatureDistribution {
    /// Buckets per-arm utilities by each arm's hot feature.
    pub fn from_arm_utilities(schema: &FeatureSchema, features: &[&[u8]], per_arm: &[f64]) -> Self {
        let mut categories: Vec<CategoryUtility> = schema
            .categories
            .iter()
            .map(|c| CategoryUtility { name: c.name.clone(), buckets: c.buckets.clone(), values: vec![0.0; c.buckets.len()] })
            .collect();
        for (feats, &u) in features.iter().zip(per_arm) {
            for (ci, cat) in categories.iter_mut().enumerate() {
                if let Some(b) = schema.hot_bucket(feats, ci) {
                    cat.values[b] += u;
                }
            }
        }
        Self { categories, total: per_arm.iter().sum() }
    }

    pub fn category(&self, name: &str) -> Result<&CategoryUtility, RmabError> {
        self.categories
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| RmabError::UnknownCategory(name.to_string()))
    }

    /// `category,bucket,utility` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,bucket,utility\n");
        for cat in &self.categories {
            for (label, v) in cat.buckets.iter().zip(&cat.values) {
                out.push_str(&format!("{},{},{}\n", csv_field(&cat.name), csv_field(label), v));
            }
        }
        out
    }

    /// Human-readable block used in reflection and rating prompts.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for cat in &self.categories {
            out.push_str(&format!("Category: {}\n", cat.name));
            for (label, v) in cat.buckets.iter().zip(&cat.values) {
                out.push_str(&format!("{label}: {v:.2}\n"));
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// 1-D earth mover's distance between two histograms over the same ordered
/// buckets with unit spacing, after normalising each to mass 1.
pub fn emd_1d(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "histograms must share buckets");
    let (ma, mb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if !(ma > 0.0) || !(mb > 0.0) {
        return None;
    }
    let (mut ca, mut cb, mut d) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ca += x / ma;
        cb += y / mb;
        d += (ca - cb).abs();
    }
    // the final CDF difference is zero up to rounding
    d -= (ca - cb).abs();
    Some(d)
}

/// EMD between the utility histograms of `category` in two distributions.
pub fn utility_distribution_diff(
    a: &UtilityFeatureDistribution,
    b: &UtilityFeatureDistribution,
    category: &str,
) -> Result<f64, RmabError> {
    let ca = a.category(category)?;
    let cb = b.category(category)?;
    if ca.values.len() != cb.values.len() {
        return Err(RmabError::InvalidInput(format!("category {category} has mismatched bucket counts")));
    }
    emd_1d(&ca.values, &cb.values).ok_or_else(|| RmabError::DegenerateDistribution(category.to_string()))
}
