use serde::{Deserialize, Serialize};

use super::welfare::{p_serde, pmean, WelfareFunction};
use super::AdjudicatorError;

/// Offset used by the positivity shift: the smallest shifted score.
pub const SHIFT_EPSILON: f64 = 1e-6;

/// How a clause's raw scores were mapped to the scores used for selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization {
    /// `(raw - baseline) / baseline`.
    RelativeChange { baseline: f64 },
    /// `(raw - min) / (max - min)`, or `1 -` that when `inverted`.
    MinMax { min: f64, max: f64, inverted: bool },
    /// Every raw value was equal; all scores set to 0.5.
    Constant { value: f64 },
    /// Raw values used unchanged (fallback when the baseline is not positive).
    Identity { reason: String },
}

impl Normalization {
    pub fn apply(&self, raw: f64) -> f64 {
        match self {
            Normalization::RelativeChange { baseline } => (raw - baseline) / baseline,
            Normalization::MinMax { min, max, inverted } => {
                let v = (raw - min) / (max - min);
                if *inverted {
                    1.0 - v
                } else {
                    v
                }
            }
            Normalization::Constant { .. } => 0.5,
            Normalization::Identity { .. } => raw,
        }
    }
}

/// One clause's scores over the pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreColumn {
    pub clause: String,
    pub scorer: String,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub normalization: Normalization,
    /// False when the scorer could not produce a usable column; selection
    /// then ignores this clause.
    pub available: bool,
}

impl ScoreColumn {
    pub fn new(clause: impl Into<String>, scorer: impl Into<String>, raw: Vec<f64>, normalization: Normalization) -> Self {
        let normalized = raw.iter().map(|&r| normalization.apply(r)).collect();
        Self { clause: clause.into(), scorer: scorer.into(), raw, normalized, normalization, available: true }
    }

    /// `(raw - baseline) / baseline`, falling back to raw values when the
    /// baseline is not positive.
    pub fn relative_change(clause: impl Into<String>, scorer: impl Into<String>, raw: Vec<f64>, baseline: f64) -> Self {
        let norm = if baseline > 0.0 && baseline.is_finite() {
            Normalization::RelativeChange { baseline }
        } else {
            log::warn!("baseline {baseline} is not positive; using raw scores");
            Normalization::Identity { reason: format!("non-positive baseline {baseline}") }
        };
        Self::new(clause, scorer, raw, norm)
    }

    /// Min-max to `[0, 1]` (inverted: lower raw is better). Constant columns map to 0.5.
    pub fn min_max(clause: impl Into<String>, scorer: impl Into<String>, raw: Vec<f64>, inverted: bool) -> Self {
        let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let norm = if max > min {
            Normalization::MinMax { min, max, inverted }
        } else {
            Normalization::Constant { value: min }
        };
        Self::new(clause, scorer, raw, norm)
    }

    pub fn unavailable(clause: impl Into<String>, scorer: impl Into<String>, n: usize, reason: &str) -> Self {
        let mut col = Self::new(clause, scorer, vec![0.0; n], Normalization::Identity { reason: reason.to_string() });
        col.available = false;
        col
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

/// Clause-by-candidate alignment scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub columns: Vec<ScoreColumn>,
    pub weights: Vec<f64>,
    pub n_candidates: usize,
}

impl ScoreMatrix {
    pub fn new(columns: Vec<ScoreColumn>) -> Result<Self, AdjudicatorError> {
        let weights = vec![1.0; columns.len()];
        Self::with_weights(columns, weights)
    }

    pub fn with_weights(columns: Vec<ScoreColumn>, weights: Vec<f64>) -> Result<Self, AdjudicatorError> {
        let n = columns.first().map_or(0, |c| c.len());
        if columns.is_empty() {
            return Err(AdjudicatorError::Shape("score matrix needs at least one clause".into()));
        }
        if let Some(c) = columns.iter().find(|c| c.len() != n || c.normalized.len() != n) {
            return Err(AdjudicatorError::Shape(format!("clause {:?} has {} scores, expected {n}", c.clause, c.len())));
        }
        if weights.len() != columns.len() {
            return Err(AdjudicatorError::Shape(format!("{} weights for {} clauses", weights.len(), columns.len())));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(AdjudicatorError::Domain("clause weights must be non-negative".into()));
        }
        for c in columns.iter().filter(|c| c.available) {
            if c.normalized.iter().any(|v| !v.is_finite()) {
                return Err(AdjudicatorError::Domain(format!("clause {:?} has non-finite scores", c.clause)));
            }
        }
        Ok(Self { columns, weights, n_candidates: n })
    }

    /// Builds a matrix straight from `rows[clause][candidate]` normalised scores.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, AdjudicatorError> {
        let columns = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| ScoreColumn::new(format!("clause{i}"), "given", r, Normalization::Identity { reason: "given".into() }))
            .collect();
        Self::new(columns)
    }

    fn active(&self) -> impl Iterator<Item = (usize, &ScoreColumn)> {
        self.columns.iter().enumerate().filter(|(_, c)| c.available)
    }

    /// Uniform offset that makes every available score strictly positive:
    /// `eps - min` when the minimum is `<= 0`, else zero.
    pub fn positivity_shift(&self) -> f64 {
        let min = self.active().flat_map(|(_, c)| c.normalized.iter().copied()).fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            SHIFT_EPSILON - min
        } else {
            0.0
        }
    }

    /// Shifted score vector of each candidate over the available clauses,
    /// `vectors[candidate][clause]`, plus the matching weights.
    pub fn candidate_vectors(&self, shift: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let cols: Vec<&ScoreColumn> = self.active().map(|(_, c)| c).collect();
        let weights = self.active().map(|(i, _)| self.weights[i]).collect();
        let vectors = (0..self.n_candidates).map(|j| cols.iter().map(|c| c.normalized[j] + shift).collect()).collect();
        (vectors, weights)
    }

    /// Candidate-major CSV with raw and normalised layers.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("candidate");
        for c in &self.columns {
            out.push_str(&format!(",raw:{0},norm:{0}", c.clause.replace(',', ";")));
        }
        out.push('\n');
        for j in 0..self.n_candidates {
            out.push_str(&j.to_string());
            for c in &self.columns {
                out.push_str(&format!(",{},{}", c.raw[j], c.normalized[j]));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub candidate: usize,
    pub welfare: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen: usize,
    pub welfare: f64,
    #[serde(with = "p_serde")]
    pub p: f64,
    pub shift: f64,
    /// All candidates, best first; ties by lowest id.
    pub ranking: Vec<RankedCandidate>,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Welfare-maximising candidate and the full ranking. Scores are shifted to
/// be strictly positive before the p-mean is taken.
pub fn select(matrix: &ScoreMatrix, welfare: &WelfareFunction) -> Result<Selection, AdjudicatorError> {
    if matrix.n_candidates == 0 {
        return Err(AdjudicatorError::EmptyPool);
    }
    let shift = matrix.positivity_shift();
    let (vectors, mut weights) = matrix.candidate_vectors(shift);
    if weights.is_empty() {
        return Err(AdjudicatorError::Shape("no clause has an available score column".into()));
    }
    if let Some(w) = &welfare.weights {
        let active: Vec<usize> = matrix.active().map(|(i, _)| i).collect();
        if w.len() != matrix.columns.len() {
            return Err(AdjudicatorError::Shape(format!("{} welfare weights for {} clauses", w.len(), matrix.columns.len())));
        }
        weights = active.iter().zip(&weights).map(|(&i, m)| w[i] * m).collect();
    }
    let values = vectors.iter().map(|v| pmean(v, &weights, welfare.p)).collect::<Result<Vec<_>, _>>()?;
    let chosen = argmax_first(&values).expect("non-empty pool");
    let mut ranking: Vec<RankedCandidate> =
        values.iter().enumerate().map(|(candidate, &welfare)| RankedCandidate { candidate, welfare }).collect();
    ranking.sort_by(|a, b| b.welfare.total_cmp(&a.welfare).then(a.candidate.cmp(&b.candidate)));
    Ok(Selection { chosen, welfare: values[chosen], p: welfare.p, shift, ranking })
}

fn argmax_pmean(scores: &[Vec<f64>], p: f64) -> Result<(usize, Vec<f64>), AdjudicatorError> {
    let values = scores
        .iter()
        .map(|v| pmean(v, &vec![1.0; v.len()], p))
        .collect::<Result<Vec<_>, _>>()?;
    let best = argmax_first(&values).ok_or(AdjudicatorError::EmptyPool)?;
    Ok((best, values))
}

/// Relative welfare lost by selecting on `noisy` instead of `true_scores`,
/// both laid out `[candidate][clause]` and strictly positive.
pub fn relative_regret(true_scores: &[Vec<f64>], noisy_scores: &[Vec<f64>], p: f64) -> Result<f64, AdjudicatorError> {
    if true_scores.len() != noisy_scores.len()
        || true_scores.iter().zip(noisy_scores).any(|(a, b)| a.len() != b.len())
    {
        return Err(AdjudicatorError::Shape("true and noisy score matrices differ in shape".into()));
    }
    let (best, values) = argmax_pmean(true_scores, p)?;
    let (picked, _) = argmax_pmean(noisy_scores, p)?;
    Ok((values[best] - values[picked]) / values[best])
}

/// Candidates not strictly dominated in both coordinates by another.
pub fn pareto_front(matrix: &ScoreMatrix) -> Result<Vec<usize>, AdjudicatorError> {
    if matrix.columns.len() != 2 {
        return Err(AdjudicatorError::Shape(format!("Pareto front needs 2 clauses, got {}", matrix.columns.len())));
    }
    let (a, b) = (&matrix.columns[0].normalized, &matrix.columns[1].normalized);
    Ok(pareto_front_points(a, b))
}

pub(crate) fn pareto_front_points(a: &[f64], b: &[f64]) -> Vec<usize> {
    // sweep by descending first coordinate; a point is dominated when some
    // point with strictly larger first coordinate has strictly larger second
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| a[j].total_cmp(&a[i]).then(i.cmp(&j)));
    let mut on_front = vec![false; a.len()];
    let mut best_b = f64::NEG_INFINITY;
    let mut g = 0;
    while g < order.len() {
        let mut h = g;
        while h < order.len() && a[order[h]] == a[order[g]] {
            h += 1;
        }
        for &i in &order[g..h] {
            on_front[i] = !(best_b > b[i]);
        }
        for &i in &order[g..h] {
            best_b = best_b.max(b[i]);
        }
        g = h;
    }
    (0..a.len()).filter(|&i| on_front[i]).collect()
}
