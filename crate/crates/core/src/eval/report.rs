use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{EvalError, EvaluationRecord, Method};

/// Mean and standard error over cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub se: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, se: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self { mean, se: (var / n as f64).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSummary {
    pub k: usize,
    pub sum: Stat,
    pub min: Stat,
    /// Fraction of cells whose summed change strictly exceeds DLM's.
    pub sum_gt_dlm: Option<f64>,
    /// Fraction of cells whose minimum change is at least DLM's.
    pub min_ge_dlm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub n_cells: usize,
    pub per_k: Vec<KSummary>,
    pub shift: Stat,
    pub utility_change: Stat,
}

impl MethodSummary {
    pub fn at(&self, k: usize) -> Option<&KSummary> {
        self.per_k.iter().find(|s| s.k == k)
    }
}

/// Aggregates over cells, one summary per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub n_cells: usize,
    pub methods: Vec<MethodSummary>,
}

type CellKey = (usize, usize, String);

fn cell_key(r: &EvaluationRecord) -> CellKey {
    (r.dataset, r.instance, r.prompt.clone())
}

impl Report {
    /// Pure fold over per-cell records. Methods appear in first-seen order.
    pub fn from_records(records: &[EvaluationRecord]) -> Self {
        let mut order: Vec<&str> = Vec::new();
        let mut by_method: BTreeMap<&str, Vec<&EvaluationRecord>> = BTreeMap::new();
        for r in records {
            if !by_method.contains_key(r.method.as_str()) {
                order.push(&r.method);
            }
            by_method.entry(&r.method).or_default().push(r);
        }
        let dlm_name = Method::Dlm.to_string();
        let dlm: Option<BTreeMap<CellKey, &EvaluationRecord>> =
            by_method.get(dlm_name.as_str()).map(|rs| rs.iter().map(|r| (cell_key(r), *r)).collect());
        let cells: std::collections::BTreeSet<CellKey> = records.iter().map(cell_key).collect();

        let methods = order
            .iter()
            .map(|name| {
                let rs = &by_method[name];
                let ks: Vec<usize> = rs.first().map(|r| r.metrics.scores.iter().map(|s| s.k).collect()).unwrap_or_default();
                let per_k = ks
                    .iter()
                    .map(|&k| {
                        let at = |r: &EvaluationRecord| r.metrics.at(k).cloned();
                        let sums: Vec<f64> = rs.iter().filter_map(|r| at(r).map(|s| s.sum)).collect();
                        let mins: Vec<f64> = rs.iter().filter_map(|r| at(r).map(|s| s.min)).collect();
                        let (sum_gt_dlm, min_ge_dlm) = match &dlm {
                            Some(base) if *name != dlm_name => {
                                let mut n = 0usize;
                                let (mut gt, mut ge) = (0usize, 0usize);
                                for r in rs {
                                    let (Some(b), Some(mine)) = (base.get(&cell_key(r)), at(r)) else { continue };
                                    let Some(theirs) = b.metrics.at(k) else { continue };
                                    n += 1;
                                    gt += usize::from(mine.sum > theirs.sum);
                                    ge += usize::from(mine.min >= theirs.min);
                                }
                                if n == 0 {
                                    (None, None)
                                } else {
                                    (Some(gt as f64 / n as f64), Some(ge as f64 / n as f64))
                                }
                            }
                            _ => (None, None),
                        };
                        KSummary { k, sum: Stat::of(&sums), min: Stat::of(&mins), sum_gt_dlm, min_ge_dlm }
                    })
                    .collect();
                let shifts: Vec<f64> = rs.iter().map(|r| r.metrics.shift).collect();
                let changes: Vec<f64> = rs.iter().map(|r| r.metrics.utility_change).collect();
                MethodSummary {
                    method: name.to_string(),
                    n_cells: rs.len(),
                    per_k,
                    shift: Stat::of(&shifts),
                    utility_change: Stat::of(&changes),
                }
            })
            .collect();
        Report { n_cells: cells.len(), methods }
    }

    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// One row per (method, k).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,n_cells,k,sum_mean,sum_se,min_mean,min_se,sum_gt_dlm,min_ge_dlm,shift_mean,shift_se,utility_change_mean,utility_change_se\n",
        );
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
        for m in &self.methods {
            for s in &m.per_k {
                let _ = writeln!(
                    out,
                    "{},{},{},{:.4},{:.4},{:.4},{:.4},{},{},{:.6},{:.6},{:.4},{:.4}",
                    m.method,
                    m.n_cells,
                    s.k,
                    s.sum.mean,
                    s.sum.se,
                    s.min.mean,
                    s.min.se,
                    opt(s.sum_gt_dlm),
                    opt(s.min_ge_dlm),
                    m.shift.mean,
                    m.shift.se,
                    m.utility_change.mean,
                    m.utility_change.se
                );
            }
        }
        out
    }
}

pub fn records_to_jsonl(records: &[EvaluationRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
}

pub fn parse_records(text: &str) -> Result<Vec<EvaluationRecord>, EvalError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| EvalError::Format(format!("line {}: {e}", i + 1))))
        .collect()
}
