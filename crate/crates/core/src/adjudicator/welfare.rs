use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::AdjudicatorError;

/// Generalized p-mean social welfare over clause scores.
#[derive(Debug, Clone, PartialEq)]
pub struct WelfareFunction {
    /// Exponent in `[-inf, 1]`.
    pub p: f64,
    /// Clause weights; `None` means uniform.
    pub weights: Option<Vec<f64>>,
}

impl WelfareFunction {
    pub fn new(p: f64) -> Result<Self, AdjudicatorError> {
        if p.is_nan() || p > 1.0 {
            return Err(AdjudicatorError::InvalidP(p));
        }
        Ok(Self { p, weights: None })
    }

    pub fn utilitarian() -> Self {
        Self { p: 1.0, weights: None }
    }

    pub fn nash() -> Self {
        Self { p: 0.0, weights: None }
    }

    pub fn egalitarian() -> Self {
        Self { p: f64::NEG_INFINITY, weights: None }
    }

    pub fn presets() -> [Self; 3] {
        [Self::utilitarian(), Self::nash(), Self::egalitarian()]
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    /// `utilitarian`, `nash`, `egalitarian`, or `p=<value>`.
    pub fn name(&self) -> String {
        match self.p {
            p if p == 1.0 => "utilitarian".into(),
            p if p == 0.0 => "nash".into(),
            p if p == f64::NEG_INFINITY => "egalitarian".into(),
            p => format!("p={p}"),
        }
    }

    pub fn from_name(name: &str) -> Result<Self, AdjudicatorError> {
        match name.to_ascii_lowercase().as_str() {
            "utilitarian" | "util" => Ok(Self::utilitarian()),
            "nash" => Ok(Self::nash()),
            "egalitarian" | "egal" => Ok(Self::egalitarian()),
            other => {
                let p = parse_p(other.strip_prefix("p=").unwrap_or(other))
                    .ok_or_else(|| AdjudicatorError::UnknownWelfare(name.to_string()))?;
                Self::new(p)
            }
        }
    }

    pub fn evaluate(&self, values: &[f64]) -> Result<f64, AdjudicatorError> {
        match &self.weights {
            Some(w) => pmean(values, w, self.p),
            None => pmean(values, &vec![1.0; values.len()], self.p),
        }
    }
}

fn parse_p(text: &str) -> Option<f64> {
    match text {
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}

/// Serializes `p` as a number, or the string `"-inf"` for the egalitarian limit.
pub(crate) mod p_serde {
    use super::*;

    pub fn serialize<S: Serializer>(p: &f64, s: S) -> Result<S::Ok, S::Error> {
        if p.is_finite() {
            s.serialize_f64(*p)
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => parse_p(&t).ok_or_else(|| serde::de::Error::custom(format!("bad p value {t:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct WelfareRepr {
    #[serde(with = "p_serde")]
    p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

impl Serialize for WelfareFunction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        WelfareRepr { p: self.p, weights: self.weights.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for WelfareFunction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = WelfareRepr::deserialize(d)?;
        let mut w = WelfareFunction::new(r.p).map_err(serde::de::Error::custom)?;
        w.weights = r.weights;
        Ok(w)
    }
}

/// Weighted generalized p-mean of strictly positive `values`.
///
/// `p = 1` is the weighted arithmetic mean, `p = 0` the weighted geometric
/// mean, `p = -inf` the minimum over positively weighted entries. Weights are
/// normalised to sum to one.
pub fn pmean(values: &[f64], weights: &[f64], p: f64) -> Result<f64, AdjudicatorError> {
    if values.is_empty() {
        return Err(AdjudicatorError::Domain("p-mean of an empty vector".into()));
    }
    if values.len() != weights.len() {
        return Err(AdjudicatorError::Shape(format!("{} values but {} weights", values.len(), weights.len())));
    }
    if p.is_nan() || p > 1.0 {
        return Err(AdjudicatorError::InvalidP(p));
    }
    if let Some(x) = values.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(AdjudicatorError::Domain(format!("p-mean needs strictly positive finite values, got {x}")));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(AdjudicatorError::Domain("weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(AdjudicatorError::Domain("weights must not all be zero".into()));
    }

    let pairs = || values.iter().zip(weights).filter(|(_, w)| **w > 0.0).map(|(x, w)| (*x, *w / total));
    if p == f64::NEG_INFINITY {
        return Ok(pairs().map(|(x, _)| x).fold(f64::INFINITY, f64::min));
    }
    if p == 1.0 {
        return Ok(pairs().map(|(x, w)| w * x).sum());
    }
    if p == 0.0 {
        return Ok(pairs().map(|(x, w)| w * x.ln()).sum::<f64>().exp());
    }
    let log_mean = if p.abs() < 1e-3 {
        // ln(sum w x^p) / p = ln1p(sum w (x^p - 1)) / p, accurate as p -> 0
        let s: f64 = pairs().map(|(x, w)| w * (p * x.ln()).exp_m1()).sum();
        s.ln_1p() / p
    } else {
        let m = pairs().map(|(x, _)| p * x.ln()).fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = pairs().map(|(x, w)| w * (p * x.ln() - m).exp()).sum();
        (m + s.ln()) / p
    };
    Ok(log_mean.exp())
}
