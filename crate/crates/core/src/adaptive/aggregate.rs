use serde::{Deserialize, Serialize};

use super::calibrate::CriticalValues;
use super::rungs::RungEstimate;
use super::{AdaptiveError, CutoffLadder};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationRow {
    /// 1-based rung index.
    pub k: usize,
    #[serde(rename = "U")]
    pub cutoff: f64,
    pub alpha_tilde: f64,
    pub sigma2: f64,
    #[serde(rename = "T")]
    pub t_stat: f64,
    pub gamma: f64,
    pub alpha_hat: f64,
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationTrace {
    pub rows: Vec<AggregationRow>,
}

impl AggregationTrace {
    /// `alpha^_K`.
    pub fn final_estimate(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.alpha_hat)
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self, csv::Error> {
        let rows = csv::Reader::from_reader(text.as_bytes()).deserialize().collect::<Result<_, _>>()?;
        Ok(AggregationTrace { rows })
    }
}

/// Aggregation over rungs that are all usable.
pub fn aggregate<K: Fn(f64) -> f64>(
    cutoffs: &[f64],
    alphas: &[f64],
    sigma2: &[f64],
    cv: &CriticalValues,
    kernel: K,
) -> Result<AggregationTrace, AdaptiveError> {
    let admissible = vec![true; alphas.len()];
    aggregate_masked(cutoffs, alphas, sigma2, &admissible, cv, kernel)
}

/// Aggregation over the admissible rungs of a ladder; inadmissible rungs carry
/// the running estimate forward with zero weight.
pub fn aggregate_rungs<K: Fn(f64) -> f64>(
    ladder: &CutoffLadder,
    rungs: &[RungEstimate],
    cv: &CriticalValues,
    kernel: K,
) -> Result<AggregationTrace, AdaptiveError> {
    if rungs.len() != ladder.len() {
        return Err(AdaptiveError::Lengths);
    }
    let alphas: Vec<f64> = rungs.iter().map(|r| r.alpha).collect();
    let sigma2: Vec<f64> = rungs.iter().map(|r| r.sigma2).collect();
    let admissible: Vec<bool> = rungs.iter().map(|r| r.admissible).collect();
    aggregate_masked(ladder.cutoffs(), &alphas, &sigma2, &admissible, cv, kernel)
}

/// Like [`aggregate_rungs`], but when no rung passed the admissibility filter
/// the rung with the fewest truncated support nodes (among those with a finite
/// estimate) is used alone; its variance never enters. The flag reports
/// whether that happened.
pub fn aggregate_or_fallback<K: Fn(f64) -> f64>(
    ladder: &CutoffLadder,
    rungs: &[RungEstimate],
    cv: &CriticalValues,
    kernel: K,
) -> Result<(AggregationTrace, bool), AdaptiveError> {
    match aggregate_rungs(ladder, rungs, cv, &kernel) {
        Err(AdaptiveError::NoAdmissibleRung) => {}
        other => return other.map(|t| (t, false)),
    }
    let pick = rungs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.alpha.is_finite())
        .min_by(|(i, a), (j, b)| a.clipped_fraction.total_cmp(&b.clipped_fraction).then(j.cmp(i)))
        .map(|(i, _)| i)
        .ok_or(AdaptiveError::NoAdmissibleRung)?;
    let alphas: Vec<f64> = rungs.iter().map(|r| r.alpha).collect();
    let sigma2: Vec<f64> = rungs.iter().map(|r| r.sigma2).collect();
    let mask: Vec<bool> = (0..rungs.len()).map(|k| k == pick).collect();
    aggregate_masked(ladder.cutoffs(), &alphas, &sigma2, &mask, cv, kernel).map(|t| (t, true))
}

/// One step of the recursion: `(T, gamma, alpha^_k)`.
pub(crate) fn step<K: Fn(f64) -> f64>(prev: f64, alpha: f64, sigma2: f64, v: f64, kernel: &K) -> (f64, f64, f64) {
    let t = (alpha - prev).powi(2) / sigma2;
    let gamma = kernel(t / v).clamp(0.0, 1.0);
    (t, gamma, gamma * alpha + (1.0 - gamma) * prev)
}

fn aggregate_masked<K: Fn(f64) -> f64>(
    cutoffs: &[f64],
    alphas: &[f64],
    sigma2: &[f64],
    admissible: &[bool],
    cv: &CriticalValues,
    kernel: K,
) -> Result<AggregationTrace, AdaptiveError> {
    let k_total = alphas.len();
    if k_total == 0 || cutoffs.len() != k_total || sigma2.len() != k_total || admissible.len() != k_total {
        return Err(AdaptiveError::Lengths);
    }
    if cv.values.len() + 1 < k_total {
        return Err(AdaptiveError::Lengths);
    }
    let mut rows = Vec::with_capacity(k_total);
    let mut current: Option<f64> = None;
    for k in 0..k_total {
        let (a, s2) = (alphas[k], sigma2[k]);
        let usable = admissible[k];
        // the first used rung is taken as is, so only later ones need a variance
        if usable && current.is_some() && !(s2 > 0.0 && s2.is_finite()) {
            return Err(AdaptiveError::Sigma { rung: k + 1, value: s2 });
        }
        let (t, gamma, hat) = match (usable, current) {
            (false, prev) => (f64::NAN, 0.0, prev.unwrap_or(f64::NAN)),
            (true, None) => (0.0, 1.0, a),
            (true, Some(prev)) => step(prev, a, s2, cv.values[k - 1], &kernel),
        };
        if usable {
            current = Some(hat);
        }
        rows.push(AggregationRow {
            k: k + 1,
            cutoff: cutoffs[k],
            alpha_tilde: a,
            sigma2: s2,
            t_stat: t,
            gamma,
            alpha_hat: hat,
            admissible: usable,
        });
    }
    if current.is_none() {
        return Err(AdaptiveError::NoAdmissibleRung);
    }
    Ok(AggregationTrace { rows })
}
