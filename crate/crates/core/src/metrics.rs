//! Robust statistics and the auditing metrics built on them.
//!
//! Quantiles use one convention everywhere: linear interpolation between
//! order statistics at zero-based rank `q * (n - 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ResponseSet;

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    if lo == hi || frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("quantile"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidConfig(format!("quantile level {q} outside [0, 1]")));
    }
    Ok(quantile_sorted(&sorted(values), q))
}

pub fn median(values: &[f64]) -> Result<f64> {
    quantile(values, 0.5)
}

/// `Q75 - Q25`.
pub fn iqr(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("iqr"));
    }
    let s = sorted(values);
    Ok(quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25))
}

/// `|a| / (|a| + |b|)`, or 0.5 when both are zero.
pub fn rs_from_medians(m_mech: f64, m_spur: f64) -> f64 {
    let (a, b) = (m_mech.abs(), m_spur.abs());
    if a == 0.0 && b == 0.0 {
        0.5
    } else {
        a / (a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReasoningScore {
    pub m_mech: f64,
    pub m_spur: f64,
    pub rs: f64,
}

pub fn reasoning_score(mech_deltas: &[f64], spur_deltas: &[f64]) -> Result<ReasoningScore> {
    if mech_deltas.is_empty() || spur_deltas.is_empty() {
        return Err(Error::EmptyInput("reasoning_score"));
    }
    let m_mech = median(mech_deltas)?;
    let m_spur = median(spur_deltas)?;
    Ok(ReasoningScore {
        m_mech,
        m_spur,
        rs: rs_from_medians(m_mech, m_spur),
    })
}

/// `|median(mech) - median(spur)| / IQR(mech)` over pooled responses; 0 when the IQR vanishes.
pub fn separation_coefficient(all_mech: &[f64], all_spur: &[f64]) -> Result<f64> {
    if all_mech.is_empty() || all_spur.is_empty() {
        return Err(Error::EmptyInput("separation_coefficient"));
    }
    let mech = sorted(all_mech);
    let spread = quantile_sorted(&mech, 0.75) - quantile_sorted(&mech, 0.25);
    if spread == 0.0 {
        return Ok(0.0);
    }
    let gap = quantile_sorted(&mech, 0.5) - median(all_spur)?;
    Ok(gap.abs() / spread)
}

/// Fraction of spurious responses inside the closed mechanistic IQR band.
pub fn overlap_rate(all_mech: &[f64], all_spur: &[f64]) -> Result<f64> {
    if all_mech.is_empty() || all_spur.is_empty() {
        return Err(Error::EmptyInput("overlap_rate"));
    }
    let mech = sorted(all_mech);
    let (lo, hi) = (quantile_sorted(&mech, 0.25), quantile_sorted(&mech, 0.75));
    let inside = all_spur.iter().filter(|&&s| lo <= s && s <= hi).count();
    Ok(inside as f64 / all_spur.len() as f64)
}

/// Sign with `sign(0) = 0`.
pub fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Per-input fraction of mechanistic responses agreeing in sign with that
/// input's median, averaged over inputs.
pub fn sign_consistency<'a, I>(per_input: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a [f64], f64)>,
{
    let mut total = 0.0;
    let mut n = 0usize;
    for (deltas, m_mech) in per_input {
        if deltas.is_empty() {
            return Err(Error::EmptyInput("sign_consistency"));
        }
        let target = sign(m_mech);
        let matches = deltas.iter().filter(|&&d| sign(d) == target).count();
        total += matches as f64 / deltas.len() as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyInput("sign_consistency"));
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Directional {
    /// Mean of `|m_mech| / |m_spur|`; `None` when every input was excluded.
    pub msr_mean: Option<f64>,
    /// Inputs with `m_spur = 0` and `m_mech != 0`, left out of the mean.
    pub msr_excluded: usize,
    pub md: f64,
}

/// Per-input magnitude ratio of medians, or `None` for the infinite case.
pub fn msr_ratio(m_mech: f64, m_spur: f64) -> Option<f64> {
    let (a, b) = (m_mech.abs(), m_spur.abs());
    match (a == 0.0, b == 0.0) {
        (true, true) => Some(1.0),
        (false, true) => None,
        _ => Some(a / b),
    }
}

pub fn msr_and_dominance(per_input: &[(f64, f64)]) -> Result<Directional> {
    if per_input.is_empty() {
        return Err(Error::EmptyInput("msr_and_dominance"));
    }
    let mut sum = 0.0;
    let mut kept = 0usize;
    let mut dominant = 0usize;
    for &(m_mech, m_spur) in per_input {
        if let Some(r) = msr_ratio(m_mech, m_spur) {
            sum += r;
            kept += 1;
        }
        if m_mech.abs() > m_spur.abs() {
            dominant += 1;
        }
    }
    Ok(Directional {
        msr_mean: (kept > 0).then(|| sum / kept as f64),
        msr_excluded: per_input.len() - kept,
        md: dominant as f64 / per_input.len() as f64,
    })
}

/// Mann-Whitney AUROC with ties counted as one half.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidConfig(format!("label {bad} is not 0/1")));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::AurocUndefined);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of 1-based mid-ranks of the positives.
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        pos_rank_sum += mid_rank * pos_in_tie as f64;
        i = j + 1;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerInputMetrics {
    pub pair_id: String,
    pub m_mech: f64,
    pub m_spur: f64,
    pub rs: f64,
    pub sc_contrib: f64,
    /// `None` when excluded from the MSR mean.
    pub msr: Option<f64>,
    pub md: bool,
}

pub fn per_input_metrics(responses: &ResponseSet) -> Result<PerInputMetrics> {
    let score = reasoning_score(&responses.mech_deltas, &responses.spur_deltas)?;
    let sc_contrib = sign_consistency([(responses.mech_deltas.as_slice(), score.m_mech)])?;
    Ok(PerInputMetrics {
        pair_id: responses.pair_id.clone(),
        m_mech: score.m_mech,
        m_spur: score.m_spur,
        rs: score.rs,
        sc_contrib,
        msr: msr_ratio(score.m_mech, score.m_spur),
        md: score.m_mech.abs() > score.m_spur.abs(),
    })
}

/// Model-level metrics over an auditing set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub n_inputs: usize,
    pub rs_mean: f64,
    pub c_sep: f64,
    pub overlap: f64,
    pub sc: f64,
    pub msr_mean: Option<f64>,
    pub msr_excluded: usize,
    pub md: f64,
    #[serde(default)]
    pub auroc: Option<f64>,
}

pub fn model_metrics(responses: &[ResponseSet]) -> Result<ModelMetrics> {
    if responses.is_empty() {
        return Err(Error::EmptyInput("model_metrics"));
    }
    let per_input = responses
        .iter()
        .map(per_input_metrics)
        .collect::<Result<Vec<_>>>()?;
    Ok(model_metrics_from_parts(responses, &per_input))
}

pub(crate) fn model_metrics_from_parts(
    responses: &[ResponseSet],
    per_input: &[PerInputMetrics],
) -> ModelMetrics {
    let n = per_input.len() as f64;
    let all_mech: Vec<f64> = responses.iter().flat_map(|r| r.mech_deltas.iter().copied()).collect();
    let all_spur: Vec<f64> = responses.iter().flat_map(|r| r.spur_deltas.iter().copied()).collect();
    let medians: Vec<(f64, f64)> = per_input.iter().map(|p| (p.m_mech, p.m_spur)).collect();
    // Inputs are non-empty here, so the pooled metrics cannot fail.
    let directional = msr_and_dominance(&medians).expect("non-empty");
    ModelMetrics {
        n_inputs: per_input.len(),
        rs_mean: per_input.iter().map(|p| p.rs).sum::<f64>() / n,
        c_sep: separation_coefficient(&all_mech, &all_spur).expect("non-empty"),
        overlap: overlap_rate(&all_mech, &all_spur).expect("non-empty"),
        sc: per_input.iter().map(|p| p.sc_contrib).sum::<f64>() / n,
        msr_mean: directional.msr_mean,
        msr_excluded: directional.msr_excluded,
        md: directional.md,
        auroc: None,
    }
}
