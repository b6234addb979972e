//! Hierarchical percentile bootstrap and across-run aggregation.
//!
//! A replicate first resamples inputs with replacement, then resamples the
//! mechanistic and spurious responses of each drawn input separately at their
//! original sizes. Replicate `r` draws from its own stream seeded by
//! `(seed, r)`, so results do not depend on scheduling.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{model_metrics, quantile_sorted, ModelMetrics};
use crate::model::ResponseSet;
use crate::rng::SplitMix64;

pub const DEFAULT_REPLICATES: usize = 1000;
pub const DEFAULT_CI_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_replicates: usize,
    pub ci_level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_replicates: DEFAULT_REPLICATES,
            ci_level: DEFAULT_CI_LEVEL,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_replicates == 0 {
            return Err(Error::InvalidConfig("n_replicates must be >= 1".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidConfig(format!("ci_level {} outside (0, 1)", self.ci_level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWithCI {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl MetricWithCI {
    pub fn exact(value: f64) -> Self {
        Self {
            point: value,
            ci_low: value,
            ci_high: value,
        }
    }
}

fn resample_values(values: &[f64], rng: &mut SplitMix64) -> Vec<f64> {
    (0..values.len()).map(|_| values[rng.index(values.len())]).collect()
}

/// One two-level resample of `responses`.
pub fn resample(responses: &[ResponseSet], rng: &mut SplitMix64) -> Vec<ResponseSet> {
    (0..responses.len())
        .map(|_| {
            let src = &responses[rng.index(responses.len())];
            ResponseSet {
                pair_id: src.pair_id.clone(),
                mech_deltas: resample_values(&src.mech_deltas, rng),
                spur_deltas: resample_values(&src.spur_deltas, rng),
            }
        })
        .collect()
}

/// Evaluates `metric` on every replicate, in replicate order.
pub fn replicate_values<T, F>(responses: &[ResponseSet], config: &BootstrapConfig, metric: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&[ResponseSet]) -> T + Sync,
{
    config.validate()?;
    if responses.is_empty() {
        return Err(Error::EmptyInput("hierarchical_bootstrap"));
    }
    Ok((0..config.n_replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = SplitMix64::from_parts(&[config.seed, r as u64]);
            metric(&resample(responses, &mut rng))
        })
        .collect())
}

/// Percentile interval at `(1 - level) / 2` and `1 - (1 - level) / 2`.
pub fn percentile_interval(values: &[f64], ci_level: f64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyInput("percentile_interval"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let tail = (1.0 - ci_level) / 2.0;
    Ok((quantile_sorted(&v, tail), quantile_sorted(&v, 1.0 - tail)))
}

pub fn hierarchical_bootstrap<F>(responses: &[ResponseSet], metric: F, config: &BootstrapConfig) -> Result<MetricWithCI>
where
    F: Fn(&[ResponseSet]) -> f64 + Sync,
{
    let reps = replicate_values(responses, config, &metric)?;
    let point = metric(responses);
    let (ci_low, ci_high) = percentile_interval(&reps, config.ci_level)?;
    Ok(MetricWithCI {
        point,
        ci_low,
        ci_high,
    })
}

/// Model-level metrics with bootstrap intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetricsCI {
    pub n_inputs: usize,
    pub rs: MetricWithCI,
    pub c_sep: MetricWithCI,
    pub overlap: MetricWithCI,
    pub sc: MetricWithCI,
    /// `None` when every input had a zero spurious median and a nonzero
    /// mechanistic one.
    pub msr: Option<MetricWithCI>,
    pub msr_excluded: usize,
    pub md: MetricWithCI,
}

impl ModelMetricsCI {
    /// Metric name to value, for tables and aggregation.
    pub fn named(&self) -> BTreeMap<String, MetricWithCI> {
        let mut m = BTreeMap::from([
            ("rs".to_string(), self.rs),
            ("c_sep".to_string(), self.c_sep),
            ("overlap".to_string(), self.overlap),
            ("sc".to_string(), self.sc),
            ("md".to_string(), self.md),
        ]);
        if let Some(msr) = self.msr {
            m.insert("msr".to_string(), msr);
        }
        m
    }
}

/// Bootstraps every model-level metric from a shared set of replicates.
pub fn bootstrap_model_metrics(responses: &[ResponseSet], config: &BootstrapConfig) -> Result<ModelMetricsCI> {
    let point = model_metrics(responses)?;
    let reps: Vec<ModelMetrics> = replicate_values(responses, config, model_metrics)?
        .into_iter()
        .collect::<Result<_>>()?;
    let ci = |value: f64, get: fn(&ModelMetrics) -> f64| -> Result<MetricWithCI> {
        let values: Vec<f64> = reps.iter().map(get).collect();
        let (ci_low, ci_high) = percentile_interval(&values, config.ci_level)?;
        Ok(MetricWithCI {
            point: value,
            ci_low,
            ci_high,
        })
    };
    let msr = match point.msr_mean {
        Some(value) => {
            let values: Vec<f64> = reps.iter().filter_map(|m| m.msr_mean).collect();
            // Every replicate may land on excluded inputs only; the interval
            // then collapses to the point.
            let (ci_low, ci_high) = if values.is_empty() {
                (value, value)
            } else {
                percentile_interval(&values, config.ci_level)?
            };
            Some(MetricWithCI {
                point: value,
                ci_low,
                ci_high,
            })
        }
        None => None,
    };
    Ok(ModelMetricsCI {
        n_inputs: point.n_inputs,
        rs: ci(point.rs_mean, |m| m.rs_mean)?,
        c_sep: ci(point.c_sep, |m| m.c_sep)?,
        overlap: ci(point.overlap, |m| m.overlap)?,
        sc: ci(point.sc, |m| m.sc)?,
        msr,
        msr_excluded: point.msr_excluded,
        md: ci(point.md, |m| m.md)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatedMetric {
    pub n_runs: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single run.
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Averages per-run metrics and their interval endpoints across runs.
pub fn aggregate_runs(per_run: &[BTreeMap<String, MetricWithCI>]) -> Result<BTreeMap<String, AggregatedMetric>> {
    let first = per_run.first().ok_or(Error::EmptyInput("aggregate_runs"))?;
    for (i, run) in per_run.iter().enumerate().skip(1) {
        if !run.keys().eq(first.keys()) {
            let names = |m: &BTreeMap<String, MetricWithCI>| m.keys().cloned().collect::<Vec<_>>().join(",");
            return Err(Error::MismatchedRuns(format!(
                "run 0 has [{}], run {i} has [{}]",
                names(first),
                names(run)
            )));
        }
    }
    let n = per_run.len() as f64;
    Ok(first
        .keys()
        .map(|name| {
            let values: Vec<&MetricWithCI> = per_run.iter().map(|r| &r[name]).collect();
            let mean = values.iter().map(|m| m.point).sum::<f64>() / n;
            let std = if per_run.len() > 1 {
                (values.iter().map(|m| (m.point - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let agg = AggregatedMetric {
                n_runs: per_run.len(),
                mean,
                std,
                ci_low: values.iter().map(|m| m.ci_low).sum::<f64>() / n,
                ci_high: values.iter().map(|m| m.ci_high).sum::<f64>() / n,
            };
            (name.clone(), agg)
        })
        .collect())
}
