//! Serialization of audit results: a canonical JSON report plus CSV tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audit::{AuditOutcome, AuditReport, REPORT_SCHEMA};
use crate::bootstrap::{aggregate_runs, AggregatedMetric, MetricWithCI};
use crate::error::{Error, Result};
use crate::intervention::write_interventions;

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EmitOptions {
    pub per_input: bool,
    pub dump_interventions: bool,
}

impl AuditReport {
    /// Pretty JSON with keys sorted at every level.
    pub fn to_canonical_json(&self) -> Result<String> {
        canonical_json(self)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: AuditReport = serde_json::from_str(&text)?;
        if report.schema != REPORT_SCHEMA {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("unsupported report schema `{}`", report.schema),
            });
        }
        Ok(report)
    }
}

fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json's Map is a BTreeMap here, so going through Value sorts keys.
    let value = serde_json::to_value(value)?;
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn ci_cells(m: &MetricWithCI) -> [String; 3] {
    [m.point.to_string(), m.ci_low.to_string(), m.ci_high.to_string()]
}

fn opt_ci_cells(m: Option<&MetricWithCI>) -> [String; 3] {
    m.map(ci_cells).unwrap_or_default()
}

struct Tables<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl Tables<'_> {
    fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let path = self.dir.join(name);
        let csv_err = |e: csv::Error| Error::Parse {
            path: path.clone(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }
}

/// Writes the JSON report and CSV tables into `dir`, creating it if needed.
pub fn emit_report(outcome: &AuditOutcome, dir: impl AsRef<Path>, options: EmitOptions) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let report = &outcome.report;
    let mut t = Tables {
        dir,
        written: Vec::new(),
    };

    let json_path = dir.join(REPORT_FILE);
    fs::write(&json_path, report.to_canonical_json()?).map_err(|e| Error::io(&json_path, e))?;
    t.written.push(json_path);

    let c = &report.coverage;
    let pct = |n: usize| {
        if c.n_targets_total == 0 {
            String::new()
        } else {
            format!("{:.1}", 100.0 * n as f64 / c.n_targets_total as f64)
        }
    };
    t.csv(
        "table1_coverage.csv",
        &["statistic", "value", "percent_of_total"],
        [
            ["targets_total".into(), c.n_targets_total.to_string(), pct(c.n_targets_total)],
            ["targets_with_prior".into(), c.n_with_prior.to_string(), pct(c.n_with_prior)],
            ["targets_realizable".into(), c.n_realizable.to_string(), pct(c.n_realizable)],
            ["median_prior_size".into(), c.median_prior_size.to_string(), String::new()],
            ["iqr_prior_size".into(), c.iqr_prior_size.to_string(), String::new()],
            [
                "exact_cardinality_matching".into(),
                report.design.exact_cardinality_matching.to_string(),
                String::new(),
            ],
        ],
    )?;

    t.csv(
        "table2_auroc.csv",
        &["model", "n_labeled", "auroc"],
        report.models.iter().map(|m| {
            [m.name.clone(), m.auroc.n_labeled.to_string(), fmt_opt(m.auroc.value)]
        }),
    )?;

    t.csv(
        "table3_metrics.csv",
        &[
            "model", "n_inputs", "rs", "rs_ci_low", "rs_ci_high", "c_sep", "c_sep_ci_low",
            "c_sep_ci_high", "overlap", "overlap_ci_low", "overlap_ci_high",
        ],
        report.models.iter().map(|m| {
            let mut row = vec![m.name.clone(), m.n_inputs.to_string()];
            row.extend(ci_cells(&m.metrics.rs));
            row.extend(ci_cells(&m.metrics.c_sep));
            row.extend(ci_cells(&m.metrics.overlap));
            row
        }),
    )?;

    t.csv(
        "table4_operators.csv",
        &["model", "operator", "rs", "rs_ci_low", "rs_ci_high"],
        report.models.iter().flat_map(|m| {
            m.rs_by_operator.iter().map(move |(op, v)| {
                let mut row = vec![m.name.clone(), op.clone()];
                row.extend(ci_cells(v));
                row
            })
        }),
    )?;

    let g = &report.geometry;
    t.csv(
        "table5_geometry.csv",
        &["scope_type", "mean_positional_spread", "mean_contiguity"],
        [
            ["mechanistic".to_string(), g.mean_spread_mech.to_string(), g.mean_contiguity_mech.to_string()],
            ["spurious".to_string(), g.mean_spread_spur.to_string(), g.mean_contiguity_spur.to_string()],
        ],
    )?;

    t.csv(
        "directional.csv",
        &[
            "model", "sc", "sc_ci_low", "sc_ci_high", "msr", "msr_ci_low", "msr_ci_high",
            "msr_excluded", "md", "md_ci_low", "md_ci_high",
        ],
        report.models.iter().map(|m| {
            let mut row = vec![m.name.clone()];
            row.extend(ci_cells(&m.metrics.sc));
            row.extend(opt_ci_cells(m.metrics.msr.as_ref()));
            row.push(m.metrics.msr_excluded.to_string());
            row.extend(ci_cells(&m.metrics.md));
            row
        }),
    )?;

    if options.per_input {
        t.csv(
            "per_input.csv",
            &["model", "pair_id", "target_id", "m_mech", "m_spur", "rs", "sc", "msr", "md"],
            outcome.per_input.iter().flat_map(|(model, rows)| {
                rows.iter().map(move |r| {
                    let p = &r.metrics;
                    vec![
                        model.clone(),
                        p.pair_id.clone(),
                        r.target_id.clone(),
                        p.m_mech.to_string(),
                        p.m_spur.to_string(),
                        p.rs.to_string(),
                        p.sc_contrib.to_string(),
                        fmt_opt(p.msr),
                        p.md.to_string(),
                    ]
                })
            }),
        )?;
    }

    if options.dump_interventions {
        let path = dir.join("interventions.tsv");
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = std::io::BufWriter::new(file);
        write_interventions(&mut w, &outcome.matched_pairs).map_err(|e| Error::io(&path, e))?;
        std::io::Write::flush(&mut w).map_err(|e| Error::io(&path, e))?;
        t.written.push(path);
    }
    Ok(t.written)
}

/// Per-model metrics aggregated across independent runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub schema: String,
    pub n_runs: usize,
    pub master_seeds: Vec<u64>,
    pub models: BTreeMap<String, BTreeMap<String, AggregatedMetric>>,
}

pub const AGGREGATE_SCHEMA: &str = "isaac-aggregate-report/1";

fn run_metrics(report: &AuditReport) -> BTreeMap<String, BTreeMap<String, MetricWithCI>> {
    report
        .models
        .iter()
        .map(|m| {
            let mut named = m.metrics.named();
            for (op, v) in &m.rs_by_operator {
                named.insert(format!("rs_{op}"), *v);
            }
            (m.name.clone(), named)
        })
        .collect()
}

pub fn aggregate_reports(reports: &[AuditReport]) -> Result<AggregateReport> {
    let runs: Vec<_> = reports.iter().map(run_metrics).collect();
    let first = runs.first().ok_or(Error::EmptyInput("aggregate_reports"))?;
    let mut models = BTreeMap::new();
    for name in first.keys() {
        let per_run = runs
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.get(name)
                    .cloned()
                    .ok_or_else(|| Error::MismatchedRuns(format!("model `{name}` missing from run {i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        models.insert(name.clone(), aggregate_runs(&per_run)?);
    }
    if runs.iter().any(|r| r.len() != first.len()) {
        return Err(Error::MismatchedRuns("runs audit different model sets".into()));
    }
    Ok(AggregateReport {
        schema: AGGREGATE_SCHEMA.to_string(),
        n_runs: reports.len(),
        master_seeds: reports.iter().map(|r| r.seeds.master_seed).collect(),
        models,
    })
}

/// Writes `aggregate.json` and `aggregate.csv` into `dir`.
pub fn emit_aggregate(agg: &AggregateReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json_path = dir.join("aggregate.json");
    fs::write(&json_path, canonical_json(agg)?).map_err(|e| Error::io(&json_path, e))?;
    let mut t = Tables {
        dir,
        written: vec![json_path],
    };
    t.csv(
        "aggregate.csv",
        &["model", "metric", "n_runs", "mean", "std", "ci_low", "ci_high"],
        agg.models.iter().flat_map(|(model, metrics)| {
            metrics.iter().map(move |(name, a)| {
                vec![
                    model.clone(),
                    name.clone(),
                    a.n_runs.to_string(),
                    a.mean.to_string(),
                    a.std.to_string(),
                    a.ci_low.to_string(),
                    a.ci_high.to_string(),
                ]
            })
        }),
    )?;
    Ok(t.written)
}
