//! End-to-end audit: compile, sample, intervene, score, measure, bootstrap.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_model_metrics, hierarchical_bootstrap, BootstrapConfig, MetricWithCI, ModelMetricsCI};
use crate::compiler::{self, AuditingSet, CompileConfig, CoverageStats, Warning};
use crate::error::{Error, Result};
use crate::intervention::{self, geometry_summary, sample_matched_pairs, GeometryStats, SamplingPlan};
use crate::metrics::{self, per_input_metrics, PerInputMetrics};
use crate::model::{
    self, make_oracle, response_differences, EndpointSpec, ProcessScorer, ResponseSet, ScoreCache,
    ScoreItem, ScoredIntervention, ScoringEndpoint, REFERENCE_ID,
};
use crate::rng::derive_seed;
use crate::types::{apply_intervention, ClassTag, MatchedPair, Operator};

pub const REPORT_SCHEMA: &str = "isaac-audit-report/1";
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

const BOOTSTRAP_STREAM: u64 = 0x424F_4F54;
const ORACLE_STREAM: u64 = 0x4F52_4143;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    /// `oracle:<name>` or a command line speaking `isaac-score/1`.
    pub endpoint: String,
    /// Optional `[scale, offset]` applied to every raw score.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affine: Option<[f64; 2]>,
}

impl ModelConfig {
    /// Parses `name=cmd` or `name=oracle:<name>`.
    pub fn parse(arg: &str) -> Result<Self> {
        let (name, endpoint) = arg
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("model `{arg}` is not name=endpoint")))?;
        let name = name.trim();
        if name.is_empty() {
            return Err(Error::InvalidConfig(format!("model `{arg}` has an empty name")));
        }
        EndpointSpec::parse(endpoint)?;
        Ok(Self {
            name: name.to_string(),
            endpoint: endpoint.trim().to_string(),
            affine: None,
        })
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub targets_path: Option<PathBuf>,
    #[serde(default)]
    pub pairs_path: Option<PathBuf>,
    /// Previously compiled auditing set; replaces the two tabular inputs.
    #[serde(default)]
    pub auditing_set_path: Option<PathBuf>,
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_scope_fraction")]
    pub scope_fraction: f64,
    #[serde(default = "default_pairs_per_input")]
    pub pairs_per_input: usize,
    #[serde(default = "default_operators")]
    pub operators: Vec<Operator>,
    #[serde(default = "default_replicates")]
    pub bootstrap_replicates: usize,
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dump_interventions: bool,
    #[serde(default)]
    pub per_input: bool,
    #[serde(default = "default_true")]
    pub operator_stratification: bool,
}

fn default_scope_fraction() -> f64 {
    intervention::DEFAULT_SCOPE_FRACTION
}
fn default_pairs_per_input() -> usize {
    intervention::DEFAULT_PAIRS_PER_INPUT
}
fn default_operators() -> Vec<Operator> {
    Operator::ALL.to_vec()
}
fn default_replicates() -> usize {
    crate::bootstrap::DEFAULT_REPLICATES
}
fn default_ci_level() -> f64 {
    crate::bootstrap::DEFAULT_CI_LEVEL
}
fn default_batch_size() -> usize {
    model::DEFAULT_BATCH_SIZE
}
fn default_timeout_secs() -> u64 {
    model::DEFAULT_TIMEOUT.as_secs()
}
fn default_retries() -> usize {
    model::DEFAULT_RETRIES
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("isaac-out")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            targets_path: None,
            pairs_path: None,
            auditing_set_path: None,
            models: Vec::new(),
            seed: 0,
            scope_fraction: default_scope_fraction(),
            pairs_per_input: default_pairs_per_input(),
            operators: default_operators(),
            bootstrap_replicates: default_replicates(),
            ci_level: default_ci_level(),
            batch_size: default_batch_size(),
            timeout_secs: default_timeout_secs(),
            retries: default_retries(),
            output_dir: default_output_dir(),
            dump_interventions: false,
            per_input: false,
            operator_stratification: true,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn sampling_plan(&self) -> SamplingPlan {
        SamplingPlan {
            scope_fraction: self.scope_fraction,
            n_pairs_per_input: self.pairs_per_input,
            operators: self.operators.clone(),
            master_seed: self.seed,
        }
    }

    pub fn bootstrap_config(&self) -> BootstrapConfig {
        BootstrapConfig {
            n_replicates: self.bootstrap_replicates,
            ci_level: self.ci_level,
            seed: derive_seed(&[self.seed, BOOTSTRAP_STREAM]),
        }
    }

    pub fn oracle_seed(&self) -> u64 {
        derive_seed(&[self.seed, ORACLE_STREAM])
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::InvalidConfig("at least one model endpoint required".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for m in &self.models {
            if !names.insert(m.name.as_str()) {
                return Err(Error::DuplicateId {
                    kind: "model",
                    id: m.name.clone(),
                });
            }
            EndpointSpec::parse(&m.endpoint)?;
            if let Some([scale, _]) = m.affine {
                if !(scale > 0.0) {
                    return Err(Error::InvalidConfig(format!("model `{}`: affine scale must be > 0", m.name)));
                }
            }
        }
        if self.auditing_set_path.is_none() && (self.targets_path.is_none() || self.pairs_path.is_none()) {
            return Err(Error::InvalidConfig(
                "either auditing_set_path or both targets_path and pairs_path are required".into(),
            ));
        }
        for p in [&self.targets_path, &self.pairs_path, &self.auditing_set_path].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::InvalidConfig(format!("input `{}` does not exist", p.display())));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        self.sampling_plan().validate()?;
        self.bootstrap_config().validate()
    }

    /// Loads and compiles the auditing set named by this config.
    pub fn load_auditing_set(&self) -> Result<(AuditingSet, Vec<Warning>)> {
        if let Some(path) = &self.auditing_set_path {
            let set = AuditingSet::load_json(path)?;
            if set.scope_fraction != self.scope_fraction {
                return Err(Error::InvalidConfig(format!(
                    "auditing set compiled with scope_fraction {}, run uses {}",
                    set.scope_fraction, self.scope_fraction
                )));
            }
            return Ok((set, Vec::new()));
        }
        let targets = compiler::load_targets(self.targets_path.as_ref().expect("validated"))?;
        let pairs = compiler::load_pairs(self.pairs_path.as_ref().expect("validated"))?;
        let mut warnings = targets.warnings;
        warnings.extend(pairs.warnings);
        let compiled = compiler::compile(
            &targets.records,
            &pairs.records,
            &CompileConfig {
                scope_fraction: self.scope_fraction,
            },
        )?;
        warnings.extend(compiled.warnings);
        Ok((compiled.set, warnings))
    }

    /// Builds the endpoint for one configured model.
    pub fn build_endpoint(&self, model: &ModelConfig, set: &AuditingSet) -> Result<ScoringEndpoint> {
        let endpoint = match EndpointSpec::parse(&model.endpoint)? {
            EndpointSpec::Oracle { name } => {
                let priors = set
                    .targets
                    .iter()
                    .map(|t| (t.target_id.clone(), t.prior_scope.clone()))
                    .collect();
                let mut ep = make_oracle(&name, self.oracle_seed(), priors)?;
                ep.batch_size = self.batch_size;
                ep
            }
            EndpointSpec::Command { argv } => ProcessScorer::new(model.name.clone(), argv)?
                .with_timeout(Duration::from_secs(self.timeout_secs))
                .with_retries(self.retries)
                .into_endpoint(self.batch_size)?,
        };
        let mut endpoint = match model.affine {
            Some([scale, offset]) => endpoint.affine(scale, offset),
            None => endpoint,
        };
        endpoint.identity = model.name.clone();
        Ok(endpoint)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedProvenance {
    pub master_seed: u64,
    pub substitution_seed: u64,
    pub bootstrap_seed: u64,
    pub oracle_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignStats {
    pub n_targets: usize,
    pub n_pairs: usize,
    pub n_matched_pairs: usize,
    pub median_scope_cardinality: f64,
    /// Fraction of matched pairs with equal mechanistic and spurious cardinality.
    pub exact_cardinality_matching: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AurocReport {
    pub n_labeled: usize,
    /// `None` when the labeled pairs contain a single class.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub name: String,
    pub endpoint: String,
    pub n_inputs: usize,
    pub n_scored_interventions: usize,
    pub n_unique_inputs_scored: usize,
    pub auroc: AurocReport,
    pub metrics: ModelMetricsCI,
    /// Reasoning Score per operator, keyed by operator name.
    pub rs_by_operator: BTreeMap<String, MetricWithCI>,
}

/// Run metadata that is excluded from determinism comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub timestamp_unix: u64,
    pub host: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema: String,
    pub toolkit_version: String,
    pub config: RunConfig,
    pub seeds: SeedProvenance,
    pub coverage: CoverageStats,
    pub design: DesignStats,
    pub geometry: GeometryStats,
    pub models: Vec<ModelReport>,
    pub provenance: Provenance,
}

/// Everything a run produces; the report plus the detail tables.
#[derive(Debug, Clone)]
pub struct AuditOutcome {
    pub report: AuditReport,
    pub matched_pairs: Vec<MatchedPair>,
    /// Per model name, in auditing-set pair order.
    pub per_input: BTreeMap<String, Vec<PerInputRow>>,
    /// Per model name, overall response sets in pair order.
    pub responses: BTreeMap<String, Vec<ResponseSet>>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerInputRow {
    pub target_id: String,
    #[serde(flatten)]
    pub metrics: PerInputMetrics,
}

/// Runs a full audit with endpoints built from the config.
pub fn run_audit(config: &RunConfig) -> Result<AuditOutcome> {
    config.validate()?;
    let (set, warnings) = config.load_auditing_set()?;
    let endpoints = config
        .models
        .iter()
        .map(|m| Ok((m.clone(), config.build_endpoint(m, &set)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut outcome = run_audit_on(config, &set, endpoints)?;
    outcome.warnings.splice(0..0, warnings);
    Ok(outcome)
}

struct Realized<'a> {
    pair: &'a MatchedPair,
    mech_seq: String,
    spur_seq: String,
}

/// Runs an audit on a compiled set with caller-supplied endpoints.
pub fn run_audit_on(
    config: &RunConfig,
    set: &AuditingSet,
    endpoints: Vec<(ModelConfig, ScoringEndpoint)>,
) -> Result<AuditOutcome> {
    let plan = config.sampling_plan();
    plan.validate()?;
    let boot = config.bootstrap_config();
    boot.validate()?;
    if set.targets.is_empty() {
        return Err(Error::EmptyAuditingSet);
    }
    if set.pairs.is_empty() {
        return Err(Error::InvalidConfig("auditing set contains no pairs".into()));
    }

    // Interventions are realized once and shared by every model.
    let mut by_target: BTreeMap<&str, Vec<MatchedPair>> = BTreeMap::new();
    for t in &set.targets {
        by_target.insert(&t.target_id, sample_matched_pairs(t, &plan)?);
    }
    let matched_pairs: Vec<MatchedPair> = by_target.values().flatten().cloned().collect();
    let mut realized: BTreeMap<&str, Vec<Realized>> = BTreeMap::new();
    for t in &set.targets {
        let rows = by_target[t.target_id.as_str()]
            .iter()
            .map(|pair| {
                Ok(Realized {
                    pair,
                    mech_seq: apply_intervention(&t.sequence, &pair.mech)?,
                    spur_seq: apply_intervention(&t.sequence, &pair.spur)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        realized.insert(&t.target_id, rows);
    }

    let n_ops = plan.canonical_operators().len();
    let expected_scored = 2 * plan.n_pairs_per_input * n_ops * set.pairs.len();
    let mut model_reports = Vec::new();
    let mut per_input_all = BTreeMap::new();
    let mut responses_all = BTreeMap::new();
    let mut warnings = Vec::new();

    for (model_cfg, mut endpoint) in endpoints {
        let mut items = Vec::with_capacity(set.pairs.len() * (1 + expected_scored / set.pairs.len().max(1)));
        let mut meta: Vec<(usize, Option<(&MatchedPair, ClassTag)>)> = Vec::with_capacity(items.capacity());
        for (pi, pair) in set.pairs.iter().enumerate() {
            let target = set.target(&pair.target_id).ok_or_else(|| {
                Error::Invariant(format!("pair `{}` references missing target", pair.pair_id))
            })?;
            let item = |id: String, seq: &str| ScoreItem {
                id,
                drug: pair.drug.clone(),
                target: seq.to_string(),
                target_id: target.target_id.clone(),
            };
            items.push(item(format!("{}|{REFERENCE_ID}", pair.pair_id), &target.sequence));
            meta.push((pi, None));
            for r in &realized[target.target_id.as_str()] {
                items.push(item(format!("{}|{}", pair.pair_id, r.pair.mech.intervention_id), &r.mech_seq));
                meta.push((pi, Some((r.pair, ClassTag::Mechanistic))));
                items.push(item(format!("{}|{}", pair.pair_id, r.pair.spur.intervention_id), &r.spur_seq));
                meta.push((pi, Some((r.pair, ClassTag::Spurious))));
            }
        }
        let mut cache = ScoreCache::default();
        let scores = cache.score(&mut endpoint, &items)?;

        let mut reference = vec![f64::NAN; set.pairs.len()];
        let mut scored: Vec<Vec<ScoredIntervention>> = vec![Vec::new(); set.pairs.len()];
        for ((pi, m), score) in meta.iter().zip(&scores) {
            match m {
                None => reference[*pi] = *score,
                Some((pair, class)) => {
                    let spec = match class {
                        ClassTag::Mechanistic => &pair.mech,
                        ClassTag::Spurious => &pair.spur,
                    };
                    scored[*pi].push(ScoredIntervention {
                        pair_id: set.pairs[*pi].pair_id.clone(),
                        intervention_id: spec.intervention_id.clone(),
                        class_tag: Some(*class),
                        operator: Some(spec.operator),
                        raw_score: *score,
                    });
                }
            }
        }
        let n_scored: usize = scored.iter().map(Vec::len).sum();
        if n_scored != expected_scored {
            return Err(Error::Invariant(format!(
                "model `{}`: scored {n_scored} interventions, expected {expected_scored}",
                model_cfg.name
            )));
        }

        let overall = scored
            .iter()
            .zip(&reference)
            .map(|(s, &r)| response_differences(r, s))
            .collect::<Result<Vec<_>>>()?;
        let per_input = overall.iter().map(per_input_metrics).collect::<Result<Vec<_>>>()?;
        let metrics = bootstrap_model_metrics(&overall, &boot)?;

        let mut rs_by_operator = BTreeMap::new();
        if config.operator_stratification {
            for op in plan.canonical_operators() {
                let subset = scored
                    .iter()
                    .zip(&reference)
                    .map(|(s, &r)| {
                        let only: Vec<ScoredIntervention> =
                            s.iter().filter(|x| x.operator == Some(op)).cloned().collect();
                        response_differences(r, &only)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let rs = hierarchical_bootstrap(
                    &subset,
                    |r| metrics::model_metrics(r).map(|m| m.rs_mean).unwrap_or(f64::NAN),
                    &boot,
                )?;
                rs_by_operator.insert(op.as_str().to_string(), rs);
            }
        }

        let labeled: Vec<(f64, u8)> = set
            .pairs
            .iter()
            .zip(&reference)
            .filter_map(|(p, &s)| p.label.map(|l| (s, l)))
            .collect();
        let auroc = if labeled.is_empty() {
            AurocReport {
                n_labeled: 0,
                value: None,
            }
        } else {
            let (s, l): (Vec<f64>, Vec<u8>) = labeled.iter().copied().unzip();
            let value = match metrics::auroc(&s, &l) {
                Ok(v) => Some(v),
                Err(Error::AurocUndefined) => {
                    warnings.push(Warning {
                        line: None,
                        message: format!("model `{}`: AUROC undefined, labels have one class", model_cfg.name),
                    });
                    None
                }
                Err(e) => return Err(e),
            };
            AurocReport {
                n_labeled: labeled.len(),
                value,
            }
        };

        let rows = per_input
            .into_iter()
            .zip(&set.pairs)
            .map(|(metrics, p)| PerInputRow {
                target_id: p.target_id.clone(),
                metrics,
            })
            .collect();
        per_input_all.insert(model_cfg.name.clone(), rows);
        responses_all.insert(model_cfg.name.clone(), overall);
        model_reports.push(ModelReport {
            name: model_cfg.name.clone(),
            endpoint: model_cfg.endpoint.clone(),
            n_inputs: set.pairs.len(),
            n_scored_interventions: n_scored,
            n_unique_inputs_scored: items.len() - cache.hits,
            auroc,
            metrics,
            rs_by_operator,
        });
    }

    let cardinalities: Vec<f64> = matched_pairs.iter().map(|p| p.mech.scope.len() as f64).collect();
    let matched = matched_pairs
        .iter()
        .filter(|p| p.mech.scope.len() == p.spur.scope.len())
        .count();
    let design = DesignStats {
        n_targets: set.targets.len(),
        n_pairs: set.pairs.len(),
        n_matched_pairs: matched_pairs.len(),
        median_scope_cardinality: metrics::median(&cardinalities)?,
        exact_cardinality_matching: matched as f64 / matched_pairs.len() as f64,
    };

    let report = AuditReport {
        schema: REPORT_SCHEMA.to_string(),
        toolkit_version: TOOLKIT_VERSION.to_string(),
        config: config.clone(),
        seeds: SeedProvenance {
            master_seed: config.seed,
            substitution_seed: plan.substitution_seed(),
            bootstrap_seed: boot.seed,
            oracle_seed: config.oracle_seed(),
        },
        coverage: set.coverage.clone(),
        design,
        geometry: geometry_summary(&matched_pairs)?,
        models: model_reports,
        provenance: Provenance {
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            host: std::env::var("HOSTNAME").unwrap_or_else(|_| "unknown".into()),
        },
    };
    Ok(AuditOutcome {
        report,
        matched_pairs,
        per_input: per_input_all,
        responses: responses_all,
        warnings,
    })
}
