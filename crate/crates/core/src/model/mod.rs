//! Black-box scoring: endpoints, batch scoring and response differences.

mod oracle;
mod wire;

use std::collections::{BTreeMap, HashMap};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ClassTag, Operator};

pub use oracle::{make_oracle, Oracle, OracleKind};
pub use wire::{ProcessScorer, HANDSHAKE, PROTOCOL};

pub const DEFAULT_BATCH_SIZE: usize = 256;
pub const DEFAULT_RETRIES: usize = 3;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);
pub const REFERENCE_ID: &str = "reference";

/// One input to score. `target_id` is auditor-side context; only `id`,
/// `drug` and `target` cross the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreItem {
    pub id: String,
    pub drug: String,
    pub target: String,
    pub target_id: String,
}

/// Backend behind an endpoint. Responses may come back in any order.
pub trait Scorer: Send {
    fn score(&mut self, batch: &[ScoreItem]) -> Result<Vec<(String, f64)>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    InProcessOracle,
    ExternalProcess,
}

pub struct ScoringEndpoint {
    pub kind: EndpointKind,
    pub identity: String,
    pub batch_size: usize,
    backend: Box<dyn Scorer>,
}

impl std::fmt::Debug for ScoringEndpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScoringEndpoint")
            .field("kind", &self.kind)
            .field("identity", &self.identity)
            .field("batch_size", &self.batch_size)
            .finish_non_exhaustive()
    }
}

impl ScoringEndpoint {
    pub fn new(
        kind: EndpointKind,
        identity: impl Into<String>,
        batch_size: usize,
        backend: Box<dyn Scorer>,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(Self {
            kind,
            identity: identity.into(),
            batch_size,
            backend,
        })
    }

    /// Wraps the backend so every score becomes `scale * score + offset`.
    pub fn affine(self, scale: f64, offset: f64) -> Self {
        Self {
            backend: Box::new(Affine {
                inner: self.backend,
                scale,
                offset,
            }),
            ..self
        }
    }
}

struct Affine {
    inner: Box<dyn Scorer>,
    scale: f64,
    offset: f64,
}

impl Scorer for Affine {
    fn score(&mut self, batch: &[ScoreItem]) -> Result<Vec<(String, f64)>> {
        Ok(self
            .inner
            .score(batch)?
            .into_iter()
            .map(|(id, s)| (id, self.scale * s + self.offset))
            .collect())
    }
}

/// Scores `items` in batches of `endpoint.batch_size`. The result is aligned
/// with `items`; every id must come back exactly once with a finite score.
pub fn score_batch(endpoint: &mut ScoringEndpoint, items: &[ScoreItem]) -> Result<Vec<(String, f64)>> {
    if items.is_empty() {
        return Err(Error::EmptyInput("score_batch"));
    }
    let model = endpoint.identity.clone();
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(endpoint.batch_size) {
        let mut wanted: HashMap<&str, Option<f64>> = HashMap::with_capacity(chunk.len());
        for item in chunk {
            if wanted.insert(item.id.as_str(), None).is_some() {
                return Err(Error::DuplicateId {
                    kind: "score item",
                    id: item.id.clone(),
                });
            }
        }
        for (id, score) in endpoint.backend.score(chunk)? {
            let slot = wanted.get_mut(id.as_str()).ok_or_else(|| Error::Protocol {
                model: model.clone(),
                message: format!("response for unknown id `{id}`"),
            })?;
            if slot.is_some() {
                return Err(Error::Protocol {
                    model: model.clone(),
                    message: format!("duplicate response for id `{id}`"),
                });
            }
            if !score.is_finite() {
                return Err(Error::NonFiniteScore {
                    model: model.clone(),
                    id,
                });
            }
            *slot = Some(score);
        }
        for item in chunk {
            let score = wanted[item.id.as_str()].ok_or_else(|| Error::MissingScore {
                model: model.clone(),
                id: item.id.clone(),
            })?;
            out.push((item.id.clone(), score));
        }
    }
    Ok(out)
}

/// Per-run score cache keyed by (drug, target id, sequence).
#[derive(Debug, Default)]
pub struct ScoreCache {
    scores: HashMap<(String, String, String), f64>,
    pub hits: usize,
}

impl ScoreCache {
    /// Scores `items` through the cache; only unseen inputs reach the endpoint.
    pub fn score(&mut self, endpoint: &mut ScoringEndpoint, items: &[ScoreItem]) -> Result<Vec<f64>> {
        let key = |it: &ScoreItem| (it.drug.clone(), it.target_id.clone(), it.target.clone());
        // The first occurrence of each input keeps its id on the wire, so
        // scorer errors name a real intervention.
        let mut pending: BTreeMap<(String, String, String), ScoreItem> = BTreeMap::new();
        for item in items {
            let k = key(item);
            if self.scores.contains_key(&k) || pending.contains_key(&k) {
                self.hits += 1;
            } else {
                pending.insert(k, item.clone());
            }
        }
        if !pending.is_empty() {
            let (keys, batch): (Vec<_>, Vec<_>) = pending.into_iter().unzip();
            let scored = score_batch(endpoint, &batch)?;
            for (k, (_, s)) in keys.into_iter().zip(scored) {
                self.scores.insert(k, s);
            }
        }
        Ok(items.iter().map(|it| self.scores[&key(it)]).collect())
    }
}

/// A raw score for either the reference input or one intervention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredIntervention {
    pub pair_id: String,
    /// `"reference"` for the unperturbed input.
    pub intervention_id: String,
    pub class_tag: Option<ClassTag>,
    pub operator: Option<Operator>,
    pub raw_score: f64,
}

/// Signed response differences for one audited input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSet {
    pub pair_id: String,
    pub mech_deltas: Vec<f64>,
    pub spur_deltas: Vec<f64>,
}

/// `intervened - reference` for each scored intervention, split by class.
pub fn response_differences(reference_score: f64, scored: &[ScoredIntervention]) -> Result<ResponseSet> {
    let first = scored.first().ok_or(Error::EmptyInput("response_differences"))?;
    let mut set = ResponseSet {
        pair_id: first.pair_id.clone(),
        mech_deltas: Vec::new(),
        spur_deltas: Vec::new(),
    };
    for s in scored {
        if s.pair_id != set.pair_id {
            return Err(Error::Invariant(format!(
                "mixed pair ids `{}` and `{}` in one response set",
                set.pair_id, s.pair_id
            )));
        }
        let delta = s.raw_score - reference_score;
        match s.class_tag {
            Some(ClassTag::Mechanistic) => set.mech_deltas.push(delta),
            Some(ClassTag::Spurious) => set.spur_deltas.push(delta),
            None => {
                return Err(Error::Invariant(format!(
                    "untagged score `{}` among interventions",
                    s.intervention_id
                )))
            }
        }
    }
    if set.mech_deltas.len() != set.spur_deltas.len() {
        return Err(Error::ClassImbalance {
            pair_id: set.pair_id,
            mech: set.mech_deltas.len(),
            spur: set.spur_deltas.len(),
        });
    }
    Ok(set)
}

/// Where a named model's scores come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EndpointSpec {
    Oracle { name: String },
    Command { argv: Vec<String> },
}

impl EndpointSpec {
    /// Parses `oracle:<name>` or a shell-style command line.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(name) = s.strip_prefix("oracle:") {
            OracleKind::from_name(name)?;
            return Ok(EndpointSpec::Oracle {
                name: name.to_string(),
            });
        }
        let argv = shlex::split(s)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| Error::InvalidConfig(format!("cannot parse command `{s}`")))?;
        Ok(EndpointSpec::Command { argv })
    }
}
