//! Synthetic in-process scorers with known sensitivity structure.
//!
//! Weights live on a grid of multiples of 2^-10 in [-1, 1], so sums over
//! realistic sequence lengths are exact in `f64` and score differences carry
//! no rounding error.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EndpointKind, ScoreItem, Scorer, ScoringEndpoint, DEFAULT_BATCH_SIZE};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

const WEIGHT_STEPS: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// Weighted sum over residues at prior positions only.
    PriorSensitive,
    /// Weighted sum over residues outside the prior only.
    ComplementSensitive,
    /// Position-blind score from residue counts.
    CompositionShortcut,
    /// Always 0.
    Constant,
    /// Sequence length.
    EchoLength,
}

impl OracleKind {
    pub const NAMES: [&'static str; 5] = [
        "prior_sensitive",
        "complement_sensitive",
        "composition_shortcut",
        "constant",
        "echo_length",
    ];

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "prior_sensitive" => Ok(Self::PriorSensitive),
            "complement_sensitive" => Ok(Self::ComplementSensitive),
            "composition_shortcut" => Ok(Self::CompositionShortcut),
            "constant" => Ok(Self::Constant),
            "echo_length" => Ok(Self::EchoLength),
            other => Err(Error::UnknownOracle(other.to_string())),
        }
    }

    fn tag(self) -> u64 {
        match self {
            Self::PriorSensitive => 1,
            Self::ComplementSensitive => 2,
            Self::CompositionShortcut => 3,
            Self::Constant => 4,
            Self::EchoLength => 5,
        }
    }
}

impl FromStr for OracleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_name(s)
    }
}

#[derive(Debug, Clone)]
pub struct Oracle {
    kind: OracleKind,
    seed: u64,
    /// Prior positions per target id (1-based, ascending).
    priors: BTreeMap<String, Vec<usize>>,
}

impl Oracle {
    pub fn new(kind: OracleKind, seed: u64, priors: BTreeMap<String, Vec<usize>>) -> Self {
        Self { kind, seed, priors }
    }

    fn weight(&self, position: u64, residue: char) -> f64 {
        let mut rng = SplitMix64::from_parts(&[self.seed, self.kind.tag(), position, residue as u64]);
        let step = rng.below(2 * WEIGHT_STEPS + 1) as i64 - WEIGHT_STEPS as i64;
        step as f64 / WEIGHT_STEPS as f64
    }

    fn positional_sum(&self, sequence: &str, include: impl Fn(usize) -> bool) -> f64 {
        sequence
            .chars()
            .enumerate()
            .filter(|(i, _)| include(i + 1))
            .map(|(i, c)| self.weight(i as u64 + 1, c))
            .sum()
    }

    pub fn score_one(&self, item: &ScoreItem) -> Result<f64> {
        let prior = || {
            self.priors.get(&item.target_id).ok_or_else(|| Error::Protocol {
                model: "oracle".into(),
                message: format!("no prior registered for target `{}`", item.target_id),
            })
        };
        Ok(match self.kind {
            OracleKind::Constant => 0.0,
            OracleKind::EchoLength => item.target.chars().count() as f64,
            OracleKind::PriorSensitive => {
                let p = prior()?;
                self.positional_sum(&item.target, |i| p.binary_search(&i).is_ok())
            }
            OracleKind::ComplementSensitive => {
                let p = prior()?;
                self.positional_sum(&item.target, |i| p.binary_search(&i).is_err())
            }
            OracleKind::CompositionShortcut => {
                let mut counts: BTreeMap<char, u32> = BTreeMap::new();
                for c in item.target.chars() {
                    *counts.entry(c).or_default() += 1;
                }
                counts
                    .into_iter()
                    .map(|(c, n)| f64::from(n) * self.weight(0, c))
                    .sum()
            }
        })
    }
}

impl Scorer for Oracle {
    fn score(&mut self, batch: &[ScoreItem]) -> Result<Vec<(String, f64)>> {
        batch
            .iter()
            .map(|item| Ok((item.id.clone(), self.score_one(item)?)))
            .collect()
    }
}

/// Builds an in-process oracle endpoint. `priors` maps target ids to their
/// prior positions and is only consulted by the position-aware oracles.
pub fn make_oracle(name: &str, seed: u64, priors: BTreeMap<String, Vec<usize>>) -> Result<ScoringEndpoint> {
    let kind = OracleKind::from_name(name)?;
    ScoringEndpoint::new(
        EndpointKind::InProcessOracle,
        format!("oracle:{name}"),
        DEFAULT_BATCH_SIZE,
        Box::new(Oracle::new(kind, seed, priors)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(seq: &str) -> ScoreItem {
        ScoreItem {
            id: "x".into(),
            drug: "CCO".into(),
            target: seq.into(),
            target_id: "T".into(),
        }
    }

    fn oracle(kind: OracleKind) -> Oracle {
        Oracle::new(kind, 11, BTreeMap::from([("T".to_string(), vec![3, 4, 5])]))
    }

    #[test]
    fn unknown_name_rejected() {
        assert!(matches!(make_oracle("smart", 0, BTreeMap::new()), Err(Error::UnknownOracle(_))));
    }

    #[test]
    fn constant_is_zero() {
        assert_eq!(oracle(OracleKind::Constant).score_one(&item("MKVRAL")).unwrap(), 0.0);
    }

    #[test]
    fn prior_sensitive_ignores_off_prior_masking() {
        let o = oracle(OracleKind::PriorSensitive);
        let base = o.score_one(&item("MKVRALGG")).unwrap();
        assert_eq!(o.score_one(&item("XXVRAXXX")).unwrap() - base, 0.0);
        assert_ne!(o.score_one(&item("MKXXXLGG")).unwrap(), base);
    }

    #[test]
    fn complement_sensitive_ignores_prior_masking() {
        let o = oracle(OracleKind::ComplementSensitive);
        let base = o.score_one(&item("MKVRALGG")).unwrap();
        assert_eq!(o.score_one(&item("MKXXXLGG")).unwrap() - base, 0.0);
    }

    #[test]
    fn composition_is_position_blind() {
        let o = oracle(OracleKind::CompositionShortcut);
        assert_eq!(
            o.score_one(&item("MKVRALGG")).unwrap(),
            o.score_one(&item("GGLARVKM")).unwrap()
        );
    }

    #[test]
    fn weights_on_dyadic_grid() {
        let o = oracle(OracleKind::PriorSensitive);
        for p in 1..200 {
            let w = o.weight(p, 'A');
            assert!((-1.0..=1.0).contains(&w));
            assert_eq!((w * 1024.0).fract(), 0.0);
        }
    }

    #[test]
    fn missing_prior_is_error() {
        let o = oracle(OracleKind::PriorSensitive);
        let mut it = item("MKV");
        it.target_id = "other".into();
        assert!(o.score_one(&it).is_err());
    }
}
