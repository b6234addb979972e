//! Structured-input data model: targets, pairs, scopes and interventions.
//!
//! Residue positions are 1-based everywhere.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{hash_str, SplitMix64};

/// The 20 canonical amino-acid letters.
pub const AMINO_ACIDS: &[u8; 20] = b"ACDEFGHIKLMNPQRSTVWY";

/// Token written at masked positions.
pub const MASK_TOKEN: char = 'X';

const PHYSICOCHEMICAL_CLASSES: [&[u8]; 6] = [
    b"AVLIMFW", // hydrophobic
    b"Y",       // aromatic-polar
    b"STNQC",   // polar uncharged
    b"GP",      // special
    b"KRH",     // positive
    b"DE",      // negative
];

pub fn is_canonical(c: char) -> bool {
    c.is_ascii() && AMINO_ACIDS.contains(&(c as u8))
}

/// Physicochemical class containing `residue`, if it is canonical.
pub fn residue_class(residue: char) -> Option<&'static [u8]> {
    if !residue.is_ascii() {
        return None;
    }
    PHYSICOCHEMICAL_CLASSES
        .iter()
        .copied()
        .find(|class| class.contains(&(residue as u8)))
}

/// A protein target with its prior-annotated residue scope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub target_id: String,
    pub sequence: String,
    /// 1-based residue indices flagged by the structural prior.
    pub prior_scope: Vec<usize>,
    /// Expected residue letter per prior index, used for realizability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_residues: Option<BTreeMap<usize, char>>,
}

impl TargetRecord {
    pub fn len(&self) -> usize {
        self.sequence.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    /// Residue at a 1-based position.
    pub fn residue(&self, index: usize) -> Option<char> {
        index.checked_sub(1).and_then(|i| self.sequence.chars().nth(i))
    }

    /// `{1..M} \ prior_scope` in ascending order.
    pub fn complement(&self) -> Vec<usize> {
        (1..=self.len())
            .filter(|i| self.prior_scope.binary_search(i).is_err())
            .collect()
    }

    pub fn validate(&self) -> Validation {
        validate_target(self)
    }
}

/// A drug-target pair. The drug string is never interpreted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub drug: String,
    pub target_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptySequence,
    NonCanonicalLetter { position: usize, letter: char },
    IndexOutOfRange { index: usize, len: usize },
    UnsortedPrior { index: usize },
    DuplicatePriorIndex { index: usize },
    ExpectedResidueKeyMismatch { index: usize },
    NonCanonicalExpected { index: usize, letter: char },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySequence => write!(f, "empty sequence"),
            Violation::NonCanonicalLetter { position, letter } => {
                write!(f, "non-canonical letter {letter} at position {position}")
            }
            Violation::IndexOutOfRange { index, len } => {
                write!(f, "index out of range: {index} not in [1, {len}]")
            }
            Violation::UnsortedPrior { index } => {
                write!(f, "prior scope not ascending at index {index}")
            }
            Violation::DuplicatePriorIndex { index } => {
                write!(f, "duplicate prior index {index}")
            }
            Violation::ExpectedResidueKeyMismatch { index } => {
                write!(f, "expected-residue keys differ from prior scope at index {index}")
            }
            Violation::NonCanonicalExpected { index, letter } => {
                write!(f, "non-canonical expected residue {letter} at index {index}")
            }
        }
    }
}

pub type Validation = std::result::Result<(), Vec<Violation>>;

/// Checks every [`TargetRecord`] invariant. Violations are returned as data.
pub fn validate_target(record: &TargetRecord) -> Validation {
    let mut violations = Vec::new();
    let len = record.len();
    if len == 0 {
        violations.push(Violation::EmptySequence);
    }
    for (i, c) in record.sequence.chars().enumerate() {
        if !is_canonical(c) {
            violations.push(Violation::NonCanonicalLetter {
                position: i + 1,
                letter: c,
            });
        }
    }
    for (n, &index) in record.prior_scope.iter().enumerate() {
        if index == 0 || index > len {
            violations.push(Violation::IndexOutOfRange { index, len });
        }
        if n > 0 {
            let prev = record.prior_scope[n - 1];
            if prev == index {
                violations.push(Violation::DuplicatePriorIndex { index });
            } else if prev > index {
                violations.push(Violation::UnsortedPrior { index });
            }
        }
    }
    if let Some(expected) = &record.prior_residues {
        for &index in &record.prior_scope {
            if !expected.contains_key(&index) {
                violations.push(Violation::ExpectedResidueKeyMismatch { index });
            }
        }
        for (&index, &letter) in expected {
            if !record.prior_scope.contains(&index) {
                violations.push(Violation::ExpectedResidueKeyMismatch { index });
            }
            if !is_canonical(letter) {
                violations.push(Violation::NonCanonicalExpected { index, letter });
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassTag {
    Mechanistic,
    Spurious,
}

impl ClassTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassTag::Mechanistic => "mechanistic",
            ClassTag::Spurious => "spurious",
        }
    }
}

impl fmt::Display for ClassTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Mask,
    ClassSubstitution,
}

impl Operator {
    pub const ALL: [Operator; 2] = [Operator::Mask, Operator::ClassSubstitution];

    pub fn as_str(self) -> &'static str {
        match self {
            Operator::Mask => "mask",
            Operator::ClassSubstitution => "class_substitution",
        }
    }

    pub(crate) fn code(self) -> u64 {
        match self {
            Operator::Mask => 1,
            Operator::ClassSubstitution => 2,
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Operator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mask" => Ok(Operator::Mask),
            "class_substitution" | "substitution" | "sub" => Ok(Operator::ClassSubstitution),
            other => Err(Error::InvalidConfig(format!("unknown operator `{other}`"))),
        }
    }
}

/// A set of residue positions tagged with its intervention class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scope {
    indices: Vec<usize>,
    class_tag: ClassTag,
}

impl Scope {
    /// Builds a scope from ascending, distinct, 1-based indices.
    pub fn new(indices: Vec<usize>, class_tag: ClassTag) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidConfig("scope must be non-empty".into()));
        }
        if indices.contains(&0) {
            return Err(Error::ScopeOutOfBounds {
                index: 0,
                len: usize::MAX,
            });
        }
        if !indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(
                "scope indices must be strictly ascending".into(),
            ));
        }
        Ok(Self { indices, class_tag })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn class_tag(&self) -> ClassTag {
        self.class_tag
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    /// Checks range and class membership against a target's prior.
    pub fn check_against(&self, target: &TargetRecord) -> Result<()> {
        let len = target.len();
        if let Some(&index) = self.indices.iter().find(|&&i| i > len) {
            return Err(Error::ScopeOutOfBounds { index, len });
        }
        let in_prior = |i: &usize| target.prior_scope.binary_search(i).is_ok();
        let ok = match self.class_tag {
            ClassTag::Mechanistic => self.indices.iter().all(in_prior),
            ClassTag::Spurious => !self.indices.iter().any(in_prior),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invariant(format!(
                "{} scope inconsistent with prior of `{}`",
                self.class_tag, target.target_id
            )))
        }
    }
}

/// One deterministic input transformation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub intervention_id: String,
    pub target_id: String,
    pub scope: Scope,
    pub operator: Operator,
    /// Seed for per-position substitution draws.
    pub rng_seed: u64,
}

impl InterventionSpec {
    pub fn class_tag(&self) -> ClassTag {
        self.scope.class_tag()
    }

    /// Deterministic id from target, class, operator, replicate index,
    /// seed and scope contents.
    pub fn make_id(
        target_id: &str,
        scope: &Scope,
        operator: Operator,
        rng_seed: u64,
        replicate: usize,
    ) -> String {
        let digest = scope
            .indices()
            .iter()
            .fold(crate::rng::derive_seed(&[rng_seed, hash_str(target_id)]), |h, &i| {
                crate::rng::mix64(h ^ i as u64)
            });
        let class = match scope.class_tag() {
            ClassTag::Mechanistic => 'm',
            ClassTag::Spurious => 's',
        };
        format!(
            "{target_id}:{}:{class}{replicate:04}:{digest:016x}",
            operator.as_str()
        )
    }
}

/// Mechanistic and spurious interventions of equal cardinality and operator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub mech: InterventionSpec,
    pub spur: InterventionSpec,
}

impl MatchedPair {
    pub fn check(&self) -> Result<()> {
        if self.mech.scope.len() != self.spur.scope.len() {
            return Err(Error::Invariant(format!(
                "cardinality mismatch {} vs {}",
                self.mech.scope.len(),
                self.spur.scope.len()
            )));
        }
        if self.mech.operator != self.spur.operator {
            return Err(Error::Invariant("operator mismatch in matched pair".into()));
        }
        if self.mech.class_tag() != ClassTag::Mechanistic
            || self.spur.class_tag() != ClassTag::Spurious
        {
            return Err(Error::Invariant("class tags swapped in matched pair".into()));
        }
        Ok(())
    }
}

/// Applies `spec` to `sequence`. Positions outside the scope are untouched.
pub fn apply_intervention(sequence: &str, spec: &InterventionSpec) -> Result<String> {
    let mut residues: Vec<char> = sequence.chars().collect();
    let len = residues.len();
    for &index in spec.scope.indices() {
        if index == 0 || index > len {
            return Err(Error::ScopeOutOfBounds { index, len });
        }
        let slot = &mut residues[index - 1];
        *slot = match spec.operator {
            Operator::Mask => MASK_TOKEN,
            Operator::ClassSubstitution => {
                substitute(*slot, spec.rng_seed, &spec.target_id, index)
            }
        };
    }
    Ok(residues.into_iter().collect())
}

/// Draws a different residue from the same physicochemical class.
/// Singleton classes and non-canonical residues fall back to the mask token.
pub fn substitute(residue: char, seed: u64, target_id: &str, position: usize) -> char {
    let Some(class) = residue_class(residue) else {
        return MASK_TOKEN;
    };
    let alternatives: Vec<u8> = class.iter().copied().filter(|&b| b as char != residue).collect();
    if alternatives.is_empty() {
        return MASK_TOKEN;
    }
    let mut rng = SplitMix64::from_parts(&[seed, hash_str(target_id), position as u64]);
    alternatives[rng.index(alternatives.len())] as char
}
