//! Builds the auditing set: loads targets and pairs, filters targets whose
//! prior can be realized as interventions, and records coverage statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intervention::scope_cardinality;
use crate::metrics::quantile;
use crate::types::{PairRecord, TargetRecord};

pub const TARGETS_HEADER: [&str; 4] = ["target_id", "sequence", "prior_indices", "prior_residues"];
pub const PAIRS_HEADER: [&str; 4] = ["pair_id", "drug", "target_id", "label"];
pub const AUDITING_SET_SCHEMA: &str = "isaac-auditing-set/1";

/// A non-fatal problem found while loading or compiling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    /// 1-based line in the source file, when the warning is tied to a row.
    pub line: Option<u64>,
    pub message: String,
}

impl Warning {
    fn at(line: u64, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn general(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub warnings: Vec<Warning>,
}

fn tsv_reader(path: &Path, expected: &[&str]) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .has_headers(true)
        .from_reader(file);
    let header = reader.headers().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            expected: expected.join("\\t"),
            found: found.join("\\t"),
        });
    }
    Ok(reader)
}

fn parse_indices(field: &str) -> std::result::Result<Vec<usize>, String> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad prior index `{}`", s.trim()))
        })
        .collect()
}

fn parse_expected(field: &str) -> std::result::Result<Option<BTreeMap<usize, char>>, String> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    let mut map = BTreeMap::new();
    for entry in field.split(',') {
        let entry = entry.trim();
        let (index, letter) = entry
            .split_once(':')
            .ok_or_else(|| format!("bad prior residue entry `{entry}`"))?;
        let index = index
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("bad prior residue index `{index}`"))?;
        let mut chars = letter.trim().chars();
        let (Some(c), None) = (chars.next(), chars.next()) else {
            return Err(format!("prior residue `{letter}` is not a single letter"));
        };
        if map.insert(index, c).is_some() {
            return Err(format!("duplicate prior residue index {index}"));
        }
    }
    Ok(Some(map))
}

/// Reads a tab-separated targets file. Rows that fail to parse or validate
/// are excluded and reported as warnings.
pub fn load_targets(path: impl AsRef<Path>) -> Result<Loaded<TargetRecord>> {
    let path = path.as_ref();
    let mut reader = tsv_reader(path, &TARGETS_HEADER)?;
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() < 3 || row.len() > 4 {
            warnings.push(Warning::at(line, format!("expected 4 fields, found {}", row.len())));
            continue;
        }
        let parsed = parse_indices(&row[2]).and_then(|prior| {
            parse_expected(row.get(3).unwrap_or("")).map(|expected| (prior, expected))
        });
        let (prior_scope, prior_residues) = match parsed {
            Ok(p) => p,
            Err(message) => {
                warnings.push(Warning::at(line, message));
                continue;
            }
        };
        let record = TargetRecord {
            target_id: row[0].trim().to_string(),
            sequence: row[1].trim().to_string(),
            prior_scope,
            prior_residues,
        };
        if record.target_id.is_empty() {
            warnings.push(Warning::at(line, "empty target_id"));
            continue;
        }
        match record.validate() {
            Ok(()) => records.push(record),
            Err(violations) => {
                let joined: Vec<String> = violations.iter().map(ToString::to_string).collect();
                warnings.push(Warning::at(
                    line,
                    format!("target `{}` excluded: {}", record.target_id, joined.join("; ")),
                ));
            }
        }
    }
    if records.is_empty() && warnings.is_empty() {
        warnings.push(Warning::general(format!("{}: no target rows", path.display())));
    }
    Ok(Loaded { records, warnings })
}

/// Reads a tab-separated pairs file.
pub fn load_pairs(path: impl AsRef<Path>) -> Result<Loaded<PairRecord>> {
    let path = path.as_ref();
    let mut reader = tsv_reader(path, &PAIRS_HEADER)?;
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() < 3 || row.len() > 4 {
            warnings.push(Warning::at(line, format!("expected 4 fields, found {}", row.len())));
            continue;
        }
        let label = match row.get(3).map(str::trim).unwrap_or("") {
            "" => None,
            "0" => Some(0),
            "1" => Some(1),
            other => {
                warnings.push(Warning::at(line, format!("label `{other}` is not 0/1")));
                continue;
            }
        };
        let pair = PairRecord {
            pair_id: row[0].trim().to_string(),
            drug: row[1].trim().to_string(),
            target_id: row[2].trim().to_string(),
            label,
        };
        if pair.pair_id.is_empty() || pair.target_id.is_empty() {
            warnings.push(Warning::at(line, "empty pair_id or target_id"));
            continue;
        }
        records.push(pair);
    }
    if records.is_empty() && warnings.is_empty() {
        warnings.push(Warning::general(format!("{}: no pair rows", path.display())));
    }
    Ok(Loaded { records, warnings })
}

/// Why a target cannot be audited.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Unrealizable {
    EmptyPrior,
    IndexOutOfRange { index: usize },
    ResidueMismatch { index: usize, expected: char, found: char },
    EmptyComplement,
    ComplementTooSmall { available: usize, needed: usize },
}

impl fmt::Display for Unrealizable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unrealizable::EmptyPrior => write!(f, "empty prior"),
            Unrealizable::IndexOutOfRange { index } => write!(f, "index out of range: {index}"),
            Unrealizable::ResidueMismatch {
                index,
                expected,
                found,
            } => write!(f, "residue mismatch at {index}: expected {expected}, found {found}"),
            Unrealizable::EmptyComplement => write!(f, "empty complement"),
            Unrealizable::ComplementTooSmall { available, needed } => {
                write!(f, "complement too small: {available} < {needed}")
            }
        }
    }
}

/// Checks that a validated target admits mechanistic scopes of up to
/// `max_scope` residues together with matched spurious scopes.
pub fn is_realizable(record: &TargetRecord, max_scope: usize) -> std::result::Result<(), Unrealizable> {
    if record.prior_scope.is_empty() {
        return Err(Unrealizable::EmptyPrior);
    }
    let len = record.len();
    if let Some(&index) = record.prior_scope.iter().find(|&&i| i == 0 || i > len) {
        return Err(Unrealizable::IndexOutOfRange { index });
    }
    if let Some(expected) = &record.prior_residues {
        let residues: Vec<char> = record.sequence.chars().collect();
        for &index in &record.prior_scope {
            let found = residues[index - 1];
            match expected.get(&index) {
                Some(&e) if e == found => {}
                Some(&e) => {
                    return Err(Unrealizable::ResidueMismatch {
                        index,
                        expected: e,
                        found,
                    })
                }
                None => {
                    return Err(Unrealizable::ResidueMismatch {
                        index,
                        expected: '?',
                        found,
                    })
                }
            }
        }
    }
    let available = len - record.prior_scope.len();
    if available == 0 {
        return Err(Unrealizable::EmptyComplement);
    }
    if available < max_scope {
        return Err(Unrealizable::ComplementTooSmall {
            available,
            needed: max_scope,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompileConfig {
    /// Mechanistic scope size as a fraction of the prior size.
    pub scope_fraction: f64,
}

impl Default for CompileConfig {
    fn default() -> Self {
        Self {
            scope_fraction: crate::intervention::DEFAULT_SCOPE_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub n_targets_total: usize,
    pub n_with_prior: usize,
    pub n_realizable: usize,
    /// Median prior size over retained targets.
    pub median_prior_size: f64,
    pub iqr_prior_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedTarget {
    pub target_id: String,
    pub reason: Unrealizable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditingSet {
    pub schema: String,
    pub scope_fraction: f64,
    pub targets: Vec<TargetRecord>,
    pub pairs: Vec<PairRecord>,
    pub coverage: CoverageStats,
    pub excluded: Vec<ExcludedTarget>,
}

#[derive(Debug, Clone)]
pub struct Compiled {
    pub set: AuditingSet,
    pub warnings: Vec<Warning>,
}

/// Retains realizable targets and their pairs. Output is sorted by id and
/// independent of input order.
pub fn compile(
    targets: &[TargetRecord],
    pairs: &[PairRecord],
    config: &CompileConfig,
) -> Result<Compiled> {
    if !(config.scope_fraction > 0.0 && config.scope_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "scope_fraction {} outside (0, 1]",
            config.scope_fraction
        )));
    }
    let mut seen = BTreeSet::new();
    for t in targets {
        if !seen.insert(t.target_id.as_str()) {
            return Err(Error::DuplicateId {
                kind: "target",
                id: t.target_id.clone(),
            });
        }
    }
    let mut seen = BTreeSet::new();
    for p in pairs {
        if !seen.insert(p.pair_id.as_str()) {
            return Err(Error::DuplicateId {
                kind: "pair",
                id: p.pair_id.clone(),
            });
        }
    }

    let mut sorted_targets: Vec<&TargetRecord> = targets.iter().collect();
    sorted_targets.sort_by(|a, b| a.target_id.cmp(&b.target_id));

    let mut retained = Vec::new();
    let mut excluded = Vec::new();
    for t in sorted_targets {
        let k = scope_cardinality(t.prior_scope.len(), config.scope_fraction);
        match is_realizable(t, k) {
            Ok(()) => retained.push(t.clone()),
            Err(reason) => excluded.push(ExcludedTarget {
                target_id: t.target_id.clone(),
                reason,
            }),
        }
    }
    if retained.is_empty() {
        return Err(Error::EmptyAuditingSet);
    }

    let retained_ids: BTreeSet<&str> = retained.iter().map(|t| t.target_id.as_str()).collect();
    let mut warnings = Vec::new();
    let mut kept_pairs: Vec<PairRecord> = Vec::new();
    let mut sorted_pairs: Vec<&PairRecord> = pairs.iter().collect();
    sorted_pairs.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    for p in sorted_pairs {
        if retained_ids.contains(p.target_id.as_str()) {
            kept_pairs.push(p.clone());
        } else {
            warnings.push(Warning::general(format!(
                "pair `{}` dropped: target `{}` not in auditing set",
                p.pair_id, p.target_id
            )));
        }
    }

    let counts = CoverageStats {
        n_targets_total: targets.len(),
        n_with_prior: targets.iter().filter(|t| !t.prior_scope.is_empty()).count(),
        n_realizable: retained.len(),
        median_prior_size: 0.0,
        iqr_prior_size: 0.0,
    };
    let mut set = AuditingSet {
        schema: AUDITING_SET_SCHEMA.to_string(),
        scope_fraction: config.scope_fraction,
        targets: retained,
        pairs: kept_pairs,
        coverage: counts,
        excluded,
    };
    set.coverage = coverage_summary(&set);
    Ok(Compiled { set, warnings })
}

/// Median and IQR of prior sizes over the retained targets; population counts
/// are carried over from compilation.
pub fn coverage_summary(set: &AuditingSet) -> CoverageStats {
    let sizes: Vec<f64> = set.targets.iter().map(|t| t.prior_scope.len() as f64).collect();
    let (median, iqr) = if sizes.is_empty() {
        (0.0, 0.0)
    } else {
        let q = |p| quantile(&sizes, p).expect("non-empty");
        (q(0.5), q(0.75) - q(0.25))
    };
    CoverageStats {
        median_prior_size: median,
        iqr_prior_size: iqr,
        ..set.coverage.clone()
    }
}

impl AuditingSet {
    pub fn target(&self, target_id: &str) -> Option<&TargetRecord> {
        self.targets
            .binary_search_by(|t| t.target_id.as_str().cmp(target_id))
            .ok()
            .map(|i| &self.targets[i])
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: AuditingSet = serde_json::from_str(&text)?;
        if set.schema != AUDITING_SET_SCHEMA {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("unsupported schema `{}`", set.schema),
            });
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn target(id: &str, seq: &str, prior: &[usize], expected: Option<&[(usize, char)]>) -> TargetRecord {
        TargetRecord {
            target_id: id.into(),
            sequence: seq.into(),
            prior_scope: prior.to_vec(),
            prior_residues: expected.map(|e| e.iter().copied().collect()),
        }
    }

    fn pair(id: &str, target: &str) -> PairRecord {
        PairRecord {
            pair_id: id.into(),
            drug: "CCO".into(),
            target_id: target.into(),
            label: None,
        }
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn realizability_examples() {
        let t = target("A", "MKVR", &[2, 3], Some(&[(2, 'K'), (3, 'V')]));
        assert_eq!(is_realizable(&t, 2), Ok(()));

        let t = target("A", "MKVR", &[2], Some(&[(2, 'A')]));
        let err = is_realizable(&t, 1).unwrap_err();
        assert!(err.to_string().starts_with("residue mismatch at 2"), "{err}");

        let t = target("A", "MK", &[1, 2], None);
        assert_eq!(is_realizable(&t, 1).unwrap_err().to_string(), "empty complement");

        let t = target("A", "MKVR", &[], None);
        assert_eq!(is_realizable(&t, 1), Err(Unrealizable::EmptyPrior));

        let t = target("A", "MKVRA", &[1, 2, 3], None);
        assert_eq!(
            is_realizable(&t, 3),
            Err(Unrealizable::ComplementTooSmall { available: 2, needed: 3 })
        );
    }

    #[test]
    fn load_targets_examples() {
        let f = write_tmp(
            "target_id\tsequence\tprior_indices\tprior_residues\n\
             T1\tMKVR\t2,3\t2:K,3:V\n\
             T2\tMKV\t1\t\n\
             T3\tACDEFG\t2,4,6\t\n",
        );
        let loaded = load_targets(f.path()).unwrap();
        assert_eq!(loaded.records.len(), 3);
        assert!(loaded.warnings.is_empty());
        assert_eq!(loaded.records[0].prior_residues.as_ref().unwrap()[&3], 'V');
        assert_eq!(loaded.records[1].prior_residues, None);

        let f = write_tmp(
            "target_id\tsequence\tprior_indices\tprior_residues\n\
             T1\tMKVR\t0,3\t\n\
             T2\tMKV\t1\t\n",
        );
        let loaded = load_targets(f.path()).unwrap();
        assert_eq!(loaded.records.len(), 1);
        assert_eq!(loaded.warnings.len(), 1);
        assert_eq!(loaded.warnings[0].line, Some(2));
        assert!(loaded.warnings[0].message.contains("index out of range"));

        let f = write_tmp("target_id\tsequence\tprior_indices\tprior_residues\n");
        let loaded = load_targets(f.path()).unwrap();
        assert!(loaded.records.is_empty());
        assert_eq!(loaded.warnings.len(), 1);
    }

    #[test]
    fn load_rejects_bad_header_and_missing_file() {
        let f = write_tmp("id\tseq\n");
        assert!(matches!(load_targets(f.path()), Err(Error::MalformedHeader { .. })));
        assert!(matches!(load_targets("/nonexistent/targets.tsv"), Err(Error::Io { .. })));
    }

    #[test]
    fn load_pairs_parses_labels() {
        let f = write_tmp(
            "pair_id\tdrug\ttarget_id\tlabel\n\
             P1\tCC(=O)O\tT1\t1\n\
             P2\tc1ccccc1\tT1\t\n\
             P3\tCCN\tT2\t2\n",
        );
        let loaded = load_pairs(f.path()).unwrap();
        assert_eq!(loaded.records.len(), 2);
        assert_eq!(loaded.records[0].label, Some(1));
        assert_eq!(loaded.records[1].label, None);
        assert_eq!(loaded.warnings[0].line, Some(4));
    }

    #[test]
    fn compile_counts_attrition() {
        let targets = vec![
            target("A", "MKVRAAAA", &[2, 3], Some(&[(2, 'K'), (3, 'V')])),
            target("B", "MKVRAAAA", &[2], Some(&[(2, 'A')])),
        ];
        let pairs = vec![pair("p1", "A"), pair("p2", "B"), pair("p3", "Z")];
        let compiled = compile(&targets, &pairs, &CompileConfig::default()).unwrap();
        let c = &compiled.set.coverage;
        assert_eq!((c.n_targets_total, c.n_with_prior, c.n_realizable), (2, 2, 1));
        assert_eq!(compiled.set.pairs.len(), 1);
        assert_eq!(compiled.warnings.len(), 2);
        assert_eq!(compiled.set.excluded[0].target_id, "B");
    }

    #[test]
    fn compile_all_realizable_and_empty() {
        let targets = vec![
            target("A", "MKVRAAAA", &[2, 3], None),
            target("B", "MKVRAAAA", &[], None),
            target("C", "MKVRAAAA", &[5], None),
        ];
        let set = compile(&targets, &[], &CompileConfig::default()).unwrap().set;
        assert_eq!(set.coverage.n_realizable, set.coverage.n_with_prior);

        let bad = vec![target("A", "MK", &[1, 2], None)];
        assert!(matches!(
            compile(&bad, &[], &CompileConfig::default()),
            Err(Error::EmptyAuditingSet)
        ));
    }

    #[test]
    fn compile_is_permutation_invariant_and_monotone() {
        let mut targets: Vec<TargetRecord> = (0..12)
            .map(|i| {
                let prior: Vec<usize> = (1..=(i % 5) + 1).collect();
                target(&format!("T{i:02}"), "MKVRAAAAGGG", &prior, None)
            })
            .collect();
        targets.push(target("Tbad", "MKV", &[1, 2, 3], None));
        let pairs: Vec<PairRecord> =
            targets.iter().enumerate().map(|(i, t)| pair(&format!("P{i}"), &t.target_id)).collect();
        let base = compile(&targets, &pairs, &CompileConfig::default()).unwrap().set;
        let mut rt = targets.clone();
        rt.reverse();
        let mut rp = pairs.clone();
        rp.rotate_left(5);
        assert_eq!(compile(&rt, &rp, &CompileConfig::default()).unwrap().set, base);

        // Adding a target never removes previously retained ones.
        let mut more = targets.clone();
        more.push(target("Tnew", "MKVRAAAA", &[3, 4], None));
        let grown = compile(&more, &pairs, &CompileConfig::default()).unwrap().set;
        for t in &base.targets {
            assert!(grown.target(&t.target_id).is_some());
        }
    }

    #[test]
    fn coverage_quantiles() {
        let mk = |sizes: &[usize]| {
            let targets: Vec<TargetRecord> = sizes
                .iter()
                .enumerate()
                .map(|(i, &n)| {
                    let prior: Vec<usize> = (1..=n).collect();
                    target(&format!("T{i}"), &"A".repeat(n + 40), &prior, None)
                })
                .collect();
            compile(&targets, &[], &CompileConfig::default()).unwrap().set.coverage
        };
        let c = mk(&[85]);
        assert_eq!((c.median_prior_size, c.iqr_prior_size), (85.0, 0.0));
        let c = mk(&[80, 85, 90]);
        assert_eq!((c.median_prior_size, c.iqr_prior_size), (85.0, 5.0));
    }

    #[test]
    fn json_round_trip() {
        let targets = vec![target("A", "MKVRAAAA", &[2, 3], Some(&[(2, 'K'), (3, 'V')]))];
        let set = compile(&targets, &[pair("p", "A")], &CompileConfig::default()).unwrap().set;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.json");
        set.save_json(&path).unwrap();
        assert_eq!(AuditingSet::load_json(&path).unwrap(), set);
    }
}
