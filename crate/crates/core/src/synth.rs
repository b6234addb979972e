//! Seeded synthetic inputs for tests, benchmarks and dry runs.
//!
//! Targets get random canonical sequences and a pocket-like prior: a random
//! subset of a window about 1.5x the prior size, so priors are compact but
//! not fully contiguous.

use std::collections::BTreeMap;

use crate::rng::SplitMix64;
use crate::types::{PairRecord, TargetRecord, AMINO_ACIDS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthConfig {
    pub n_targets: usize,
    /// Inclusive sequence length range.
    pub length: (usize, usize),
    /// Inclusive prior size range.
    pub prior_size: (usize, usize),
    pub pairs_per_target: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_targets: 60,
            length: (200, 600),
            prior_size: (40, 100),
            pairs_per_target: 2,
            seed: 0,
        }
    }
}

const DRUGS: [&str; 8] = [
    "CCO",
    "CC(=O)Oc1ccccc1C(=O)O",
    "c1ccccc1",
    "CN1CCC[C@H]1c1cccnc1",
    "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "O=C(O)c1ccccc1O",
    "Cc1ccc(cc1Nc1nccc(n1)c1cccnc1)NC(=O)c1ccc(cc1)CN1CCN(C)CC1",
    "COc1cc2ncnc(Nc3ccc(F)c(Cl)c3)c2cc1OCCCN1CCOCC1",
];

fn in_range(rng: &mut SplitMix64, (lo, hi): (usize, usize)) -> usize {
    lo + rng.index(hi - lo + 1)
}

/// Generates targets (with expected residues recorded) and labeled pairs.
pub fn synth_dataset(config: &SynthConfig) -> (Vec<TargetRecord>, Vec<PairRecord>) {
    assert!(config.length.0 <= config.length.1 && config.prior_size.0 <= config.prior_size.1);
    assert!(config.prior_size.1 * 2 <= config.length.0, "prior must leave room for a complement");
    let mut targets = Vec::with_capacity(config.n_targets);
    let mut pairs = Vec::with_capacity(config.n_targets * config.pairs_per_target);
    for t in 0..config.n_targets {
        let mut rng = SplitMix64::from_parts(&[config.seed, t as u64]);
        let len = in_range(&mut rng, config.length);
        let sequence: String = (0..len)
            .map(|_| AMINO_ACIDS[rng.index(AMINO_ACIDS.len())] as char)
            .collect();
        let size = in_range(&mut rng, config.prior_size);
        let window = (size + size / 2).min(len);
        let start = 1 + rng.index(len - window + 1);
        let positions: Vec<usize> = (start..start + window).collect();
        let prior = rng.sample_subset(&positions, size);
        let bytes = sequence.as_bytes();
        let expected: BTreeMap<usize, char> = prior.iter().map(|&i| (i, bytes[i - 1] as char)).collect();
        let target_id = format!("T{t:04}");
        for p in 0..config.pairs_per_target {
            pairs.push(PairRecord {
                pair_id: format!("{target_id}-P{p:02}"),
                drug: DRUGS[rng.index(DRUGS.len())].to_string(),
                target_id: target_id.clone(),
                label: Some(rng.below(2) as u8),
            });
        }
        targets.push(TargetRecord {
            target_id,
            sequence,
            prior_scope: prior,
            prior_residues: Some(expected),
        });
    }
    (targets, pairs)
}
