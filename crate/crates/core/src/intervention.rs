//! Matched scope sampling and scope geometry.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, hash_str, SplitMix64};
use crate::types::{ClassTag, InterventionSpec, MatchedPair, Operator, Scope, TargetRecord};

pub const DEFAULT_SCOPE_FRACTION: f64 = 0.25;
pub const DEFAULT_PAIRS_PER_INPUT: usize = 20;

/// Stream tag mixed into the master seed for substitution draws.
const SUBSTITUTION_STREAM: u64 = 0x5355_4253;

/// Mechanistic scope size: `max(1, round(fraction * prior_size))`, rounding
/// half away from zero.
pub fn scope_cardinality(prior_size: usize, fraction: f64) -> usize {
    ((fraction * prior_size as f64).round() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub scope_fraction: f64,
    pub n_pairs_per_input: usize,
    pub operators: Vec<Operator>,
    pub master_seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            scope_fraction: DEFAULT_SCOPE_FRACTION,
            n_pairs_per_input: DEFAULT_PAIRS_PER_INPUT,
            operators: Operator::ALL.to_vec(),
            master_seed: 0,
        }
    }
}

impl SamplingPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.scope_fraction > 0.0 && self.scope_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "scope_fraction {} outside (0, 1]",
                self.scope_fraction
            )));
        }
        if self.n_pairs_per_input == 0 {
            return Err(Error::InvalidConfig("n_pairs_per_input must be >= 1".into()));
        }
        if self.operators.is_empty() {
            return Err(Error::InvalidConfig("at least one operator required".into()));
        }
        Ok(())
    }

    /// Operators in canonical order without duplicates.
    pub fn canonical_operators(&self) -> Vec<Operator> {
        let mut ops = self.operators.clone();
        ops.sort();
        ops.dedup();
        ops
    }

    /// Seed shared by every substitution draw in the run.
    pub fn substitution_seed(&self) -> u64 {
        derive_seed(&[self.master_seed, SUBSTITUTION_STREAM])
    }
}

/// Samples `n_pairs_per_input` matched pairs per operator for one target,
/// ordered by (operator, replicate index).
pub fn sample_matched_pairs(target: &TargetRecord, plan: &SamplingPlan) -> Result<Vec<MatchedPair>> {
    plan.validate()?;
    let prior = &target.prior_scope;
    if prior.is_empty() {
        return Err(Error::Invariant(format!("target `{}` has an empty prior", target.target_id)));
    }
    let k = scope_cardinality(prior.len(), plan.scope_fraction);
    let complement = target.complement();
    if complement.len() < k {
        return Err(Error::ComplementTooSmall {
            target_id: target.target_id.clone(),
            available: complement.len(),
            needed: k,
        });
    }
    let target_key = hash_str(&target.target_id);
    let sub_seed = plan.substitution_seed();
    let make_spec = |indices, class, operator, replicate| -> Result<InterventionSpec> {
        let scope = Scope::new(indices, class)?;
        Ok(InterventionSpec {
            intervention_id: InterventionSpec::make_id(
                &target.target_id,
                &scope,
                operator,
                sub_seed,
                replicate,
            ),
            target_id: target.target_id.clone(),
            scope,
            operator,
            rng_seed: sub_seed,
        })
    };

    let mut out = Vec::with_capacity(plan.n_pairs_per_input * plan.operators.len());
    for operator in plan.canonical_operators() {
        for replicate in 0..plan.n_pairs_per_input {
            let mut rng = SplitMix64::from_parts(&[
                plan.master_seed,
                target_key,
                replicate as u64,
                operator.code(),
            ]);
            let mech = rng.sample_subset(prior, k);
            let spur = rng.sample_subset(&complement, k);
            let pair = MatchedPair {
                mech: make_spec(mech, ClassTag::Mechanistic, operator, replicate)?,
                spur: make_spec(spur, ClassTag::Spurious, operator, replicate)?,
            };
            pair.check()?;
            out.push(pair);
        }
    }
    Ok(out)
}

/// `max(indices) - min(indices)`.
pub fn scope_spread(scope: &Scope) -> usize {
    match (scope.indices().first(), scope.indices().last()) {
        (Some(first), Some(last)) => last - first,
        _ => 0,
    }
}

/// Fraction of indices with a selected neighbour at distance one.
pub fn scope_contiguity(scope: &Scope) -> f64 {
    let idx = scope.indices();
    if idx.is_empty() {
        return 0.0;
    }
    let adjacent = idx
        .iter()
        .enumerate()
        .filter(|&(n, &i)| {
            (n > 0 && idx[n - 1] + 1 == i) || (n + 1 < idx.len() && idx[n + 1] == i + 1)
        })
        .count();
    adjacent as f64 / idx.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryStats {
    pub n_scopes_per_class: usize,
    pub mean_spread_mech: f64,
    pub mean_spread_spur: f64,
    pub mean_contiguity_mech: f64,
    pub mean_contiguity_spur: f64,
}

pub fn geometry_summary(pairs: &[MatchedPair]) -> Result<GeometryStats> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("geometry_summary"));
    }
    let n = pairs.len() as f64;
    let mean = |f: &dyn Fn(&MatchedPair) -> f64| pairs.iter().map(f).sum::<f64>() / n;
    Ok(GeometryStats {
        n_scopes_per_class: pairs.len(),
        mean_spread_mech: mean(&|p| scope_spread(&p.mech.scope) as f64),
        mean_spread_spur: mean(&|p| scope_spread(&p.spur.scope) as f64),
        mean_contiguity_mech: mean(&|p| scope_contiguity(&p.mech.scope)),
        mean_contiguity_spur: mean(&|p| scope_contiguity(&p.spur.scope)),
    })
}

/// Writes the replay dump: one row per intervention.
pub fn write_interventions<W: Write>(mut out: W, pairs: &[MatchedPair]) -> std::io::Result<()> {
    writeln!(out, "intervention_id\ttarget_id\tclass_tag\toperator\tk\tindices")?;
    for pair in pairs {
        for spec in [&pair.mech, &pair.spur] {
            let indices: Vec<String> = spec.scope.indices().iter().map(ToString::to_string).collect();
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                spec.intervention_id,
                spec.target_id,
                spec.class_tag(),
                spec.operator,
                spec.scope.len(),
                indices.join(",")
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn target(len: usize, prior: Vec<usize>) -> TargetRecord {
        TargetRecord {
            target_id: "KIN1".into(),
            sequence: "A".repeat(len),
            prior_scope: prior,
            prior_residues: None,
        }
    }

    fn scope(idx: &[usize]) -> Scope {
        Scope::new(idx.to_vec(), ClassTag::Mechanistic).unwrap()
    }

    #[test]
    fn cardinality_rounding() {
        assert_eq!(scope_cardinality(85, 0.25), 21);
        assert_eq!(scope_cardinality(4, 1.0), 4);
        assert_eq!(scope_cardinality(2, 0.25), 1); // 0.5 rounds away from zero
        assert_eq!(scope_cardinality(6, 0.25), 2); // 1.5 -> 2
        assert_eq!(scope_cardinality(1, 0.01), 1);
    }

    #[test]
    fn full_fraction_selects_whole_prior() {
        let t = target(40, vec![3, 9, 10, 22]);
        let plan = SamplingPlan {
            scope_fraction: 1.0,
            n_pairs_per_input: 3,
            ..Default::default()
        };
        let pairs = sample_matched_pairs(&t, &plan).unwrap();
        assert_eq!(pairs.len(), 6);
        for p in &pairs {
            assert_eq!(p.mech.scope.indices(), &[3, 9, 10, 22]);
        }
        let ids: std::collections::BTreeSet<_> =
            pairs.iter().flat_map(|p| [&p.mech.intervention_id, &p.spur.intervention_id]).collect();
        assert_eq!(ids.len(), 12);
    }

    #[test]
    fn complement_too_small_is_error() {
        let t = target(5, vec![1, 2, 3, 4]);
        let plan = SamplingPlan {
            scope_fraction: 1.0,
            ..Default::default()
        };
        assert!(matches!(
            sample_matched_pairs(&t, &plan),
            Err(Error::ComplementTooSmall { available: 1, needed: 4, .. })
        ));
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let t = target(300, (100..185).collect());
        let plan = SamplingPlan {
            master_seed: 42,
            ..Default::default()
        };
        let a = sample_matched_pairs(&t, &plan).unwrap();
        let b = sample_matched_pairs(&t, &plan).unwrap();
        assert_eq!(a, b);
        let c = sample_matched_pairs(&t, &SamplingPlan { master_seed: 43, ..plan }).unwrap();
        assert_ne!(a, c);
        // k = 21 for an 85-residue prior at the default fraction.
        assert!(a.iter().all(|p| p.mech.scope.len() == 21));
    }

    #[test]
    fn prior_indices_sampled_uniformly() {
        // Chi-square goodness of fit of per-index inclusion counts.
        let prior: Vec<usize> = (11..=30).collect();
        let t = target(60, prior.clone());
        let draws = 400;
        let mut counts = std::collections::BTreeMap::new();
        let mut k = 0;
        for seed in 0..draws {
            let plan = SamplingPlan {
                scope_fraction: 0.25,
                n_pairs_per_input: 1,
                operators: vec![Operator::Mask],
                master_seed: seed,
            };
            let pairs = sample_matched_pairs(&t, &plan).unwrap();
            k = pairs[0].mech.scope.len();
            for &i in pairs[0].mech.scope.indices() {
                *counts.entry(i).or_insert(0usize) += 1;
            }
        }
        let expected = draws as f64 * k as f64 / prior.len() as f64;
        let chi2: f64 = prior
            .iter()
            .map(|i| {
                let o = *counts.get(i).unwrap_or(&0) as f64;
                (o - expected).powi(2) / expected
            })
            .sum();
        // 19 degrees of freedom; 0.999 quantile is about 43.8.
        assert!(chi2 < 43.8, "chi2 = {chi2}");
    }

    #[test]
    fn spread_examples() {
        assert_eq!(scope_spread(&scope(&[10, 50, 100])), 90);
        assert_eq!(scope_spread(&scope(&[7])), 0);
        assert_eq!(scope_spread(&scope(&[1, 250])), 249);
    }

    #[test]
    fn contiguity_examples() {
        assert_eq!(scope_contiguity(&scope(&[5, 6, 7, 20])), 0.75);
        assert_eq!(scope_contiguity(&scope(&[7])), 0.0);
        assert_eq!(scope_contiguity(&scope(&[3, 4, 5])), 1.0);
    }

    fn manual_pair(mech: &[usize], spur: &[usize]) -> MatchedPair {
        let spec = |idx: &[usize], class| InterventionSpec {
            intervention_id: String::new(),
            target_id: "T".into(),
            scope: Scope::new(idx.to_vec(), class).unwrap(),
            operator: Operator::Mask,
            rng_seed: 0,
        };
        MatchedPair {
            mech: spec(mech, ClassTag::Mechanistic),
            spur: spec(spur, ClassTag::Spurious),
        }
    }

    #[test]
    fn geometry_examples() {
        let g = geometry_summary(&[manual_pair(&[1, 2], &[1, 5])]).unwrap();
        assert_eq!(g.mean_spread_mech, 1.0);
        assert_eq!(g.mean_contiguity_mech, 1.0);
        assert_eq!(g.mean_spread_spur, 4.0);
        assert_eq!(g.mean_contiguity_spur, 0.0);

        let p = manual_pair(&[5, 6, 7, 20], &[30, 40, 41, 90]);
        let g = geometry_summary(&[p.clone(), p]).unwrap();
        assert_eq!(g.mean_spread_mech, 15.0);
        assert_eq!(g.mean_contiguity_mech, 0.75);
        assert_eq!(g.mean_spread_spur, 60.0);
        assert_eq!(g.mean_contiguity_spur, 0.5);

        assert!(geometry_summary(&[]).is_err());
    }

    #[test]
    fn dump_format() {
        let mut buf = Vec::new();
        write_interventions(&mut buf, &[manual_pair(&[1, 2], &[4, 5])]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "\tT\tmechanistic\tmask\t2\t1,2");
        assert_eq!(lines[2], "\tT\tspurious\tmask\t2\t4,5");
    }

    proptest! {
        #[test]
        fn matched_pairs_respect_design(
            len in 20usize..200,
            start in 0usize..100,
            width in 1usize..60,
            fraction in 0.01f64..=1.0,
            seed in any::<u64>(),
        ) {
            let start = start.min(len - 1) + 1;
            let end = (start + width - 1).min(len);
            let prior: Vec<usize> = (start..=end).collect();
            let t = target(len, prior.clone());
            let k = scope_cardinality(prior.len(), fraction);
            prop_assume!(len - prior.len() >= k);
            let plan = SamplingPlan { scope_fraction: fraction, n_pairs_per_input: 3, operators: Operator::ALL.to_vec(), master_seed: seed };
            for p in sample_matched_pairs(&t, &plan).unwrap() {
                prop_assert_eq!(p.mech.scope.len(), p.spur.scope.len());
                prop_assert_eq!(p.mech.scope.len(), k);
                prop_assert!(p.mech.scope.check_against(&t).is_ok());
                prop_assert!(p.spur.scope.check_against(&t).is_ok());
            }
        }
    }
}
