//! Benchmark fixtures.

use isaac_core::compiler::{compile, CompileConfig};
use isaac_core::rng::SplitMix64;
use isaac_core::synth::{synth_dataset, SynthConfig};
use isaac_core::{AuditingSet, ModelConfig, ResponseSet, RunConfig};

fn uniform(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// `n_inputs` response sets with `n_deltas` entries per class. Mechanistic
/// deltas are shifted away from zero so the metrics do real work.
pub fn responses(n_inputs: usize, n_deltas: usize, seed: u64) -> Vec<ResponseSet> {
    let mut rng = SplitMix64::new(seed);
    (0..n_inputs)
        .map(|i| ResponseSet {
            pair_id: format!("p{i:05}"),
            mech_deltas: (0..n_deltas).map(|_| uniform(&mut rng) * 2.0 - 0.5).collect(),
            spur_deltas: (0..n_deltas).map(|_| uniform(&mut rng) - 0.5).collect(),
        })
        .collect()
}

pub fn values(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = SplitMix64::new(seed);
    (0..n).map(|_| uniform(&mut rng)).collect()
}

pub fn labeled_scores(n: usize, seed: u64) -> (Vec<f64>, Vec<u8>) {
    let mut rng = SplitMix64::new(seed);
    let labels: Vec<u8> = (0..n).map(|_| rng.below(2) as u8).collect();
    let scores = labels.iter().map(|&l| uniform(&mut rng) + 0.3 * f64::from(l)).collect();
    (scores, labels)
}

pub fn auditing_set(n_targets: usize, seed: u64) -> AuditingSet {
    let (targets, pairs) = synth_dataset(&SynthConfig {
        n_targets,
        seed,
        ..SynthConfig::default()
    });
    compile(&targets, &pairs, &CompileConfig { scope_fraction: 0.25 })
        .expect("synthetic set compiles")
        .set
}

pub fn oracle_run(oracle: &str, bootstrap_replicates: usize) -> RunConfig {
    RunConfig {
        models: vec![ModelConfig {
            name: oracle.to_string(),
            endpoint: format!("oracle:{oracle}"),
            affine: None,
        }],
        seed: 1,
        bootstrap_replicates,
        ..RunConfig::default()
    }
}
