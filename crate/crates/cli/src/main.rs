use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use isaac_core::compiler::{self, CompileConfig};
use isaac_core::report::{aggregate_reports, emit_aggregate};
use isaac_core::{emit_report, run_audit, AuditReport, EmitOptions, ModelConfig, Operator, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "isaac", version, about = "Interventional auditing of black-box drug-target predictors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a full audit and write the report tables.
    Audit(AuditArgs),
    /// Validate inputs and write the compiled auditing set as JSON.
    Compile(CompileArgs),
    /// Combine report.json files from independent runs.
    Aggregate(AggregateArgs),
}

#[derive(Args, Debug)]
struct AuditArgs {
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Targets TSV (target_id, sequence, prior_indices, prior_residues).
    #[arg(long)]
    targets: Option<PathBuf>,
    /// Pairs TSV (pair_id, drug, target_id, label).
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Previously compiled auditing set JSON.
    #[arg(long, conflicts_with_all = ["targets", "pairs"])]
    auditing_set: Option<PathBuf>,
    /// `name=oracle:<oracle>` or `name=<command line>`; repeatable. Replaces
    /// the configured model list.
    #[arg(long = "model", value_name = "NAME=ENDPOINT")]
    models: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scope_fraction: Option<f64>,
    #[arg(long)]
    pairs_per_input: Option<usize>,
    /// Comma-separated: mask, class_substitution.
    #[arg(long, value_delimiter = ',')]
    operators: Option<Vec<Operator>>,
    #[arg(long)]
    bootstrap_reps: Option<usize>,
    #[arg(long)]
    ci_level: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Per-batch timeout for external scorers, in seconds.
    #[arg(long)]
    timeout: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dump_interventions: bool,
    #[arg(long)]
    per_input: bool,
    /// Skip the per-operator Reasoning Score table.
    #[arg(long)]
    no_operator_stratification: bool,
}

#[derive(Args, Debug)]
struct CompileArgs {
    #[arg(long)]
    targets: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, default_value_t = isaac_core::intervention::DEFAULT_SCOPE_FRACTION)]
    scope_fraction: f64,
    /// Output JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AggregateArgs {
    /// report.json files, one per run.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn build_config(args: AuditArgs) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::from_json_file(path).with_context(|| format!("reading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if args.auditing_set.is_some() {
        config.auditing_set_path = args.auditing_set;
        config.targets_path = None;
        config.pairs_path = None;
    }
    if let Some(p) = args.targets {
        config.targets_path = Some(p);
        config.auditing_set_path = None;
    }
    if let Some(p) = args.pairs {
        config.pairs_path = Some(p);
        config.auditing_set_path = None;
    }
    if !args.models.is_empty() {
        config.models = args
            .models
            .iter()
            .map(|m| ModelConfig::parse(m))
            .collect::<isaac_core::Result<_>>()?;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.scope_fraction {
        config.scope_fraction = v;
    }
    if let Some(v) = args.pairs_per_input {
        config.pairs_per_input = v;
    }
    if let Some(v) = args.operators {
        config.operators = v;
    }
    if let Some(v) = args.bootstrap_reps {
        config.bootstrap_replicates = v;
    }
    if let Some(v) = args.ci_level {
        config.ci_level = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.timeout {
        config.timeout_secs = v;
    }
    if let Some(v) = args.out {
        config.output_dir = v;
    }
    config.dump_interventions |= args.dump_interventions;
    config.per_input |= args.per_input;
    if args.no_operator_stratification {
        config.operator_stratification = false;
    }
    Ok(config)
}

fn audit(args: AuditArgs) -> Result<()> {
    let config = build_config(args)?;
    let outcome = run_audit(&config)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let options = EmitOptions {
        per_input: config.per_input,
        dump_interventions: config.dump_interventions,
    };
    let written = emit_report(&outcome, &config.output_dir, options)
        .with_context(|| format!("writing reports to {}", config.output_dir.display()))?;

    let report = &outcome.report;
    println!(
        "audited {} pairs over {} targets ({} matched pairs per run)",
        report.design.n_pairs, report.design.n_targets, report.design.n_matched_pairs
    );
    println!("{:<24} {:>8} {:>8} {:>8} {:>8}", "model", "RS", "C_sep", "Overlap", "AUROC");
    for m in &report.models {
        let auroc = m.auroc.value.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        println!(
            "{:<24} {:>8.3} {:>8.3} {:>8.3} {:>8}",
            m.name, m.metrics.rs.point, m.metrics.c_sep.point, m.metrics.overlap.point, auroc
        );
    }
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn compile(args: CompileArgs) -> Result<()> {
    let targets = compiler::load_targets(&args.targets)?;
    let pairs = compiler::load_pairs(&args.pairs)?;
    let compiled = compiler::compile(
        &targets.records,
        &pairs.records,
        &CompileConfig {
            scope_fraction: args.scope_fraction,
        },
    )?;
    for w in targets.warnings.iter().chain(&pairs.warnings).chain(&compiled.warnings) {
        eprintln!("warning: {w}");
    }
    compiled.set.save_json(&args.out)?;
    let c = &compiled.set.coverage;
    println!(
        "{} of {} targets realizable ({} with prior), {} pairs retained",
        c.n_realizable,
        c.n_targets_total,
        c.n_with_prior,
        compiled.set.pairs.len()
    );
    Ok(())
}

fn aggregate(args: AggregateArgs) -> Result<()> {
    if args.reports.len() < 2 {
        bail!("aggregation needs at least two reports");
    }
    let reports = args
        .reports
        .iter()
        .map(|p| AuditReport::load_json(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let agg = aggregate_reports(&reports)?;
    for path in emit_aggregate(&agg, &args.out)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Audit(a) => audit(a),
        Command::Compile(a) => compile(a),
        Command::Aggregate(a) => aggregate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
