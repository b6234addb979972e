use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const ISAAC: &str = env!("CARGO_BIN_EXE_isaac");
const ECHO: &str = env!("CARGO_BIN_EXE_isaac-echo-scorer");

const TARGETS: &str = "target_id\tsequence\tprior_indices\tprior_residues
KIN1\tMKVLAAGIVGLLLAWTSPEQRKDHGNCYFMKVLAAGIVGL\t3,4,5,6,7,8,9,10\t3:V,4:L,5:A,6:A,7:G,8:I,9:V,10:G
KIN2\tGSHMRRELLKQAVEGTLFPYDNCWAKVLGGTSPEQRKDHF\t11,12,13,14,15,16\t
BAD\tMKVRLLAAGGTT\t2\t2:A
";

const PAIRS: &str = "pair_id\tdrug\ttarget_id\tlabel
p1\tCCO\tKIN1\t1
p2\tc1ccccc1\tKIN1\t0
p3\tCCN\tKIN2\t1
p4\tCCC\tBAD\t0
";

struct Toy {
    dir: tempfile::TempDir,
}

impl Toy {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("targets.tsv"), TARGETS).unwrap();
        fs::write(dir.path().join("pairs.tsv"), PAIRS).unwrap();
        Toy { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn audit(&self, out: &str, extra: &[&str]) -> Output {
        let mut cmd = Command::new(ISAAC);
        cmd.arg("audit")
            .arg("--targets")
            .arg(self.path("targets.tsv"))
            .arg("--pairs")
            .arg(self.path("pairs.tsv"))
            .arg("--out")
            .arg(self.path(out))
            .args(["--pairs-per-input", "4", "--bootstrap-reps", "200", "--seed", "7"])
            .args(extra);
        cmd.output().unwrap()
    }
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn strip_provenance(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("provenance");
    v
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn oracle_audit_writes_all_tables() {
    let toy = Toy::new();
    let out = toy.audit("out", &["--model", "const=oracle:constant", "--per-input", "--dump-interventions"]);
    ok(&out);
    let dir = toy.path("out");
    for f in [
        "report.json",
        "table1_coverage.csv",
        "table2_auroc.csv",
        "table3_metrics.csv",
        "table4_operators.csv",
        "table5_geometry.csv",
        "directional.csv",
        "per_input.csv",
        "interventions.tsv",
    ] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
    let r = report(&dir);
    assert_eq!(r["schema"], "isaac-audit-report/1");
    let m = &r["models"][0]["metrics"];
    assert_eq!(m["rs"]["point"], 0.5);
    assert_eq!(m["c_sep"]["point"], 0.0);
    assert_eq!(m["overlap"]["point"], 1.0);
    assert_eq!(csv_rows(&dir.join("table3_metrics.csv")).len(), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("BAD"), "unrealizable target not reported: {stderr}");
}

#[test]
fn per_input_rows_match_retained_pairs() {
    let toy = Toy::new();
    ok(&toy.audit("out", &["--model", "ps=oracle:prior_sensitive", "--per-input"]));
    let rows = csv_rows(&toy.path("out/per_input.csv"));
    // p4 points at an unrealizable target and is dropped.
    assert_eq!(rows.len(), 3);
    let ids: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(ids, ["p1", "p2", "p3"]);
    let r = report(&toy.path("out"));
    assert_eq!(r["design"]["n_pairs"], 3);
    // 2 sides x 4 pairs x 2 operators x 3 inputs.
    assert_eq!(r["models"][0]["n_scored_interventions"], 48);
}

#[test]
fn external_scorer_matches_in_process_echo() {
    let toy = Toy::new();
    let model = format!("ext={ECHO}");
    ok(&toy.audit("ext", &["--model", &model, "--model", "int=oracle:echo_length", "--per-input"]));
    let r = report(&toy.path("ext"));
    let models = r["models"].as_array().unwrap();
    assert_eq!(models.len(), 2);
    assert_eq!(models[0]["metrics"], models[1]["metrics"]);
    assert_eq!(models[0]["auroc"], models[1]["auroc"]);
}

#[test]
fn runs_are_deterministic() {
    let toy = Toy::new();
    let model = format!("ext={ECHO}");
    let args = ["--model", "cs=oracle:composition_shortcut", "--model", &model, "--dump-interventions"];
    ok(&toy.audit("a", &args));
    ok(&toy.audit("b", &args));
    // Output directories differ, so compare with the config echo aligned.
    let mut a = strip_provenance(report(&toy.path("a")));
    let mut b = strip_provenance(report(&toy.path("b")));
    a["config"]["output_dir"] = Value::Null;
    b["config"]["output_dir"] = Value::Null;
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(
        fs::read(toy.path("a/interventions.tsv")).unwrap(),
        fs::read(toy.path("b/interventions.tsv")).unwrap()
    );
}

#[test]
fn config_file_with_flag_overrides() {
    let toy = Toy::new();
    let config = serde_json::json!({
        "targets_path": toy.path("targets.tsv"),
        "pairs_path": toy.path("pairs.tsv"),
        "models": [{"name": "c", "endpoint": "oracle:constant"}],
        "seed": 1,
        "pairs_per_input": 3,
        "bootstrap_replicates": 100,
        "output_dir": toy.path("from_config"),
    });
    fs::write(toy.path("run.json"), config.to_string()).unwrap();
    let out = Command::new(ISAAC)
        .arg("audit")
        .arg("--config")
        .arg(toy.path("run.json"))
        .args(["--seed", "99", "--operators", "mask"])
        .output()
        .unwrap();
    ok(&out);
    let r = report(&toy.path("from_config"));
    assert_eq!(r["config"]["seed"], 99);
    assert_eq!(r["config"]["pairs_per_input"], 3);
    assert_eq!(r["config"]["operators"], serde_json::json!(["mask"]));
    assert_eq!(r["models"][0]["n_scored_interventions"], 2 * 3 * 3);
}

#[test]
fn nan_from_scorer_fails_naming_the_id() {
    let toy = Toy::new();
    let model = format!("bad={ECHO} --fail nan --fail-on p2");
    let out = toy.audit("nan", &["--model", &model]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("non-finite") && stderr.contains("p2|"), "{stderr}");
}

#[test]
fn scorer_error_response_is_fatal() {
    let toy = Toy::new();
    let model = format!("bad={ECHO} --fail error");
    let out = toy.audit("err", &["--model", &model]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("requested failure"));
}

#[test]
fn dying_scorer_is_reported() {
    let toy = Toy::new();
    let model = format!("bad={ECHO} --fail exit");
    let out = toy.audit("exit", &["--model", &model]);
    assert!(!out.status.success());
}

#[test]
fn compile_then_audit_from_set() {
    let toy = Toy::new();
    let out = Command::new(ISAAC)
        .arg("compile")
        .arg("--targets")
        .arg(toy.path("targets.tsv"))
        .arg("--pairs")
        .arg(toy.path("pairs.tsv"))
        .arg("--out")
        .arg(toy.path("set.json"))
        .output()
        .unwrap();
    ok(&out);
    let set: Value = serde_json::from_str(&fs::read_to_string(toy.path("set.json")).unwrap()).unwrap();
    assert_eq!(set["coverage"]["n_targets_total"], 3);
    assert_eq!(set["coverage"]["n_realizable"], 2);

    let from_set = Command::new(ISAAC)
        .arg("audit")
        .arg("--auditing-set")
        .arg(toy.path("set.json"))
        .args(["--model", "c=oracle:composition_shortcut", "--pairs-per-input", "4"])
        .args(["--bootstrap-reps", "200", "--seed", "7", "--out"])
        .arg(toy.path("via_set"))
        .output()
        .unwrap();
    ok(&from_set);
    ok(&toy.audit("direct", &["--model", "c=oracle:composition_shortcut"]));
    let a = report(&toy.path("via_set"));
    let b = report(&toy.path("direct"));
    assert_eq!(a["models"], b["models"]);
    assert_eq!(a["geometry"], b["geometry"]);
}

#[test]
fn aggregate_combines_runs() {
    let toy = Toy::new();
    for (dir, seed) in [("r1", "1"), ("r2", "2"), ("r3", "3")] {
        let out = Command::new(ISAAC)
            .arg("audit")
            .arg("--targets")
            .arg(toy.path("targets.tsv"))
            .arg("--pairs")
            .arg(toy.path("pairs.tsv"))
            .args(["--model", "c=oracle:composition_shortcut", "--bootstrap-reps", "100", "--seed", seed])
            .arg("--out")
            .arg(toy.path(dir))
            .output()
            .unwrap();
        ok(&out);
    }
    let out = Command::new(ISAAC)
        .arg("aggregate")
        .args(["r1", "r2", "r3"].map(|d| toy.path(d).join("report.json")))
        .arg("--out")
        .arg(toy.path("agg"))
        .output()
        .unwrap();
    ok(&out);
    let agg: Value = serde_json::from_str(&fs::read_to_string(toy.path("agg/aggregate.json")).unwrap()).unwrap();
    assert_eq!(agg["n_runs"], 3);
    assert_eq!(agg["master_seeds"], serde_json::json!([1, 2, 3]));
    let rs = &agg["models"]["c"]["rs"];
    assert_eq!(rs["n_runs"], 3);
    assert!(rs["std"].as_f64().unwrap() >= 0.0);
    assert!(agg["models"]["c"]["rs_mask"].is_object());
}

#[test]
fn missing_model_is_rejected() {
    let toy = Toy::new();
    let out = toy.audit("none", &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("model"));
}

#[test]
fn unknown_oracle_is_rejected() {
    let toy = Toy::new();
    let out = toy.audit("x", &["--model", "x=oracle:clever"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("clever"));
}
