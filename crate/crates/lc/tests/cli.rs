use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn lc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lc")).args(args).current_dir(root()).env_remove("LC_TRACE").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn check_prints_the_type() {
    let o = lc(&["check", "corpus/f7.lc"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "c\n");
}

#[test]
fn check_reports_double_use() {
    let o = lc(&["check", "corpus/f8.lc"]);
    assert_eq!(code(&o), 1);
    assert_eq!(stdout(&o), "LinearityViolation: DoubleUse x\n");
    assert!(String::from_utf8_lossy(&o.stderr).contains("corpus/f8.lc:"));
}

#[test]
fn malformed_input_exits_2() {
    assert_eq!(code(&lc(&["check", "samples/bad_syntax.lc"])), 2);
}

#[test]
fn eval_prints_the_value() {
    let o = lc(&["eval", "samples/unit.lc"]);
    assert_eq!((code(&o), stdout(&o)), (0, "MkUnit\n".into()));
}

#[test]
fn both_semantics_agree_on_a_pair_match() {
    let o = lc(&["eval", "samples/pair.lc", "--semantics", "both", "--assert-states"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "(MkC MkA MkB)\nagree\n");
}

#[test]
fn double_force_is_stuck() {
    assert_eq!(code(&lc(&["eval", "samples/double_force.lc"])), 1);
    let o = lc(&["eval", "samples/double_force.lc", "--unchecked", "--semantics", "instrumented"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).starts_with("Stuck(DoubleForce) on x"), "{}", stdout(&o));
    let o = lc(&["eval", "samples/double_force.lc", "--unchecked", "--semantics", "natural"]);
    assert_eq!((code(&o), stdout(&o)), (0, "MkUnit\n".into()));
}

#[test]
fn fuel_exhaustion_exits_4() {
    let o = lc(&["eval", "samples/loop.lc", "--fuel", "500"]);
    assert_eq!(code(&o), 4);
    assert_eq!(stdout(&o), "FuelExhausted after 500 steps\n");
}

#[test]
fn open_programs_are_not_evaluated() {
    assert_eq!(code(&lc(&["eval", "corpus/f6.lc"])), 1);
}

#[test]
fn inline_is_preserved() {
    let o = lc(&["transform", "corpus/f.lc", "--pass", "inline", "--at", "root", "--verify"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.starts_with("inline at root: Preserved\n"), "{out}");
    assert!(out.contains("False => use x"), "{out}");
}

#[test]
fn reverse_binder_swap_is_rejected_on_a_linear_scrutinee() {
    let args = ["transform", "samples/swap_linear.lc", "--pass", "reverse-binder-swap", "--at", "root", "--verify"];
    let o = lc(&args);
    assert_eq!(code(&o), 1);
    let o = lc(&[&args[..], &["--expect-reject"]].concat());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("Rejected"));
    let o = lc(&["transform", "samples/swap_unrestricted.lc", "--pass", "reverse-binder-swap", "--everywhere", "--verify"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("Preserved"));
}

#[test]
fn pass_without_a_site_is_a_notice() {
    let o = lc(&["transform", "corpus/f.lc", "--pass", "case-known", "--everywhere", "--verify"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("case-known: NotApplicable"), "{}", stdout(&o));
    let o = lc(&["transform", "corpus/f.lc", "--pass", "case-known", "--at", "root"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("NotApplicable"));
}

#[test]
fn transforms_chain_in_order() {
    let o = lc(&["transform", "corpus/f6.lc", "--pass", "case-known,beta", "--everywhere", "--verify"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).ends_with("use x y\n"), "{}", stdout(&o));
}

#[test]
fn unknown_pass_is_a_usage_error() {
    assert_eq!(code(&lc(&["transform", "corpus/f.lc", "--pass", "fuse", "--everywhere"])), 2);
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("lc-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn corpus_report() {
    let d = scratch("report");
    let out = d.join("out.json");
    let o = lc(&["corpus", "corpus", "--report", out.to_str().unwrap(), "--passes", "all"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let entries = rep["entries"].as_array().unwrap();
    let names: Vec<&str> = entries.iter().map(|e| e["name"].as_str().unwrap()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    assert_eq!(names.len(), 13);
    for e in entries {
        let keys: Vec<&str> = e.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(keys.len(), 6);
        for k in ["name", "expect", "actual", "error_kind", "pass_results", "ms"] {
            assert!(keys.contains(&k), "{k}");
        }
        assert_eq!(e["expect"], e["actual"]);
    }
    let f12 = entries.iter().find(|e| e["name"] == "f12.lc").unwrap();
    assert_eq!(f12["actual"], "reject");
    assert_eq!(rep["totals"]["mismatches"], 0);
    assert_eq!(rep["totals"]["accepted"], 8);
    assert_eq!(rep["totals"]["rejected"], 5);
    assert!(rep["totals"]["rewrites"].as_u64().unwrap() > 0);
    assert_eq!(rep["totals"]["rewrites"], rep["totals"]["preserved"]);
}

#[test]
fn corpus_reports_are_stable_apart_from_timing() {
    let d = scratch("stable");
    let strip = |p: &PathBuf| {
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        for e in v["entries"].as_array_mut().unwrap() {
            e["ms"] = serde_json::Value::Null;
        }
        v
    };
    let (a, b) = (d.join("a.json"), d.join("b.json"));
    lc(&["corpus", "corpus", "--report", a.to_str().unwrap(), "--passes", "all"]);
    lc(&["corpus", "corpus", "--report", b.to_str().unwrap(), "--passes", "all"]);
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn empty_corpus() {
    let d = scratch("empty");
    let out = d.join("out.json");
    let o = lc(&["corpus", d.to_str().unwrap(), "--report", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(rep["entries"].as_array().unwrap().len(), 0);
    assert_eq!(rep["totals"]["programs"], 0);
}

#[test]
fn corpus_mismatch_exits_1() {
    let d = scratch("mismatch");
    fs::write(d.join("wrong.lc"), "-- EXPECT: accept\ndata T = K;\nassume x :1 T;\nK\n").unwrap();
    fs::write(d.join("right.lc"), "-- EXPECT: reject\ndata T = K;\nassume x :1 T;\nK\n").unwrap();
    let o = lc(&["corpus", d.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("MISMATCH"));
}

#[test]
fn trace_goes_to_stderr() {
    let o = Command::new(env!("CARGO_BIN_EXE_lc"))
        .args(["check", "corpus/f7.lc"])
        .current_dir(root())
        .env("LC_TRACE", "1")
        .output()
        .unwrap();
    assert_eq!(stdout(&o), "c\n");
    assert!(String::from_utf8_lossy(&o.stderr).contains("Var_1"));
}
