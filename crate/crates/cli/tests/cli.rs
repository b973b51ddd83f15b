use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus").join(format!("{name}.tasm"))
}

fn txsym(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_txsym")).args(args).output().expect("binary runs")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn run_prints_conserved_stats() {
    let f = corpus("branch3");
    let o = txsym(&["run", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["mode"], "speculative");
    let native = v["blocks_native"].as_u64().unwrap();
    let interp = v["blocks_interpreted"].as_u64().unwrap();
    assert_eq!(native + interp, v["blocks_executed"].as_u64().unwrap());
    assert_eq!(v["paths"]["completed"], 3);
}

#[test]
fn explore_is_deterministic_across_workers() {
    let f = corpus("two_bytes_max");
    let a = txsym(&["explore", f.to_str().unwrap()]);
    let b = txsym(&["explore", "--workers", "3", "--search", "bfs", f.to_str().unwrap()]);
    let strip = |mut v: Value| {
        for p in v["paths"].as_array_mut().unwrap() {
            p.as_object_mut().unwrap().remove("stats");
        }
        v
    };
    let c = txsym(&["explore", "--search", "priority", f.to_str().unwrap()]);
    assert_eq!(strip(json(&a)), strip(json(&b)));
    assert_eq!(strip(json(&a)), strip(json(&c)));
}

#[test]
fn injected_abort_shows_in_retry_strides() {
    let f = corpus("copy_buffer");
    let o = txsym(&["run", "--inject-abort", "txn=1,block=3", f.to_str().unwrap()]);
    let v = json(&o);
    assert_eq!(v["txn_aborts"]["injected"], 1);
    let strides: Vec<u64> = v["retry_strides"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
    assert_eq!(&strides[..4], [8, 4, 2, 1]);
}

#[test]
fn assembly_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.tasm");
    std::fs::write(&f, "mov r1, 1\nfrob r2\n").unwrap();
    let o = txsym(&["asm-check", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains('2'));
}

#[test]
fn fork_cap_exits_3() {
    let f = corpus("branch3");
    let o = txsym(&["explore", "--max-forks", "1", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(json(&o)["partial"], true);
}

#[test]
fn concrete_only_rejects_symbolic_programs() {
    let f = corpus("branch3");
    let o = txsym(&["run", "--mode", "concrete-only", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn smt_dump_writes_queries_and_paths() {
    let dir = tempfile::tempdir().unwrap();
    let f = corpus("two_bytes_max");
    let o = txsym(&["explore", "--dump-smt2", dir.path().to_str().unwrap(), f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let names: Vec<String> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert!(names.iter().any(|n| n.starts_with("query-")));
    assert!(names.iter().any(|n| n.starts_with("path-")));
    for n in &names {
        let text = std::fs::read_to_string(dir.path().join(n)).unwrap();
        assert!(text.contains("(check-sat)"), "{n}");
    }
}
