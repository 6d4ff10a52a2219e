use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus(rel: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(rel)
        .display()
        .to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ifcp4"))
        .args(args)
        .env("IFCP4_COLOR", "0")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn congestion(prog: &str, extra: &[&str]) -> Output {
    let p = corpus(&format!("congestion/{prog}"));
    let (i, o, c) = (
        corpus("congestion/in.pol"),
        corpus("congestion/out.pol"),
        corpus("congestion/tables.ctr"),
    );
    let mut args = vec!["check", "-p", &p, "-i", &i, "-o", &o, "-c", &c];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn correct_program_is_secure() {
    let o = congestion("congestion.mp4", &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).trim_end().ends_with("SECURE"));
}

#[test]
fn buggy_program_names_the_leaking_field() {
    let o = congestion("congestion_buggy.mp4", &[]);
    assert_eq!(o.status.code(), Some(1));
    let s = stdout(&o);
    assert!(s.contains("hdr.ipv4.ecn"), "{s}");
    assert!(s.trim_end().ends_with("INSECURE"));
}

#[test]
fn json_lines_end_with_the_verdict() {
    let o = congestion("congestion_covert.mp4", &["--format", "json-lines"]);
    assert_eq!(o.status.code(), Some(1));
    let lines: Vec<serde_json::Value> = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.last().unwrap()["verdict"], "INSECURE");
    assert!(lines.iter().any(|l| l["witness"]["lval"] == "hdr.ipv4.ttl"));
}

#[test]
fn missing_contract_file_is_a_usage_error() {
    let p = corpus("congestion/congestion.mp4");
    let (i, o) = (corpus("congestion/in.pol"), corpus("congestion/out.pol"));
    let out = run(&[
        "check",
        "-p",
        &p,
        "-i",
        &i,
        "-o",
        &o,
        "-c",
        "/nonexistent/tables.ctr",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/tables.ctr"));
}

#[test]
fn missing_contracts_for_used_tables_are_rejected() {
    let p = corpus("congestion/congestion.mp4");
    let (i, o) = (corpus("congestion/in.pol"), corpus("congestion/out.pol"));
    let out = run(&["check", "-p", &p, "-i", &i, "-o", &o]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn emitted_state_types_are_byte_stable() {
    let a = congestion("congestion.mp4", &["--emit-gammas", "--jobs", "1"]);
    let b = congestion("congestion.mp4", &["--emit-gammas", "--jobs", "4"]);
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("hdr.ipv4.ecn ↦"));
}

#[test]
fn gamma_limit_is_an_error() {
    let o = congestion("congestion.mp4", &["--max-gammas", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_counterexample_replays_through_interp() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("cx");
    let p = corpus("policydistinguish/offset.mp4");
    let (i, o) = (
        corpus("policydistinguish/in.pol"),
        corpus("policydistinguish/out.pol"),
    );
    let out = run(&[
        "oracle",
        "-p",
        &p,
        "-i",
        &i,
        "-o",
        &o,
        "--max-bits",
        "20",
        "--write",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let finals: Vec<String> = ["first", "second"]
        .iter()
        .map(|side| {
            let state = dir.path().join(format!("cx.{side}.state"));
            let r = run(&[
                "interp",
                "-p",
                &p,
                "--state",
                state.to_str().unwrap(),
                "--env",
                side,
            ]);
            assert_eq!(r.status.code(), Some(0));
            stdout(&r)
        })
        .collect();
    assert!(finals[0].contains("b = 1025"), "{}", finals[0]);
    assert!(finals[1].contains("b = 1026"), "{}", finals[1]);
}

#[test]
fn oracle_accepts_the_plain_copy() {
    let p = corpus("policydistinguish/copy.mp4");
    let (i, o) = (
        corpus("policydistinguish/in.pol"),
        corpus("policydistinguish/out.pol"),
    );
    assert_eq!(
        run(&["oracle", "-p", &p, "-i", &i, "-o", &o, "--max-bits", "20"])
            .status
            .code(),
        Some(0)
    );
}

#[test]
fn oracle_rejects_an_oversized_budget() {
    let p = corpus("policydistinguish/copy.mp4");
    let (i, o) = (
        corpus("policydistinguish/in.pol"),
        corpus("policydistinguish/out.pol"),
    );
    assert_eq!(
        run(&["oracle", "-p", &p, "-i", &i, "-o", &o, "--max-bits", "40"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn fuzz_is_deterministic_and_sound() {
    let a = run(&["fuzz", "--programs", "40", "--seed", "9", "--jobs", "1"]);
    let b = run(&["fuzz", "--programs", "40", "--seed", "9", "--jobs", "3"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("soundness violations: 0"));
}

#[test]
fn fmt_is_a_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    for prog in [
        "congestion/congestion.mp4",
        "table_example/table.mp4",
        "policydistinguish/guarded.mp4",
    ] {
        let once = run(&["fmt", "-p", &corpus(prog)]);
        assert_eq!(once.status.code(), Some(0));
        let f = dir.path().join("p.mp4");
        std::fs::write(&f, &once.stdout).unwrap();
        let twice = run(&["fmt", "-p", f.to_str().unwrap()]);
        assert_eq!(once.stdout, twice.stdout, "{prog}");
    }
}

#[test]
fn unknown_subcommand_exits_two() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
