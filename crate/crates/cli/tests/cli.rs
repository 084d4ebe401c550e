//! End-to-end tests of the `ptalign` binary over the shipped fixtures.

use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.pop();
    p.pop();
    p.push("fixtures");
    p.push(name);
    p.to_str().unwrap().to_string()
}

fn ptalign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptalign"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(args: &[&str]) -> String {
    let out = ptalign(args);
    assert!(
        out.status.success(),
        "command failed: {:?}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn unfold_with_threshold_keeps_five_traces() {
    let csv = stdout_of(&[
        "unfold",
        "--model",
        &fixture("example.tg"),
        "--rho",
        "0.06",
        "--nmax",
        "4",
    ]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "trace,probability");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("a,"));
    assert!(lines[5].starts_with("c b,"));
}

#[test]
fn pnml_and_tg_fixtures_unfold_identically() {
    let from_tg = stdout_of(&[
        "unfold",
        "--model",
        &fixture("example.tg"),
        "--rho",
        "0",
        "--nmax",
        "4",
    ]);
    let from_pnml = stdout_of(&[
        "unfold",
        "--model",
        &fixture("loopnet.pnml"),
        "--rho",
        "0",
        "--nmax",
        "4",
    ]);
    assert_eq!(from_tg, from_pnml);
}

#[test]
fn constant_estimator_changes_the_distribution() {
    let csv = stdout_of(&[
        "unfold",
        "--model",
        &fixture("loopnet.pnml"),
        "--estimator",
        "constant",
        "--rho",
        "0",
        "--nmax",
        "2",
    ]);
    // equiprobable branches: a = 0.25, cb = 0.25, aa = 0.125, ca = 0.125
    let mut rows: Vec<&str> = csv.lines().skip(1).collect();
    rows.sort();
    assert_eq!(
        rows,
        vec![
            "a a,1.2500000000000000e-1",
            "a,2.5000000000000000e-1",
            "c a,1.2500000000000000e-1",
            "c b,2.5000000000000000e-1",
        ]
    );
}

#[test]
fn optimal_alignment_reproduces_the_published_order() {
    let csv = stdout_of(&[
        "align",
        "--model",
        &fixture("example.tg"),
        "--strategy",
        "optimal",
        "--trace",
        "c a b a",
        "--rho",
        "0",
        "--nmax",
        "4",
        "--k",
        "8",
    ]);
    let traces: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(
        traces,
        vec!["a", "a a", "a a a", "c a", "c b", "a a a a", "c a a", "c a a a"]
    );
}

#[test]
fn approximate_alignment_by_kernel_top_three() {
    let csv = stdout_of(&[
        "align",
        "--model",
        &fixture("example.tg"),
        "--strategy",
        "approx",
        "--by-kernel",
        "--trace",
        "c a b a",
        "--rho",
        "0",
        "--nmax",
        "4",
        "--k",
        "3",
    ]);
    let traces: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(traces, vec!["a", "c a", "c b"]);
}

#[test]
fn log_alignment_prefixes_the_query_column() {
    let csv = stdout_of(&[
        "align",
        "--model",
        &fixture("example.tg"),
        "--strategy",
        "optimal",
        "--log",
        &fixture("sample.log"),
        "--rho",
        "0",
        "--nmax",
        "4",
        "--k",
        "2",
    ]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "query,rank,trace,probability,distance,similarity,score"
    );
    // 8 log traces, two rows each
    assert_eq!(lines.len(), 17);
    assert!(lines[1].starts_with("c a b a,1,"));
}

#[test]
fn alignment_emits_valid_json() {
    let text = stdout_of(&[
        "align",
        "--model",
        &fixture("example.tg"),
        "--strategy",
        "optimal",
        "--trace",
        "c a b a",
        "--rho",
        "0",
        "--nmax",
        "4",
        "--json",
    ]);
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    let entries = parsed[0]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 8);
    assert_eq!(entries[0]["trace"][0], "a");
    assert_eq!(entries[0]["rank"], 1);
}

#[test]
fn embedding_table_layout() {
    let csv = stdout_of(&[
        "embed",
        "--model",
        &fixture("example.tg"),
        "--trace",
        "c a b a",
        "--rho",
        "0",
        "--nmax",
        "4",
    ]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "trace,a,b,c,a:a,a:b,a:c,b:a,b:b,b:c,c:a,c:b,c:c"
    );
    // 8 model traces plus the query row
    assert_eq!(lines.len(), 10);
    assert!(lines[9].starts_with("c a b a,"));
}

#[test]
fn bench_against_itself_correlates_perfectly() {
    let csv = stdout_of(&[
        "bench",
        "--model",
        &fixture("example.tg"),
        "--log",
        &fixture("sample.log"),
        "--strategies",
        "optimal,optimal",
        "--indexes",
        "kd",
        "--rho",
        "0",
        "--nmax",
        "4",
        "--k",
        "5",
    ]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "length,strategy,index,queries,mean_total_s,mean_stage_s,mean_search_s,mean_spearman_vs_first"
    );
    assert!(lines.len() > 1);
    for row in &lines[1..] {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[1], "optimal");
        assert_eq!(fields[2], "kd");
        let rho: f64 = fields[7].parse().unwrap();
        assert_eq!(rho, 1.0, "row {row}");
        let total: f64 = fields[4].parse().unwrap();
        let search: f64 = fields[6].parse().unwrap();
        assert!(total >= search, "accounting violated in {row}");
    }
}

#[test]
fn bench_runs_both_strategies_over_both_indexes() {
    let csv = stdout_of(&[
        "bench",
        "--model",
        &fixture("example.tg"),
        "--log",
        &fixture("sample.log"),
        "--rho",
        "0",
        "--nmax",
        "4",
        "--k",
        "5",
    ]);
    let mut combos: Vec<(String, String)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[2].to_string())
        })
        .collect();
    combos.sort();
    combos.dedup();
    assert_eq!(
        combos,
        vec![
            ("approx".into(), "kd".into()),
            ("approx".into(), "vp".into()),
            ("optimal".into(), "kd".into()),
            ("optimal".into(), "vp".into()),
        ]
    );
}

#[test]
fn identical_invocations_are_byte_identical() {
    let args = [
        "align",
        "--model",
        &fixture("example.tg") as &str,
        "--strategy",
        "approx",
        "--trace",
        "c a b a",
        "--rho",
        "0",
        "--nmax",
        "4",
    ];
    assert_eq!(stdout_of(&args), stdout_of(&args));
    let args = [
        "unfold",
        "--model",
        &fixture("loopnet.pnml") as &str,
        "--rho",
        "0",
        "--nmax",
        "6",
    ];
    assert_eq!(stdout_of(&args), stdout_of(&args));
}

#[test]
fn out_flag_writes_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("unfolded.csv");
    let out = ptalign(&[
        "unfold",
        "--model",
        &fixture("example.tg"),
        "--rho",
        "0.06",
        "--nmax",
        "4",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let written = std::fs::read_to_string(&path).unwrap();
    assert_eq!(written.lines().count(), 6);
}

#[test]
fn exit_codes_follow_the_contract() {
    // 1: usage error
    let out = ptalign(&["align", "--model", &fixture("example.tg")]);
    assert_eq!(out.status.code(), Some(1));
    // 1: empty query
    let out = ptalign(&[
        "align",
        "--model",
        &fixture("example.tg"),
        "--strategy",
        "optimal",
        "--trace",
        "   ",
    ]);
    assert_eq!(out.status.code(), Some(1));
    // 2: parse error (bad row sum)
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tg");
    std::fs::write(&bad, "start s\nend t\ns tau\nm a\nt tau\ns m 0.9\nm t 1.0\n").unwrap();
    let out = ptalign(&["unfold", "--model", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    // 2: missing file
    let out = ptalign(&["unfold", "--model", "/nonexistent/net.pnml"]);
    assert_eq!(out.status.code(), Some(2));
    // 3: unsafe net
    let unsafe_net = dir.path().join("unsafe.pnml");
    std::fs::write(
        &unsafe_net,
        r#"<pnml><net><page>
            <place id="r1"/><place id="r2"/><place id="r3"/>
            <transition id="dup"><name><text>dup</text></name></transition>
            <transition id="drain"><name><text>drain</text></name></transition>
            <arc id="a1" source="r1" target="dup"/>
            <arc id="a2" source="dup" target="r2"/>
            <arc id="a3" source="dup" target="r2"/>
            <arc id="a4" source="r2" target="drain"/>
            <arc id="a5" source="drain" target="r3"/>
        </page></net></pnml>"#,
    )
    .unwrap();
    let out = ptalign(&["unfold", "--model", unsafe_net.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("not safe"), "stderr: {err}");
    // 0: help
    let out = ptalign(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn allow_unsafe_lifts_only_the_boundedness_check() {
    let dir = tempfile::tempdir().unwrap();
    let bounded = dir.path().join("two_bounded.pnml");
    std::fs::write(
        &bounded,
        r#"<pnml><net><page>
            <place id="p1"/><place id="q"/><place id="p3"/>
            <transition id="t1"><name><text>a</text></name></transition>
            <transition id="t2"><name><text>b</text></name></transition>
            <arc id="a1" source="p1" target="t1"/>
            <arc id="a2" source="t1" target="q"/>
            <arc id="a3" source="t1" target="q"/>
            <arc id="a4" source="q" target="t2"/>
            <arc id="a5" source="q" target="t2"/>
            <arc id="a6" source="t2" target="p3"/>
        </page></net></pnml>"#,
    )
    .unwrap();
    let out = ptalign(&["unfold", "--model", bounded.to_str().unwrap(), "--rho", "0"]);
    assert_eq!(out.status.code(), Some(3));
    let out = ptalign(&[
        "unfold",
        "--model",
        bounded.to_str().unwrap(),
        "--rho",
        "0",
        "--allow-unsafe",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().nth(1), Some("a b,1.0000000000000000e0"));
}

#[test]
fn shipped_fixture_matches_the_library_graph() {
    let text = std::fs::read_to_string(fixture("example.tg")).unwrap();
    let parsed = ptalign_core::io::parse_tg(&text).unwrap();
    let builtin = ptalign_core::tg::example_fixture_tg();
    assert_eq!(parsed.names(), builtin.names());
    assert_eq!(parsed.labels(), builtin.labels());
    let a: Vec<_> = parsed.edges().collect();
    let b: Vec<_> = builtin.edges().collect();
    assert_eq!(a, b);
}
