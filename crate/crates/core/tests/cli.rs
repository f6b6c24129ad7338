use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scnp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scnp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn problem(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("problems")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn reference_files_converge() {
    for name in ["scalar_example.json", "sfp_1d.json", "sfp_box.json"] {
        let out = scnp(&["run", "--problem", &problem(name)]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", stderr(&out));
        assert!(stdout(&out).contains("converged"));
    }
}

#[test]
fn sfp_1d_lands_on_the_nearest_solution() {
    let out = scnp(&["run", "--problem", &problem("sfp_1d.json")]);
    assert!(stdout(&out).contains("x = [5.000000000e-1]"), "{}", stdout(&out));
}

#[test]
fn budget_exhaustion_exits_2_with_full_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    let out = scnp(&[
        "run",
        "--problem",
        &problem("sfp_box.json"),
        "--max-iters",
        "10",
        "--trace",
        path(&trace),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("n,x,u,z,w,y,step_norm,split_residual,fix_residual,phi_x1,cond2_ratio")
    );
    let ns: Vec<usize> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(ns, (1..=10).collect::<Vec<_>>());
}

#[test]
fn tol_flag_overrides_the_file() {
    let out = scnp(&["run", "--problem", &problem("scalar_example.json"), "--tol", "1e-3"]);
    assert_eq!(out.status.code(), Some(0));
    let iters: usize = stdout(&out)
        .split("after ")
        .nth(1)
        .and_then(|s| s.split(' ').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(iters < 100, "{iters}");
}

#[test]
fn errors_exit_1_with_distinct_messages() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "{}").unwrap();
    let schema = scnp(&["run", "--problem", path(&empty)]);
    assert_eq!(schema.status.code(), Some(1));
    assert!(stderr(&schema).contains("schema error"), "{}", stderr(&schema));

    let missing = scnp(&["run", "--problem", path(&dir.path().join("nope.json"))]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).contains("cannot read"), "{}", stderr(&missing));

    // parses, but x1 lies outside C
    let bad = dir.path().join("bad.json");
    let text = std::fs::read_to_string(problem("sfp_1d.json")).unwrap();
    let x1 = text.find("\"x1\"").unwrap();
    let fixed = format!(
        "{}\"x1\": [7.0],{}",
        &text[..x1],
        text[x1..].split_once("],").unwrap().1
    );
    std::fs::write(&bad, fixed).unwrap();
    let invalid = scnp(&["run", "--problem", path(&bad)]);
    assert_eq!(invalid.status.code(), Some(1));
    assert!(!stderr(&invalid).contains("schema"), "{}", stderr(&invalid));

    let unknown = dir.path().join("unknown.json");
    std::fs::write(&unknown, text.replacen("\"gamma\"", "\"colour\": 1, \"gamma\"", 1)).unwrap();
    let out = scnp(&["run", "--problem", path(&unknown)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown field"), "{}", stderr(&out));
}

#[test]
fn traces_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let trace = dir.path().join(format!("{i}.csv"));
            let out = scnp(&["run", "--problem", &problem("sfp_box.json"), "--trace", path(&trace)]);
            assert_eq!(out.status.code(), Some(0));
            std::fs::read(trace).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn directory_mode_writes_one_trace_per_file() {
    let dir = tempfile::tempdir().unwrap();
    let traces: PathBuf = dir.path().join("traces");
    let problems = Path::new(env!("CARGO_MANIFEST_DIR")).join("problems");
    let out = scnp(&["run", "--problem", path(&problems), "--trace", path(&traces)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for stem in ["scalar_example", "sfp_1d", "sfp_box"] {
        let single = dir.path().join(format!("{stem}.csv"));
        scnp(&[
            "run",
            "--problem",
            &problem(&format!("{stem}.json")),
            "--trace",
            path(&single),
        ]);
        assert_eq!(
            std::fs::read(traces.join(format!("{stem}.csv"))).unwrap(),
            std::fs::read(single).unwrap(),
            "{stem}"
        );
    }
}

#[test]
fn directory_mode_reports_budget() {
    let out = scnp(&[
        "run",
        "--problem",
        path(&Path::new(env!("CARGO_MANIFEST_DIR")).join("problems")),
        "--max-iters",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_example_exit_codes() {
    let out = scnp(&["oracle-example"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("PASS"));

    let zero = scnp(&["oracle-example", "--x1", "0"]);
    assert_eq!(zero.status.code(), Some(0));
    assert!(stdout(&zero).contains("max deviation 0.000e0"), "{}", stdout(&zero));

    let half = scnp(&["oracle-example", "--x1", "0.5", "--steps", "100"]);
    assert_eq!(half.status.code(), Some(0));

    let outside = scnp(&["oracle-example", "--x1", "2"]);
    assert_eq!(outside.status.code(), Some(1));
}

#[test]
fn property_battery_is_deterministic_and_catches_a_bad_duality_map() {
    let a = scnp(&["check-properties", "--seed", "7", "--cases", "200"]);
    let b = scnp(&["check-properties", "--seed", "7", "--cases", "200"]);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);

    let faulty = scnp(&["check-properties", "--cases", "200", "--inject-fault"]);
    assert_eq!(faulty.status.code(), Some(1));
    let report = stdout(&faulty);
    let row = report.lines().find(|l| l.starts_with("three-point identity")).unwrap();
    assert!(row.ends_with("FAIL"), "{row}");
}
