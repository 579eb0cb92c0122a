mod common;

use ascert::cli::{run, EXIT_INVALID, EXIT_MAX_K, EXIT_MISMATCH, EXIT_OK};
use common::fixture;

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["ascert"];
    full.extend_from_slice(args);
    let code = run(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(name: &str) -> String {
    fixture(name).to_str().unwrap().to_string()
}

#[test]
fn certify_prints_summary_and_writes_partition() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.part");
    let (code, stdout, _) = cli(&["certify", &path("contrived.qp"), "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert!(stdout.starts_with("N_max=4 N_reg=6 t="), "{stdout}");
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("ascert-partition v1\nlabel contrived\n"));
    let (_, stdout, _) = cli(&["certify", &path("contrived.qp"), "--dual"]);
    assert!(stdout.starts_with("N_max=4 N_reg=5 "), "{stdout}");
}

#[test]
fn solve_variants() {
    let (code, out, _) = cli(&["solve", &path("loose.qp"), "--theta", "0.2"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("status=optimal iterations=1\n∅\n"), "{out}");
    let (_, out, _) = cli(&["solve", &path("lp_unbounded.qp"), "--theta", "0.9"]);
    assert!(out.starts_with("status=unbounded"), "{out}");
    let (_, out, _) = cli(&["solve", &path("contrived.qp"), "--theta", "0.5,0.5", "--dual"]);
    assert!(out.contains("primal_x=[2.536986, -1.031497, 4.929290]"), "{out}");
    let (code, _, err) = cli(&["solve", &path("contrived.qp"), "--theta", "0.5"]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("needs 2 values"));
}

#[test]
fn validate_every_fixture() {
    for name in ["contrived.qp", "double_integrator.qp", "loose.qp", "lp_unbounded.qp"] {
        let (code, out, err) = cli(&["validate", &path(name), "--samples", "500"]);
        assert_eq!(code, EXIT_OK, "{name}: {out}{err}");
        assert!(out.ends_with("PASS\n"));
    }
}

#[test]
fn validate_rejects_a_tampered_partition() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.part");
    cli(&["certify", &path("contrived.qp"), "--out", p.to_str().unwrap()]);
    let text = std::fs::read_to_string(&p).unwrap();
    // claim the single-iteration region takes two passes
    let bad = text.replacen("\nk 1\n", "\nk 2\n", 1);
    assert_ne!(bad, text);
    std::fs::write(&p, bad).unwrap();
    let (code, out, _) = cli(&["validate", &path("contrived.qp"), "--partition", p.to_str().unwrap()]);
    assert_eq!(code, EXIT_MISMATCH, "{out}");
    assert!(out.contains("FAIL"));
    // a partition of another problem is refused
    let (code, out, _) = cli(&["validate", &path("loose.qp"), "--partition", p.to_str().unwrap()]);
    assert_eq!(code, EXIT_MISMATCH);
    assert!(out.contains("hash mismatch"));
}

#[test]
fn iteration_cap_and_bad_input_exit_codes() {
    let (code, _, err) = cli(&["certify", &path("contrived.qp"), "--max-k", "2"]);
    assert_eq!(code, EXIT_MAX_K, "{err}");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.qp");
    std::fs::write(&bad, "dims 1 1 1\nmatrix H 1 1\nx\n").unwrap();
    let (code, _, err) = cli(&["certify", bad.to_str().unwrap()]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("line 3"), "{err}");
    let (code, _, _) = cli(&["frobnicate"]);
    assert_eq!(code, EXIT_INVALID);
}

#[test]
fn slice_raster() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.part");
    cli(&["certify", &path("contrived.qp"), "--out", p.to_str().unwrap()]);
    let p = p.to_str().unwrap();
    let (code, csv, _) = cli(&["slice", p]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "theta_1,theta_2,region_id,k");
    assert_eq!(lines.len(), 100 * 100 + 1);
    let mut kmax = 0;
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        assert_ne!(f[2], "0", "unassigned cell {l}");
        kmax = kmax.max(f[3].parse::<usize>().unwrap());
    }
    assert_eq!(kmax, 4);
    let (_, one, _) = cli(&["slice", p, "--grid", "1"]);
    assert_eq!(one.lines().count(), 2);
    let (code, _, err) = cli(&["slice", p, "--fix", "0.1,0.2,0.3"]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("--fix needs 2 values"));
}

#[test]
fn slice_ties_go_to_the_lowest_region() {
    let pf = common::load("loose.qp");
    let part = ascert::cert::certify(&pf.mp, &pf.w0, &pf.start, &Default::default()).unwrap();
    let mut doubled = part.clone();
    doubled.regions.push(part.regions[0].clone());
    let rows = ascert::cli::slice_rows(&doubled, (0, 0), &nalgebra::DVector::zeros(1), [-1.0, 1.0, -1.0, 1.0], 4);
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r.2 == 1));
}

#[test]
fn report_table() {
    let (code, out, _) = cli(&["report"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().count(), 1);
    assert!(out.starts_with("label"));
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.part"), dir.path().join("b.part"));
    cli(&["certify", &path("contrived.qp"), "--out", a.to_str().unwrap()]);
    cli(&["certify", &path("contrived.qp"), "--dual", "--out", b.to_str().unwrap()]);
    let (_, out, _) = cli(&["report", a.to_str().unwrap(), b.to_str().unwrap()]);
    let rows: Vec<Vec<&str>> = out.lines().skip(1).map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(rows[0][..6], ["contrived", "2", "3", "3", "4", "6"]);
    assert_eq!(rows[1][..6], ["contrived-dual", "2", "3", "3", "4", "5"]);
    let flops: u64 = rows[0][6].parse().unwrap();
    assert!(flops > 0);
}
