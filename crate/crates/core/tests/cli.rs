use std::path::Path;

use gdsq_core::cli::{
    main_with_args, BadPReport, ClassifyReport, Envelope, EvalReport, EXIT_FAIL, EXIT_PASS, EXIT_USAGE,
};
use gdsq_core::composition::RankReport;
use gdsq_core::GdsMap;

const PLANAR: &str = r#"{"A":[[1,2],[-1.5,0.5]],"p":[[-1.1388171154203426,1.2208141309863885],[0.7908845402558222,-1.347861809079006]]}"#;

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["gdsq"];
    full.extend_from_slice(args);
    main_with_args(full)
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> Envelope<T> {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn eval_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eval.json");
    let code = run(&["eval", "--map", PLANAR, "--x", "0.5,-2", "--json", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_PASS);
    let env: Envelope<EvalReport> = read(&out);
    assert_eq!(env.command, "eval");
    assert_eq!(env.exit_code, EXIT_PASS);
    let g = GdsMap::from_rows(
        vec![vec![1.0, 2.0], vec![-1.5, 0.5]],
        vec![
            vec![-1.1388171154203426, 1.2208141309863885],
            vec![0.7908845402558222, -1.347861809079006],
        ],
    )
    .unwrap();
    // floats are written with 17 significant digits, so the round trip is exact
    assert_eq!(env.report.value, g.eval(&[0.5, -2.0]).unwrap());
}

#[test]
fn singular_set_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let json = dir.path().join(format!("s{k}.json"));
        let csv = dir.path().join(format!("s{k}.csv"));
        let svg = dir.path().join(format!("plots/s{k}.svg"));
        let code = run(&[
            "singular-set",
            "--map",
            PLANAR,
            "--json",
            json.to_str().unwrap(),
            "--csv",
            csv.to_str().unwrap(),
            "--svg",
            svg.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_PASS);
        outputs.push([json, csv, svg].map(|p| std::fs::read(p).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = String::from_utf8(outputs[0][1].clone()).unwrap();
    assert!(csv.starts_with("x1,x2,class\n"));
    assert!(csv.contains(",cusp\n"));
}

#[test]
fn classify_projects_onto_the_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    let code = run(&["classify", "--map", PLANAR, "--x", "0.3,0.2", "--json", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_PASS);
    let env: Envelope<ClassifyReport> = read(&out);
    assert!(env.report.determinant.abs() < 1e-8);
}

#[test]
fn rank_drop_exits_with_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("imm.json");
    let code = run(&[
        "check-immersion",
        "--map",
        PLANAR,
        "--manifold",
        "cusp",
        "--json",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_FAIL);
    let env: Envelope<RankReport> = read(&out);
    assert_eq!(env.status, "rank-drop");
    assert_eq!(env.manifold.as_deref(), Some("cusp"));
}

#[test]
fn bad_p_confirms_the_defect() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad.json");
    let code = run(&[
        "bad-p",
        "--theorem",
        "immersion",
        "--manifold",
        "trefoil",
        "--seed",
        "3",
        "--json",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_PASS);
    let env: Envelope<BadPReport> = read(&out);
    assert!(env.report.confirmed && env.report.defect_expected);
}

#[test]
fn config_file_drives_the_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("out.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"map": {PLANAR}, "options": {{"x": [1.0, 2.0]}}, "outputs": {{"json": "{}"}}}}"#,
            out.display()
        ),
    )
    .unwrap();
    assert_eq!(run(&["eval", "--config", cfg.to_str().unwrap()]), EXIT_PASS);
    let env: Envelope<EvalReport> = read(&out);
    assert_eq!(env.report.x, vec![1.0, 2.0]);
}

#[test]
fn configuration_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"map": {"A": [[1, 0]], "p": [[0, 0]]}}"#).unwrap();
    assert_eq!(run(&["eval", "--config", cfg.to_str().unwrap(), "--x", "1,1"]), EXIT_USAGE);
    std::fs::write(&cfg, r#"{"options": {"sed": 3}}"#).unwrap();
    assert_eq!(run(&["eval", "--config", cfg.to_str().unwrap()]), EXIT_USAGE);
    assert_eq!(run(&["eval", "--config", "/nonexistent/cfg.json"]), EXIT_USAGE);
    assert_eq!(run(&["eval", "--x", "1,1"]), EXIT_USAGE);
    assert_eq!(run(&["eval", "--map", "{not json", "--x", "1,1"]), EXIT_USAGE);
    assert_eq!(run(&["check-immersion", "--map", PLANAR, "--manifold", "klein"]), EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(run(&["--help"]), EXIT_PASS);
}

#[test]
fn hypothesis_violation_is_refused() {
    // the torus in R^4 is too low-dimensional for the injectivity statement
    let code = run(&["mc", "--theorem", "injectivity", "--manifold", "torus", "--trials", "2"]);
    assert_eq!(code, EXIT_USAGE);
}
