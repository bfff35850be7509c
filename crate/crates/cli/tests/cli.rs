use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use divsel::{parse_instance, FractionalSolution};

fn divsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_divsel")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn gen_writes_one_file_per_member() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(divsel(&["gen", "--family", "fhc", "--d", "4", "--out", out])
        .status
        .success());
    assert!(divsel(&["gen", "--family", "fcs", "--d", "27", "--out", out])
        .status
        .success());
    let o = divsel(&[
        "gen", "--family", "random", "--d", "6", "--n", "3", "--a", "2", "--count", "2", "--out", out,
    ]);
    assert!(o.status.success());
    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let expected = [
        "fcs_d27_m1",
        "fcs_d27_m2",
        "fcs_d27_m3",
        "fhc_d4_m1",
        "fhc_d4_m2",
        "fhc_d4_m3",
        "fhc_d4_m4",
        "random_d6_m1",
        "random_d6_m2",
    ];
    assert_eq!(names, expected.map(|s| format!("{s}.json")));
    let inst = parse_instance(&fs::read_to_string(dir.path().join("random_d6_m2.json")).unwrap()).unwrap();
    assert_eq!((inst.d(), inst.n(), inst.capacity()), (6, 3, 6));
}

#[test]
fn run_reports_and_emits_x() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    divsel(&["gen", "--family", "fcs", "--d", "27", "--out", out]);
    let inst_path = dir.path().join("fcs_d27_m1.json");
    let x_path = dir.path().join("x.json");
    let o = divsel(&[
        "run",
        "--instance",
        inst_path.to_str().unwrap(),
        "--policy",
        "fixed",
        "--emit-x",
        x_path.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("instance,policy,LU,OPT,ratio,degenerate,feasible"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..2], &["fcs_d27_m1", "fixed"]);
    // Guaranteed ratio at d = 27: 1 / (4 sqrt(27) ceil(log2 27)).
    assert!(row[4].parse::<f64>().unwrap() >= 1.0 / (4.0 * 27f64.sqrt() * 5.0));
    assert_eq!(row[6], "true");

    let inst = parse_instance(&fs::read_to_string(&inst_path).unwrap()).unwrap();
    let x = FractionalSolution::from_json(&fs::read_to_string(&x_path).unwrap()).unwrap();
    x.check_shape(&inst).unwrap();
    let (lu, _) = divsel::least_utility(&inst, &x).unwrap();
    assert_eq!(divsel::math::fmt_sig(lu), row[2]);

    let o = divsel(&[
        "run",
        "--format",
        "json",
        "--instance",
        inst_path.to_str().unwrap(),
        "--policy",
        "uc-hybrid",
        "--topup",
    ]);
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["policy"], "uc-hybrid");
    assert_eq!(doc["utilities"].as_array().unwrap().len(), 27);
}

#[test]
fn offline_reports_bounds_and_grid() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "tiny.json",
        r#"{"d":2,"c":[1,1],"K":1,"rounds":[[[0],[1],[0,1]]]}"#,
    );
    let o = divsel(&["offline", "--format", "json", "--instance", &p, "--grid", "50"]);
    assert!(o.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["OPT"], 1);
    assert_eq!(doc["grid"], 1);
    assert_eq!(doc["x"][0][2], 1);
}

#[test]
fn verify_and_report_on_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    divsel(&[
        "gen", "--family", "random", "--d", "5", "--n", "4", "--count", "2", "--out", out,
    ]);
    let o = divsel(&["verify", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("instance,check,status,lhs,rhs,slack\n"));
    assert!(!stdout(&o).contains(",fail,"));

    let o = divsel(&["report", out, "--policies", "fixed,uc-myopic"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(
        rows[0],
        "instance,d,n,K,a,policy,LU,OPT,ratio,bound_name,bound_value,satisfied"
    );
    let keys: Vec<String> = rows[1..]
        .iter()
        .map(|r| r.split(',').take(6).skip(5).collect::<String>())
        .collect();
    assert_eq!(keys, ["fixed", "uc-myopic", "fixed", "uc-myopic"]);
    assert!(rows[1].starts_with("random_d5_m1,") && rows[3].starts_with("random_d5_m2,"));
}

#[test]
fn monte_carlo_overfull_solution_fails() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(
        dir.path(),
        "i.json",
        r#"{"d":1,"c":[1],"K":1,"a":1,"rounds":[[[0],[0],[0]]]}"#,
    );
    let x = write(dir.path(), "x.json", "[[1,1,1]]");
    let o = divsel(&["mc", "--instance", &inst, "--x", &x, "--trials", "10"]);
    assert_eq!(o.status.code(), Some(2));
    let o = divsel(&["mc", "--instance", &inst, "--trials", "1000"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn contract_and_input_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let no_a = write(
        dir.path(),
        "no_a.json",
        r#"{"d":1,"c":[1],"K":2,"rounds":[[[0]],[[0]]]}"#,
    );
    assert_eq!(
        divsel(&["run", "--instance", &no_a, "--policy", "uc-hybrid"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        divsel(&["run", "--instance", &no_a, "--policy", "fixed"]).status.code(),
        Some(0)
    );
    assert_eq!(
        divsel(&["run", "--instance", &no_a, "--policy", "greedy"])
            .status
            .code(),
        Some(3)
    );
    let missing = dir.path().join("missing.json");
    assert_eq!(
        divsel(&["run", "--instance", missing.to_str().unwrap(), "--policy", "fixed"])
            .status
            .code(),
        Some(3)
    );
    let bad = write(dir.path(), "bad.json", r#"{"d":1,"c":[2],"K":1,"rounds":[]}"#);
    let o = divsel(&["offline", "--instance", &bad]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("min c must equal 1"));
}

#[test]
fn report_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    divsel(&["gen", "--family", "fhc", "--d", "8", "--out", out]);
    divsel(&[
        "gen", "--family", "random", "--d", "8", "--seed", "3", "--count", "2", "--out", out,
    ]);
    let a = divsel(&["report", out, "--seed", "17", "--format", "json"]);
    let b = divsel(&["report", out, "--seed", "17", "--format", "json", "--jobs", "2"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}
