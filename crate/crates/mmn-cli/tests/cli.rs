//! End-to-end runs of the `mmn` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn mmn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmn")).args(args).env_remove("MMN_THREADS").output().expect("binary runs")
}

fn data(name: &str) -> String {
    format!("{}/../../data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn nums(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn write_params(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const TABLE3_ROW1: &str = r#"{"xi":[0,0],"Omega":[[1,1],[1,2.5]],"delta":[0.75,0.985],"model":"mmne"}"#;
const TABLE2: &str = r#"{"xi":[5,10,15],"Omega":[[0.4,0,0],[0,0.6,0],[0,0,1.0]],"delta":[0.3,0.7,0.4],"model":"mmne"}"#;

#[test]
fn fit_ais_reproduces_published_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit.json");
    let o = mmn(&["fit", "--input", &data("ais_female.csv"), "--columns", "BMI,SSF,Bfat", "--model", "mmne", "--tol", "1e-12", "--max-iter", "20000", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out);
    for (got, want) in nums(&v["xi"]).iter().zip([20.1099, 56.1969, 13.6666]) {
        assert!((got - want).abs() < 0.02, "xi {got} vs {want}");
    }
    for (got, want) in nums(&v["delta"]).iter().zip([0.6963, 0.8747, 0.7471]) {
        assert!((got - want).abs() < 0.02, "delta {got} vs {want}");
    }
    assert!(v["converged"].as_bool().unwrap());
    assert!(dir.path().join("fit.json.run.json").exists());
}

#[test]
fn fit_olive_loglik() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit.json");
    let o = mmn(&["fit", "--input", &data("olive_south.csv"), "--columns", "Linolenic,Arachidic", "--tol", "1e-12", "--max-iter", "20000", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out);
    for (got, want) in nums(&v["xi"]).iter().zip([36.8344, 55.3462]) {
        assert!((got - want).abs() < 0.02, "xi {got} vs {want}");
    }
    assert!((v["loglik"].as_f64().unwrap() + 2314.604).abs() < 0.01);
}

#[test]
fn fit_rejects_too_few_rows() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("small.csv");
    std::fs::write(&input, "a,b,c\n1,2,3\n4,5,6\n7,8,9.5\n").unwrap();
    let o = mmn(&["fit", "--input", s(&input), "--out", s(&dir.path().join("x.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("insufficient observations"));
}

#[test]
fn fit_rejects_non_numeric_cells() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "a,b\n1,2\n3,x\n").unwrap();
    let o = mmn(&["fit", "--input", s(&input), "--out", s(&dir.path().join("x.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sample_is_deterministic_and_round_trips_through_fit() {
    let dir = tempfile::tempdir().unwrap();
    let params = write_params(dir.path(), "p.json", TABLE2);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = mmn(&["sample", "--params", s(&params), "--n", "500", "--seed", "42", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("y1,y2,y3\n"));
    // every written value parses back to the same f64 text
    for line in text.lines().skip(1) {
        for cell in line.split(',') {
            let v: f64 = cell.parse().unwrap();
            assert_eq!(v.to_string(), cell);
        }
    }
    let fit = dir.path().join("fit.json");
    let o = mmn(&["fit", "--input", s(&a), "--out", s(&fit)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sample_of_size_zero_has_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let params = write_params(dir.path(), "p.json", TABLE3_ROW1);
    let out = dir.path().join("z.csv");
    let o = mmn(&["sample", "--params", s(&params), "--n", "0", "--seed", "1", "--out", s(&out)]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "y1,y2\n");
}

#[test]
fn sample_rejects_invalid_params() {
    let dir = tempfile::tempdir().unwrap();
    let params = write_params(dir.path(), "p.json", r#"{"xi":[0,0],"Omega":[[1,0],[0,1]],"delta":[0.9,0.9],"model":"mmne"}"#);
    let o = mmn(&["sample", "--params", s(&params), "--n", "5", "--seed", "1", "--out", s(&dir.path().join("o.csv"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn skewness_of_table3_row() {
    let dir = tempfile::tempdir().unwrap();
    let params = write_params(dir.path(), "p.json", TABLE3_ROW1);
    let out = dir.path().join("skew.json");
    let o = mmn(&["skewness", "--params", s(&params), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out);
    let close = |a: f64, b: f64| (a - b).abs() <= 0.005;
    assert!(close(v["mardia"].as_f64().unwrap(), 3.966));
    assert!(close(v["srivastava"].as_f64().unwrap(), 1.975));
    assert!(close(v["bbq_qstar"].as_f64().unwrap(), 0.558));
    assert!(close(v["isogai_si"].as_f64().unwrap(), 0.788));
    let k = nums(&v["kollo"]);
    assert!(close(k[0], 1.448) && close(k[1], 3.179));
    for key in ["malkovich_afifi", "mori", "bbq_t", "isogai_sc", "scalarized"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn skewness_of_symmetric_params_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let params = write_params(dir.path(), "p.json", r#"{"xi":[1,2],"Omega":[[1,-1],[-1,2.5]],"delta":[0,0],"model":"mmne"}"#);
    let out = dir.path().join("skew.json");
    assert!(mmn(&["skewness", "--params", s(&params), "--out", s(&out)]).status.success());
    let v = json(&out);
    for key in ["mardia", "srivastava", "bbq_qstar", "isogai_si"] {
        assert!(v[key].as_f64().unwrap().abs() < 1e-12, "{key}");
    }
    for key in ["mori", "kollo", "bbq_t", "isogai_sc"] {
        assert!(nums(&v[key]).iter().all(|x| x.abs() < 1e-12), "{key}");
    }
}

#[test]
fn skewness_sample_mode_and_density_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("skew.json");
    let grid = dir.path().join("grid.csv");
    let o = mmn(&[
        "skewness", "--input", &data("olive_south.csv"), "--model", "mmne", "--out", s(&out), "--density-grid", s(&grid), "--grid-size", "11",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(json(&out)["mardia"].as_f64().unwrap() > 0.0);
    let text = std::fs::read_to_string(&grid).unwrap();
    assert_eq!(text.lines().count(), 1 + 121);
    assert!(text.starts_with("y1,y2,density\n"));
}

#[test]
fn critical_values_and_power_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let crit = |csv: &str, json: &str, threads: &str| {
        mmn(&[
            "critical-values", "--dim", "2", "--n", "60", "--replicates", "120", "--seed", "9", "--threads", threads,
            "--out-csv", s(&p.join(csv)), "--out-json", s(&p.join(json)),
        ])
    };
    assert!(crit("c1.csv", "c1.json", "1").status.success());
    assert!(crit("c2.csv", "c2.json", "4").status.success());
    let c1 = std::fs::read(p.join("c1.csv")).unwrap();
    assert_eq!(c1, std::fs::read(p.join("c2.csv")).unwrap());
    let text = String::from_utf8(c1).unwrap();
    assert_eq!(text.lines().count(), 13);
    assert!(text.starts_with("statistic,lower,upper,upper_one_sided\n"));

    let alt = write_params(p, "alt.json", r#"{"xi":[0,0],"Omega":[[1,0],[0,2.5]],"delta":[0.5,0.5],"model":"mmne"}"#);
    let o = mmn(&[
        "power", "--params", s(&alt), "--table", s(&p.join("c1.json")), "--replicates", "100", "--seed", "3",
        "--out-csv", s(&p.join("pow.csv")), "--out-json", s(&p.join("pow.json")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(p.join("pow.csv")).unwrap().lines().count(), 13);
}

#[test]
fn replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let params = write_params(dir.path(), "p.json", TABLE2);
    let out = dir.path().join("s.csv");
    assert!(mmn(&["sample", "--params", s(&params), "--n", "50", "--seed", "5", "--out", s(&out)]).status.success());
    let first = std::fs::read(&out).unwrap();
    std::fs::remove_file(&out).unwrap();
    let record = dir.path().join("s.csv.run.json");
    let rec = json(&record);
    assert_eq!(rec["command"], "sample");
    assert_eq!(rec["seed"], 5);
    assert!(mmn(&["replay", s(&record)]).status.success());
    assert_eq!(first, std::fs::read(&out).unwrap());
}

#[test]
fn threads_env_must_be_a_positive_integer() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mmn"))
        .args(["critical-values", "--dim", "2", "--replicates", "100", "--seed", "1", "--threads", "2"])
        .args(["--out-csv", s(&dir.path().join("c.csv")), "--out-json", s(&dir.path().join("c.json"))])
        .env("MMN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
