use std::path::Path;
use std::process::{Command, Output};

use rankdep::aggregate::{compute_raw, StatisticId};
use rankdep::ranks::{compute_ranks, TiePolicy};
use rankdep::simgen::{gen_dataset, Family, ScatterShape, SimScenario};

fn rankdep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rankdep")).args(args).env_remove("RANKDEP_SEED").output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-15 * b.abs().max(1e-300)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn monotone_csv(n: usize) -> String {
    let mut s = String::from("a,b\n");
    for i in 0..n {
        s += &format!("{},{}\n", i as f64 * 0.5, (i as f64).exp());
    }
    s
}

#[test]
fn monotone_columns_reject() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "mono.csv", &monotone_csv(50));
    let v = json(&rankdep(&["test", "--input", &input, "--stat", "s_tau"]));
    assert_eq!(v["schema"], 1);
    assert_eq!(v["columns"], serde_json::json!(["a", "b"]));
    let r = &v["results"][0];
    assert_eq!(r["statistic"], "s_tau");
    assert_eq!(r["reject"], true);
    assert!(r["p_value"].as_f64().unwrap() < 1e-10);
    assert_eq!((r["n"].as_u64(), r["m"].as_u64()), (Some(50), Some(2)));
    assert!(v["notes"].as_array().unwrap().is_empty());
}

#[test]
fn malformed_row_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "bad.csv", "1,2\n3,4\n5,x\n7,8\n");
    let out = rankdep(&["test", "--input", &input, "--stat", "s_tau"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("row 3, column 2"), "{}", stderr(&out));
    let input = write(dir.path(), "ragged.csv", "1,2\n3,4,5\n");
    let out = rankdep(&["test", "--input", &input, "--stat", "s_tau"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("row 2"), "{}", stderr(&out));
    let input = write(dir.path(), "nan.csv", "1,2\n3,NaN\n5,6\n");
    assert_eq!(rankdep(&["test", "--input", &input, "--stat", "s_tau"]).status.code(), Some(2));
}

#[test]
fn sample_size_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let four = write(dir.path(), "four.csv", "1,2\n2,1\n3,4\n4,3\n");
    let v = json(&rankdep(&["test", "--input", &four, "--stat", "t_tau"]));
    assert_eq!(v["results"][0]["raw"], 1.0);
    assert!(v["notes"][0].as_str().unwrap().contains("montecarlo"));
    let three = write(dir.path(), "three.csv", "1,2\n2,1\n3,4\n");
    let out = rankdep(&["test", "--input", &three, "--stat", "t_tau"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("n = 3 is too small"), "{}", stderr(&out));
}

#[test]
fn ties_are_rejected_or_jittered() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "ties.csv", "x,y,z\n1,2,3\n2,1,3\n3,4,5\n4,3,6\n");
    let out = rankdep(&["test", "--input", &input, "--stat", "s_rho_s"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("column 3 ('z')"), "{}", stderr(&out));
    json(&rankdep(&["test", "--input", &input, "--stat", "s_rho_s", "--ties", "jitter", "--seed", "5"]));
}

#[test]
fn configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "mono.csv", &monotone_csv(10));
    for args in [
        vec!["--stat", "s_nope"],
        vec!["--stat", "s_tau", "--alpha", "1.5"],
        vec!["--stat", "s_tau", "--method", "montecarlo", "--mc-reps", "50"],
        vec!["--stat", "s_tau", "--bogus"],
    ] {
        let mut full = vec!["test", "--input", &input];
        full.extend(args.iter());
        assert_eq!(rankdep(&full).status.code(), Some(3), "{full:?}");
    }
    let out = rankdep(&["simulate", "--family", "iid-null", "--n", "10", "--m", "3", "--reps", "0", "--stat", "s_tau"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn seed_from_environment_and_csv_format() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "mono.csv", &monotone_csv(12));
    let out = Command::new(env!("CARGO_BIN_EXE_rankdep"))
        .args(["test", "--input", &input, "--stat", "z_tau", "--method", "montecarlo", "--mc-reps", "100"])
        .env("RANKDEP_SEED", "77")
        .output()
        .unwrap();
    let v = json(&out);
    assert_eq!(v["results"][0]["seed"], 77);
    assert!(close(v["results"][0]["p_value"].as_f64().unwrap(), 1.0 / 101.0));
    let out = rankdep(&["test", "--input", &input, "--stat", "s_tau,t_tau", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "statistic,raw,rescaled,p_value,reject,n,m,alpha,method,mc_reps,seed");
    assert_eq!(lines.count(), 2);
}

#[test]
fn simulate_writes_experiment_table() {
    let out = rankdep(&[
        "simulate", "--family", "mvn", "--scatter", "equi", "--signal", "0.5", "--n", "30", "--m", "6", "--reps", "20",
        "--stat", "s_tau,s_rho_s", "--seed", "3",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "statistic,n,m,family,scatter,signal,alpha,method,reps,reject_rate,se");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("s_tau,30,6,mvn,equi,0.5,0.05,asymptotic,20,"));
}

#[test]
fn simulated_dataset_round_trips_through_csv() {
    let s = SimScenario::new(Family::Mvt { df: 3.0 }, ScatterShape::Pentadiagonal, 40, 7, Some(0.4), 1, 8).unwrap();
    let data = gen_dataset(&s, 0).unwrap();
    let mut text = String::new();
    for i in 0..data.n() {
        text += &data.row(i).iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        text.push('\n');
    }
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "sim.csv", &text);
    let ranks = compute_ranks(&data, TiePolicy::Reject).unwrap();
    let names = ["s_tau", "t_rho_hat", "z_tstar", "s_d", "s_rho_s", "s_max_tau"];
    let v = json(&rankdep(&["test", "--input", &input, "--stat", &names.join(",")]));
    for (i, name) in names.iter().enumerate() {
        let id: StatisticId = name.parse().unwrap();
        assert!(close(v["results"][i]["raw"].as_f64().unwrap(), compute_raw(&ranks, id).unwrap()), "{name}");
    }
}

#[test]
fn selftest_regenerates_and_detects_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("constants.json");
    let p = path.to_str().unwrap();
    let out = rankdep(&["selftest", "--constants", p]);
    assert!(out.status.success(), "{}\n{}", String::from_utf8_lossy(&out.stdout), stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("generated"));
    assert!(path.exists());
    assert!(rankdep(&["selftest", "--constants", p]).status.success());
    let text = std::fs::read_to_string(&path).unwrap().replace("41/1215000", "41/1215001");
    std::fs::write(&path, text).unwrap();
    let out = rankdep(&["selftest", "--constants", p]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("mu_D"), "{}", stderr(&out));
}
