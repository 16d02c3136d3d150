use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qkdsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkdsim"))
        .args(args)
        .env("QKDSIM_THREADS", "2")
        .output()
        .expect("spawn qkdsim")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analytic_sweep_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = qkdsim(&["sweep", "--start", "0", "--stop", "10", "--step", "5", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "attenuation_db,equivalent_km,raw_rate_hz,qber,secure_rate_hz,mode"
    );
    assert_eq!(lines.count(), 3);
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(side["points"].as_array().unwrap().len(), 3);
    assert_eq!(side["seed"], 1);
}

#[test]
fn sweep_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_qkdsim"))
            .args(["--seed", "5", "sweep", "--mode", "both", "--list", "0,10,35"])
            .args(["--duration-cap-s", "0.05", "--out", s(&out)])
            .env("QKDSIM_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (fs::read(&out).unwrap(), fs::read(out.with_extension("json")).unwrap())
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "3");
    assert_eq!(a, b);
}

#[test]
fn characterize_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = qkdsim(&["--seed", "3", "characterize", "--gates", "200000", "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        ["characterization.json", "crosstalk_sync.csv", "crosstalk_async.csv", "specificity.csv"]
            .map(|f| fs::read(out.join(f)).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn point_reports_json() {
    let o = qkdsim(&["point", "--attenuation-db", "10"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["mode"], "analytic");
    assert!(v["secure_rate_hz"].as_f64().unwrap() > 0.0);
    assert!(v["breakdown"]["contributions"]["optical"].as_f64().unwrap() > 0.0);

    let o = qkdsim(&["point", "--fibre-km", "20", "--loss-override-db", "4.1"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["attenuation_db"], 4.1);
}

#[test]
fn monte_carlo_point_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let cfg = dir.path().join("small.json");
    let mut c = qkdsim::SystemConfig::preset("cold").unwrap();
    c.finite_key.block_bits = 20_000;
    fs::write(&cfg, c.to_json().unwrap()).unwrap();
    let o = qkdsim(&[
        "--config",
        s(&cfg),
        "point",
        "--mode",
        "montecarlo",
        "--attenuation-db",
        "5",
        "--trace",
        s(&trace),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("pattern_idx,alice_basis,alice_bit,intensity,bob_basis,detector,sifted,error"));
    assert!(text.lines().count() > 20_000);
}

#[test]
fn coupling_appends_column() {
    let dir = tempfile::tempdir().unwrap();
    let inp = dir.path().join("in.csv");
    fs::write(&inp, "system_spde_pct, channel_loss_db, spad_spde_pct\n10.25,1.97,17.0\n20,0,20\n").unwrap();
    let o = qkdsim(&["coupling", s(&inp)]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "system_spde_pct,channel_loss_db,spad_spde_pct,coupling_loss_db");
    assert!(rows[1].ends_with(",0.23"));
    assert!(rows[2].ends_with(",0.00"));
}

#[test]
fn usage_and_validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(code(&qkdsim(&["characterize", "--gates", "0", "--out", s(&out)])), 2);
    let csv = dir.path().join("s.csv");
    assert_eq!(code(&qkdsim(&["sweep", "--start", "10", "--stop", "0", "--step", "1", "--out", s(&csv)])), 2);
    assert_eq!(code(&qkdsim(&["sweep", "--list", "5,5", "--out", s(&csv)])), 2);
    assert_eq!(code(&qkdsim(&["point", "--preset", "lukewarm"])), 2);

    let bad = dir.path().join("bad.json");
    let mut c = qkdsim::SystemConfig::preset("cold").unwrap();
    c.receiver.visibility = 1.5;
    fs::write(&bad, serde_json::to_string(&c).unwrap()).unwrap();
    let o = qkdsim(&["--config", s(&bad), "point"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("receiver.visibility"));

    let inp = dir.path().join("in.csv");
    fs::write(&inp, "system_spde_pct,spad_spde_pct\n10,17\n").unwrap();
    let o = qkdsim(&["coupling", s(&inp)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing column channel_loss_db"));

    fs::write(&inp, "system_spde_pct,channel_loss_db,spad_spde_pct\n10,1,17\n10,abc,17\n").unwrap();
    let o = qkdsim(&["coupling", s(&inp)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn io_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&qkdsim(&["--config", s(&missing), "point"])), 3);
    let out = dir.path().join("no/such/dir/s.csv");
    assert_eq!(code(&qkdsim(&["sweep", "--list", "0", "--out", s(&out)])), 3);
}

#[test]
fn impossible_coupling_data_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let inp = dir.path().join("in.csv");
    fs::write(&inp, "system_spde_pct,channel_loss_db,spad_spde_pct\n30,1,17\n").unwrap();
    assert_eq!(code(&qkdsim(&["coupling", s(&inp)])), 4);
}
