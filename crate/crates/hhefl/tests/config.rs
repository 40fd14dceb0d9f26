mod common;

use std::path::PathBuf;
use std::process::Command;

use common::temp_dir;
use hhefl::config::{load_config, parse_config, ExperimentConfig};
use hhefl::metrics::read_metrics;
use hhefl::protocol::Mode;
use hhefl::Error;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn paper_config_parses_to_the_defaults() {
    let text = std::fs::read_to_string(configs().join("paper.conf")).unwrap();
    let cfg = parse_config(&text).unwrap();
    let mut expect = ExperimentConfig::with_mode(Mode::Hhe);
    expect.data = cfg.data.clone();
    assert_eq!(cfg, expect);
}

#[test]
fn smoke_config_loads() {
    let cfg = load_config(&configs().join("smoke.conf")).unwrap();
    assert_eq!(cfg.mode, Mode::Hhe);
    assert_eq!(cfg.max_batches().unwrap(), 10);
}

#[test]
fn load_config_validates() {
    let dir = temp_dir("cfg");
    let bad = dir.join("bad.conf");
    std::fs::write(&bad, "mode = bfv\nclients = 8\ntrain_clients = 8\neval_clients = 8\nsamples = 41000\n").unwrap();
    match load_config(&bad) {
        Err(Error::Constraint { total }) => assert_eq!(total, 512),
        other => panic!("{other:?}"),
    }
    std::fs::write(&bad, "clients = 8\n").unwrap();
    assert!(matches!(load_config(&bad), Err(Error::Config { .. })));
    assert!(matches!(load_config(&dir.join("missing.conf")), Err(Error::Io(_))));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn cli_runs_a_simulation_and_reports() {
    let out = temp_dir("cli");
    let bin = env!("CARGO_BIN_EXE_hhefl");
    let status = Command::new(bin)
        .args(["run-sim", "--config"])
        .arg(configs().join("smoke.conf"))
        .args(["--mode", "plain", "--seed", "3", "--out"])
        .arg(&out)
        .env_remove("HHEFL_SEED")
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let stdout = String::from_utf8_lossy(&status.stdout);
    assert!(stdout.contains("round   3"), "{stdout}");
    let records = read_metrics(&out.join("metrics.csv")).unwrap();
    assert!(records.iter().any(|r| r.round == 3));

    let report = Command::new(bin)
        .arg("report")
        .arg(out.join("metrics.csv"))
        .output()
        .unwrap();
    assert!(report.status.success());
    assert!(String::from_utf8_lossy(&report.stdout).contains("global"));
    std::fs::remove_dir_all(out).unwrap();
}

#[test]
fn cli_rejects_a_config_without_mode() {
    let dir = temp_dir("cli-bad");
    let cfg = dir.join("c.conf");
    std::fs::write(&cfg, "rounds = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hhefl"))
        .args(["run-sim", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mode"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn keygen_then_tcp_server_and_clients() {
    let out = temp_dir("tcp-roles");
    let bin = env!("CARGO_BIN_EXE_hhefl");
    let conf = configs().join("smoke.conf");
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("tcp:{}", listener.local_addr().unwrap());
    drop(listener);
    let keygen = Command::new(bin).arg("keygen").arg("--config").arg(&conf).arg("--out").arg(&out).output().unwrap();
    assert!(keygen.status.success(), "{}", String::from_utf8_lossy(&keygen.stderr));
    let keys = out.join("keys");
    let mut server = Command::new(bin)
        .arg("run-server")
        .arg("--config")
        .arg(&conf)
        .args(["--transport", &addr, "--out"])
        .arg(&out)
        .arg("--keys")
        .arg(&keys)
        .spawn()
        .unwrap();
    let clients: Vec<_> = (0..4)
        .map(|i| {
            Command::new(bin)
                .arg("run-client")
                .arg("--config")
                .arg(&conf)
                .args(["--transport", &addr, "--id", &i.to_string(), "--out"])
                .arg(&out)
                .arg("--keys")
                .arg(&keys)
                .spawn()
                .unwrap()
        })
        .collect();
    assert!(server.wait().unwrap().success());
    for mut c in clients {
        assert!(c.wait().unwrap().success());
    }
    let server_rows = read_metrics(&out.join("server-metrics.csv")).unwrap();
    assert!(server_rows.iter().any(|r| r.round == 3 && r.accuracy.is_some()));
    assert!(out.join("client-0-metrics.csv").exists());
    std::fs::remove_dir_all(out).unwrap();
}
