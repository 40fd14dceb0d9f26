#![allow(dead_code)]

use std::path::PathBuf;
use std::time::Duration;

use hhefl::config::{DataSource, ExperimentConfig, ParamSet};
use hhefl::learner::TrainConfig;
use hhefl::metrics::RoundRecord;
use hhefl::protocol::Mode;

/// Four clients on a small synthetic task with a small (insecure) ring.
pub fn small(mode: Mode) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::with_mode(mode);
    cfg.clients = 4;
    cfg.train_clients = 2;
    cfg.eval_clients = 4;
    cfg.rounds = 2;
    cfg.train = TrainConfig {
        epochs: 2,
        batch_size: 16,
        ..TrainConfig::default()
    };
    cfg.data = DataSource::Synthetic {
        samples: 400,
        features: 8,
        classes: 3,
    };
    cfg.preset = ParamSet::from_name("insecure:2048:55x8").unwrap();
    cfg.seed = 11;
    cfg.timeout = Duration::from_secs(120);
    cfg
}

pub fn temp_dir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("hhefl-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

pub fn untimed(records: &[RoundRecord]) -> Vec<RoundRecord> {
    records.iter().map(RoundRecord::without_timings).collect()
}

use std::sync::{Arc, Mutex};

use hhefl::runner::tpa_key_frames;
use hhefl::transport::Tap;
use hhefl::wire::{decode_keys, KeysMessage};
use hhefl_core::bfv::{ObjectType, FORMAT_VERSION, MAGIC};
use memchr::memmem;

/// Byte strings that must never reach the server: the serialized-secret-key
/// header, a slice of the secret key body and every client's PASTA key.
pub fn secret_needles(cfg: &ExperimentConfig) -> Vec<(String, Vec<u8>)> {
    let mut header = MAGIC.to_vec();
    header.extend([FORMAT_VERSION, ObjectType::SecretKey as u8]);
    let mut out = vec![("secret key header".to_string(), header)];
    let frames = tpa_key_frames(cfg).unwrap();
    drop(frames.server);
    let params = cfg.bfv_params().unwrap();
    let variant = (cfg.mode == Mode::Hhe).then_some(cfg.variant);
    for (i, f) in frames.clients.iter().enumerate() {
        let KeysMessage::Client { secret, pasta, .. } = decode_keys(&f.as_ref().unwrap().payload, &params, variant).unwrap()
        else {
            panic!("client frame expected")
        };
        if i == 0 {
            let sk = secret.to_bytes();
            let mid = sk.len() / 2;
            out.push(("secret key body".into(), sk[mid..mid + 64].to_vec()));
        }
        if let Some(k) = pasta {
            out.push((format!("PASTA key of client {i}"), k.to_bytes()));
        }
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct AuditLog {
    pub frames: usize,
    pub bytes: u64,
    pub findings: Vec<String>,
}

/// A tap that scans every server-bound frame for the needles.
pub fn audit_tap(needles: Vec<(String, Vec<u8>)>) -> (Tap, Arc<Mutex<AuditLog>>) {
    let log = Arc::new(Mutex::new(AuditLog::default()));
    let sink = log.clone();
    let tap: Tap = Arc::new(move |env| {
        let mut found = Vec::new();
        for (name, needle) in &needles {
            if memmem::find(&env.payload, needle).is_some() {
                found.push(format!("{name} in a {:?} frame", env.kind));
            }
        }
        let mut l = sink.lock().unwrap();
        l.frames += 1;
        l.bytes += env.frame_len() as u64;
        l.findings.extend(found);
    });
    (tap, log)
}
