//! Per-round measurements and their CSV form.

use std::fmt;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::error::{format_err, Result};

pub const CSV_HEADER: [&str; 12] = [
    "round",
    "client_id",
    "phase",
    "bytes_up",
    "bytes_down",
    "t_train_ms",
    "t_encrypt_ms",
    "t_decrypt_ms",
    "t_hesd_ms",
    "t_agg_ms",
    "accuracy",
    "loss",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    /// Key and initial model distribution (round 0).
    Setup,
    Train,
    Aggregate,
    Eval,
    /// The server's weighted evaluation of the round.
    Global,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Setup => "setup",
            Phase::Train => "train",
            Phase::Aggregate => "aggregate",
            Phase::Eval => "eval",
            Phase::Global => "global",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "setup" => Phase::Setup,
            "train" => Phase::Train,
            "aggregate" => Phase::Aggregate,
            "eval" => Phase::Eval,
            "global" => Phase::Global,
            _ => return Err(format_err(format!("unknown phase `{s}`"))),
        })
    }
}

/// One row: a client's (or, without `client_id`, the server's) costs in one
/// phase of one round. Byte counts are whole frames as sent or received by
/// that party.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundRecord {
    pub round: u32,
    pub client_id: Option<u32>,
    pub phase: Option<Phase>,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub t_train_ms: Option<f64>,
    pub t_encrypt_ms: Option<f64>,
    pub t_decrypt_ms: Option<f64>,
    pub t_hesd_ms: Option<f64>,
    pub t_agg_ms: Option<f64>,
    pub accuracy: Option<f64>,
    pub loss: Option<f64>,
}

pub fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

impl RoundRecord {
    pub fn new(round: u32, client_id: Option<u32>, phase: Phase) -> Self {
        RoundRecord {
            round,
            client_id,
            phase: Some(phase),
            ..Default::default()
        }
    }

    /// The record with every timing column cleared.
    pub fn without_timings(&self) -> Self {
        RoundRecord {
            t_train_ms: None,
            t_encrypt_ms: None,
            t_decrypt_ms: None,
            t_hesd_ms: None,
            t_agg_ms: None,
            ..self.clone()
        }
    }

    fn sort_key(&self) -> (u32, Option<Phase>, Option<u32>) {
        (self.round, self.phase, self.client_id)
    }
}

/// Append-only record store shared by the roles.
#[derive(Clone, Debug, Default)]
pub struct MetricsSink(Arc<Mutex<Vec<RoundRecord>>>);

impl MetricsSink {
    pub fn push(&self, r: RoundRecord) {
        self.0.lock().expect("metrics lock").push(r);
    }

    /// All records ordered by round, phase, then client, server rows first.
    pub fn sorted(&self) -> Vec<RoundRecord> {
        let mut v = self.0.lock().expect("metrics lock").clone();
        v.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        v
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_metrics(records: &[RoundRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.round.to_string(),
            r.client_id.map_or_else(String::new, |c| c.to_string()),
            r.phase.map_or_else(String::new, |p| p.to_string()),
            r.bytes_up.to_string(),
            r.bytes_down.to_string(),
            opt(r.t_train_ms),
            opt(r.t_encrypt_ms),
            opt(r.t_decrypt_ms),
            opt(r.t_hesd_ms),
            opt(r.t_agg_ms),
            opt(r.accuracy),
            opt(r.loss),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: FromStr>(s: &str, col: &str) -> Result<Option<T>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| format_err(format!("bad value `{s}` in column {col}")))
}

fn required<T: FromStr>(s: &str, col: &str) -> Result<T> {
    field(s, col)?.ok_or_else(|| format_err(format!("missing value in column {col}")))
}

pub fn read_metrics(path: &Path) -> Result<Vec<RoundRecord>> {
    let mut r = csv::Reader::from_reader(File::open(path)?);
    if r.headers()?.iter().ne(CSV_HEADER) {
        return Err(format_err("unexpected metrics header"));
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let c = |i: usize| row.get(i).unwrap_or("");
        out.push(RoundRecord {
            round: required(c(0), "round")?,
            client_id: field(c(1), "client_id")?,
            phase: field(c(2), "phase")?,
            bytes_up: required(c(3), "bytes_up")?,
            bytes_down: required(c(4), "bytes_down")?,
            t_train_ms: field(c(5), "t_train_ms")?,
            t_encrypt_ms: field(c(6), "t_encrypt_ms")?,
            t_decrypt_ms: field(c(7), "t_decrypt_ms")?,
            t_hesd_ms: field(c(8), "t_hesd_ms")?,
            t_agg_ms: field(c(9), "t_agg_ms")?,
            accuracy: field(c(10), "accuracy")?,
            loss: field(c(11), "loss")?,
        });
    }
    Ok(out)
}

/// Totals per phase: `(phase, rows, bytes_up, bytes_down)`.
pub fn summarize(records: &[RoundRecord]) -> Vec<(Phase, usize, u64, u64)> {
    let mut out: Vec<(Phase, usize, u64, u64)> = Vec::new();
    for r in records {
        let Some(p) = r.phase else { continue };
        match out.iter_mut().find(|e| e.0 == p) {
            Some(e) => {
                e.1 += 1;
                e.2 += r.bytes_up;
                e.3 += r.bytes_down;
            }
            None => out.push((p, 1, r.bytes_up, r.bytes_down)),
        }
    }
    out.sort_by_key(|e| e.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_fixed() {
        let dir = std::env::temp_dir().join(format!("hhefl-metrics-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.csv");
        write_metrics(&[], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "round,client_id,phase,bytes_up,bytes_down,t_train_ms,t_encrypt_ms,t_decrypt_ms,t_hesd_ms,t_agg_ms,accuracy,loss"
        );
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn sink_orders_rows() {
        let s = MetricsSink::default();
        s.push(RoundRecord::new(1, Some(2), Phase::Eval));
        s.push(RoundRecord::new(1, None, Phase::Global));
        s.push(RoundRecord::new(1, Some(0), Phase::Train));
        s.push(RoundRecord::new(0, None, Phase::Setup));
        let keys: Vec<_> = s.sorted().iter().map(|r| (r.round, r.phase.unwrap(), r.client_id)).collect();
        assert_eq!(
            keys,
            vec![
                (0, Phase::Setup, None),
                (1, Phase::Train, Some(0)),
                (1, Phase::Eval, Some(2)),
                (1, Phase::Global, None)
            ]
        );
    }

    #[test]
    fn summary_adds_bytes() {
        let mut a = RoundRecord::new(1, Some(0), Phase::Train);
        a.bytes_up = 10;
        let mut b = RoundRecord::new(2, Some(1), Phase::Train);
        b.bytes_up = 5;
        b.bytes_down = 3;
        assert_eq!(summarize(&[a, b]), vec![(Phase::Train, 2, 15, 3)]);
    }
}
