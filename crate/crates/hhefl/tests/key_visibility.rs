mod common;

use common::{audit_tap, secret_needles, small};
use hhefl::metrics::MetricsSink;
use hhefl::protocol::Mode;
use hhefl::runner::{run_experiment, tpa_key_frames, RunOptions, ServerRole};
use hhefl::transport::{mem_pair, Link};
use hhefl::Error;

#[test]
fn server_bound_frames_carry_no_secret() {
    for mode in [Mode::Hhe, Mode::Bfv] {
        let cfg = small(mode);
        let (tap, log) = audit_tap(secret_needles(&cfg));
        let opts = RunOptions {
            tap: Some(tap),
            out: None,
        };
        run_experiment(&cfg, &opts).unwrap();
        let log = log.lock().unwrap();
        // key frame, updates and reports of two rounds
        assert!(log.frames > 10, "{log:?}");
        assert!(log.findings.is_empty(), "{:?}", log.findings);
    }
}

#[test]
fn audit_detects_client_key_frames() {
    let cfg = small(Mode::Hhe);
    let needles = secret_needles(&cfg);
    assert!(needles.len() >= 2 + cfg.clients);
    let (tap, log) = audit_tap(needles);
    let frames = tpa_key_frames(&cfg).unwrap();
    tap(frames.clients[2].as_ref().unwrap());
    let log = log.lock().unwrap();
    assert!(log.findings.iter().any(|f| f.contains("secret key header")));
    assert!(log.findings.iter().any(|f| f.contains("client 2")));
}

#[test]
fn server_refuses_a_client_key_frame() {
    let cfg = small(Mode::Hhe);
    let frames = tpa_key_frames(&cfg).unwrap();
    let links: Vec<Box<dyn Link>> = (0..cfg.clients).map(|_| Box::new(mem_pair().0) as Box<dyn Link>).collect();
    let res = ServerRole::new(&cfg, frames.clients[0].as_ref(), vec![0.0; 27], links, MetricsSink::default());
    assert!(matches!(res, Err(Error::Protocol(_))));
}
