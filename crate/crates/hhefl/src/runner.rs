//! The five-phase loop: server and client roles talking over links, the
//! simulation that runs them together, and key files for separate processes.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Instant;

use hhefl_core::bfv::{BfvParams, EvaluationKeys, GaloisKeys, PublicKey, RelinKey, SecretKey};
use hhefl_core::codec::QuantSpec;
use hhefl_core::pasta::{PastaKey, PastaVariant};
use hhefl_core::rng::{derive_rng, seed_from_u64, Seed};
use rand::RngCore;

use crate::config::{DataSource, ExperimentConfig, TransportKind};
use crate::error::{Error, Result};
use crate::learner::{
    batch_count, evaluate, idx, partition_iid, synthetic, train_local, Dataset, MlpModel, Shard,
};
use crate::metrics::{ms, write_metrics, MetricsSink, Phase, RoundRecord};
use crate::protocol::{
    domain, open_aggregate, protect_update, select_clients, select_from, server_aggregation_phase,
    server_evaluation_phase, tpa_setup, validate_update, AggregateResult, ClientShare, ClientUpdate,
    EvalReport, GlobalMetrics, Mode, OpenedAggregate, Protection, ServerCrypto, ServerShare,
};
use crate::transport::{mem_pair, Link, Tap, Tapped, TcpLink};
use crate::wire::{
    decode_abort, decode_global_ct, decode_global_plain, decode_hello, decode_keys, decode_report,
    decode_update, encode_abort, encode_aggregate, encode_global_plain, encode_keys, encode_report,
    encode_update, Envelope, KeysMessage, MsgType,
};

pub const FINISHED: &str = "finished";

/// A 32-byte seed for one purpose, drawn from the experiment seed.
pub fn sub_seed(seed: Seed, stream: u64) -> Seed {
    let mut s = [0u8; 32];
    derive_rng(seed, stream).fill_bytes(&mut s);
    s
}

pub fn experiment_seed(cfg: &ExperimentConfig) -> Seed {
    seed_from_u64(cfg.seed)
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Synthetic {
            samples,
            features,
            classes,
        } => Ok(synthetic(
            *samples,
            *features,
            *classes,
            sub_seed(experiment_seed(cfg), domain::DATA),
        )),
        DataSource::Idx { dir, limit } => {
            let ds = idx::load_mnist_dir(dir)?;
            Ok(match limit {
                Some(l) => ds.truncated(*l),
                None => ds,
            })
        }
    }
}

/// Layer widths, known to the server without reading any samples.
pub fn model_dims(cfg: &ExperimentConfig) -> Result<Vec<usize>> {
    let (features, classes) = match &cfg.data {
        DataSource::Synthetic {
            features, classes, ..
        } => (*features, *classes),
        DataSource::Idx { dir, .. } => (idx::image_features(&dir.join("train-images-idx3-ubyte"))?, 10),
    };
    Ok(cfg.model.dims(features, classes))
}

pub fn initial_model(cfg: &ExperimentConfig) -> Result<MlpModel> {
    MlpModel::init(model_dims(cfg)?, sub_seed(experiment_seed(cfg), domain::INIT))
}

pub fn shards(cfg: &ExperimentConfig, data: &Dataset) -> Result<Vec<Shard>> {
    Ok(partition_iid(data.len(), cfg.clients, sub_seed(experiment_seed(cfg), domain::PARTITION))?.shards)
}

fn hhe_variant(cfg: &ExperimentConfig) -> Option<PastaVariant> {
    (cfg.mode == Mode::Hhe).then_some(cfg.variant)
}

/// Values per ciphertext or symmetric chunk the server expects.
fn upload_chunk(cfg: &ExperimentConfig) -> usize {
    match cfg.mode {
        Mode::Hhe => cfg.variant.block_size(),
        _ => cfg.bfv_chunk(),
    }
}

fn flat(model: &MlpModel) -> Vec<f32> {
    model.params().iter().map(|&x| x as f32).collect()
}

/// The authority's key frames: one for the server, one per client. Empty in
/// plaintext mode.
pub struct KeyFrames {
    pub server: Option<Envelope>,
    pub clients: Vec<Option<Envelope>>,
}

pub fn tpa_key_frames(cfg: &ExperimentConfig) -> Result<KeyFrames> {
    if cfg.mode == Mode::Plain {
        return Ok(KeyFrames {
            server: None,
            clients: vec![None; cfg.clients],
        });
    }
    let bundle = tpa_setup(
        cfg.clients,
        &cfg.bfv_params()?,
        hhe_variant(cfg),
        experiment_seed(cfg),
    )?;
    let clients = bundle.clients.iter().map(|c| Some(client_frame(c))).collect();
    drop(bundle.clients);
    let eval = Arc::try_unwrap(bundle.server.eval).unwrap_or_else(|shared| (*shared).clone());
    let server = Envelope::new(
        MsgType::Keys,
        0,
        encode_keys(&KeysMessage::Server {
            public: bundle.server.public,
            relin: eval.relin,
            galois: eval.galois,
        }),
    );
    Ok(KeyFrames {
        server: Some(server),
        clients,
    })
}

fn client_frame(c: &ClientShare) -> Envelope {
    Envelope::new(
        MsgType::Keys,
        0,
        encode_keys(&KeysMessage::Client {
            client_id: c.client_id,
            public: c.public.clone(),
            secret: (*c.secret).clone(),
            pasta: c.pasta.clone(),
        }),
    )
}

/// Integer sums and weights the clients decoded, by round.
#[derive(Clone, Debug, Default)]
pub struct Observed(Arc<Mutex<BTreeMap<u32, OpenedAggregate>>>);

impl Observed {
    fn record(&self, round: u32, opened: &OpenedAggregate) {
        let mut m = self.0.lock().expect("observation lock");
        m.entry(round).or_insert_with(|| opened.clone());
    }

    pub fn get(&self, round: u32) -> Option<OpenedAggregate> {
        self.0.lock().expect("observation lock").get(&round).cloned()
    }
}

/// What the server learns in a round.
#[derive(Clone, Debug, PartialEq)]
pub struct ServerRound {
    pub round: u32,
    pub selected: Vec<u32>,
    pub contributors: Vec<u32>,
    pub n: u64,
    pub metrics: Option<GlobalMetrics>,
}

/// The aggregator. It is built from the server's key frame alone and never
/// holds a secret key.
pub struct ServerRole {
    cfg: ExperimentConfig,
    seed: Seed,
    params: Option<BfvParams>,
    crypto: ServerCrypto,
    initial: Vec<f32>,
    links: Vec<Option<Box<dyn Link>>>,
    synced: Vec<u32>,
    sink: MetricsSink,
    setup_down: u64,
}

impl ServerRole {
    pub fn new(
        cfg: &ExperimentConfig,
        keys: Option<&Envelope>,
        initial: Vec<f32>,
        links: Vec<Box<dyn Link>>,
        sink: MetricsSink,
    ) -> Result<Self> {
        if links.len() != cfg.clients {
            return Err(Error::Invalid("one link per client is required".into()));
        }
        let (params, crypto) = match (cfg.mode, keys) {
            (Mode::Plain, _) => (None, ServerCrypto::plain()),
            (_, None) => return Err(Error::Protocol("the server needs its key frame".into())),
            (_, Some(env)) => {
                let params = cfg.bfv_params()?;
                let share = match decode_keys(&env.payload, &params, hhe_variant(cfg))? {
                    KeysMessage::Server {
                        public,
                        relin,
                        galois,
                    } => ServerShare {
                        params: params.clone(),
                        public,
                        eval: Arc::new(EvaluationKeys { relin, galois }),
                    },
                    _ => return Err(Error::Protocol("not a server key frame".into())),
                };
                let crypto = ServerCrypto::new(&share, hhe_variant(cfg), cfg.bfv_chunk())?;
                (Some(params), crypto)
            }
        };
        Ok(ServerRole {
            cfg: cfg.clone(),
            seed: experiment_seed(cfg),
            params,
            crypto,
            initial,
            links: links.into_iter().map(Some).collect(),
            synced: vec![0; cfg.clients],
            sink,
            setup_down: keys.map_or(0, |k| k.frame_len() as u64),
        })
    }

    fn alive(&self) -> Vec<u32> {
        (0..self.links.len() as u32)
            .filter(|&c| self.links[c as usize].is_some())
            .collect()
    }

    fn send(&mut self, c: u32, env: Envelope) -> u64 {
        let Some(link) = self.links[c as usize].as_mut() else {
            return 0;
        };
        match link.send(env) {
            Ok(n) => n as u64,
            Err(_) => {
                self.links[c as usize] = None;
                0
            }
        }
    }

    fn recv(&mut self, c: u32) -> Option<Envelope> {
        let timeout = self.cfg.timeout;
        let link = self.links[c as usize].as_mut()?;
        match link.recv(Some(timeout)) {
            Ok(env) => Some(env),
            Err(_) => {
                self.links[c as usize] = None;
                None
            }
        }
    }

    pub fn run(mut self) -> Result<Vec<ServerRound>> {
        let mut setup = RoundRecord::new(0, None, Phase::Setup);
        setup.bytes_down = self.setup_down;
        let global0 = encode_global_plain(&self.initial);
        for c in self.alive() {
            setup.bytes_up += self.send(c, Envelope::new(MsgType::GlobalPlain, 0, global0.clone()));
        }
        self.sink.push(setup);
        let mut latest: Option<(u32, Vec<u8>)> = None;
        let mut out = Vec::new();
        for round in 1..=self.cfg.rounds {
            out.push(self.round(round, &mut latest)?);
        }
        for c in self.alive() {
            self.send(c, Envelope::new(MsgType::Abort, self.cfg.rounds, encode_abort(FINISHED)));
        }
        Ok(out)
    }

    fn round(&mut self, round: u32, latest: &mut Option<(u32, Vec<u8>)>) -> Result<ServerRound> {
        let pool = self.alive();
        if pool.is_empty() {
            return Err(Error::Protocol(format!("round {round} aborted: every client has left")));
        }
        let k = self.cfg.train_clients.min(pool.len());
        let selected = select_clients(&pool, k, round, self.seed)?;
        let mut agg_row = RoundRecord::new(round, None, Phase::Aggregate);
        for &c in &selected {
            if let Some((r, body)) = latest.as_ref() {
                if self.synced[c as usize] < *r {
                    let env = Envelope::new(MsgType::GlobalCt, *r, encode_global_ct_body(body, false));
                    agg_row.bytes_up += self.send(c, env);
                    self.synced[c as usize] = *r;
                }
            }
            agg_row.bytes_up += self.send(c, Envelope::new(MsgType::Select, round, Vec::new()));
        }

        let mut updates: Vec<ClientUpdate> = Vec::new();
        for &c in &selected {
            let Some(env) = self.recv(c) else { continue };
            agg_row.bytes_down += env.frame_len() as u64;
            match (env.kind, env.round == round) {
                (MsgType::Update, true) => {
                    let ok = decode_update(&env.payload, self.params.as_ref()).and_then(|u| {
                        validate_update(&u, self.cfg.mode, self.initial.len() as u64, upload_chunk(&self.cfg))?;
                        if u.client_id != c {
                            return Err(Error::Protocol(format!("client {c} sent another client's update")));
                        }
                        Ok(u)
                    });
                    match ok {
                        Ok(u) => updates.push(u),
                        Err(_) => self.links[c as usize] = None,
                    }
                }
                (MsgType::Abort, true) => {
                    let _ = decode_abort(&env.payload);
                }
                _ => self.links[c as usize] = None,
            }
        }
        if updates.is_empty() {
            return Err(Error::Protocol(format!("round {round} aborted: no client update survived")));
        }

        let start = Instant::now();
        let (agg, timings) = server_aggregation_phase(&updates, &self.crypto, round, self.cfg.workers)?;
        agg_row.t_agg_ms = Some(ms(start.elapsed()));
        drop(updates);
        for t in &timings {
            let mut r = RoundRecord::new(round, Some(t.client_id), Phase::Aggregate);
            if self.cfg.mode == Mode::Hhe {
                r.t_hesd_ms = Some(ms(t.hesd));
            }
            self.sink.push(r);
        }
        self.sink.push(agg_row);

        let body = encode_aggregate(&agg);
        let pool = self.alive();
        let k = self.cfg.eval_clients.min(pool.len());
        let evaluators = if k == pool.len() {
            pool
        } else {
            select_from(&pool, k, self.seed, domain::EVAL_SELECT | round as u64)?
        };
        let mut global = RoundRecord::new(round, None, Phase::Global);
        for &c in &evaluators {
            let env = Envelope::new(MsgType::GlobalCt, round, encode_global_ct_body(&body, true));
            global.bytes_up += self.send(c, env);
            self.synced[c as usize] = round;
        }
        let mut reports = Vec::new();
        for &c in &evaluators {
            let Some(env) = self.recv(c) else { continue };
            global.bytes_down += env.frame_len() as u64;
            match (env.kind, env.round == round) {
                (MsgType::EvalReport, true) => match decode_report(&env.payload) {
                    Ok(rep) if rep.client_id == c => reports.push(rep),
                    _ => self.links[c as usize] = None,
                },
                (MsgType::Abort, true) => {}
                _ => self.links[c as usize] = None,
            }
        }
        let metrics = server_evaluation_phase(&reports).ok();
        global.accuracy = metrics.map(|m| m.accuracy);
        global.loss = metrics.map(|m| m.loss);
        self.sink.push(global);
        *latest = Some((round, body));
        Ok(ServerRound {
            round,
            selected,
            contributors: agg.contributors.clone(),
            n: agg.n,
            metrics,
        })
    }
}

fn encode_global_ct_body(body: &[u8], evaluate: bool) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + 1);
    out.push(u8::from(evaluate));
    out.extend_from_slice(body);
    out
}

/// A participant holding its shard, the shared keys and its PASTA key.
pub struct ClientRole {
    id: u32,
    cfg: ExperimentConfig,
    seed: Seed,
    share: Option<ClientShare>,
    spec: QuantSpec,
    data: Arc<Dataset>,
    shard: Shard,
    dims: Vec<usize>,
    model: Option<MlpModel>,
    failures: HashSet<(u32, u32)>,
    kills: HashSet<(u32, u32)>,
    sink: MetricsSink,
    observed: Observed,
    setup_down: u64,
}

impl ClientRole {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cfg: &ExperimentConfig,
        id: u32,
        keys: Option<&Envelope>,
        data: Arc<Dataset>,
        shard: Shard,
        sink: MetricsSink,
        observed: Observed,
    ) -> Result<Self> {
        let share = match (cfg.mode, keys) {
            (Mode::Plain, _) => None,
            (_, None) => return Err(Error::Protocol(format!("client {id} needs its key frame"))),
            (_, Some(env)) => {
                let params = cfg.bfv_params()?;
                match decode_keys(&env.payload, &params, hhe_variant(cfg))? {
                    KeysMessage::Client {
                        client_id,
                        public,
                        secret,
                        pasta,
                    } if client_id == id => Some(ClientShare {
                        client_id,
                        params,
                        public,
                        secret: Arc::new(secret),
                        pasta,
                    }),
                    _ => return Err(Error::Protocol(format!("not a key frame for client {id}"))),
                }
            }
        };
        Ok(ClientRole {
            id,
            seed: experiment_seed(cfg),
            spec: cfg.quant_spec()?,
            dims: cfg.model.dims(data.features(), data.classes()),
            cfg: cfg.clone(),
            share,
            data,
            shard,
            model: None,
            failures: cfg.failures.iter().copied().collect(),
            kills: cfg.kills.iter().copied().collect(),
            sink,
            observed,
            setup_down: keys.map_or(0, |k| k.frame_len() as u64),
        })
    }

    fn protection(&self) -> Protection {
        Protection {
            mode: self.cfg.mode,
            spec: self.spec,
            variant: self.cfg.variant,
            chunk: self.cfg.bfv_chunk(),
            quantize_plain: self.cfg.plain_quantize,
        }
    }

    fn train(&self, round: u32, rec: &mut RoundRecord) -> Result<ClientUpdate> {
        if self.failures.contains(&(round, self.id)) {
            return Err(Error::Protocol("local training failed".into()));
        }
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| Error::Protocol("selected before receiving a global model".into()))?;
        let start = Instant::now();
        let seed = sub_seed(self.seed, domain::per_client(domain::TRAIN, round, self.id));
        let outcome = train_local(model, &self.data, &self.shard, &self.cfg.train, seed)?;
        rec.t_train_ms = Some(ms(start.elapsed()));
        let n_k = batch_count(self.shard.training_samples(), self.cfg.train.batch_size);
        let start = Instant::now();
        let update = protect_update(
            &flat(&outcome.model),
            n_k,
            round,
            self.id,
            self.share.as_ref(),
            &self.protection(),
            self.seed,
        )?;
        rec.t_encrypt_ms = Some(ms(start.elapsed()));
        Ok(update)
    }

    fn adopt(&mut self, round: u32, agg: &AggregateResult) -> Result<()> {
        let secret = self.share.as_ref().map(|s| &*s.secret);
        let opened = open_aggregate(agg, secret, &self.spec)?;
        let params = opened.weights.iter().map(|&x| x as f64).collect();
        self.model = Some(MlpModel::new(self.dims.clone(), params)?);
        self.observed.record(round, &opened);
        Ok(())
    }

    /// Serves the server until it finishes or goes away.
    pub fn run<L: Link>(mut self, mut link: L) -> Result<()> {
        let mut pending_down = 0u64;
        let mut pending_decrypt = None;
        let params = self.share.as_ref().map(|s| s.params.clone());
        loop {
            let env = match link.recv(None) {
                Ok(env) => env,
                Err(Error::Disconnected) => return Ok(()),
                Err(e) => return Err(e),
            };
            let frame = env.frame_len() as u64;
            match env.kind {
                MsgType::GlobalPlain => {
                    let w = decode_global_plain(&env.payload)?;
                    self.model = Some(MlpModel::new(self.dims.clone(), w.iter().map(|&x| x as f64).collect())?);
                    let mut rec = RoundRecord::new(0, Some(self.id), Phase::Setup);
                    rec.bytes_down = self.setup_down + frame;
                    self.sink.push(rec);
                }
                MsgType::GlobalCt => {
                    let (agg, evaluate_now) = decode_global_ct(&env.payload, params.as_ref())?;
                    let start = Instant::now();
                    self.adopt(env.round, &agg)?;
                    let t_decrypt = start.elapsed();
                    drop(agg);
                    if !evaluate_now {
                        pending_down += frame;
                        pending_decrypt = Some(t_decrypt);
                        continue;
                    }
                    let model = self.model.as_ref().expect("just adopted");
                    let m = evaluate(model, &self.data, &self.shard.test)?;
                    let report = EvalReport::new(self.id, &m);
                    let up = link.send(Envelope::new(MsgType::EvalReport, env.round, encode_report(&report)));
                    let mut rec = RoundRecord::new(env.round, Some(self.id), Phase::Eval);
                    rec.bytes_down = frame;
                    rec.bytes_up = up? as u64;
                    rec.t_decrypt_ms = Some(ms(t_decrypt));
                    rec.accuracy = Some(m.accuracy);
                    rec.loss = Some(m.loss);
                    self.sink.push(rec);
                }
                MsgType::Select => {
                    let round = env.round;
                    if self.kills.contains(&(round, self.id)) {
                        return Ok(());
                    }
                    let mut rec = RoundRecord::new(round, Some(self.id), Phase::Train);
                    rec.bytes_down = pending_down + frame;
                    rec.t_decrypt_ms = pending_decrypt.take().map(ms);
                    pending_down = 0;
                    let reply = match self.train(round, &mut rec) {
                        Ok(u) => Envelope::new(MsgType::Update, round, encode_update(&u)),
                        Err(e) => Envelope::new(MsgType::Abort, round, encode_abort(&e.to_string())),
                    };
                    rec.bytes_up = link.send(reply)? as u64;
                    self.sink.push(rec);
                }
                MsgType::Abort => return Ok(()),
                other => {
                    return Err(Error::Protocol(format!("client {} got an unexpected {other:?}", self.id)))
                }
            }
        }
    }
}

/// Connects to a server and announces the client id.
pub fn connect_client(addr: &str, id: u32) -> Result<TcpLink> {
    let mut link = TcpLink::connect(addr, 100)?;
    link.send(Envelope::new(MsgType::Keys, 0, encode_keys(&KeysMessage::Hello { client_id: id })))?;
    Ok(link)
}

/// Accepts one connection per client and orders the links by client id.
pub fn accept_clients(listener: &TcpListener, cfg: &ExperimentConfig) -> Result<Vec<TcpLink>> {
    let mut slots: Vec<Option<TcpLink>> = (0..cfg.clients).map(|_| None).collect();
    for _ in 0..cfg.clients {
        let mut link = TcpLink::accept(listener)?;
        let hello = link.recv(Some(cfg.timeout))?;
        let id = match hello.kind {
            MsgType::Keys => decode_hello(&hello.payload)? as usize,
            _ => return Err(Error::Protocol("expected a hello".into())),
        };
        match slots.get_mut(id) {
            Some(slot @ None) => *slot = Some(link),
            _ => return Err(Error::Protocol(format!("unexpected or duplicate client id {id}"))),
        }
    }
    Ok(slots.into_iter().map(|s| s.expect("all accepted")).collect())
}

#[derive(Clone, Default)]
pub struct RunOptions {
    /// Sees the server's key frame and every frame the server receives.
    pub tap: Option<Tap>,
    /// Directory for `metrics.csv`.
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundSummary {
    pub round: u32,
    pub selected: Vec<u32>,
    pub contributors: Vec<u32>,
    pub n: u64,
    /// `sum n_k q_k` as decoded by the clients; absent for float plaintext.
    pub sums: Option<Vec<i64>>,
    pub metrics: Option<GlobalMetrics>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub records: Vec<RoundRecord>,
    pub rounds: Vec<RoundSummary>,
    pub initial_weights: Vec<f32>,
    pub final_weights: Vec<f32>,
    pub final_metrics: Option<GlobalMetrics>,
}

fn boxed<L: Link + 'static>(link: L, tap: &Option<Tap>) -> Box<dyn Link> {
    match tap {
        Some(t) => Box::new(Tapped::new(link, t.clone())),
        None => Box::new(link),
    }
}

/// Runs the authority, the server and every client in this process.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentResult> {
    cfg.validate()?;
    let initial = flat(&initial_model(cfg)?);
    let sink = MetricsSink::default();
    if cfg.rounds == 0 {
        if let Some(dir) = &opts.out {
            fs::create_dir_all(dir)?;
            write_metrics(&[], &dir.join("metrics.csv"))?;
        }
        return Ok(ExperimentResult {
            records: Vec::new(),
            rounds: Vec::new(),
            final_weights: initial.clone(),
            initial_weights: initial,
            final_metrics: None,
        });
    }
    let data = Arc::new(load_data(cfg)?);
    let shards = shards(cfg, &data)?;
    let frames = tpa_key_frames(cfg)?;
    if let (Some(tap), Some(k)) = (&opts.tap, &frames.server) {
        tap(k);
    }
    let observed = Observed::default();
    let clients = shards
        .into_iter()
        .enumerate()
        .map(|(i, shard)| {
            ClientRole::new(
                cfg,
                i as u32,
                frames.clients[i].as_ref(),
                data.clone(),
                shard,
                sink.clone(),
                observed.clone(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let KeyFrames { server: server_keys, clients: client_frames } = frames;
    drop(client_frames);

    let (server_rounds, client_results) = match &cfg.transport {
        TransportKind::InProcess => {
            let (server_ends, client_ends): (Vec<_>, Vec<_>) = (0..cfg.clients).map(|_| mem_pair()).unzip();
            let links = server_ends.into_iter().map(|l| boxed(l, &opts.tap)).collect();
            let server = ServerRole::new(cfg, server_keys.as_ref(), initial.clone(), links, sink.clone())?;
            drop(server_keys);
            thread::scope(|s| {
                let handles: Vec<_> = clients
                    .into_iter()
                    .zip(client_ends)
                    .map(|(c, link)| s.spawn(move || c.run(link)))
                    .collect();
                let rounds = server.run();
                let results: Vec<Result<()>> = handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Protocol("client thread panicked".into()))))
                    .collect();
                (rounds, results)
            })
        }
        TransportKind::Tcp(addr) => {
            let listener = TcpListener::bind(addr.as_str())?;
            let local = listener.local_addr()?.to_string();
            thread::scope(|s| {
                let handles: Vec<_> = clients
                    .into_iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let local = local.clone();
                        s.spawn(move || c.run(connect_client(&local, i as u32)?))
                    })
                    .collect();
                let rounds = accept_clients(&listener, cfg).and_then(|links| {
                    let links = links.into_iter().map(|l| boxed(l, &opts.tap)).collect();
                    ServerRole::new(cfg, server_keys.as_ref(), initial.clone(), links, sink.clone())
                });
                let rounds = rounds.and_then(|server| server.run());
                let results: Vec<Result<()>> = handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Protocol("client thread panicked".into()))))
                    .collect();
                (rounds, results)
            })
        }
    };
    let server_rounds = server_rounds?;
    if let Some(e) = client_results.into_iter().find_map(|r| r.err()) {
        return Err(e);
    }

    let rounds: Vec<RoundSummary> = server_rounds
        .into_iter()
        .map(|r| RoundSummary {
            sums: observed.get(r.round).and_then(|o| o.sums),
            round: r.round,
            selected: r.selected,
            contributors: r.contributors,
            n: r.n,
            metrics: r.metrics,
        })
        .collect();
    let final_weights = observed
        .get(cfg.rounds)
        .map(|o| o.weights)
        .ok_or_else(|| Error::Protocol("no client decoded the final global model".into()))?;
    let records = sink.sorted();
    if let Some(dir) = &opts.out {
        fs::create_dir_all(dir)?;
        write_metrics(&records, &dir.join("metrics.csv"))?;
    }
    Ok(ExperimentResult {
        final_metrics: rounds.last().and_then(|r| r.metrics),
        records,
        rounds,
        initial_weights: initial,
        final_weights,
    })
}

/// Writes each role's keys in the BFV object format: `server/` gets the
/// public and evaluation keys, `client-<i>/` the public, secret and PASTA
/// keys.
pub fn write_key_files(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    if cfg.mode == Mode::Plain {
        return Err(Error::Invalid("plaintext mode uses no keys".into()));
    }
    let bundle = tpa_setup(cfg.clients, &cfg.bfv_params()?, hhe_variant(cfg), experiment_seed(cfg))?;
    let server = dir.join("server");
    fs::create_dir_all(&server)?;
    fs::write(server.join("public.key"), bundle.server.public.to_bytes())?;
    fs::write(server.join("relin.key"), bundle.server.eval.relin.to_bytes())?;
    fs::write(server.join("galois.key"), bundle.server.eval.galois.to_bytes())?;
    for c in &bundle.clients {
        let d = dir.join(format!("client-{}", c.client_id));
        fs::create_dir_all(&d)?;
        fs::write(d.join("public.key"), c.public.to_bytes())?;
        fs::write(d.join("secret.key"), c.secret.to_bytes())?;
        if let Some(p) = &c.pasta {
            fs::write(d.join("pasta.key"), p.to_bytes())?;
        }
    }
    Ok(())
}

/// The server's key frame rebuilt from `server/`.
pub fn load_server_keys(cfg: &ExperimentConfig, dir: &Path) -> Result<Envelope> {
    let params = cfg.bfv_params()?;
    let msg = KeysMessage::Server {
        public: PublicKey::from_bytes(&params, &fs::read(dir.join("public.key"))?)?,
        relin: RelinKey::from_bytes(&params, &fs::read(dir.join("relin.key"))?)?,
        galois: GaloisKeys::from_bytes(&params, &fs::read(dir.join("galois.key"))?)?,
    };
    Ok(Envelope::new(MsgType::Keys, 0, encode_keys(&msg)))
}

/// A client's key frame rebuilt from `client-<id>/`.
pub fn load_client_keys(cfg: &ExperimentConfig, dir: &Path, id: u32) -> Result<Envelope> {
    let params = cfg.bfv_params()?;
    let pasta_path = dir.join("pasta.key");
    let pasta = match hhe_variant(cfg) {
        Some(v) => Some(PastaKey::from_bytes(&fs::read(pasta_path)?, v)?),
        None => None,
    };
    let msg = KeysMessage::Client {
        client_id: id,
        public: PublicKey::from_bytes(&params, &fs::read(dir.join("public.key"))?)?,
        secret: SecretKey::from_bytes(&params, &fs::read(dir.join("secret.key"))?)?,
        pasta,
    };
    Ok(Envelope::new(MsgType::Keys, 0, encode_keys(&msg)))
}
