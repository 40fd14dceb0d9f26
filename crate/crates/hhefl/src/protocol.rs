//! The federated protocol: key setup by the third-party authority, client
//! training and evaluation, server aggregation and evaluation, client
//! selection, and the wraparound constraint on the aggregate.
//!
//! The server role only ever holds a [`ServerShare`]; secret keys live in
//! [`ClientShare`]s.

use std::fmt;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use hhefl_core::bfv::{
    self, keygen, BfvParams, Ciphertext, EvaluationKeys, PublicKey, RotationSteps, SecretKey,
};
use hhefl_core::codec::{average_dequantize, decode_centered, encode_unsigned, quantize, QuantSpec};
use hhefl_core::hesd::{rotation_steps, HesdContext};
use hhefl_core::pasta::{sym_encrypt, BlockNonce, PastaKey, PastaVariant, SymCiphertextChunk};
use hhefl_core::rng::{derive_rng, Seed};
use hhefl_core::{FieldElement, P};
use rand::seq::index;
use rand::RngCore;

use crate::bench::timed_hesd_chunks;
use crate::error::{Error, Result};
use crate::learner::EvalMetrics;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Plain,
    Bfv,
    Hhe,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Plain => "plain",
            Mode::Bfv => "bfv",
            Mode::Hhe => "hhe",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "plain" => Some(Mode::Plain),
            "bfv" => Some(Mode::Bfv),
            "hhe" => Some(Mode::Hhe),
            _ => None,
        }
    }
}

// Stream selectors for the experiment seed.
pub(crate) mod domain {
    pub const HE_KEYS: u64 = 1;
    pub const DATA: u64 = 2;
    pub const PARTITION: u64 = 3;
    pub const INIT: u64 = 4;
    pub const PASTA: u64 = 1 << 32;
    pub const SELECT: u64 = 2 << 32;
    pub const EVAL_SELECT: u64 = 3 << 32;
    pub const TRAIN: u64 = 4 << 32;
    pub const ENCRYPT: u64 = 5 << 32;

    pub fn per_client(base: u64, round: u32, client: u32) -> u64 {
        base | ((round as u64) << 16) | client as u64
    }
}

/// What the server receives from the authority: `(HE_pk, HE_eval)`.
#[derive(Clone, Debug)]
pub struct ServerShare {
    pub params: BfvParams,
    pub public: PublicKey,
    pub eval: Arc<EvaluationKeys>,
}

/// What client `i` receives: `(HE_pk, HE_sk, sk_i)`. The PASTA key is absent
/// outside hybrid mode.
#[derive(Clone)]
pub struct ClientShare {
    pub client_id: u32,
    pub params: BfvParams,
    pub public: PublicKey,
    pub secret: Arc<SecretKey>,
    pub pasta: Option<PastaKey>,
}

impl fmt::Debug for ClientShare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClientShare")
            .field("client_id", &self.client_id)
            .field("pasta", &self.pasta.as_ref().map(|_| "<redacted>"))
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub struct TpaKeyBundle {
    pub variant: Option<PastaVariant>,
    pub server: ServerShare,
    pub clients: Vec<ClientShare>,
}

/// One BFV key set for the whole system and a distinct PASTA key per
/// client. `variant = None` sets up the BFV-only baseline: no rotation keys
/// and no symmetric keys.
pub fn tpa_setup(
    n_clients: usize,
    params: &BfvParams,
    variant: Option<PastaVariant>,
    seed: Seed,
) -> Result<TpaKeyBundle> {
    if n_clients == 0 {
        return Err(Error::Invalid("at least one client is required".into()));
    }
    let rotations = match variant {
        Some(v) => rotation_steps(v, params.slot_count()),
        None => RotationSteps::default(),
    };
    let mut he_seed = [0u8; 32];
    derive_rng(seed, domain::HE_KEYS).fill_bytes(&mut he_seed);
    let keys = keygen(params, &rotations, he_seed)?;
    let secret = Arc::new(keys.secret);
    let mut clients = Vec::with_capacity(n_clients);
    for i in 0..n_clients {
        let pasta = variant.map(|v| PastaKey::random(v, &mut derive_rng(seed, domain::PASTA | i as u64)));
        clients.push(ClientShare {
            client_id: i as u32,
            params: params.clone(),
            public: keys.public.clone(),
            secret: secret.clone(),
            pasta,
        });
    }
    for (i, a) in clients.iter().enumerate() {
        if clients[..i].iter().any(|b| b.pasta.is_some() && b.pasta == a.pasta) {
            return Err(Error::Protocol("symmetric keys collided".into()));
        }
    }
    Ok(TpaKeyBundle {
        variant,
        server: ServerShare {
            params: params.clone(),
            public: keys.public,
            eval: Arc::new(keys.eval),
        },
        clients,
    })
}

/// Largest aggregate magnitude that still decodes: values in `[-32768, 32768]`
/// lift back exactly from `F_65537`.
pub const DECODE_LIMIT: u64 = P / 2;

/// Accepts iff `127 * x1 * x2 < 32768`, i.e. the weighted sum of
/// `x2` clients with `x1` batches each cannot wrap modulo `p`.
///
/// The power-of-two rule `2^(x1' + x2') <= 2^8` (batch and client counts
/// rounded up to powers of two) is a sufficient condition, see
/// [`power_of_two_rule`].
pub fn check_constraint(batches_per_client: u64, training_clients: u64) -> Result<()> {
    check_total(batches_per_client.saturating_mul(training_clients))
}

/// [`check_constraint`] for individual batch counts.
pub fn check_aggregate(ns: &[u64]) -> Result<()> {
    check_total(ns.iter().fold(0u64, |a, &n| a.saturating_add(n)))
}

fn check_total(total: u64) -> Result<()> {
    if total.saturating_mul(127) < DECODE_LIMIT {
        Ok(())
    } else {
        Err(Error::Constraint { total })
    }
}

pub fn power_of_two_rule(batches_per_client: u64, training_clients: u64) -> bool {
    batches_per_client
        .checked_next_power_of_two()
        .zip(training_clients.checked_next_power_of_two())
        .and_then(|(a, b)| a.checked_mul(b))
        .is_some_and(|x| x <= 256)
}

/// `k` clients drawn uniformly without replacement, sorted; depends only
/// on `(seed, round, stream)`.
pub fn select_clients(pool: &[u32], k: usize, round: u32, seed: Seed) -> Result<Vec<u32>> {
    select_from(pool, k, seed, domain::SELECT | round as u64)
}

pub(crate) fn select_from(pool: &[u32], k: usize, seed: Seed, stream: u64) -> Result<Vec<u32>> {
    if k > pool.len() {
        return Err(Error::Invalid(format!(
            "cannot select {k} of {} clients",
            pool.len()
        )));
    }
    let mut rng = derive_rng(seed, stream);
    let mut out: Vec<u32> = index::sample(&mut rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    out.sort_unstable();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub enum UpdatePayload {
    /// Plaintext float weights (unquantized plaintext baseline).
    PlainFloat(Vec<f32>),
    /// Plaintext quantized weights.
    PlainQuantized(Vec<i8>),
    /// Quantized weights encrypted directly under BFV.
    Bfv(Vec<Ciphertext>),
    /// PASTA chunks and the BFV-encrypted PASTA key.
    Hhe {
        chunks: Vec<SymCiphertextChunk>,
        sk_he: Ciphertext,
    },
}

/// The unit of upload.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientUpdate {
    pub client_id: u32,
    pub n_k: u64,
    pub param_count: u64,
    pub payload: UpdatePayload,
}

/// How a client protects its weights.
#[derive(Clone, Debug)]
pub struct Protection {
    pub mode: Mode,
    pub spec: QuantSpec,
    pub variant: PastaVariant,
    /// Values per BFV ciphertext in the BFV-only mode.
    pub chunk: usize,
    pub quantize_plain: bool,
}

/// Quantizes, encodes, pads and encrypts a client's weights. The PASTA
/// nonce is `(round, client_id)` and the chunk index is the counter; the
/// PASTA key is encrypted afresh every round.
pub fn protect_update(
    weights: &[f32],
    n_k: u64,
    round: u32,
    client_id: u32,
    share: Option<&ClientShare>,
    prot: &Protection,
    seed: Seed,
) -> Result<ClientUpdate> {
    if n_k == 0 {
        return Err(Error::Protocol("a client needs at least one batch".into()));
    }
    if share.is_some_and(|s| s.client_id != client_id) {
        return Err(Error::Protocol("keys belong to another client".into()));
    }
    let need = || share.ok_or_else(|| Error::Protocol("encryption needs the client's keys".into()));
    let mut rng = derive_rng(seed, domain::per_client(domain::ENCRYPT, round, client_id));
    let payload = match prot.mode {
        Mode::Plain if !prot.quantize_plain => UpdatePayload::PlainFloat(weights.to_vec()),
        Mode::Plain => UpdatePayload::PlainQuantized(quantize(weights, &prot.spec).values().to_vec()),
        Mode::Bfv => {
            let share = need()?;
            let q = quantize(weights, &prot.spec).padded(prot.chunk);
            let cts = encode_unsigned(&q)
                .chunks(prot.chunk)
                .map(|c| bfv::encrypt(&share.public, c, &mut rng))
                .collect::<hhefl_core::Result<Vec<_>>>()?;
            UpdatePayload::Bfv(cts)
        }
        Mode::Hhe => {
            let share = need()?;
            let key = share
                .pasta
                .as_ref()
                .ok_or_else(|| Error::Protocol("hybrid mode needs a PASTA key".into()))?;
            let variant = prot.variant;
            let t = variant.block_size();
            let q = quantize(weights, &prot.spec).padded(t);
            let chunks = encode_unsigned(&q)
                .chunks(t)
                .enumerate()
                .map(|(i, m)| {
                    let nonce = BlockNonce::for_round(round as u64, client_id as u64, i as u64);
                    sym_encrypt(m, key, &nonce, variant)
                })
                .collect::<hhefl_core::Result<Vec<_>>>()?;
            let sk_he = bfv::encrypt(&share.public, key.elements(), &mut rng)?;
            UpdatePayload::Hhe { chunks, sk_he }
        }
    };
    Ok(ClientUpdate {
        client_id,
        n_k,
        param_count: weights.len() as u64,
        payload,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum AggregateBody {
    /// `sum n_k w_k` in floating point.
    PlainFloat(Vec<f64>),
    /// `sum n_k q_k mod p`.
    PlainField(Vec<FieldElement>),
    /// Ciphertexts of `sum n_k q_k`, `per_ct` values in the first slots of each.
    Cipher { cts: Vec<Ciphertext>, per_ct: u32 },
}

/// The FedAvg numerator and its denominator `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateResult {
    pub n: u64,
    pub contributors: Vec<u32>,
    pub param_count: u64,
    pub body: AggregateBody,
}

/// Server-side cryptographic state; built from the server share only.
#[derive(Clone, Debug)]
pub struct ServerCrypto {
    params: Option<BfvParams>,
    hesd: Option<HesdContext>,
    per_ct: usize,
}

impl ServerCrypto {
    pub fn plain() -> Self {
        ServerCrypto {
            params: None,
            hesd: None,
            per_ct: 0,
        }
    }

    /// Transciphering is set up when `variant` is given; otherwise `per_ct`
    /// is the BFV-only packing.
    pub fn new(share: &ServerShare, variant: Option<PastaVariant>, per_ct: usize) -> Result<Self> {
        let hesd = variant
            .map(|v| HesdContext::new(&share.params, share.eval.clone(), v))
            .transpose()?;
        Ok(ServerCrypto {
            params: Some(share.params.clone()),
            per_ct: variant.map_or(per_ct, |v| v.block_size()),
            hesd,
        })
    }

    pub fn hesd(&self) -> Option<&HesdContext> {
        self.hesd.as_ref()
    }
}

/// Per-client server work in an aggregation.
#[derive(Clone, Debug)]
pub struct ContributionTiming {
    pub client_id: u32,
    pub hesd: Duration,
}

/// Checks an update against the round's expectations before aggregation.
pub fn validate_update(u: &ClientUpdate, mode: Mode, param_count: u64, chunk: usize) -> Result<()> {
    if u.n_k == 0 || u.param_count != param_count {
        return Err(Error::Protocol(format!("client {} sent a malformed update", u.client_id)));
    }
    let chunks = (param_count as usize).div_ceil(chunk.max(1));
    let ok = match (&u.payload, mode) {
        (UpdatePayload::PlainFloat(v), Mode::Plain) => v.len() as u64 == param_count,
        (UpdatePayload::PlainQuantized(v), Mode::Plain) => {
            v.len() as u64 == param_count && v.iter().all(|&x| x != i8::MIN)
        }
        (UpdatePayload::Bfv(cts), Mode::Bfv) => cts.len() == chunks,
        (UpdatePayload::Hhe { chunks: c, .. }, Mode::Hhe) => {
            c.len() == chunks
                && c.first().is_none_or(|f| f.counter == 0)
                && hhefl_core::hesd::check_consecutive(c).is_ok()
                && c.iter().all(|x| x.elems.len() == chunk)
        }
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Protocol(format!(
            "client {} sent an update that does not match the round",
            u.client_id
        )))
    }
}

// Per-client contribution `n_k * x_k` before summation.
enum Weighted {
    Float(Vec<f64>),
    Field(Vec<FieldElement>),
    Cipher(Vec<Ciphertext>),
}

fn weigh(update: &ClientUpdate, crypto: &ServerCrypto, round: u32) -> Result<(Weighted, Duration)> {
    let n_k = update.n_k;
    let scale_ct = |cts: Vec<Ciphertext>| -> Result<Vec<Ciphertext>> {
        let params = crypto
            .params
            .as_ref()
            .ok_or_else(|| Error::Protocol("server has no BFV parameters".into()))?;
        let factor = vec![FieldElement::from(n_k); params.slot_count()];
        Ok(cts
            .iter()
            .map(|c| bfv::he_plain_mul(c, &factor))
            .collect::<hhefl_core::Result<Vec<_>>>()?)
    };
    Ok(match &update.payload {
        UpdatePayload::PlainFloat(w) => (
            Weighted::Float(w.iter().map(|&x| n_k as f64 * x as f64).collect()),
            Duration::ZERO,
        ),
        UpdatePayload::PlainQuantized(q) => (
            Weighted::Field(
                q.iter()
                    .map(|&x| FieldElement::from_i64(x as i64) * FieldElement::from(n_k))
                    .collect(),
            ),
            Duration::ZERO,
        ),
        UpdatePayload::Bfv(cts) => (Weighted::Cipher(scale_ct(cts.clone())?), Duration::ZERO),
        UpdatePayload::Hhe { chunks, sk_he } => {
            let mut ctx = crypto
                .hesd
                .clone()
                .ok_or_else(|| Error::Protocol("server is not set up for transciphering".into()))?;
            let nonce = BlockNonce::for_round(round as u64, update.client_id as u64, 0).nonce;
            let start = Instant::now();
            let (out, _) = timed_hesd_chunks(&mut ctx, nonce, chunks, sk_he)?;
            let took = start.elapsed();
            let cts = out.into_iter().map(|c| c.ct).collect();
            (Weighted::Cipher(scale_ct(cts)?), took)
        }
    })
}

/// Chunk-wise `sum_k n_k x_k` over the updates, transciphering hybrid
/// updates first. Transciphering runs on up to `workers` threads; the sum is
/// committed in client order.
pub fn server_aggregation_phase(
    updates: &[ClientUpdate],
    crypto: &ServerCrypto,
    round: u32,
    workers: usize,
) -> Result<(AggregateResult, Vec<ContributionTiming>)> {
    if updates.is_empty() {
        return Err(Error::Protocol(format!("round {round}: no client update survived")));
    }
    let ns: Vec<u64> = updates.iter().map(|u| u.n_k).collect();
    check_aggregate(&ns)?;
    let param_count = updates[0].param_count;
    if updates.iter().any(|u| u.param_count != param_count) {
        return Err(Error::Protocol("updates disagree on the parameter count".into()));
    }
    let mut weighted = Vec::with_capacity(updates.len());
    for batch in updates.chunks(workers.max(1)) {
        let done: Vec<Result<(Weighted, Duration)>> = if batch.len() == 1 {
            vec![weigh(&batch[0], crypto, round)]
        } else {
            thread::scope(|s| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|u| s.spawn(move || weigh(u, crypto, round)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Protocol("worker panicked".into()))))
                    .collect()
            })
        };
        for d in done {
            weighted.push(d?);
        }
    }
    let timings = updates
        .iter()
        .zip(&weighted)
        .map(|(u, (_, d))| ContributionTiming {
            client_id: u.client_id,
            hesd: *d,
        })
        .collect();
    let mut parts = weighted.into_iter().map(|(w, _)| w);
    let first = parts.next().expect("non-empty");
    let body = parts.try_fold(first, |acc, w| -> Result<Weighted> {
        Ok(match (acc, w) {
            (Weighted::Float(mut a), Weighted::Float(b)) => {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                Weighted::Float(a)
            }
            (Weighted::Field(mut a), Weighted::Field(b)) => {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += *y);
                Weighted::Field(a)
            }
            (Weighted::Cipher(a), Weighted::Cipher(b)) if a.len() == b.len() => Weighted::Cipher(
                a.iter()
                    .zip(&b)
                    .map(|(x, y)| bfv::he_add(x, y))
                    .collect::<hhefl_core::Result<Vec<_>>>()?,
            ),
            _ => return Err(Error::Protocol("updates use different modes".into())),
        })
    })?;
    let per_ct = crypto.per_ct as u32;
    let body = match body {
        Weighted::Float(v) => AggregateBody::PlainFloat(v),
        Weighted::Field(v) => AggregateBody::PlainField(v),
        Weighted::Cipher(cts) => AggregateBody::Cipher {
            cts: compact(cts)?,
            per_ct,
        },
    };
    Ok((
        AggregateResult {
            n: ns.iter().sum(),
            contributors: updates.iter().map(|u| u.client_id).collect(),
            param_count,
            body,
        },
        timings,
    ))
}

/// Estimated budget a ciphertext keeps after being shrunk for download.
pub const DOWNLOAD_RESERVE_BITS: f64 = 10.0;

/// Drops all ciphertexts to the lowest level that keeps
/// [`DOWNLOAD_RESERVE_BITS`] of estimated budget.
pub fn compact(cts: Vec<Ciphertext>) -> Result<Vec<Ciphertext>> {
    let Some(first) = cts.first() else {
        return Ok(cts);
    };
    let top = first.params().level_count() - 1;
    let start = cts.iter().map(Ciphertext::level).max().unwrap_or(0);
    let worst = cts
        .iter()
        .min_by(|a, b| a.estimated_budget().total_cmp(&b.estimated_budget()))
        .expect("non-empty");
    let mut level = start;
    for l in (start..=top).rev() {
        if bfv::mod_drop_to(worst, l.max(worst.level()))?.estimated_budget() >= DOWNLOAD_RESERVE_BITS {
            level = l;
            break;
        }
    }
    Ok(cts
        .iter()
        .map(|c| bfv::mod_drop_to(c, level.max(c.level())))
        .collect::<hhefl_core::Result<Vec<_>>>()?)
}

/// The decoded aggregate at a client: the integer sums (absent for the
/// float baseline) and the averaged, dequantized weights.
#[derive(Clone, Debug, PartialEq)]
pub struct OpenedAggregate {
    pub sums: Option<Vec<i64>>,
    pub weights: Vec<f32>,
}

/// Decrypts (if needed), lifts, divides by `n` and dequantizes.
pub fn open_aggregate(
    agg: &AggregateResult,
    secret: Option<&SecretKey>,
    spec: &QuantSpec,
) -> Result<OpenedAggregate> {
    let p = agg.param_count as usize;
    if agg.n == 0 {
        return Err(Error::Protocol("aggregate covers no batches".into()));
    }
    let sums = match &agg.body {
        AggregateBody::PlainFloat(v) => {
            if v.len() != p {
                return Err(Error::Protocol("aggregate has the wrong length".into()));
            }
            let n = agg.n as f64;
            return Ok(OpenedAggregate {
                sums: None,
                weights: v.iter().map(|&x| (x / n) as f32).collect(),
            });
        }
        AggregateBody::PlainField(v) => decode_centered(v),
        AggregateBody::Cipher { cts, per_ct } => {
            let sk = secret.ok_or_else(|| Error::Protocol("decryption needs the secret key".into()))?;
            let mut vals = Vec::with_capacity(cts.len() * *per_ct as usize);
            for ct in cts {
                let slots = bfv::decrypt(ct, sk)?;
                vals.extend_from_slice(&slots[..*per_ct as usize]);
            }
            decode_centered(&vals)
        }
    };
    if sums.len() < p {
        return Err(Error::Protocol("aggregate is shorter than the model".into()));
    }
    let sums = sums[..p].to_vec();
    let weights = average_dequantize(&sums, agg.n, spec)?
        .into_iter()
        .map(|x| x as f32)
        .collect();
    Ok(OpenedAggregate {
        sums: Some(sums),
        weights,
    })
}

/// A client's evaluation of the global model on its local test split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub client_id: u32,
    pub accuracy: f64,
    pub loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub test_count: u64,
}

impl EvalReport {
    pub fn new(client_id: u32, m: &EvalMetrics) -> Self {
        EvalReport {
            client_id,
            accuracy: m.accuracy,
            loss: m.loss,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            test_count: m.count as u64,
        }
    }
}

/// Test-count-weighted means of the clients' reports.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlobalMetrics {
    pub accuracy: f64,
    pub loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub test_count: u64,
    pub reports: usize,
}

pub fn server_evaluation_phase(reports: &[EvalReport]) -> Result<GlobalMetrics> {
    let total: u64 = reports.iter().map(|r| r.test_count).sum();
    if reports.is_empty() || total == 0 {
        return Err(Error::Protocol("no evaluation reports".into()));
    }
    let mean = |f: fn(&EvalReport) -> f64| {
        reports.iter().map(|r| f(r) * r.test_count as f64).sum::<f64>() / total as f64
    };
    Ok(GlobalMetrics {
        accuracy: mean(|r| r.accuracy),
        loss: mean(|r| r.loss),
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f1: mean(|r| r.f1),
        test_count: total,
        reports: reports.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use hhefl_core::rng::seed_from_u64;

    #[test]
    fn constraint_examples() {
        assert!(check_constraint(63, 4).is_ok());
        assert!(check_constraint(64, 8).is_err());
        assert!(check_constraint(1, 1).is_ok());
        assert!(check_constraint(258, 1).is_ok());
        assert!(check_constraint(259, 1).is_err());
        assert!(check_aggregate(&[63, 63, 63, 63]).is_ok());
        let msg = check_constraint(64, 8).unwrap_err().to_string();
        assert!(msg.contains("32768"), "{msg}");
    }

    #[test]
    fn power_of_two_rule_is_sufficient() {
        for x1 in 1..300 {
            for x2 in 1..20 {
                if power_of_two_rule(x1, x2) {
                    assert!(check_constraint(x1, x2).is_ok());
                }
            }
        }
        assert!(power_of_two_rule(64, 4));
        assert!(!power_of_two_rule(63, 5));
    }

    #[test]
    fn selection() {
        let pool: Vec<u32> = (0..12).collect();
        let s = seed_from_u64(1);
        assert_eq!(select_clients(&pool, 12, 3, s).unwrap(), pool);
        let a = select_clients(&pool, 4, 7, s).unwrap();
        assert_eq!(a, select_clients(&pool, 4, 7, s).unwrap());
        assert_eq!(a.len(), 4);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(select_clients(&pool, 13, 1, s).is_err());
    }

    #[test]
    fn selection_frequency_is_uniform() {
        let pool: Vec<u32> = (0..12).collect();
        let mut hits = [0usize; 12];
        for r in 0..1000 {
            for c in select_clients(&pool, 4, r, seed_from_u64(2)).unwrap() {
                hits[c as usize] += 1;
            }
        }
        for h in hits {
            let f = h as f64 / 1000.0;
            assert!((f - 4.0 / 12.0).abs() < 0.05, "frequency {f}");
        }
    }

    #[test]
    fn weighted_evaluation() {
        let r = |id, acc, count| EvalReport {
            client_id: id,
            accuracy: acc,
            loss: 1.0,
            precision: acc,
            recall: acc,
            f1: acc,
            test_count: count,
        };
        let g = server_evaluation_phase(&[r(0, 1.0, 100), r(1, 0.5, 300)]).unwrap();
        assert!((g.accuracy - 0.625).abs() < 1e-12);
        let g = server_evaluation_phase(&[r(0, 0.2, 10), r(1, 0.4, 10)]).unwrap();
        assert!((g.accuracy - 0.3).abs() < 1e-12);
        assert!(server_evaluation_phase(&[]).is_err());
    }

    fn plain_update(id: u32, n_k: u64, q: &[i8]) -> ClientUpdate {
        ClientUpdate {
            client_id: id,
            n_k,
            param_count: q.len() as u64,
            payload: UpdatePayload::PlainQuantized(q.to_vec()),
        }
    }

    #[test]
    fn two_client_hand_example() {
        let spec = QuantSpec::default();
        let ups = [plain_update(0, 1, &[0]), plain_update(1, 3, &[4])];
        let (agg, _) = server_aggregation_phase(&ups, &ServerCrypto::plain(), 1, 1).unwrap();
        assert_eq!(agg.n, 4);
        let open = open_aggregate(&agg, None, &spec).unwrap();
        assert_eq!(open.sums, Some(vec![12]));
        assert!((open.weights[0] as f64 - 3.0 / spec.scale_factor()).abs() < 1e-6);
    }

    #[test]
    fn dropout_removes_one_term() {
        let ups = [
            plain_update(0, 5, &[10, -20, 127]),
            plain_update(1, 7, &[-127, 3, 0]),
            plain_update(2, 2, &[1, 1, -1]),
        ];
        let c = ServerCrypto::plain();
        let spec = QuantSpec::default();
        let all = open_aggregate(&server_aggregation_phase(&ups, &c, 1, 1).unwrap().0, None, &spec).unwrap();
        let some = open_aggregate(&server_aggregation_phase(&ups[..2], &c, 1, 1).unwrap().0, None, &spec).unwrap();
        let diff: Vec<i64> = all.sums.unwrap().iter().zip(some.sums.unwrap()).map(|(a, b)| a - b).collect();
        assert_eq!(diff, vec![2, 2, -2]);
        assert!(server_aggregation_phase(&[], &c, 1, 1).is_err());
        let heavy = [plain_update(0, 200, &[1]), plain_update(1, 100, &[1])];
        assert!(matches!(
            server_aggregation_phase(&heavy, &c, 1, 1),
            Err(Error::Constraint { total: 300 })
        ));
    }
}
