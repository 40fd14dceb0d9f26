//! Message envelope and payload encodings.
//!
//! Envelope: `type (1 byte) || round (u32) || payload length (u64) ||
//! payload`. All integers are little-endian. Byte blobs inside payloads are
//! prefixed with their length as a u64.

use std::io::{self, Read, Write};

use hhefl_core::bfv::{BfvParams, Ciphertext, GaloisKeys, PublicKey, RelinKey, SecretKey};
use hhefl_core::pasta::{PastaKey, PastaVariant, SymCiphertextChunk};
use hhefl_core::FieldElement;

use crate::error::{format_err, Result};
use crate::protocol::{AggregateBody, AggregateResult, ClientUpdate, EvalReport, UpdatePayload};

pub const HEADER_LEN: usize = 13;

/// Frames above this size are rejected as malformed.
pub const MAX_PAYLOAD: u64 = 1 << 36;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Keys = 1,
    GlobalPlain = 2,
    GlobalCt = 3,
    Update = 4,
    EvalReport = 5,
    Select = 6,
    Abort = 7,
}

impl MsgType {
    pub const ALL: [MsgType; 7] = [
        MsgType::Keys,
        MsgType::GlobalPlain,
        MsgType::GlobalCt,
        MsgType::Update,
        MsgType::EvalReport,
        MsgType::Select,
        MsgType::Abort,
    ];

    pub fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| *t as u8 == b)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub kind: MsgType,
    pub round: u32,
    pub payload: Vec<u8>,
}

impl Envelope {
    pub fn new(kind: MsgType, round: u32, payload: Vec<u8>) -> Self {
        Envelope {
            kind,
            round,
            payload,
        }
    }

    /// Size on the wire.
    pub fn frame_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    fn header(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[0] = self.kind as u8;
        h[1..5].copy_from_slice(&self.round.to_le_bytes());
        h[5..].copy_from_slice(&(self.payload.len() as u64).to_le_bytes());
        h
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.frame_len());
        out.extend_from_slice(&self.header());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (kind, round, len) = parse_header(bytes.get(..HEADER_LEN).ok_or_else(|| format_err("short frame"))?)?;
        if bytes.len() - HEADER_LEN != len as usize {
            return Err(format_err("frame length does not match its header"));
        }
        Ok(Envelope::new(kind, round, bytes[HEADER_LEN..].to_vec()))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.header())?;
        w.write_all(&self.payload)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut h = [0u8; HEADER_LEN];
        r.read_exact(&mut h)?;
        let (kind, round, len) = parse_header(&h)?;
        let mut payload = Vec::with_capacity(len.min(1 << 20) as usize);
        r.take(len).read_to_end(&mut payload)?;
        if payload.len() as u64 != len {
            return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into());
        }
        Ok(Envelope::new(kind, round, payload))
    }
}

fn parse_header(h: &[u8]) -> Result<(MsgType, u32, u64)> {
    let kind = MsgType::from_byte(h[0]).ok_or_else(|| format_err("unknown message type"))?;
    let round = u32::from_le_bytes(h[1..5].try_into().unwrap());
    let len = u64::from_le_bytes(h[5..13].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(format_err("frame exceeds the size limit"));
    }
    Ok((kind, round, len))
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn blob(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(format_err("truncated payload"));
        }
        let (a, b) = self.buf.split_at(n);
        self.buf = b;
        Ok(a)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        if n > self.buf.len() as u64 {
            return Err(format_err("length prefix exceeds the payload"));
        }
        Ok(n as usize)
    }
    fn blob(&mut self) -> Result<&'a [u8]> {
        let n = self.len()?;
        self.take(n)
    }
    fn finish(self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(format_err("trailing bytes in payload"))
        }
    }
}

/// Key material sent by the authority, and a client's announcement of
/// itself to the server.
#[derive(Clone, Debug)]
pub enum KeysMessage {
    Server {
        public: PublicKey,
        relin: RelinKey,
        galois: GaloisKeys,
    },
    Client {
        client_id: u32,
        public: PublicKey,
        secret: SecretKey,
        pasta: Option<PastaKey>,
    },
    Hello {
        client_id: u32,
    },
}

pub fn encode_keys(k: &KeysMessage) -> Vec<u8> {
    let mut w = Writer::default();
    match k {
        KeysMessage::Server {
            public,
            relin,
            galois,
        } => {
            w.u8(0);
            w.blob(&public.to_bytes());
            w.blob(&relin.to_bytes());
            w.blob(&galois.to_bytes());
        }
        KeysMessage::Client {
            client_id,
            public,
            secret,
            pasta,
        } => {
            w.u8(1);
            w.u32(*client_id);
            w.blob(&public.to_bytes());
            w.blob(&secret.to_bytes());
            match pasta {
                Some(p) => {
                    w.u8(1);
                    w.blob(&p.to_bytes());
                }
                None => w.u8(0),
            }
        }
        KeysMessage::Hello { client_id } => {
            w.u8(2);
            w.u32(*client_id);
        }
    }
    w.0
}

/// Reads the client id from a hello; needs no key parameters.
pub fn decode_hello(bytes: &[u8]) -> Result<u32> {
    let mut r = Reader { buf: bytes };
    if r.u8()? != 2 {
        return Err(format_err("expected a hello"));
    }
    let id = r.u32()?;
    r.finish()?;
    Ok(id)
}

pub fn decode_keys(bytes: &[u8], params: &BfvParams, variant: Option<PastaVariant>) -> Result<KeysMessage> {
    let mut r = Reader { buf: bytes };
    let msg = match r.u8()? {
        0 => KeysMessage::Server {
            public: PublicKey::from_bytes(params, r.blob()?)?,
            relin: RelinKey::from_bytes(params, r.blob()?)?,
            galois: GaloisKeys::from_bytes(params, r.blob()?)?,
        },
        1 => {
            let client_id = r.u32()?;
            let public = PublicKey::from_bytes(params, r.blob()?)?;
            let secret = SecretKey::from_bytes(params, r.blob()?)?;
            let pasta = match r.u8()? {
                0 => None,
                _ => {
                    let v = variant.ok_or_else(|| format_err("PASTA key without a variant"))?;
                    Some(PastaKey::from_bytes(r.blob()?, v)?)
                }
            };
            KeysMessage::Client {
                client_id,
                public,
                secret,
                pasta,
            }
        }
        2 => KeysMessage::Hello { client_id: r.u32()? },
        _ => return Err(format_err("unknown key message")),
    };
    r.finish()?;
    Ok(msg)
}

pub fn encode_global_plain(w: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * w.len());
    out.extend_from_slice(&(w.len() as u64).to_le_bytes());
    for x in w {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_global_plain(bytes: &[u8]) -> Result<Vec<f32>> {
    let mut r = Reader { buf: bytes };
    let n = r.u64()? as usize;
    if n.checked_mul(4) != Some(r.buf.len()) {
        return Err(format_err("weight vector length mismatch"));
    }
    let out = r
        .take(4 * n)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(out)
}

fn write_cts(w: &mut Writer, cts: &[Ciphertext]) {
    w.u32(cts.len() as u32);
    for c in cts {
        w.blob(&c.to_bytes());
    }
}

fn read_cts(r: &mut Reader, params: &BfvParams) -> Result<Vec<Ciphertext>> {
    let n = r.u32()? as usize;
    (0..n)
        .map(|_| Ok(Ciphertext::from_bytes(params, r.blob()?)?))
        .collect()
}

fn need_params(params: Option<&BfvParams>) -> Result<&BfvParams> {
    params.ok_or_else(|| format_err("ciphertext payload without BFV parameters"))
}

pub fn encode_aggregate(a: &AggregateResult) -> Vec<u8> {
    let mut w = Writer::default();
    w.u64(a.n);
    w.u64(a.param_count);
    w.u32(a.contributors.len() as u32);
    a.contributors.iter().for_each(|&c| w.u32(c));
    match &a.body {
        AggregateBody::PlainFloat(v) => {
            w.u8(0);
            w.u64(v.len() as u64);
            v.iter().for_each(|&x| w.f64(x));
        }
        AggregateBody::PlainField(v) => {
            w.u8(1);
            w.u64(v.len() as u64);
            v.iter().for_each(|x| w.u32(x.value() as u32));
        }
        AggregateBody::Cipher { cts, per_ct } => {
            w.u8(2);
            w.u32(*per_ct);
            write_cts(&mut w, cts);
        }
    }
    w.0
}

pub fn decode_aggregate(bytes: &[u8], params: Option<&BfvParams>) -> Result<AggregateResult> {
    let mut r = Reader { buf: bytes };
    let n = r.u64()?;
    let param_count = r.u64()?;
    let k = r.u32()? as usize;
    let contributors = (0..k).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let body = match r.u8()? {
        0 => {
            let len = r.len()?;
            AggregateBody::PlainFloat((0..len).map(|_| r.f64()).collect::<Result<_>>()?)
        }
        1 => {
            let len = r.len()?;
            let v = (0..len)
                .map(|_| {
                    let x = r.u32()? as u64;
                    if x >= hhefl_core::P {
                        return Err(format_err("field element out of range"));
                    }
                    Ok(FieldElement::from(x))
                })
                .collect::<Result<_>>()?;
            AggregateBody::PlainField(v)
        }
        2 => {
            let per_ct = r.u32()?;
            AggregateBody::Cipher {
                per_ct,
                cts: read_cts(&mut r, need_params(params)?)?,
            }
        }
        _ => return Err(format_err("unknown aggregate body")),
    };
    r.finish()?;
    Ok(AggregateResult {
        n,
        contributors,
        param_count,
        body,
    })
}

/// A global model message: the aggregate and whether the receiver should
/// evaluate it (or only adopt it before training).
pub fn encode_global_ct(a: &AggregateResult, evaluate: bool) -> Vec<u8> {
    let mut out = vec![u8::from(evaluate)];
    out.extend_from_slice(&encode_aggregate(a));
    out
}

pub fn decode_global_ct(bytes: &[u8], params: Option<&BfvParams>) -> Result<(AggregateResult, bool)> {
    let (&flag, rest) = bytes
        .split_first()
        .ok_or_else(|| format_err("empty global model message"))?;
    if flag > 1 {
        return Err(format_err("bad evaluation flag"));
    }
    Ok((decode_aggregate(rest, params)?, flag == 1))
}

pub fn encode_update(u: &ClientUpdate) -> Vec<u8> {
    let mut w = Writer::default();
    w.u32(u.client_id);
    w.u64(u.n_k);
    w.u64(u.param_count);
    match &u.payload {
        UpdatePayload::PlainFloat(v) => {
            w.u8(0);
            w.u64(v.len() as u64);
            v.iter().for_each(|x| w.0.extend_from_slice(&x.to_le_bytes()));
        }
        UpdatePayload::PlainQuantized(v) => {
            w.u8(1);
            w.u64(v.len() as u64);
            w.0.extend(v.iter().map(|&x| x as u8));
        }
        UpdatePayload::Bfv(cts) => {
            w.u8(2);
            write_cts(&mut w, cts);
        }
        UpdatePayload::Hhe { chunks, sk_he } => {
            w.u8(3);
            w.blob(&sk_he.to_bytes());
            w.u32(chunks.len() as u32);
            w.u32(chunks.first().map_or(0, |c| c.elems.len() as u32));
            for c in chunks {
                c.write_to(&mut w.0);
            }
        }
    }
    w.0
}

pub fn decode_update(bytes: &[u8], params: Option<&BfvParams>) -> Result<ClientUpdate> {
    let mut r = Reader { buf: bytes };
    let client_id = r.u32()?;
    let n_k = r.u64()?;
    let param_count = r.u64()?;
    let payload = match r.u8()? {
        0 => {
            let n = r.len()?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| format_err("length overflow"))?)?;
            UpdatePayload::PlainFloat(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        }
        1 => {
            let n = r.len()?;
            UpdatePayload::PlainQuantized(r.take(n)?.iter().map(|&b| b as i8).collect())
        }
        2 => UpdatePayload::Bfv(read_cts(&mut r, need_params(params)?)?),
        3 => {
            let sk_he = Ciphertext::from_bytes(need_params(params)?, r.blob()?)?;
            let count = r.u32()? as usize;
            let t = r.u32()? as usize;
            let len = 8 + 8 * t;
            let chunks = (0..count)
                .map(|_| Ok(SymCiphertextChunk::from_bytes(r.take(len)?, t)?))
                .collect::<Result<Vec<_>>>()?;
            UpdatePayload::Hhe { chunks, sk_he }
        }
        _ => return Err(format_err("unknown update payload")),
    };
    r.finish()?;
    Ok(ClientUpdate {
        client_id,
        n_k,
        param_count,
        payload,
    })
}

pub fn encode_report(e: &EvalReport) -> Vec<u8> {
    let mut w = Writer::default();
    w.u32(e.client_id);
    for x in [e.accuracy, e.loss, e.precision, e.recall, e.f1] {
        w.f64(x);
    }
    w.u64(e.test_count);
    w.0
}

pub fn decode_report(bytes: &[u8]) -> Result<EvalReport> {
    let mut r = Reader { buf: bytes };
    let e = EvalReport {
        client_id: r.u32()?,
        accuracy: r.f64()?,
        loss: r.f64()?,
        precision: r.f64()?,
        recall: r.f64()?,
        f1: r.f64()?,
        test_count: r.u64()?,
    };
    r.finish()?;
    if !(0.0..=1.0).contains(&e.accuracy) || e.test_count == 0 {
        return Err(format_err("evaluation report out of range"));
    }
    Ok(e)
}

pub fn encode_abort(reason: &str) -> Vec<u8> {
    reason.as_bytes().to_vec()
}

pub fn decode_abort(bytes: &[u8]) -> Result<String> {
    String::from_utf8(bytes.to_vec()).map_err(|_| format_err("abort reason is not UTF-8"))
}

/// Exact upload size of an update, split into weights and key material.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UploadBytes {
    pub weights: usize,
    pub key: usize,
    /// The whole UPDATE frame, envelope included.
    pub frame: usize,
}

impl UploadBytes {
    pub fn total(&self) -> usize {
        self.weights + self.key
    }
}

/// Measures an update on its serialized form.
pub fn measure_upload(u: &ClientUpdate) -> UploadBytes {
    let (weights, key) = match &u.payload {
        UpdatePayload::PlainFloat(v) => (4 * v.len(), 0),
        UpdatePayload::PlainQuantized(v) => (v.len(), 0),
        UpdatePayload::Bfv(cts) => (cts.iter().map(|c| c.to_bytes().len()).sum(), 0),
        UpdatePayload::Hhe { chunks, sk_he } => (
            chunks.iter().map(|c| c.to_bytes().len()).sum(),
            sk_he.to_bytes().len(),
        ),
    };
    UploadBytes {
        weights,
        key,
        frame: HEADER_LEN + encode_update(u).len(),
    }
}
