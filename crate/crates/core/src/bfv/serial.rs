// Object files: "HHEF" || version || object type || ring elements.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::keys::{GaloisKeys, KeySwitchKey, PublicKey, RelinKey, SecretKey};
use super::params::BfvParams;
use super::{noise, Ciphertext};
use crate::error::{Error, Result};
use crate::ring::{Domain, RingElement};

pub const MAGIC: [u8; 4] = *b"HHEF";
pub const FORMAT_VERSION: u8 = 1;
pub(crate) const HEADER_LEN: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ObjectType {
    Ciphertext = 1,
    PublicKey = 2,
    SecretKey = 3,
    RelinKey = 4,
    GaloisKeys = 5,
}

// Galois-key entries are tagged with their step; this value marks the row swap.
const ROW_SWAP_TAG: i64 = i64::MIN;

fn header(kind: ObjectType, out: &mut Vec<u8>) {
    out.extend_from_slice(&MAGIC);
    out.push(FORMAT_VERSION);
    out.push(kind as u8);
}

fn check_header(bytes: &[u8], kind: ObjectType) -> Result<&[u8]> {
    if bytes.len() < HEADER_LEN || bytes[..4] != MAGIC {
        return Err(Error::Format("missing HHEF magic"));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(Error::Format("unsupported format version"));
    }
    if bytes[5] != kind as u8 {
        return Err(Error::Format("unexpected object type"));
    }
    Ok(&bytes[HEADER_LEN..])
}

/// Object type of a serialized blob, if it carries a valid header.
pub fn peek_type(bytes: &[u8]) -> Option<ObjectType> {
    if bytes.len() < HEADER_LEN || bytes[..4] != MAGIC || bytes[4] != FORMAT_VERSION {
        return None;
    }
    [
        ObjectType::Ciphertext,
        ObjectType::PublicKey,
        ObjectType::SecretKey,
        ObjectType::RelinKey,
        ObjectType::GaloisKeys,
    ]
    .into_iter()
    .find(|t| *t as u8 == bytes[5])
}

fn read_elements(
    params: &BfvParams,
    mut body: &[u8],
    count: Option<usize>,
) -> Result<Vec<RingElement>> {
    let mut out = Vec::new();
    while !body.is_empty() && count.map_or(true, |c| out.len() < c) {
        if body.len() < 7 {
            return Err(Error::Format("truncated ring element header"));
        }
        let moduli = u16::from_le_bytes([body[4], body[5]]) as usize;
        let level = params
            .level_count()
            .checked_sub(moduli)
            .ok_or(Error::Format("too many moduli for parameters"))?;
        let (el, used) = RingElement::read_from(&params.level(level).ctx, body)?;
        out.push(el);
        body = &body[used..];
    }
    if let Some(c) = count {
        if out.len() != c {
            return Err(Error::Format("wrong number of ring elements"));
        }
    }
    Ok(out)
}

fn read_exact_elements(params: &BfvParams, body: &[u8], count: usize) -> Result<Vec<RingElement>> {
    let els = read_elements(params, body, Some(count))?;
    let used: usize = els.iter().map(|e| e.serialized_len()).sum();
    if used != body.len() {
        return Err(Error::Format("trailing bytes"));
    }
    Ok(els)
}

impl Ciphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        header(ObjectType::Ciphertext, &mut out);
        for p in &self.parts {
            p.write_to(&mut out);
        }
        out
    }

    /// Parses a ciphertext. The noise estimate of a parsed ciphertext is
    /// that of a fresh encryption at its level.
    pub fn from_bytes(params: &BfvParams, bytes: &[u8]) -> Result<Self> {
        let body = check_header(bytes, ObjectType::Ciphertext)?;
        let parts = read_elements(params, body, None)?;
        if !(2..=3).contains(&parts.len()) {
            return Err(Error::Format("ciphertext must have 2 or 3 components"));
        }
        let ctx = parts[0].context().clone();
        if parts
            .iter()
            .any(|p| p.context().moduli() != ctx.moduli() || p.domain() != Domain::Ntt)
        {
            return Err(Error::Format("inconsistent ciphertext components"));
        }
        let level = params
            .level_of(&ctx)
            .ok_or(Error::Format("modulus chain mismatch"))?;
        Ok(Ciphertext::from_parts(
            params,
            level,
            parts,
            noise::fresh(params, level),
        ))
    }
}

impl PublicKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        header(ObjectType::PublicKey, &mut out);
        self.p0.write_to(&mut out);
        self.p1.write_to(&mut out);
        out
    }

    pub fn from_bytes(params: &BfvParams, bytes: &[u8]) -> Result<Self> {
        let body = check_header(bytes, ObjectType::PublicKey)?;
        let mut els = read_exact_elements(params, body, 2)?;
        let p1 = els.pop().unwrap();
        let p0 = els.pop().unwrap();
        for e in [&p0, &p1] {
            if e.context().len() != params.context().len() || e.domain() != Domain::Ntt {
                return Err(Error::Format(
                    "public key must be at the top level in NTT form",
                ));
            }
        }
        Ok(PublicKey {
            params: params.clone(),
            p0,
            p1,
        })
    }
}

impl SecretKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        header(ObjectType::SecretKey, &mut out);
        let wide: Vec<i64> = self.coeffs.iter().map(|&c| c as i64).collect();
        RingElement::from_signed(self.params.context(), &wide)
            .expect("context matches")
            .write_to(&mut out);
        out
    }

    pub fn from_bytes(params: &BfvParams, bytes: &[u8]) -> Result<Self> {
        let body = check_header(bytes, ObjectType::SecretKey)?;
        let els = read_exact_elements(params, body, 1)?;
        let e = &els[0];
        if e.context().len() != params.context().len() || e.domain() != Domain::Coefficient {
            return Err(Error::Format(
                "secret key must be a top-level coefficient element",
            ));
        }
        let m = params.context().moduli()[0];
        let coeffs = e
            .residue(0)
            .iter()
            .map(|&x| m.center(x))
            .map(|c| {
                if (-1..=1).contains(&c) {
                    Ok(c as i8)
                } else {
                    Err(Error::Format("secret key is not ternary"))
                }
            })
            .collect::<Result<Vec<i8>>>()?;
        let wide: Vec<i64> = coeffs.iter().map(|&c| c as i64).collect();
        if RingElement::from_signed(params.context(), &wide)? != *e {
            return Err(Error::Format("secret key residues disagree"));
        }
        SecretKey::from_coeffs(params, coeffs)
    }
}

fn write_ksk(k: &KeySwitchKey, out: &mut Vec<u8>) {
    for [b, a] in &k.digits {
        b.write_to(out);
        a.write_to(out);
    }
}

fn read_ksk(params: &BfvParams, body: &[u8]) -> Result<(KeySwitchKey, usize)> {
    let l = params.context().len();
    let els = read_elements(params, body, Some(2 * l))?;
    let mut used = 0;
    let mut digits = Vec::with_capacity(l);
    let mut it = els.into_iter();
    while let (Some(b), Some(a)) = (it.next(), it.next()) {
        used += b.serialized_len() + a.serialized_len();
        if b.context().len() != l || a.context().len() != l {
            return Err(Error::Format("key-switching key must be at the top level"));
        }
        digits.push([b, a]);
    }
    Ok((KeySwitchKey { digits }, used))
}

impl RelinKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        header(ObjectType::RelinKey, &mut out);
        write_ksk(&self.0, &mut out);
        out
    }

    pub fn from_bytes(params: &BfvParams, bytes: &[u8]) -> Result<Self> {
        let body = check_header(bytes, ObjectType::RelinKey)?;
        let (k, used) = read_ksk(params, body)?;
        if used != body.len() {
            return Err(Error::Format("trailing bytes"));
        }
        Ok(RelinKey(k))
    }
}

impl GaloisKeys {
    /// After the header: entry count (u16), then per entry the rotation step
    /// (i64, `i64::MIN` for the row swap) followed by the key's ring elements.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        header(ObjectType::GaloisKeys, &mut out);
        let count = self.steps.len() + self.row_swap.is_some() as usize;
        out.extend_from_slice(&(count as u16).to_le_bytes());
        for (step, k) in &self.steps {
            out.extend_from_slice(&step.to_le_bytes());
            write_ksk(k, &mut out);
        }
        if let Some(k) = &self.row_swap {
            out.extend_from_slice(&ROW_SWAP_TAG.to_le_bytes());
            write_ksk(k, &mut out);
        }
        out
    }

    pub fn from_bytes(params: &BfvParams, bytes: &[u8]) -> Result<Self> {
        let mut body = check_header(bytes, ObjectType::GaloisKeys)?;
        if body.len() < 2 {
            return Err(Error::Format("truncated galois key table"));
        }
        let count = u16::from_le_bytes([body[0], body[1]]) as usize;
        body = &body[2..];
        let mut steps = BTreeMap::new();
        let mut row_swap = None;
        for _ in 0..count {
            if body.len() < 8 {
                return Err(Error::Format("truncated galois key entry"));
            }
            let step = i64::from_le_bytes(body[..8].try_into().unwrap());
            let (k, used) = read_ksk(params, &body[8..])?;
            body = &body[8 + used..];
            if step == ROW_SWAP_TAG {
                row_swap = Some(k);
            } else if steps.insert(step, k).is_some() {
                return Err(Error::Format("duplicate rotation step"));
            }
        }
        if !body.is_empty() {
            return Err(Error::Format("trailing bytes"));
        }
        Ok(GaloisKeys { steps, row_swap })
    }
}
