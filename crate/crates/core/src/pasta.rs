//! The PASTA stream cipher over F_65537.
//!
//! A keystream block is computed from the secret key `(k_L, k_R)` of `2t`
//! field elements by `r` rounds of affine layer followed by S-box (Feistel
//! square for all but the last round, cube for the last), then one more
//! affine layer; the left half is the output. Each affine layer multiplies
//! both halves by public `t x t` matrices, adds public constants, and mixes
//! the halves. Matrices and constants are drawn from SHAKE128 keyed by the
//! block's nonce and counter.

use alloc::vec;
use alloc::vec::Vec;

use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::Shake128;

use crate::error::{Error, Result};
use crate::field::{FieldElement, P};

/// Block size `t` and round count `r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PastaVariant {
    t: usize,
    rounds: usize,
}

impl PastaVariant {
    pub const PASTA_3: PastaVariant = PastaVariant { t: 128, rounds: 3 };
    pub const PASTA_4: PastaVariant = PastaVariant { t: 32, rounds: 4 };

    pub fn new(t: usize, rounds: usize) -> Result<Self> {
        if t < 2 || rounds < 3 {
            return Err(Error::Parameter("PASTA needs t >= 2 and r >= 3"));
        }
        Ok(PastaVariant { t, rounds })
    }

    pub fn block_size(&self) -> usize {
        self.t
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn key_size(&self) -> usize {
        2 * self.t
    }

    pub fn name(&self) -> &'static str {
        match (self.t, self.rounds) {
            (128, 3) => "pasta-3",
            (32, 4) => "pasta-4",
            _ => "pasta-custom",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "pasta-3" | "pasta3" => Some(Self::PASTA_3),
            "pasta-4" | "pasta4" => Some(Self::PASTA_4),
            _ => None,
        }
    }
}

/// A client's symmetric key: `k_L || k_R`.
#[derive(Clone, PartialEq, Eq)]
pub struct PastaKey {
    elems: Vec<FieldElement>,
}

impl core::fmt::Debug for PastaKey {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "PastaKey({} elements)", self.elems.len())
    }
}

impl PastaKey {
    pub fn new(elems: Vec<FieldElement>, variant: PastaVariant) -> Result<Self> {
        if elems.len() != variant.key_size() {
            return Err(Error::ChunkSize {
                expected: variant.key_size(),
                got: elems.len(),
            });
        }
        Ok(PastaKey { elems })
    }

    pub fn random<R: rand_core::RngCore + ?Sized>(variant: PastaVariant, rng: &mut R) -> Self {
        let mut rng = rng;
        let elems = (0..variant.key_size())
            .map(|_| FieldElement::new(crate::rng::uniform_mod(&mut rng, P)))
            .collect();
        PastaKey { elems }
    }

    pub fn elements(&self) -> &[FieldElement] {
        &self.elems
    }

    pub fn left(&self) -> &[FieldElement] {
        &self.elems[..self.elems.len() / 2]
    }

    pub fn right(&self) -> &[FieldElement] {
        &self.elems[self.elems.len() / 2..]
    }

    /// Little-endian 8-byte elements.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.elems.iter().flat_map(|e| e.value().to_le_bytes()).collect()
    }

    pub fn from_bytes(bytes: &[u8], variant: PastaVariant) -> Result<Self> {
        if bytes.len() != 8 * variant.key_size() {
            return Err(Error::Format("PASTA key has the wrong length"));
        }
        let elems = read_elements(bytes)?;
        Ok(PastaKey { elems })
    }
}

fn read_elements(bytes: &[u8]) -> Result<Vec<FieldElement>> {
    bytes
        .chunks_exact(8)
        .map(|c| {
            let v = u64::from_le_bytes(c.try_into().unwrap());
            if v < P {
                Ok(FieldElement::new(v))
            } else {
                Err(Error::Format("field element out of range"))
            }
        })
        .collect()
}

/// 128-bit nonce plus 64-bit block counter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlockNonce {
    pub nonce: [u8; 16],
    pub counter: u64,
}

impl BlockNonce {
    pub fn new(nonce: [u8; 16], counter: u64) -> Self {
        BlockNonce { nonce, counter }
    }

    /// The protocol's nonce schedule: `round || client_id`, each 8 bytes
    /// little-endian; the counter is the chunk index.
    pub fn for_round(round: u64, client_id: u64, counter: u64) -> Self {
        let mut nonce = [0u8; 16];
        nonce[..8].copy_from_slice(&round.to_le_bytes());
        nonce[8..].copy_from_slice(&client_id.to_le_bytes());
        BlockNonce { nonce, counter }
    }

    pub fn with_counter(&self, counter: u64) -> Self {
        BlockNonce { counter, ..*self }
    }
}

/// A dense `t x t` matrix over F_p, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matrix {
    t: usize,
    data: Vec<FieldElement>,
}

impl Matrix {
    pub fn from_rows(t: usize, data: Vec<FieldElement>) -> Result<Self> {
        if data.len() != t * t {
            return Err(Error::Parameter("matrix data is not t x t"));
        }
        Ok(Matrix { t, data })
    }

    pub fn identity(t: usize) -> Self {
        let mut data = vec![FieldElement::ZERO; t * t];
        for i in 0..t {
            data[i * t + i] = FieldElement::ONE;
        }
        Matrix { t, data }
    }

    /// Expands a first row by `row_i[j] = first[j] * row_{i-1}[t-1] + row_{i-1}[j-1]`.
    pub fn from_first_row(first: &[FieldElement]) -> Self {
        let t = first.len();
        let mut data = Vec::with_capacity(t * t);
        data.extend_from_slice(first);
        for i in 1..t {
            let prev = (i - 1) * t;
            let last = data[prev + t - 1];
            for j in 0..t {
                let shifted = if j > 0 { data[prev + j - 1] } else { FieldElement::ZERO };
                data.push(first[j] * last + shifted);
            }
        }
        Matrix { t, data }
    }

    pub fn size(&self) -> usize {
        self.t
    }

    pub fn get(&self, i: usize, j: usize) -> FieldElement {
        self.data[i * self.t + j]
    }

    pub fn row(&self, i: usize) -> &[FieldElement] {
        &self.data[i * self.t..(i + 1) * self.t]
    }

    pub fn mul_vec(&self, v: &[FieldElement]) -> Vec<FieldElement> {
        (0..self.t)
            .map(|i| {
                let acc: u64 = self
                    .row(i)
                    .iter()
                    .zip(v)
                    .fold(0u64, |acc, (a, b)| (acc + a.value() * b.value()) % P);
                FieldElement::new(acc)
            })
            .collect()
    }
}

/// Public material of one affine layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerMaterial {
    pub m_left: Matrix,
    pub m_right: Matrix,
    pub c_left: Vec<FieldElement>,
    pub c_right: Vec<FieldElement>,
}

/// Material for all `r + 1` affine layers of one block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundMaterial {
    pub layers: Vec<LayerMaterial>,
}

struct FieldSampler {
    reader: <Shake128 as ExtendableOutput>::Reader,
}

impl FieldSampler {
    fn new(nonce: &BlockNonce) -> Self {
        let mut h = Shake128::default();
        h.update(b"PASTA");
        h.update(&nonce.nonce);
        h.update(&nonce.counter.to_le_bytes());
        FieldSampler { reader: h.finalize_xof() }
    }

    // 8-byte little-endian draws masked to 17 bits, rejecting values >= p.
    fn next(&mut self) -> FieldElement {
        loop {
            let mut buf = [0u8; 8];
            self.reader.read(&mut buf);
            let v = u64::from_le_bytes(buf) & ((1 << 17) - 1);
            if v < P {
                return FieldElement::new(v);
            }
        }
    }

    fn nonzero(&mut self) -> FieldElement {
        loop {
            let v = self.next();
            if v != FieldElement::ZERO {
                return v;
            }
        }
    }

    fn first_row(&mut self, t: usize) -> Vec<FieldElement> {
        let mut row = Vec::with_capacity(t);
        row.push(self.nonzero());
        row.extend((1..t).map(|_| self.next()));
        row
    }

    fn vector(&mut self, t: usize) -> Vec<FieldElement> {
        (0..t).map(|_| self.next()).collect()
    }
}

/// Draws, per layer `j = 0..=r`: the first row of `M_L`, the first row of
/// `M_R`, then `c_L` and `c_R`.
pub fn derive_round_material(nonce: &BlockNonce, variant: PastaVariant) -> RoundMaterial {
    let t = variant.t;
    let mut xof = FieldSampler::new(nonce);
    let layers = (0..=variant.rounds)
        .map(|_| {
            let ml = xof.first_row(t);
            let mr = xof.first_row(t);
            LayerMaterial {
                m_left: Matrix::from_first_row(&ml),
                m_right: Matrix::from_first_row(&mr),
                c_left: xof.vector(t),
                c_right: xof.vector(t),
            }
        })
        .collect();
    RoundMaterial { layers }
}

/// `(2 y_L + y_R, y_L + 2 y_R)`, element-wise.
pub fn mix(left: &[FieldElement], right: &[FieldElement]) -> (Vec<FieldElement>, Vec<FieldElement>) {
    left.iter()
        .zip(right)
        .map(|(&l, &r)| {
            let s = l + r;
            (s + l, s + r)
        })
        .unzip()
}

/// `x'_0 = x_0`, `x'_i = x_i + x_{i-1}^2`.
pub fn sbox_feistel(half: &[FieldElement]) -> Vec<FieldElement> {
    let mut out = half.to_vec();
    for i in 1..half.len() {
        out[i] = half[i] + half[i - 1] * half[i - 1];
    }
    out
}

pub fn sbox_cube(half: &[FieldElement]) -> Vec<FieldElement> {
    half.iter().map(|&x| x * x * x).collect()
}

/// Applies one affine layer to the state `L || R` of length `2t`.
pub fn affine_layer(state: &[FieldElement], layer: &LayerMaterial) -> Vec<FieldElement> {
    let t = layer.m_left.size();
    debug_assert_eq!(state.len(), 2 * t);
    let add = |a: Vec<FieldElement>, c: &[FieldElement]| -> Vec<FieldElement> {
        a.into_iter().zip(c).map(|(x, y)| x + *y).collect()
    };
    let yl = add(layer.m_left.mul_vec(&state[..t]), &layer.c_left);
    let yr = add(layer.m_right.mul_vec(&state[t..]), &layer.c_right);
    let (zl, zr) = mix(&yl, &yr);
    let mut out = zl;
    out.extend(zr);
    out
}

/// Keystream for one block given its material.
pub fn keystream_with_material(key: &PastaKey, material: &RoundMaterial) -> Vec<FieldElement> {
    let rounds = material.layers.len() - 1;
    let t = key.elems.len() / 2;
    let mut state = key.elems.clone();
    for (j, layer) in material.layers[..rounds].iter().enumerate() {
        state = affine_layer(&state, layer);
        let sbox = if j + 1 < rounds { sbox_feistel } else { sbox_cube };
        let mut next = sbox(&state[..t]);
        next.extend(sbox(&state[t..]));
        state = next;
    }
    state = affine_layer(&state, &material.layers[rounds]);
    state.truncate(t);
    state
}

pub fn keystream_block(key: &PastaKey, nonce: &BlockNonce, variant: PastaVariant) -> Vec<FieldElement> {
    keystream_with_material(key, &derive_round_material(nonce, variant))
}

/// One block of symmetric ciphertext.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymCiphertextChunk {
    pub counter: u64,
    pub elems: Vec<FieldElement>,
}

impl SymCiphertextChunk {
    pub fn serialized_len(&self) -> usize {
        8 + 8 * self.elems.len()
    }

    /// `counter (8 bytes) || t little-endian 8-byte elements`.
    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.counter.to_le_bytes());
        for e in &self.elems {
            out.extend_from_slice(&e.value().to_le_bytes());
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        self.write_to(&mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8], t: usize) -> Result<Self> {
        if bytes.len() != 8 + 8 * t {
            return Err(Error::Format("chunk has the wrong length"));
        }
        Ok(SymCiphertextChunk {
            counter: u64::from_le_bytes(bytes[..8].try_into().unwrap()),
            elems: read_elements(&bytes[8..])?,
        })
    }
}

fn check_len(v: &[FieldElement], variant: PastaVariant) -> Result<()> {
    if v.len() != variant.t {
        Err(Error::ChunkSize {
            expected: variant.t,
            got: v.len(),
        })
    } else {
        Ok(())
    }
}

/// `c = m + keystream`.
pub fn sym_encrypt(
    m: &[FieldElement],
    key: &PastaKey,
    nonce: &BlockNonce,
    variant: PastaVariant,
) -> Result<SymCiphertextChunk> {
    check_len(m, variant)?;
    let ks = keystream_block(key, nonce, variant);
    Ok(SymCiphertextChunk {
        counter: nonce.counter,
        elems: m.iter().zip(&ks).map(|(a, k)| *a + *k).collect(),
    })
}

/// `m = c - keystream`; `nonce.counter` is taken from the chunk.
pub fn sym_decrypt(
    c: &SymCiphertextChunk,
    key: &PastaKey,
    nonce: &BlockNonce,
    variant: PastaVariant,
) -> Result<Vec<FieldElement>> {
    check_len(&c.elems, variant)?;
    let ks = keystream_block(key, &nonce.with_counter(c.counter), variant);
    Ok(c.elems.iter().zip(&ks).map(|(a, k)| *a - *k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_chacha::ChaCha20Rng;
    use rand_core::{RngCore, SeedableRng};

    const Q: u64 = 65537;

    // Straight-line reference: plain u64 arithmetic, its own XOF reader and
    // matrix expansion, explicit loops.
    mod naive {
        use super::Q;
        use sha3::digest::{ExtendableOutput, Update, XofReader};
        use sha3::Shake128;

        pub struct Layer {
            pub ml: Vec<Vec<u64>>,
            pub mr: Vec<Vec<u64>>,
            pub cl: Vec<u64>,
            pub cr: Vec<u64>,
        }

        fn draw(r: &mut impl XofReader) -> u64 {
            loop {
                let mut b = [0u8; 8];
                r.read(&mut b);
                let mut v = 0u64;
                for i in (0..8).rev() {
                    v = (v << 8) | b[i] as u64;
                }
                v %= 1 << 17;
                if v < Q {
                    return v;
                }
            }
        }

        fn expand(first: &[u64]) -> Vec<Vec<u64>> {
            let t = first.len();
            let mut rows = vec![first.to_vec()];
            for i in 1..t {
                let prev = rows[i - 1].clone();
                let mut row = vec![0; t];
                for j in 0..t {
                    row[j] = first[j] * prev[t - 1] % Q;
                    if j >= 1 {
                        row[j] = (row[j] + prev[j - 1]) % Q;
                    }
                }
                rows.push(row);
            }
            rows
        }

        pub fn material(nonce: [u8; 16], counter: u64, t: usize, r: usize) -> Vec<Layer> {
            let mut seed = b"PASTA".to_vec();
            seed.extend_from_slice(&nonce);
            seed.extend_from_slice(&counter.to_le_bytes());
            let mut h = Shake128::default();
            h.update(&seed);
            let mut x = h.finalize_xof();
            let mut out = Vec::new();
            for _ in 0..=r {
                let mut rows = Vec::new();
                for _ in 0..2 {
                    let mut first = Vec::new();
                    let mut f = 0;
                    while f == 0 {
                        f = draw(&mut x);
                    }
                    first.push(f);
                    for _ in 1..t {
                        first.push(draw(&mut x));
                    }
                    rows.push(first);
                }
                let cl = (0..t).map(|_| draw(&mut x)).collect();
                let cr = (0..t).map(|_| draw(&mut x)).collect();
                out.push(Layer {
                    ml: expand(&rows[0]),
                    mr: expand(&rows[1]),
                    cl,
                    cr,
                });
            }
            out
        }

        pub fn matvec(m: &[Vec<u64>], v: &[u64]) -> Vec<u64> {
            m.iter()
                .map(|row| {
                    let mut s = 0;
                    for k in 0..v.len() {
                        s = (s + row[k] * v[k]) % Q;
                    }
                    s
                })
                .collect()
        }

        pub fn keystream(key: &[u64], nonce: [u8; 16], counter: u64, t: usize, r: usize) -> Vec<u64> {
            let layers = material(nonce, counter, t, r);
            let mut l = key[..t].to_vec();
            let mut rr = key[t..].to_vec();
            for j in 0..=r {
                let a = matvec(&layers[j].ml, &l);
                let b = matvec(&layers[j].mr, &rr);
                let mut yl = vec![0; t];
                let mut yr = vec![0; t];
                for i in 0..t {
                    let u = (a[i] + layers[j].cl[i]) % Q;
                    let w = (b[i] + layers[j].cr[i]) % Q;
                    yl[i] = (2 * u + w) % Q;
                    yr[i] = (u + 2 * w) % Q;
                }
                if j == r {
                    return yl;
                }
                if j == r - 1 {
                    for i in 0..t {
                        yl[i] = yl[i] * yl[i] % Q * yl[i] % Q;
                        yr[i] = yr[i] * yr[i] % Q * yr[i] % Q;
                    }
                } else {
                    for i in (1..t).rev() {
                        yl[i] = (yl[i] + yl[i - 1] * yl[i - 1]) % Q;
                        yr[i] = (yr[i] + yr[i - 1] * yr[i - 1]) % Q;
                    }
                }
                l = yl;
                rr = yr;
            }
            unreachable!()
        }
    }

    fn fe(v: &[u64]) -> Vec<FieldElement> {
        v.iter().map(|&x| FieldElement::new(x)).collect()
    }

    fn vals(v: &[FieldElement]) -> Vec<u64> {
        v.iter().map(|x| x.value()).collect()
    }

    fn random_vec(rng: &mut ChaCha20Rng, n: usize) -> Vec<FieldElement> {
        (0..n).map(|_| FieldElement::new(rng.next_u64() % Q)).collect()
    }

    #[test]
    fn mix_examples() {
        let (l, r) = mix(&fe(&[1]), &fe(&[0]));
        assert_eq!((vals(&l), vals(&r)), (vec![2], vec![1]));
        let (l, r) = mix(&fe(&[0, 0]), &fe(&[0, 0]));
        assert_eq!((vals(&l), vals(&r)), (vec![0, 0], vec![0, 0]));
    }

    #[test]
    fn affine_examples() {
        let layer = LayerMaterial {
            m_left: Matrix::from_rows(1, fe(&[2])).unwrap(),
            m_right: Matrix::from_rows(1, fe(&[3])).unwrap(),
            c_left: fe(&[0]),
            c_right: fe(&[0]),
        };
        assert_eq!(vals(&affine_layer(&fe(&[1, 1]), &layer)), vec![7, 8]);

        let t = 3;
        let id = LayerMaterial {
            m_left: Matrix::identity(t),
            m_right: Matrix::identity(t),
            c_left: fe(&[0; 3]),
            c_right: fe(&[0; 3]),
        };
        let s = fe(&[1, 2, 3, 4, 5, 6]);
        let (ml, mr) = mix(&s[..3], &s[3..]);
        assert_eq!(affine_layer(&s, &id), [ml, mr].concat());
    }

    #[test]
    fn affine_matches_dense_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let t = 4;
        for _ in 0..100 {
            let ml: Vec<Vec<u64>> = (0..t).map(|_| (0..t).map(|_| rng.next_u64() % Q).collect()).collect();
            let mr: Vec<Vec<u64>> = (0..t).map(|_| (0..t).map(|_| rng.next_u64() % Q).collect()).collect();
            let cl: Vec<u64> = (0..t).map(|_| rng.next_u64() % Q).collect();
            let cr: Vec<u64> = (0..t).map(|_| rng.next_u64() % Q).collect();
            let state: Vec<u64> = (0..2 * t).map(|_| rng.next_u64() % Q).collect();
            let layer = LayerMaterial {
                m_left: Matrix::from_rows(t, fe(&ml.concat())).unwrap(),
                m_right: Matrix::from_rows(t, fe(&mr.concat())).unwrap(),
                c_left: fe(&cl),
                c_right: fe(&cr),
            };
            let got = vals(&affine_layer(&fe(&state), &layer));
            let a = naive::matvec(&ml, &state[..t]);
            let b = naive::matvec(&mr, &state[t..]);
            for i in 0..t {
                let u = (a[i] + cl[i]) % Q;
                let w = (b[i] + cr[i]) % Q;
                assert_eq!(got[i], (2 * u + w) % Q);
                assert_eq!(got[t + i], (u + 2 * w) % Q);
            }
        }
    }

    #[test]
    fn sbox_examples() {
        assert_eq!(vals(&sbox_feistel(&fe(&[2, 3]))), vec![2, 7]);
        assert_eq!(vals(&sbox_feistel(&fe(&[0, 0, 0]))), vec![0, 0, 0]);
        assert_eq!(vals(&sbox_cube(&fe(&[1, 2]))), vec![1, 8]);
    }

    #[test]
    fn feistel_inverts_sequentially() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..50 {
            let x = random_vec(&mut rng, 16);
            let y = sbox_feistel(&x);
            let mut back = y.clone();
            for i in 1..back.len() {
                back[i] = y[i] - back[i - 1] * back[i - 1];
            }
            assert_eq!(back, x);
        }
    }

    #[test]
    fn cube_is_bijective() {
        // 3 * 43691 = 131073 = 2 (p - 1) + 1, so x -> x^43691 inverts the cube.
        let mut seen = vec![false; Q as usize];
        for x in 0..Q {
            let c = sbox_cube(&[FieldElement::new(x)])[0];
            assert!(!seen[c.value() as usize]);
            seen[c.value() as usize] = true;
            assert_eq!(c.pow(43691).value(), x);
        }
    }

    #[test]
    fn matrices_follow_recurrence_and_are_invertible() {
        let m = derive_round_material(&BlockNonce::for_round(1, 2, 3), PastaVariant::new(4, 3).unwrap());
        for layer in &m.layers {
            for mat in [&layer.m_left, &layer.m_right] {
                assert_ne!(mat.get(0, 0), FieldElement::ZERO);
                // Gaussian elimination over F_p.
                let t = mat.size();
                let mut a: Vec<Vec<FieldElement>> = (0..t).map(|i| mat.row(i).to_vec()).collect();
                for c in 0..t {
                    let piv = (c..t).find(|&r| a[r][c] != FieldElement::ZERO).expect("singular");
                    a.swap(c, piv);
                    let inv = a[c][c].inverse().unwrap();
                    for r in c + 1..t {
                        let f = a[r][c] * inv;
                        for k in c..t {
                            let v = a[c][k];
                            a[r][k] -= f * v;
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn material_matches_naive_expansion() {
        let nonce = BlockNonce::for_round(7, 9, 11);
        for (t, r) in [(2, 3), (4, 3), (4, 4)] {
            let m = derive_round_material(&nonce, PastaVariant::new(t, r).unwrap());
            let n = naive::material(nonce.nonce, nonce.counter, t, r);
            for (a, b) in m.layers.iter().zip(&n) {
                for i in 0..t {
                    assert_eq!(vals(a.m_left.row(i)), b.ml[i]);
                    assert_eq!(vals(a.m_right.row(i)), b.mr[i]);
                }
                assert_eq!(vals(&a.c_left), b.cl);
                assert_eq!(vals(&a.c_right), b.cr);
            }
        }
    }

    #[test]
    fn keystream_matches_naive_evaluator() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for (t, r) in [(2, 3), (4, 3), (4, 4)] {
            let variant = PastaVariant::new(t, r).unwrap();
            for i in 0..25 {
                let key = PastaKey::random(variant, &mut rng);
                let nonce = BlockNonce::for_round(rng.next_u64(), rng.next_u64(), i);
                let got = keystream_block(&key, &nonce, variant);
                let want = naive::keystream(&vals(key.elements()), nonce.nonce, i, t, r);
                assert_eq!(vals(&got), want);
            }
        }
    }

    #[test]
    fn material_is_deterministic_and_counter_sensitive() {
        let v = PastaVariant::PASTA_4;
        let a = BlockNonce::for_round(0, 1, 5);
        assert_eq!(derive_round_material(&a, v), derive_round_material(&a, v));
        let m0 = derive_round_material(&a, v);
        let m1 = derive_round_material(&a.with_counter(6), v);
        let (mut same, mut total) = (0, 0);
        for (x, y) in m0.layers.iter().zip(&m1.layers) {
            for i in 0..v.block_size() {
                for (p, q) in x.m_left.row(i).iter().zip(y.m_left.row(i)) {
                    same += (p == q) as usize;
                    total += 1;
                }
            }
            for (p, q) in x.c_left.iter().zip(&y.c_left) {
                same += (p == q) as usize;
                total += 1;
            }
        }
        assert!(same * 100 <= total, "{same} of {total} entries agree");
    }

    #[test]
    fn avalanche() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let v = PastaVariant::PASTA_4;
        let mut changed = 0;
        let trials = 20;
        for i in 0..trials {
            let key = PastaKey::random(v, &mut rng);
            let mut elems = key.elements().to_vec();
            let idx = (rng.next_u64() % 64) as usize;
            elems[idx] += FieldElement::ONE;
            let key2 = PastaKey::new(elems, v).unwrap();
            let nonce = BlockNonce::for_round(1, 1, i);
            let a = keystream_block(&key, &nonce, v);
            let b = keystream_block(&key2, &nonce, v);
            changed += a.iter().zip(&b).filter(|(x, y)| x != y).count();
        }
        assert!(changed * 100 >= 90 * trials as usize * v.block_size());
    }

    #[test]
    fn encryption_roundtrip_and_errors() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let v = PastaVariant::PASTA_4;
        let key = PastaKey::random(v, &mut rng);
        for i in 0..1000 {
            let m = random_vec(&mut rng, v.block_size());
            let nonce = BlockNonce::for_round(3, 4, i);
            let c = sym_encrypt(&m, &key, &nonce, v).unwrap();
            assert_eq!(c.elems.len(), m.len());
            assert_eq!(sym_decrypt(&c, &key, &nonce, v).unwrap(), m);
            if i < 20 {
                let mut wrong = c.clone();
                wrong.counter += 1;
                assert_ne!(sym_decrypt(&wrong, &key, &nonce, v).unwrap(), m);
                let bytes = c.to_bytes();
                assert_eq!(bytes.len(), 8 + 8 * v.block_size());
                assert_eq!(SymCiphertextChunk::from_bytes(&bytes, v.block_size()).unwrap(), c);
            }
        }
        let short = random_vec(&mut rng, 31);
        assert_eq!(
            sym_encrypt(&short, &key, &BlockNonce::for_round(0, 0, 0), v),
            Err(Error::ChunkSize { expected: 32, got: 31 })
        );
        let pasta3 = PastaVariant::PASTA_3;
        let k3 = PastaKey::random(pasta3, &mut rng);
        let m = random_vec(&mut rng, 128);
        let nonce = BlockNonce::for_round(0, 0, 0);
        let c = sym_encrypt(&m, &k3, &nonce, pasta3).unwrap();
        assert_eq!(sym_decrypt(&c, &k3, &nonce, pasta3).unwrap(), m);
        assert_eq!(PastaKey::from_bytes(&k3.to_bytes(), pasta3).unwrap(), k3);
    }

    proptest! {
        #[test]
        fn mix_is_linear(a in prop::collection::vec(0u64..Q, 8), b in prop::collection::vec(0u64..Q, 8)) {
            let (a, b) = (fe(&a), fe(&b));
            let sum: Vec<FieldElement> = a.iter().zip(&b).map(|(x, y)| *x + *y).collect();
            let (sl, sr) = mix(&sum[..4], &sum[4..]);
            let (al, ar) = mix(&a[..4], &a[4..]);
            let (bl, br) = mix(&b[..4], &b[4..]);
            for i in 0..4 {
                prop_assert_eq!(sl[i], al[i] + bl[i]);
                prop_assert_eq!(sr[i], ar[i] + br[i]);
            }
        }
    }
}
