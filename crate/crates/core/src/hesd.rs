//! Homomorphic evaluation of PASTA decryption (transciphering).
//!
//! The server holds a client's PASTA key encrypted under BFV, `k_L || k_R` in
//! slots `0..2t` of the first row. For every symmetric chunk it evaluates the
//! keystream circuit on that ciphertext and subtracts the result from the
//! encoded chunk, giving a BFV encryption of the plaintext chunk in slots
//! `0..t` with zeros elsewhere.
//!
//! Layout: between layers the left half lives in row 0 and the right half in
//! row 1, both at slots `0..t`. Matrix-vector products use the diagonal
//! method on a replicated input, so each row is multiplied by its own matrix
//! in one pass; the half-mixing is a row swap. The first layer sees both
//! halves in each row (period `2t`) and folds the mix into a `t x 2t`
//! matrix; the last layer does the same for the left output only, so the
//! second row ends at zero. The Feistel S-box leaves one stray value at slot
//! `t`; middle layers use period `t + 1` with a zero column there. See
//! [`layout`] for how the products are batched.
//!
//! Primes are dropped between layers following a plan computed from the noise
//! model when the context is built.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::bfv::{
    self, mod_drop_to, noise, BfvParams, Ciphertext, EvaluationKeys, Hoisted, PlainAddOperand,
    PlainMulOperand, RotationSteps,
};
use self::layout::{Layout, LayoutPlan};
use crate::error::{Error, Result};
use crate::field::{FieldElement, P};
use crate::pasta::{
    derive_round_material, BlockNonce, LayerMaterial, Matrix, PastaVariant, RoundMaterial,
    SymCiphertextChunk,
};

/// Budget, in bits, the plan keeps after a full block.
pub const DEFAULT_RESERVE_BITS: f64 = 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    Affine(usize),
    Feistel(usize),
    Cube,
}

fn stages(variant: PastaVariant) -> Vec<Stage> {
    let r = variant.rounds();
    let mut out = Vec::with_capacity(2 * r + 1);
    for j in 0..r {
        out.push(Stage::Affine(j));
        out.push(if j + 1 < r { Stage::Feistel(j + 1) } else { Stage::Cube });
    }
    out.push(Stage::Affine(r));
    out
}

fn stage_name(stage: Stage) -> &'static str {
    const AFFINE: [&str; 8] = [
        "affine layer 0",
        "affine layer 1",
        "affine layer 2",
        "affine layer 3",
        "affine layer 4",
        "affine layer 5",
        "affine layer 6",
        "affine layer 7",
    ];
    const FEISTEL: [&str; 7] = [
        "feistel s-box 0",
        "feistel s-box 1",
        "feistel s-box 2",
        "feistel s-box 3",
        "feistel s-box 4",
        "feistel s-box 5",
        "feistel s-box 6",
    ];
    match stage {
        Stage::Affine(j) => AFFINE.get(j).copied().unwrap_or("affine layer"),
        Stage::Feistel(j) => FEISTEL.get(j).copied().unwrap_or("feistel s-box"),
        Stage::Cube => "cube s-box",
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shape {
    // Both halves in each row; row 0 yields 2 M_L k_L + M_R k_R, row 1 the other
    // mixed half.
    First,
    // Row 0 holds L, row 1 holds R; each row gets its own matrix.
    Middle,
    // Both halves in row 0; only the left mixed output is produced.
    Last,
}

fn shape_of(j: usize, rounds: usize) -> Shape {
    if j == 0 {
        Shape::First
    } else if j == rounds {
        Shape::Last
    } else {
        Shape::Middle
    }
}

fn period(shape: Shape, t: usize) -> usize {
    match shape {
        Shape::Middle => t + 1,
        Shape::First | Shape::Last => 2 * t,
    }
}

/// Rotation keys the transciphering circuit needs for a ring with
/// `slot_count` slots.
pub fn rotation_steps(variant: PastaVariant, slot_count: usize) -> RotationSteps {
    let plan = LayoutPlan::new(variant, slot_count / 2);
    RotationSteps::new(&plan.rotation_steps(variant)).with_row_swap()
}

/// The evaluation primitives the circuit is written against. Besides BFV
/// ciphertexts this is implemented by a noise-only simulator (used for level
/// planning) and, in tests, by plain slot vectors.
trait Backend {
    type Ct: Clone;
    type Hoisted;

    fn drop_to(&self, ct: &Self::Ct, level: usize) -> Result<Self::Ct>;
    fn rotate(&self, ct: &Self::Ct, step: i64) -> Result<Self::Ct>;
    fn hoist(&self, ct: &Self::Ct) -> Result<Self::Hoisted>;
    fn rotate_hoisted(&self, h: &Self::Hoisted, step: i64) -> Result<Self::Ct>;
    fn row_swap(&self, ct: &Self::Ct) -> Result<Self::Ct>;
    fn add(&self, a: &Self::Ct, b: &Self::Ct) -> Result<Self::Ct>;
    fn add_plain(&self, a: &Self::Ct, values: impl FnOnce() -> Vec<FieldElement>) -> Result<Self::Ct>;
    /// `sum_i cts[i] * values(i)`.
    fn dot_plain(&self, cts: &[Self::Ct], values: impl Fn(usize) -> Vec<FieldElement>) -> Result<Self::Ct>;
    fn square(&self, a: &Self::Ct) -> Result<Self::Ct>;
    fn mul(&self, a: &Self::Ct, b: &Self::Ct) -> Result<Self::Ct>;
}

struct Circuit {
    variant: PastaVariant,
    row: usize,
    layouts: LayoutPlan,
}

impl Circuit {
    fn sum<B: Backend>(b: &B, acc: Option<B::Ct>, x: B::Ct) -> Result<Option<B::Ct>> {
        Ok(Some(match acc {
            None => x,
            Some(a) => b.add(&a, &x)?,
        }))
    }

    // Entry `(i, col)` of the per-row matrix of a layer.
    fn entry(shape: Shape, layer: &LayerMaterial, row: usize, i: usize, col: usize) -> FieldElement {
        let t = layer.m_left.size();
        let two = FieldElement::new(2);
        let pick = |m: &Matrix, c: usize| m.get(i, c);
        match (shape, row) {
            (Shape::Middle, _) if col == t => FieldElement::ZERO,
            (Shape::Middle, 0) => pick(&layer.m_left, col),
            (Shape::Middle, _) => pick(&layer.m_right, col),
            (Shape::Last, 1) => FieldElement::ZERO,
            (_, 0) if col < t => two * pick(&layer.m_left, col),
            (_, 0) => pick(&layer.m_right, col - t),
            (_, _) if col < t => pick(&layer.m_left, col),
            (_, _) => two * pick(&layer.m_right, col - t),
        }
    }

    fn constants(&self, shape: Shape, layer: &LayerMaterial) -> Vec<FieldElement> {
        let t = self.variant.block_size();
        let mut v = vec![FieldElement::ZERO; 2 * self.row];
        let two = FieldElement::new(2);
        for i in 0..t {
            let (cl, cr) = (layer.c_left[i], layer.c_right[i]);
            match shape {
                Shape::Middle => {
                    v[i] = cl;
                    v[self.row + i] = cr;
                }
                Shape::First => {
                    v[i] = two * cl + cr;
                    v[self.row + i] = cl + two * cr;
                }
                Shape::Last => v[i] = two * cl + cr,
            }
        }
        v
    }

    // Diagonal `k`, pre-rotated right by `shift`.
    fn diagonal(&self, shape: Shape, layer: &LayerMaterial, k: usize, shift: usize) -> Vec<FieldElement> {
        let t = self.variant.block_size();
        let pi = period(shape, t);
        let mut v = vec![FieldElement::ZERO; 2 * self.row];
        let rows = if shape == Shape::Last { 1 } else { 2 };
        for r in 0..rows {
            for i in 0..t {
                v[r * self.row + (i + shift) % self.row] = Self::entry(shape, layer, r, i, (i + k) % pi);
            }
        }
        v
    }

    // Plaintext for baby step `b`: diagonal `g * n1 + b` at block `g`.
    fn block_diagonals(&self, shape: Shape, layer: &LayerMaterial, lay: &Layout, b: usize) -> Vec<FieldElement> {
        let t = self.variant.block_size();
        let pi = period(shape, t);
        let s = lay.spacing();
        let mut v = vec![FieldElement::ZERO; 2 * self.row];
        for g in 0..lay.n2 {
            let k = g * lay.n1 + b;
            if k >= pi {
                break;
            }
            for r in 0..2 {
                for i in 0..t {
                    v[r * self.row + g * s + i] = Self::entry(shape, layer, r, i, (i + k) % pi);
                }
            }
        }
        v
    }

    fn copies_matvec<B: Backend>(
        &self,
        b: &B,
        x: &B::Ct,
        shape: Shape,
        layer: &LayerMaterial,
        lay: &Layout,
    ) -> Result<B::Ct> {
        let pi = period(shape, self.variant.block_size());
        let mut w = b.add(x, &b.rotate(x, -(pi as i64))?)?;
        let mut span = 1;
        while span < lay.n2 {
            w = b.add(&w, &b.rotate(&w, -((span * lay.d) as i64))?)?;
            span *= 2;
        }
        let hoisted = b.hoist(&w)?;
        let babies = (0..lay.n1)
            .map(|j| b.rotate_hoisted(&hoisted, j as i64))
            .collect::<Result<Vec<_>>>()?;
        let mut y = b.dot_plain(&babies, |j| self.block_diagonals(shape, layer, lay, j))?;
        let mut span = 1;
        while span < lay.n2 {
            y = b.add(&y, &b.rotate(&y, (span * lay.spacing()) as i64)?)?;
            span *= 2;
        }
        Ok(y)
    }

    fn bsgs_matvec<B: Backend>(&self, b: &B, x: &B::Ct, shape: Shape, layer: &LayerMaterial) -> Result<B::Ct> {
        let pi = period(shape, self.variant.block_size());
        let rep = b.add(x, &b.rotate(x, -(pi as i64))?)?;
        let n1 = self.layouts.last_n1.min(pi);
        let n2 = pi.div_ceil(n1);
        let hoisted = b.hoist(&rep)?;
        let babies = (0..n1)
            .map(|j| b.rotate_hoisted(&hoisted, j as i64))
            .collect::<Result<Vec<_>>>()?;
        let mut total = None;
        for g in 0..n2 {
            let used = n1.min(pi - g * n1);
            let inner = b.dot_plain(&babies[..used], |j| self.diagonal(shape, layer, g * n1 + j, g * n1))?;
            let inner = if g == 0 {
                inner
            } else {
                b.rotate(&inner, (g * n1) as i64)?
            };
            total = Self::sum(b, total, inner)?;
        }
        Ok(total.expect("at least one giant step"))
    }

    fn matvec<B: Backend>(&self, b: &B, x: &B::Ct, j: usize, shape: Shape, layer: &LayerMaterial) -> Result<B::Ct> {
        match self.layouts.layers.get(j) {
            Some(lay) if shape != Shape::Last => self.copies_matvec(b, x, shape, layer, lay),
            _ => self.bsgs_matvec(b, x, shape, layer),
        }
    }

    fn affine<B: Backend>(&self, b: &B, x: &B::Ct, j: usize, layer: &LayerMaterial) -> Result<B::Ct> {
        let t = self.variant.block_size() as i64;
        let shape = shape_of(j, self.variant.rounds());
        let input = match shape {
            Shape::First => b.add(x, &b.row_swap(x)?)?,
            Shape::Middle => x.clone(),
            Shape::Last => b.add(x, &b.rotate(&b.row_swap(x)?, -t)?)?,
        };
        let y = self.matvec(b, &input, j, shape, layer)?;
        let y = b.add_plain(&y, || self.constants(shape, layer))?;
        match shape {
            Shape::Middle => {
                let twice = b.add(&y, &y)?;
                b.add(&twice, &b.row_swap(&y)?)
            }
            _ => Ok(y),
        }
    }

    fn stage<B: Backend>(&self, b: &B, x: &B::Ct, stage: Stage, material: &RoundMaterial) -> Result<B::Ct> {
        match stage {
            Stage::Affine(j) => self.affine(b, x, j, &material.layers[j]),
            Stage::Feistel(_) => {
                let shifted = b.rotate(x, -1)?;
                b.add(x, &b.square(&shifted)?)
            }
            Stage::Cube => {
                let sq = b.square(x)?;
                b.mul(&sq, x)
            }
        }
    }
}

/// Noise-only evaluation: tracks `(log2 noise, level)` through the same
/// operation sequence as the real circuit.
struct NoiseSim<'a> {
    params: &'a BfvParams,
    plain_norm: f64,
}

impl<'a> NoiseSim<'a> {
    fn new(params: &'a BfvParams) -> Self {
        let n = params.degree() as f64;
        let p = P as f64;
        NoiseSim {
            params,
            plain_norm: 0.5 * libm::log2(n * p * p / 12.0) + 0.05,
        }
    }

    fn switched(&self, ct: &(f64, usize)) -> (f64, usize) {
        (noise::combine(ct.0, noise::key_switch(self.params, ct.1)), ct.1)
    }

    fn product(&self, a: &(f64, usize), b: &(f64, usize)) -> (f64, usize) {
        let nz = noise::mul(self.params, a.1, a.0, b.0);
        (noise::combine(nz, noise::key_switch(self.params, a.1)), a.1)
    }
}

impl Backend for NoiseSim<'_> {
    type Ct = (f64, usize);
    type Hoisted = (f64, usize);

    fn drop_to(&self, ct: &Self::Ct, level: usize) -> Result<Self::Ct> {
        let mut x = *ct;
        while x.1 < level {
            x = (noise::combine(x.0, noise::mod_drop(self.params, x.1 + 1)), x.1 + 1);
        }
        Ok(x)
    }

    fn rotate(&self, ct: &Self::Ct, _step: i64) -> Result<Self::Ct> {
        Ok(self.switched(ct))
    }

    fn hoist(&self, ct: &Self::Ct) -> Result<Self::Hoisted> {
        Ok(*ct)
    }

    fn rotate_hoisted(&self, h: &Self::Hoisted, step: i64) -> Result<Self::Ct> {
        Ok(if step == 0 { *h } else { self.switched(h) })
    }

    fn row_swap(&self, ct: &Self::Ct) -> Result<Self::Ct> {
        Ok(self.switched(ct))
    }

    fn add(&self, a: &Self::Ct, b: &Self::Ct) -> Result<Self::Ct> {
        Ok((noise::combine(a.0, b.0), a.1.max(b.1)))
    }

    fn add_plain(&self, a: &Self::Ct, _values: impl FnOnce() -> Vec<FieldElement>) -> Result<Self::Ct> {
        Ok(*a)
    }

    fn dot_plain(&self, cts: &[Self::Ct], _values: impl Fn(usize) -> Vec<FieldElement>) -> Result<Self::Ct> {
        Ok(cts.iter().fold((f64::NEG_INFINITY, 0), |acc, c| {
            (noise::combine(acc.0, noise::plain_mul(c.0, self.plain_norm)), acc.1.max(c.1))
        }))
    }

    fn square(&self, a: &Self::Ct) -> Result<Self::Ct> {
        Ok(self.product(a, a))
    }

    fn mul(&self, a: &Self::Ct, b: &Self::Ct) -> Result<Self::Ct> {
        Ok(self.product(a, b))
    }
}

struct BfvBackend<'a> {
    keys: &'a EvaluationKeys,
}

impl Backend for BfvBackend<'_> {
    type Ct = Ciphertext;
    type Hoisted = Hoisted;

    fn drop_to(&self, ct: &Ciphertext, level: usize) -> Result<Ciphertext> {
        mod_drop_to(ct, level)
    }

    fn rotate(&self, ct: &Ciphertext, step: i64) -> Result<Ciphertext> {
        bfv::he_rotate(ct, step, &self.keys.galois)
    }

    fn hoist(&self, ct: &Ciphertext) -> Result<Hoisted> {
        Hoisted::new(ct)
    }

    fn rotate_hoisted(&self, h: &Hoisted, step: i64) -> Result<Ciphertext> {
        h.rotate(step, &self.keys.galois)
    }

    fn row_swap(&self, ct: &Ciphertext) -> Result<Ciphertext> {
        bfv::he_row_swap(ct, &self.keys.galois)
    }

    fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        bfv::he_add(a, b)
    }

    fn add_plain(&self, a: &Ciphertext, values: impl FnOnce() -> Vec<FieldElement>) -> Result<Ciphertext> {
        let op = PlainAddOperand::new(a.params(), a.level(), &values())?;
        let mut x = a.clone();
        x.add_plain_operand(&op)?;
        Ok(x)
    }

    fn dot_plain(&self, cts: &[Ciphertext], values: impl Fn(usize) -> Vec<FieldElement>) -> Result<Ciphertext> {
        let first = cts.first().ok_or(Error::Parameter("empty plaintext inner product"))?;
        let ops = (0..cts.len())
            .map(|i| PlainMulOperand::new(first.params(), first.level(), &values(i)))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Ciphertext> = cts.iter().collect();
        bfv::plain_dot(&refs, &ops)
    }

    fn square(&self, a: &Ciphertext) -> Result<Ciphertext> {
        bfv::he_square_relin(a, &self.keys.relin)
    }

    fn mul(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        bfv::he_mul_relin(a, b, &self.keys.relin)
    }
}

/// Output of transciphering one chunk.
#[derive(Clone, Debug)]
pub struct TranscipheredChunk {
    pub ct: Ciphertext,
    pub counter: u64,
}

/// Server-side transciphering state: parameters, evaluation keys, the level
/// plan, and the currently loaded client key.
#[derive(Clone)]
pub struct HesdContext {
    params: BfvParams,
    keys: Arc<EvaluationKeys>,
    variant: PastaVariant,
    layouts: LayoutPlan,
    plan: Vec<usize>,
    planned_budget: f64,
    key: Option<Ciphertext>,
}

impl core::fmt::Debug for HesdContext {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("HesdContext")
            .field("variant", &self.variant)
            .field("plan", &self.plan)
            .field("planned_budget", &self.planned_budget)
            .field("key_loaded", &self.key.is_some())
            .finish()
    }
}

impl HesdContext {
    pub fn new(params: &BfvParams, keys: Arc<EvaluationKeys>, variant: PastaVariant) -> Result<Self> {
        Self::with_reserve(params, keys, variant, DEFAULT_RESERVE_BITS)
    }

    /// Like [`HesdContext::new`], choosing the level plan so that at least
    /// `reserve_bits` of estimated budget remain after a block.
    pub fn with_reserve(
        params: &BfvParams,
        keys: Arc<EvaluationKeys>,
        variant: PastaVariant,
        reserve_bits: f64,
    ) -> Result<Self> {
        let t = variant.block_size();
        if 4 * t > params.slot_count() / 2 {
            return Err(Error::Parameter("PASTA block does not fit the slot rows"));
        }
        let declared = keys.galois.declared();
        let needed = rotation_steps(variant, params.slot_count());
        if let Some(&s) = needed.steps.iter().find(|s| !declared.steps.contains(s)) {
            return Err(Error::MissingRotationKey(s));
        }
        if !declared.row_swap {
            return Err(Error::Parameter("transciphering needs the row-swap key"));
        }
        let circuit = Circuit {
            variant,
            row: params.slot_count() / 2,
            layouts: LayoutPlan::new(variant, params.slot_count() / 2),
        };
        let (plan, planned_budget) = plan_levels(params, &circuit, reserve_bits)?;
        Ok(HesdContext {
            params: params.clone(),
            keys,
            variant,
            layouts: circuit.layouts,
            plan,
            planned_budget,
            key: None,
        })
    }

    fn circuit(&self) -> Circuit {
        Circuit {
            variant: self.variant,
            row: self.params.slot_count() / 2,
            layouts: self.layouts.clone(),
        }
    }

    pub fn variant(&self) -> PastaVariant {
        self.variant
    }

    pub fn params(&self) -> &BfvParams {
        &self.params
    }

    /// Level at which each stage of the circuit runs.
    pub fn level_plan(&self) -> &[usize] {
        &self.plan
    }

    /// Estimated budget left after a block under the plan.
    pub fn planned_budget(&self) -> f64 {
        self.planned_budget
    }

    /// Binds the context to a client's encrypted PASTA key (`k_L || k_R` in
    /// slots `0..2t`, zero elsewhere).
    pub fn set_encrypted_key(&mut self, sk_he: Ciphertext) -> Result<()> {
        if sk_he.params() != &self.params {
            return Err(Error::Parameter("encrypted key uses different BFV parameters"));
        }
        if sk_he.size() != 2 {
            return Err(Error::Parameter("encrypted key must have two components"));
        }
        self.key = Some(sk_he);
        Ok(())
    }

    pub fn encrypted_key(&self) -> Option<&Ciphertext> {
        self.key.as_ref()
    }

    /// Encrypted keystream for `nonce` in slots `0..t`.
    pub fn he_keystream(&self, nonce: &BlockNonce) -> Result<Ciphertext> {
        self.he_keystream_with_material(&derive_round_material(nonce, self.variant))
    }

    /// The keystream circuit with explicit round material.
    pub fn he_keystream_with_material(&self, material: &RoundMaterial) -> Result<Ciphertext> {
        let key = self
            .key
            .as_ref()
            .ok_or(Error::Protocol("no encrypted key loaded"))?;
        if material.layers.len() != self.variant.rounds() + 1 {
            return Err(Error::Parameter("round material has the wrong layer count"));
        }
        let backend = BfvBackend { keys: &self.keys };
        let circuit = self.circuit();
        let mut x = key.clone();
        for (stage, &level) in stages(self.variant).into_iter().zip(&self.plan) {
            x = backend.drop_to(&x, level.max(x.level()))?;
            x = circuit.stage(&backend, &x, stage, material)?;
            if x.estimated_budget() < 1.0 {
                return Err(Error::BudgetExhausted(Some(stage_name(stage))));
            }
        }
        Ok(x)
    }

    /// BFV encryption of the chunk's plaintext: `encode(c) - keystream`.
    pub fn hesd_block(&self, nonce: [u8; 16], chunk: &SymCiphertextChunk) -> Result<TranscipheredChunk> {
        let t = self.variant.block_size();
        if chunk.elems.len() != t {
            return Err(Error::ChunkSize {
                expected: t,
                got: chunk.elems.len(),
            });
        }
        let ks = self.he_keystream(&BlockNonce::new(nonce, chunk.counter))?;
        let mut neg = bfv::he_negate(&ks);
        let op = PlainAddOperand::new(&self.params, neg.level(), &chunk.elems)?;
        neg.add_plain_operand(&op)?;
        Ok(TranscipheredChunk {
            ct: neg,
            counter: chunk.counter,
        })
    }

    /// Transciphers a client's chunks in order. Counters must be consecutive.
    pub fn hesd_chunks(
        &mut self,
        nonce: [u8; 16],
        chunks: &[SymCiphertextChunk],
        sk_he: &Ciphertext,
    ) -> Result<Vec<TranscipheredChunk>> {
        check_consecutive(chunks)?;
        self.set_encrypted_key(sk_he.clone())?;
        chunks.iter().map(|c| self.hesd_block(nonce, c)).collect()
    }
}

/// Fails unless chunk counters increase by one from the first.
pub fn check_consecutive(chunks: &[SymCiphertextChunk]) -> Result<()> {
    let gap = chunks
        .windows(2)
        .any(|w| w[0].counter.checked_add(1) != Some(w[1].counter));
    if gap {
        Err(Error::Protocol("chunk counters are not consecutive"))
    } else {
        Ok(())
    }
}

fn zero_material(variant: PastaVariant) -> RoundMaterial {
    let t = variant.block_size();
    let zero = Matrix::from_rows(t, vec![FieldElement::ZERO; t * t]).expect("square");
    let layer = LayerMaterial {
        m_left: zero.clone(),
        m_right: zero,
        c_left: vec![FieldElement::ZERO; t],
        c_right: vec![FieldElement::ZERO; t],
    };
    RoundMaterial {
        layers: vec![layer; variant.rounds() + 1],
    }
}

// Greedy plan: each stage runs at the highest level from which the rest of
// the circuit, kept at that level, still ends with `reserve` bits.
fn plan_levels(params: &BfvParams, circuit: &Circuit, reserve: f64) -> Result<(Vec<usize>, f64)> {
    let sim = NoiseSim::new(params);
    let material = zero_material(circuit.variant);
    let all = stages(circuit.variant);
    let budget = |x: &(f64, usize)| -x.0 - 1.0;
    let run = |mut x: (f64, usize), from: usize, level: usize| -> Result<(f64, usize)> {
        x = sim.drop_to(&x, level)?;
        for &s in &all[from..] {
            x = circuit.stage(&sim, &x, s, &material)?;
        }
        Ok(x)
    };
    let mut x = (noise::fresh(params, 0), 0usize);
    let mut plan = Vec::with_capacity(all.len());
    for (i, &s) in all.iter().enumerate() {
        let mut chosen = x.1;
        for level in (x.1..params.level_count()).rev() {
            if budget(&run(x, i, level)?) >= reserve {
                chosen = level;
                break;
            }
        }
        x = sim.drop_to(&x, chosen)?;
        x = circuit.stage(&sim, &x, s, &material)?;
        plan.push(chosen);
    }
    Ok((plan, budget(&x)))
}

mod layout;
#[cfg(test)]
mod tests;
