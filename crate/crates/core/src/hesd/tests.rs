use super::*;
use crate::batch::rotate_rows;
use crate::bfv::{decrypt, encrypt, keygen, noise_budget, BfvKeySet};
use crate::pasta::{keystream_block, keystream_with_material, sym_encrypt, PastaKey};
use crate::rng::seed_from_u64;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

// Slot vectors under the same primitives: checks the layout logic exactly.
struct Slots;

impl Backend for Slots {
    type Ct = Vec<FieldElement>;
    type Hoisted = Vec<FieldElement>;

    fn drop_to(&self, ct: &Self::Ct, _level: usize) -> Result<Self::Ct> {
        Ok(ct.clone())
    }
    fn rotate(&self, ct: &Self::Ct, step: i64) -> Result<Self::Ct> {
        Ok(rotate_rows(ct, step))
    }
    fn hoist(&self, ct: &Self::Ct) -> Result<Self::Hoisted> {
        Ok(ct.clone())
    }
    fn rotate_hoisted(&self, h: &Self::Hoisted, step: i64) -> Result<Self::Ct> {
        Ok(rotate_rows(h, step))
    }
    fn row_swap(&self, ct: &Self::Ct) -> Result<Self::Ct> {
        let h = ct.len() / 2;
        Ok([&ct[h..], &ct[..h]].concat())
    }
    fn add(&self, a: &Self::Ct, b: &Self::Ct) -> Result<Self::Ct> {
        Ok(a.iter().zip(b).map(|(x, y)| *x + *y).collect())
    }
    fn add_plain(&self, a: &Self::Ct, values: impl FnOnce() -> Vec<FieldElement>) -> Result<Self::Ct> {
        self.add(a, &values())
    }
    fn dot_plain(&self, cts: &[Self::Ct], values: impl Fn(usize) -> Vec<FieldElement>) -> Result<Self::Ct> {
        let mut acc = vec![FieldElement::ZERO; cts[0].len()];
        for (i, c) in cts.iter().enumerate() {
            for ((a, x), y) in acc.iter_mut().zip(c).zip(values(i)) {
                *a = *a + *x * y;
            }
        }
        Ok(acc)
    }
    fn square(&self, a: &Self::Ct) -> Result<Self::Ct> {
        self.mul(a, a)
    }
    fn mul(&self, a: &Self::Ct, b: &Self::Ct) -> Result<Self::Ct> {
        Ok(a.iter().zip(b).map(|(x, y)| *x * *y).collect())
    }
}

fn slot_keystream(n: usize, variant: PastaVariant, key: &PastaKey, material: &RoundMaterial) -> Vec<FieldElement> {
    let circuit = Circuit {
        variant,
        row: n / 2,
        layouts: LayoutPlan::new(variant, n / 2),
    };
    let mut x = vec![FieldElement::ZERO; n];
    x[..key.elements().len()].copy_from_slice(key.elements());
    for s in stages(variant) {
        x = circuit.stage(&Slots, &x, s, material).unwrap();
    }
    x
}

#[test]
fn slot_layout_matches_plain_cipher() {
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    for (n, t, r) in [(64, 4, 3), (64, 2, 4), (512, 32, 4), (1024, 128, 3), (64, 5, 3), (256, 8, 4), (2048, 16, 5), (4096, 32, 4), (2048, 3, 6)] {
        let variant = PastaVariant::new(t, r).unwrap();
        for c in 0..3 {
            let key = PastaKey::random(variant, &mut rng);
            let nonce = BlockNonce::for_round(1, 2, c);
            let material = derive_round_material(&nonce, variant);
            let got = slot_keystream(n, variant, &key, &material);
            assert_eq!(&got[..t], &keystream_block(&key, &nonce, variant)[..], "t={t}");
            assert!(got[t..].iter().all(|v| *v == FieldElement::ZERO), "t={t}");
        }
    }
}

#[test]
fn layouts_are_consistent() {
    for (row, v) in [
        (8192, PastaVariant::PASTA_3),
        (8192, PastaVariant::PASTA_4),
        (4096, PastaVariant::PASTA_4),
        (128, PastaVariant::new(8, 4).unwrap()),
    ] {
        let plan = LayoutPlan::new(v, row);
        let (t, r) = (v.block_size(), v.rounds());
        assert_eq!(plan.layers.len(), r);
        if row >= 4096 {
            assert!(plan.layers.iter().all(|l| l.n2 > 1), "{plan:?}");
        }
        let mut stray = vec![false; row];
        for (j, lay) in plan.layers.iter().enumerate() {
            let pi = period(shape_of(j, r), t);
            assert!(lay.n1 * lay.n2 >= pi);
            assert!(layout::valid(lay, pi, t, row, &stray), "layer {j} {plan:?}");
            stray = layout::garbage(lay, t, row);
            if j + 1 < r {
                let shifted: Vec<bool> = (0..row).map(|i| stray[i] || stray[(i + row - 1) % row]).collect();
                stray = shifted;
            }
        }
        assert!(layout::last_valid(&stray, t));
        let steps = rotation_steps(v, 2 * row);
        assert!(steps.row_swap);
        for s in [-1, -(t as i64), -2 * t as i64] {
            assert!(steps.steps.contains(&s));
        }
        let n1 = plan.last_n1;
        assert!(n1 > 1 && n1 < 2 * t);
        let mut g = n1;
        while g < 2 * t {
            assert!(steps.steps.contains(&(g as i64)));
            g += n1;
        }
    }
}

struct Fixture {
    keys: BfvKeySet,
    ctx: HesdContext,
}

fn fixture(n: usize, primes: &[u32], variant: PastaVariant, seed: u64) -> Fixture {
    let params = BfvParams::custom(n, primes).unwrap();
    let keys = keygen(&params, &rotation_steps(variant, n), seed_from_u64(seed)).unwrap();
    let ctx = HesdContext::new(&params, Arc::new(keys.eval.clone()), variant).unwrap();
    Fixture { keys, ctx }
}

impl Fixture {
    fn encrypt_key(&self, key: &PastaKey, rng: &mut ChaCha20Rng) -> Ciphertext {
        encrypt(&self.keys.public, key.elements(), rng).unwrap()
    }
}

#[test]
fn keystream_matches_plain_cipher() {
    let v = PastaVariant::new(4, 3).unwrap();
    let mut f = fixture(256, &[55; 6], v, 1);
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for i in 0..5 {
        let key = PastaKey::random(v, &mut rng);
        f.ctx.set_encrypted_key(f.encrypt_key(&key, &mut rng)).unwrap();
        let nonce = BlockNonce::for_round(3, 7, i);
        let ct = f.ctx.he_keystream(&nonce).unwrap();
        let dec = decrypt(&ct, &f.keys.secret).unwrap();
        assert_eq!(&dec[..4], &keystream_block(&key, &nonce, v)[..]);
        assert!(dec[4..].iter().all(|x| *x == FieldElement::ZERO));
        let measured = noise_budget(&ct, &f.keys.secret).unwrap();
        assert!(ct.estimated_budget() <= measured, "{} > {measured}", ct.estimated_budget());
    }
    assert!(f.ctx.level_plan().windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn pasta4_blocks_roundtrip() {
    let v = PastaVariant::PASTA_4;
    let mut f = fixture(2048, &[55; 8], v, 2);
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let key = PastaKey::random(v, &mut rng);
    let sk_he = f.encrypt_key(&key, &mut rng);
    let nonce = BlockNonce::for_round(5, 9, 0).nonce;
    let mut chunks = Vec::new();
    let mut plain = Vec::new();
    for c in 0..3 {
        let m: Vec<FieldElement> = if c == 0 {
            vec![FieldElement::ZERO; 32]
        } else {
            (0..32).map(|_| FieldElement::new(rng.next_u64() % P)).collect()
        };
        chunks.push(sym_encrypt(&m, &key, &BlockNonce::new(nonce, c), v).unwrap());
        plain.push(m);
    }
    let out = f.ctx.hesd_chunks(nonce, &chunks, &sk_he).unwrap();
    assert_eq!(out.len(), 3);
    for (o, m) in out.iter().zip(&plain) {
        let dec = decrypt(&o.ct, &f.keys.secret).unwrap();
        assert_eq!(&dec[..32], &m[..]);
        assert!(dec[32..].iter().all(|x| *x == FieldElement::ZERO));
    }
    assert!(f.ctx.hesd_chunks(nonce, &[], &sk_he).unwrap().is_empty());
    let mut gap = chunks.clone();
    gap[2].counter = 5;
    assert!(matches!(
        f.ctx.hesd_chunks(nonce, &gap, &sk_he),
        Err(Error::Protocol(_))
    ));
}

#[test]
fn switching_clients_and_constants_path() {
    let v = PastaVariant::new(4, 3).unwrap();
    let mut f = fixture(256, &[55; 6], v, 3);
    let mut rng = ChaCha20Rng::seed_from_u64(13);
    let k1 = PastaKey::random(v, &mut rng);
    let k2 = PastaKey::random(v, &mut rng);
    let (c1, c2) = (f.encrypt_key(&k1, &mut rng), f.encrypt_key(&k2, &mut rng));
    let nonce = BlockNonce::for_round(0, 0, 0).nonce;
    let m1: Vec<FieldElement> = (1..=4).map(FieldElement::new).collect();
    let m2: Vec<FieldElement> = (10..14).map(FieldElement::new).collect();
    let s1 = sym_encrypt(&m1, &k1, &BlockNonce::new(nonce, 0), v).unwrap();
    let s2 = sym_encrypt(&m2, &k2, &BlockNonce::new(nonce, 0), v).unwrap();
    for (ck, s, m) in [(&c1, &s1, &m1), (&c2, &s2, &m2), (&c1, &s1, &m1), (&c1, &s1, &m1)] {
        f.ctx.set_encrypted_key(ck.clone()).unwrap();
        let out = f.ctx.hesd_block(nonce, s).unwrap();
        assert_eq!(&decrypt(&out.ct, &f.keys.secret).unwrap()[..4], &m[..]);
    }

    // Zero key with identity matrices: only the constants reach the output.
    let zero = PastaKey::new(vec![FieldElement::ZERO; 8], v).unwrap();
    f.ctx.set_encrypted_key(f.encrypt_key(&zero, &mut rng)).unwrap();
    let mut material = derive_round_material(&BlockNonce::for_round(1, 1, 1), v);
    for layer in &mut material.layers {
        layer.m_left = Matrix::identity(4);
        layer.m_right = Matrix::identity(4);
    }
    let ct = f.ctx.he_keystream_with_material(&material).unwrap();
    let want = keystream_with_material(&zero, &material);
    assert_eq!(&decrypt(&ct, &f.keys.secret).unwrap()[..4], &want[..]);
}

#[test]
fn errors() {
    let v = PastaVariant::new(4, 3).unwrap();
    let params = BfvParams::custom(256, &[50; 3]).unwrap();
    let keys = keygen(&params, &rotation_steps(v, params.slot_count()), seed_from_u64(4)).unwrap();
    let mut ctx = HesdContext::new(&params, Arc::new(keys.eval.clone()), v).unwrap();
    let nonce = BlockNonce::for_round(0, 0, 0);
    assert!(matches!(ctx.he_keystream(&nonce), Err(Error::Protocol(_))));
    let mut rng = ChaCha20Rng::seed_from_u64(14);
    let key = PastaKey::random(v, &mut rng);
    ctx.set_encrypted_key(encrypt(&keys.public, key.elements(), &mut rng).unwrap())
        .unwrap();
    match ctx.he_keystream(&nonce) {
        Err(Error::BudgetExhausted(Some(layer))) => assert!(!layer.is_empty()),
        other => panic!("expected exhaustion, got {other:?}"),
    }
    let short = SymCiphertextChunk {
        counter: 0,
        elems: vec![FieldElement::ZERO; 3],
    };
    assert!(matches!(
        ctx.hesd_block(nonce.nonce, &short),
        Err(Error::ChunkSize { .. })
    ));

    let few = keygen(&params, &RotationSteps::new(&[1]), seed_from_u64(5)).unwrap();
    assert!(matches!(
        HesdContext::new(&params, Arc::new(few.eval), v),
        Err(Error::MissingRotationKey(_))
    ));
}
