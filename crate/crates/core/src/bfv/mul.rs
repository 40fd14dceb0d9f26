// Ciphertext multiplication: extend both operands from Q to Q u P, tensor
// there, scale by p/Q into P, and convert back to Q.

use alloc::vec;
use alloc::vec::Vec;

use super::params::{BfvParams, Level};
use crate::ring::{Domain, RingElement};

#[inline(always)]
fn round_f64(x: f64) -> u64 {
    (x + 0.5) as u64
}

/// Coefficient-domain residues mod Q (level `lv`) -> residues mod P of the
/// centered lift.
fn extend_q_to_p(params: &BfvParams, lv: &Level, x: &[u64], out: &mut [u64]) {
    let n = params.degree();
    let l = lv.ctx.len();
    let ext = params.ext().moduli();
    let t = &lv.mul;
    let qm = lv.ctx.moduli();
    let mut y = vec![0u64; l];
    for k in 0..n {
        let mut v = 0.0f64;
        for i in 0..l {
            let yi = qm[i].mul_shoup(x[i * n + k], lv.q_hat_inv[i], lv.q_hat_inv_shoup[i]);
            y[i] = yi;
            v += yi as f64 * t.inv_q[i];
        }
        let v = round_f64(v);
        for (j, r) in ext.iter().enumerate() {
            let mut acc = 0u128;
            for i in 0..l {
                acc += y[i] as u128 * t.q_hat_mod_r[i][j] as u128;
            }
            let s = r.reduce_wide(acc);
            out[j * n + k] = r.sub(s, r.mul(r.reduce(v), t.q_mod_r[j]));
        }
    }
}

/// `round(p * x / Q) mod P` from residues of `x` mod Q and mod P.
fn scale_to_p(params: &BfvParams, lv: &Level, xq: &[u64], xp: &[u64], out: &mut [u64]) {
    let n = params.degree();
    let l = lv.ctx.len();
    let ext = params.ext().moduli();
    let t = &lv.mul;
    for k in 0..n {
        let mut int_sum = 0u128;
        let mut frac_sum = 0u128;
        for i in 0..l {
            let x = xq[i * n + k] as u128;
            let (hi, lo) = t.scale_frac[i];
            let v = x * hi as u128 + ((x * lo as u128) >> 64);
            int_sum += v >> 64;
            frac_sum += v as u64 as u128;
        }
        let rounded = int_sum + (frac_sum >> 64) + ((frac_sum as u64) >> 63) as u128;
        for (j, r) in ext.iter().enumerate() {
            let mut acc = rounded;
            for i in 0..l {
                acc += xq[i * n + k] as u128 * t.scale_int[i][j] as u128;
            }
            let (th, ths) = t.theta[j];
            let s = r.reduce_wide(acc);
            out[j * n + k] = r.add(s, r.mul_shoup(xp[j * n + k], th, ths));
        }
    }
}

/// Residues mod P of a value with `|y| < P/2` -> residues mod Q.
fn convert_p_to_q(params: &BfvParams, lv: &Level, y: &[u64], out: &mut [u64]) {
    let n = params.degree();
    let ext = params.ext().moduli();
    let kk = ext.len();
    let t = &lv.mul;
    let qm = lv.ctx.moduli();
    let mut z = vec![0u64; kk];
    for k in 0..n {
        let mut v = 0.0f64;
        for j in 0..kk {
            let (w, ws) = t.p_hat_inv[j];
            let zj = ext[j].mul_shoup(y[j * n + k], w, ws);
            z[j] = zj;
            v += zj as f64 * t.inv_r[j];
        }
        let v = round_f64(v);
        for (i, q) in qm.iter().enumerate() {
            let mut acc = 0u128;
            for j in 0..kk {
                acc += z[j] as u128 * t.p_hat_mod_q[j][i] as u128;
            }
            let s = q.reduce_wide(acc);
            out[i * n + k] = q.sub(s, q.mul(q.reduce(v), t.p_mod_q[i]));
        }
    }
}

/// Operand in both bases, NTT domain: (residues mod Q, residues mod P).
struct Extended {
    q: RingElement,
    p: RingElement,
}

fn extend(params: &BfvParams, lv: &Level, a_ntt: &RingElement) -> Extended {
    let coeff = a_ntt.clone().into_domain(Domain::Coefficient);
    let n = params.degree();
    let ext = params.ext();
    let mut pdata = vec![0u64; n * ext.len()];
    extend_q_to_p(params, lv, coeff.data(), &mut pdata);
    let p = RingElement::from_residues(ext, pdata, Domain::Coefficient)
        .expect("reduced")
        .into_domain(Domain::Ntt);
    Extended {
        q: a_ntt.clone(),
        p,
    }
}

fn pointwise(a: &RingElement, b: &RingElement) -> RingElement {
    let mut x = a.clone();
    x.mul_assign_pointwise(b).expect("same context");
    x
}

/// Tensor product of two size-2 ciphertexts at the same level. Returns the
/// three components in the coefficient domain mod Q.
pub(crate) fn tensor(
    params: &BfvParams,
    level: usize,
    a: &[RingElement],
    b: Option<&[RingElement]>,
) -> [RingElement; 3] {
    let lv = params.level(level);
    let ea: Vec<Extended> = a.iter().map(|x| extend(params, lv, x)).collect();
    let prods = |base: fn(&Extended) -> &RingElement, eb: &[Extended]| -> [RingElement; 3] {
        let c0 = pointwise(base(&ea[0]), base(&eb[0]));
        let mut c1 = pointwise(base(&ea[0]), base(&eb[1]));
        if core::ptr::eq(eb.as_ptr(), ea.as_ptr()) {
            let c = c1.clone();
            c1.add_assign(&c).expect("same context");
        } else {
            c1.fma_pointwise(base(&ea[1]), base(&eb[0]))
                .expect("same context");
        }
        let c2 = pointwise(base(&ea[1]), base(&eb[1]));
        [c0, c1, c2]
    };
    let eb_owned: Vec<Extended>;
    let eb: &[Extended] = match b {
        Some(b) => {
            eb_owned = b.iter().map(|x| extend(params, lv, x)).collect();
            &eb_owned
        }
        None => &ea,
    };
    let tq = prods(|e| &e.q, eb);
    let tp = prods(|e| &e.p, eb);
    let n = params.degree();
    let ext = params.ext();
    let mut out: Vec<RingElement> = Vec::with_capacity(3);
    for (cq, cp) in tq.into_iter().zip(tp) {
        let cq = cq.into_domain(Domain::Coefficient);
        let cp = cp.into_domain(Domain::Coefficient);
        let mut scaled = vec![0u64; n * ext.len()];
        scale_to_p(params, lv, cq.data(), cp.data(), &mut scaled);
        let mut back = vec![0u64; n * lv.ctx.len()];
        convert_p_to_q(params, lv, &scaled, &mut back);
        out.push(RingElement::from_residues(&lv.ctx, back, Domain::Coefficient).expect("reduced"));
    }
    let c2 = out.pop().unwrap();
    let c1 = out.pop().unwrap();
    let c0 = out.pop().unwrap();
    [c0, c1, c2]
}
