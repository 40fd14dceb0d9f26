//! Slot layouts for the affine layers.
//!
//! A first or middle layer of period `pi` is evaluated with `n2` spaced
//! copies of the replicated input: copy `g` sits at offset `g * d`, and a
//! single set of `n1 = ceil(pi / n2)` baby-step rotations serves every
//! copy. Block `g` of the product lands at `g * s` with `s = d + n1`, and a
//! rotation tree folds the blocks onto slot 0. The fold leaves copies of
//! partial sums at multiples of `s`; a layout is only accepted if none of
//! the stray values left by the previous layer can reach a slot it reads.
//! The last layer uses plain baby-step/giant-step on a clean input, so the
//! keystream ends with zeros outside `0..t`.

use alloc::vec;
use alloc::vec::Vec;

use super::{period, shape_of, Shape};
use crate::pasta::PastaVariant;

const KEY_SWITCH: f64 = 5.5;
const BABY: f64 = 0.3;
const PLAIN: f64 = 1.0;
const GIANT_COST: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) struct Layout {
    pub n1: usize,
    pub n2: usize,
    pub d: usize,
}

impl Layout {
    pub fn spacing(&self) -> usize {
        self.d + self.n1
    }

    fn cost(&self) -> f64 {
        let tree = 2.0 * self.n2.trailing_zeros() as f64;
        KEY_SWITCH * (2.0 + tree) + BABY * (self.n1 - 1) as f64 + PLAIN * self.n1 as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(super) struct LayoutPlan {
    pub layers: Vec<Layout>,
    pub last_n1: usize,
}

impl LayoutPlan {
    /// Chooses each layer with one layer of lookahead: the cheapest layout
    /// whose stray slots still leave the next layer its cheapest option.
    pub fn new(variant: PastaVariant, row: usize) -> Self {
        let t = variant.block_size();
        let r = variant.rounds();
        let pi = |j: usize| period(shape_of(j, r), t);
        let after = |lay: &Layout, j: usize| {
            let g = garbage(lay, t, row);
            if j + 1 < r {
                shifted_union(&g, &[1])
            } else {
                g
            }
        };
        let mut layers = Vec::with_capacity(r);
        let mut stray = vec![false; row];
        for j in 0..r {
            let options = candidates(pi(j), t, row, &stray, j + 1 == r);
            let score = |lay: &Layout| {
                let next = if j + 1 < r {
                    candidates(pi(j + 1), t, row, &after(lay, j), j + 2 == r)
                        .iter()
                        .map(|l| l.cost())
                        .fold(f64::INFINITY, f64::min)
                } else {
                    0.0
                };
                lay.cost() + next
            };
            let lay = options
                .iter()
                .copied()
                .min_by(|a, b| score(a).total_cmp(&score(b)))
                .unwrap_or(Layout { n1: pi(j), n2: 1, d: 0 });
            stray = after(&lay, j);
            layers.push(lay);
        }
        LayoutPlan {
            layers,
            last_n1: last_split(t),
        }
    }

    pub fn rotation_steps(&self, variant: PastaVariant) -> Vec<i64> {
        let t = variant.block_size();
        let r = variant.rounds();
        let ti = t as i64;
        let mut steps = vec![-1, -ti, -2 * ti];
        for (j, lay) in self.layers.iter().enumerate() {
            let pi = period(shape_of(j, r), t);
            steps.push(-(pi as i64));
            steps.extend(1..lay.n1 as i64);
            let mut span = 1;
            while span < lay.n2 {
                steps.push(-((span * lay.d) as i64));
                steps.push((span * lay.spacing()) as i64);
                span *= 2;
            }
        }
        let n1 = self.last_n1;
        steps.extend(1..n1 as i64);
        let mut g = n1;
        while g < 2 * t {
            steps.push(g as i64);
            g += n1;
        }
        steps
    }
}

// Baby-step count for the last layer.
fn last_split(t: usize) -> usize {
    let pi = period(Shape::Last, t);
    (1..=pi)
        .min_by_key(|&n1| (n1 - 1) + GIANT_COST * (pi.div_ceil(n1) - 1))
        .unwrap_or(1)
}

// For every split, the accepted layout with the smallest copy offset.
fn candidates(pi: usize, t: usize, row: usize, stray: &[bool], before_last: bool) -> Vec<Layout> {
    let Some(reads) = Reads::new(pi, t, row, stray) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut n2 = 1;
    while n2 <= pi {
        let n1 = pi.div_ceil(n2);
        let ds: Vec<usize> = if n2 == 1 { vec![0] } else { (1..row).collect() };
        let found = ds.into_iter().map(|d| Layout { n1, n2, d }).find(|lay| {
            reads.accepts(lay) && (!before_last || last_valid(&garbage(lay, t, row), t))
        });
        out.extend(found);
        n2 *= 2;
    }
    out
}

fn shifted_union(set: &[bool], shifts: &[usize]) -> Vec<bool> {
    let h = set.len();
    let mut out = set.to_vec();
    for (i, &b) in set.iter().enumerate() {
        if b {
            for &s in shifts {
                out[(i + s) % h] = true;
            }
        }
    }
    out
}

fn hits(set: &[bool], start: usize, len: usize) -> bool {
    let h = set.len();
    (0..len).any(|u| set[(start + u) % h])
}

// Slots a layer leaves nonzero outside `0..t`.
pub(super) fn garbage(lay: &Layout, t: usize, row: usize) -> Vec<bool> {
    let mut out = vec![false; row];
    let s = lay.spacing();
    for m in 1..lay.n2 {
        for i in 0..t {
            out[(m * s + i) % row] = true;
            out[(row - (m * s) % row + i) % row] = true;
        }
    }
    out
}

#[cfg(test)]
pub(super) fn valid(lay: &Layout, pi: usize, t: usize, row: usize, stray: &[bool]) -> bool {
    Reads::new(pi, t, row, stray).map_or(false, |r| r.accepts(lay))
}

// What a layer of period `pi` may read, given the stray slots of its input.
struct Reads {
    pi: usize,
    t: usize,
    support: Vec<bool>,
}

impl Reads {
    fn new(pi: usize, t: usize, row: usize, stray: &[bool]) -> Option<Self> {
        if 2 * pi > row || pi + t > row {
            return None;
        }
        let mut support = shifted_union(stray, &[pi]);
        if hits(&support, 0, pi + t) {
            return None;
        }
        support[..2 * pi].iter_mut().for_each(|b| *b = true);
        Some(Reads { pi, t, support })
    }

    fn accepts(&self, lay: &Layout) -> bool {
        if lay.n2 == 1 {
            return true;
        }
        let row = self.support.len();
        let s = lay.spacing();
        if lay.d == 0 || s < self.t || (lay.n2 - 1) * s + self.t > row {
            return false;
        }
        let len = self.pi + self.t;
        (1..lay.n2).all(|m| {
            let off = (m * lay.d) % row;
            !hits(&self.support, off, len) && !hits(&self.support, (row - off) % row, len)
        })
    }
}

pub(super) fn last_valid(stray: &[bool], t: usize) -> bool {
    let u = shifted_union(stray, &[t]);
    let rep = shifted_union(&u, &[2 * t]);
    !hits(&rep, 0, 3 * t)
}
