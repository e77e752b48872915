//! Dense reference implementations assembled independently of the
//! matrix-free code, for small grids only.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use issng::grid::Grid;
use issng::problem::{Bounds, Nonlinearity, ProblemInstance, State};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// `tridiag(-1, 2, -1) / h²` of size `m`, i.e. `-J_h`.
fn neg_second_difference(m: usize, h: f64) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(m, m);
    for i in 0..m {
        j[(i, i)] = 2.0 / (h * h);
        if i + 1 < m {
            j[(i, i + 1)] = -1.0 / (h * h);
            j[(i + 1, i)] = -1.0 / (h * h);
        }
    }
    j
}

/// `-(I ⊗ J_h + J_h ⊗ I)` with `x1` fastest.
pub fn dense_neg_laplacian(grid: Grid) -> DMatrix<f64> {
    let m = grid.m();
    let j = neg_second_difference(m, grid.h());
    let eye = DMatrix::<f64>::identity(m, m);
    eye.kronecker(&j) + j.kronecker(&eye)
}

/// Indicator of `lower < p/α < upper`, computed from scratch.
pub fn dense_mask(p: &[f64], alpha: f64, b: Bounds) -> Vec<f64> {
    p.iter()
        .map(|&v| {
            let u = v / alpha;
            if u > b.lower() && u < b.upper() {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// `F(z)` through the dense Laplacian.
pub fn dense_residual(inst: &ProblemInstance, z: &State) -> Vec<f64> {
    let l = dense_neg_laplacian(inst.grid());
    let s = inst.nonlinearity();
    let y = DVector::from_column_slice(z.y());
    let p = DVector::from_column_slice(z.p());
    let ly = &l * &y;
    let lp = &l * &p;
    let (lo, hi) = (inst.bounds().lower(), inst.bounds().upper());
    let mut out = Vec::with_capacity(2 * y.len());
    for i in 0..y.len() {
        let u = (p[i] / inst.alpha()).max(lo).min(hi);
        out.push(ly[i] + s.value(y[i]) - u - inst.f().values()[i]);
    }
    for i in 0..y.len() {
        out.push(lp[i] + s.derivative(y[i]) * p[i] + y[i] - inst.yd().values()[i]);
    }
    out
}

/// Block matrix `G(z)`.
pub fn dense_slant(inst: &ProblemInstance, z: &State) -> DMatrix<f64> {
    let l = dense_neg_laplacian(inst.grid());
    let k = l.nrows();
    let s: &dyn Nonlinearity = inst.nonlinearity();
    let mask = dense_mask(z.p(), inst.alpha(), inst.bounds());
    let mut g = DMatrix::zeros(2 * k, 2 * k);
    g.view_mut((0, 0), (k, k)).copy_from(&l);
    g.view_mut((k, k), (k, k)).copy_from(&l);
    for i in 0..k {
        let (y, p) = (z.y()[i], z.p()[i]);
        g[(i, i)] += s.derivative(y);
        g[(k + i, k + i)] += s.derivative(y);
        g[(i, k + i)] = -mask[i] / inst.alpha();
        g[(k + i, i)] = 1.0 + s.second_derivative(y) * p;
    }
    g
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    diff / scale
}

pub fn max_rel_entrywise(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// Random point with every `p/α` at least `margin` away from the bounds.
pub fn mask_interior_state(inst: &ProblemInstance, seed: u64, margin: f64) -> State {
    let mut r = rng(seed);
    let mut z = random_vec(&mut r, inst.dim(), 0.5);
    let m = inst.grid().len();
    let (lo, hi) = (inst.bounds().lower(), inst.bounds().upper());
    for p in &mut z[m..] {
        let u = *p / inst.alpha();
        if lo.is_finite() && hi.is_finite() {
            // put roughly a third of the nodes above, below and inside the box
            let u = match (u * 1e3).abs() as usize % 3 {
                0 => lo - 1.0 - u.abs(),
                1 => hi + 1.0 + u.abs(),
                _ => 0.5 * (lo + hi) + 0.4 * (hi - lo) * (u / 5.0).tanh(),
            };
            *p = u * inst.alpha();
        }
        let u = *p / inst.alpha();
        assert!((u - lo).abs() > margin && (u - hi).abs() > margin);
    }
    State::from_vec(inst.grid(), z).unwrap()
}
