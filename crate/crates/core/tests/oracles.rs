mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;

use common::*;
use issng::examples::{example1, example2};
use issng::grid::{apply_neg_laplacian, dot, Grid, GridFunction};
use issng::krylov::{dense_solve, gmres, GmresOptions};
use issng::problem::{
    apply_slant, apply_slant_transpose, merit, merit_gradient, residual, Bounds, Cubic, ProblemInstance, Slant,
    State,
};

fn boxed_instance(n: usize, seed: u64) -> ProblemInstance {
    let grid = Grid::new(n).unwrap();
    let mut r = rng(seed);
    let f = GridFunction::from_values(grid, random_vec(&mut r, grid.len(), 2.0)).unwrap();
    let yd = GridFunction::from_values(grid, random_vec(&mut r, grid.len(), 1.0)).unwrap();
    ProblemInstance::new(grid, Arc::new(Cubic), Bounds::new(-0.5, 0.7).unwrap(), 0.1, f, yd).unwrap()
}

fn instances(n: usize) -> Vec<ProblemInstance> {
    vec![
        example1(n, 1e-3).unwrap().instance,
        example2(n, 1e-3).unwrap().instance,
        boxed_instance(n, 7 + n as u64),
    ]
}

fn random_state(inst: &ProblemInstance, seed: u64, scale: f64) -> State {
    let mut r = rng(seed);
    State::from_vec(inst.grid(), random_vec(&mut r, inst.dim(), scale)).unwrap()
}

#[test]
fn laplacian_discrete_eigenvectors() {
    for n in [4, 8, 16, 32] {
        let grid = Grid::new(n).unwrap();
        let h = grid.h();
        for (k, l) in [(1, 1), (1, 2), (2, 3), (n - 1, 1), (n / 2, n / 2)] {
            let (kf, lf) = (k as f64, l as f64);
            let v = GridFunction::sample(grid, |x, y| (kf * PI * x).sin() * (lf * PI * y).sin()).unwrap();
            let lambda = 4.0 / (h * h) * ((kf * PI * h / 2.0).sin().powi(2) + (lf * PI * h / 2.0).sin().powi(2));
            let out = apply_neg_laplacian(grid, &v).unwrap();
            let expected: Vec<f64> = v.values().iter().map(|x| lambda * x).collect();
            assert!(max_rel_entrywise(out.values(), &expected) < 1e-12, "n={n} k={k} l={l}");
        }
    }
}

#[test]
fn laplacian_matches_dense_assembly() {
    for n in 2..=8 {
        let grid = Grid::new(n).unwrap();
        let l = dense_neg_laplacian(grid);
        let mut r = rng(n as u64);
        for _ in 0..5 {
            let v = random_vec(&mut r, grid.len(), 1.0);
            let dense = &l * DVector::from_column_slice(&v);
            let free = apply_neg_laplacian(grid, &GridFunction::from_values(grid, v).unwrap()).unwrap();
            assert!(max_rel_entrywise(free.values(), dense.as_slice()) < 1e-12, "n={n}");
        }
    }
}

#[test]
fn residual_matches_dense_assembly() {
    for n in [3, 8] {
        for (t, inst) in instances(n).iter().enumerate() {
            for seed in 0..4 {
                let z = random_state(inst, 100 * seed + t as u64, 0.05 + seed as f64);
                let f = residual(inst, &z).unwrap();
                assert!(rel_err(f.as_slice(), &dense_residual(inst, &z)) < 1e-12, "n={n} t={t}");
            }
        }
    }
}

#[test]
fn slant_and_transpose_match_dense_assembly() {
    for n in [3, 8] {
        for (t, inst) in instances(n).iter().enumerate() {
            let z = random_state(inst, 11 + t as u64, 0.2);
            let g = dense_slant(inst, &z);
            let mut r = rng(5 + t as u64);
            for _ in 0..5 {
                let d = random_vec(&mut r, inst.dim(), 1.0);
                let dv = DVector::from_column_slice(&d);
                let gd = apply_slant(inst, &z, &d).unwrap();
                assert!(rel_err(&gd, (&g * &dv).as_slice()) < 1e-12);
                let gtd = apply_slant_transpose(inst, &z, &d).unwrap();
                assert!(rel_err(&gtd, (g.transpose() * &dv).as_slice()) < 1e-12);
            }
        }
    }
}

#[test]
fn merit_gradient_matches_dense() {
    for n in [3, 8] {
        for inst in instances(n) {
            let z = random_state(&inst, 3, 0.3);
            let g = dense_slant(&inst, &z);
            let f = DVector::from_vec(dense_residual(&inst, &z));
            let expected = g.transpose() * &f;
            let grad = merit_gradient(&inst, &z).unwrap();
            assert!(rel_err(&grad, expected.as_slice()) < 1e-12);
            let q = merit(&inst, &z).unwrap();
            assert!((q - 0.5 * f.norm_squared()).abs() <= 1e-12 * q);
        }
    }
}

#[test]
fn adjoint_identity_over_random_pairs() {
    for n in [3, 8] {
        for inst in instances(n) {
            let z = random_state(&inst, 21, 0.5);
            let slant = Slant::at(&inst, &z).unwrap();
            let mut r = rng(99);
            for _ in 0..20 {
                let d = random_vec(&mut r, inst.dim(), 1.0);
                let w = random_vec(&mut r, inst.dim(), 1.0);
                let lhs = dot(&slant.apply(&d), &w);
                let rhs = dot(&d, &slant.apply_transpose(&w));
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0), "{lhs} vs {rhs}");
            }
        }
    }
}

#[test]
fn gmres_matches_dense_solve_of_newton_system() {
    for n in [3, 8] {
        for inst in instances(n) {
            let z = random_state(&inst, 4, 0.2);
            let slant = Slant::at(&inst, &z).unwrap();
            let rhs: Vec<f64> = residual(&inst, &z).unwrap().as_slice().iter().map(|v| -v).collect();
            let direct = dense_solve(&slant, &rhs).unwrap();
            let opts = GmresOptions {
                tol_rel: 1e-12,
                restart: inst.dim(),
                max_iters: 10 * inst.dim(),
            };
            let it = gmres(&slant, &rhs, &vec![0.0; inst.dim()], &opts).unwrap();
            assert!(it.converged);
            assert!(rel_err(&it.solution, &direct) < 1e-8, "n={n}: {}", rel_err(&it.solution, &direct));
        }
    }
}

#[test]
fn merit_gradient_matches_central_differences() {
    let eps = 1e-6;
    for n in [3, 8] {
        for inst in instances(n) {
            for seed in 0..10 {
                let z = mask_interior_state(&inst, 40 + seed, 1e-3);
                let grad = merit_gradient(&inst, &z).unwrap();
                let mut r = rng(1000 + seed);
                let d = random_vec(&mut r, inst.dim(), 1.0);
                let qp = merit(&inst, &z.step(eps, &d)).unwrap();
                let qm = merit(&inst, &z.step(-eps, &d)).unwrap();
                let fd = (qp - qm) / (2.0 * eps);
                let exact = dot(&grad, &d);
                assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1e-8), "fd {fd} exact {exact}");
            }
        }
    }
}

#[test]
fn slant_matches_central_differences_of_residual() {
    let eps = 1e-6;
    for inst in instances(8) {
        let z = mask_interior_state(&inst, 77, 1e-3);
        let mut r = rng(78);
        let d = random_vec(&mut r, inst.dim(), 1.0);
        let fp = residual(&inst, &z.step(eps, &d)).unwrap();
        let fm = residual(&inst, &z.step(-eps, &d)).unwrap();
        let fd: Vec<f64> = fp.as_slice().iter().zip(fm.as_slice()).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        let gd = apply_slant(&inst, &z, &d).unwrap();
        assert!(rel_err(&fd, &gd) < 1e-6, "{}", rel_err(&fd, &gd));
    }
}

#[test]
fn slant_consistency_with_shrinking_steps() {
    // ||F(z+d) - F(z) - G(z+d) d|| / ||d|| -> 0
    for inst in instances(8) {
        let z = mask_interior_state(&inst, 5, 1e-2);
        let mut r = rng(6);
        let dir = random_vec(&mut r, inst.dim(), 1.0);
        let fz = residual(&inst, &z).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..=5 {
            let t = 10f64.powi(-k);
            let d: Vec<f64> = dir.iter().map(|v| v * t).collect();
            let zd = z.step(1.0, &d);
            let fzd = residual(&inst, &zd).unwrap();
            let gd = apply_slant(&inst, &zd, &d).unwrap();
            let rem: f64 = (0..d.len())
                .map(|i| (fzd.as_slice()[i] - fz.as_slice()[i] - gd[i]).powi(2))
                .sum::<f64>()
                .sqrt();
            let ratio = rem / issng::grid::norm2(&d);
            assert!(ratio < prev || ratio < 1e-9, "k={k}: {ratio} !< {prev}");
            prev = ratio;
        }
        assert!(prev < 1e-4, "{prev}");
    }
}
