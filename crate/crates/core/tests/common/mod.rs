#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varflow_core::{Grid, GridFunction};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random combination of low sine modes; zero on the unit-square boundary.
pub fn random_dirichlet(grid: &Grid, rng: &mut ChaCha8Rng, amp: f64) -> GridFunction {
    let coef: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(-amp..amp),
                rng.random_range(1..4) as f64,
                rng.random_range(1..4) as f64,
            )
        })
        .collect();
    GridFunction::spatial_fn(grid, |x, y| {
        coef.iter().map(|(c, m, n)| c * (m * PI * x).sin() * (n * PI * y).sin()).sum()
    })
    .unwrap()
    .with_dirichlet()
    .unwrap()
}

/// Independent nodal values in `[-amp, amp]` with a zero boundary.
pub fn random_nodes(grid: &Grid, rng: &mut ChaCha8Rng, amp: f64) -> GridFunction {
    let mut v = vec![0.0; grid.nodes()];
    for j in 1..grid.ny() - 1 {
        for i in 1..grid.nx() - 1 {
            v[grid.node(i, j)] = rng.random_range(-amp..amp);
        }
    }
    GridFunction::from_values(grid, 1, v, true).unwrap()
}

/// Interior 5-point Laplacian with zero boundary values.
pub fn laplacian(grid: &Grid, u: &[f64]) -> Vec<f64> {
    let h2 = grid.h() * grid.h();
    let mut out = vec![0.0; u.len()];
    for j in 1..grid.ny() - 1 {
        for i in 1..grid.nx() - 1 {
            let c = grid.node(i, j);
            out[c] = (u[grid.node(i + 1, j)] + u[grid.node(i - 1, j)] + u[grid.node(i, j + 1)]
                + u[grid.node(i, j - 1)]
                - 4.0 * u[c])
                / h2;
        }
    }
    out
}

/// Solves `(I − τΔ_h) u = rhs` on interior nodes by conjugate gradients.
pub fn implicit_heat_solve(grid: &Grid, rhs: &[f64], tau: f64) -> Vec<f64> {
    let apply = |u: &[f64]| -> Vec<f64> {
        let lap = laplacian(grid, u);
        u.iter().zip(&lap).map(|(a, l)| a - tau * l).collect()
    };
    let interior = |v: &mut Vec<f64>| {
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                if grid.is_boundary(i, j) {
                    v[grid.node(i, j)] = 0.0;
                }
            }
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut b = rhs.to_vec();
    interior(&mut b);
    let mut x = vec![0.0; b.len()];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let stop = 1e-30 * dot(&b, &b).max(1e-300);
    for _ in 0..10 * b.len() {
        if rr <= stop {
            break;
        }
        let mut ap = apply(&p);
        interior(&mut ap);
        let alpha = rr / dot(&p, &ap);
        for k in 0..x.len() {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for k in 0..p.len() {
            p[k] = r[k] + beta * p[k];
        }
        rr = rr_new;
    }
    x
}

/// Observed order from errors on grids refined by a factor of two.
pub fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
