mod common;

use std::f64::consts::PI;

use common::*;
use varflow_core::oracles::{heat_exact, manufactured_problem};
use varflow_core::solver::{
    energy_diagnostics, implicit_step, integration_by_parts_gap, step_energy, weak_residual, ProblemSpec, SourceSpec,
};
use varflow_core::spaces::{l2_norm_sq, Region};
use varflow_core::{solve, ExponentField, Grid, GridFunction, SpaceTimeExpr};

fn sine(grid: &Grid) -> GridFunction {
    GridFunction::spatial_fn(grid, |x, y| (PI * x).sin() * (PI * y).sin())
        .unwrap()
        .with_dirichlet()
        .unwrap()
}

fn heat_spec(n: usize) -> ProblemSpec {
    let g = Grid::unit_square_parabolic(n, 0.05).unwrap();
    let p = ExponentField::constant(&g, 2.0).unwrap();
    ProblemSpec::new(p, SourceSpec::zero(&g), sine(&g)).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn quadratic_gradient_matches_five_point_stencil() {
    let g = Grid::unit_square(17, 3, 0.01).unwrap();
    let mut r = rng(11);
    let f0 = GridFunction::space_time_fn(&g, |x, y, t| x * y + t).unwrap();
    let spec = ProblemSpec::new(ExponentField::constant(&g, 2.0).unwrap(), SourceSpec::forcing(f0.clone()), sine(&g))
        .unwrap()
        .with_eps_reg(0.0)
        .unwrap();
    for _ in 0..5 {
        let u = random_nodes(&g, &mut r, 1.0);
        let up = random_nodes(&g, &mut r, 1.0);
        let e = step_energy(&u, &up, 1, &spec).unwrap();
        let lap = laplacian(&g, u.level(0));
        let h2 = g.h() * g.h();
        for j in 1..g.ny() - 1 {
            for i in 1..g.nx() - 1 {
                let n = g.node(i, j);
                let expected = ((u.level(0)[n] - up.level(0)[n]) / g.tau() - lap[n] - f0.at(1, i, j)) * h2;
                assert!((e.gradient.level(0)[n] - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
            }
        }
    }
}

#[test]
fn gradient_matches_central_differences() {
    let g = Grid::unit_square(17, 3, 1.0 / 256.0).unwrap();
    let p = ExponentField::from_fn(&g, |x, _, _| 2.5 + 0.3 * x).unwrap();
    let sigma = ExponentField::constant(&g, 2.0).unwrap();
    let f0 = GridFunction::space_time_fn(&g, |x, y, _| (PI * x).cos() * y).unwrap();
    let spec = ProblemSpec::new(p, SourceSpec::forcing(f0).with_absorption(1.0, sigma), sine(&g)).unwrap();
    let mut r = rng(3);
    // fourth-order central differences; a step of 1e-4 keeps the rounding
    // noise of an O(10³) energy well below the tolerance
    let delta = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let u = random_nodes(&g, &mut r, 1.0);
        let up = random_nodes(&g, &mut r, 1.0);
        let e = step_energy(&u, &up, 1, &spec).unwrap();
        let at = |n: usize, d: f64| -> f64 {
            let mut v = u.level(0).to_vec();
            v[n] += d;
            step_energy(&GridFunction::from_values(&g, 1, v, true).unwrap(), &up, 1, &spec)
                .unwrap()
                .value
        };
        for j in 1..g.ny() - 1 {
            for i in 1..g.nx() - 1 {
                let n = g.node(i, j);
                let fd = (at(n, -2.0 * delta) - 8.0 * at(n, -delta) + 8.0 * at(n, delta) - at(n, 2.0 * delta))
                    / (12.0 * delta);
                let an = e.gradient.level(0)[n];
                let rel = (fd - an).abs() / an.abs().max(fd.abs());
                worst = worst.max(rel);
            }
        }
    }
    assert!(worst <= 1e-6, "worst relative error {worst:e}");
}

#[test]
fn quadratic_step_matches_linear_solve() {
    let g = Grid::unit_square_parabolic(33, 0.01).unwrap();
    let f0 = GridFunction::space_time_fn(&g, |x, y, t| 1.0 + x * y + t).unwrap();
    let mut r = rng(5);
    let up = random_dirichlet(&g, &mut r, 1.0);
    let spec = ProblemSpec::new(ExponentField::constant(&g, 2.0).unwrap(), SourceSpec::forcing(f0.clone()), up.clone())
        .unwrap()
        .with_eps_reg(0.0)
        .unwrap();
    let out = implicit_step(&up, 1, &spec).unwrap();
    assert!(out.converged);
    let rhs: Vec<f64> = up.level(0).iter().zip(f0.level(1)).map(|(u, f)| u + g.tau() * f).collect();
    let direct = implicit_heat_solve(&g, &rhs, g.tau());
    let diff = max_abs_diff(out.u.level(0), &direct);
    assert!(diff <= 10.0 * spec.grad_tol(), "diff {diff:e} vs tol {:e}", spec.grad_tol());
}

#[test]
fn step_energy_decreases_and_is_midpoint_convex() {
    let g = Grid::unit_square(17, 3, 0.004).unwrap();
    let mut r = rng(17);
    for case in 0..20 {
        let p0 = 1.6 + 0.2 * (case % 5) as f64;
        let p = ExponentField::from_fn(&g, |x, y, _| p0 + 0.3 * x * y).unwrap();
        let sigma = ExponentField::from_fn(&g, |x, _, _| 2.0 + 0.2 * x).unwrap();
        let f0 = GridFunction::space_time_fn(&g, |x, _, _| (case as f64) * 0.1 * x).unwrap();
        let up = random_dirichlet(&g, &mut r, 1.0);
        let spec = ProblemSpec::new(p, SourceSpec::forcing(f0).with_absorption(0.5, sigma), up.clone()).unwrap();
        let out = implicit_step(&up, 1, &spec).unwrap();
        assert!(out.converged);
        let before = step_energy(&up, &up, 1, &spec).unwrap().value;
        assert!(out.energy <= before + 1e-12, "case {case}: {} > {before}", out.energy);

        for _ in 0..5 {
            let a = random_nodes(&g, &mut r, 1.0);
            let b = random_nodes(&g, &mut r, 1.0);
            let mid: Vec<f64> = a.level(0).iter().zip(b.level(0)).map(|(x, y)| 0.5 * (x + y)).collect();
            let mid = GridFunction::from_values(&g, 1, mid, true).unwrap();
            let ea = step_energy(&a, &up, 1, &spec).unwrap().value;
            let eb = step_energy(&b, &up, 1, &spec).unwrap().value;
            let em = step_energy(&mid, &up, 1, &spec).unwrap().value;
            assert!(em <= 0.5 * (ea + eb) + 1e-12 * (1.0 + ea.abs() + eb.abs()));
        }
    }
}

fn heat_error(n: usize) -> f64 {
    let spec = heat_spec(n);
    let r = solve(&spec).unwrap();
    let g = spec.grid;
    let last = g.nt() - 1;
    let exact = heat_exact(&g, last).unwrap();
    let diff = r.trajectory.slice(last).sub(&exact).unwrap();
    l2_norm_sq(&diff, Region::Slice(0)).unwrap().sqrt()
}

#[test]
fn heat_benchmark_converges_at_second_order() {
    let errors: Vec<f64> = [17, 33, 65].iter().map(|&n| heat_error(n)).collect();
    let o = orders(&errors);
    assert!(o.iter().all(|&v| v >= 1.8), "errors {errors:?}, orders {o:?}");
}

#[test]
fn heat_diagnostics_and_closed_form_gradient_integral() {
    let spec = heat_spec(33);
    let r = solve(&spec).unwrap();
    let d = &r.diagnostics;
    assert!((d.sup_l2_sq - 0.25).abs() <= 0.01 * 0.25);
    // ∫_Q |∇u|² = 2π²·¼·∫₀ᵀ e^{−4π²t} dt
    let t = spec.grid.horizon();
    let exact = 2.0 * PI * PI * 0.25 * (1.0 - (-4.0 * PI * PI * t).exp()) / (4.0 * PI * PI);
    assert!((d.grad_modular - exact).abs() <= 0.02 * exact, "{} vs {exact}", d.grad_modular);
    assert!(d.weak_bound_ratio.is_finite() && d.weak_bound_ratio > 0.0);
    for v in [d.ut_l2_sq, d.sup_grad_modular_s, d.u0_grad_modular] {
        assert!(v.is_finite() && v >= 0.0);
    }
    assert_eq!(d, &energy_diagnostics(&r, &spec).unwrap());
}

#[test]
fn manufactured_cubic_problem_converges() {
    let u_star = SpaceTimeExpr::parse("exp(-t)*sin(pi*x)*sin(pi*y)").unwrap();
    let p = SpaceTimeExpr::parse("3").unwrap();
    let mut errors = Vec::new();
    for n in [9, 17, 33] {
        let g = Grid::unit_square_parabolic(n, 0.1).unwrap();
        let case = manufactured_problem(&u_star, &p, &g, 1e-8).unwrap();
        let r = solve(&case.spec().unwrap()).unwrap();
        let diff = r.trajectory.sub(&case.exact().unwrap()).unwrap();
        errors.push(l2_norm_sq(&diff, Region::Cylinder).unwrap().sqrt());
    }
    let o = orders(&errors);
    assert!(errors.windows(2).all(|w| w[1] < w[0]));
    assert!(o.iter().all(|&v| v >= 1.0), "errors {errors:?}, orders {o:?}");
}

#[test]
fn weak_residual_budget_and_negative_control() {
    let spec = heat_spec(17);
    let r = solve(&spec).unwrap();
    let g = spec.grid;
    let zero = GridFunction::zeros(&g, g.nt(), true);
    assert_eq!(weak_residual(&r, &spec, &zero).unwrap(), 0.0);

    let phi = r.trajectory.clone();
    let budget = r.grad_tol * phi.max_abs() * g.nt() as f64;
    let res = weak_residual(&r, &spec, &phi).unwrap();
    assert!(res <= budget, "{res:e} > {budget:e}");

    let mut rg = rng(23);
    let mut noise = GridFunction::zeros(&g, g.nt(), true);
    let mut test = GridFunction::zeros(&g, g.nt(), true);
    for k in 0..g.nt() {
        let a = random_nodes(&g, &mut rg, 1.0);
        let b = random_nodes(&g, &mut rg, 1.0);
        noise = replace_level(&noise, k, a.level(0));
        test = replace_level(&test, k, b.level(0));
    }
    let fake = varflow_core::SolveResult {
        trajectory: noise,
        ..r.clone()
    };
    let budget = r.grad_tol * test.max_abs() * g.nt() as f64;
    assert!(weak_residual(&fake, &spec, &test).unwrap() >= 1e3 * budget);
}

fn replace_level(f: &GridFunction, k: usize, values: &[f64]) -> GridFunction {
    let n = f.grid().nodes();
    let mut all = f.values().to_vec();
    all[k * n..(k + 1) * n].copy_from_slice(values);
    GridFunction::from_values(f.grid(), f.levels(), all, true).unwrap()
}

#[test]
fn heat_exact_weak_residual_vanishes_under_refinement() {
    let mut res = Vec::new();
    for n in [9, 17, 33] {
        let spec = heat_spec(n);
        let g = spec.grid;
        let mut traj = GridFunction::zeros(&g, g.nt(), true);
        for k in 0..g.nt() {
            traj = replace_level(&traj, k, heat_exact(&g, k).unwrap().level(0));
        }
        let test = GridFunction::space_time_fn(&g, |x, y, t| (1.0 + t) * x * (1.0 - x) * y * y * (1.0 - y))
            .unwrap()
            .with_dirichlet()
            .unwrap();
        let fake = varflow_core::SolveResult {
            trajectory: traj,
            steps: Vec::new(),
            diagnostics: varflow_core::solver::EnergyReport::unavailable(),
            grad_tol: spec.grad_tol(),
        };
        res.push(weak_residual(&fake, &spec, &test).unwrap());
    }
    let o = orders(&res);
    assert!(o.iter().all(|&v| v >= 1.0), "residuals {res:?}, orders {o:?}");
}

#[test]
fn integration_by_parts_identity_holds_on_any_sequence() {
    let g = Grid::unit_square(17, 6, 0.1).unwrap();
    let mut r = rng(29);
    let mut traj = GridFunction::zeros(&g, g.nt(), true);
    for k in 0..g.nt() {
        traj = replace_level(&traj, k, random_nodes(&g, &mut r, 2.0).level(0));
    }
    assert!(integration_by_parts_gap(&traj).unwrap().abs() <= 1e-10);
}

#[test]
fn contraction_in_initial_data() {
    let g = Grid::unit_square_parabolic(17, 0.05).unwrap();
    let p = ExponentField::from_fn(&g, |x, _, _| 2.3 + 0.2 * (PI * x).sin()).unwrap();
    let f0 = GridFunction::space_time_fn(&g, |x, y, _| x * y).unwrap();
    let u0 = sine(&g);
    let v0 = GridFunction::spatial_fn(&g, |x, y| 1.2 * (PI * x).sin() * (PI * y).sin() + 0.3 * (2.0 * PI * x).sin() * (PI * y).sin())
        .unwrap()
        .with_dirichlet()
        .unwrap();
    let a = ProblemSpec::new(p.clone(), SourceSpec::forcing(f0.clone()), u0).unwrap();
    let b = ProblemSpec::new(p, SourceSpec::forcing(f0), v0).unwrap();
    let (ra, rb) = (solve(&a).unwrap(), solve(&b).unwrap());
    let d0 = l2_norm_sq(&a.u0.sub(&b.u0).unwrap(), Region::Slice(0)).unwrap().sqrt();
    let diff = ra.trajectory.sub(&rb.trajectory).unwrap();
    for k in 0..g.nt() {
        let dk = l2_norm_sq(&diff, Region::Slice(k)).unwrap().sqrt();
        assert!(dk <= d0 * (1.0 + 10.0 * a.grad_tol()), "level {k}: {dk} > {d0}");
    }
}

#[test]
fn regularization_does_not_change_the_solution() {
    let g = Grid::unit_square_parabolic(17, 0.02).unwrap();
    let p = ExponentField::from_fn(&g, |x, _, _| 1.8 + 0.4 * x).unwrap();
    let base = ProblemSpec::new(p, SourceSpec::zero(&g), sine(&g)).unwrap();
    let runs: Vec<GridFunction> = [1e-6, 1e-8, 1e-10]
        .iter()
        .map(|&e| solve(&base.clone().with_eps_reg(e).unwrap()).unwrap().trajectory)
        .collect();
    for r in &runs[1..] {
        let d = l2_norm_sq(&r.sub(&runs[0]).unwrap(), Region::Cylinder).unwrap().sqrt();
        assert!(d < 1e-4, "eps sensitivity {d:e}");
    }
}

#[test]
fn higher_integrability_is_stable_under_refinement() {
    let a = solve(&heat_spec(33)).unwrap();
    let b = solve(&heat_spec(65)).unwrap();
    let (va, vb) = (
        a.diagnostics.higher_integrability_mid().unwrap(),
        b.diagnostics.higher_integrability_mid().unwrap(),
    );
    assert!((va - vb).abs() / vb < 0.2, "{va} vs {vb}");
}
