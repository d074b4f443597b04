//! Reference computations that do not share code paths with the solver or
//! the norm routines: the analytic heat solution, manufactured sources and a
//! brute-force Luxemburg scanner.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::exponent::ExponentField;
use crate::expr::SpaceTimeExpr;
use crate::grid::Grid;
use crate::solver::{ProblemSpec, SourceSpec};
use crate::spaces::{quadrature_points, GridFunction, Integrand, Region};

/// `e^{−2π²t} sin(πx) sin(πy)` at level `level`.
pub fn heat_exact(grid: &Grid, level: usize) -> Result<GridFunction> {
    if !grid.is_unit_square() {
        return Err(Error::DomainMismatch(format!(
            "heat solution is defined on the unit square, grid covers {:?}",
            grid.domain()
        )));
    }
    if level >= grid.nt() {
        return Err(Error::ShapeMismatch(format!("level {level} beyond {} levels", grid.nt())));
    }
    let decay = (-2.0 * PI * PI * grid.t(level)).exp();
    GridFunction::spatial_fn(grid, |x, y| decay * (PI * x).sin() * (PI * y).sin())?.with_dirichlet()
}

/// A chosen exact solution together with the source that makes it one.
#[derive(Clone, Debug)]
pub struct ManufacturedCase {
    pub u_star: SpaceTimeExpr,
    pub p: ExponentField,
    pub f0: GridFunction,
    pub eps_reg: f64,
    pub description: String,
}

impl ManufacturedCase {
    /// Problem whose solution approximates `u_star`.
    pub fn spec(&self) -> Result<ProblemSpec> {
        let u0 = GridFunction::spatial_expr(self.p.grid(), &self.u_star)?.with_dirichlet()?;
        ProblemSpec::new(self.p.clone(), SourceSpec::forcing(self.f0.clone()), u0)?.with_eps_reg(self.eps_reg)
    }

    /// `u_star` sampled on every level.
    pub fn exact(&self) -> Result<GridFunction> {
        GridFunction::space_time_expr(self.p.grid(), &self.u_star)?.with_dirichlet()
    }
}

const REFINE: f64 = 4.0;

/// Fourth-order central first derivative with step `d`.
fn d1(f: impl Fn(f64) -> f64, x: f64, d: f64) -> f64 {
    (f(x - 2.0 * d) - 8.0 * f(x - d) + 8.0 * f(x + d) - f(x + 2.0 * d)) / (12.0 * d)
}

/// Source `∂_t u* − div((ε² + |∇u*|²)^{(p−2)/2} ∇u*)` evaluated with
/// fourth-order differences on a grid four times finer than `grid`, taken at
/// the coincident coarse nodes.
pub fn manufactured_problem(
    u_star: &SpaceTimeExpr,
    p: &SpaceTimeExpr,
    grid: &Grid,
    eps_reg: f64,
) -> Result<ManufacturedCase> {
    let u = u_star.bind()?;
    let pf = p.bind()?;
    let field = ExponentField::from_expr(p, grid)?;

    let scale = {
        let mut m = 1.0f64;
        for k in 0..grid.nt() {
            for j in 0..grid.ny() {
                for i in 0..grid.nx() {
                    m = m.max(u(grid.x(i), grid.y(j), grid.t(k)).abs());
                }
            }
        }
        m
    };
    for k in 0..grid.nt() {
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                if grid.is_boundary(i, j) {
                    let v = u(grid.x(i), grid.y(j), grid.t(k));
                    if v.abs() > 1e-12 * scale {
                        return Err(Error::BoundaryViolation(format!(
                            "exact solution is {v:e} at boundary node ({i}, {j}), level {k}"
                        )));
                    }
                }
            }
        }
    }

    let hf = grid.h() / REFINE;
    let dt = grid.tau() / REFINE;
    let eps2 = eps_reg * eps_reg;
    let flux = |x: f64, y: f64, t: f64| -> (f64, f64) {
        let ux = d1(|s| u(s, y, t), x, hf);
        let uy = d1(|s| u(x, s, t), y, hf);
        let w = (eps2 + ux * ux + uy * uy).powf(0.5 * (pf(x, y, t) - 2.0));
        (w * ux, w * uy)
    };

    let mut values = Vec::with_capacity(grid.nodes() * grid.nt());
    for k in 0..grid.nt() {
        let t = grid.t(k);
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let (x, y) = (grid.x(i), grid.y(j));
                if grid.is_boundary(i, j) {
                    values.push(0.0);
                    continue;
                }
                let ut = d1(|s| u(x, y, s), t, dt);
                let div = d1(|s| flux(s, y, t).0, x, hf) + d1(|s| flux(x, s, t).1, y, hf);
                let f = ut - div;
                if !f.is_finite() {
                    return Err(Error::NonFinite(format!("manufactured source at ({x}, {y}, {t})")));
                }
                values.push(f);
            }
        }
    }
    Ok(ManufacturedCase {
        u_star: u_star.clone(),
        p: field,
        f0: GridFunction::from_values(grid, grid.nt(), values, false)?,
        eps_reg,
        description: format!("u* = {}, p = {}", u_star.text(), p.text()),
    })
}

const SCAN_POINTS: usize = 100_000;
const SCAN_DECADES: f64 = 6.0;

/// Smallest `λ` on a logarithmic grid over `[10⁻⁶, 10⁶]·max|f|` with
/// `ρ(f/λ) ≤ 1`, refined by bisection inside the last scan interval.
pub fn luxemburg_scan<'a>(f: impl Into<Integrand<'a>>, exponent: &ExponentField, region: Region) -> Result<f64> {
    let pts = quadrature_points(f, exponent, region)?;
    let vmax = pts.value.iter().fold(0.0f64, |m, v| m.max(*v));
    if vmax == 0.0 {
        return Ok(0.0);
    }
    // keep (weight, ln|f|, p) for nonzero values only
    let terms: Vec<(f64, f64, f64)> = pts
        .weight
        .iter()
        .zip(&pts.value)
        .zip(&pts.exponent)
        .filter(|((_, v), _)| **v > 0.0)
        .map(|((w, v), p)| (*w, v.ln(), *p))
        .collect();
    let rho = |lambda: f64| -> f64 {
        let ll = lambda.ln();
        terms.iter().map(|(w, lv, p)| w * (p * (lv - ll)).exp()).sum()
    };

    let lo_exp = vmax.log10() - SCAN_DECADES;
    let step = 2.0 * SCAN_DECADES / (SCAN_POINTS - 1) as f64;
    let lambda_at = |m: usize| 10f64.powf(lo_exp + m as f64 * step);
    let hit = (0..SCAN_POINTS).find(|&m| rho(lambda_at(m)) <= 1.0);
    let m = match hit {
        Some(0) => {
            return Err(Error::ScanExhausted(format!(
                "norm lies below the scan range starting at {:e}",
                lambda_at(0)
            )))
        }
        Some(m) => m,
        None => {
            return Err(Error::ScanExhausted(format!(
                "no λ up to {:e} satisfies the unit-ball condition",
                lambda_at(SCAN_POINTS - 1)
            )))
        }
    };
    let (mut lo, mut hi) = (lambda_at(m - 1), lambda_at(m));
    while hi - lo > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if rho(mid) <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
