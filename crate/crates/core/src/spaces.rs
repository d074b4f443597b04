//! Discrete variable-exponent Lebesgue and Sobolev machinery.
//!
//! Node functions are integrated with node-centred dual cells (weight `h²`
//! inside, halved on the boundary); gradient magnitudes live at cell centres
//! where the exponent is the bilinear average of the four corner samples.
//! Space-time integrals sum levels `1..nt` with weight `tau`, matching the
//! implicit time discretization.

use crate::error::{Error, Result};
use crate::exponent::{conj, ExponentField};
use crate::expr::SpaceTimeExpr;
use crate::grid::Grid;

/// Scalar node values on one or more time levels.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    levels: usize,
    values: Vec<f64>,
    dirichlet_zero: bool,
}

impl GridFunction {
    pub fn zeros(grid: &Grid, levels: usize, dirichlet_zero: bool) -> Self {
        Self {
            grid: *grid,
            levels,
            values: vec![0.0; grid.nodes() * levels],
            dirichlet_zero,
        }
    }

    /// Single-level function sampled from `f(x, y)`.
    pub fn spatial_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.nodes());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                values.push(f(grid.x(i), grid.y(j)));
            }
        }
        Self::from_values(grid, 1, values, false)
    }

    /// Function on every time level sampled from `f(x, y, t)`.
    pub fn space_time_fn(grid: &Grid, f: impl Fn(f64, f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.nodes() * grid.nt());
        for k in 0..grid.nt() {
            for j in 0..grid.ny() {
                for i in 0..grid.nx() {
                    values.push(f(grid.x(i), grid.y(j), grid.t(k)));
                }
            }
        }
        Self::from_values(grid, grid.nt(), values, false)
    }

    /// Single level, evaluated at `t = 0`.
    pub fn spatial_expr(grid: &Grid, expr: &SpaceTimeExpr) -> Result<Self> {
        let f = expr.bind()?;
        Self::spatial_fn(grid, |x, y| f(x, y, 0.0))
    }

    pub fn space_time_expr(grid: &Grid, expr: &SpaceTimeExpr) -> Result<Self> {
        let f = expr.bind()?;
        Self::space_time_fn(grid, f)
    }

    pub fn from_values(grid: &Grid, levels: usize, values: Vec<f64>, dirichlet_zero: bool) -> Result<Self> {
        if levels == 0 || values.len() != grid.nodes() * levels {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values for {levels} levels, got {}",
                grid.nodes() * levels,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid function value {v}")));
        }
        let f = Self {
            grid: *grid,
            levels,
            values,
            dirichlet_zero: false,
        };
        if dirichlet_zero {
            f.with_dirichlet()
        } else {
            Ok(f)
        }
    }

    /// Marks the function as vanishing on the boundary. Boundary values at
    /// rounding level are set to exactly zero; anything larger is an error.
    pub fn with_dirichlet(mut self) -> Result<Self> {
        let scale = self.max_abs().max(1.0);
        let g = self.grid;
        for k in 0..self.levels {
            for j in 0..g.ny() {
                for i in 0..g.nx() {
                    if !g.is_boundary(i, j) {
                        continue;
                    }
                    let idx = k * g.nodes() + g.node(i, j);
                    let v = self.values[idx];
                    if v.abs() > 1e-12 * scale {
                        return Err(Error::BoundaryViolation(format!(
                            "value {v:e} at boundary node ({i}, {j}), level {k}"
                        )));
                    }
                    self.values[idx] = 0.0;
                }
            }
        }
        self.dirichlet_zero = true;
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn levels(&self) -> usize {
        self.levels
    }
    pub fn dirichlet_zero(&self) -> bool {
        self.dirichlet_zero
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn level(&self, k: usize) -> &[f64] {
        let n = self.grid.nodes();
        &self.values[k * n..(k + 1) * n]
    }

    pub(crate) fn level_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.grid.nodes();
        &mut self.values[k * n..(k + 1) * n]
    }

    /// Copy of one level as a single-level function.
    pub fn slice(&self, k: usize) -> GridFunction {
        Self {
            grid: self.grid,
            levels: 1,
            values: self.level(k).to_vec(),
            dirichlet_zero: self.dirichlet_zero,
        }
    }

    #[inline]
    pub fn at(&self, k: usize, i: usize, j: usize) -> f64 {
        self.values[k * self.grid.nodes() + self.grid.node(i, j)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Pointwise difference `self − other`.
    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_compatible(other)?;
        Ok(Self {
            grid: self.grid,
            levels: self.levels,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            dirichlet_zero: self.dirichlet_zero && other.dirichlet_zero,
        })
    }

    pub fn scaled(&self, factor: f64) -> GridFunction {
        Self {
            grid: self.grid,
            levels: self.levels,
            values: self.values.iter().map(|v| v * factor).collect(),
            dirichlet_zero: self.dirichlet_zero,
        }
    }

    pub(crate) fn check_compatible(&self, other: &GridFunction) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        if self.levels != other.levels {
            return Err(Error::ShapeMismatch(format!(
                "level counts differ: {} vs {}",
                self.levels, other.levels
            )));
        }
        Ok(())
    }
}

/// Forward differences on cell edges: `gx` at `(i+½, j)`, `gy` at `(i, j+½)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    levels: usize,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl VectorField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn levels(&self) -> usize {
        self.levels
    }

    fn x_edges(g: &Grid) -> usize {
        (g.nx() - 1) * g.ny()
    }
    fn y_edges(g: &Grid) -> usize {
        g.nx() * (g.ny() - 1)
    }

    /// `gx` at edge `(i+½, j)` of level `k`.
    #[inline]
    pub fn gx(&self, k: usize, i: usize, j: usize) -> f64 {
        self.gx[k * Self::x_edges(&self.grid) + j * (self.grid.nx() - 1) + i]
    }

    /// `gy` at edge `(i, j+½)` of level `k`.
    #[inline]
    pub fn gy(&self, k: usize, i: usize, j: usize) -> f64 {
        self.gy[k * Self::y_edges(&self.grid) + j * self.grid.nx() + i]
    }

    /// Cell-centre magnitudes `sqrt(½ Σ g_e²)` over the four edges of each cell.
    pub fn cell_magnitudes(&self, k: usize) -> Vec<f64> {
        let g = &self.grid;
        let mut out = Vec::with_capacity(g.cells());
        for j in 0..g.ny() - 1 {
            for i in 0..g.nx() - 1 {
                let (b, t) = (self.gx(k, i, j), self.gx(k, i, j + 1));
                let (l, r) = (self.gy(k, i, j), self.gy(k, i + 1, j));
                out.push((0.5 * (b * b + t * t + l * l + r * r)).sqrt());
            }
        }
        out
    }
}

fn push_gradient(u: &[f64], g: &Grid, gx: &mut Vec<f64>, gy: &mut Vec<f64>) {
    let h = g.h();
    for j in 0..g.ny() {
        for i in 0..g.nx() - 1 {
            gx.push((u[g.node(i + 1, j)] - u[g.node(i, j)]) / h);
        }
    }
    for j in 0..g.ny() - 1 {
        for i in 0..g.nx() {
            gy.push((u[g.node(i, j + 1)] - u[g.node(i, j)]) / h);
        }
    }
}

/// Staggered forward-difference gradient of one level of `u`.
pub fn discrete_gradient(u: &GridFunction, level: usize) -> Result<VectorField> {
    if level >= u.levels() {
        return Err(Error::ShapeMismatch(format!(
            "level {level} out of range for a function with {} levels",
            u.levels()
        )));
    }
    let g = *u.grid();
    let mut gx = Vec::with_capacity(VectorField::x_edges(&g));
    let mut gy = Vec::with_capacity(VectorField::y_edges(&g));
    push_gradient(u.level(level), &g, &mut gx, &mut gy);
    Ok(VectorField { grid: g, levels: 1, gx, gy })
}

/// Gradient of every level of `u`.
pub fn gradient_all(u: &GridFunction) -> VectorField {
    let g = *u.grid();
    let mut gx = Vec::with_capacity(VectorField::x_edges(&g) * u.levels());
    let mut gy = Vec::with_capacity(VectorField::y_edges(&g) * u.levels());
    for k in 0..u.levels() {
        push_gradient(u.level(k), &g, &mut gx, &mut gy);
    }
    VectorField {
        grid: g,
        levels: u.levels(),
        gx,
        gy,
    }
}

/// Integration region.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    /// `Ω` at time level `k`: a single-level integrand is used as is, a
    /// multi-level one contributes its level `k`; the exponent is read at `k`.
    Slice(usize),
    /// `Q = Ω × (0, T)`: levels `1..nt`, each weighted by `tau`.
    Cylinder,
}

/// Something that can be integrated: node values or gradient magnitudes.
#[derive(Clone, Copy, Debug)]
pub enum Integrand<'a> {
    Nodes(&'a GridFunction),
    Gradient(&'a VectorField),
}

impl<'a> From<&'a GridFunction> for Integrand<'a> {
    fn from(f: &'a GridFunction) -> Self {
        Integrand::Nodes(f)
    }
}

impl<'a> From<&'a VectorField> for Integrand<'a> {
    fn from(f: &'a VectorField) -> Self {
        Integrand::Gradient(f)
    }
}

impl Integrand<'_> {
    fn grid(&self) -> &Grid {
        match self {
            Integrand::Nodes(f) => f.grid(),
            Integrand::Gradient(v) => v.grid(),
        }
    }

    fn levels(&self) -> usize {
        match self {
            Integrand::Nodes(f) => f.levels(),
            Integrand::Gradient(v) => v.levels(),
        }
    }
}

/// Weighted quadrature points: `Σ weight·F(|value|, exponent)`.
#[derive(Clone, Debug, Default)]
pub struct QuadraturePoints {
    pub weight: Vec<f64>,
    pub value: Vec<f64>,
    pub exponent: Vec<f64>,
}

impl QuadraturePoints {
    pub fn len(&self) -> usize {
        self.weight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weight.is_empty()
    }

    pub fn modular(&self) -> f64 {
        self.modular_scaled(1.0)
    }

    /// `ρ(f / lambda)`.
    pub fn modular_scaled(&self, lambda: f64) -> f64 {
        let mut sum = 0.0;
        for ((w, v), p) in self.weight.iter().zip(&self.value).zip(&self.exponent) {
            if *v != 0.0 {
                sum += w * (v / lambda).powf(*p);
            }
        }
        sum
    }

    pub fn volume(&self) -> f64 {
        self.weight.iter().sum()
    }

    pub fn max_value(&self) -> f64 {
        self.value.iter().fold(0.0f64, |m, v| m.max(*v))
    }

    pub fn exponent_range(&self) -> (f64, f64) {
        self.exponent
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(*p), hi.max(*p)))
    }

    /// Same points with every exponent replaced by `f(exponent)`.
    pub fn map_exponent(&self, f: impl Fn(f64) -> f64) -> QuadraturePoints {
        QuadraturePoints {
            weight: self.weight.clone(),
            value: self.value.clone(),
            exponent: self.exponent.iter().map(|&p| f(p)).collect(),
        }
    }
}

/// `(integrand level, exponent level, weight scale)` for each slab.
fn slabs(levels: usize, grid: &Grid, region: Region) -> Result<Vec<(usize, usize, f64)>> {
    match region {
        Region::Slice(k) => {
            if k >= grid.nt() {
                return Err(Error::ShapeMismatch(format!(
                    "level {k} out of range for {} time levels",
                    grid.nt()
                )));
            }
            let kf = if levels == 1 {
                0
            } else if k < levels {
                k
            } else {
                return Err(Error::ShapeMismatch(format!(
                    "level {k} out of range for an integrand with {levels} levels"
                )));
            };
            Ok(vec![(kf, k, 1.0)])
        }
        Region::Cylinder => {
            if levels != grid.nt() {
                return Err(Error::ShapeMismatch(format!(
                    "space-time integral needs {} levels, integrand has {levels}",
                    grid.nt()
                )));
            }
            Ok((1..grid.nt()).map(|k| (k, k, grid.tau())).collect())
        }
    }
}

/// Collects the quadrature points of `f` with exponents from `exponent`.
pub fn quadrature_points<'a>(
    f: impl Into<Integrand<'a>>,
    exponent: &ExponentField,
    region: Region,
) -> Result<QuadraturePoints> {
    let f = f.into();
    f.grid().check_same(exponent.grid())?;
    let g = *f.grid();
    let mut pts = QuadraturePoints::default();
    for (kf, ke, scale) in slabs(f.levels(), &g, region)? {
        match f {
            Integrand::Nodes(u) => {
                let vals = u.level(kf);
                let p = exponent.level(ke);
                for j in 0..g.ny() {
                    for i in 0..g.nx() {
                        let n = g.node(i, j);
                        pts.weight.push(g.node_weight(i, j) * scale);
                        pts.value.push(vals[n].abs());
                        pts.exponent.push(p[n]);
                    }
                }
            }
            Integrand::Gradient(v) => {
                let w = g.h() * g.h() * scale;
                pts.value.extend(v.cell_magnitudes(kf));
                pts.exponent.extend(exponent.cell_level(ke));
                pts.weight.resize(pts.value.len(), w);
            }
        }
    }
    Ok(pts)
}

/// `Σ weight·|f|²` over the region, without any exponent.
pub fn l2_norm_sq<'a>(f: impl Into<Integrand<'a>>, region: Region) -> Result<f64> {
    let f = f.into();
    let g = *f.grid();
    let mut sum = 0.0;
    for (kf, _, scale) in slabs(f.levels(), &g, region)? {
        match f {
            Integrand::Nodes(u) => {
                let vals = u.level(kf);
                for j in 0..g.ny() {
                    for i in 0..g.nx() {
                        let v = vals[g.node(i, j)];
                        sum += g.node_weight(i, j) * scale * v * v;
                    }
                }
            }
            Integrand::Gradient(v) => {
                let w = g.h() * g.h() * scale;
                sum += v.cell_magnitudes(kf).iter().map(|m| w * m * m).sum::<f64>();
            }
        }
    }
    Ok(sum)
}

/// `ρ_{p(·)}(f) = Σ |f|^p · volume` over the region.
pub fn modular<'a>(f: impl Into<Integrand<'a>>, exponent: &ExponentField, region: Region) -> Result<f64> {
    Ok(quadrature_points(f, exponent, region)?.modular())
}

const LUX_REL_TOL: f64 = 1e-12;
const LUX_MAX_ITERS: usize = 400;

/// Luxemburg norm of a point set: the `λ` with `ρ(f/λ) = 1`, or 0 for `f ≡ 0`.
pub fn luxemburg_points(pts: &QuadraturePoints) -> Result<f64> {
    let vmax = pts.max_value();
    if vmax == 0.0 {
        return Ok(0.0);
    }
    let (p_minus, _) = pts.exponent_range();
    let vol = pts.volume();
    let mut hi = vmax * vol.max(1.0).powf(1.0 / p_minus);
    let mut guard = 0;
    while pts.modular_scaled(hi) > 1.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 || !hi.is_finite() {
            return Err(Error::BisectionFailed("cannot bracket the norm from above".into()));
        }
    }
    let mut lo = hi;
    loop {
        lo *= 0.5;
        if lo <= f64::EPSILON * vmax {
            lo = f64::EPSILON * vmax;
            break;
        }
        if pts.modular_scaled(lo) > 1.0 {
            break;
        }
    }
    for _ in 0..LUX_MAX_ITERS {
        if hi - lo <= LUX_REL_TOL * hi {
            return Ok(hi);
        }
        let mid = 0.5 * (lo + hi);
        if pts.modular_scaled(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::BisectionFailed(format!(
        "bracket [{lo:e}, {hi:e}] after {LUX_MAX_ITERS} halvings"
    )))
}

/// `inf{λ > 0 : ρ(f/λ) ≤ 1}` by bracketing and bisection.
pub fn luxemburg_norm<'a>(f: impl Into<Integrand<'a>>, exponent: &ExponentField, region: Region) -> Result<f64> {
    luxemburg_points(&quadrature_points(f, exponent, region)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormModularBounds {
    pub norm: f64,
    pub modular: f64,
    /// `min(‖f‖^{p⁻}, ‖f‖^{p⁺})`
    pub lower: f64,
    /// `max(‖f‖^{p⁻}, ‖f‖^{p⁺})`
    pub upper: f64,
    pub ok: bool,
}

const BOUND_SLACK: f64 = 1e-9;

/// Checks that the modular sits between the two powers of the norm.
pub fn check_norm_modular_bounds<'a>(
    f: impl Into<Integrand<'a>>,
    exponent: &ExponentField,
    region: Region,
) -> Result<NormModularBounds> {
    let pts = quadrature_points(f, exponent, region)?;
    let norm = luxemburg_points(&pts)?;
    let modular = pts.modular();
    let (p_minus, p_plus) = pts.exponent_range();
    let (a, b) = (norm.powf(p_minus), norm.powf(p_plus));
    let (lower, upper) = (a.min(b), a.max(b));
    let ok = lower <= modular * (1.0 + BOUND_SLACK) && modular <= upper * (1.0 + BOUND_SLACK);
    Ok(NormModularBounds {
        norm,
        modular,
        lower,
        upper,
        ok,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HolderReport {
    /// `Σ |f g| · volume`
    pub lhs: f64,
    /// `2 ‖f‖_{p(·)} ‖g‖_{p'(·)}`
    pub rhs: f64,
    /// `(1/p⁻ + 1/(p')⁻) ‖f‖_{p(·)} ‖g‖_{p'(·)}`
    pub sharp_rhs: f64,
    pub ok: bool,
}

/// Generalized Hölder inequality with the pointwise conjugate exponent.
pub fn holder_pairing<'a>(
    f: impl Into<Integrand<'a>>,
    g: impl Into<Integrand<'a>>,
    exponent: &ExponentField,
    region: Region,
) -> Result<HolderReport> {
    let fp = quadrature_points(f, exponent, region)?;
    let gp = quadrature_points(g, exponent, region)?;
    if fp.len() != gp.len() || fp.weight != gp.weight {
        return Err(Error::ShapeMismatch("Hölder pairing needs integrands on the same points".into()));
    }
    let lhs: f64 = fp
        .weight
        .iter()
        .zip(fp.value.iter().zip(&gp.value))
        .map(|(w, (a, b))| w * a * b)
        .sum();
    let g_conj = gp.map_exponent(conj);
    let nf = luxemburg_points(&fp)?;
    let ng = luxemburg_points(&g_conj)?;
    let (p_minus, p_plus) = fp.exponent_range();
    let sharp = 1.0 / p_minus + 1.0 / conj(p_plus);
    let rhs = 2.0 * nf * ng;
    Ok(HolderReport {
        lhs,
        rhs,
        sharp_rhs: sharp * nf * ng,
        ok: lhs <= rhs + BOUND_SLACK * rhs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonotonicityGap {
    /// `(|ξ|^{q−2}ξ − |ζ|^{q−2}ζ)·(ξ − ζ)`
    pub lhs: f64,
    /// `|ξ−ζ|^q` for `q ≥ 2`, `(1+|ξ|²+|ζ|²)^{(q−2)/2}|ξ−ζ|²` for `q < 2`.
    pub lower_form: f64,
}

/// `|v|^{q−2} v`, continued by zero at the origin.
#[inline]
pub fn flux(v: [f64; 2], q: f64) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    if n == 0.0 {
        return [0.0, 0.0];
    }
    let s = n.powf(q - 2.0);
    [s * v[0], s * v[1]]
}

pub fn monotonicity_gap(xi: [f64; 2], zeta: [f64; 2], q: f64) -> Result<MonotonicityGap> {
    if !(q > 1.0) || !q.is_finite() {
        return Err(Error::RangeViolation(format!("monotonicity gap needs q > 1, got {q}")));
    }
    let (a, b) = (flux(xi, q), flux(zeta, q));
    let d = [xi[0] - zeta[0], xi[1] - zeta[1]];
    let lhs = (a[0] - b[0]) * d[0] + (a[1] - b[1]) * d[1];
    let dn2 = d[0] * d[0] + d[1] * d[1];
    let lower_form = if q >= 2.0 {
        dn2.sqrt().powf(q)
    } else {
        let s = 1.0 + xi[0] * xi[0] + xi[1] * xi[1] + zeta[0] * zeta[0] + zeta[1] * zeta[1];
        s.powf(0.5 * (q - 2.0)) * dn2
    };
    Ok(MonotonicityGap { lhs, lower_form })
}

/// `‖u‖_{2,Q} + ‖∇u‖_{p(·),Q}`.
pub fn w_norm(u: &GridFunction, exponent: &ExponentField) -> Result<f64> {
    let l2 = l2_norm_sq(u, Region::Cylinder)?.sqrt();
    let grad = gradient_all(u);
    Ok(l2 + luxemburg_norm(&grad, exponent, Region::Cylinder)?)
}
