//! Variable exponents `p(x, t)` sampled on a space-time grid, and the
//! admissibility conditions placed on them.

use crate::error::{Error, Result};
use crate::expr::SpaceTimeExpr;
use crate::grid::Grid;

/// Spatial dimension of every problem handled by this crate.
pub const N_DIM: usize = 2;

/// Lower bound `2n/(n+2)` that every admissible exponent must exceed.
pub fn admissible_floor(n_dim: usize) -> f64 {
    2.0 * n_dim as f64 / (n_dim as f64 + 2.0)
}

/// Higher-integrability margin `r* = 4p⁻ / (p⁻(n+2) + 2n)`.
pub fn r_star(p_minus: f64, n_dim: usize) -> Result<f64> {
    if n_dim < 2 {
        return Err(Error::RangeViolation(format!("n_dim must be at least 2, got {n_dim}")));
    }
    if !(p_minus > admissible_floor(n_dim)) || !p_minus.is_finite() {
        return Err(Error::RangeViolation(format!(
            "p_minus = {p_minus} must exceed 2n/(n+2) = {}",
            admissible_floor(n_dim)
        )));
    }
    let n = n_dim as f64;
    Ok(4.0 * p_minus / (p_minus * (n + 2.0) + 2.0 * n))
}

/// Conjugate exponent `q / (q − 1)`.
pub fn conjugate(q: f64) -> Result<f64> {
    if !(q > 1.0) || !q.is_finite() {
        return Err(Error::RangeViolation(format!("conjugate needs q > 1, got {q}")));
    }
    Ok(conj(q))
}

#[inline]
pub(crate) fn conj(q: f64) -> f64 {
    q / (q - 1.0)
}

/// Node samples of an exponent at every time level, with the sampled range
/// and discrete Lipschitz bounds.
#[derive(Clone, Debug)]
pub struct ExponentField {
    grid: Grid,
    samples: Vec<f64>,
    p_minus: f64,
    p_plus: f64,
    lip_grad: f64,
    lip_time: f64,
}

impl ExponentField {
    /// Evaluates `expr` at every node and time level.
    pub fn from_expr(expr: &SpaceTimeExpr, grid: &Grid) -> Result<Self> {
        let f = expr.bind()?;
        Self::from_fn(grid, f)
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64, f64) -> f64) -> Result<Self> {
        let mut samples = Vec::with_capacity(grid.nodes() * grid.nt());
        for k in 0..grid.nt() {
            let t = grid.t(k);
            for j in 0..grid.ny() {
                for i in 0..grid.nx() {
                    samples.push(f(grid.x(i), grid.y(j), t));
                }
            }
        }
        Self::from_samples(grid, samples)
    }

    pub fn constant(grid: &Grid, value: f64) -> Result<Self> {
        Self::from_samples(grid, vec![value; grid.nodes() * grid.nt()])
    }

    pub fn from_samples(grid: &Grid, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.nodes() * grid.nt() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} exponent samples, got {}",
                grid.nodes() * grid.nt(),
                samples.len()
            )));
        }
        if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::RangeViolation(format!("non-finite exponent sample {bad}")));
        }
        let p_minus = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let p_plus = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let floor = admissible_floor(N_DIM);
        if !(p_minus > floor) {
            return Err(Error::RangeViolation(format!(
                "exponent violates the admissible range p_minus > 2n/(n+2) = {floor}: sampled p_minus = {p_minus}"
            )));
        }
        let (lip_grad, lip_time) = lipschitz_bounds(grid, &samples);
        Ok(Self {
            grid: *grid,
            samples,
            p_minus,
            p_plus,
            lip_grad,
            lip_time,
        })
    }

    /// Applies `f` pointwise and revalidates.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_samples(&self.grid, self.samples.iter().map(|&p| f(p)).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
    pub fn p_minus(&self) -> f64 {
        self.p_minus
    }
    pub fn p_plus(&self) -> f64 {
        self.p_plus
    }
    /// Largest discrete `|∇p|` over all levels.
    pub fn lip_grad(&self) -> f64 {
        self.lip_grad
    }
    /// Largest discrete `|p_t|`.
    pub fn lip_time(&self) -> f64 {
        self.lip_time
    }
    /// `L = sup|∇p| + sup|p_t|`.
    pub fn lipschitz(&self) -> f64 {
        self.lip_grad + self.lip_time
    }
    pub fn n_dim(&self) -> usize {
        N_DIM
    }

    /// Node samples of one time level.
    pub fn level(&self, k: usize) -> &[f64] {
        let n = self.grid.nodes();
        &self.samples[k * n..(k + 1) * n]
    }

    #[inline]
    pub fn at(&self, k: usize, i: usize, j: usize) -> f64 {
        self.samples[k * self.grid.nodes() + self.grid.node(i, j)]
    }

    /// Bilinear interpolation to cell centres for one level.
    pub fn cell_level(&self, k: usize) -> Vec<f64> {
        let g = &self.grid;
        let p = self.level(k);
        let mut out = Vec::with_capacity(g.cells());
        for j in 0..g.ny() - 1 {
            for i in 0..g.nx() - 1 {
                out.push(
                    0.25 * (p[g.node(i, j)]
                        + p[g.node(i + 1, j)]
                        + p[g.node(i, j + 1)]
                        + p[g.node(i + 1, j + 1)]),
                );
            }
        }
        out
    }

    /// `r*` of this field's lower bound.
    pub fn r_star(&self) -> f64 {
        r_star(self.p_minus, N_DIM).expect("validated on construction")
    }
}

fn lipschitz_bounds(grid: &Grid, samples: &[f64]) -> (f64, f64) {
    let n = grid.nodes();
    let h = grid.h();
    let mut lip_grad = 0.0f64;
    for k in 0..grid.nt() {
        let p = &samples[k * n..(k + 1) * n];
        for j in 0..grid.ny() - 1 {
            for i in 0..grid.nx() - 1 {
                let c = p[grid.node(i, j)];
                let gx = (p[grid.node(i + 1, j)] - c) / h;
                let gy = (p[grid.node(i, j + 1)] - c) / h;
                lip_grad = lip_grad.max(gx.hypot(gy));
            }
        }
    }
    let mut lip_time = 0.0f64;
    for k in 0..grid.nt() - 1 {
        for m in 0..n {
            let d = (samples[(k + 1) * n + m] - samples[k * n + m]).abs() / grid.tau();
            lip_time = lip_time.max(d);
        }
    }
    (lip_grad, lip_time)
}

/// Sampled log-modulus diagnostic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogModulus {
    /// `max ω(d)·ln(1/d)` over dyadic pair distances `d = h·2^m < 1`.
    pub value: f64,
    /// Always true on a grid; kept so reports carry an explicit verdict.
    pub finite: bool,
}

/// Evaluates `ω(d)·ln(1/d)` for axis-aligned node pairs at distances
/// `h, 2h, 4h, …` (below 1) over every time level.
pub fn check_log_modulus(field: &ExponentField) -> LogModulus {
    let g = field.grid();
    let mut value = 0.0f64;
    let mut step = 1usize;
    loop {
        let d = step as f64 * g.h();
        if d >= 1.0 || (step >= g.nx() && step >= g.ny()) {
            break;
        }
        let mut omega = 0.0f64;
        for k in 0..g.nt() {
            for j in 0..g.ny() {
                for i in 0..g.nx() {
                    let c = field.at(k, i, j);
                    if i + step < g.nx() {
                        omega = omega.max((field.at(k, i + step, j) - c).abs());
                    }
                    if j + step < g.ny() {
                        omega = omega.max((field.at(k, i, j + step) - c).abs());
                    }
                }
            }
        }
        value = value.max(omega * (1.0 / d).ln());
        step *= 2;
    }
    LogModulus {
        value,
        finite: value.is_finite(),
    }
}

/// Outcome of the two-sided proximity test between a strong-solution
/// exponent `p` and a weak-solution exponent `q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProximityReport {
    pub proximity_lambda: f64,
    pub r_star: f64,
    /// `min [(q − p) + (q − 1)(r* − λ)] ≥ 0`
    pub lower_ok: bool,
    /// `max (q − p) ≤ r* − λ`
    pub upper_ok: bool,
    /// Smallest slack over both inequalities; negative when violated.
    pub worst_margin: f64,
}

impl ProximityReport {
    pub fn ok(&self) -> bool {
        self.lower_ok && self.upper_ok
    }
}

/// Midpoint of `(0, r*)` for the strong exponent `p`.
pub fn default_proximity_lambda(p: &ExponentField) -> f64 {
    0.5 * p.r_star()
}

/// Checks `−(q − 1)(r* − λ) ≤ q − p ≤ r* − λ` at every sample, with `r*`
/// taken from `p`.
pub fn check_proximity(p: &ExponentField, q: &ExponentField, proximity_lambda: f64) -> Result<ProximityReport> {
    p.grid().check_same(q.grid())?;
    let r = p.r_star();
    if !(proximity_lambda > 0.0 && proximity_lambda < r) {
        return Err(Error::RangeViolation(format!(
            "proximity lambda {proximity_lambda} outside (0, r*) = (0, {r})"
        )));
    }
    let gap = r - proximity_lambda;
    let mut lower = f64::INFINITY;
    let mut upper = f64::INFINITY;
    for (&pv, &qv) in p.samples().iter().zip(q.samples()) {
        let diff = qv - pv;
        lower = lower.min(diff + (qv - 1.0) * gap);
        upper = upper.min(gap - diff);
    }
    Ok(ProximityReport {
        proximity_lambda,
        r_star: r,
        lower_ok: lower >= 0.0,
        upper_ok: upper >= 0.0,
        worst_margin: lower.min(upper),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::unit_square(n, 3, 1.0).unwrap()
    }

    #[test]
    fn constant_field() {
        let e = SpaceTimeExpr::parse("2.0").unwrap();
        let f = ExponentField::from_expr(&e, &grid(9)).unwrap();
        assert!(f.samples().iter().all(|&p| p == 2.0));
        assert_eq!((f.p_minus(), f.p_plus()), (2.0, 2.0));
        assert_eq!((f.lip_grad(), f.lip_time()), (0.0, 0.0));
    }

    #[test]
    fn linear_field_has_exact_slope() {
        let e = SpaceTimeExpr::parse("2 + 0.5*x").unwrap();
        let f = ExponentField::from_expr(&e, &grid(17)).unwrap();
        assert_eq!(f.p_minus(), 2.0);
        assert!((f.p_plus() - 2.5).abs() < 1e-15);
        assert!((f.lip_grad() - 0.5).abs() < 1e-12);
        assert_eq!(f.lip_time(), 0.0);
    }

    #[test]
    fn time_slope_is_measured() {
        let f = ExponentField::from_fn(&grid(5), |_, _, t| 2.0 + 0.25 * t).unwrap();
        assert!((f.lip_time() - 0.25).abs() < 1e-12);
        assert!((f.lipschitz() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn lip_grad_matches_dense_sampling() {
        let rule = |x: f64, y: f64, _t: f64| 2.0 + 0.3 * (PI * x).sin() * (PI * y).sin();
        let coarse = ExponentField::from_fn(&grid(33), rule).unwrap();
        // oracle: difference quotients of the expression sampled ten times finer
        let n = 321;
        let hd = 1.0 / (n - 1) as f64;
        let mut dense = 0.0f64;
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let (x, y) = (i as f64 * hd, j as f64 * hd);
                let c = rule(x, y, 0.0);
                let gx = (rule(x + hd, y, 0.0) - c) / hd;
                let gy = (rule(x, y + hd, 0.0) - c) / hd;
                dense = dense.max(gx.hypot(gy));
            }
        }
        let rel = (coarse.lip_grad() - dense).abs() / dense;
        assert!(rel < 0.05, "coarse {} dense {}", coarse.lip_grad(), dense);
        assert!((dense - 0.3 * PI).abs() / (0.3 * PI) < 0.01);
        assert!(coarse.p_minus() >= 2.0 && coarse.p_plus() <= 2.3 + 1e-12);
    }

    #[test]
    fn inadmissible_range_is_rejected() {
        let g = grid(5);
        assert!(matches!(ExponentField::constant(&g, 1.0), Err(Error::RangeViolation(_))));
        assert!(matches!(ExponentField::constant(&g, 0.9), Err(Error::RangeViolation(_))));
        assert!(ExponentField::constant(&g, f64::NAN).is_err());
        assert!(ExponentField::constant(&g, f64::INFINITY).is_err());
        assert!(ExponentField::constant(&g, 1.0001).is_ok());
    }

    #[test]
    fn r_star_values() {
        assert!((r_star(2.0, 2).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((r_star(3.0, 3).unwrap() - 4.0 / 7.0).abs() < 1e-15);
        assert!((r_star(1.5, 2).unwrap() - 0.6).abs() < 1e-15);
        assert!(r_star(1.0, 2).is_err());
        assert!(r_star(2.0, 1).is_err());
        // 2n/(n+2) = 1.2 at n = 3
        assert!(r_star(1.2, 3).is_err());
    }

    #[test]
    fn r_star_monotonicity() {
        for pi in 0..40 {
            let p = 1.3 + 0.1 * pi as f64;
            for n in 2..8 {
                if p <= admissible_floor(n + 1) {
                    continue;
                }
                assert!(r_star(p, n + 1).unwrap() < r_star(p, n).unwrap());
                assert!(r_star(p + 0.05, n).unwrap() > r_star(p, n).unwrap());
            }
        }
    }

    #[test]
    fn conjugate_values() {
        assert_eq!(conjugate(2.0).unwrap(), 2.0);
        assert!((conjugate(4.0).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!((conjugate(1.5).unwrap() - 3.0).abs() < 1e-15);
        assert!(conjugate(1.0).is_err());
        assert!(conjugate(0.5).is_err());
    }

    #[test]
    fn log_modulus_values() {
        let c = ExponentField::constant(&grid(17), 2.5).unwrap();
        assert_eq!(check_log_modulus(&c), LogModulus { value: 0.0, finite: true });

        let e = SpaceTimeExpr::parse("2 + 0.5*x").unwrap();
        let lin = ExponentField::from_expr(&e, &Grid::unit_square(65, 2, 1.0).unwrap()).unwrap();
        let m = check_log_modulus(&lin);
        // oracle: direct evaluation of 0.5·d·ln(1/d) over d = 2^m/64 < 1
        let mut expected = 0.0f64;
        let mut d: f64 = 1.0 / 64.0;
        while d < 1.0 {
            expected = expected.max(0.5 * d * (1.0 / d).ln());
            d *= 2.0;
        }
        assert!((m.value - expected).abs() < 1e-12);
        assert!(m.value <= 0.5 / std::f64::consts::E);
        assert!(m.finite);
    }

    #[test]
    fn proximity_examples() {
        let g = grid(9);
        let p = ExponentField::from_fn(&g, |x, y, _| 2.2 + 0.3 * x * y).unwrap();
        let rep = check_proximity(&p, &p, default_proximity_lambda(&p)).unwrap();
        assert!(rep.ok() && rep.worst_margin > 0.0);

        let two = ExponentField::constant(&g, 2.0).unwrap();
        let eight_thirds = ExponentField::constant(&g, 2.0 + 2.0 / 3.0).unwrap();
        let rep = check_proximity(&two, &eight_thirds, 0.1).unwrap();
        assert!(!rep.upper_ok);
        assert!(rep.lower_ok);

        let q = ExponentField::constant(&g, 2.2).unwrap();
        let rep = check_proximity(&two, &q, 0.2).unwrap();
        assert!(rep.ok());
        let upper: f64 = 2.0 / 3.0 - 0.2 - 0.2;
        let lower = 0.2 + 1.2 * (2.0 / 3.0 - 0.2);
        assert!((rep.worst_margin - upper.min(lower)).abs() < 1e-12);

        assert!(check_proximity(&two, &q, 0.0).is_err());
        assert!(check_proximity(&two, &q, 2.0 / 3.0).is_err());
    }

    #[test]
    fn swapping_moves_the_binding_inequality() {
        let g = grid(5);
        let low = ExponentField::constant(&g, 2.0).unwrap();
        let high = ExponentField::constant(&g, 2.0 + 2.0 / 3.0).unwrap();
        let forward = check_proximity(&low, &high, 0.1).unwrap();
        assert!(!forward.upper_ok && forward.lower_ok);
        let backward = check_proximity(&high, &low, 0.1).unwrap();
        assert!(backward.upper_ok && !backward.lower_ok);
    }

    #[test]
    fn cell_interpolation_is_bilinear_average() {
        let f = ExponentField::from_fn(&grid(5), |x, y, _| 2.0 + x + 2.0 * y).unwrap();
        let cells = f.cell_level(0);
        let g = f.grid();
        let c = cells[g.cell(1, 2)];
        assert!((c - (2.0 + 1.5 * 0.25 + 2.0 * 2.5 * 0.25)).abs() < 1e-14);
    }
}
