use crate::error::{Error, Result};
use crate::grid::Grid;

use super::ProblemSpec;

/// Everything one implicit step needs, sampled at its time level.
pub(crate) struct StepData {
    pub grid: Grid,
    pub eps: f64,
    pub u_prev: Vec<f64>,
    /// `f0(t_k) + φ(u_prev)` at nodes
    pub forcing: Vec<f64>,
    pub p_cell: Vec<f64>,
    /// `ε^p / p` per cell, subtracted so that a zero gradient costs nothing
    pub shift: Vec<f64>,
    /// `(a, σ at nodes)` for the implicit absorption term
    pub absorption: Option<(f64, Vec<f64>)>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Evaluation {
    pub value: f64,
    /// `Σ |term|`, used to size the rounding noise of `value`
    pub magnitude: f64,
}

impl StepData {
    pub fn new(spec: &ProblemSpec, u_prev: &[f64], level: usize, phi: Option<&dyn Fn(f64) -> f64>) -> Result<Self> {
        let g = spec.grid;
        if u_prev.len() != g.nodes() {
            return Err(Error::ShapeMismatch(format!(
                "previous state has {} values, grid has {} nodes",
                u_prev.len(),
                g.nodes()
            )));
        }
        if level == 0 || level >= g.nt() {
            return Err(Error::ShapeMismatch(format!(
                "step level {level} outside 1..{}",
                g.nt()
            )));
        }
        let f0 = spec.source.f0.level(level);
        let forcing = match phi {
            Some(phi) => f0.iter().zip(u_prev).map(|(f, u)| f + phi(*u)).collect(),
            None => f0.to_vec(),
        };
        let p_cell = spec.p.cell_level(level);
        let eps = spec.eps_reg;
        let shift = p_cell
            .iter()
            .map(|&p| if eps > 0.0 { eps.powf(p) / p } else { 0.0 })
            .collect();
        let absorption = spec
            .source
            .sigma
            .as_ref()
            .filter(|_| spec.source.a > 0.0)
            .map(|s| (spec.source.a, s.level(level).to_vec()));
        Ok(Self {
            grid: g,
            eps,
            u_prev: u_prev.to_vec(),
            forcing,
            p_cell,
            shift,
            absorption,
        })
    }

    /// Energy value and its exact gradient with respect to node values.
    /// Boundary entries of `grad` are zero.
    pub fn eval(&self, u: &[f64], grad: &mut [f64]) -> Evaluation {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let h = g.h();
        let h2 = h * h;
        let tau = g.tau();
        let eps2 = self.eps * self.eps;
        let mut value = 0.0;
        let mut magnitude = 0.0;
        grad.iter_mut().for_each(|v| *v = 0.0);

        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                let n = g.node(i, j);
                let d = u[n] - self.u_prev[n];
                let kinetic = d * d / (2.0 * tau);
                let work = -self.forcing[n] * u[n];
                let mut slope = d / tau - self.forcing[n];
                let mut absorb = 0.0;
                if let Some((a, sigma)) = &self.absorption {
                    let au = u[n].abs();
                    if au > 0.0 {
                        let pw = au.powf(sigma[n]);
                        absorb = a * pw / sigma[n];
                        slope += a * pw / u[n];
                    }
                }
                value += h2 * (kinetic + absorb + work);
                magnitude += h2 * (kinetic + absorb + work.abs());
                grad[n] = h2 * slope;
            }
        }

        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let c = g.cell(i, j);
                let n00 = g.node(i, j);
                let n10 = n00 + 1;
                let n01 = n00 + nx;
                let n11 = n01 + 1;
                let gxb = (u[n10] - u[n00]) / h;
                let gxt = (u[n11] - u[n01]) / h;
                let gyl = (u[n01] - u[n00]) / h;
                let gyr = (u[n11] - u[n10]) / h;
                let base = eps2 + 0.5 * (gxb * gxb + gxt * gxt + gyl * gyl + gyr * gyr);
                if base <= 0.0 {
                    continue;
                }
                let p = self.p_cell[c];
                let pw = base.powf(0.5 * p);
                value += h2 * (pw / p - self.shift[c]);
                magnitude += h2 * (pw / p + self.shift[c]);
                let coef = 0.5 * h * pw / base;
                grad[n10] += coef * gxb;
                grad[n00] -= coef * gxb;
                grad[n11] += coef * gxt;
                grad[n01] -= coef * gxt;
                grad[n01] += coef * gyl;
                grad[n00] -= coef * gyl;
                grad[n11] += coef * gyr;
                grad[n10] -= coef * gyr;
            }
        }

        for j in 0..ny {
            for i in 0..nx {
                if g.is_boundary(i, j) {
                    grad[g.node(i, j)] = 0.0;
                }
            }
        }
        Evaluation { value, magnitude }
    }
}
