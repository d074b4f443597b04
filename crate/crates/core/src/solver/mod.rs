//! Implicit Euler for the evolution `p(x,t)`-Laplacian, one convex
//! minimization per time level.
//!
//! Step `k` minimizes
//!
//! ```text
//! E(u) = h² Σ_nodes [ (u − u_prev)²/(2τ) + a|u|^σ/σ − F·u ]
//!      + h² Σ_cells [ (ε² + |∇u|²)^{p/2} − ε^p ] / p
//! ```
//!
//! with `F = f0(t_k) + φ(u_prev)`, and `p`, `σ`, `f0` sampled at `t_k`.
//! The stationarity condition is the discrete weak form tested against
//! nodal hat functions.

mod descent;
mod diagnostics;
mod energy;

pub use diagnostics::{energy_diagnostics, integration_by_parts_gap, weak_residual, EnergyReport};

use crate::error::{Error, Result};
use crate::exponent::ExponentField;
use crate::expr::ScalarExpr;
use crate::grid::Grid;
use crate::spaces::GridFunction;

use energy::StepData;

/// Lipschitz reaction term `φ(u)` with its declared constant `D`.
#[derive(Clone, Debug)]
pub struct Reaction {
    pub phi: ScalarExpr,
    pub lipschitz: f64,
}

/// `f(z, u) = −a|u|^{σ−2}u + φ(u) + f0(z)`.
#[derive(Clone, Debug)]
pub struct SourceSpec {
    pub a: f64,
    pub sigma: Option<ExponentField>,
    /// space-time, one level per grid level
    pub f0: GridFunction,
    pub reaction: Option<Reaction>,
}

impl SourceSpec {
    /// Pure forcing `f = f0`.
    pub fn forcing(f0: GridFunction) -> Self {
        Self {
            a: 0.0,
            sigma: None,
            f0,
            reaction: None,
        }
    }

    pub fn zero(grid: &Grid) -> Self {
        Self::forcing(GridFunction::zeros(grid, grid.nt(), false))
    }

    pub fn with_absorption(mut self, a: f64, sigma: ExponentField) -> Self {
        self.a = a;
        self.sigma = Some(sigma);
        self
    }

    pub fn with_reaction(mut self, phi: ScalarExpr, lipschitz: f64) -> Self {
        self.reaction = Some(Reaction { phi, lipschitz });
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerOptions {
    /// Euclidean norm of the step gradient at which a level is accepted;
    /// `None` means `1e−9 · h² · n_interior`.
    pub grad_tol: Option<f64>,
    pub max_iters: usize,
    pub armijo_c1: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            grad_tol: None,
            max_iters: 50_000,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
        }
    }
}

pub const DEFAULT_EPS_REG: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub grid: Grid,
    pub p: ExponentField,
    pub source: SourceSpec,
    /// single level, zero on the boundary
    pub u0: GridFunction,
    pub eps_reg: f64,
    pub opt: OptimizerOptions,
}

const PHI_SAMPLES: usize = 2001;
const PHI_RANGE: f64 = 10.0;

impl ProblemSpec {
    /// Builds and validates a spec with default regularization and optimizer.
    pub fn new(p: ExponentField, source: SourceSpec, u0: GridFunction) -> Result<Self> {
        let spec = Self {
            grid: *p.grid(),
            p,
            source,
            u0,
            eps_reg: DEFAULT_EPS_REG,
            opt: OptimizerOptions::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_eps_reg(mut self, eps: f64) -> Result<Self> {
        self.eps_reg = eps;
        self.validate()?;
        Ok(self)
    }

    pub fn with_grad_tol(mut self, tol: f64) -> Result<Self> {
        self.opt.grad_tol = Some(tol);
        self.validate()?;
        Ok(self)
    }

    pub fn grad_tol(&self) -> f64 {
        self.opt.grad_tol.unwrap_or_else(|| {
            let h = self.grid.h();
            1e-9 * h * h * self.grid.interior_nodes() as f64
        })
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        g.check_same(self.p.grid())?;
        g.check_same(self.u0.grid())?;
        g.check_same(self.source.f0.grid())?;
        if self.u0.levels() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "initial datum must have one level, has {}",
                self.u0.levels()
            )));
        }
        if !self.u0.dirichlet_zero() {
            return Err(Error::BoundaryViolation("initial datum is not marked zero on the boundary".into()));
        }
        if self.source.f0.levels() != g.nt() {
            return Err(Error::ShapeMismatch(format!(
                "source needs {} levels, has {}",
                g.nt(),
                self.source.f0.levels()
            )));
        }
        let a = self.source.a;
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::RangeViolation(format!("absorption coefficient a ≥ 0 required, got {a}")));
        }
        if let Some(sigma) = &self.source.sigma {
            g.check_same(sigma.grid())?;
        } else if a > 0.0 {
            return Err(Error::RangeViolation("a > 0 needs a source exponent sigma".into()));
        }
        if !(self.eps_reg >= 0.0 && self.eps_reg.is_finite()) {
            return Err(Error::RangeViolation(format!("eps_reg ≥ 0 required, got {}", self.eps_reg)));
        }
        let tol = self.grad_tol();
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::RangeViolation(format!("grad_tol > 0 required, got {tol}")));
        }
        let o = &self.opt;
        if !(o.armijo_c1 > 0.0 && o.armijo_c1 < 0.5 && o.backtrack > 0.0 && o.backtrack < 1.0) {
            return Err(Error::RangeViolation(
                "line search needs 0 < c1 < 1/2 and 0 < backtrack < 1".into(),
            ));
        }
        if let Some(r) = &self.source.reaction {
            check_reaction(r)?;
        }
        Ok(())
    }

    /// Range required for strong solutions with a power source:
    /// `p ≥ 2` and `2 ≤ σ ≤ 1 + p/2` at every sample.
    pub fn check_strong_range(&self) -> Result<()> {
        if self.p.p_minus() < 2.0 {
            return Err(Error::RangeViolation(format!(
                "strong solutions need p_minus ≥ 2, got {}",
                self.p.p_minus()
            )));
        }
        if let Some(sigma) = &self.source.sigma {
            for (idx, (&s, &p)) in sigma.samples().iter().zip(self.p.samples()).enumerate() {
                if !(2.0..=1.0 + 0.5 * p).contains(&s) {
                    return Err(Error::RangeViolation(format!(
                        "sigma = {s} outside [2, 1 + p/2] = [2, {}] at sample {idx}",
                        1.0 + 0.5 * p
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_reaction(r: &Reaction) -> Result<()> {
    let d = r.lipschitz;
    if !(d >= 0.0 && d.is_finite()) {
        return Err(Error::RangeViolation(format!("Lipschitz constant D ≥ 0 required, got {d}")));
    }
    let phi = r.phi.bind()?;
    let at_zero = phi(0.0);
    if at_zero.abs() > 1e-14 {
        return Err(Error::RangeViolation(format!("phi(0) = 0 required, got {at_zero}")));
    }
    let ds = 2.0 * PHI_RANGE / (PHI_SAMPLES - 1) as f64;
    let mut prev = phi(-PHI_RANGE);
    for m in 1..PHI_SAMPLES {
        let s = -PHI_RANGE + m as f64 * ds;
        let cur = phi(s);
        if !cur.is_finite() {
            return Err(Error::NonFinite(format!("phi({s}) = {cur}")));
        }
        let slope = (cur - prev).abs() / ds;
        if slope > d * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::RangeViolation(format!(
                "phi has sampled slope {slope} > D = {d} near s = {s}"
            )));
        }
        prev = cur;
    }
    Ok(())
}

/// Per-level optimizer record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub energy: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    /// one level per time level, level 0 is `u0`
    pub trajectory: GridFunction,
    /// `steps[k − 1]` describes level `k`
    pub steps: Vec<StepStats>,
    pub diagnostics: EnergyReport,
    pub grad_tol: f64,
}

/// Output of [`implicit_step`]: the best iterate and whether it met the
/// gradient tolerance.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub u: GridFunction,
    pub energy: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

impl StepOutcome {
    /// The new state, or `NonConvergence` if the tolerance was missed.
    pub fn into_converged(self, level: usize) -> Result<GridFunction> {
        if self.converged {
            Ok(self.u)
        } else {
            Err(Error::NonConvergence {
                level,
                iterations: self.iterations,
                grad_norm: self.grad_norm,
                partial: None,
            })
        }
    }
}

fn check_state(u: &GridFunction, spec: &ProblemSpec, what: &str) -> Result<()> {
    spec.grid.check_same(u.grid())?;
    if u.levels() != 1 {
        return Err(Error::ShapeMismatch(format!("{what} must be a single level")));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct StepEnergy {
    pub value: f64,
    pub gradient: GridFunction,
}

/// Step energy at `level` (transition `level − 1 → level`) and its exact
/// gradient with respect to node values.
pub fn step_energy(u: &GridFunction, u_prev: &GridFunction, level: usize, spec: &ProblemSpec) -> Result<StepEnergy> {
    check_state(u, spec, "state")?;
    check_state(u_prev, spec, "previous state")?;
    let data = step_data(spec, u_prev.level(0), level)?;
    let mut grad = vec![0.0; spec.grid.nodes()];
    let e = data.eval(u.level(0), &mut grad);
    if !e.value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("step energy at level {level}")));
    }
    Ok(StepEnergy {
        value: e.value,
        gradient: GridFunction::from_values(&spec.grid, 1, grad, true)?,
    })
}

fn step_data(spec: &ProblemSpec, u_prev: &[f64], level: usize) -> Result<StepData> {
    match &spec.source.reaction {
        Some(r) => {
            let phi = r.phi.bind()?;
            StepData::new(spec, u_prev, level, Some(&phi))
        }
        None => StepData::new(spec, u_prev, level, None),
    }
}

/// Minimizes the step energy starting from `u_prev`.
pub fn implicit_step(u_prev: &GridFunction, level: usize, spec: &ProblemSpec) -> Result<StepOutcome> {
    check_state(u_prev, spec, "previous state")?;
    let data = step_data(spec, u_prev.level(0), level)?;
    let d = descent::minimize(&data, &spec.opt, spec.grad_tol());
    if !d.value.is_finite() {
        return Err(Error::NonFinite(format!("step energy at level {level}")));
    }
    Ok(StepOutcome {
        u: GridFunction::from_values(&spec.grid, 1, d.u, true)?,
        energy: d.value,
        iterations: d.iterations,
        grad_norm: d.grad_norm,
        converged: d.converged,
    })
}

/// Runs all time levels. On a missed tolerance the error carries the
/// trajectory up to and including the failing level's best iterate.
pub fn solve(spec: &ProblemSpec) -> Result<SolveResult> {
    spec.validate()?;
    let g = spec.grid;
    let grad_tol = spec.grad_tol();
    let phi = spec.source.reaction.as_ref().map(|r| r.phi.bind()).transpose()?;
    let mut traj = GridFunction::zeros(&g, g.nt(), true);
    traj.level_mut(0).copy_from_slice(spec.u0.level(0));
    let mut steps = Vec::with_capacity(g.nt() - 1);

    for k in 1..g.nt() {
        let data = match &phi {
            Some(f) => StepData::new(spec, traj.level(k - 1), k, Some(f))?,
            None => StepData::new(spec, traj.level(k - 1), k, None)?,
        };
        let d = descent::minimize(&data, &spec.opt, grad_tol);
        if !d.value.is_finite() || d.u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("state at level {k}")));
        }
        traj.level_mut(k).copy_from_slice(&d.u);
        steps.push(StepStats {
            energy: d.value,
            iterations: d.iterations,
            grad_norm: d.grad_norm,
        });
        if !d.converged {
            let values = traj.values()[..(k + 1) * g.nodes()].to_vec();
            let partial = SolveResult {
                trajectory: GridFunction::from_values(&g, k + 1, values, true)?,
                steps,
                diagnostics: EnergyReport::unavailable(),
                grad_tol,
            };
            return Err(Error::NonConvergence {
                level: k,
                iterations: d.iterations,
                grad_norm: d.grad_norm,
                partial: Some(Box::new(partial)),
            });
        }
    }

    let mut result = SolveResult {
        trajectory: traj,
        steps,
        diagnostics: EnergyReport::unavailable(),
        grad_tol,
    };
    result.diagnostics = energy_diagnostics(&result, spec)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::SpaceTimeExpr;
    use std::f64::consts::PI;

    fn heat_spec(n: usize) -> ProblemSpec {
        let g = Grid::unit_square_parabolic(n, 0.05).unwrap();
        let p = ExponentField::constant(&g, 2.0).unwrap();
        let u0 = GridFunction::spatial_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin())
            .unwrap()
            .with_dirichlet()
            .unwrap();
        ProblemSpec::new(p, SourceSpec::zero(&g), u0).unwrap()
    }

    #[test]
    fn zero_state_has_zero_energy_and_gradient() {
        let g = Grid::unit_square(9, 3, 0.1).unwrap();
        let p = ExponentField::constant(&g, 2.0).unwrap();
        let zero = GridFunction::zeros(&g, 1, true);
        let spec = ProblemSpec::new(p, SourceSpec::zero(&g), zero.clone())
            .unwrap()
            .with_eps_reg(0.0)
            .unwrap();
        let e = step_energy(&zero, &zero, 1, &spec).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(e.gradient.values().iter().all(|&v| v == 0.0));
        let out = implicit_step(&zero, 1, &spec).unwrap();
        assert!(out.converged && out.iterations == 0);
        assert!(out.u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_data_gives_zero_trajectory() {
        let g = Grid::unit_square(9, 4, 0.1).unwrap();
        let p = ExponentField::from_fn(&g, |x, _, _| 2.5 + 0.3 * x).unwrap();
        let spec = ProblemSpec::new(p, SourceSpec::zero(&g), GridFunction::zeros(&g, 1, true)).unwrap();
        let r = solve(&spec).unwrap();
        assert!(r.trajectory.values().iter().all(|&v| v == 0.0));
        assert_eq!(r.steps.len(), 3);
        let d = &r.diagnostics;
        assert_eq!(d.sup_l2_sq, 0.0);
        assert_eq!(d.grad_modular, 0.0);
        assert_eq!(d.ut_l2_sq, 0.0);
        assert_eq!(d.sup_grad_modular_s, 0.0);
        assert!(d.higher_integrability.iter().all(|(_, v)| *v == 0.0));
    }

    #[test]
    fn heat_run_keeps_boundary_and_initial_level() {
        let spec = heat_spec(9);
        let r = solve(&spec).unwrap();
        assert_eq!(r.trajectory.level(0), spec.u0.level(0));
        let g = spec.grid;
        for k in 0..g.nt() {
            for i in 0..g.nx() {
                assert_eq!(r.trajectory.at(k, i, 0), 0.0);
                assert_eq!(r.trajectory.at(k, i, g.ny() - 1), 0.0);
            }
        }
        assert!(r.steps.iter().all(|s| s.grad_norm <= r.grad_tol));
        assert!((r.diagnostics.sup_l2_sq - 0.25).abs() < 0.01 * 0.25);
    }

    #[test]
    fn non_convergence_carries_partial_trajectory() {
        let mut spec = heat_spec(9);
        spec.opt.max_iters = 1;
        spec.opt.grad_tol = Some(1e-30);
        match solve(&spec) {
            Err(Error::NonConvergence { level, partial: Some(p), .. }) => {
                assert_eq!(level, 1);
                assert_eq!(p.trajectory.levels(), 2);
                assert_eq!(p.steps.len(), 1);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn validation_rejects_bad_sources() {
        let g = Grid::unit_square(9, 3, 0.1).unwrap();
        let p = ExponentField::constant(&g, 2.4).unwrap();
        let u0 = GridFunction::zeros(&g, 1, true);
        let sigma = ExponentField::constant(&g, 2.0).unwrap();
        let neg = SourceSpec::zero(&g).with_absorption(-1.0, sigma.clone());
        assert!(matches!(
            ProblemSpec::new(p.clone(), neg, u0.clone()),
            Err(Error::RangeViolation(_))
        ));

        let shifted = SourceSpec::zero(&g).with_reaction(ScalarExpr::parse("1 + sin(s)").unwrap(), 1.0);
        assert!(ProblemSpec::new(p.clone(), shifted, u0.clone()).is_err());
        let steep = SourceSpec::zero(&g).with_reaction(ScalarExpr::parse("2*sin(s)").unwrap(), 1.0);
        assert!(ProblemSpec::new(p.clone(), steep, u0.clone()).is_err());
        let ok = SourceSpec::zero(&g).with_reaction(ScalarExpr::parse("0.5*sin(s)").unwrap(), 0.5);
        assert!(ProblemSpec::new(p.clone(), ok, u0.clone()).is_ok());

        let wide = ExponentField::constant(&g, 2.5).unwrap();
        let spec = ProblemSpec::new(p.clone(), SourceSpec::zero(&g).with_absorption(1.0, wide), u0.clone()).unwrap();
        assert!(spec.check_strong_range().is_err());
        let spec = ProblemSpec::new(p, SourceSpec::zero(&g).with_absorption(1.0, sigma), u0).unwrap();
        assert!(spec.check_strong_range().is_ok());
    }

    #[test]
    fn source_is_sampled_at_the_new_level() {
        // spatially constant forcing switched on after t = 0: with p ≡ 2 the
        // interior response of the first step is positive
        let g = Grid::unit_square(9, 3, 0.1).unwrap();
        let f = SpaceTimeExpr::parse("t * 10").unwrap();
        let f0 = GridFunction::space_time_expr(&g, &f).unwrap();
        let p = ExponentField::constant(&g, 2.0).unwrap();
        let spec = ProblemSpec::new(p, SourceSpec::forcing(f0), GridFunction::zeros(&g, 1, true)).unwrap();
        let out = implicit_step(&GridFunction::zeros(&g, 1, true), 1, &spec).unwrap();
        assert!(out.converged);
        assert!(out.u.at(0, 4, 4) > 0.0);
    }
}
