use crate::error::{Error, Result};
use crate::spaces::{discrete_gradient, gradient_all, l2_norm_sq, modular, GridFunction, Region};

use super::energy::StepData;
use super::{ProblemSpec, SolveResult};

/// Energy quantities of a computed trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    /// `max_k ‖u^k‖²₂`, levels from 0
    pub sup_l2_sq: f64,
    /// `∫_Q |∇u|^p`
    pub grad_modular: f64,
    /// `Σ_k ‖(u^k − u^{k−1})/τ‖²₂ τ`
    pub ut_l2_sq: f64,
    /// `max_k ∫_Ω |∇u^k|^s` with `s = max(2, p)`
    pub sup_grad_modular_s: f64,
    /// `(δ, ∫_Q |∇u|^{p+δ})` for `δ = r*/4, r*/2, 3r*/4`
    pub higher_integrability: Vec<(f64, f64)>,
    /// `∫_Ω |∇u0|^s`, reported only
    pub u0_grad_modular: f64,
    /// `‖u0‖²₂ + ‖f0‖²_{2,Q}`
    pub data_norm_sq: f64,
    /// `(sup_l2_sq + grad_modular) / (data_norm_sq + 1)`
    pub weak_bound_ratio: f64,
}

impl EnergyReport {
    /// Placeholder for trajectories that stopped early.
    pub fn unavailable() -> Self {
        Self {
            sup_l2_sq: f64::NAN,
            grad_modular: f64::NAN,
            ut_l2_sq: f64::NAN,
            sup_grad_modular_s: f64::NAN,
            higher_integrability: Vec::new(),
            u0_grad_modular: f64::NAN,
            data_norm_sq: f64::NAN,
            weak_bound_ratio: f64::NAN,
        }
    }

    /// `δ ↦ ∫_Q |∇u|^{p+δ}` at the middle sample `δ = r*/2`.
    pub fn higher_integrability_mid(&self) -> Option<f64> {
        self.higher_integrability.get(1).map(|(_, v)| *v)
    }
}

pub fn energy_diagnostics(result: &SolveResult, spec: &ProblemSpec) -> Result<EnergyReport> {
    let u = &result.trajectory;
    let g = spec.grid;
    g.check_same(u.grid())?;
    if u.levels() != g.nt() {
        return Err(Error::ShapeMismatch(format!(
            "diagnostics need a complete trajectory of {} levels, got {}",
            g.nt(),
            u.levels()
        )));
    }
    let mut sup_l2_sq = 0.0f64;
    for k in 0..g.nt() {
        sup_l2_sq = sup_l2_sq.max(l2_norm_sq(u, Region::Slice(k))?);
    }
    let grad = gradient_all(u);
    let grad_modular = modular(&grad, &spec.p, Region::Cylinder)?;

    let mut ut_l2_sq = 0.0;
    let tau = g.tau();
    for k in 1..g.nt() {
        let diff: Vec<f64> = u.level(k).iter().zip(u.level(k - 1)).map(|(a, b)| (a - b) / tau).collect();
        let d = GridFunction::from_values(&g, 1, diff, false)?;
        ut_l2_sq += l2_norm_sq(&d, Region::Slice(0))? * tau;
    }

    let s = spec.p.map(|p| p.max(2.0))?;
    let mut sup_grad_modular_s = 0.0f64;
    for k in 0..g.nt() {
        let gk = discrete_gradient(u, k)?;
        sup_grad_modular_s = sup_grad_modular_s.max(modular(&gk, &s, Region::Slice(k))?);
    }

    let r_star = spec.p.r_star();
    let mut higher_integrability = Vec::with_capacity(3);
    for frac in [0.25, 0.5, 0.75] {
        let delta = frac * r_star;
        let shifted = spec.p.map(|p| p + delta)?;
        higher_integrability.push((delta, modular(&grad, &shifted, Region::Cylinder)?));
    }

    let u0_grad = discrete_gradient(&spec.u0, 0)?;
    let u0_grad_modular = modular(&u0_grad, &s, Region::Slice(0))?;
    let data_norm_sq = l2_norm_sq(&spec.u0, Region::Slice(0))? + l2_norm_sq(&spec.source.f0, Region::Cylinder)?;
    Ok(EnergyReport {
        sup_l2_sq,
        grad_modular,
        ut_l2_sq,
        sup_grad_modular_s,
        higher_integrability,
        u0_grad_modular,
        data_norm_sq,
        weak_bound_ratio: (sup_l2_sq + grad_modular) / (data_norm_sq + 1.0),
    })
}

/// `|Σ_k τ ⟨∂E_k(u^k), φ^k⟩|`: the discrete weak form of the equation tested
/// with `φ`, summed over levels `1..nt`.
pub fn weak_residual(result: &SolveResult, spec: &ProblemSpec, testfn: &GridFunction) -> Result<f64> {
    let g = spec.grid;
    let u = &result.trajectory;
    g.check_same(u.grid())?;
    g.check_same(testfn.grid())?;
    if u.levels() != g.nt() || testfn.levels() != g.nt() {
        return Err(Error::ShapeMismatch(format!(
            "weak residual needs {} levels for solution and test function",
            g.nt()
        )));
    }
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            if g.is_boundary(i, j) && (0..g.nt()).any(|k| testfn.at(k, i, j) != 0.0) {
                return Err(Error::BoundaryViolation(format!(
                    "test function is nonzero at boundary node ({i}, {j})"
                )));
            }
        }
    }
    let phi = spec.source.reaction.as_ref().map(|r| r.phi.bind()).transpose()?;
    let mut grad = vec![0.0; g.nodes()];
    let mut total = 0.0;
    for k in 1..g.nt() {
        let data = match &phi {
            Some(f) => StepData::new(spec, u.level(k - 1), k, Some(f))?,
            None => StepData::new(spec, u.level(k - 1), k, None)?,
        };
        data.eval(u.level(k), &mut grad);
        total += g.tau() * grad.iter().zip(testfn.level(k)).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(total.abs())
}

/// `Σ_k (u^k − u^{k−1}, u^k) − ½(‖u^N‖² − ‖u^0‖²) − ½ Σ_k ‖u^k − u^{k−1}‖²`,
/// which vanishes identically for any sequence of levels.
pub fn integration_by_parts_gap(trajectory: &GridFunction) -> Result<f64> {
    let g = *trajectory.grid();
    let n = trajectory.levels();
    if n < 2 {
        return Err(Error::ShapeMismatch("need at least two levels".into()));
    }
    let inner = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let m = g.node(i, j);
                s += g.node_weight(i, j) * a[m] * b[m];
            }
        }
        s
    };
    let mut lhs = 0.0;
    let mut jumps = 0.0;
    for k in 1..n {
        let d: Vec<f64> = trajectory
            .level(k)
            .iter()
            .zip(trajectory.level(k - 1))
            .map(|(a, b)| a - b)
            .collect();
        lhs += inner(&d, trajectory.level(k));
        jumps += inner(&d, &d);
    }
    let last = trajectory.level(n - 1);
    let first = trajectory.level(0);
    Ok(lhs - 0.5 * (inner(last, last) - inner(first, first)) - 0.5 * jumps)
}
