//! Numerical counterparts of the continuous-dependence estimates: data
//! distances, solution distances, the bound functional and perturbation or
//! convergence families.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exponent::{check_proximity, conj, default_proximity_lambda, ExponentField, ProximityReport};
use crate::solver::{solve, ProblemSpec, SolveResult};
use crate::spaces::{gradient_all, l2_norm_sq, modular, w_norm, GridFunction, Region};

/// Which source structure the two problems share.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// `f = f0`; source distance is `‖f1 − f2‖²_{2,Q}`
    Linear,
    /// `f = −a|u|^{σ−2}u + f0`; adds `sup|σ − μ|`, source distance `‖f0 − g0‖_{2,Q}`
    Power,
    /// `f = φ(u) + f0`; source distance `‖f0 − g0‖_{2,Q}`, bound scaled by `e^{DT}`
    Reaction,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Linear => "linear",
            Variant::Power => "power",
            Variant::Reaction => "reaction",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Variant::Linear),
            "power" => Ok(Variant::Power),
            "reaction" => Ok(Variant::Reaction),
            other => Err(Error::VariantMismatch(format!(
                "unknown variant `{other}`, expected linear, power or reaction"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataDistance {
    pub init_sq: f64,
    pub source_sq: f64,
    pub exp_term: f64,
    pub sigma_term: f64,
    pub total: f64,
    pub variant: Variant,
}

fn check_variant(spec: &ProblemSpec, variant: Variant, role: &str) -> Result<()> {
    let s = &spec.source;
    let bad = |why: &str| Err(Error::VariantMismatch(format!("{role} spec: {why}")));
    match variant {
        Variant::Linear => {
            if s.a != 0.0 || s.reaction.is_some() {
                return bad("linear variant takes neither absorption nor reaction");
            }
        }
        Variant::Power => {
            if s.sigma.is_none() || s.reaction.is_some() {
                return bad("power variant needs a source exponent and no reaction");
            }
            spec.check_strong_range()?;
        }
        Variant::Reaction => {
            if s.reaction.is_none() || s.a != 0.0 {
                return bad("reaction variant needs phi and no absorption");
            }
        }
    }
    Ok(())
}

fn check_pair(s1: &ProblemSpec, s2: &ProblemSpec, variant: Variant) -> Result<()> {
    s1.grid.check_same(&s2.grid)?;
    check_variant(s1, variant, "first")?;
    check_variant(s2, variant, "second")?;
    match variant {
        Variant::Power if s1.source.a != s2.source.a => Err(Error::VariantMismatch(format!(
            "absorption coefficients differ: {} vs {}",
            s1.source.a, s2.source.a
        ))),
        Variant::Reaction => {
            let (r1, r2) = (s1.source.reaction.as_ref().unwrap(), s2.source.reaction.as_ref().unwrap());
            if r1.phi.text() != r2.phi.text() || r1.lipschitz != r2.lipschitz {
                Err(Error::VariantMismatch("reaction terms differ between the two specs".into()))
            } else {
                Ok(())
            }
        }
        _ => Ok(()),
    }
}

/// `max |a − b|^{w}` over all samples, with the weight exponent per sample.
fn sup_weighted_gap(a: &[f64], b: &[f64], weight: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(weight)
        .map(|((x, y), w)| {
            let d = (x - y).abs();
            if d == 0.0 {
                0.0
            } else {
                d.powf(*w)
            }
        })
        .fold(0.0, f64::max)
}

pub fn data_distance(s1: &ProblemSpec, s2: &ProblemSpec, variant: Variant) -> Result<DataDistance> {
    check_pair(s1, s2, variant)?;
    let init_sq = l2_norm_sq(&s1.u0.sub(&s2.u0)?, Region::Slice(0))?;
    let f_sq = l2_norm_sq(&s1.source.f0.sub(&s2.source.f0)?, Region::Cylinder)?;
    let source_sq = match variant {
        Variant::Linear => f_sq,
        Variant::Power | Variant::Reaction => f_sq.sqrt(),
    };
    let q_conj: Vec<f64> = s2.p.samples().iter().map(|&q| conj(q)).collect();
    let exp_term = sup_weighted_gap(s1.p.samples(), s2.p.samples(), &q_conj);
    let sigma_term = match variant {
        Variant::Power => {
            let (a, b) = (s1.source.sigma.as_ref().unwrap(), s2.source.sigma.as_ref().unwrap());
            let ones = vec![1.0; a.samples().len()];
            sup_weighted_gap(a.samples(), b.samples(), &ones)
        }
        _ => 0.0,
    };
    Ok(DataDistance {
        init_sq,
        source_sq,
        exp_term,
        sigma_term,
        total: init_sq + source_sq + exp_term + sigma_term,
        variant,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolutionDistance {
    /// `max_k ‖u^k − v^k‖²₂`, levels from 0
    pub lhs_l2: f64,
    /// `∫_Q |∇(u − v)|^q`
    pub lhs_grad: f64,
}

impl SolutionDistance {
    pub fn total(&self) -> f64 {
        self.lhs_l2 + self.lhs_grad
    }
}

fn trajectory_distance(u: &GridFunction, v: &GridFunction, q: &ExponentField) -> Result<SolutionDistance> {
    let diff = u.sub(v)?;
    let mut lhs_l2 = 0.0f64;
    for k in 0..diff.levels() {
        lhs_l2 = lhs_l2.max(l2_norm_sq(&diff, Region::Slice(k))?);
    }
    let lhs_grad = modular(&gradient_all(&diff), q, Region::Cylinder)?;
    Ok(SolutionDistance { lhs_l2, lhs_grad })
}

pub fn solution_distance(u: &SolveResult, v: &SolveResult, q: &ExponentField) -> Result<SolutionDistance> {
    trajectory_distance(&u.trajectory, &v.trajectory, q)
}

/// `R̃ + R̃^{q⁺/2} + R̃^{q⁻/2}` with `R̃ = dt_factor · r_total`.
pub fn bound_functional(r_total: f64, q_minus: f64, q_plus: f64, dt_factor: f64) -> Result<f64> {
    if !(r_total >= 0.0 && r_total.is_finite()) {
        return Err(Error::RangeViolation(format!("R must be finite and ≥ 0, got {r_total}")));
    }
    if !(q_minus > 0.0 && q_minus <= q_plus && q_plus.is_finite()) {
        return Err(Error::RangeViolation(format!(
            "need 0 < q_minus ≤ q_plus, got {q_minus} and {q_plus}"
        )));
    }
    if !(dt_factor >= 1.0 && dt_factor.is_finite()) {
        return Err(Error::RangeViolation(format!("time factor must be ≥ 1, got {dt_factor}")));
    }
    let r = dt_factor * r_total;
    if r == 0.0 {
        return Ok(0.0);
    }
    Ok(r + r.powf(0.5 * q_plus) + r.powf(0.5 * q_minus))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub member: usize,
    pub r: DataDistance,
    pub lhs_l2: f64,
    /// gradient term with the perturbed exponent `q`
    pub lhs_grad: f64,
    /// max of the gradient term over both exponent orderings
    pub lhs_grad_sym: f64,
    /// `e^{DT}` for the reaction variant, else 1
    pub dt_factor: f64,
    pub bound: f64,
    /// `(lhs_l2 + lhs_grad) / bound`; `None` when the bound vanishes
    pub ratio: Option<f64>,
    pub proximity: ProximityReport,
}

impl StabilityReport {
    pub fn lhs_total(&self) -> f64 {
        self.lhs_l2 + self.lhs_grad
    }

    /// Identical data and identical solutions.
    pub fn exact_match(&self) -> bool {
        self.bound == 0.0 && self.lhs_total() == 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FamilySummary {
    /// max ratio over the family, `None` if every bound vanishes
    pub c_fit: Option<f64>,
    /// lhs totals nonincreasing as R totals decrease
    pub monotone: bool,
    /// lhs totals strictly decreasing along the family order
    pub strictly_decreasing: bool,
    /// least-squares slope of `ln lhs` against `ln R`
    pub loglog_slope: Option<f64>,
    pub all_exact: bool,
}

/// Max ratio over the given reports.
pub fn c_fit(reports: &[StabilityReport]) -> Option<f64> {
    reports.iter().filter_map(|r| r.ratio).reduce(f64::max)
}

pub fn summarize(reports: &[StabilityReport]) -> FamilySummary {
    let mut by_r: Vec<&StabilityReport> = reports.iter().collect();
    by_r.sort_by(|a, b| b.r.total.total_cmp(&a.r.total));
    let monotone = by_r.windows(2).all(|w| w[1].lhs_total() <= w[0].lhs_total());
    let strictly_decreasing = reports.windows(2).all(|w| w[1].lhs_total() < w[0].lhs_total());

    let pts: Vec<(f64, f64)> = reports
        .iter()
        .filter(|r| r.r.total > 0.0 && r.lhs_total() > 0.0)
        .map(|r| (r.r.total.ln(), r.lhs_total().ln()))
        .collect();
    let loglog_slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    } else {
        None
    };
    FamilySummary {
        c_fit: c_fit(reports),
        monotone,
        strictly_decreasing,
        loglog_slope,
        all_exact: reports.iter().all(StabilityReport::exact_match),
    }
}

#[derive(Clone, Debug)]
pub struct FamilyOutcome {
    pub reports: Vec<StabilityReport>,
    pub summary: FamilySummary,
    pub base: SolveResult,
    pub members: Vec<SolveResult>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FamilyOptions {
    /// proximity margin; `None` means half of `r*` of the base exponent
    pub proximity_lambda: Option<f64>,
    /// worker threads for independent solves; 0 lets the pool decide
    pub threads: usize,
}

/// Solves every spec independently, keeping the input order.
pub fn solve_all(specs: &[&ProblemSpec], threads: usize) -> Result<Vec<SolveResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::RangeViolation(format!("cannot build a pool of {threads} threads: {e}")))?;
    pool.install(|| specs.par_iter().map(|s| solve(s)).collect::<Vec<_>>())
        .into_iter()
        .collect()
}

/// Builds the report for one (base, member) pair from their solutions.
pub fn stability_report(
    member: usize,
    base: (&ProblemSpec, &SolveResult),
    other: (&ProblemSpec, &SolveResult),
    variant: Variant,
    proximity: ProximityReport,
) -> Result<StabilityReport> {
    let (s1, u) = base;
    let (s2, v) = other;
    let r = data_distance(s1, s2, variant)?;
    let d = solution_distance(u, v, &s2.p)?;
    let swapped = solution_distance(u, v, &s1.p)?;
    let dt_factor = match variant {
        Variant::Reaction => {
            let d = s1.source.reaction.as_ref().map_or(0.0, |r| r.lipschitz);
            (d * s1.grid.horizon()).exp()
        }
        _ => 1.0,
    };
    let bound = bound_functional(r.total, s2.p.p_minus(), s2.p.p_plus(), dt_factor)?;
    let ratio = (bound > 0.0).then(|| d.total() / bound);
    Ok(StabilityReport {
        member,
        r,
        lhs_l2: d.lhs_l2,
        lhs_grad: d.lhs_grad,
        lhs_grad_sym: d.lhs_grad.max(swapped.lhs_grad),
        dt_factor,
        bound,
        ratio,
        proximity,
    })
}

/// Checks proximity for every member before any solve.
pub fn check_family_proximity(
    base: &ProblemSpec,
    perturbations: &[ProblemSpec],
    proximity_lambda: Option<f64>,
) -> Result<Vec<ProximityReport>> {
    let lambda = proximity_lambda.unwrap_or_else(|| default_proximity_lambda(&base.p));
    perturbations
        .iter()
        .enumerate()
        .map(|(m, s)| {
            let rep = check_proximity(&base.p, &s.p, lambda)?;
            if rep.ok() {
                Ok(rep)
            } else {
                Err(Error::ProximityViolation {
                    member: m,
                    worst_margin: rep.worst_margin,
                })
            }
        })
        .collect()
}

/// Solves the base problem and each perturbation and compares each pair.
/// The base plays the strong solution with exponent `p`, each member the
/// weak solution with exponent `q`.
pub fn run_stability_family(
    base: &ProblemSpec,
    perturbations: &[ProblemSpec],
    variant: Variant,
    opts: FamilyOptions,
) -> Result<FamilyOutcome> {
    let proximity = check_family_proximity(base, perturbations, opts.proximity_lambda)?;
    for s in perturbations {
        check_pair(base, s, variant)?;
    }
    let mut all: Vec<&ProblemSpec> = vec![base];
    all.extend(perturbations.iter());
    let mut solved = solve_all(&all, opts.threads)?;
    let members = solved.split_off(1);
    let base_result = solved.pop().expect("base solve");

    let reports = perturbations
        .iter()
        .zip(&members)
        .zip(proximity)
        .enumerate()
        .map(|(m, ((s, v), prox))| stability_report(m, (base, &base_result), (s, v), variant, prox))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&reports);
    Ok(FamilyOutcome {
        reports,
        summary,
        base: base_result,
        members,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub member: usize,
    /// `max |p_k − p*|`
    pub exponent_gap: f64,
    /// `max_t ‖u_k − u*‖²₂`
    pub lhs_l2: f64,
    /// `∫_Q |∇(u_k − u*)|^{p*}`
    pub lhs_grad: f64,
    /// `‖u_k − u*‖_{W_{p*}}`
    pub w_distance: f64,
    /// distances between members `k − 1` and `k`, `None` for the first
    pub cauchy_l2: Option<f64>,
    pub cauchy_grad: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// both distance components to the limit decrease along the sequence
    pub distances_decreasing: bool,
    /// both consecutive-member components decrease along the sequence
    pub cauchy_decreasing: bool,
}

fn decreasing(values: impl Iterator<Item = f64>) -> bool {
    let v: Vec<f64> = values.collect();
    v.windows(2).all(|w| w[1] < w[0])
}

/// Distances of a sequence of solutions to the limit problem's solution,
/// all measured with the limit exponent.
pub fn run_convergence(sequence: &[ProblemSpec], limit: &ProblemSpec, threads: usize) -> Result<ConvergenceReport> {
    for s in sequence {
        s.grid.check_same(&limit.grid)?;
    }
    let mut all: Vec<&ProblemSpec> = sequence.iter().collect();
    all.push(limit);
    let mut solved = solve_all(&all, threads)?;
    let star = solved.pop().expect("limit solve");
    let p_star = &limit.p;

    let mut rows = Vec::with_capacity(sequence.len());
    for (k, (spec, u)) in sequence.iter().zip(&solved).enumerate() {
        let d = solution_distance(u, &star, p_star)?;
        let diff = u.trajectory.sub(&star.trajectory)?;
        let cauchy = if k > 0 {
            Some(solution_distance(u, &solved[k - 1], p_star)?)
        } else {
            None
        };
        let ones = vec![1.0; spec.p.samples().len()];
        rows.push(ConvergenceRow {
            member: k,
            exponent_gap: sup_weighted_gap(spec.p.samples(), p_star.samples(), &ones),
            lhs_l2: d.lhs_l2,
            lhs_grad: d.lhs_grad,
            w_distance: w_norm(&diff, p_star)?,
            cauchy_l2: cauchy.map(|c| c.lhs_l2),
            cauchy_grad: cauchy.map(|c| c.lhs_grad),
        });
    }
    let distances_decreasing =
        decreasing(rows.iter().map(|r| r.lhs_l2)) && decreasing(rows.iter().map(|r| r.lhs_grad));
    let cauchy_decreasing = decreasing(rows.iter().filter_map(|r| r.cauchy_l2))
        && decreasing(rows.iter().filter_map(|r| r.cauchy_grad));
    Ok(ConvergenceReport {
        rows,
        distances_decreasing,
        cauchy_decreasing,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterpolationCheck {
    /// `∫_Q |u|^{p+ε}`
    pub value: f64,
    /// `sup ‖u(t)‖²₂ + ∫_Q |∇u|^p`
    pub bound_input: f64,
}

/// Integrability of `u` slightly above `p`, for `0 < ε < 1/2`.
pub fn interpolation_check(result: &SolveResult, spec: &ProblemSpec, eps: f64) -> Result<InterpolationCheck> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::RangeViolation(format!("interpolation exponent shift must lie in (0, 1/2), got {eps}")));
    }
    let shifted = spec.p.map(|p| p + eps)?;
    let value = modular(&result.trajectory, &shifted, Region::Cylinder)?;
    let d = &result.diagnostics;
    Ok(InterpolationCheck {
        value,
        bound_input: d.sup_l2_sq + d.grad_modular,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::solver::SourceSpec;
    use std::f64::consts::PI;

    fn spec_with(g: &Grid, p: f64, u0_amp: f64) -> ProblemSpec {
        let pf = ExponentField::constant(g, p).unwrap();
        let u0 = GridFunction::spatial_fn(g, |x, y| u0_amp * (PI * x).sin() * (PI * y).sin())
            .unwrap()
            .with_dirichlet()
            .unwrap();
        ProblemSpec::new(pf, SourceSpec::zero(g), u0).unwrap()
    }

    #[test]
    fn bound_functional_examples() {
        assert_eq!(bound_functional(0.0, 2.0, 3.0, 1.0).unwrap(), 0.0);
        assert!((bound_functional(1.0, 2.3, 4.1, 1.0).unwrap() - 3.0).abs() < 1e-15);
        assert!((bound_functional(0.01, 2.0, 2.0, 1.0).unwrap() - 0.03).abs() < 1e-15);
        assert!(bound_functional(-1.0, 2.0, 2.0, 1.0).is_err());
        assert!(bound_functional(1.0, 3.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn data_distance_examples() {
        let g = Grid::unit_square(33, 3, 0.01).unwrap();
        let a = spec_with(&g, 2.0, 1.0);
        let d = data_distance(&a, &a, Variant::Linear).unwrap();
        assert_eq!(d.total, 0.0);

        let b = spec_with(&g, 2.0, 1.1);
        let d = data_distance(&a, &b, Variant::Linear).unwrap();
        assert!((d.init_sq - 0.0025).abs() < 1e-12);
        assert_eq!(d.exp_term + d.source_sq + d.sigma_term, 0.0);

        let c = spec_with(&g, 2.1, 1.0);
        let d = data_distance(&a, &c, Variant::Linear).unwrap();
        let expected = 0.1f64.powf(2.1 / 1.1);
        assert!((d.exp_term - expected).abs() < 1e-12 * expected.max(1.0) + 1e-9);
        assert!((d.exp_term - 0.01232).abs() < 1e-5);
    }

    #[test]
    fn variant_mismatch_is_reported() {
        let g = Grid::unit_square(9, 3, 0.01).unwrap();
        let a = spec_with(&g, 2.0, 1.0);
        assert!(matches!(
            data_distance(&a, &a, Variant::Power),
            Err(Error::VariantMismatch(_))
        ));
        assert!(matches!(
            data_distance(&a, &a, Variant::Reaction),
            Err(Error::VariantMismatch(_))
        ));
    }

    #[test]
    fn interpolation_rejects_large_shift() {
        let g = Grid::unit_square(9, 3, 0.01).unwrap();
        let s = ProblemSpec::new(
            ExponentField::constant(&g, 2.0).unwrap(),
            SourceSpec::zero(&g),
            GridFunction::zeros(&g, 1, true),
        )
        .unwrap();
        let r = solve(&s).unwrap();
        assert!(matches!(interpolation_check(&r, &s, 0.6), Err(Error::RangeViolation(_))));
        assert_eq!(interpolation_check(&r, &s, 0.25).unwrap().value, 0.0);
    }

    #[test]
    fn summary_of_identical_family_is_exact() {
        let g = Grid::unit_square(9, 4, 0.01).unwrap();
        let a = spec_with(&g, 2.4, 1.0);
        let out = run_stability_family(&a, &[a.clone(), a.clone()], Variant::Linear, FamilyOptions::default()).unwrap();
        assert!(out.summary.all_exact);
        assert!(out.summary.c_fit.is_none());
        assert!(out.reports.iter().all(|r| r.ratio.is_none()));
    }
}
