//! Experiment configuration: a TOML document with string expressions.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use varflow_core::grid::Rect;
use varflow_core::stability::Variant;
use varflow_core::{
    Error, ExponentField, Grid, GridFunction, ProblemSpec, ScalarExpr, SourceSpec, SpaceTimeExpr,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Stability,
    Convergence,
    Spacecheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Stability => "stability",
            Command::Convergence => "convergence",
            Command::Spacecheck => "spacecheck",
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub grid: Option<GridBlock>,
    pub exponent: Option<ExponentBlock>,
    #[serde(default)]
    pub source: SourceBlock,
    pub initial: Option<InitialBlock>,
    #[serde(default)]
    pub solver: SolverBlock,
    pub family: Option<FamilyBlock>,
    pub sequence: Option<SequenceBlock>,
    pub spacecheck: Option<SpacecheckBlock>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    /// nodes per axis on a square grid
    pub n: Option<usize>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    /// number of time levels including `t = 0`; defaults to `tau ≈ h²`
    pub nt: Option<usize>,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// `[x0, y0, x1, y1]`
    pub domain: Option<[f64; 4]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentBlock {
    pub p: String,
    pub sigma: Option<String>,
    /// require the strong-solution ranges `p ≥ 2`, `2 ≤ σ ≤ 1 + p/2`
    #[serde(default)]
    pub strong: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceBlock {
    #[serde(default)]
    pub a: f64,
    #[serde(default = "zero_expr")]
    pub f0: String,
    /// reaction term `φ(s)`
    pub phi: Option<String>,
    /// Lipschitz constant of `φ`
    #[serde(rename = "D")]
    pub lipschitz: Option<f64>,
}

impl Default for SourceBlock {
    fn default() -> Self {
        Self {
            a: 0.0,
            f0: zero_expr(),
            phi: None,
            lipschitz: None,
        }
    }
}

fn zero_expr() -> String {
    "0".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBlock {
    pub u0: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub eps_reg: Option<f64>,
    pub grad_tol: Option<f64>,
    pub max_iters: Option<usize>,
}

/// Perturbations of the base problem, one member per scale `s`.
/// Each expression may use `s`; omitted ones repeat the base data.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyBlock {
    pub variant: String,
    pub scales: Vec<f64>,
    pub q: Option<String>,
    pub mu: Option<String>,
    pub v0: Option<String>,
    pub g0: Option<String>,
    /// proximity margin, defaults to half of `r*`
    pub lambda: Option<f64>,
}

/// Sequence of problems indexed by `k`; the base blocks give the limit.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceBlock {
    pub ks: Vec<f64>,
    pub p: String,
    pub u0: Option<String>,
    pub f0: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacecheckBlock {
    #[serde(default = "default_cases")]
    pub cases: usize,
    #[serde(default = "default_check_n")]
    pub n: usize,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
}

impl Default for SpacecheckBlock {
    fn default() -> Self {
        Self {
            cases: default_cases(),
            n: default_check_n(),
            pairs: default_pairs(),
        }
    }
}

fn default_cases() -> usize {
    100
}
fn default_check_n() -> usize {
    17
}
fn default_pairs() -> usize {
    100_000
}

fn missing(block: &str, command: Command) -> Error {
    Error::RangeViolation(format!(
        "command '{}' requires a [{block}] block",
        command.name()
    ))
}

fn context(what: &str, err: Error) -> Error {
    match err {
        Error::RangeViolation(m) => Error::RangeViolation(format!("{what}: {m}")),
        Error::BoundaryViolation(m) => Error::BoundaryViolation(format!("{what}: {m}")),
        Error::NonFinite(m) => Error::NonFinite(format!("{what}: {m}")),
        other => other,
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Command from the file, overridden by the command line.
    pub fn resolve_command(&self, cli: Option<Command>) -> Result<Command, Error> {
        cli.or(self.command).ok_or_else(|| {
            Error::RangeViolation("no command given on the command line or in the config".into())
        })
    }

    pub fn build_grid(&self, command: Command) -> Result<Grid, Error> {
        let g = self.grid.as_ref().ok_or_else(|| missing("grid", command))?;
        let (nx, ny) = match (g.n, g.nx, g.ny) {
            (Some(n), None, None) => (n, n),
            (None, Some(nx), Some(ny)) => (nx, ny),
            _ => {
                return Err(Error::InvalidGrid(
                    "give either n or both nx and ny in [grid]".into(),
                ))
            }
        };
        let [x0, y0, x1, y1] = g.domain.unwrap_or([0.0, 0.0, 1.0, 1.0]);
        let domain = Rect { x0, y0, x1, y1 };
        match g.nt {
            Some(nt) => Grid::new(nx, ny, nt, g.horizon, domain),
            None => Grid::parabolic(nx, ny, g.horizon, domain),
        }
    }

    fn exponent(&self, command: Command) -> Result<&ExponentBlock, Error> {
        self.exponent
            .as_ref()
            .ok_or_else(|| missing("exponent", command))
    }

    fn u0_text(&self, command: Command) -> Result<&str, Error> {
        Ok(&self
            .initial
            .as_ref()
            .ok_or_else(|| missing("initial", command))?
            .u0)
    }

    /// Base problem assembled from the grid, exponent, source, initial and
    /// solver blocks.
    pub fn base_spec(&self, command: Command) -> Result<ProblemSpec, Error> {
        let grid = self.build_grid(command)?;
        let e = self.exponent(command)?;
        let data = Data {
            p: e.p.clone(),
            sigma: e.sigma.clone(),
            u0: self.u0_text(command)?.to_string(),
            f0: self.source.f0.clone(),
        };
        self.spec_from(&grid, &data, &[])
    }

    fn spec_from(
        &self,
        grid: &Grid,
        data: &Data,
        params: &[(&str, f64)],
    ) -> Result<ProblemSpec, Error> {
        let p = ExponentField::from_expr(&SpaceTimeExpr::parse_with(&data.p, params)?, grid)
            .map_err(|e| context("exponent p", e))?;
        let f0 = GridFunction::space_time_expr(grid, &SpaceTimeExpr::parse_with(&data.f0, params)?)
            .map_err(|e| context("source f0", e))?;
        let mut source = SourceSpec::forcing(f0);
        if self.source.a != 0.0 || data.sigma.is_some() {
            let sigma = match &data.sigma {
                Some(text) => {
                    ExponentField::from_expr(&SpaceTimeExpr::parse_with(text, params)?, grid)
                        .map_err(|e| context("source exponent sigma", e))?
                }
                None => {
                    return Err(Error::RangeViolation(
                        "source: a > 0 requires a source exponent sigma in [exponent]".into(),
                    ))
                }
            };
            source = source.with_absorption(self.source.a, sigma);
        }
        if let Some(phi) = &self.source.phi {
            let d = self.source.lipschitz.ok_or_else(|| {
                Error::RangeViolation(
                    "source: a reaction term phi needs its Lipschitz constant D".into(),
                )
            })?;
            source = source.with_reaction(ScalarExpr::parse(phi)?, d);
        }
        let u0 = GridFunction::spatial_expr(grid, &SpaceTimeExpr::parse_with(&data.u0, params)?)?
            .with_dirichlet()
            .map_err(|e| context("initial datum u0 must vanish on the boundary", e))?;
        let mut spec = ProblemSpec::new(p, source, u0).map_err(|e| context("problem", e))?;
        if let Some(eps) = self.solver.eps_reg {
            spec = spec.with_eps_reg(eps)?;
        }
        if let Some(tol) = self.solver.grad_tol {
            spec = spec.with_grad_tol(tol)?;
        }
        if let Some(iters) = self.solver.max_iters {
            if iters == 0 {
                return Err(Error::RangeViolation(
                    "solver: max_iters must be positive".into(),
                ));
            }
            spec.opt.max_iters = iters;
        }
        if self.exponent.as_ref().is_some_and(|e| e.strong) {
            spec.check_strong_range()
                .map_err(|e| context("strong range", e))?;
        }
        Ok(spec)
    }

    /// Base problem and one perturbed problem per family scale.
    pub fn family_specs(
        &self,
    ) -> Result<(ProblemSpec, Vec<ProblemSpec>, Variant, Option<f64>), Error> {
        let command = Command::Stability;
        let fam = self
            .family
            .as_ref()
            .ok_or_else(|| missing("family", command))?;
        let variant = Variant::from_str(&fam.variant)?;
        if fam.scales.is_empty() {
            return Err(Error::RangeViolation(
                "family: scales must not be empty".into(),
            ));
        }
        let base = self.base_spec(command)?;
        let e = self.exponent(command)?;
        let grid = base.grid;
        let members = fam
            .scales
            .iter()
            .map(|&s| {
                let data = Data {
                    p: fam.q.clone().unwrap_or_else(|| e.p.clone()),
                    sigma: fam.mu.clone().or_else(|| e.sigma.clone()),
                    u0: fam
                        .v0
                        .clone()
                        .unwrap_or_else(|| self.u0_text(command).unwrap_or("0").to_string()),
                    f0: fam.g0.clone().unwrap_or_else(|| self.source.f0.clone()),
                };
                self.spec_from(&grid, &data, &[("s", s)])
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((base, members, variant, fam.lambda))
    }

    /// Sequence members and the limit problem.
    pub fn sequence_specs(&self) -> Result<(Vec<ProblemSpec>, ProblemSpec), Error> {
        let command = Command::Convergence;
        let seq = self
            .sequence
            .as_ref()
            .ok_or_else(|| missing("sequence", command))?;
        if seq.ks.is_empty() {
            return Err(Error::RangeViolation(
                "sequence: ks must not be empty".into(),
            ));
        }
        let limit = self.base_spec(command)?;
        let e = self.exponent(command)?;
        let members = seq
            .ks
            .iter()
            .map(|&k| {
                let data = Data {
                    p: seq.p.clone(),
                    sigma: e.sigma.clone(),
                    u0: seq
                        .u0
                        .clone()
                        .unwrap_or_else(|| self.u0_text(command).unwrap_or("0").to_string()),
                    f0: seq.f0.clone().unwrap_or_else(|| self.source.f0.clone()),
                };
                self.spec_from(&limit.grid, &data, &[("k", k)])
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((members, limit))
    }

    pub fn spacecheck_block(&self) -> SpacecheckBlock {
        self.spacecheck.clone().unwrap_or_default()
    }
}

struct Data {
    p: String,
    sigma: Option<String>,
    u0: String,
    f0: String,
}

/// Config of the heat benchmark on an `n × n` unit-square grid.
pub fn heat_benchmark(n: usize, horizon: f64) -> String {
    format!(
        "command = \"solve\"\n\n[grid]\nn = {n}\nT = {horizon}\n\n[exponent]\np = \"2\"\n\n[initial]\nu0 = \"sin(pi*x)*sin(pi*y)\"\n"
    )
}
