//! Orchestration of one experiment and persistence of its results.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};
use varflow_core::oracles::luxemburg_scan;
use varflow_core::solver::EnergyReport;
use varflow_core::spaces::{
    check_norm_modular_bounds, discrete_gradient, holder_pairing, l2_norm_sq, luxemburg_norm,
    monotonicity_gap, quadrature_points,
};
use varflow_core::stability::{
    c_fit, interpolation_check, run_convergence, run_stability_family, FamilyOptions,
    StabilityReport,
};
use varflow_core::{solve, Error, ExponentField, Grid, GridFunction, Region, SolveResult};

use crate::config::{Command, ExperimentConfig, SpacecheckBlock};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_INEQUALITY: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("cannot {action} {path}: {source}")]
    Io {
        action: &'static str,
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config is not valid: {0}")]
    Config(#[from] toml::de::Error),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("inequality suite failed: {failed} of {total} checks")]
    Inequality { failed: usize, total: usize },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Io { .. } => EXIT_IO,
            RunError::Config(_) => EXIT_VALIDATION,
            RunError::Inequality { .. } => EXIT_INEQUALITY,
            RunError::Core(e) => match e {
                Error::NonConvergence { .. } => EXIT_NONCONVERGENCE,
                Error::BisectionFailed(_) | Error::ScanExhausted(_) => EXIT_INEQUALITY,
                _ => EXIT_VALIDATION,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_IO => "io",
            EXIT_VALIDATION => "validation",
            EXIT_NONCONVERGENCE => "nonconvergence",
            _ => "inequality",
        }
    }

    fn name(&self) -> &'static str {
        match self {
            RunError::Io { .. } => "Io",
            RunError::Config(_) => "ConfigParse",
            RunError::Inequality { .. } => "InequalityFailure",
            RunError::Core(e) => match e {
                Error::RangeViolation(_) => "RangeViolation",
                Error::ShapeMismatch(_) => "ShapeMismatch",
                Error::InvalidGrid(_) => "InvalidGrid",
                Error::Expression { .. } => "Expression",
                Error::BoundaryViolation(_) => "BoundaryViolation",
                Error::DomainMismatch(_) => "DomainMismatch",
                Error::NonFinite(_) => "NonFinite",
                Error::BisectionFailed(_) => "BisectionFailed",
                Error::ScanExhausted(_) => "ScanExhausted",
                Error::VariantMismatch(_) => "VariantMismatch",
                Error::ProximityViolation { .. } => "ProximityViolation",
                Error::NonConvergence { .. } => "NonConvergence",
            },
        }
    }

    /// One-line machine-readable record.
    pub fn record(&self, config_hash: Option<&str>, seed: Option<u64>) -> String {
        let mut rec = json!({
            "status": "error",
            "exit_code": self.exit_code(),
            "kind": self.kind(),
            "error": self.name(),
            "message": self.to_string().replace('\n', " "),
            "config_hash": config_hash,
            "seed": seed,
        });
        match self {
            RunError::Core(Error::ProximityViolation {
                member,
                worst_margin,
            }) => {
                rec["member"] = json!(member);
                rec["worst_margin"] = json!(worst_margin);
            }
            RunError::Core(Error::NonConvergence {
                level,
                iterations,
                grad_norm,
                ..
            }) => {
                rec["level"] = json!(level);
                rec["iterations"] = json!(iterations);
                rec["grad_norm"] = json!(grad_norm);
            }
            RunError::Inequality { failed, total } => {
                rec["failed"] = json!(failed);
                rec["total"] = json!(total);
            }
            _ => {}
        }
        rec.to_string()
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub command: Option<Command>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    /// worker threads for independent solves; 0 lets the pool decide
    pub threads: usize,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub command: Command,
    pub files: Vec<PathBuf>,
    pub message: String,
}

/// Hex SHA-256 of the raw config text.
pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Fixed 17-significant-digit formatting.
fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.16e}")
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), num)
}

struct Csv {
    text: String,
}

impl Csv {
    fn new(header: &str, columns: &[&str]) -> Self {
        Self {
            text: format!("{header}\n{}\n", columns.join(",")),
        }
    }

    fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }
}

struct Output<'a> {
    dir: &'a Path,
    header: String,
    files: Vec<PathBuf>,
}

impl Output<'_> {
    fn write(&mut self, name: &str, content: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, content).map_err(|source| RunError::Io {
            action: "write",
            path: path.clone(),
            source,
        })?;
        self.files.push(path);
        Ok(())
    }

    fn csv(&self, columns: &[&str]) -> Csv {
        Csv::new(&self.header, columns)
    }
}

/// Runs the experiment described by `text` and writes its artifacts to
/// `opts.out`.
pub fn run_experiment(text: &str, opts: &RunOptions) -> Result<RunSummary, RunError> {
    let cfg = ExperimentConfig::parse(text)?;
    let command = cfg.resolve_command(opts.command)?;
    let seed = opts.seed.or(cfg.seed).unwrap_or(0);
    let hash = config_hash(text);

    fs::create_dir_all(&opts.out).map_err(|source| RunError::Io {
        action: "create",
        path: opts.out.clone(),
        source,
    })?;
    let mut out = Output {
        dir: &opts.out,
        header: format!(
            "# config_hash={hash} seed={seed} command={}",
            command.name()
        ),
        files: Vec::new(),
    };
    let meta = json!({
        "config_hash": hash,
        "seed": seed,
        "command": command.name(),
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "threads": opts.threads,
        "config": cfg,
    });
    out.write(
        "meta.json",
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&meta).expect("serializable")
        ),
    )?;

    let message = match command {
        Command::Solve => run_solve(&cfg, &mut out)?,
        Command::Stability => run_family(&cfg, opts.threads, &mut out)?,
        Command::Convergence => run_sequence(&cfg, opts.threads, &mut out)?,
        Command::Spacecheck => {
            run_spacecheck(&cfg.spacecheck_block(), seed, opts.threads, &mut out)?
        }
    };
    Ok(RunSummary {
        command,
        files: out.files,
        message,
    })
}

fn trajectory_csv(out: &Output, result: &SolveResult) -> Result<String, RunError> {
    let u = &result.trajectory;
    let g = u.grid();
    let mut csv = out.csv(&["level", "t", "l2_norm", "energy", "iters", "grad_norm"]);
    for k in 0..u.levels() {
        let l2 = l2_norm_sq(u, Region::Slice(k))?.sqrt();
        let (energy, iters, grad) = match k.checked_sub(1).and_then(|s| result.steps.get(s)) {
            Some(s) => (s.energy, s.iterations, s.grad_norm),
            None => (f64::NAN, 0, f64::NAN),
        };
        csv.row(&[
            k.to_string(),
            num(g.t(k)),
            num(l2),
            num(energy),
            iters.to_string(),
            num(grad),
        ]);
    }
    Ok(csv.text)
}

fn diagnostics_csv(out: &Output, d: &EnergyReport, interp: Option<(f64, f64)>) -> String {
    let mut csv = out.csv(&["quantity", "value"]);
    let mut put = |k: &str, v: f64| csv.row(&[k.to_string(), num(v)]);
    put("sup_l2_sq", d.sup_l2_sq);
    put("grad_modular", d.grad_modular);
    put("ut_l2_sq", d.ut_l2_sq);
    put("sup_grad_modular_s", d.sup_grad_modular_s);
    for (delta, v) in &d.higher_integrability {
        put(&format!("higher_integrability[delta={}]", num(*delta)), *v);
    }
    put("u0_grad_modular", d.u0_grad_modular);
    put("data_norm_sq", d.data_norm_sq);
    put("weak_bound_ratio", d.weak_bound_ratio);
    if let Some((value, bound_input)) = interp {
        put("interpolation_modular[eps=0.25]", value);
        put("interpolation_bound_input", bound_input);
    }
    csv.text
}

fn run_solve(cfg: &ExperimentConfig, out: &mut Output) -> Result<String, RunError> {
    let spec = cfg.base_spec(Command::Solve)?;
    let result = match solve(&spec) {
        Ok(r) => r,
        Err(Error::NonConvergence {
            level,
            iterations,
            grad_norm,
            partial,
        }) => {
            if let Some(p) = &partial {
                let text = trajectory_csv(out, p)?;
                out.write("trajectory.csv", &text)?;
            }
            return Err(Error::NonConvergence {
                level,
                iterations,
                grad_norm,
                partial,
            }
            .into());
        }
        Err(e) => return Err(e.into()),
    };
    let text = trajectory_csv(out, &result)?;
    out.write("trajectory.csv", &text)?;
    let interp = interpolation_check(&result, &spec, 0.25)?;
    let text = diagnostics_csv(
        out,
        &result.diagnostics,
        Some((interp.value, interp.bound_input)),
    );
    out.write("diagnostics.csv", &text)?;
    let last = result.trajectory.levels() - 1;
    Ok(format!(
        "solve: {} levels, ||u(T)||_2 = {}",
        result.trajectory.levels(),
        num(l2_norm_sq(&result.trajectory, Region::Slice(last))?.sqrt())
    ))
}

fn family_row(r: &StabilityReport, scale: f64) -> Vec<String> {
    vec![
        r.member.to_string(),
        num(scale),
        r.r.variant.name().to_string(),
        num(r.r.init_sq),
        num(r.r.source_sq),
        num(r.r.exp_term),
        num(r.r.sigma_term),
        num(r.r.total),
        num(r.lhs_l2),
        num(r.lhs_grad),
        num(r.lhs_grad_sym),
        num(r.lhs_total()),
        num(r.dt_factor),
        num(r.bound),
        opt_num(r.ratio),
        r.exact_match().to_string(),
        num(r.proximity.proximity_lambda),
        r.proximity.lower_ok.to_string(),
        r.proximity.upper_ok.to_string(),
        num(r.proximity.worst_margin),
    ]
}

const FAMILY_COLUMNS: [&str; 20] = [
    "member",
    "scale",
    "variant",
    "init_sq",
    "source_sq",
    "exp_term",
    "sigma_term",
    "r_total",
    "lhs_l2",
    "lhs_grad",
    "lhs_grad_sym",
    "lhs_total",
    "dt_factor",
    "bound",
    "ratio",
    "exact_match",
    "proximity_lambda",
    "proximity_lower_ok",
    "proximity_upper_ok",
    "worst_margin",
];

fn run_family(
    cfg: &ExperimentConfig,
    threads: usize,
    out: &mut Output,
) -> Result<String, RunError> {
    let (base, members, variant, lambda) = cfg.family_specs()?;
    let scales = &cfg.family.as_ref().expect("family block checked").scales;
    let outcome = run_stability_family(
        &base,
        &members,
        variant,
        FamilyOptions {
            proximity_lambda: lambda,
            threads,
        },
    )?;

    let mut csv = out.csv(&FAMILY_COLUMNS);
    for (r, &s) in outcome.reports.iter().zip(scales) {
        csv.row(&family_row(r, s));
    }
    out.write("stability.csv", &csv.text)?;

    let s = &outcome.summary;
    let tail = outcome.reports.len().saturating_sub(2);
    let mut csv = out.csv(&[
        "variant",
        "members",
        "c_fit",
        "c_fit_two_smallest",
        "monotone",
        "strictly_decreasing",
        "loglog_slope",
        "all_exact",
    ]);
    csv.row(&[
        variant.name().to_string(),
        outcome.reports.len().to_string(),
        opt_num(s.c_fit),
        opt_num(c_fit(&outcome.reports[tail..])),
        s.monotone.to_string(),
        s.strictly_decreasing.to_string(),
        opt_num(s.loglog_slope),
        s.all_exact.to_string(),
    ]);
    out.write("summary.csv", &csv.text)?;

    let text = trajectory_csv(out, &outcome.base)?;
    out.write("base_trajectory.csv", &text)?;
    let text = diagnostics_csv(out, &outcome.base.diagnostics, None);
    out.write("base_diagnostics.csv", &text)?;
    Ok(format!(
        "stability ({}): {} members, C_fit = {}, monotone = {}",
        variant.name(),
        outcome.reports.len(),
        opt_num(s.c_fit),
        s.monotone
    ))
}

fn run_sequence(
    cfg: &ExperimentConfig,
    threads: usize,
    out: &mut Output,
) -> Result<String, RunError> {
    let (sequence, limit) = cfg.sequence_specs()?;
    let ks = &cfg.sequence.as_ref().expect("sequence block checked").ks;
    let report = run_convergence(&sequence, &limit, threads)?;
    let mut csv = out.csv(&[
        "member",
        "k",
        "exponent_gap",
        "lhs_l2",
        "lhs_grad",
        "w_distance",
        "cauchy_l2",
        "cauchy_grad",
    ]);
    for (row, &k) in report.rows.iter().zip(ks) {
        csv.row(&[
            row.member.to_string(),
            num(k),
            num(row.exponent_gap),
            num(row.lhs_l2),
            num(row.lhs_grad),
            num(row.w_distance),
            opt_num(row.cauchy_l2),
            opt_num(row.cauchy_grad),
        ]);
    }
    out.write("convergence.csv", &csv.text)?;
    let mut csv = out.csv(&["members", "distances_decreasing", "cauchy_decreasing"]);
    csv.row(&[
        report.rows.len().to_string(),
        report.distances_decreasing.to_string(),
        report.cauchy_decreasing.to_string(),
    ]);
    out.write("summary.csv", &csv.text)?;
    Ok(format!(
        "convergence: {} members, distances decreasing = {}, cauchy decreasing = {}",
        report.rows.len(),
        report.distances_decreasing,
        report.cauchy_decreasing
    ))
}

struct Check {
    case: String,
    check: &'static str,
    lhs: f64,
    rhs: f64,
    ok: bool,
}

impl Check {
    fn new(case: impl ToString, check: &'static str, lhs: f64, rhs: f64, ok: bool) -> Self {
        Self {
            case: case.to_string(),
            check,
            lhs,
            rhs,
            ok: ok && lhs.is_finite() && rhs.is_finite(),
        }
    }

    fn failed(case: impl ToString, check: &'static str) -> Self {
        Self::new(case, check, f64::NAN, f64::NAN, false)
    }
}

/// Smooth field with random modes, not tied to the boundary.
fn random_field(grid: &Grid, rng: &mut ChaCha8Rng) -> Result<GridFunction, Error> {
    use std::f64::consts::PI;
    let c: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
    let k: Vec<f64> = (0..4).map(|_| rng.random_range(0.5..3.0)).collect();
    GridFunction::spatial_fn(grid, |x, y| {
        c[0] + c[1] * (k[0] * PI * x).sin()
            + c[2] * (k[1] * PI * y).cos()
            + c[3] * (k[2] * x * y).sin()
            + c[4] * (k[3] * (x - y)).cos()
    })
}

fn space_case(grid: &Grid, seed: u64, case: usize) -> Result<Vec<Check>, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(case as u64 + 1);
    let (a, b) = (rng.random_range(1.3..3.0), rng.random_range(0.0..1.5));
    let p = ExponentField::from_fn(grid, |x, y, _| a + b * x * y)?;
    let f = random_field(grid, &mut rng)?;
    let g = random_field(grid, &mut rng)?;
    let grad = discrete_gradient(&f, 0)?;
    let slice = Region::Slice(0);
    let mut checks = Vec::with_capacity(7);

    for (name, bounds) in [
        (
            "norm_modular_nodes",
            check_norm_modular_bounds(&f, &p, slice)?,
        ),
        (
            "norm_modular_gradient",
            check_norm_modular_bounds(&grad, &p, slice)?,
        ),
    ] {
        checks.push(Check::new(case, name, bounds.lower, bounds.norm, bounds.ok));
        checks.push(Check::new(case, name, bounds.norm, bounds.upper, bounds.ok));
    }
    let h = holder_pairing(&f, &g, &p, slice)?;
    checks.push(Check::new(case, "holder", h.lhs, h.rhs, h.ok));

    match luxemburg_norm(&f, &p, slice) {
        Ok(norm) => {
            let unit = (quadrature_points(&f, &p, slice)?.modular_scaled(norm) - 1.0).abs();
            checks.push(Check::new(case, "unit_ball", unit, 1e-8, unit <= 1e-8));
            match luxemburg_scan(&f, &p, slice) {
                Ok(scan) => {
                    let rel = (scan - norm).abs() / scan;
                    checks.push(Check::new(case, "scan_agreement", rel, 1e-6, rel <= 1e-6));
                }
                Err(_) => checks.push(Check::failed(case, "scan_agreement")),
            }
        }
        Err(_) => {
            checks.push(Check::failed(case, "unit_ball"));
            checks.push(Check::failed(case, "scan_agreement"));
        }
    }
    Ok(checks)
}

const BUCKETS: usize = 5;
const Q_RANGE: (f64, f64) = (1.2, 6.0);

/// Random monotonicity samples; one nonnegativity and one fitted-constant row
/// per exponent bucket plus the exact `q = 2` identity.
fn monotonicity_checks(seed: u64, pairs: usize) -> Result<Vec<Check>, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut min_lhs = [f64::INFINITY; BUCKETS];
    let mut constant = [f64::INFINITY; BUCKETS];
    let mut q2_dev = 0.0f64;
    for _ in 0..pairs {
        let xi = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let zeta = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let q = rng.random_range(Q_RANGE.0..Q_RANGE.1);
        let b = (((q - Q_RANGE.0) / (Q_RANGE.1 - Q_RANGE.0)) * BUCKETS as f64) as usize;
        let b = b.min(BUCKETS - 1);
        let m = monotonicity_gap(xi, zeta, q)?;
        min_lhs[b] = min_lhs[b].min(m.lhs);
        if m.lower_form > 0.0 {
            constant[b] = constant[b].min(m.lhs / m.lower_form);
        }
        let two = monotonicity_gap(xi, zeta, 2.0)?;
        let d2 = (xi[0] - zeta[0]).powi(2) + (xi[1] - zeta[1]).powi(2);
        q2_dev = q2_dev.max((two.lhs - d2).abs() / (1.0 + d2));
    }
    let width = (Q_RANGE.1 - Q_RANGE.0) / BUCKETS as f64;
    let mut checks = Vec::new();
    for b in 0..BUCKETS {
        let lo = Q_RANGE.0 + b as f64 * width;
        let label = format!("q[{:.2};{:.2})", lo, lo + width);
        checks.push(Check::new(
            &label,
            "monotonicity_nonnegative",
            min_lhs[b],
            0.0,
            min_lhs[b] >= 0.0,
        ));
        checks.push(Check::new(
            &label,
            "monotonicity_constant",
            constant[b],
            0.0,
            constant[b] > 0.0,
        ));
    }
    checks.push(Check::new(
        "q=2",
        "monotonicity_identity",
        q2_dev,
        1e-12,
        q2_dev <= 1e-12,
    ));
    Ok(checks)
}

fn run_spacecheck(
    block: &SpacecheckBlock,
    seed: u64,
    threads: usize,
    out: &mut Output,
) -> Result<String, RunError> {
    if block.cases == 0 {
        return Err(Error::RangeViolation("spacecheck: cases must be positive".into()).into());
    }
    let grid = Grid::unit_square(block.n, 2, 1.0)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| {
            Error::RangeViolation(format!("cannot build a pool of {threads} threads: {e}"))
        })?;
    let per_case: Vec<Vec<Check>> = pool.install(|| {
        (0..block.cases)
            .into_par_iter()
            .map(|c| space_case(&grid, seed, c))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut checks: Vec<Check> = per_case.into_iter().flatten().collect();
    checks.extend(monotonicity_checks(seed, block.pairs)?);

    let mut csv = out.csv(&["case", "check", "lhs", "rhs", "ok"]);
    for c in &checks {
        csv.row(&[
            c.case.clone(),
            c.check.to_string(),
            num(c.lhs),
            num(c.rhs),
            c.ok.to_string(),
        ]);
    }
    out.write("spacecheck.csv", &csv.text)?;
    let failed = checks.iter().filter(|c| !c.ok).count();
    if failed > 0 {
        return Err(RunError::Inequality {
            failed,
            total: checks.len(),
        });
    }
    Ok(format!("spacecheck: {} checks passed", checks.len()))
}

/// Writes the error record next to the other artifacts, when possible.
pub fn write_error_record(out: &Path, record: &str) {
    if fs::create_dir_all(out).is_ok() {
        let _ = fs::write(out.join("error.json"), format!("{record}\n"));
    }
}
