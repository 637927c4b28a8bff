//! Convergence studies, inf-sup tables and single solves, with CSV output.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::assembly::ProblemDef;
use crate::error::{invalid, Error, Result};
use crate::norms::{best_approx_xnorm, error_report, ErrorReport, DEFAULT_REF_FACTOR};
use crate::stability::{
    aa_norm_estimate, loglog_slope, quasiopt_constants, spatial_infsup, spacetime_infsup, steinbach_degradation,
    temporal_infsup, InfSupMode, FULL_MODE_MAX_DIM,
};
use crate::systems::{run_method, standard_spaces, Method, Run, SolverKind};

/// Spatial element count used for the zigzag columns of the inf-sup table.
pub const DEGRADATION_NX: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Smooth,
    Singular,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Smooth => "smooth",
            ProblemKind::Singular => "singular",
        }
    }

    pub fn build(self, beta: f64) -> ProblemDef {
        match self {
            ProblemKind::Smooth => ProblemDef::smooth(beta),
            ProblemKind::Singular => ProblemDef::singular(beta),
        }
    }
}

impl FromStr for ProblemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth" => Ok(ProblemKind::Smooth),
            "singular" => Ok(ProblemKind::Singular),
            _ => invalid(format!("unknown problem '{s}' (expected smooth or singular)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub problem: ProblemKind,
    pub beta: f64,
    /// Temporal element counts; the spatial count equals the temporal one.
    pub levels: Vec<usize>,
    pub ref_factor: usize,
    pub solver: SolverKind,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::NewMixed,
            problem: ProblemKind::Smooth,
            beta: 0.0,
            levels: vec![8, 16, 32, 64, 128],
            ref_factor: DEFAULT_REF_FACTOR,
            solver: SolverKind::Direct,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return invalid("beta must be finite and non-negative");
        }
        if self.levels.is_empty() {
            return invalid("at least one level is required");
        }
        if self.levels.iter().any(|&n| n < 2) {
            return invalid("every level needs N >= 2");
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("levels must be strictly increasing");
        }
        if self.ref_factor < 2 {
            return invalid("ref_factor must be at least 2");
        }
        Ok(())
    }

    pub fn problem_def(&self) -> ProblemDef {
        self.problem.build(self.beta)
    }
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRow {
    pub n: usize,
    pub dim_x: usize,
    pub err_x: f64,
    pub err_y: f64,
    pub err_0: f64,
    pub err_t: f64,
    pub err_aux_y: Option<f64>,
    pub best_x: f64,
    pub quasiopt_ratio: f64,
    pub iterations: usize,
    pub wall_time: f64,
}

fn at_level<T>(n: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("level N={n}: {m}")),
        Error::SolverFailure(m) => Error::SolverFailure(format!("level N={n}: {m}")),
        Error::Internal(m) => Error::Internal(format!("level N={n}: {m}")),
    })
}

/// Solve and measure one level.
pub fn converge_level(config: &RunConfig, n: usize) -> Result<LevelRow> {
    let start = Instant::now();
    let problem = config.problem_def();
    let run = at_level(n, run_method(config.method, &problem, n, config.solver))?;
    let report = at_level(n, error_report(&problem, &run.solution, &run.x, &run.y, config.ref_factor))?;
    let (_, best_x) = at_level(n, best_approx_xnorm(&problem, &run.x, config.ref_factor))?;
    Ok(LevelRow {
        n,
        dim_x: report.dim_x,
        err_x: report.err_x,
        err_y: report.err_y,
        err_0: report.err_0,
        err_t: report.err_t,
        err_aux_y: report.err_aux_y,
        best_x,
        quasiopt_ratio: report.err_x / best_x,
        iterations: run.solution.diagnostics.iterations,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// All levels, computed in parallel and returned in level order.
pub fn converge(config: &RunConfig) -> Result<Vec<LevelRow>> {
    config.validate()?;
    config.levels.par_iter().map(|&n| converge_level(config, n)).collect()
}

/// Least-squares slopes of `log err` against `log dim_X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFits {
    pub err_x: f64,
    pub err_y: f64,
    pub err_t: f64,
    pub err_0: f64,
    pub err_aux_y: Option<f64>,
}

pub fn rate_fits(rows: &[LevelRow]) -> Result<RateFits> {
    if rows.len() < 2 {
        return invalid("rate fits need at least two levels");
    }
    let dims: Vec<f64> = rows.iter().map(|r| r.dim_x as f64).collect();
    let fit = |f: &dyn Fn(&LevelRow) -> f64| loglog_slope(&dims, &rows.iter().map(f).collect::<Vec<_>>());
    let aux = if rows.iter().all(|r| r.err_aux_y.is_some()) {
        Some(fit(&|r| r.err_aux_y.unwrap_or(f64::NAN)))
    } else {
        None
    };
    Ok(RateFits {
        err_x: fit(&|r| r.err_x),
        err_y: fit(&|r| r.err_y),
        err_t: fit(&|r| r.err_t),
        err_0: fit(&|r| r.err_0),
        err_aux_y: aux,
    })
}

/// 12 significant digits, plain decimal point.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.11e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

pub const CONVERGE_HEADER: &str = "N,dim_X,err_X,err_Y,err_0,err_T,err_aux_Y,best_X,quasiopt_ratio,iterations,wall_time_s";

pub fn converge_csv(rows: &[LevelRow]) -> String {
    let mut s = String::from(CONVERGE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{:.3}",
            r.n,
            r.dim_x,
            fmt_num(r.err_x),
            fmt_num(r.err_y),
            fmt_num(r.err_0),
            fmt_num(r.err_t),
            fmt_opt(r.err_aux_y),
            fmt_num(r.best_x),
            fmt_num(r.quasiopt_ratio),
            r.iterations,
            r.wall_time
        );
    }
    s
}

pub fn converge_summary(config: &RunConfig, rows: &[LevelRow]) -> String {
    let mut s = format!(
        "method={} problem={} beta={} solver={} ref_factor={}\n",
        config.method,
        config.problem.name(),
        config.beta,
        config.solver,
        config.ref_factor
    );
    match rate_fits(rows) {
        Ok(f) => {
            let _ = writeln!(
                s,
                "rates vs dim_X: err_X {:.4}  err_Y {:.4}  err_T {:.4}  err_0 {:.4}{}",
                f.err_x,
                f.err_y,
                f.err_t,
                f.err_0,
                f.err_aux_y.map(|v| format!("  err_aux_Y {v:.4}")).unwrap_or_default()
            );
        }
        Err(_) => s.push_str("rates: need at least two levels\n"),
    }
    let worst = rows.iter().map(|r| r.quasiopt_ratio).fold(0.0, f64::max);
    let _ = writeln!(s, "max quasi-optimality ratio {worst:.4}");
    s
}

/// One row of an inf-sup table.
#[derive(Debug, Clone, PartialEq)]
pub struct InfSupRow {
    pub n: usize,
    pub spatial: f64,
    pub temporal: Option<f64>,
    pub factorized: Option<f64>,
    pub full: Option<f64>,
    pub steinbach_gamma_full: Option<f64>,
    pub zigzag: Option<f64>,
    pub aa_norm: f64,
    pub c_delta: Option<f64>,
}

pub fn infsup_level(config: &RunConfig, n: usize) -> Result<InfSupRow> {
    let (x, y) = at_level(n, standard_spaces(config.method, n, n, 1.0))?;
    let spatial = at_level(n, spatial_infsup(x.spatial()))?.gamma;
    let aa_norm = at_level(n, aa_norm_estimate(&y, config.beta))?;
    let mut row = InfSupRow {
        n,
        spatial,
        temporal: None,
        factorized: None,
        full: None,
        steinbach_gamma_full: None,
        zigzag: None,
        aa_norm,
        c_delta: None,
    };
    if config.method == Method::Steinbach {
        if n % 2 == 0 {
            let (_, x0) = at_level(n, standard_spaces(Method::Steinbach, n, DEGRADATION_NX, 1.0))?;
            let d = at_level(n, steinbach_degradation(&x0))?;
            row.steinbach_gamma_full = Some(d.gamma_full);
            row.zigzag = Some(d.zigzag_value);
        }
        return Ok(row);
    }
    let temporal = at_level(n, temporal_infsup(x.temporal(), y.temporal()))?.gamma;
    let factorized = at_level(n, spacetime_infsup(&x, &y, InfSupMode::Factorized, config.ref_factor))?.gamma;
    row.temporal = Some(temporal);
    row.factorized = Some(factorized);
    if x.dim() - x.spatial().dim() <= FULL_MODE_MAX_DIM {
        row.full = Some(at_level(n, spacetime_infsup(&x, &y, InfSupMode::Full, config.ref_factor))?.gamma);
    }
    row.c_delta = Some(at_level(n, quasiopt_constants(factorized.min(1.0), aa_norm))?.c);
    Ok(row)
}

pub fn infsup_table(config: &RunConfig) -> Result<Vec<InfSupRow>> {
    config.validate()?;
    config.levels.par_iter().map(|&n| infsup_level(config, n)).collect()
}

pub const INFSUP_HEADER: &str =
    "N,gamma_spatial,gamma_temporal,gamma_factorized,gamma_full,steinbach_gamma_full,zigzag_value,aa_norm,C_delta";

pub fn infsup_csv(rows: &[InfSupRow]) -> String {
    let mut s = String::from(INFSUP_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.n,
            fmt_num(r.spatial),
            fmt_opt(r.temporal),
            fmt_opt(r.factorized),
            fmt_opt(r.full),
            fmt_opt(r.steinbach_gamma_full),
            fmt_opt(r.zigzag),
            fmt_num(r.aa_norm),
            fmt_opt(r.c_delta)
        );
    }
    s
}

/// A single solve with its error report.
#[derive(Debug, Clone)]
pub struct SolveDump {
    pub n: usize,
    pub run: Run,
    pub report: ErrorReport,
}

pub fn solve_single(config: &RunConfig, n: usize) -> Result<SolveDump> {
    if n < 2 {
        return invalid("level needs N >= 2");
    }
    let problem = config.problem_def();
    let run = at_level(n, run_method(config.method, &problem, n, config.solver))?;
    let report = at_level(n, error_report(&problem, &run.solution, &run.x, &run.y, config.ref_factor))?;
    Ok(SolveDump { n, run, report })
}

/// Coefficients as `block,index,t,x,value` rows (`t`, `x` the node
/// coordinates; blank `t` for P0 temporal factors).
pub fn coefficients_csv(dump: &SolveDump) -> String {
    let mut s = String::from("block,index,t,x,value\n");
    let sol = &dump.run.solution;
    let mut block = |name: &str, space: &crate::assembly::SpaceTimeSpace, c: &[f64]| {
        let tn = space.temporal().dof_nodes();
        let xn = space.spatial().dof_nodes();
        for (i, v) in c.iter().enumerate() {
            let (kt, kx) = space.split_index(i);
            let t = if space.temporal().family() == crate::fe1d::Family::P1Continuous {
                fmt_num(tn[kt])
            } else {
                String::new()
            };
            let _ = writeln!(s, "{name},{i},{t},{},{}", fmt_num(xn[kx]), fmt_num(*v));
        }
    };
    block("u", &dump.run.x, &sol.u_coeffs);
    if let Some(aux) = &sol.aux_coeffs {
        block("aux", &dump.run.y, aux);
    }
    s
}

pub fn report_text(config: &RunConfig, dump: &SolveDump) -> String {
    let r = &dump.report;
    let d = &dump.run.solution.diagnostics;
    let mut s = format!(
        "method={} problem={} beta={} solver={} N={}\n",
        config.method,
        config.problem.name(),
        config.beta,
        config.solver,
        dump.n
    );
    let _ = writeln!(s, "dim_X {}", r.dim_x);
    for (k, v) in [("err_X", r.err_x), ("err_Y", r.err_y), ("err_dual", r.err_dual), ("err_T", r.err_t), ("err_0", r.err_0)] {
        let _ = writeln!(s, "{k} {}", fmt_num(v));
    }
    if let Some(v) = r.err_aux_y {
        let _ = writeln!(s, "err_aux_Y {}", fmt_num(v));
    }
    let _ = writeln!(s, "solver_residual {:.3e}", d.residual);
    let _ = writeln!(s, "iterations {}", d.iterations);
    if let Some(m) = d.min_ritz {
        let _ = writeln!(s, "min_ritz {m:.6e}");
    }
    s
}
