//! `stfem`: convergence studies, inf-sup tables and single solves.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spacetime_fem::study::{
    coefficients_csv, converge, converge_csv, converge_summary, infsup_csv, infsup_table, report_text, solve_single,
    ProblemKind,
};
use spacetime_fem::systems::{Method, SolverKind};

use config::{parse_config, parse_levels, Overrides};

#[derive(Parser)]
#[command(name = "stfem", version, about = "Space-time FEM for the 1D heat and convection-diffusion equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Errors and rate fits over a sequence of levels.
    Converge(CommonArgs),
    /// Inf-sup and quasi-optimality constants per level.
    Infsup(CommonArgs),
    /// One solve; writes coefficients and an error report.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Temporal (= spatial) element count.
        #[arg(long)]
        level: Option<usize>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// `key = value` config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// new_mixed, andreev or steinbach.
    #[arg(long)]
    method: Option<Method>,
    /// smooth or singular.
    #[arg(long)]
    problem: Option<ProblemKind>,
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated element counts, e.g. 8,16,32.
    #[arg(long, value_parser = parse_levels)]
    levels: Option<std::vec::Vec<usize>>,
    #[arg(long)]
    ref_factor: Option<usize>,
    /// direct or schur_cg.
    #[arg(long)]
    solver: Option<SolverKind>,
    /// Output CSV path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn overrides(&self, level: Option<usize>) -> Result<Overrides, String> {
        let file = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| format!("reading {}: {e}", p.display()))?;
                parse_config(&text).map_err(|e| format!("{}: {e}", p.display()))?
            }
            None => Overrides::default(),
        };
        Ok(file.merged(Overrides {
            method: self.method,
            problem: self.problem,
            beta: self.beta,
            levels: self.levels.clone(),
            ref_factor: self.ref_factor,
            solver: self.solver,
            out: self.out.clone(),
            level,
        }))
    }
}

fn emit(out: Option<&Path>, csv: &str) -> Result<(), String> {
    match out {
        Some(p) => fs::write(p, csv).map_err(|e| format!("writing {}: {e}", p.display())),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Converge(args) => {
            let o = args.overrides(None)?;
            let config = o.to_config()?;
            let rows = converge(&config).map_err(|e| e.to_string())?;
            emit(o.out.as_deref(), &converge_csv(&rows))?;
            eprint!("{}", converge_summary(&config, &rows));
        }
        Command::Infsup(args) => {
            let o = args.overrides(None)?;
            let config = o.to_config()?;
            let rows = infsup_table(&config).map_err(|e| e.to_string())?;
            emit(o.out.as_deref(), &infsup_csv(&rows))?;
        }
        Command::Solve { common, level } => {
            let o = common.overrides(level)?;
            let config = o.to_config()?;
            let n = o.level.unwrap_or(config.levels[0]);
            let dump = solve_single(&config, n).map_err(|e| e.to_string())?;
            let report = report_text(&config, &dump);
            emit(o.out.as_deref(), &coefficients_csv(&dump))?;
            match &o.out {
                Some(p) => {
                    let rp = p.with_extension("report.txt");
                    fs::write(&rp, &report).map_err(|e| format!("writing {}: {e}", rp.display()))?;
                    eprint!("{report}");
                }
                None => eprint!("{report}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
